import json

import pytest

from liftmapdetect.cli import main, parse_mask_flag


def tiny_config(tmp_path, out_name="run", **overrides):
    config = {
        "out": str(tmp_path / out_name),
        "in_domain": {"kind": "synthetic", "family": "stripes", "side": 8,
                      "count": 16, "seed": 0},
        "eval_in": {"kind": "synthetic", "family": "stripes", "side": 8,
                    "count": 4, "seed": 1001},
        "eval_out": {"kind": "synthetic", "family": "checker_texture",
                     "side": 8, "count": 4, "seed": 1002},
        "train": {"epochs": 4, "batch_size": 8, "learning_rate": 1e-3,
                  "timesteps": 10, "beta_start": 5e-3, "beta_end": 0.3},
        "detector": {"attempts": 2, "mask_variant": "alternating_checkerboard",
                     "mask_grid": 4, "metric": "mse",
                     "lift_mode": "mask_inpaint", "lift_step": None},
        "grid_k": 2,
    }
    config.update(overrides)
    path = tmp_path / f"{out_name}.json"
    path.write_text(json.dumps(config))
    return path, tmp_path / out_name


def write_scores_csv(path, scores, label):
    lines = ["image_index,label,score,d_1"]
    for i, s in enumerate(scores):
        lines.append(f"{i},{label},{s},{s}")
    path.write_text("\n".join(lines) + "\n")


class TestMaskFlag:
    def test_variant_only(self):
        assert parse_mask_flag("center") == {"variant": "center"}

    def test_variant_with_grid(self):
        got = parse_mask_flag("alternating_checkerboard:4")
        assert got == {"variant": "alternating_checkerboard", "grid_size": 4}


class TestTrain:
    def test_writes_checkpoint_and_loss_curve(self, tmp_path, capsys):
        cfg, out = tiny_config(tmp_path)
        assert main(["train", "--config", str(cfg)]) == 0
        assert (out / "checkpoint.bin").exists()
        assert (out / "run.json").exists()
        loss_lines = (out / "loss.csv").read_text().splitlines()
        assert loss_lines[0] == "epoch,loss"
        assert len(loss_lines) == 5
        assert loss_lines[1].startswith("1,")
        assert "loss" in capsys.readouterr().out

    def test_zero_epochs_gives_initialized_checkpoint(self, tmp_path):
        cfg, out = tiny_config(tmp_path, train={
            "epochs": 0, "batch_size": 8, "learning_rate": 1e-3,
            "timesteps": 10, "beta_start": 5e-3, "beta_end": 0.3})
        assert main(["train", "--config", str(cfg)]) == 0
        assert (out / "loss.csv").read_text() == "epoch,loss\n"
        first = (out / "checkpoint.bin").read_bytes()
        assert main(["train", "--config", str(cfg)]) == 0
        assert (out / "checkpoint.bin").read_bytes() == first

    def test_bad_config_path_fails_cleanly(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "missing.json")]) == 1
        assert "error:" in capsys.readouterr().err


class TestEval:
    def test_perfect_separation(self, tmp_path, capsys):
        a = tmp_path / "in.csv"
        b = tmp_path / "out.csv"
        write_scores_csv(a, [0.1, 0.2], "in")
        write_scores_csv(b, [0.8, 0.9], "out")
        assert main(["eval", str(a), str(b), "--out", str(tmp_path / "e")]) == 0
        assert capsys.readouterr().out.strip() == "1.000"
        assert (tmp_path / "e" / "auc.txt").read_text() == "1.000\n"

    def test_hand_value(self, tmp_path, capsys):
        a = tmp_path / "in.csv"
        b = tmp_path / "out.csv"
        write_scores_csv(a, [0.1, 0.4], "in")
        write_scores_csv(b, [0.3, 0.5], "out")
        assert main(["eval", str(a), str(b), "--out", str(tmp_path / "e")]) == 0
        assert capsys.readouterr().out.strip() == "0.750"

    def test_complement_when_swapped(self, tmp_path, capsys):
        a = tmp_path / "in.csv"
        b = tmp_path / "out.csv"
        write_scores_csv(a, [0.1, 0.4], "in")
        write_scores_csv(b, [0.3, 0.5], "out")
        main(["eval", str(b), str(a), "--out", str(tmp_path / "e")])
        assert capsys.readouterr().out.strip() == "0.250"

    def test_malformed_csv_fails_cleanly(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("image_index,label,score,d_1\n0,in,not_a_number,1\n")
        ok = tmp_path / "ok.csv"
        write_scores_csv(ok, [0.5], "out")
        assert main(["eval", str(bad), str(ok), "--out", str(tmp_path / "e")]) == 1
        assert "line 2" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli")
    cfg, out = tiny_config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 0
    return tmp_path, cfg, out


class TestScore:
    def test_artifacts(self, trained, capsys):
        tmp_path, cfg, out = trained
        dest = tmp_path / "scored"
        assert main(["score", "--config", str(cfg), "--out", str(dest),
                     "--checkpoint", str(out / "checkpoint.bin")]) == 0
        in_lines = (dest / "scores_in.csv").read_text().splitlines()
        assert in_lines[0] == "image_index,label,score,d_1,d_2"
        assert len(in_lines) == 5
        assert in_lines[1].split(",")[1] == "in"
        out_lines = (dest / "scores_out.csv").read_text().splitlines()
        assert out_lines[1].split(",")[1] == "out"
        assert (dest / "recon_grid.pgm").read_bytes().startswith(b"P5\n")
        assert (dest / "run.json").exists()

    def test_attempts_flag_overrides(self, trained):
        tmp_path, cfg, out = trained
        dest = tmp_path / "scored_r1"
        assert main(["score", "--config", str(cfg), "--out", str(dest),
                     "--checkpoint", str(out / "checkpoint.bin"),
                     "--attempts", "1"]) == 0
        header = (dest / "scores_in.csv").read_text().splitlines()[0]
        assert header == "image_index,label,score,d_1"

    def test_rerun_from_echoed_config_is_byte_exact(self, trained):
        tmp_path, cfg, out = trained
        dest = tmp_path / "scored"
        first_in = (dest / "scores_in.csv").read_bytes()
        first_out = (dest / "scores_out.csv").read_bytes()
        # run.json embeds the checkpoint-relative out dir, so pass the
        # checkpoint again; everything else comes from the echo.
        assert main(["score", "--config", str(dest / "run.json"),
                     "--checkpoint", str(out / "checkpoint.bin")]) == 0
        assert (dest / "scores_in.csv").read_bytes() == first_in
        assert (dest / "scores_out.csv").read_bytes() == first_out

    def test_missing_checkpoint_fails_cleanly(self, trained, capsys):
        tmp_path, cfg, out = trained
        assert main(["score", "--config", str(cfg),
                     "--out", str(tmp_path / "nope"),
                     "--checkpoint", str(tmp_path / "missing.bin")]) == 1
        assert "error:" in capsys.readouterr().err


class TestAblate:
    def test_attempts_axis_rows(self, trained, capsys):
        tmp_path, cfg, out = trained
        dest = tmp_path / "abl_attempts"
        assert main(["ablate", "--config", str(cfg), "--axis", "attempts",
                     "--out", str(dest),
                     "--checkpoint", str(out / "checkpoint.bin")]) == 0
        lines = (dest / "ablation.csv").read_text().splitlines()
        assert lines[0] == "setting,auc"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2"]
        for ln in lines[1:]:
            assert 0.0 <= float(ln.split(",")[1]) <= 1.0

    def test_metric_axis_rows(self, trained):
        tmp_path, cfg, out = trained
        dest = tmp_path / "abl_metric"
        assert main(["ablate", "--config", str(cfg), "--axis", "metric",
                     "--out", str(dest),
                     "--checkpoint", str(out / "checkpoint.bin")]) == 0
        lines = (dest / "ablation.csv").read_text().splitlines()
        assert [ln.split(",")[0] for ln in lines[1:]] == \
            ["mse", "ssim_distance", "feature_distance"]

    def test_unknown_axis_fails_cleanly(self, trained, capsys):
        tmp_path, cfg, out = trained
        assert main(["ablate", "--config", str(cfg), "--axis", "optimizer",
                     "--out", str(tmp_path / "abl_bad"),
                     "--checkpoint", str(out / "checkpoint.bin")]) == 1
        assert "unknown ablation axis" in capsys.readouterr().err


class TestSample:
    def test_writes_sample_grid(self, trained):
        tmp_path, cfg, out = trained
        dest = tmp_path / "samples"
        assert main(["sample", "--config", str(cfg), "--out", str(dest),
                     "--checkpoint", str(out / "checkpoint.bin"),
                     "--count", "4"]) == 0
        data = (dest / "samples.pgm").read_bytes()
        assert data.startswith(b"P5\n")
