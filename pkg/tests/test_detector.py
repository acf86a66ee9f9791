import numpy as np
import pytest

from liftmapdetect.data import SyntheticSpec, generate
from liftmapdetect.detector import (DetectorConfig, ScoreReport,
                                    denoise_lift_score, median_score,
                                    ood_score, reports_from_csv,
                                    reports_to_csv, score_dataset)
from liftmapdetect.masks import MaskSpec


def tiny_config(**kw):
    kw.setdefault("attempts", 2)
    kw.setdefault("mask", MaskSpec(grid_size=4))
    kw.setdefault("metric", "mse")
    return DetectorConfig(**kw)


class TestMedian:
    def test_odd_length(self):
        assert median_score([0.3, 0.1, 0.5]) == 0.3

    def test_even_length_mean_of_middle_two(self):
        assert median_score([0.4, 0.1, 0.3, 0.2]) == 0.25

    def test_single(self):
        assert median_score([0.7]) == 0.7


class TestConfigValidation:
    def test_attempts_positive(self):
        with pytest.raises(ValueError, match="attempts"):
            DetectorConfig(attempts=0)

    def test_unknown_metric(self):
        with pytest.raises(ValueError, match="unknown metric"):
            DetectorConfig(metric="psnr")

    def test_non_median_aggregation(self):
        with pytest.raises(ValueError, match="median"):
            DetectorConfig(aggregation="mean")

    def test_unknown_lift_mode(self):
        with pytest.raises(ValueError, match="lift mode"):
            DetectorConfig(lift_mode="upsample")

    def test_zero_lift_step(self):
        with pytest.raises(ValueError, match="lift step"):
            DetectorConfig(lift_step=0)


class TestScoring:
    def test_report_shape_and_median(self, tiny_setup):
        cfg = tiny_config(attempts=3)
        rep = ood_score(tiny_setup["images"][0], tiny_setup["model"],
                        tiny_setup["schedule"], cfg, seed=0)
        assert len(rep.distances) == 3
        assert rep.score == median_score(rep.distances)
        assert all(d >= 0.0 for d in rep.distances)

    def test_deterministic(self, tiny_setup):
        cfg = tiny_config()
        a = ood_score(tiny_setup["images"][0], tiny_setup["model"],
                      tiny_setup["schedule"], cfg, seed=3)
        b = ood_score(tiny_setup["images"][0], tiny_setup["model"],
                      tiny_setup["schedule"], cfg, seed=3)
        assert a.distances == b.distances

    def test_seed_changes_distances(self, tiny_setup):
        cfg = tiny_config()
        a = ood_score(tiny_setup["images"][0], tiny_setup["model"],
                      tiny_setup["schedule"], cfg, seed=0)
        b = ood_score(tiny_setup["images"][0], tiny_setup["model"],
                      tiny_setup["schedule"], cfg, seed=1)
        assert a.distances != b.distances

    def test_solo_and_dataset_scoring_agree(self, tiny_setup):
        cfg = tiny_config()
        images = tiny_setup["images"][:3]
        reports, _ = score_dataset(images, ["unknown"] * 3, tiny_setup["model"],
                                   tiny_setup["schedule"], cfg, seed=0)
        solo = ood_score(images[1], tiny_setup["model"], tiny_setup["schedule"],
                         cfg, seed=0, image_index=1)
        np.testing.assert_allclose(reports[1].distances, solo.distances,
                                   rtol=1e-6)

    def test_worker_count_does_not_change_scores(self, tiny_setup):
        cfg = tiny_config()
        images = tiny_setup["images"][:6]
        labels = ["unknown"] * 6
        args = (images, labels, tiny_setup["model"], tiny_setup["schedule"], cfg)
        r1, _ = score_dataset(*args, seed=0, chunk_size=4, workers=1)
        r2, _ = score_dataset(*args, seed=0, chunk_size=4, workers=3)
        for a, b in zip(r1, r2):
            assert a.distances == b.distances

    def test_chunk_size_does_not_change_scores(self, tiny_setup):
        # The noise draws are identical per element; only BLAS kernel choice
        # varies with batch shape, so compare with a tight tolerance instead
        # of bitwise.
        cfg = tiny_config()
        images = tiny_setup["images"][:5]
        labels = ["unknown"] * 5
        args = (images, labels, tiny_setup["model"], tiny_setup["schedule"], cfg)
        r1, _ = score_dataset(*args, seed=0, chunk_size=256)
        r2, _ = score_dataset(*args, seed=0, chunk_size=3)
        for a, b in zip(r1, r2):
            np.testing.assert_allclose(a.distances, b.distances, rtol=1e-4,
                                       atol=1e-6)

    def test_auc_separates_in_from_out_domain(self, tiny_setup):
        other = generate(SyntheticSpec(family="checker_texture", side=8,
                                       count=4, seed=77)).images
        images = np.concatenate([tiny_setup["images"][:4], other])
        labels = ["in"] * 4 + ["out"] * 4
        _, auc = score_dataset(images, labels, tiny_setup["model"],
                               tiny_setup["schedule"], tiny_config(), seed=0)
        assert auc is not None
        assert auc > 0.5

    def test_auc_none_without_both_groups(self, tiny_setup):
        _, auc = score_dataset(tiny_setup["images"][:2], ["in", "in"],
                               tiny_setup["model"], tiny_setup["schedule"],
                               tiny_config(), seed=0)
        assert auc is None

    def test_multi_metric_request(self, tiny_setup):
        kinds = ["mse", "ssim_distance"]
        reports, auc = score_dataset(
            tiny_setup["images"][:2], ["in", "out"], tiny_setup["model"],
            tiny_setup["schedule"], tiny_config(), seed=0, metric_kinds=kinds)
        assert set(reports) == set(kinds)
        assert set(auc) == set(kinds)

    def test_denoise_lift_mode(self, tiny_setup):
        cfg = tiny_config(lift_mode="diffuse_denoise")
        rep = denoise_lift_score(tiny_setup["images"][0], tiny_setup["model"],
                                 tiny_setup["schedule"], cfg, seed=0)
        assert len(rep.distances) == 2
        inp = ood_score(tiny_setup["images"][0], tiny_setup["model"],
                        tiny_setup["schedule"], tiny_config(), seed=0)
        assert rep.distances != inp.distances

    def test_denoise_lift_score_requires_mode(self, tiny_setup):
        with pytest.raises(ValueError, match="diffuse_denoise"):
            denoise_lift_score(tiny_setup["images"][0], tiny_setup["model"],
                               tiny_setup["schedule"], tiny_config(), seed=0)

    def test_lift_step_out_of_schedule(self, tiny_setup):
        cfg = tiny_config(lift_mode="diffuse_denoise", lift_step=999)
        with pytest.raises(ValueError, match="lift step"):
            denoise_lift_score(tiny_setup["images"][0], tiny_setup["model"],
                               tiny_setup["schedule"], cfg, seed=0)

    def test_label_count_mismatch(self, tiny_setup):
        with pytest.raises(ValueError, match="one label per image"):
            score_dataset(tiny_setup["images"][:2], ["in"], tiny_setup["model"],
                          tiny_setup["schedule"], tiny_config(), seed=0)


class TestCsv:
    def make_reports(self):
        return [
            ScoreReport(image_index=0, label="in", distances=[0.125, 0.5],
                        score=0.3125),
            ScoreReport(image_index=1, label="out", distances=[1.5, 2.0],
                        score=1.75),
        ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "scores.csv"
        reports = self.make_reports()
        reports_to_csv(reports, path)
        back = reports_from_csv(path)
        assert len(back) == 2
        for a, b in zip(reports, back):
            assert a.image_index == b.image_index
            assert a.label == b.label
            assert a.score == pytest.approx(b.score, rel=1e-5)
            assert a.distances == pytest.approx(b.distances, rel=1e-5)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "scores.csv"
        reports_to_csv(self.make_reports(), path)
        first = path.read_text().splitlines()[0]
        assert first == "image_index,label,score,d_1,d_2"

    def test_write_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        reports_to_csv(self.make_reports(), a)
        reports_to_csv(self.make_reports(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar,baz\n1,in,0.5\n")
        with pytest.raises(ValueError, match="unexpected header"):
            reports_from_csv(path)

    def test_malformed_row_named_by_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("image_index,label,score,d_1\n0,in,0.5,0.5\n"
                        "x,out,oops,1\n")
        with pytest.raises(ValueError, match="line 3"):
            reports_from_csv(path)

    def test_inconsistent_attempt_counts_rejected(self, tmp_path):
        reports = self.make_reports()
        reports[1].distances = [1.0]
        with pytest.raises(ValueError, match="attempt count"):
            reports_to_csv(reports, tmp_path / "x.csv")
