"""Command-line entry point: train, score, eval, ablate, sample.

Configuration is a single JSON document; command-line flags override config
fields, which override built-in defaults. Every command echoes its fully
resolved configuration to run.json in the output directory, and rerunning
from that echo reproduces all CSV artifacts byte-exactly.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from .data import Dataset, SyntheticSpec, generate, read_idx, write_pgm_grid
from .detector import (DetectorConfig, median_score, reports_from_csv,
                       reports_to_csv, score_dataset)
from .masks import MaskSpec, get_mask
from .metrics import METRIC_NAMES, roc_auc
from .model import EpsilonModel, load_checkpoint, save_checkpoint
from .sampling import inpaint_batch, sample
from .schedule import make_linear_schedule
from .training import TrainConfig, train

DEFAULT_CONFIG = {
    "seed": 0,
    "out": "runs/default",
    "in_domain": {"kind": "synthetic", "family": "stripes", "side": 16,
                  "count": 200, "seed": 0},
    "eval_in": {"kind": "synthetic", "family": "stripes", "side": 16,
                "count": 200, "seed": 1001},
    "eval_out": {"kind": "synthetic", "family": "checker_texture", "side": 16,
                 "count": 200, "seed": 1002},
    "train": {"epochs": 150, "batch_size": 16, "learning_rate": 1e-3,
              "timesteps": 200, "beta_start": 5e-4, "beta_end": 0.1},
    "detector": {"attempts": 10, "mask_variant": "alternating_checkerboard",
                 "mask_grid": 8, "metric": "feature_distance",
                 "lift_mode": "mask_inpaint", "lift_step": None},
    "grid_k": 8,
    "workers": 1,
}

MASK_ABLATION = [
    ("alternating_checkerboard", 4),
    ("alternating_checkerboard", 8),
    ("alternating_checkerboard", 16),
    ("fixed_checkerboard", 8),
    ("center", 0),
    ("random_patch", 8),
]


class CliError(Exception):
    pass


def load_config(path=None):
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        for key, value in user.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key].update(value)
            else:
                config[key] = value
    return config


def parse_mask_flag(text):
    variant, _, grid = text.partition(":")
    spec_kwargs = {"variant": variant}
    if grid:
        spec_kwargs["grid_size"] = int(grid)
    return spec_kwargs


def resolve_source(source):
    if source is None:
        raise CliError("data source missing from config")
    kind = source.get("kind", "synthetic")
    if kind == "idx":
        return read_idx(source["path"])
    if kind == "synthetic":
        kwargs = {k: v for k, v in source.items() if k != "kind"}
        if "radius_range" in kwargs:
            kwargs["radius_range"] = tuple(kwargs["radius_range"])
        return generate(SyntheticSpec(**kwargs))
    raise CliError(f"unknown source kind {kind!r}")


def detector_config(config):
    det = config["detector"]
    mask = MaskSpec(variant=det["mask_variant"], grid_size=det["mask_grid"] or 8)
    return DetectorConfig(attempts=det["attempts"], mask=mask, metric=det["metric"],
                          lift_mode=det["lift_mode"], lift_step=det["lift_step"])


def train_config(config):
    t = config["train"]
    return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"],
                       learning_rate=t["learning_rate"], timesteps=t["timesteps"],
                       beta_start=t["beta_start"], beta_end=t["beta_end"],
                       seed=config["seed"])


def _prepare_out(config):
    out = Path(config["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "run.json", "w") as fh:
            json.dump(config, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise CliError(f"cannot write to output directory {out}: {exc}") from exc
    return out


def _write_loss_csv(path, losses):
    with open(path, "w", newline="\n") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(losses, start=1):
            fh.write(f"{i},{loss:.6g}\n")


def cmd_train(config):
    out = _prepare_out(config)
    dataset = resolve_source(config["in_domain"])
    tcfg = train_config(config)
    model = EpsilonModel(channels=dataset.images.shape[1], seed=config["seed"])
    schedule = make_linear_schedule(tcfg.timesteps, tcfg.beta_start, tcfg.beta_end)
    losses = train(model, dataset.images, tcfg, schedule)
    save_checkpoint(out / "checkpoint.bin", model, tcfg.timesteps,
                    tcfg.beta_start, tcfg.beta_end)
    _write_loss_csv(out / "loss.csv", losses)
    if losses:
        print(f"trained {tcfg.epochs} epochs; loss {losses[0]:.4g} -> {losses[-1]:.4g}")
    else:
        print("epochs=0: wrote checkpoint of initialized weights")
    return 0


def _load_model(config, checkpoint):
    path = checkpoint or Path(config["out"]) / "checkpoint.bin"
    model, meta = load_checkpoint(path)
    schedule = make_linear_schedule(meta["timesteps"], meta["beta_start"],
                                    meta["beta_end"])
    return model, schedule


def _check_shape(model, images, what):
    if images.shape[1] != model.channels:
        raise CliError(f"{what}: data has {images.shape[1]} channels but the "
                       f"checkpoint expects {model.channels}")


def _render_grid(out_path, images, model, schedule, config, dcfg, k):
    """(original, masked, inpainted) triplet rows for the first k images.
    Masked pixels render mid-gray."""
    k = min(k, images.shape[0])
    x = images[:k]
    h, w = x.shape[2], x.shape[3]
    seed = config["seed"]
    if dcfg.lift_mode == "mask_inpaint":
        masks = np.stack([
            get_mask(dcfg.mask, 0, h, w, np.random.default_rng([seed, i, 0, 1]))
            for i in range(k)])
    else:
        masks = np.ones((k, h, w), dtype=np.uint8)
    rngs = [np.random.default_rng([seed, i, 0]) for i in range(k)]
    recon = inpaint_batch(x, masks, model, schedule, rngs)
    m = masks[:, None, :, :].astype(np.float32)
    masked = x * m  # mid-gray = 0.0 in [-1, 1]
    tiles = np.empty((3 * k,) + x.shape[1:], dtype=np.float32)
    tiles[0::3] = x
    tiles[1::3] = masked
    tiles[2::3] = np.clip(recon, -1.0, 1.0)
    write_pgm_grid(tiles, 3, out_path)


def cmd_score(config, checkpoint=None):
    out = _prepare_out(config)
    model, schedule = _load_model(config, checkpoint)
    dcfg = detector_config(config)
    eval_in = resolve_source(config["eval_in"])
    _check_shape(model, eval_in.images, "eval_in")
    reports_in, _ = score_dataset(eval_in.images, ["in"] * len(eval_in), model,
                                  schedule, dcfg, seed=config["seed"],
                                  workers=config["workers"])
    reports_to_csv(reports_in, out / "scores_in.csv")
    _render_grid(out / "recon_grid.pgm", eval_in.images, model, schedule,
                 config, dcfg, config["grid_k"])
    if config.get("eval_out"):
        eval_out = resolve_source(config["eval_out"])
        _check_shape(model, eval_out.images, "eval_out")
        reports_out, _ = score_dataset(eval_out.images, ["out"] * len(eval_out),
                                       model, schedule, dcfg, seed=config["seed"],
                                       workers=config["workers"])
        reports_to_csv(reports_out, out / "scores_out.csv")
    print(f"scored {len(eval_in)} in-domain images "
          f"with {dcfg.attempts} attempts; artifacts in {out}")
    return 0


def cmd_eval(in_csv, out_csv, config):
    out = _prepare_out(config)
    scores_in = [r.score for r in reports_from_csv(in_csv)]
    scores_out = [r.score for r in reports_from_csv(out_csv)]
    auc = roc_auc(scores_in, scores_out)
    line = f"{auc:.3f}"
    with open(out / "auc.txt", "w") as fh:
        fh.write(line + "\n")
    print(line)
    return 0


def _auc_from_reports(reports_in, reports_out, attempts=None):
    def agg(reports):
        if attempts is None:
            return [r.score for r in reports]
        return [median_score(r.distances[:attempts]) for r in reports]
    return roc_auc(agg(reports_in), agg(reports_out))


def cmd_ablate(config, axis, checkpoint=None):
    if axis not in ("mask", "metric", "attempts"):
        raise CliError(f"unknown ablation axis {axis!r}; valid axes: mask, metric, attempts")
    out = _prepare_out(config)
    model, schedule = _load_model(config, checkpoint)
    dcfg = detector_config(config)
    eval_in = resolve_source(config["eval_in"])
    eval_out = resolve_source(config["eval_out"])
    _check_shape(model, eval_in.images, "eval_in")
    _check_shape(model, eval_out.images, "eval_out")
    seed = config["seed"]
    workers = config["workers"]

    rows = []
    if axis == "mask":
        for variant, grid in MASK_ABLATION:
            mask = MaskSpec(variant=variant, grid_size=grid or 8)
            cfg = DetectorConfig(attempts=dcfg.attempts, mask=mask,
                                 metric=dcfg.metric)
            rep_in, _ = score_dataset(eval_in.images, ["in"] * len(eval_in),
                                      model, schedule, cfg, seed=seed, workers=workers)
            rep_out, _ = score_dataset(eval_out.images, ["out"] * len(eval_out),
                                       model, schedule, cfg, seed=seed, workers=workers)
            name = f"{variant}_{grid}x{grid}" if grid else variant
            rows.append((name, _auc_from_reports(rep_in, rep_out)))
    elif axis == "metric":
        rep_in, _ = score_dataset(eval_in.images, ["in"] * len(eval_in), model,
                                  schedule, dcfg, seed=seed, workers=workers,
                                  metric_kinds=list(METRIC_NAMES))
        rep_out, _ = score_dataset(eval_out.images, ["out"] * len(eval_out), model,
                                   schedule, dcfg, seed=seed, workers=workers,
                                   metric_kinds=list(METRIC_NAMES))
        for kind in METRIC_NAMES:
            rows.append((kind, _auc_from_reports(rep_in[kind], rep_out[kind])))
    else:  # attempts
        rep_in, _ = score_dataset(eval_in.images, ["in"] * len(eval_in), model,
                                  schedule, dcfg, seed=seed, workers=workers)
        rep_out, _ = score_dataset(eval_out.images, ["out"] * len(eval_out), model,
                                   schedule, dcfg, seed=seed, workers=workers)
        for r in range(1, dcfg.attempts + 1):
            rows.append((str(r), _auc_from_reports(rep_in, rep_out, attempts=r)))

    with open(out / "ablation.csv", "w", newline="\n") as fh:
        fh.write("setting,auc\n")
        for name, auc in rows:
            fh.write(f"{name},{auc:.6g}\n")
    for name, auc in rows:
        print(f"{name}: {auc:.3f}")
    return 0


def cmd_sample(config, checkpoint=None, count=16):
    out = _prepare_out(config)
    model, schedule = _load_model(config, checkpoint)
    side = config["in_domain"].get("side", 16)
    shape = (model.channels, side, side)
    samples = np.stack([
        sample(model, schedule, shape, np.random.default_rng([config["seed"], i]))
        for i in range(count)])
    write_pgm_grid(samples, 4, out / "samples.pgm")
    print(f"wrote {count} samples to {out / 'samples.pgm'}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lmd",
        description="Unsupervised OOD detection via diffusion inpainting")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None)

    common(sub.add_parser("train", help="train the diffusion model"))

    p_score = sub.add_parser("score", help="score evaluation images")
    common(p_score)
    p_score.add_argument("--checkpoint", type=str, default=None)
    p_score.add_argument("--attempts", type=int, default=None)
    p_score.add_argument("--mask", type=str, default=None,
                         help="variant[:grid], e.g. alternating_checkerboard:8")
    p_score.add_argument("--metric", type=str, default=None, choices=METRIC_NAMES)
    p_score.add_argument("--lift", type=str, default=None,
                         choices=("inpaint", "denoise"))

    p_eval = sub.add_parser("eval", help="ROC-AUC from two score CSVs")
    common(p_eval)
    p_eval.add_argument("in_csv")
    p_eval.add_argument("out_csv")

    p_ablate = sub.add_parser("ablate", help="sweep one axis, one AUC row per setting")
    common(p_ablate)
    p_ablate.add_argument("--checkpoint", type=str, default=None)
    p_ablate.add_argument("--axis", type=str, required=True)

    p_sample = sub.add_parser("sample", help="draw unconditional samples")
    common(p_sample)
    p_sample.add_argument("--checkpoint", type=str, default=None)
    p_sample.add_argument("--count", type=int, default=16)
    return parser


def _apply_flags(config, args):
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        config["out"] = args.out
    if getattr(args, "attempts", None) is not None:
        config["detector"]["attempts"] = args.attempts
    if getattr(args, "mask", None) is not None:
        kwargs = parse_mask_flag(args.mask)
        config["detector"]["mask_variant"] = kwargs["variant"]
        if "grid_size" in kwargs:
            config["detector"]["mask_grid"] = kwargs["grid_size"]
    if getattr(args, "metric", None) is not None:
        config["detector"]["metric"] = args.metric
    if getattr(args, "lift", None) is not None:
        config["detector"]["lift_mode"] = (
            "mask_inpaint" if args.lift == "inpaint" else "diffuse_denoise")
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = _apply_flags(load_config(args.config), args)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "score":
            return cmd_score(config, checkpoint=args.checkpoint)
        if args.command == "eval":
            return cmd_eval(args.in_csv, args.out_csv, config)
        if args.command == "ablate":
            return cmd_ablate(config, args.axis, checkpoint=args.checkpoint)
        if args.command == "sample":
            return cmd_sample(config, checkpoint=args.checkpoint, count=args.count)
        raise CliError(f"unknown command {args.command}")
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
