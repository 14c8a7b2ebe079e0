"""Command-line interface: one subcommand per pipeline stage plus ``run``."""

import argparse
import os
import sys
import time
import warnings
from dataclasses import fields

from . import io
from .affinity import possibility_map
from .core import PatchSpec
from .detection import (
    FilterConfig,
    clip_normalize,
    distance_image,
    fuse,
    meanfield_filter,
    otsu_threshold,
    score,
)
from .pipeline import ChangeDetector
from .regression import KINDS, make_regressor, regress_both_ways
from .regression.serialize import dump
from .selection import DEFAULT_BINS, select_with_report
from .synth import SynthConfig, generate_pair
from .validation import check_image_pair


class CLIError(Exception):
    pass


def _synth_config(table):
    known = {f.name for f in fields(SynthConfig)}
    unknown = set(table) - known
    if unknown:
        raise CLIError(f"unknown synth settings: {sorted(unknown)}")
    return SynthConfig(**table)


def cmd_synth(args):
    cfg = io.load_toml(args.config)
    config = _synth_config(cfg.get("synth", cfg))
    x, y, mask = generate_pair(config)
    os.makedirs(args.out, exist_ok=True)
    io.write_array(os.path.join(args.out, "x.npy"), x)
    io.write_array(os.path.join(args.out, "y.npy"), y)
    io.write_array(os.path.join(args.out, "mask.npy"), mask.astype("float32"))


def cmd_prior(args):
    x = io.read_array(args.x, "image")
    y = io.read_array(args.y, "image")
    io.write_array(args.out, possibility_map(x, y, PatchSpec(args.k, args.delta)))


def cmd_select(args):
    pc = io.read_array(args.pc, "map")
    x = io.read_array(args.x, "image")
    y = io.read_array(args.y, "image")
    truth = io.read_array(args.mask, "map") if args.mask else None
    report = select_with_report(pc, x, y, args.m, args.bins, truth)
    io.write_training_set(args.out, report.training_set)
    if args.report:
        io.write_json(args.report, report.to_dict())


REGRESSOR_FLAGS = {
    # flag: (kind, parameter, type)
    "signal_variance": ("gpr", "signal_variance", float),
    "length_scale": ("gpr", "length_scale", str),
    "jitter": ("gpr", "jitter", float),
    "optimizer_steps": ("gpr", "optimizer_steps", int),
    "penalty": ("svr", "penalty", float),
    "epsilon": ("svr", "epsilon", float),
    "sigma": ("svr", "sigma", float),
    "max_iter": ("svr", "max_iter", int),
    "tol": ("svr", "tol", float),
    "trees": ("rfr", "n_estimators", int),
    "max_features": ("rfr", "max_features", str),
    "min_leaf": ("rfr", "min_samples_leaf", int),
    "seed": ("rfr", "random_state", int),
    "neighbors": ("hpt", "n_neighbors", int),
    "gamma": ("hpt", "gamma", float),
    "normalization": ("hpt", "normalization", str),
}


def _regressor_params(args):
    params = {}
    for flag, (kind, name, _) in REGRESSOR_FLAGS.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if kind != args.method:
            raise CLIError(f"--{flag.replace('_', '-')} applies to method {kind}, not {args.method}")
        if name == "max_features" and value.isdigit():
            value = int(value)
        if name == "length_scale" and value != "median":
            try:
                value = float(value)
            except ValueError:
                raise CLIError("--length-scale expects a number or 'median'") from None
        params[name] = value
    if args.method == "rfr" and args.no_bootstrap:
        params["bootstrap"] = False
    return params


def cmd_regress(args):
    ts = io.read_training_set(args.train)
    x = io.read_array(args.x, "image")
    y = io.read_array(args.y, "image")
    estimator = make_regressor(args.method, **_regressor_params(args))
    result = regress_both_ways(x, y, ts, estimator)
    io.write_array(args.out_xhat, result.x_hat)
    io.write_array(args.out_yhat, result.y_hat)
    if args.save_models:
        stem = args.save_models
        dump(result.forward, stem + ".forward.hcdr")
        dump(result.backward, stem + ".backward.hcdr")


def cmd_detect(args):
    x, y = check_image_pair(io.read_array(args.x, "image"), io.read_array(args.y, "image"))
    x_hat = io.read_array(args.xhat, "image")
    y_hat = io.read_array(args.yhat, "image")
    dx = clip_normalize(distance_image(x, x_hat), args.num_sigma)
    dy = clip_normalize(distance_image(y, y_hat), args.num_sigma)
    config = FilterConfig(
        args.filter_iters, args.kernel_width, args.spatial_radius, args.spatial_sigma,
        args.boundary,
    )
    d = meanfield_filter(fuse(dx, dy), x, y, config)
    if args.threshold == "otsu":
        _, change_map = otsu_threshold(d)
    else:
        try:
            t = float(args.threshold)
        except ValueError:
            raise CLIError(f"--threshold must be 'otsu' or a number, got {args.threshold!r}") from None
        change_map = d > t
    io.write_array(args.out_d, d)
    io.write_map_png(args.out_map, change_map)


def cmd_evaluate(args):
    truth = io.read_array(args.mask, "map")
    change_map = io.read_map_png(args.map)
    scores = io.read_array(args.scores, "map") if args.scores else None
    if change_map.shape != truth.shape:
        raise CLIError(f"map shape {change_map.shape} does not match mask shape {truth.shape}")
    report = score(change_map, truth, scores, args.threshold)
    io.write_json(args.out, report.to_dict())


def _run_detector(cfg):
    patch = cfg.get("patch", {})
    sel = cfg.get("selection", {})
    reg = dict(cfg.get("regressor", {}))
    filt = cfg.get("filter", {})
    det = cfg.get("detection", {})
    kind = reg.pop("kind", "rfr")
    if kind not in KINDS:
        raise CLIError(f"unknown regressor kind {kind!r}")
    if kind == "rfr" and "rng_seed" in cfg:
        reg.setdefault("random_state", cfg["rng_seed"])
    return ChangeDetector(
        k=patch.get("k", 10),
        delta=patch.get("delta", 1),
        n_train=sel.get("M", 1000),
        regressor=kind,
        regressor_params=reg,
        filter_iterations=filt.get("iterations", 5),
        kernel_width=filt.get("kernel_width", 0.1),
        spatial_radius=filt.get("spatial_radius", 8),
        spatial_sigma=filt.get("spatial_sigma", 4.0),
        boundary=filt.get("boundary", "renormalize"),
        num_sigma=det.get("num_sigma_clip", 4.0),
        num_bins=sel.get("N_bins", DEFAULT_BINS),
    )


def cmd_run(args):
    cfg = io.load_toml(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    paths = cfg.get("paths", {})

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    out_dir = resolve(paths.get("out_dir", "out"))
    os.makedirs(out_dir, exist_ok=True)
    timings = {}
    start = time.perf_counter()
    if "synth" in cfg:
        synth = dict(cfg["synth"])
        synth.setdefault("rng_seed", cfg.get("rng_seed", 0))
        x, y, truth = generate_pair(_synth_config(synth))
        io.write_array(os.path.join(out_dir, "x.npy"), x)
        io.write_array(os.path.join(out_dir, "y.npy"), y)
        io.write_array(os.path.join(out_dir, "mask.npy"), truth.astype("float32"))
        timings["synth"] = 1000.0 * (time.perf_counter() - start)
    else:
        for key in ("x", "y"):
            if key not in paths:
                raise CLIError(f"run config needs paths.{key} or a [synth] table")
        x = io.read_array(resolve(paths["x"]), "image")
        y = io.read_array(resolve(paths["y"]), "image")
        truth = io.read_array(resolve(paths["mask"]), "map") if "mask" in paths else None
        timings["load"] = 1000.0 * (time.perf_counter() - start)

    detector = _run_detector(cfg).fit(x, y, truth)
    io.write_array(os.path.join(out_dir, "pc.npy"), detector.possibility_)
    io.write_training_set(os.path.join(out_dir, "train.bin"), detector.training_set_)
    io.write_array(os.path.join(out_dir, "xhat.npy"), detector.x_hat_)
    io.write_array(os.path.join(out_dir, "yhat.npy"), detector.y_hat_)
    io.write_array(os.path.join(out_dir, "d.npy"), detector.filtered_)
    io.write_map_png(os.path.join(out_dir, "map.png"), detector.change_map_)
    report = detector.report(truth)
    report["stage_timings_ms"] = {**timings, **report["stage_timings_ms"]}
    if truth is not None:
        io.write_json(os.path.join(out_dir, "metrics.json"), detector.evaluate(truth).to_dict())
    io.write_json(os.path.join(out_dir, "report.json"), report)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hetcd", description="Unsupervised change detection for heterogeneous image pairs."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic image pair")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prior", help="affinity-based change possibility map")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--delta", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prior)

    p = sub.add_parser("select", help="pick the training set from the prior")
    p.add_argument("--pc", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--mask", help="optional ground truth for the fn_fraction diagnostic")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("regress", help="two-way image regression")
    p.add_argument("--train", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--method", choices=sorted(KINDS), default="rfr")
    p.add_argument("--out-xhat", required=True)
    p.add_argument("--out-yhat", required=True)
    p.add_argument("--save-models", metavar="STEM",
                   help="also write STEM.forward.hcdr and STEM.backward.hcdr")
    for flag, (kind, _, typ) in REGRESSOR_FLAGS.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ,
                       help=f"{kind} only")
    p.add_argument("--no-bootstrap", action="store_true", help="rfr only")
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("detect", help="distance images, filtering and thresholding")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--xhat", required=True)
    p.add_argument("--yhat", required=True)
    p.add_argument("--filter-iters", type=int, default=5)
    p.add_argument("--kernel-width", type=float, default=0.1)
    p.add_argument("--spatial-radius", type=int, default=8)
    p.add_argument("--spatial-sigma", type=float, default=4.0)
    p.add_argument("--boundary", choices=("renormalize", "periodic"), default="renormalize")
    p.add_argument("--num-sigma", type=float, default=4.0)
    p.add_argument("--threshold", default="otsu", help="'otsu' or a fixed value")
    p.add_argument("--out-d", required=True)
    p.add_argument("--out-map", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="metrics against a ground-truth mask")
    p.add_argument("--scores")
    p.add_argument("--map", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--threshold", type=float, help="recorded in the metrics file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline from a TOML config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except (CLIError, ValueError, OSError, MemoryError) as exc:
        print(f"hetcd {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
