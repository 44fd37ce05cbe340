"""Command-line front end.

Exit codes: 0 success, 2 file I/O or format problems, 3 invalid configuration,
4 numeric failure.

A ``--config`` file holds ``key = value`` lines (``#`` starts a comment); flags
given on the command line override it. Keys: seed, threads, t, candidates,
kernel_size, levels, search_radius, checkpoint, refine_iters, aggregation,
median.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from ._backend import available_backends, backend_name, set_threads
from .bme import EstimatorConfig
from .errors import ConfigError, DimensionError, DomainError, FormatError, NumericError
from .io import read_image, to_uint8, write_flo, write_image
from .pipeline import PipelineConfig, interpolate, load_generator, plan, training_example
from .synthetic import SCENE_KINDS, generate_triplet, scene_suite

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4

CONFIG_KEYS = {
    "seed": int,
    "threads": int,
    "t": str,
    "candidates": str,
    "kernel_size": int,
    "levels": int,
    "search_radius": int,
    "checkpoint": str,
    "refine_iters": int,
    "aggregation": int,
    "median": int,
}
DEFAULTS = {"seed": 0, "threads": 1, "t": "0.5", "candidates": "BM+Appx4", "kernel_size": 5,
            "levels": 4, "search_radius": 2, "checkpoint": None, "refine_iters": 20,
            "aggregation": 3, "median": 2}


def read_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"{path}:{n}: bad value for {key}: {value!r}") from None
    return out


def parse_t_list(text: str) -> tuple:
    try:
        ts = tuple(float(s) for s in str(text).replace(" ", "").split(",") if s)
    except ValueError:
        raise ConfigError(f"bad t list {text!r}") from None
    if not ts:
        raise ConfigError("empty t list")
    return ts


def resolve_settings(args) -> dict:
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def pipeline_config(settings: dict) -> PipelineConfig:
    est = EstimatorConfig(levels=settings["levels"], radius=settings["search_radius"],
                          refine_iters=settings["refine_iters"], aggregation=settings["aggregation"],
                          median=settings["median"])
    return PipelineConfig(estimator=est, kernel_size=settings["kernel_size"],
                          candidates=settings["candidates"], checkpoint=settings["checkpoint"],
                          t_list=parse_t_list(settings["t"]), threads=settings["threads"],
                          seed=settings["seed"])


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.4f}"


# --------------------------------------------------------------------------
# commands


def cmd_interpolate(args, settings) -> int:
    cfg = pipeline_config(settings)
    if args.dry_run:
        print(json.dumps(plan(cfg), sort_keys=True))
        return EXIT_OK
    frame0 = read_image(args.frame0)
    frame1 = read_image(args.frame1)
    results = interpolate(frame0, frame1, cfg.t_list, cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    # everything is computed before the first write, so failures leave no partial output
    for r in results:
        path = out_dir / f"{args.prefix}{r.t:.3f}.{args.format}"
        write_image(r.frame, path)
        print(path)
    return EXIT_OK


def _eval_items(args, settings):
    if args.triplet_dir:
        root = Path(args.triplet_dir)
        dirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
        if not dirs:
            raise FileNotFoundError(f"no triplet directories under {root}")
        for d in dirs:
            yield d.name, read_image(d / "frame0.png"), read_image(d / "frame_t.png"), read_image(d / "frame1.png"), 0.5
    else:
        t = parse_t_list(settings["t"])[0]
        for i, scene in enumerate(scene_suite(args.scene, args.count, args.size, settings["seed"])):
            tr = generate_triplet(scene, t)
            yield f"{args.scene}_{i:03d}", tr.frame0, tr.frame_t, tr.frame1, t


def cmd_eval(args, settings) -> int:
    from .losses import interp_error, psnr, ssim
    cfg = pipeline_config(settings)
    stack = load_generator(cfg)
    rows = []
    for name, f0, ft, f1, t in _eval_items(args, settings):
        # score the 8-bit frame that would be written, as benchmarks do
        out = to_uint8(interpolate(f0, f1, (t,), cfg, stack)[0].frame) / 255.0
        rows.append({"item": name, "t": t, "psnr": psnr(out, ft), "ssim": ssim(out, ft), "ie": interp_error(out, ft)})
    mean = {k: float(np.mean([r[k] for r in rows])) for k in ("psnr", "ssim", "ie")}
    print(f"{'item':<24}{'t':>7}{'psnr':>10}{'ssim':>10}{'ie':>10}")
    for r in rows:
        print(f"{r['item']:<24}{r['t']:>7.3f}{_fmt(r['psnr']):>10}{_fmt(r['ssim']):>10}{_fmt(r['ie']):>10}")
    print(f"{'mean':<24}{'':>7}{_fmt(mean['psnr']):>10}{_fmt(mean['ssim']):>10}{_fmt(mean['ie']):>10}")
    if args.report:
        with open(args.report, "w") as f:
            for r in rows:
                f.write(json.dumps({k: (None if isinstance(v, float) and math.isinf(v) else v)
                                    for k, v in r.items()} | {"psnr_inf": math.isinf(r["psnr"])}) + "\n")
    return EXIT_OK


def cmd_train_blend(args, settings) -> int:
    from .filtergen import ConvStack, TrainConfig, save_checkpoint, train_filtergen
    cfg = pipeline_config(settings)
    t = parse_t_list(settings["t"])[0]
    scenes = scene_suite("two_layer_occlusion", args.scenes, args.size, args.scene_seed)
    data = [training_example(generate_triplet(s, t), cfg.estimator, cfg.candidates,
                             not args.no_frames, not args.no_contexts) for s in scenes]
    tcfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, iterations=args.iterations,
                       seed=settings["seed"],
                       decay=((args.iterations // 2, 0.5), ((3 * args.iterations) // 4, 0.5)))
    stack = ConvStack.random(cfg.n_candidates, cfg.kernel_size, seed=settings["seed"],
                             use_frames=not args.no_frames, use_contexts=not args.no_contexts)
    trained, losses = train_filtergen(stack, data, tcfg)
    if not trained.is_finite():
        raise NumericError("training diverged")
    save_checkpoint(trained, args.out)
    curve = Path(args.curve) if args.curve else Path(str(args.out) + ".curve.tsv")
    with open(curve, "w") as f:
        f.write("iteration\tloss\n")
        for i, loss in enumerate(losses):
            f.write(f"{i}\t{loss!r}\n")
    if len(losses):
        print(f"initial loss {losses[0]:.6g}, final loss {losses[-1]:.6g}")
    print(f"wrote {args.out} and {curve}")
    return EXIT_OK


def cmd_make_synth(args, settings) -> int:
    t = parse_t_list(settings["t"])[0]
    out = Path(args.out_dir)
    for i, scene in enumerate(scene_suite(args.kind, args.count, args.size, settings["seed"])):
        tr = generate_triplet(scene, t)
        d = out / f"{args.kind}_{i:03d}"
        d.mkdir(parents=True, exist_ok=True)
        write_image(tr.frame0, d / "frame0.png")
        write_image(tr.frame_t, d / "frame_t.png")
        write_image(tr.frame1, d / "frame1.png")
        write_flo(tr.v01, d / "flow01.flo")
        write_flo(tr.v10, d / "flow10.flo")
    print(f"wrote {args.count} triplets to {out}")
    return EXIT_OK


def cmd_bench(args, settings) -> int:
    from .bench import format_table, run_bench
    ints = lambda s: tuple(int(x) for x in s.split(",") if x)
    backends = args.backends.split(",") if args.backends else None
    if backends:
        bad = [b for b in backends if b not in available_backends()]
        if bad:
            raise ConfigError(f"unavailable backends: {bad}")
    rows = run_bench(ints(args.sizes), ints(args.radii), ints(args.thread_counts) or (settings["threads"],),
                     backends, args.repeats, settings["seed"])
    print(format_table(rows))
    return EXIT_OK


def diagnostics() -> dict:
    from .losses import EPSILON, LossWeights, rho
    return {
        "rho_0": float(rho(0.0)),
        "epsilon": EPSILON,
        "alpha": LossWeights().alphas(4),
        "backend": backend_name(),
        "backends": available_backends(),
    }


def cmd_diagnostics(args, settings) -> int:
    d = diagnostics()
    if args.json:
        print(json.dumps(d))
    else:
        print(f"rho(0) = {d['rho_0']!r}")
        print("alpha_l = " + ", ".join(f"{a!r}" for a in d["alpha"]) + "  (l = 1..4)")
        print(f"backend = {d['backend']} (available: {', '.join(d['backends'])})")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 3), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--t", help="comma-separated time positions in [0, 1]")
    common.add_argument("--candidates", help="BM, Appx4, BM+Appx2 or BM+Appx4")
    common.add_argument("--kernel-size", dest="kernel_size", type=int)
    common.add_argument("--levels", type=int)
    common.add_argument("--search-radius", dest="search_radius", type=int)
    common.add_argument("--checkpoint")
    common.add_argument("--refine-iters", dest="refine_iters", type=int)

    p = _Parser(prog="midframe", description="Intermediate frame synthesis.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("interpolate", parents=[common], help="synthesize frames between two images")
    s.add_argument("frame0")
    s.add_argument("frame1")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--prefix", default="frame_t")
    s.add_argument("--format", choices=("png", "ppm"), default="png")
    s.add_argument("--dry-run", action="store_true", help="print the plan and exit")
    s.set_defaults(func=cmd_interpolate)

    s = sub.add_parser("eval", parents=[common], help="PSNR / SSIM / IE over triplets")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--triplet-dir", help="directory of */frame0.png, frame_t.png, frame1.png")
    g.add_argument("--scene", choices=SCENE_KINDS, help="evaluate generated scenes instead")
    s.add_argument("--count", type=int, default=4)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--report", help="write one JSON record per item here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("train-blend", parents=[common], help="train the filter generator on occlusion scenes")
    s.add_argument("--scenes", type=int, default=64)
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--scene-seed", type=int, default=1)
    s.add_argument("--iterations", type=int, default=2000)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--batch-size", type=int, default=4)
    s.add_argument("--no-frames", action="store_true", help="do not feed the input frames to the generator")
    s.add_argument("--no-contexts", action="store_true", help="do not feed context maps to the generator")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--curve", help="loss curve path (default: <out>.curve.tsv)")
    s.set_defaults(func=cmd_train_blend)

    s = sub.add_parser("make-synth", parents=[common], help="write synthetic triplets and flows")
    s.add_argument("--kind", choices=SCENE_KINDS, default="global_shift")
    s.add_argument("--count", type=int, default=4)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_make_synth)

    s = sub.add_parser("bench", parents=[common], help="time the numba and numpy kernels")
    s.add_argument("--sizes", default="32,64,128")
    s.add_argument("--radii", default="1,2,3")
    s.add_argument("--thread-counts", default="", help="comma-separated; default --threads")
    s.add_argument("--backends", default="", help="comma-separated subset of numba,numpy")
    s.add_argument("--repeats", type=int, default=5)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("diagnostics", parents=[common], help="print loss constants and backend")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_diagnostics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        set_threads(settings["threads"])
        return args.func(args, settings)
    except (FileNotFoundError, IsADirectoryError, PermissionError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DomainError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
