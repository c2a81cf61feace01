"""Command-line front end: ``ngr <command> ...``.

Exit codes: 0 success, 2 usage error, 3 data error (unreadable or mismatched
inputs), 4 numerical failure (a non-finite value appeared mid-solve).

Every command first prints its fully resolved invocation, defaults included,
as a ``#`` comment on stderr. Re-running that line reproduces the result.
Seed precedence: ``--seed``, then the ``NGR_SEED`` environment variable,
then a ``seed`` key in the config file, then 0.
"""

import argparse
import os
import shlex
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ngr import __version__, baselines, bench, checks, degrade, io, metrics, net, solver
from ngr.baselines import TvConfig
from ngr.errors import ConfigError, FormatError, NumericalError
from ngr.solver import DenoiseConfig, SolverConfig
from ngr.tensor import make_rng

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DEGRADE_KINDS = ("random", "deadline", "gaussian", "impulse", "stripes", "mixed")
DENOISE_HELP = (
    "NGR denoiser. The model (beta/2 ||Y - X - S||^2 + tau ||S||_1 plus the gradient "
    "penalty, with a sparse outlier part S) is this package's own construction, not a "
    "published one. --mode gaussian sets tau = 0; --mode mixed uses tau from the config."
)


class DataError(Exception):
    """Inputs are readable but inconsistent (e.g. mask and image shapes differ)."""


def default_seed():
    raw = os.environ.get("NGR_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"NGR_SEED must be an integer, got {raw!r}") from None


# --- argument parsing -------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="ngr", description="Neural gradient regularized image restoration.")
    p.add_argument("--version", action="version", version=f"ngr {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    d = sub.add_parser("degrade", help="synthesize a degraded observation")
    d.add_argument("--in", dest="input", required=True, help="clean image (.png or tensor file)")
    d.add_argument("--out", required=True, help="degraded output")
    d.add_argument("--mask-out", help="observation mask (required for random and deadline)")
    d.add_argument("--kind", required=True, choices=DEGRADE_KINDS)
    d.add_argument("--sr", type=float, default=0.3, help="random: sampling rate")
    d.add_argument("--columns", type=int, default=8, help="deadline: number of missing columns")
    d.add_argument("--sigma", type=float, default=0.1, help="gaussian: noise std")
    d.add_argument("--ratio", type=float, default=0.1, help="impulse: fraction of entries hit")
    d.add_argument("--bands-fraction", type=float, default=0.2, help="stripes: fraction of bands")
    d.add_argument("--stripes-per-band", type=int, default=35)
    d.add_argument("--stripe-range", type=float, nargs=2, default=(-0.25, 0.25), metavar=("LO", "HI"))
    d.add_argument("--preset", choices=sorted(degrade.PRESETS), default="weak", help="mixed: noise preset")
    d.add_argument("--seed", type=int)

    i = sub.add_parser("inpaint", help="NGR inpainting of a masked observation")
    i.add_argument("--in", dest="input", required=True)
    i.add_argument("--mask", required=True, help="mask tensor or PNG (nonzero = observed)")
    i.add_argument("--out", required=True)
    i.add_argument("--config", help="solver config file (key = value)")
    i.add_argument("--trace", help="iteration trace CSV")
    i.add_argument("--timing", action="store_true", help="add a wall_ms column to the trace")
    i.add_argument("--snapshots-dir", help="write predicted gradient maps every snapshot_every iterations")
    i.add_argument("--init-weights", help="warm-start network checkpoint")
    i.add_argument("--save-weights", help="write the final network checkpoint")
    i.add_argument("--seed", type=int)

    n = sub.add_parser("denoise", help="NGR denoising (own construction, see help)", description=DENOISE_HELP)
    n.add_argument("--in", dest="input", required=True)
    n.add_argument("--out", required=True)
    n.add_argument("--config", help="denoise config file (key = value)")
    n.add_argument("--mode", choices=("gaussian", "mixed"), default="mixed")
    n.add_argument("--trace")
    n.add_argument("--timing", action="store_true")
    n.add_argument("--sparse-out", help="write the sparse outlier part S")
    n.add_argument("--seed", type=int)

    t = sub.add_parser("tv-inpaint", help="3-D total variation inpainting baseline")
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--mask", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="TV config file (key = value)")
    t.add_argument("--trace")

    e = sub.add_parser("eval", help="print PSNR, SSIM, SAM, ERGAS as one CSV row")
    e.add_argument("--x", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--header", action="store_true", help="print the column names first")

    b = sub.add_parser("bench", help="run a synthetic benchmark suite")
    b.add_argument("--suite", required=True, choices=bench.SUITES)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--config", help="base solver config for the NGR runs")
    b.add_argument("--tv-config", help="base TV config")
    b.add_argument("--seed", type=int)

    sub.add_parser("selfcheck", help="run the numerical oracles")
    return p


def echo_invocation(args, parser_order):
    parts = ["ngr", args.command]
    for dest, flag in parser_order:
        value = getattr(args, dest)
        if value is None or value is False:
            continue
        if value is True:
            parts.append(flag)
        elif isinstance(value, (list, tuple)):
            parts.append(flag)
            parts.extend(str(v) for v in value)
        else:
            parts.extend([flag, str(value)])
    print("# " + shlex.join(parts), file=sys.stderr)


def _flags(parser, command):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return [
        (a.dest, a.option_strings[0])
        for a in sub.choices[command]._actions
        if a.option_strings and a.dest != "help"
    ]


# --- helpers ----------------------------------------------------------------


def _read_volume(path):
    try:
        return io.read_volume(path)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None


def _read_mask(path, shape):
    if str(path).lower().endswith(".png"):
        m = _read_volume(path)
        if not np.isin(m, (0.0, 1.0)).all():
            raise FormatError(f"{path}: mask PNG must be pure black/white")
        m = m > 0.5
    else:
        try:
            m = io.read_mask(path)
        except FileNotFoundError:
            raise DataError(f"{path}: no such file") from None
    if m.shape[:2] == shape[:2] and m.shape[2] == 1 and shape[2] > 1:
        m = np.broadcast_to(m, shape).copy()
    if m.shape != shape:
        raise DataError(f"mask shape {m.shape} does not match image shape {shape}")
    return m


CONFIG_KINDS = {"inpaint": "solver", "denoise": "denoise", "bench": "solver"}


def resolve_seed(args):
    """--seed, else NGR_SEED, else the config file's seed, else 0."""
    if args.seed is not None:
        return args.seed
    if "NGR_SEED" in os.environ:
        return default_seed()
    config = getattr(args, "config", None)
    if config and args.command in CONFIG_KINDS:
        return io.read_config(config, CONFIG_KINDS[args.command]).seed
    return 0


def _solver_config(args, kind):
    cfg = io.read_config(args.config, kind) if args.config else (DenoiseConfig() if kind == "denoise" else SolverConfig())
    return replace(cfg, seed=args.seed)


# --- commands ---------------------------------------------------------------


def cmd_degrade(args):
    x = _read_volume(args.input)
    try:
        out, mask = _apply_degradation(args, x)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    io.write_volume(out, args.out)
    summary = f"{args.kind}: {x.shape[0]}x{x.shape[1]}x{x.shape[2]} -> {args.out}"
    if mask is not None:
        io.write_mask(mask, args.mask_out)
        summary += f", observed {mask.mean():.4f}, mask -> {args.mask_out}"
    print(summary)


def _apply_degradation(args, x):
    rng = make_rng(args.seed)
    mask = None
    if args.kind in ("random", "deadline"):
        if not args.mask_out:
            raise argparse.ArgumentTypeError(f"--kind {args.kind} needs --mask-out")
        if args.kind == "random":
            mask = degrade.random_mask(rng, x.shape, args.sr)
        else:
            mask = degrade.deadline_mask(rng, x.shape, args.columns)
        out = np.where(mask, x, 0.0)
    elif args.kind == "gaussian":
        out = degrade.add_gaussian(rng, x, args.sigma)
    elif args.kind == "impulse":
        out = degrade.add_impulse(rng, x, args.ratio)
    elif args.kind == "stripes":
        out = degrade.add_stripes(rng, x, args.bands_fraction, args.stripes_per_band, tuple(args.stripe_range))
    else:
        out = degrade.apply_mixed(rng, x, degrade.PRESETS[args.preset])
    return out, mask


def cmd_inpaint(args):
    cfg = _solver_config(args, "solver")
    if args.snapshots_dir and cfg.snapshot_every == 0:
        cfg = replace(cfg, snapshot_every=max(1, cfg.outer_iters // 10))
    y = _read_volume(args.input)
    mask = _read_mask(args.mask, y.shape)
    params = None
    if args.init_weights:
        params = net.load_params(args.init_weights, cfg.net.resolved(y.shape[2]))
    final = {}
    x, trace = solver.run_inpainting(y, mask, cfg, params=params, callback=lambda s: final.update(state=s))
    io.write_volume(x, args.out)
    if args.trace:
        io.write_trace(trace, args.trace, timing=args.timing)
    if args.snapshots_dir:
        outdir = Path(args.snapshots_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        for it, triple in trace.snapshots:
            for axis, g in zip("hvt", triple):
                io.write_tensor(g, outdir / f"grad_{axis}_{it:06d}.ngrt")
    if args.save_weights:
        state = final["state"]
        net.save_params(state.params, state.net_cfg, args.save_weights)
    print(f"inpaint: {len(trace)} iterations, residual {trace.residual[-1]:.3e} -> {args.out}")


def cmd_denoise(args):
    cfg = _solver_config(args, "denoise")
    if args.mode == "gaussian":
        cfg = replace(cfg, tau=0.0)
    y = _read_volume(args.input)
    x, s, trace = solver.run_denoising(y, cfg)
    io.write_volume(x, args.out)
    if args.sparse_out:
        io.write_tensor(s, args.sparse_out)
    if args.trace:
        io.write_trace(trace, args.trace, timing=args.timing)
    print(f"denoise ({args.mode}, tau={cfg.tau}): {len(trace)} iterations -> {args.out}")


def cmd_tv_inpaint(args):
    cfg = io.read_config(args.config, "tv") if args.config else TvConfig()
    y = _read_volume(args.input)
    mask = _read_mask(args.mask, y.shape)
    trace = solver.IterationTrace() if args.trace else None
    x = baselines.tv3d_inpaint(y, mask, cfg, trace=trace)
    io.write_volume(x, args.out)
    if trace is not None:
        io.write_trace(trace, args.trace)
    print(f"tv-inpaint: {cfg.iters} iterations -> {args.out}")


def cmd_eval(args):
    x = _read_volume(args.x)
    ref = _read_volume(args.ref)
    if x.shape != ref.shape:
        raise DataError(f"shape mismatch: {x.shape} vs {ref.shape}")
    if args.header:
        print(",".join(metrics.MetricReport.FIELDS))
    print(metrics.evaluate(x, ref).csv_row())


def cmd_bench(args):
    if args.jobs < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    cfg = io.read_config(args.config, "solver") if args.config else SolverConfig()
    tv_cfg = io.read_config(args.tv_config, "tv") if args.tv_config else TvConfig()
    jobs = bench.expand(args.suite, replace(cfg, seed=args.seed), tv_cfg, seed=args.seed)
    rows = bench.run(jobs, workers=args.jobs)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{args.suite}.csv"
    io.write_rows(rows, path, bench.FIELDS)
    print(f"bench {args.suite}: {len(rows)} rows -> {path}")


def cmd_selfcheck(args):
    results = checks.run_all()
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else 1


COMMANDS = {
    "degrade": cmd_degrade,
    "inpaint": cmd_inpaint,
    "denoise": cmd_denoise,
    "tv-inpaint": cmd_tv_inpaint,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "selfcheck": cmd_selfcheck,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if hasattr(args, "seed"):
            args.seed = resolve_seed(args)
        echo_invocation(args, _flags(parser, args.command))
        code = COMMANDS[args.command](args)
    except argparse.ArgumentTypeError as exc:
        print(f"ngr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"ngr {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, ValueError) as exc:
        print(f"ngr {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"ngr {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
