"""Command-line interface.

Subcommands::

    convkernel kernel learn      --input X --regime {uni,multi,tensor} --tau K --output kernel.json
    convkernel tensor factorize  --input y.dnt --rank R --gamma G [--kernel-{w,u,v} k.json]
                                 [--missing-rate p --seeds s1,s2] --output dir/
    convkernel synth             --shape 6x6x504 --period 24:1.0 [--period ...] --seed S --output x.dnt
    convkernel trips aggregate   --input trips.csv --zones M --start TS --hours T --output t.dnt
    convkernel eval rse          --estimate e.dnt --truth x.dnt [--mask m.dnt | --missing-rate p --seed s]
    convkernel rerun             echo.cfg

Lags are reported both as ``lag l`` (weight ``w_l`` multiplies ``x_{t-l}``)
and as the kernel position ``t = l + 1`` used when printing
``theta = (1, -w_1, ..., -w_{T-1})`` with 1-based positions.

Every run writes a ``key = value`` echo of its resolved settings; passing it
back with ``--config`` (or ``convkernel rerun``) repeats the run. Exit codes:
0 success, 1 invalid input, 2 solver failure.
"""

import argparse
import concurrent.futures
import csv
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from convkernel import dataio
from convkernel.kernels import SeriesBundle, kernel_from_json, kernel_to_json, learn_kernel
from convkernel.nnls import NnlsError
from convkernel.nnsp import SELECTION_RULES, NnspError, SolverConfig
from convkernel.tensorfact import FitConfig, FitError, ObservationMask, make_mask, rse, tf_fit

log = logging.getLogger("convkernel")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2
REGIMES = {"uni": "univariate", "multi": "multivariate", "tensor": "tensor3"}
PROJECTIONS = ("observed", "missing", "all")


class InputError(Exception):
    pass


# --- config files -----------------------------------------------------------


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _format_value(v):
    if isinstance(v, tuple):
        return "x".join(str(x) for x in v)
    if isinstance(v, list):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_echo(path, command, args):
    skip = {"func", "config", "command", "group", "verbose"}
    lines = [f"command = {command}"]
    for key in sorted(vars(args)):
        value = getattr(args, key)
        if key in skip or key.startswith("_") or value is None:
            continue
        lines.append(f"{key} = {_format_value(value)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` when present.

    Config values act as defaults, so flags given on the command line win.
    """
    cfg_path = _config_path(argv)
    if cfg_path:
        words = tuple(tok for tok in argv if not tok.startswith("-"))
        sub = next((p for path, p in parser.commands.items() if words[: len(path)] == path), None)
        if sub is None:
            raise InputError("--config needs a subcommand")
        values = read_config(cfg_path)
        values.pop("command", None)
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in values.items():
            action = actions.get(key)
            if action is None:
                raise InputError(f"{cfg_path}: unknown setting {key!r}")
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(action, argparse._AppendAction):
                defaults[key] = [action.type(x) if action.type else x for x in raw.split(",") if x]
            else:
                defaults[key] = action.type(raw) if action.type else raw
            action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# --- helpers -------------------------------------------------------------------


def _load_tensor(path):
    p = Path(path)
    if not p.exists():
        raise InputError(f"input file not found: {path}")
    if p.suffix.lower() == ".csv":
        return dataio.read_csv_matrix(p)
    return dataio.read_dnt(p)


def _load_bundle(path, regime, mean_center=False):
    p = Path(path)
    if not p.exists():
        raise InputError(f"input file not found: {path}")
    kind = REGIMES[regime]
    if p.suffix.lower() == ".csv":
        if kind == "tensor3":
            raise InputError("tensor regime needs a .dnt input")
        layout = "univariate" if kind == "univariate" else "rows-are-series"
        bundle = dataio.read_csv_series(p, layout)
    else:
        bundle = SeriesBundle(kind, dataio.read_dnt(p))
    return bundle.mean_centered() if mean_center else bundle


def _seeds(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None


def _shape(text):
    try:
        dims = tuple(int(s) for s in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must look like 6x6x504, got {text!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"invalid shape {text!r}")
    return dims


def _period(text):
    try:
        p, a = text.split(":")
        return f"{int(p)}:{float(a)!r}"
    except ValueError:
        raise argparse.ArgumentTypeError(f"period must look like 24:1.0, got {text!r}") from None


def kernel_summary(kernel):
    lines = [f"kernel: T={kernel.T} tau={kernel.tau} regime={kernel.regime} loss={kernel.loss:.6g}"]
    if not kernel.support:
        lines.append("  (empty support: theta = e_1)")
    for lag, w in zip(kernel.support, kernel.weights):
        lines.append(f"  lag {lag} (position t={lag + 1}): weight {w:.6g}")
    if kernel.flags:
        lines.append(f"  flags: {', '.join(kernel.flags)}")
    return "\n".join(lines)


# --- commands ------------------------------------------------------------------


def cmd_kernel_learn(args):
    bundle = _load_bundle(args.input, args.regime, args.mean_center)
    cfg = SolverConfig(max_iter=args.max_iter, min_decrease=args.min_decrease, nnls_tol=args.nnls_tol,
                       selection=args.selection)
    kernel = learn_kernel(bundle, args.tau, cfg)
    config = {
        "input": str(args.input), "regime": args.regime, "tau": args.tau, "mean_center": args.mean_center,
        "max_iter": args.max_iter, "min_decrease": args.min_decrease, "nnls_tol": args.nnls_tol,
        "selection": args.selection,
    }
    out = Path(args.output)
    out.write_text(kernel_to_json(kernel, config))
    summary = kernel_summary(kernel)
    out.with_suffix(".summary.txt").write_text(summary + "\n")
    write_echo(out.with_suffix(".config"), "kernel learn", args)
    print(summary)
    return EXIT_OK


def _load_kernel(path, expected, mode):
    p = Path(path)
    if not p.exists():
        raise InputError(f"kernel file not found: {path}")
    try:
        kernel = kernel_from_json(p.read_text())
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if kernel.T != expected:
        raise InputError(
            f"kernel {path} has length {kernel.T} but tensor mode {mode} has size {expected}"
        )
    return kernel.theta()


def _fit_one(Y, seed, args, kernels, cfg):
    mask = make_mask(Y.shape, args.missing_rate, seed)
    t0 = time.perf_counter()
    model = tf_fit(Y, mask, args.rank, args.gamma, kernels, FitConfig(
        cg_tol=cfg.cg_tol, cg_iters=cfg.cg_iters, outer_iters=cfg.outer_iters, outer_tol=cfg.outer_tol, seed=seed))
    wall = time.perf_counter() - t0
    est = model.reconstruct()
    scores = {}
    for proj in PROJECTIONS:
        try:
            scores[proj] = rse(est, Y, mask, proj)
        except ValueError:
            scores[proj] = math.nan
    return est, scores, model, wall


def cmd_factorize(args):
    Y = _load_tensor(args.input)
    if Y.ndim != 3:
        raise InputError(f"factorization needs a third-order tensor, got shape {Y.shape}")
    if not 0.0 <= args.missing_rate < 1.0:
        raise InputError(f"missing rate must lie in [0, 1), got {args.missing_rate}")
    if args.rank < 1:
        raise InputError("rank must be positive")
    if args.gamma < 0:
        raise InputError("gamma must be non-negative")
    kernels = {}
    for mode, (name, path) in enumerate((("w", args.kernel_w), ("u", args.kernel_u), ("v", args.kernel_v)), 1):
        if path:
            kernels[name] = _load_kernel(path, Y.shape[mode - 1], mode)
    cfg = FitConfig(cg_tol=args.cg_tol, cg_iters=args.cg_iters, outer_iters=args.outer_iters,
                    outer_tol=args.outer_tol)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    seeds = args.seeds or [0]
    threads = max(1, int(os.environ.get("CONVKERNEL_THREADS", "1") or 1))

    def run(seed):
        try:
            return seed, _fit_one(Y, seed, args, kernels, cfg), None
        except (FitError, ValueError) as exc:
            return seed, None, exc

    with concurrent.futures.ThreadPoolExecutor(max_workers=min(threads, len(seeds))) as pool:
        results = sorted(pool.map(run, seeds), key=lambda item: item[0])

    failed = 0
    rows = []
    for seed, result, exc in results:
        if exc is not None:
            failed += 1
            log.error("seed %d failed: %s", seed, exc)
            rows.append([seed, "nan", "nan", "nan", "nan", 0, "nan", f"failed: {exc}"])
            continue
        est, scores, model, wall = result
        dataio.write_dnt(outdir / f"reconstruction_seed{seed}.dnt", est)
        rows.append([seed, f"{scores['observed']:.10g}", f"{scores['missing']:.10g}", f"{scores['all']:.10g}",
                     f"{model.objective_history[-1]:.10g}", len(model.objective_history) - 1, f"{wall:.3f}", "ok"])
    with open(outdir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "rse_observed", "rse_missing", "rse_all", "objective", "iterations",
                         "wall_seconds", "status"])
        writer.writerows(rows)
    write_echo(outdir / "config.cfg", "tensor factorize", args)
    ok = [r for r in rows if r[-1] == "ok"]
    for i, proj in enumerate(PROJECTIONS, start=1):
        vals = np.array([float(r[i]) for r in ok])
        vals = vals[np.isfinite(vals)]
        if len(vals):
            print(f"rse_{proj}: {vals.mean():.4f} ± {vals.std():.4f} over {len(vals)} seeds")
    if failed:
        print(f"{failed} of {len(seeds)} seeds failed", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_synth(args):
    comps = []
    for spec in args.period or []:
        p, a = spec.split(":")
        comps.append((int(p), float(a)))
    if not comps:
        raise InputError("at least one --period is required")
    X = dataio.synth_seasonal(args.shape, comps, args.noise, args.seed, rank=args.rank, noise_ar=args.noise_ar)
    dataio.write_dnt(args.output, X)
    write_echo(Path(args.output).with_suffix(".config"), "synth", args)
    print(f"wrote {args.output} shape={'x'.join(map(str, X.shape))}")
    return EXIT_OK


def cmd_trips(args):
    if not Path(args.input).exists():
        raise InputError(f"input file not found: {args.input}")
    stats = dataio.TripStats()
    columns = {"pickup_zone": args.pickup_col, "dropoff_zone": args.dropoff_col, "pickup_time": args.time_col}
    records = dataio.read_trip_csv(args.input, columns, args.zone_offset, stats)
    counts = dataio.aggregate_trips(records, args.zones, args.start, args.hours, args.dropoff_zones, stats)
    dataio.write_dnt(args.output, counts)
    write_echo(Path(args.output).with_suffix(".config"), "trips aggregate", args)
    print(f"accepted={stats.accepted} skipped={stats.skipped} malformed={stats.malformed} "
          f"total={int(counts.sum())}")
    return EXIT_OK


def cmd_eval_rse(args):
    est = _load_tensor(args.estimate)
    truth = _load_tensor(args.truth)
    if est.shape != truth.shape:
        raise InputError(f"estimate shape {est.shape} does not match truth shape {truth.shape}")
    if args.mask:
        mask = ObservationMask(_load_tensor(args.mask) != 0)
    elif args.missing_rate is not None:
        mask = make_mask(truth.shape, args.missing_rate, args.seed)
    else:
        mask = ObservationMask.full(truth.shape)
    if mask.shape != truth.shape:
        raise InputError(f"mask shape {mask.shape} does not match truth shape {truth.shape}")
    for proj in PROJECTIONS:
        try:
            print(f"rse_{proj} = {rse(est, truth, mask, proj):.10g}")
        except ValueError:
            print(f"rse_{proj} = nan")
    return EXIT_OK


def cmd_rerun(args):
    values = read_config(args.echo)
    command = values.get("command")
    if not command:
        raise InputError(f"{args.echo}: no 'command' entry")
    return main(command.split() + ["--config", str(args.echo)])


# --- parser ----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Usage errors are invalid input (exit 1), not solver failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _sub(subparsers, name, func, help):
    p = subparsers.add_parser(name, help=help)
    p.set_defaults(func=func)
    path = tuple(subparsers._prog_prefix.split()[1:]) + (name,)
    subparsers._root.commands[path] = p
    p.add_argument("--config", help="key = value file supplying defaults (e.g. a run echo)")
    return p


def _subparsers(parent, root, dest="command"):
    sp = parent.add_subparsers(dest=dest, required=True)
    sp._root = root
    return sp


def build_parser():
    parser = _Parser(prog="convkernel", description=__doc__.split("\n\n")[0])
    parser.commands = {}
    parser.add_argument("-v", "--verbose", action="store_true")
    top = _subparsers(parser, parser, "group")

    kernel = _subparsers(top.add_parser("kernel", help="kernel learning"), parser)
    p = _sub(kernel, "learn", cmd_kernel_learn, "learn a sparse non-negative temporal kernel")
    p.add_argument("--input", required=True)
    p.add_argument("--regime", choices=sorted(REGIMES), required=True)
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--mean-center", action="store_true")
    p.add_argument("--max-iter", type=int, default=SolverConfig.max_iter)
    p.add_argument("--min-decrease", type=float, default=SolverConfig.min_decrease)
    p.add_argument("--nnls-tol", type=float, default=SolverConfig.nnls_tol)
    p.add_argument("--selection", choices=SELECTION_RULES, default=SolverConfig.selection)
    p.add_argument("--output", required=True)

    tensor = _subparsers(top.add_parser("tensor", help="tensor factorization"), parser)
    p = _sub(tensor, "factorize", cmd_factorize, "kernel-regularized masked CP factorization")
    p.add_argument("--input", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--kernel-w")
    p.add_argument("--kernel-u")
    p.add_argument("--kernel-v")
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--seeds", type=_seeds)
    p.add_argument("--cg-tol", type=float, default=FitConfig.cg_tol)
    p.add_argument("--cg-iters", type=int, default=FitConfig.cg_iters)
    p.add_argument("--outer-iters", type=int, default=FitConfig.outer_iters)
    p.add_argument("--outer-tol", type=float, default=FitConfig.outer_tol)
    p.add_argument("--output", required=True)

    p = _sub(top, "synth", cmd_synth, "generate synthetic seasonal data")
    p.add_argument("--shape", type=_shape, required=True)
    p.add_argument("--period", type=_period, action="append", help="PERIOD:AMPLITUDE, repeatable")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--noise-ar", type=float, default=0.0)
    p.add_argument("--rank", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)

    trips = _subparsers(top.add_parser("trips", help="trip records"), parser)
    p = _sub(trips, "aggregate", cmd_trips, "aggregate trips into an hourly OD tensor")
    p.add_argument("--input", required=True)
    p.add_argument("--zones", type=int, required=True)
    p.add_argument("--dropoff-zones", type=int)
    p.add_argument("--start", required=True)
    p.add_argument("--hours", type=int, required=True)
    p.add_argument("--zone-offset", type=int, default=0)
    p.add_argument("--pickup-col", default=dataio.TRIP_COLUMNS["pickup_zone"])
    p.add_argument("--dropoff-col", default=dataio.TRIP_COLUMNS["dropoff_zone"])
    p.add_argument("--time-col", default=dataio.TRIP_COLUMNS["pickup_time"])
    p.add_argument("--output", required=True)

    ev = _subparsers(top.add_parser("eval", help="evaluation"), parser)
    p = _sub(ev, "rse", cmd_eval_rse, "relative error over observed, missing and all entries")
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--mask", help="tensor file, non-zero = observed")
    p.add_argument("--missing-rate", type=float)
    p.add_argument("--seed", type=int, default=0)

    p = top.add_parser("rerun", help="repeat a run from its config echo")
    p.add_argument("echo")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (InputError, dataio.FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NnspError, NnlsError, FitError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
