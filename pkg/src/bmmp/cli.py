"""Command-line entry point.

Exit codes: 0 on success, 1 for usage errors, 2 for runtime or data errors.
Every subcommand prints its fully resolved configuration before running.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .detector import CorrelationKind
from .image import DenseImageError, PgmFormatError, image_demo, read_pgm, to_display, write_pgm
from .problem import InstanceFormatError, SignalPrior, load_instance, make_instance, save_instance
from .solvers import CLI_SOLVERS, SOLVERS, InfeasibleSizeError, SolverConfig, run_solver

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    env = os.environ.get("BMMP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"BMMP_SEED must be an integer, got {env!r}") from None


def _prior(text: str) -> SignalPrior:
    try:
        a, b = (float(v) for v in text.split(","))
        return SignalPrior(a, b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'a,b' with a < b, got {text!r}") from exc


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bmmp", description="Sparse recovery by Bayesian multiple matching pursuit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a problem instance")
    g.add_argument("--m", type=int, default=128)
    g.add_argument("--n", type=int, default=256)
    g.add_argument("--k", type=int, required=True)
    noise = g.add_mutually_exclusive_group()
    noise.add_argument("--snr", type=float, help="SNR in dB")
    noise.add_argument("--noiseless", action="store_true", help="no measurement noise (default)")
    g.add_argument("--prior", type=_prior, default=SignalPrior(0.0, 1.0), help="uniform prior 'a,b' (default 0,1)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="run one solver on an instance file")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--solver", default="bmmp", choices=CLI_SOLVERS)
    s.add_argument("--k", type=int, help="target sparsity (default: the instance's)")
    s.add_argument("--g", type=int, default=4, help="number of BMMP support candidates")
    s.add_argument("--epsilon", type=float, help="residual threshold (default ||y|| 10^(-SNR/20))")
    s.add_argument("--correlation", choices=[c.value for c in CorrelationKind], default=CorrelationKind.RA_ORMP.value)
    s.add_argument("--out", help="result JSON path (default: <input stem>.result.json)")
    s.add_argument("--overwrite", action="store_true")

    b = sub.add_parser("bench", help="run a Monte Carlo experiment preset")
    b.add_argument("--preset", required=True, choices=bench.PRESETS)
    b.add_argument("--scale", type=float, default=1.0)
    b.add_argument("--trials", type=int, default=100)
    b.add_argument("--seed", type=int)
    b.add_argument("--g", type=int, default=4)
    b.add_argument("--solvers", type=_csv_list, help="override the preset's solver list")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.add_argument("--timing", action="store_true", help="add wall-clock columns (breaks byte reproducibility)")
    b.add_argument("--out-dir")
    b.add_argument("--overwrite", action="store_true")

    im = sub.add_parser("image", help="compressed-image reconstruction demo")
    im.add_argument("--in", dest="input", required=True)
    im.add_argument("--m", type=int, default=138)
    im.add_argument("--snr", type=float, default=25.0)
    im.add_argument("--solvers", type=_csv_list, default=["bmmp", "map-omp", "map-gomp", "map-sp", "map-cosamp"])
    im.add_argument("--g", type=int, default=4)
    im.add_argument("--seed", type=int)
    im.add_argument("--out-dir")
    im.add_argument("--overwrite", action="store_true")

    pd = sub.add_parser("plot-data", help="turn a summary file into a plot table")
    pd.add_argument("--summary", required=True)
    pd.add_argument("--x", dest="x_axis", default="k", choices=("k", "m", "n", "snr"))
    pd.add_argument("--metric", default="recovery_rate", choices=("recovery_rate", "mse", "median_squared_error", "recovery_rate_ci95"))
    pd.add_argument("--solvers", type=_csv_list)
    pd.add_argument("--out", required=True)
    pd.add_argument("--overwrite", action="store_true")
    return p


def _echo(cfg: dict) -> None:
    print("config: " + json.dumps(cfg, sort_keys=True, default=str))


def _check_new(paths, overwrite: bool) -> None:
    if overwrite:
        return
    for path in paths:
        if Path(path).exists():
            raise UsageError(f"{path} exists; pass --overwrite to replace it")


def cmd_gen(args) -> int:
    seed = _default_seed() if args.seed is None else args.seed
    if args.m < 1 or args.n <= args.m:
        raise UsageError(f"need 1 <= m < n, got m={args.m}, n={args.n}")
    if not 0 <= args.k < args.m:
        raise UsageError(f"need 0 <= k < m (and k < n), got k={args.k}, m={args.m}, n={args.n}")
    if args.snr is not None and args.k == 0:
        raise UsageError("--snr needs a nonzero signal (k >= 1)")
    _check_new([args.out], False)
    _echo({
        "command": "gen", "m": args.m, "n": args.n, "k": args.k,
        "snr_db": "noiseless" if args.snr is None else args.snr,
        "prior": {"family": "uniform", "a": args.prior.a, "b": args.prior.b},
        "sigma": 1.0 / math.sqrt(args.m), "seed": seed, "out": args.out,
    })
    inst = make_instance(args.m, args.n, args.k, prior=args.prior, snr_db=args.snr, seed=seed)
    save_instance(inst, args.out)
    print(f"wrote {args.out}: m={inst.m} n={inst.n} k={inst.k} sigma_w={inst.model.sigma_w!r}")
    return EXIT_OK


def cmd_solve(args) -> int:
    if args.g < 1:
        raise UsageError(f"--g must be >= 1, got {args.g}")
    out = Path(args.out) if args.out else Path(args.input).with_suffix(".result.json")
    _check_new([out], args.overwrite)
    inst = load_instance(args.input)
    k = inst.k if args.k is None else args.k
    if not 0 <= k < inst.m:
        raise UsageError(f"need 0 <= k < m, got k={k}, m={inst.m}")
    corr = CorrelationKind(args.correlation)
    resolved = SolverConfig(k=k, g=args.g, epsilon=args.epsilon, correlation=corr).resolve(inst)
    _echo({"command": "solve", "input": args.input, "solver": args.solver, "out": str(out), **resolved.to_dict()})
    kwargs = {"k": k, "epsilon": resolved.epsilon}
    if args.solver == "bmmp":
        kwargs.update(g=args.g, correlation=corr)
    res = run_solver(args.solver, inst, **kwargs)
    exact = res.support == inst.support
    err = float(np.sum((res.x_hat - inst.x_true) ** 2))
    print(f"solver: {args.solver}")
    print(f"support_hat: {list(res.support)}")
    print(f"residual_norm: {res.residual_norm!r}")
    print(f"squared_error: {err!r}")
    print(f"exact_recovery: {str(exact).lower()}")
    print(f"wall_time_s: {res.wall_time:.6f}")
    payload = {
        "solver": args.solver,
        "support_hat": list(res.support),
        "x_hat": res.x_hat.tolist(),
        "residual_norm": res.residual_norm,
        "chosen_candidate": res.chosen_candidate,
        "iterations": res.iterations,
        "exact_recovery": exact,
        "squared_error": err,
        "wall_time": res.wall_time,
        "config": resolved.to_dict(),
    }
    out.write_text(json.dumps(payload, indent=1) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    seed = _default_seed() if args.seed is None else args.seed
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.scale <= 0:
        raise UsageError("--scale must be positive")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.g < 1:
        raise UsageError("--g must be >= 1")
    cfg = bench.preset(args.preset, scale=args.scale, trials=args.trials, seed_base=seed, g=args.g)
    if args.solvers:
        unknown = [s for s in args.solvers if s not in SOLVERS]
        if unknown:
            raise UsageError(f"unknown solvers {unknown}; choose from {sorted(SOLVERS)}")
        cfg = bench.ExperimentConfig(cfg.experiment, cfg.grid, cfg.trials, tuple(args.solvers), cfg.seed_base, cfg.prior, cfg.g, cfg.x_axis, cfg.metric)
    out_dir = Path(args.out_dir or f"bench-{args.preset}")
    ext = args.format
    paths = {"records": out_dir / f"records.{ext}", "summary": out_dir / f"summary.{ext}", "plot": out_dir / "plot.dat"}
    _check_new(paths.values(), args.overwrite)
    _echo({"command": "bench", "preset": args.preset, "scale": args.scale, "jobs": args.jobs, "format": ext,
           "timing": args.timing, "out_dir": str(out_dir), **cfg.to_dict()})
    run = bench.run_experiment(cfg, jobs=args.jobs)
    summaries = bench.aggregate(run.records)
    out_dir.mkdir(parents=True, exist_ok=True)
    bench.write_records(paths["records"], run.records, ext, overwrite=True, timing=args.timing)
    bench.write_summaries(paths["summary"], summaries, ext, overwrite=True, timing=args.timing)
    bench.emit_plot_data(summaries, cfg.x_axis, cfg.metric, list(cfg.solvers), bench.skipped_cells(run, cfg.x_axis), paths["plot"], overwrite=True)
    for s in summaries:
        snr = "noiseless" if math.isinf(s.snr_db) else f"{s.snr_db:g}dB"
        print(f"{s.solver:>12} m={s.m} n={s.n} k={s.k} {snr}: rate={s.recovery_rate:.3f}±{s.recovery_rate_ci95:.3f} mse={s.mse:.4g}")
    print(f"records: {len(run.records)}, skipped: {len(run.skipped)}")
    for p in paths.values():
        print(f"wrote {p}")
    return EXIT_OK


def cmd_image(args) -> int:
    seed = _default_seed() if args.seed is None else args.seed
    unknown = [s for s in args.solvers if s not in SOLVERS]
    if unknown:
        raise UsageError(f"unknown solvers {unknown}")
    if args.g < 1:
        raise UsageError("--g must be >= 1")
    out_dir = Path(args.out_dir or Path(args.input).stem + "-recon")
    table_path = out_dir / "psnr.tsv"
    img_paths = {name: out_dir / f"{name}.pgm" for name in args.solvers}
    _check_new([table_path, *img_paths.values()], args.overwrite)
    img = read_pgm(args.input)
    _echo({"command": "image", "input": args.input, "m": args.m, "snr_db": args.snr, "solvers": args.solvers,
           "g": args.g, "seed": seed, "out_dir": str(out_dir), "shape": list(img.shape)})
    result = image_demo(img, args.m, args.snr, args.solvers, seed=seed, g=args.g)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rec in result.reconstructions:
        write_pgm(img_paths[rec.solver], to_display(rec.pixels))
    table_path.write_text(result.table())
    print(f"k={result.k} m={result.m} n={result.n} snr={result.snr_db:g}dB")
    sys.stdout.write(result.table())
    for name, reason in result.skipped:
        print(f"skipped {name}: {reason}")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    _check_new([args.out], args.overwrite)
    _echo({"command": "plot-data", "summary": args.summary, "x": args.x_axis, "metric": args.metric,
           "solvers": args.solvers, "out": args.out})
    summaries = bench.read_summaries(args.summary)
    solvers = args.solvers or list(dict.fromkeys(s.solver for s in summaries))
    skipped = bench.infeasible_cells(summaries, args.x_axis, solvers)
    bench.emit_plot_data(summaries, args.x_axis, args.metric, solvers, skipped, path=args.out, overwrite=True)
    print(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "bench": cmd_bench, "image": cmd_image, "plot-data": cmd_plot_data}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InstanceFormatError, PgmFormatError, DenseImageError, InfeasibleSizeError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
