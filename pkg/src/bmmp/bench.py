"""Monte Carlo experiment driver, aggregation and output files.

Noiseless grid points carry ``snr_db = inf``. Every (grid point, trial) pair
draws its instance from a seed derived by hashing ``seed_base`` together with
the point and the trial index, so any single point can be rerun on its own
and the result does not depend on ``jobs``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .problem import SignalPrior, make_instance
from .solvers import InfeasibleSizeError, required_measurements, run_solver

EXPERIMENTS = ("phase_transition", "mse_vs_snr", "ablation", "detector_compare", "image_demo")
WILSON_Z = 1.959963984540054


@dataclass(frozen=True)
class GridPoint:
    m: int
    n: int
    k: int
    snr_db: float = math.inf

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.snr_db)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    grid: tuple[GridPoint, ...]
    trials: int
    solvers: tuple[str, ...]
    seed_base: int = 0
    prior: SignalPrior = field(default_factory=SignalPrior)
    g: int = 4
    x_axis: str = "k"
    metric: str = "recovery_rate"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not self.grid:
            raise ValueError("empty grid")
        if not self.solvers:
            raise ValueError("no solvers")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = [_point_dict(p) for p in self.grid]
        d["solvers"] = list(self.solvers)
        return d


def _point_dict(p: GridPoint) -> dict:
    return {"m": p.m, "n": p.n, "k": p.k, "snr_db": "noiseless" if p.noiseless else p.snr_db}


def make_grid(ms, ks, snrs=(math.inf,), n_ratio: float = 2.0) -> tuple[GridPoint, ...]:
    """Cartesian grid with ``n = round(n_ratio * m)``."""
    return tuple(GridPoint(m, int(round(n_ratio * m)), k, s) for m in ms for s in snrs for k in ks)


@dataclass
class TrialRecord:
    experiment: str
    solver: str
    m: int
    n: int
    k: int
    snr_db: float
    trial: int
    seed: int
    exact_support_recovery: bool
    squared_error: float
    signal_energy: float
    iterations: int
    wall_time: float = 0.0


@dataclass
class SkippedPoint:
    solver: str
    m: int
    n: int
    k: int
    snr_db: float
    trial: int
    reason: str


@dataclass
class MetricsSummary:
    solver: str
    m: int
    n: int
    k: int
    snr_db: float
    trial_count: int
    successes: int
    recovery_rate: float
    recovery_rate_ci95: float
    mse: float
    median_squared_error: float
    mean_time: float = 0.0


@dataclass
class ExperimentRun:
    records: list[TrialRecord]
    skipped: list[SkippedPoint]


def trial_seed(seed_base: int, point: GridPoint, trial: int) -> int:
    snr_code = -1 if point.noiseless else int(round(point.snr_db * 1000))
    # SeedSequence wants nonnegative words
    words = [int(seed_base) & 0xFFFFFFFF, point.m, point.n, point.k, snr_code & 0xFFFFFFFF, trial]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint32)[0])


def _run_task(task):
    experiment, point, trial, seed, solvers, prior, g = task
    snr = None if point.noiseless else point.snr_db
    inst = make_instance(point.m, point.n, point.k, prior=prior, snr_db=snr, seed=seed)
    energy = float(inst.x_true @ inst.x_true)
    records, skipped = [], []
    for name in solvers:
        if required_measurements(name, point.k) > point.m:
            skipped.append(SkippedPoint(name, point.m, point.n, point.k, point.snr_db, trial, "infeasible size"))
            continue
        kwargs = {"g": g} if name.startswith("bmmp") else {}
        try:
            res = run_solver(name, inst, **kwargs)
        except (InfeasibleSizeError, ValueError) as exc:
            skipped.append(SkippedPoint(name, point.m, point.n, point.k, point.snr_db, trial, str(exc)))
            continue
        err = res.x_hat - inst.x_true
        records.append(TrialRecord(
            experiment, name, point.m, point.n, point.k, point.snr_db, trial, seed,
            res.support == inst.support, float(err @ err), energy, res.iterations, res.wall_time,
        ))
    return records, skipped


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentRun:
    tasks = [
        (config.experiment, p, t, trial_seed(config.seed_base, p, t), config.solvers, config.prior, config.g)
        for p in config.grid
        for t in range(config.trials)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_run_task(t) for t in tasks]
    records = [r for rs, _ in results for r in rs]
    skipped = [s for _, ss in results for s in ss]
    return ExperimentRun(records, skipped)


def wilson_half_width(successes: int, trials: int, z: float = WILSON_Z) -> float:
    if trials == 0:
        return math.nan
    p = successes / trials
    denom = 1.0 + z * z / trials
    return z / denom * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))


def _group_key(r) -> tuple:
    return (r.solver, r.m, r.n, r.k, r.snr_db)


def aggregate(records) -> list[MetricsSummary]:
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        groups.setdefault(_group_key(r), []).append(r)
    out = []
    for key in sorted(groups):
        rs = sorted(groups[key], key=lambda r: (r.trial, r.seed))
        succ = sum(1 for r in rs if r.exact_support_recovery)
        errs = [r.squared_error for r in rs]
        out.append(MetricsSummary(
            *key,
            trial_count=len(rs),
            successes=succ,
            recovery_rate=succ / len(rs),
            recovery_rate_ci95=wilson_half_width(succ, len(rs)),
            mse=math.fsum(errs) / len(rs),
            median_squared_error=float(np.median(errs)),
            mean_time=math.fsum(r.wall_time for r in rs) / len(rs),
        ))
    return out


# -- files ---------------------------------------------------------------------

_TIMING_FIELDS = {"wall_time", "mean_time"}


def _columns(cls, timing: bool) -> list[str]:
    return [f.name for f in fields(cls) if timing or f.name not in _TIMING_FIELDS]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(value: str, typ):
    if typ in (bool, "bool"):
        if value not in ("true", "false"):
            raise ValueError(f"bad boolean {value!r}")
        return value == "true"
    if typ in (int, "int"):
        return int(value)
    if typ in (float, "float"):
        return float(value)
    return value


def _open_for_write(path: Path, overwrite: bool):
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path}: already exists (pass overwrite=True to replace it)")
    try:
        return path.open("w", newline="")
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc


def _write_rows(path, rows, cls, fmt: str, overwrite: bool, timing: bool) -> None:
    path = Path(path)
    cols = _columns(cls, timing)
    if fmt == "csv":
        with _open_for_write(path, overwrite) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(getattr(r, c)) for c in cols])
    elif fmt == "json":
        with _open_for_write(path, overwrite) as fh:
            json.dump([{c: getattr(r, c) for c in cols} for r in rows], fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _read_rows(path, cls, fmt: str | None = None):
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    types = {f.name: f.type for f in fields(cls)}
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc
    if fmt == "json":
        return [cls(**row) for row in json.loads(text)]
    reader = csv.DictReader(io.StringIO(text))
    unknown = set(reader.fieldnames or ()) - set(types)
    if unknown:
        raise ValueError(f"{path}: unexpected columns {sorted(unknown)}")
    return [cls(**{k: _parse(v, types[k]) for k, v in row.items()}) for row in reader]


def write_records(path, records, fmt: str = "csv", overwrite: bool = False, timing: bool = False) -> None:
    """Write trial records. Timing columns are opt-in so default output is reproducible byte for byte."""
    _write_rows(path, records, TrialRecord, fmt, overwrite, timing)


def write_summaries(path, summaries, fmt: str = "csv", overwrite: bool = False, timing: bool = False) -> None:
    _write_rows(path, summaries, MetricsSummary, fmt, overwrite, timing)


def read_records(path, fmt: str | None = None) -> list[TrialRecord]:
    return _read_rows(path, TrialRecord, fmt)


def read_summaries(path, fmt: str | None = None) -> list[MetricsSummary]:
    return _read_rows(path, MetricsSummary, fmt)


_X_FIELDS = {"k": "k", "m": "m", "n": "n", "snr": "snr_db", "snr_db": "snr_db"}


def emit_plot_data(summaries, x_axis: str, metric: str = "recovery_rate", solvers=None, skipped=(), path=None, overwrite: bool = False) -> str:
    """Whitespace-delimited table: one row per x value, one column per solver.

    ``skipped`` holds ``(solver, x)`` pairs that become ``nan``; any other
    missing cell is an error.
    """
    if x_axis not in _X_FIELDS:
        raise ValueError(f"unknown x axis {x_axis!r}")
    xf = _X_FIELDS[x_axis]
    if solvers is None:
        solvers = list(dict.fromkeys(s.solver for s in summaries))
    cells: dict[tuple, float] = {}
    for s in summaries:
        key = (s.solver, getattr(s, xf))
        if key in cells:
            raise ValueError(f"several summaries for solver {s.solver} at {x_axis}={key[1]}")
        cells[key] = getattr(s, metric)
    skipped = {(s, float(x)) for s, x in skipped}
    xs = sorted({x for _, x in cells} | {x for _, x in skipped})
    missing = [
        (sv, x) for x in xs for sv in solvers if (sv, x) not in cells and (sv, float(x)) not in skipped
    ]
    if missing:
        listing = ", ".join(f"{sv}@{x_axis}={x}" for sv, x in missing)
        raise ValueError(f"inconsistent grid, missing points: {listing}")
    lines = ["# " + " ".join([x_axis, *solvers])]
    for x in xs:
        row = [_fmt(x)] + [_fmt(float(cells.get((sv, x), math.nan))) for sv in solvers]
        lines.append(" ".join(row))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with _open_for_write(Path(path), overwrite) as fh:
            fh.write(text)
    return text


def skipped_cells(run: ExperimentRun, x_axis: str) -> set[tuple[str, float]]:
    """``(solver, x)`` cells with no record at all, for :func:`emit_plot_data`."""
    xf = _X_FIELDS[x_axis]
    done = {(r.solver, getattr(r, xf)) for r in run.records}
    return {(s.solver, float(getattr(s, xf))) for s in run.skipped if (s.solver, getattr(s, xf)) not in done}


def infeasible_cells(summaries, x_axis: str, solvers) -> set[tuple[str, float]]:
    """``(solver, x)`` cells a solver's size rule rules out at the grid points seen in ``summaries``."""
    xf = _X_FIELDS[x_axis]
    points = {(getattr(s, xf), s.m, s.k) for s in summaries}
    return {
        (name, float(x)) for x, m, k in points for name in solvers if required_measurements(name, k) > m
    }


# -- presets -------------------------------------------------------------------

def _scaled(v: int, scale: float, lo: int = 1) -> int:
    return max(lo, int(round(v * scale)))


def preset(name: str, scale: float = 1.0, trials: int = 100, seed_base: int = 0, g: int = 4) -> ExperimentConfig:
    """Named experiment grids; ``scale`` shrinks m, n and k together."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    m, n = _scaled(128, scale, 4), _scaled(256, scale, 8)
    ks = sorted({_scaled(k, scale) for k in range(36, 65, 4)})
    if name == "fig2a":
        return ExperimentConfig(
            "phase_transition", tuple(GridPoint(m, n, k) for k in ks if k < m), trials,
            ("bmmp", "map-gomp", "map-sp", "map-cosamp", "map-omp", "omp"), seed_base, SignalPrior(0, 1), g, "k",
        )
    if name == "fig2c":
        k = _scaled(60, scale)
        return ExperimentConfig(
            "mse_vs_snr", tuple(GridPoint(m, n, k, float(s)) for s in (20, 25, 30, 35, 40)), trials,
            ("bmmp", "map-gomp", "map-sp", "map-cosamp", "map-omp"), seed_base, SignalPrior(0.1, 1), g, "snr", "mse",
        )
    if name == "fig2d":
        return ExperimentConfig(
            "ablation", tuple(GridPoint(m, n, k) for k in ks if k < m), trials,
            ("bmmp", "bmmp-u", "bmmp-um", "bmmp-ume"), seed_base, SignalPrior(0, 1), g, "k",
        )
    if name == "fig3":
        ms = sorted({_scaled(mm, scale, 4) for mm in range(32, 257, 32)})
        grid = tuple(GridPoint(mm, 2 * mm, int(mm / 1.8)) for mm in ms)
        return ExperimentConfig(
            "detector_compare", grid, trials, ("map-gomp", "map-gomp-g"), seed_base, SignalPrior(0, 1), g, "m",
        )
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")


PRESETS = ("fig2a", "fig2c", "fig2d", "fig3")
