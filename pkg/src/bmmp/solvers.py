"""Greedy sparse recovery: BMMP and the matching-pursuit baselines."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .detector import CorrelationKind, score_indices, select_top
from .linalg import OrthoBasis, least_squares
from .problem import ProblemInstance, SignalPrior, default_epsilon
from .sbl import Mode, estimate_on_support

MAX_OUTER = 100
MAX_PURSUIT_ITER = 100


class InfeasibleSizeError(ValueError):
    """The solver's extended support would not fit in ``m`` measurements."""


@dataclass(frozen=True)
class SolverConfig:
    """BMMP inputs. ``None`` fields are filled from the problem by :meth:`resolve`."""

    k: int | None = None
    g: int = 4
    epsilon: float | None = None
    lam: float | None = None
    mode: Mode | None = None
    correlation: CorrelationKind = CorrelationKind.RA_ORMP
    prior: SignalPrior | None = None
    sigma: float | None = None
    sigma_w: float | None = None
    max_extended_size: int | None = None
    replace_size: int | None = None
    gomp_t: int = 2
    early_exit: bool = True
    record_growth: bool = False

    def resolve(self, problem: ProblemInstance) -> "SolverConfig":
        m = problem.m
        k = problem.k if self.k is None else self.k
        mode = self.mode or (Mode.NOISELESS if problem.noiseless else Mode.NOISY)
        eps = default_epsilon(problem.y, problem.snr_db) if self.epsilon is None else self.epsilon
        cfg = replace(
            self,
            k=k,
            epsilon=eps,
            lam=eps**2 / m if self.lam is None else self.lam,
            mode=mode,
            prior=self.prior or problem.prior,
            sigma=problem.model.sigma if self.sigma is None else self.sigma,
            sigma_w=problem.model.sigma_w if self.sigma_w is None else self.sigma_w,
            max_extended_size=m if self.max_extended_size is None else self.max_extended_size,
            replace_size=k // 2 if self.replace_size is None else self.replace_size,
        )
        cfg.validate(m)
        return cfg

    def validate(self, m: int) -> None:
        if self.k is None or not 0 <= self.k < m:
            raise ValueError(f"need 0 <= k < m, got k={self.k}, m={m}")
        if self.g < 1:
            raise ValueError(f"g must be >= 1, got {self.g}")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.replace_size is not None and not 0 <= self.replace_size <= self.k:
            raise ValueError(f"replace_size must lie in [0, k], got {self.replace_size}")
        if self.max_extended_size is not None and not 1 <= self.max_extended_size <= m:
            raise ValueError(f"max_extended_size must lie in [1, m], got {self.max_extended_size}")
        if self.gomp_t < 1:
            raise ValueError("gomp_t must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value if self.mode else None
        d["correlation"] = self.correlation.value
        d["prior"] = None if self.prior is None else {"a": self.prior.a, "b": self.prior.b}
        return d


@dataclass
class CandidateTrace:
    t: int
    extended_sets: list[tuple[int, ...]] = field(default_factory=list)
    extended_residuals: list[float] = field(default_factory=list)
    temp_supports: list[tuple[int, ...]] = field(default_factory=list)
    residual_norms: list[float] = field(default_factory=list)
    final_support: tuple[int, ...] = ()
    final_residual: float = math.inf
    # (support, residual norm) after every batch when record_growth is set
    growth: list[tuple[tuple[int, ...], float]] = field(default_factory=list)


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    support: tuple[int, ...]
    residual_norm: float
    solver: str = ""
    chosen_candidate: int = 0
    traces: list[CandidateTrace] = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0


def _support_residual(phi, y, support) -> float:
    if len(support) == 0:
        return float(np.linalg.norm(y))
    return OrthoBasis.from_columns(phi, support).residual(y)[1]


def _top_by_magnitude(indices, values, count: int) -> list[int]:
    indices = np.asarray(indices)
    order = np.lexsort((indices, -np.abs(values)))
    return [int(i) for i in indices[order[:count]]]


def reconstruct_signal(problem: ProblemInstance, support) -> np.ndarray:
    """Least-squares signal on ``support``, zero elsewhere."""
    x = np.zeros(problem.n)
    support = sorted(int(i) for i in support)
    if support:
        x[support] = least_squares(problem.phi[:, support], problem.y)
    return x


def _finish(problem, support, name, start, **kw) -> RecoveryResult:
    support = tuple(sorted(int(i) for i in support))
    x = reconstruct_signal(problem, support)
    res = _support_residual(problem.phi, problem.y, support)
    return RecoveryResult(x, support, res, solver=name, wall_time=time.perf_counter() - start, **kw)


def _grow(problem, cfg: SolverConfig, basis: OrthoBasis, t: int, cap: int, trace: CandidateTrace | None):
    """Add batches of ``t`` best-scoring indices until ``|basis| = cap`` or the residual hits epsilon."""
    phi, y = problem.phi, problem.y
    steps = 0
    rnorm = basis.residual(y)[1]
    rejected: set[int] = set()
    while len(basis) < cap and rnorm > cfg.epsilon:
        scores = score_indices(phi, y, basis, cfg.correlation, cfg.prior, cfg.sigma, cfg.sigma_w)
        if rejected:
            scores.theta[np.isin(scores.index, list(rejected))] = -np.inf
        batch = select_top(scores, min(t, cap - len(basis)))
        if not batch:
            break
        for q in batch:
            if not basis.extend(q, phi[:, q]):
                rejected.add(q)
        steps += 1
        rnorm = basis.residual(y)[1]
        if trace is not None and cfg.record_growth:
            trace.growth.append((tuple(basis.indices), rnorm))
    return rnorm, steps


def bmmp(problem: ProblemInstance, config: SolverConfig | None = None, name: str = "bmmp") -> RecoveryResult:
    """Bayesian multiple matching pursuit.

    Candidate ``t`` grows an extended support in batches of ``t`` indices
    ranked by the likelihood-ratio score, keeps the ``k`` largest
    coefficients of a fit on it, reseeds with the top ``replace_size`` and
    repeats while the candidate's residual strictly drops. The candidate
    with the smallest residual wins.
    """
    start = time.perf_counter()
    cfg = (config or SolverConfig()).resolve(problem)
    phi, y = problem.phi, problem.y
    k, eps = cfg.k, cfg.epsilon
    cap = cfg.max_extended_size
    traces: list[CandidateTrace] = []
    iterations = 0

    for t in range(1, cfg.g + 1):
        trace = CandidateTrace(t)
        delta: list[int] = []
        best_support: tuple[int, ...] = ()
        best_res = math.inf
        for _ in range(MAX_OUTER):
            basis = OrthoBasis.from_columns(phi, delta)
            rnorm, steps = _grow(problem, cfg, basis, t, cap, trace)
            iterations += steps
            delta = list(basis.indices)
            trace.extended_sets.append(tuple(sorted(delta)))
            trace.extended_residuals.append(rnorm)
            if delta:
                est = estimate_on_support(phi[:, delta], y, cfg.mode, delta, lam=cfg.lam)
                omega = tuple(sorted(_top_by_magnitude(delta, est.coefficients, k)))
                delta = _top_by_magnitude(delta, est.coefficients, cfg.replace_size)
            else:
                omega = ()
            res = _support_residual(phi, y, omega)
            trace.temp_supports.append(omega)
            if not res < best_res:
                break
            trace.residual_norms.append(res)
            best_support, best_res = omega, res
        trace.final_support, trace.final_residual = best_support, best_res
        traces.append(trace)
        if cfg.early_exit and best_res <= eps:
            break

    p = int(np.argmin([tr.final_residual for tr in traces]))
    return _finish(problem, traces[p].final_support, name, start, chosen_candidate=p + 1, traces=traces, iterations=iterations)


# -- baselines ----------------------------------------------------------------

RAW = "raw"
MAP_H = "map_h"
MAP_G = "map_g"
_SELECTOR_KIND = {MAP_H: CorrelationKind.NORMALIZED_OMP, MAP_G: CorrelationKind.RA_ORMP}


def _baseline_config(problem, k, epsilon, selector, mode=None) -> SolverConfig:
    if selector not in (RAW, MAP_H, MAP_G):
        raise ValueError(f"unknown selector {selector!r}")
    corr = _SELECTOR_KIND.get(selector, CorrelationKind.RA_ORMP)
    return SolverConfig(k=k, epsilon=epsilon, correlation=corr, mode=mode).resolve(problem)


def _pick(problem, cfg, basis: OrthoBasis, count: int, selector: str, exclude=()) -> list[int]:
    """The ``count`` best indices outside ``basis`` under ``selector``."""
    phi, y = problem.phi, problem.y
    if selector == RAW:
        mask = np.ones(phi.shape[1], dtype=bool)
        mask[basis.indices] = False
        mask[list(exclude)] = False
        idx = np.flatnonzero(mask)
        r = basis.residual(y)[0]
        return _top_by_magnitude(idx, r @ phi[:, idx], count)
    scores = score_indices(phi, y, basis, cfg.correlation, cfg.prior, cfg.sigma, cfg.sigma_w)
    if exclude:
        scores.theta[np.isin(scores.index, list(exclude))] = -np.inf
    return select_top(scores, count)


def gomp(problem: ProblemInstance, k: int | None = None, t: int = 2, selector: str = RAW, epsilon: float | None = None, name: str | None = None) -> RecoveryResult:
    """Generalized OMP: ``t`` indices per step up to ``t * min(k, m // t)`` indices."""
    start = time.perf_counter()
    cfg = _baseline_config(problem, k, epsilon, selector)
    k = cfg.k
    if t < 1 or (t > 1 and t >= k):
        raise ValueError(f"gOMP needs 1 <= t < k (or t = 1), got t={t}, k={k}")
    phi, y = problem.phi, problem.y
    cap = t * min(k, problem.m // t)
    basis = OrthoBasis(problem.m)
    rejected: set[int] = set()
    iterations = 0
    rnorm = basis.residual(y)[1]
    while len(basis) < cap and rnorm > cfg.epsilon:
        batch = _pick(problem, cfg, basis, min(t, cap - len(basis)), selector, rejected)
        if not batch:
            break
        for q in batch:
            if not basis.extend(q, phi[:, q]):
                rejected.add(q)
        iterations += 1
        rnorm = basis.residual(y)[1]
    support = list(basis.indices)
    if len(support) > k:
        support = _top_by_magnitude(support, basis.solve(y), k)
    default = "omp" if t == 1 and selector == RAW else f"gomp[{selector},t={t}]"
    return _finish(problem, support, name or default, start, iterations=iterations)


def omp(problem: ProblemInstance, k: int | None = None, epsilon: float | None = None, name: str = "omp") -> RecoveryResult:
    """Orthogonal matching pursuit on raw correlations."""
    return gomp(problem, k, t=1, selector=RAW, epsilon=epsilon, name=name)


def _pursuit(problem, k, extra_factor, selector, epsilon, name, start) -> RecoveryResult:
    cfg = _baseline_config(problem, k, epsilon, selector)
    k = cfg.k
    extra = extra_factor * k
    if k + extra > problem.m:
        raise InfeasibleSizeError(f"{name} needs {k + extra} <= m = {problem.m}")
    phi, y = problem.phi, problem.y
    if k == 0:
        return _finish(problem, (), name, start)
    support = sorted(_pick(problem, cfg, OrthoBasis(problem.m), k, selector))
    res = _support_residual(phi, y, support)
    iterations = 1
    while iterations < MAX_PURSUIT_ITER and res > cfg.epsilon:
        basis = OrthoBasis.from_columns(phi, support)
        merged = sorted(set(support) | set(_pick(problem, cfg, basis, extra, selector)))
        est = estimate_on_support(phi[:, merged], y, cfg.mode, merged, lam=cfg.lam)
        new_support = sorted(_top_by_magnitude(merged, est.coefficients, k))
        new_res = _support_residual(phi, y, new_support)
        iterations += 1
        if not new_res < res:
            break
        support, res = new_support, new_res
    return _finish(problem, support, name, start, iterations=iterations)


def sp(problem: ProblemInstance, k: int | None = None, selector: str = RAW, epsilon: float | None = None, name: str | None = None) -> RecoveryResult:
    """Subspace pursuit: ``k`` new candidates per iteration, extended size ``2k``."""
    return _pursuit(problem, k, 1, selector, epsilon, name or f"sp[{selector}]", time.perf_counter())


def cosamp(problem: ProblemInstance, k: int | None = None, selector: str = RAW, epsilon: float | None = None, name: str | None = None) -> RecoveryResult:
    """CoSaMP: ``2k`` new candidates per iteration, extended size ``3k``."""
    return _pursuit(problem, k, 2, selector, epsilon, name or f"cosamp[{selector}]", time.perf_counter())


# -- registry -----------------------------------------------------------------

def _bmmp_variant(**overrides):
    def run(problem, k=None, g=4, epsilon=None, correlation=CorrelationKind.RA_ORMP, name="bmmp"):
        cfg = SolverConfig(k=k, g=g, epsilon=epsilon, correlation=correlation)
        cfg = replace(cfg, **overrides)
        if "max_extended_size" in overrides and overrides["max_extended_size"] == "k":
            cfg = replace(cfg, max_extended_size=cfg.k if cfg.k is not None else problem.k)
        return bmmp(problem, cfg, name=name)

    return run


SOLVERS = {
    "bmmp": _bmmp_variant(),
    # ablations: no subset replacement, then single candidate, then extended size k
    "bmmp-u": _bmmp_variant(replace_size=0),
    "bmmp-um": _bmmp_variant(replace_size=0, g=1),
    "bmmp-ume": _bmmp_variant(replace_size=0, g=1, max_extended_size="k"),
    "omp": lambda p, k=None, epsilon=None, name="omp", **_: omp(p, k, epsilon, name=name),
    "gomp": lambda p, k=None, epsilon=None, name="gomp", **_: gomp(p, k, 2, RAW, epsilon, name=name),
    "sp": lambda p, k=None, epsilon=None, name="sp", **_: sp(p, k, RAW, epsilon, name=name),
    "cosamp": lambda p, k=None, epsilon=None, name="cosamp", **_: cosamp(p, k, RAW, epsilon, name=name),
    "map-omp": lambda p, k=None, epsilon=None, name="map-omp", **_: gomp(p, k, 1, MAP_H, epsilon, name=name),
    "map-gomp": lambda p, k=None, epsilon=None, name="map-gomp", **_: gomp(p, k, 2, MAP_H, epsilon, name=name),
    "map-gomp-g": lambda p, k=None, epsilon=None, name="map-gomp-g", **_: gomp(p, k, 2, MAP_G, epsilon, name=name),
    "map-sp": lambda p, k=None, epsilon=None, name="map-sp", **_: sp(p, k, MAP_H, epsilon, name=name),
    "map-cosamp": lambda p, k=None, epsilon=None, name="map-cosamp", **_: cosamp(p, k, MAP_H, epsilon, name=name),
}

CLI_SOLVERS = ("bmmp", "omp", "gomp", "sp", "cosamp", "map-omp", "map-gomp", "map-sp", "map-cosamp")


def required_measurements(name: str, k: int) -> int:
    """Smallest ``m`` for which ``name`` can run at sparsity ``k``."""
    if name.endswith("cosamp"):
        return 3 * k
    if name.endswith("sp"):
        return 2 * k
    return k + 1


def run_solver(name: str, problem: ProblemInstance, **kwargs) -> RecoveryResult:
    try:
        fn = SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
    kwargs.setdefault("name", name)
    return fn(problem, **kwargs)
