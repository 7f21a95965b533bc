"""Likelihood-ratio scoring of candidate support indices.

A candidate column is scored by its correlation ``z`` with the current
residual and the log-likelihood ratio of ``z`` under "in the support"
versus "not in the support", both modelled as Gaussians whose moments
follow from the residual energy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, gammaln, log_ndtr

from .linalg import OrthoBasis
from .problem import SignalPrior

VAR_FLOOR = 1e-12
_LN2 = math.log(2.0)
_SQRT2 = math.sqrt(2.0)


class CorrelationKind(enum.Enum):
    # residual against the normalized complement of the column (rank-aware ORMP)
    RA_ORMP = "ra-ormp"
    # residual against the plain normalized column
    NORMALIZED_OMP = "normalized-omp"


@dataclass(frozen=True)
class HypothesisStats:
    psi: float
    tau: float
    var0: float
    var1: float
    d: int
    m: int


@dataclass
class IndexScores:
    """Scores for every index outside the current support, in ascending index order."""

    index: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    degenerate: np.ndarray

    def __len__(self) -> int:
        return len(self.index)


def residual_sparsity(residual_norm: float, m: int, d: int, sigma: float, v_x: float, sigma_w: float) -> float:
    """Estimate of how many true support indices the residual still carries."""
    if d >= m:
        raise ValueError(f"need d < m, got d={d}, m={m}")
    excess = max(residual_norm**2 / (m - d) - sigma_w**2, 0.0)
    return excess / (sigma**2 * v_x**2)


def chi_mean_tau(m: int, d: int) -> float:
    """Mean of a chi variable with ``m - d`` degrees of freedom."""
    if d >= m:
        raise ValueError(f"need d < m, got d={d}, m={m}")
    dof = m - d
    return math.exp(0.5 * _LN2 + gammaln((dof + 1) / 2.0) - gammaln(dof / 2.0))


def hypothesis_stats(residual_norm: float, m: int, d: int, sigma: float, v_x: float, sigma_w: float) -> HypothesisStats:
    psi = residual_sparsity(residual_norm, m, d, sigma, v_x, sigma_w)
    scale = sigma**2 * v_x**2
    floor = VAR_FLOOR * scale
    var0 = max(psi * scale + sigma_w**2, floor)
    var1 = max((psi - 1.0) * scale + sigma_w**2, floor)
    return HypothesisStats(psi, chi_mean_tau(m, d), var0, var1, d, m)


def correlation(basis: OrthoBasis, phi_col, residual, kind: CorrelationKind) -> float | None:
    """Correlation of ``residual`` with one column; ``None`` when degenerate."""
    phi_col = np.asarray(phi_col, dtype=float)
    residual = np.asarray(residual, dtype=float)
    if residual.shape != phi_col.shape:
        raise ValueError(f"dimension mismatch: {phi_col.shape} vs {residual.shape}")
    if kind is CorrelationKind.RA_ORMP:
        u = basis.normalized_complement(phi_col)
        if u is None:
            return None
        return float(residual @ u)
    nrm = np.linalg.norm(phi_col)
    if nrm == 0.0:
        return None
    return float(residual @ phi_col) / nrm


def _log_erfc(x):
    # erfc(x) = 2 * Phi(-x * sqrt(2)); log_ndtr stays accurate deep in the tail
    return _LN2 + log_ndtr(-np.asarray(x, dtype=float) * _SQRT2)


def log_erf_diff(lo, hi):
    """``log(erf(hi) - erf(lo))`` for ``lo < hi`` without cancellation or underflow."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lo, hi = np.broadcast_arrays(lo, hi)
    out = np.empty(lo.shape)

    # both in the right tail: erf(hi) - erf(lo) = erfc(lo) - erfc(hi)
    right = lo >= 0
    # both in the left tail: reflect
    left = hi <= 0
    mid = ~(right | left)

    def tail(a, b):
        la, lb = _log_erfc(a), _log_erfc(b)
        return la + np.log(-np.expm1(lb - la))

    if right.any():
        out[right] = tail(lo[right], hi[right])
    if left.any():
        out[left] = tail(-hi[left], -lo[left])
    if mid.any():
        out[mid] = np.log(erf(hi[mid]) + erf(-lo[mid]))
    return out if out.ndim else float(out)


def log_likelihood_uniform(z, stats: HypothesisStats, sigma: float, a: float, b: float, normalized: bool = False):
    """Log-likelihood ratio score for a uniform(a, b) prior on the nonzeros.

    With ``normalized=False`` this is the ranking score, which omits terms
    that do not depend on ``z``. ``normalized=True`` adds them back, giving
    the exact log ratio of the two Gaussian-approximated likelihoods.
    """
    z = np.asarray(z, dtype=float)
    s0 = math.sqrt(stats.var0)
    s1 = math.sqrt(stats.var1)
    mean_scale = sigma * stats.tau
    hi = (mean_scale * b - z) / (s1 * _SQRT2)
    lo = (mean_scale * a - z) / (s1 * _SQRT2)
    theta = z**2 / (2.0 * stats.var0) + log_erf_diff(lo, hi)
    if normalized:
        theta = theta + math.log(s0 * math.sqrt(2.0 * math.pi) / (2.0 * mean_scale * (b - a)))
    return theta if np.ndim(theta) else float(theta)


def correlations(phi: np.ndarray, y: np.ndarray, basis: OrthoBasis, kind: CorrelationKind):
    """Vectorized correlations for all columns not in ``basis``.

    Returns ``(index, z, degenerate, residual_norm)``.
    """
    n = phi.shape[1]
    mask = np.ones(n, dtype=bool)
    mask[basis.indices] = False
    index = np.flatnonzero(mask)
    cols = phi[:, index]
    r, rnorm = basis.residual(y)
    norms = np.linalg.norm(cols, axis=0)
    if kind is CorrelationKind.RA_ORMP:
        comp = basis.project_complement(cols)
        cnorm = np.linalg.norm(comp, axis=0)
        degenerate = (cnorm <= basis.rank_tol * norms) | (cnorm == 0.0)
        safe = np.where(degenerate, 1.0, cnorm)
        z = (r @ comp) / safe
    else:
        degenerate = norms == 0.0
        z = (r @ cols) / np.where(degenerate, 1.0, norms)
    z = np.where(degenerate, 0.0, z)
    return index, z, degenerate, rnorm


def score_indices(
    phi: np.ndarray,
    y: np.ndarray,
    basis: OrthoBasis,
    kind: CorrelationKind,
    prior: SignalPrior,
    sigma: float,
    sigma_w: float,
    stats: HypothesisStats | None = None,
) -> IndexScores:
    """Score every index outside ``basis`` by the log-likelihood ratio."""
    index, z, degenerate, rnorm = correlations(phi, y, basis, kind)
    m = phi.shape[0]
    if stats is None:
        stats = hypothesis_stats(rnorm, m, len(basis), sigma, prior.v_x, sigma_w)
    theta = np.asarray(log_likelihood_uniform(z, stats, sigma, prior.a, prior.b), dtype=float)
    theta = np.where(degenerate | np.isnan(theta), -np.inf, theta)
    return IndexScores(index, z, theta, degenerate)


def select_top(scores: IndexScores, v: int) -> list[int]:
    """Indices of the ``v`` largest non-degenerate scores; ties go to the smaller index."""
    if v <= 0:
        return []
    ok = ~scores.degenerate & (scores.theta > -np.inf)
    idx = scores.index[ok]
    th = scores.theta[ok]
    order = np.lexsort((idx, -th))
    return [int(i) for i in idx[order[:v]]]
