"""Sparse Bayesian learning ridge regression on a fixed support.

The evidence cost is ``log|C| + y^T C^{-1} y`` with marginal covariance
``C = eta^2 I + Phi diag(gamma) Phi^T``. It is evaluated through the
``a x a`` matrix ``B = I + eta^{-2} G^{1/2} Phi^T Phi G^{1/2}`` (``G =
diag(gamma)``) using

    log|C|         = m log eta^2 + log|B|
    y^T C^{-1} y   = eta^{-2} ||y - Phi mu||^2 + mu^T G^{-1} mu

where ``mu`` is the posterior mean. Both quadratic terms are nonnegative, so
nothing cancels when ``eta`` is small.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .linalg import least_squares

GAMMA_FLOOR = 1e-12
ETA2_REL_FLOOR = 1e-12
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200
DESCENT_SLACK = 1e-9


class Mode(enum.Enum):
    NOISELESS = "noiseless"
    NOISY = "noisy"


class SblConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SblState:
    gamma: np.ndarray
    eta2: float
    objective: float
    iteration: int = 0
    converged: bool = False

    @property
    def eta(self) -> float:
        return math.sqrt(self.eta2)


@dataclass(frozen=True)
class RidgeEstimate:
    coefficients: np.ndarray
    support: tuple[int, ...]


def _check(gamma, eta2):
    if np.any(np.asarray(gamma) <= 0) or not eta2 > 0:
        raise ValueError("gamma and eta must be strictly positive")


def _posterior(phi_sub, y, gamma, eta2):
    """Posterior mean, posterior variances and ``log|B|``."""
    sg = np.sqrt(gamma)
    a = phi_sub.shape[1]
    scaled = phi_sub * sg  # Phi G^{1/2}
    b = np.eye(a) + (scaled.T @ scaled) / eta2
    cf = cho_factor(b, lower=True)
    logdet_b = 2.0 * np.sum(np.log(np.diag(cf[0])))
    # posterior covariance = G^{1/2} B^{-1} G^{1/2}
    binv = cho_solve(cf, np.eye(a))
    cov = binv * np.outer(sg, sg)
    mu = cov @ (phi_sub.T @ y) / eta2
    return mu, np.diag(cov).copy(), logdet_b


def _objective_from(phi_sub, y, gamma, eta2, mu, logdet_b):
    m = phi_sub.shape[0]
    resid = y - phi_sub @ mu
    quad = resid @ resid / eta2 + np.sum(mu**2 / gamma)
    return float(m * math.log(eta2) + logdet_b + quad)


def sbl_objective(phi_sub, y, gamma, eta) -> float:
    """Evidence cost for prior variances ``gamma`` and noise std ``eta``."""
    phi_sub = np.asarray(phi_sub, dtype=float)
    y = np.asarray(y, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    eta2 = float(eta) ** 2
    _check(gamma, eta2)
    mu, _, logdet_b = _posterior(phi_sub, y, gamma, eta2)
    return _objective_from(phi_sub, y, gamma, eta2, mu, logdet_b)


def initial_state(phi_sub, y, lam: float = 0.0) -> SblState:
    """Unit prior variances and ``eta^2 = max(lam, 1e-6 ||y||^2 / m)``."""
    phi_sub = np.asarray(phi_sub, dtype=float)
    y = np.asarray(y, dtype=float)
    m, a = phi_sub.shape
    eta2 = max(lam, 1e-6 * float(y @ y) / m, _eta2_floor(y))
    gamma = np.ones(a)
    return SblState(gamma, eta2, sbl_objective(phi_sub, y, gamma, math.sqrt(eta2)))


def _eta2_floor(y) -> float:
    return max(ETA2_REL_FLOOR * float(y @ y) / len(y), np.finfo(float).tiny)


def sbl_fit(phi_sub, y, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL, init: SblState | None = None, lam: float = 0.0) -> SblState:
    """Fixed-point SBL updates of ``gamma`` and ``eta^2``.

    Each iteration proposes ``gamma_i <- mu_i^2 + S_ii`` and
    ``eta^2 <- ||y - Phi mu||^2 / (m - a + sum_i S_ii / gamma_i)``. If that
    proposal would raise the cost, the plain EM noise update is used instead,
    which cannot.
    """
    phi_sub = np.asarray(phi_sub, dtype=float)
    y = np.asarray(y, dtype=float)
    m, a = phi_sub.shape
    if a < 1:
        raise ValueError("SBL needs at least one column")
    state = init if init is not None else initial_state(phi_sub, y, lam)
    if max_iter <= 0:
        return state
    eta2_floor = _eta2_floor(y)
    gamma, eta2 = state.gamma.copy(), state.eta2
    mu, s_diag, logdet_b = _posterior(phi_sub, y, gamma, eta2)
    obj = _objective_from(phi_sub, y, gamma, eta2, mu, logdet_b)

    for it in range(1, max_iter + 1):
        resid = y - phi_sub @ mu
        rss = float(resid @ resid)
        new_gamma = np.maximum(mu**2 + s_diag, GAMMA_FLOOR)
        dof = m - a + float(np.sum(s_diag / gamma))
        candidates = []
        if dof > 0:
            candidates.append(max(rss / dof, eta2_floor))
        # EM noise step from the same E-step
        candidates.append(max((rss + eta2 * float(np.sum(1.0 - s_diag / gamma))) / m, eta2_floor))
        accepted = None
        for new_eta2 in candidates:
            try:
                n_mu, n_s, n_ld = _posterior(phi_sub, y, new_gamma, new_eta2)
            except np.linalg.LinAlgError:
                continue
            n_obj = _objective_from(phi_sub, y, new_gamma, new_eta2, n_mu, n_ld)
            if n_obj <= obj + DESCENT_SLACK * max(1.0, abs(obj)):
                accepted = (new_gamma, new_eta2, n_mu, n_s, n_obj)
                break
        if accepted is None:
            return SblState(gamma, eta2, obj, it - 1, converged=True)
        gamma, eta2, mu, s_diag, new_obj = accepted
        change = abs(obj - new_obj) / max(abs(obj), 1e-300)
        obj = new_obj
        if change < tol:
            return SblState(gamma, eta2, obj, it, converged=True)

    warnings.warn(f"SBL did not converge in {max_iter} iterations", SblConvergenceWarning, stacklevel=2)
    return SblState(gamma, eta2, obj, max_iter, converged=False)


def ridge_solve(phi_sub, y, state: SblState, support=()) -> RidgeEstimate:
    """Solve ``(Phi^T Phi + eta^2 diag(1/gamma)) x = Phi^T y``."""
    phi_sub = np.asarray(phi_sub, dtype=float)
    y = np.asarray(y, dtype=float)
    _check(state.gamma, state.eta2)
    mu, _, _ = _posterior(phi_sub, y, state.gamma, state.eta2)
    support = tuple(support) if len(support) else tuple(range(phi_sub.shape[1]))
    return RidgeEstimate(mu, support)


def estimate_on_support(phi_sub, y, mode: Mode, support=(), lam: float = 0.0, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> RidgeEstimate:
    """Least squares in the noiseless case, SBL ridge otherwise."""
    phi_sub = np.asarray(phi_sub, dtype=float)
    if phi_sub.shape[1] == 0:
        raise ValueError("empty support")
    support = tuple(support) if len(support) else tuple(range(phi_sub.shape[1]))
    if mode is Mode.NOISELESS:
        return RidgeEstimate(least_squares(phi_sub, y), support)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SblConvergenceWarning)
        state = sbl_fit(phi_sub, y, max_iter=max_iter, tol=tol, lam=lam)
    return ridge_solve(phi_sub, y, state, support)
