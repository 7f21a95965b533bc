"""Projection and incremental orthogonalization primitives.

Vectors are 1-D ``float64`` arrays and matrices are 2-D C-ordered
``float64`` arrays of shape ``(m, n)``; column ``j`` is ``phi[:, j]``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

DEFAULT_RANK_TOL = 1e-10


class RankDeficientError(np.linalg.LinAlgError):
    """Raised when a least-squares system does not have full column rank."""


class OrthoBasis:
    """Orthonormal basis of ``span(phi[:, indices])``, grown one column at a time.

    Columns are orthogonalized by Gram-Schmidt with one full
    reorthogonalization pass. The triangular factor is kept so that a least
    squares fit on the held columns is a back-substitution.

    The object is single-writer: :meth:`extend` mutates it in place.
    """

    def __init__(self, ambient_dim: int, rank_tol: float = DEFAULT_RANK_TOL):
        if ambient_dim < 1:
            raise ValueError(f"ambient_dim must be >= 1, got {ambient_dim}")
        if rank_tol < 0:
            raise ValueError(f"rank_tol must be >= 0, got {rank_tol}")
        self.ambient_dim = int(ambient_dim)
        self.rank_tol = float(rank_tol)
        self.indices: list[int] = []
        self._q = np.zeros((self.ambient_dim, 0))
        self._r = np.zeros((0, 0))

    @classmethod
    def empty(cls, ambient_dim: int, rank_tol: float = DEFAULT_RANK_TOL) -> "OrthoBasis":
        return cls(ambient_dim, rank_tol)

    @classmethod
    def from_columns(cls, phi: np.ndarray, indices, rank_tol: float = DEFAULT_RANK_TOL) -> "OrthoBasis":
        """Build a basis from ``phi[:, indices]``; dependent columns are skipped."""
        basis = cls(phi.shape[0], rank_tol)
        for j in indices:
            basis.extend(int(j), phi[:, j])
        return basis

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def q(self) -> np.ndarray:
        """The ``m x d`` matrix of orthonormal columns."""
        return self._q

    @property
    def r(self) -> np.ndarray:
        """Upper-triangular ``d x d`` factor with ``phi[:, indices] = q @ r``."""
        return self._r

    def _check_dim(self, v: np.ndarray) -> None:
        if v.shape[0] != self.ambient_dim:
            raise ValueError(
                f"dimension mismatch: expected leading dim {self.ambient_dim}, got {v.shape[0]}"
            )

    def extend(self, index: int, column) -> bool:
        """Append ``column`` under ``index``.

        Returns ``False`` (and leaves the basis untouched) when the column's
        complement is no larger than ``rank_tol * ||column||``.
        """
        column = np.asarray(column, dtype=float)
        self._check_dim(column)
        if index in self.indices:
            raise ValueError(f"index {index} already in basis")
        d = len(self.indices)
        if d == self.ambient_dim:
            return False
        w = column.copy()
        coef = np.zeros(d)
        if d:
            # two classical passes; the second removes what roundoff left behind
            for _ in range(2):
                c = self._q.T @ w
                w -= self._q @ c
                coef += c
        nrm = np.linalg.norm(w)
        if nrm <= self.rank_tol * np.linalg.norm(column) or nrm == 0.0:
            return False
        q = np.empty((self.ambient_dim, d + 1))
        q[:, :d] = self._q
        q[:, d] = w / nrm
        r = np.zeros((d + 1, d + 1))
        r[:d, :d] = self._r
        r[:d, d] = coef
        r[d, d] = nrm
        self._q, self._r = q, r
        self.indices.append(int(index))
        return True

    def project_complement(self, v) -> np.ndarray:
        """``v - Q Q^T v``; accepts a vector or an ``m x p`` matrix."""
        v = np.asarray(v, dtype=float)
        self._check_dim(v)
        if not self.indices:
            return v.copy()
        return v - self._q @ (self._q.T @ v)

    def normalized_complement(self, v) -> np.ndarray | None:
        """Unit vector along the complement of ``v``; ``None`` if it is degenerate."""
        v = np.asarray(v, dtype=float)
        p = self.project_complement(v)
        nrm = np.linalg.norm(p)
        if nrm <= self.rank_tol * np.linalg.norm(v) or nrm == 0.0:
            return None
        return p / nrm

    def residual(self, y) -> tuple[np.ndarray, float]:
        r = self.project_complement(y)
        return r, float(np.linalg.norm(r))

    def solve(self, y) -> np.ndarray:
        """Least-squares coefficients of ``y`` on the held columns, in ``indices`` order."""
        y = np.asarray(y, dtype=float)
        self._check_dim(y)
        if not self.indices:
            return np.zeros(0)
        return _back_substitute(self._r, self._q.T @ y)


def _back_substitute(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_triangular(r, b, lower=False)


def basis_empty(ambient_dim: int, rank_tol: float = DEFAULT_RANK_TOL) -> OrthoBasis:
    return OrthoBasis(ambient_dim, rank_tol)


def project_residual(basis: OrthoBasis, y) -> np.ndarray:
    return basis.project_complement(y)


def least_squares(phi_sub, y, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Minimize ``||phi_sub @ x - y||`` for a full-column-rank ``phi_sub``.

    Raises :class:`RankDeficientError` rather than regularizing.
    """
    phi_sub = np.asarray(phi_sub, dtype=float)
    y = np.asarray(y, dtype=float)
    if phi_sub.ndim != 2:
        raise ValueError("phi_sub must be 2-D")
    if phi_sub.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {phi_sub.shape} vs {y.shape}")
    a = phi_sub.shape[1]
    if a == 0:
        return np.zeros(0)
    if a > phi_sub.shape[0]:
        raise RankDeficientError(f"{a} columns exceed {phi_sub.shape[0]} rows")
    basis = OrthoBasis(phi_sub.shape[0], rank_tol)
    for j in range(a):
        if not basis.extend(j, phi_sub[:, j]):
            raise RankDeficientError(f"column {j} is linearly dependent on earlier columns")
    return basis.solve(y)
