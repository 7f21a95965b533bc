"""Synthetic problem generation and instance files.

Randomness comes from numpy's counter-based Philox generator keyed by
``SeedSequence([seed, stream])``; the sensing matrix, the signal and the
noise each use their own stream so one can be regenerated without the
others.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
NOISELESS_EPS_FLOOR = 1e-7

STREAM_MATRIX = 0
STREAM_SIGNAL = 1
STREAM_NOISE = 2


class InstanceFormatError(ValueError):
    """Malformed or truncated instance file."""


class SchemaVersionError(InstanceFormatError):
    """Instance file written with an unsupported schema version."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(frozen=True)
class SignalPrior:
    """Uniform(a, b) distribution of the nonzero entries."""

    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"uniform prior needs a < b, got ({self.a}, {self.b})")

    @property
    def m_x(self) -> float:
        return (self.a + self.b) / 2.0

    @property
    def sigma_x(self) -> float:
        return (self.b - self.a) / math.sqrt(12.0)

    @property
    def v_x(self) -> float:
        return math.sqrt(self.m_x**2 + self.sigma_x**2)


@dataclass(frozen=True)
class SensingModel:
    m: int
    n: int
    sigma: float
    sigma_w: float = 0.0

    def __post_init__(self):
        if not 1 <= self.m < self.n:
            raise ValueError(f"need 1 <= m < n, got m={self.m}, n={self.n}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.sigma_w < 0:
            raise ValueError("sigma_w must be nonnegative")

    @classmethod
    def standard(cls, m: int, n: int, sigma_w: float = 0.0) -> "SensingModel":
        """Entries of variance ``1/m`` so columns have unit expected norm."""
        return cls(m, n, 1.0 / math.sqrt(m), sigma_w)


@dataclass
class ProblemInstance:
    phi: np.ndarray
    y: np.ndarray
    x_true: np.ndarray
    support: tuple[int, ...]
    model: SensingModel
    prior: SignalPrior = field(default_factory=SignalPrior)
    snr_db: float | None = None
    seed: int = 0

    @property
    def k(self) -> int:
        return len(self.support)

    @property
    def m(self) -> int:
        return self.model.m

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def noiseless(self) -> bool:
        return self.snr_db is None

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (
            self.model == other.model
            and self.prior == other.prior
            and self.snr_db == other.snr_db
            and self.seed == other.seed
            and self.support == other.support
            and np.array_equal(self.phi, other.phi)
            and np.array_equal(self.x_true, other.x_true)
            and np.array_equal(self.y, other.y)
        )


def gen_matrix(model: SensingModel, seed: int) -> np.ndarray:
    rng = make_rng(seed, STREAM_MATRIX)
    return rng.normal(0.0, model.sigma, size=(model.m, model.n))


def gen_signal(n: int, k: int, prior: SignalPrior, seed: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Draw a k-sparse vector with a uniformly random support."""
    if not 0 <= k < n:
        raise ValueError(f"need 0 <= k < n, got k={k}, n={n}")
    rng = make_rng(seed, STREAM_SIGNAL)
    support = np.sort(rng.choice(n, size=k, replace=False))
    x = np.zeros(n)
    x[support] = rng.uniform(prior.a, prior.b, size=k)
    return x, tuple(int(i) for i in support)


def synthesize(phi: np.ndarray, x_true: np.ndarray, sigma_w: float, seed: int) -> np.ndarray:
    """Return ``phi @ x_true + w`` with ``w ~ N(0, sigma_w^2 I)``."""
    if phi.shape[1] != x_true.shape[0]:
        raise ValueError(f"dimension mismatch: phi {phi.shape} vs x {x_true.shape}")
    y = phi @ x_true
    if sigma_w > 0:
        rng = make_rng(seed, STREAM_NOISE)
        y = y + rng.normal(0.0, sigma_w, size=phi.shape[0])
    return y


def sigma_w_from_snr(phi: np.ndarray, x_true: np.ndarray, snr_db: float) -> float:
    signal = float(np.linalg.norm(phi @ x_true))
    if signal == 0.0:
        raise ValueError("SNR is undefined for a zero signal")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return signal / (math.sqrt(phi.shape[0]) * 10.0 ** (snr_db / 20.0))


def default_epsilon(y: np.ndarray, snr_db: float | None) -> float:
    """Residual threshold ``||y|| 10^(-SNR/20)``; ``None`` or ``inf`` means noiseless."""
    ynorm = float(np.linalg.norm(y))
    if snr_db is None or (math.isinf(snr_db) and snr_db > 0):
        return NOISELESS_EPS_FLOOR * ynorm
    return ynorm * 10.0 ** (-snr_db / 20.0)


def make_instance(
    m: int,
    n: int,
    k: int,
    *,
    prior: SignalPrior | None = None,
    snr_db: float | None = None,
    seed: int = 0,
    sigma: float | None = None,
) -> ProblemInstance:
    prior = prior or SignalPrior()
    sigma = 1.0 / math.sqrt(m) if sigma is None else sigma
    if not 0 <= k < m:
        raise ValueError(f"need 0 <= k < m, got k={k}, m={m}")
    model = SensingModel(m, n, sigma)
    phi = gen_matrix(model, seed)
    x, support = gen_signal(n, k, prior, seed)
    sigma_w = 0.0 if snr_db is None else sigma_w_from_snr(phi, x, snr_db)
    model = SensingModel(m, n, sigma, sigma_w)
    y = synthesize(phi, x, sigma_w, seed)
    return ProblemInstance(phi, y, x, support, model, prior, snr_db, seed)


# -- instance files ---------------------------------------------------------

def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(s.encode("ascii"), validate=True)
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise InstanceFormatError(f"array payload has {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def instance_to_dict(inst: ProblemInstance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "m": inst.m,
        "n": inst.n,
        "k": inst.k,
        "sigma": inst.model.sigma,
        "sigma_w": inst.model.sigma_w,
        "prior": {"family": "uniform", "a": inst.prior.a, "b": inst.prior.b},
        "snr_db": inst.snr_db,
        "seed": inst.seed,
        "support": list(inst.support),
        "phi": _encode(inst.phi),
        "x_true": _encode(inst.x_true),
    }


def instance_from_dict(d: dict) -> ProblemInstance:
    if not isinstance(d, dict) or "schema_version" not in d:
        raise InstanceFormatError("missing schema_version")
    if d["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported schema_version {d['schema_version']!r} (this build reads {SCHEMA_VERSION})"
        )
    try:
        m, n = int(d["m"]), int(d["n"])
        model = SensingModel(m, n, float(d["sigma"]), float(d["sigma_w"]))
        prior_d = d["prior"]
        if prior_d.get("family") != "uniform":
            raise InstanceFormatError(f"unknown prior family {prior_d.get('family')!r}")
        prior = SignalPrior(float(prior_d["a"]), float(prior_d["b"]))
        snr_db = None if d["snr_db"] is None else float(d["snr_db"])
        seed = int(d["seed"])
        support = tuple(int(i) for i in d["support"])
        phi = _decode(d["phi"], (m, n))
        x_true = _decode(d["x_true"], (n,))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InstanceFormatError):
            raise
        raise InstanceFormatError(f"bad instance field: {exc}") from exc
    if len(support) != int(d.get("k", len(support))):
        raise InstanceFormatError("k does not match support length")
    y = synthesize(phi, x_true, model.sigma_w, seed)
    return ProblemInstance(phi, y, x_true, support, model, prior, snr_db, seed)


def save_instance(inst: ProblemInstance, path) -> None:
    path = Path(path)
    path.write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n")


def load_instance(path) -> ProblemInstance:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: not a valid instance file ({exc})") from exc
    try:
        return instance_from_dict(d)
    except InstanceFormatError as exc:
        raise type(exc)(f"{path}: {exc}") from exc
