"""Binary PGM (P5, maxval <= 255) I/O and the compressed-image reconstruction demo."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .problem import ProblemInstance, SensingModel, SignalPrior, gen_matrix, sigma_w_from_snr, synthesize
from .solvers import InfeasibleSizeError, required_measurements, run_solver

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\d+)")


class PgmFormatError(ValueError):
    pass


class DenseImageError(ValueError):
    """Image has at least as many nonzero pixels as measurements."""


def parse_pgm(data: bytes) -> np.ndarray:
    if not data.startswith(b"P5"):
        raise PgmFormatError("not a binary PGM (missing P5 magic)")
    pos = 2
    values = []
    for _ in range(3):
        mt = _TOKEN.match(data, pos)
        if mt is None:
            raise PgmFormatError("truncated PGM header")
        values.append(int(mt.group(1)))
        pos = mt.end()
    width, height, maxval = values
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PgmFormatError("missing whitespace after PGM maxval")
    pos += 1
    if not 0 < maxval <= 255:
        raise PgmFormatError(f"unsupported maxval {maxval} (only 8-bit PGM is read)")
    body = data[pos:pos + width * height]
    if len(body) != width * height:
        raise PgmFormatError(f"PGM body has {len(body)} bytes, expected {width * height}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    try:
        return parse_pgm(path.read_bytes())
    except PgmFormatError as exc:
        raise PgmFormatError(f"{path}: {exc}") from exc


def format_pgm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM images are 2-D")
    h, w = image.shape
    pixels = np.asarray(image, dtype=np.uint8)
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def write_pgm(path, image: np.ndarray) -> None:
    Path(path).write_bytes(format_pgm(image))


def to_display(pixels: np.ndarray) -> np.ndarray:
    """Threshold at zero, clip to [0, 255] and round for writing."""
    return np.clip(np.rint(np.maximum(pixels, 0.0)), 0, 255).astype(np.uint8)


def psnr(mse: float, peak: float = 255.0) -> float:
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass
class ImageReconstruction:
    solver: str
    pixels: np.ndarray  # unclipped, in grey levels
    mse: float
    psnr_db: float
    support_recovered: bool


@dataclass
class ImageDemoResult:
    k: int
    m: int
    n: int
    snr_db: float
    reconstructions: list[ImageReconstruction]
    # solvers that cannot run at this (k, m), with the reason
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def table(self) -> str:
        lines = ["solver\tk\tmse\tpsnr_db\tsupport_recovered"]
        for r in self.reconstructions:
            lines.append(f"{r.solver}\t{self.k}\t{r.mse!r}\t{r.psnr_db!r}\t{str(r.support_recovered).lower()}")
        for name, _ in self.skipped:
            lines.append(f"{name}\t{self.k}\tnan\tnan\tskipped")
        return "\n".join(lines) + "\n"


def image_demo(image: np.ndarray, m: int, snr_db: float, solvers, seed: int = 0, g: int = 4) -> ImageDemoResult:
    """Compress ``image`` with a Gaussian matrix, add noise and reconstruct with each solver.

    Pixels are scaled to [0, 1] for recovery, matching a uniform(0, 1) prior
    on the nonzeros; errors are reported in grey levels on unclipped values.
    """
    image = np.asarray(image)
    shape = image.shape
    truth = image.astype(float).ravel()
    n = truth.size
    if not 0 < m < n:
        raise ValueError(f"need 0 < m < n = {n}, got m={m}")
    support = tuple(int(i) for i in np.flatnonzero(truth))
    k = len(support)
    if k >= m:
        raise DenseImageError(f"image has {k} nonzero pixels, needs fewer than m={m}")
    out = []
    if k == 0:
        for name in solvers:
            out.append(ImageReconstruction(name, np.zeros(shape), 0.0, math.inf, True))
        return ImageDemoResult(0, m, n, snr_db, out)

    x_true = truth / 255.0
    model = SensingModel.standard(m, n)
    phi = gen_matrix(model, seed)
    sigma_w = sigma_w_from_snr(phi, x_true, snr_db)
    model = SensingModel(m, n, model.sigma, sigma_w)
    y = synthesize(phi, x_true, sigma_w, seed)
    inst = ProblemInstance(phi, y, x_true, support, model, SignalPrior(0.0, 1.0), snr_db, seed)
    skipped = []
    for name in solvers:
        if required_measurements(name, k) > m:
            skipped.append((name, f"needs m >= {required_measurements(name, k)}"))
            continue
        kwargs = {"g": g} if name.startswith("bmmp") else {}
        try:
            res = run_solver(name, inst, **kwargs)
        except InfeasibleSizeError as exc:
            skipped.append((name, str(exc)))
            continue
        pixels = (res.x_hat * 255.0).reshape(shape)
        mse = float(np.mean((pixels.ravel() - truth) ** 2))
        out.append(ImageReconstruction(name, pixels, mse, psnr(mse), res.support == support))
    return ImageDemoResult(k, m, n, snr_db, out, skipped)


def sample_sparse_image(size: int = 16, k: int = 40, seed: int = 0) -> np.ndarray:
    """``k`` bright pixels at random positions on a black background."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 99])))
    img = np.zeros((size, size), dtype=np.uint8)
    idx = rng.choice(size * size, size=k, replace=False)
    img.ravel()[idx] = rng.integers(26, 256, size=k)
    return img
