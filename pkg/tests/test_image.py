import math

import numpy as np
import pytest

from bmmp.image import (
    DenseImageError,
    PgmFormatError,
    format_pgm,
    image_demo,
    parse_pgm,
    psnr,
    read_pgm,
    sample_sparse_image,
    to_display,
    write_pgm,
)


def test_pgm_roundtrip(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    path = tmp_path / "a.pgm"
    write_pgm(path, img)
    np.testing.assert_array_equal(read_pgm(path), img)


def test_pgm_comments_and_errors():
    body = bytes(range(6))
    img = parse_pgm(b"P5\n# made by hand\n3 2\n# depth\n255\n" + body)
    assert img.shape == (2, 3) and img[1, 2] == 5
    with pytest.raises(PgmFormatError):
        parse_pgm(b"P2\n3 2\n255\n" + body)
    with pytest.raises(PgmFormatError):
        parse_pgm(b"P5\n3 2\n255\n" + body[:4])
    with pytest.raises(PgmFormatError):
        parse_pgm(b"P5\n3 2\n65535\n" + body * 2)
    with pytest.raises(PgmFormatError):
        parse_pgm(b"P5\n3")


def test_display_and_psnr():
    np.testing.assert_array_equal(to_display(np.array([-5.0, 0.4, 254.6, 300.0])), [0, 0, 255, 255])
    assert psnr(0.0) == math.inf
    assert psnr(255.0**2) == pytest.approx(0.0)
    assert format_pgm(np.zeros((1, 2), np.uint8)) == b"P5\n2 1\n255\n\x00\x00"


def test_zero_image():
    res = image_demo(np.zeros((16, 16), np.uint8), 138, 25.0, ["bmmp", "map-omp"])
    assert res.k == 0
    for r in res.reconstructions:
        assert r.psnr_db == math.inf and not r.pixels.any()
    assert "inf" in res.table()


def test_dense_image():
    with pytest.raises(DenseImageError):
        image_demo(np.full((16, 16), 9, np.uint8), 138, 25.0, ["bmmp"])


def test_demo_deterministic():
    img = sample_sparse_image(k=30, seed=2)
    a = image_demo(img, 138, 25.0, ["bmmp", "map-gomp"], seed=4)
    b = image_demo(img, 138, 25.0, ["bmmp", "map-gomp"], seed=4)
    assert a.table() == b.table()
    assert a.k == 30 and a.n == 256


def test_infeasible_solver_skipped():
    res = image_demo(sample_sparse_image(k=50, seed=1), 138, 25.0, ["bmmp", "map-cosamp"], seed=1)
    assert [r.solver for r in res.reconstructions] == ["bmmp"]
    assert [name for name, _ in res.skipped] == ["map-cosamp"]
    assert res.table().splitlines()[-1] == "map-cosamp\t50\tnan\tnan\tskipped"


def _mse_by_solver(seeds, solvers):
    out = {s: [] for s in solvers}
    for seed in seeds:
        img = sample_sparse_image(k=40, seed=seed)
        for r in image_demo(img, 138, 25.0, solvers, seed=seed).reconstructions:
            out[r.solver].append(r.mse)
    return {s: float(np.mean(v)) for s, v in out.items()}


def test_bmmp_not_worse_than_map_omp():
    mse = _mse_by_solver(range(10), ["bmmp", "map-omp"])
    assert mse["bmmp"] <= mse["map-omp"]


@pytest.mark.xfail(
    reason="with the noise-level stopping threshold BMMP often halts one pixel short; "
    "the batch baselines keep going to k and reach lower error on sparse images",
    raises=AssertionError,
    strict=False,
)
def test_bmmp_beats_every_baseline_on_images():
    solvers = ["bmmp", "map-omp", "map-gomp", "map-sp", "map-cosamp"]
    mse = _mse_by_solver(range(10), solvers)
    assert all(mse["bmmp"] <= mse[s] for s in solvers[1:])
