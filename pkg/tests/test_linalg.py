import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmmp.linalg import OrthoBasis, RankDeficientError, basis_empty, least_squares, project_residual

e1, e2, e3 = np.eye(3)


def test_empty_basis_is_identity():
    b = basis_empty(3, 1e-10)
    assert len(b) == 0
    v = np.array([1.0, -2.0, 3.5])
    np.testing.assert_array_equal(b.project_complement(v), v)
    assert len(basis_empty(1, 0.0)) == 0
    np.testing.assert_array_equal(project_residual(basis_empty(2), np.array([1.0, 2.0])), [1.0, 2.0])


def test_extend_examples():
    b = OrthoBasis.empty(3)
    assert b.extend(0, e1)
    np.testing.assert_allclose(np.abs(b.q[:, 0]), e1)
    assert not b.extend(1, e1)
    assert len(b) == 1
    assert b.extend(2, np.array([1.0, 1.0, 0.0]))
    np.testing.assert_allclose(np.abs(b.q), np.column_stack([e1, e2]), atol=1e-15)


def test_extend_rejects_duplicate_and_bad_dim():
    b = OrthoBasis.empty(3)
    b.extend(0, e1)
    with pytest.raises(ValueError):
        b.extend(0, e2)
    with pytest.raises(ValueError):
        b.extend(1, np.ones(4))


def test_extend_full_basis_rejects():
    b = OrthoBasis.from_columns(np.eye(2), [0, 1])
    assert not b.extend(5, np.array([1.0, 2.0]))


def test_project_complement_examples():
    b = OrthoBasis.empty(2)
    b.extend(0, np.array([1.0, 0.0]))
    np.testing.assert_allclose(b.project_complement(np.array([3.0, 4.0])), [0.0, 4.0])

    d = OrthoBasis.empty(2)
    d.extend(0, np.array([1.0, 1.0]) / np.sqrt(2))
    np.testing.assert_allclose(d.project_complement(np.array([1.0, 0.0])), [0.5, -0.5])


def test_normalized_complement_examples():
    np.testing.assert_allclose(OrthoBasis.empty(3).normalized_complement(np.array([0.0, 3.0, 4.0])), [0, 0.6, 0.8])
    b = OrthoBasis.from_columns(np.eye(3), [0])
    assert b.normalized_complement(np.array([5.0, 0.0, 0.0])) is None
    np.testing.assert_allclose(b.normalized_complement(np.array([1.0, 2.0, 2.0])), np.array([0, 2, 2]) / np.sqrt(8))


def test_residual_examples():
    y = np.array([1.0, 1.0, 1.0])
    r, nrm = OrthoBasis.empty(3).residual(y)
    np.testing.assert_array_equal(r, y)
    assert nrm == pytest.approx(np.sqrt(3))
    _, nrm = OrthoBasis.from_columns(np.eye(3), [0]).residual(y)
    assert nrm == pytest.approx(np.sqrt(2))


def test_residual_in_span(rng):
    a = rng.standard_normal((20, 5))
    y = a @ rng.standard_normal(5)
    _, nrm = OrthoBasis.from_columns(a, range(5)).residual(y)
    assert nrm <= 1e-10 * np.linalg.norm(y)


def test_least_squares_examples():
    y = np.array([3.0, -1.0, 7.0, 2.0])
    np.testing.assert_allclose(least_squares(np.eye(4)[:, [1, 3]], y), [-1.0, 2.0])
    c = np.array([1.0, 2.0, -1.0])
    np.testing.assert_allclose(least_squares(c[:, None], 2 * c), [2.0])


def test_least_squares_small_system():
    # normal equations [[2,1],[1,2]] x = [3,3] give x = (1, 1); y is fitted exactly
    phi = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    y = np.array([1.0, 2.0, 1.0])
    x = least_squares(phi, y)
    np.testing.assert_allclose(x, np.linalg.solve(phi.T @ phi, phi.T @ y))
    np.testing.assert_allclose(x, [1.0, 1.0])


def test_least_squares_matches_lstsq(rng):
    a = rng.standard_normal((30, 8))
    y = rng.standard_normal(30)
    np.testing.assert_allclose(least_squares(a, y), np.linalg.lstsq(a, y, rcond=None)[0], rtol=1e-10, atol=1e-12)


def test_least_squares_rank_deficient():
    a = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
    with pytest.raises(RankDeficientError):
        least_squares(a, np.ones(3))
    with pytest.raises(RankDeficientError):
        least_squares(np.ones((2, 3)), np.ones(2))
    assert least_squares(np.zeros((3, 0)), np.ones(3)).shape == (0,)


def test_from_columns_skips_dependent():
    a = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    b = OrthoBasis.from_columns(a, [0, 1, 2])
    assert list(b.indices) == [0, 2]


def test_solve_returns_coefficients(rng):
    a = rng.standard_normal((12, 4))
    x = rng.standard_normal(4)
    np.testing.assert_allclose(OrthoBasis.from_columns(a, range(4)).solve(a @ x), x, rtol=1e-10)


@st.composite
def subspace_problem(draw):
    m = draw(st.integers(2, 12))
    d = draw(st.integers(0, m - 1))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, d)), rng.standard_normal(m), rng.standard_normal(m)


@settings(max_examples=60, deadline=None)
@given(subspace_problem())
def test_projection_properties(prob):
    a, v, w = prob
    b = OrthoBasis.from_columns(a, range(a.shape[1]))
    p = b.project_complement(v)
    # idempotent, orthogonal to the span, Pythagoras
    np.testing.assert_allclose(b.project_complement(p), p, atol=1e-10)
    np.testing.assert_allclose(a.T @ p, 0.0, atol=1e-9 * (1 + np.abs(a).sum()))
    assert np.linalg.norm(v) ** 2 == pytest.approx(np.linalg.norm(p) ** 2 + np.linalg.norm(v - p) ** 2, rel=1e-9, abs=1e-12)
    # self-adjoint
    assert p @ w == pytest.approx(v @ b.project_complement(w), rel=1e-9, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 15), st.integers(0, 2**31))
def test_residual_monotone_under_extension(m, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, m + 3))
    y = rng.standard_normal(m)
    b = OrthoBasis.empty(m)
    last = np.linalg.norm(y)
    for j in rng.permutation(a.shape[1]):
        b.extend(int(j), a[:, j])
        nrm = b.residual(y)[1]
        assert nrm <= last + 1e-12
        last = nrm
    assert len(b) == m
    assert last <= 1e-9 * np.linalg.norm(y)


def test_q_orthonormal_after_many_extensions(rng):
    m = 64
    a = rng.standard_normal((m, m))
    b = OrthoBasis.from_columns(a, range(m))
    np.testing.assert_allclose(b.q.T @ b.q, np.eye(m), atol=1e-12)
    np.testing.assert_allclose(b.q @ b.r, a[:, list(b.indices)], atol=1e-12)
