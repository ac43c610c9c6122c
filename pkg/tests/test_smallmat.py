import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ffcontract import smallmat
from ffcontract.errors import InvalidInputError, NumericFailure


def sym_matrices(max_n=5):
    return st.integers(1, max_n).flatmap(
        lambda n: arrays(np.float64, (n, n), elements=st.floats(-10, 10, allow_nan=False))
    ).map(lambda a: a + a.T)


@pytest.mark.parametrize(
    "J, expected",
    [
        ([[1, -1], [1, -1]], [[2, 0], [0, -2]]),
        ([[0, 1], [-1, 0]], [[0, 0], [0, 0]]),
        (np.eye(2), 2 * np.eye(2)),
    ],
)
def test_sym_part_examples(J, expected):
    np.testing.assert_array_equal(smallmat.sym_part(J), expected)


def test_sym_part_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        smallmat.sym_part([[1.0, np.nan], [0.0, 1.0]])


def test_sym_part_rejects_non_square():
    with pytest.raises(InvalidInputError):
        smallmat.sym_part(np.ones((2, 3)))


@pytest.mark.parametrize(
    "S, expected",
    [
        ([[2, 0], [0, -2]], [-2, 2]),
        ([[0, 1], [1, 0]], [-1, 1]),
        ([[2, 0], [0, 0]], [0, 2]),
    ],
)
def test_eig_sym_examples(S, expected):
    np.testing.assert_allclose(smallmat.eig_sym(S), expected, atol=1e-14)


def test_eig_sym_matches_lapack_on_random_matrices():
    rng = np.random.default_rng(3)
    for n in range(1, 17):
        a = rng.normal(size=(n, n))
        S = a + a.T
        w = smallmat.eig_sym(S)
        ref = np.linalg.eigvalsh(S)
        assert np.max(np.abs(w - ref)) <= 1e-10 * max(1.0, np.linalg.norm(S))


def test_eig_sym_asymmetry_is_an_error():
    with pytest.raises(InvalidInputError):
        smallmat.eig_sym([[1.0, 2.0], [2.1, 1.0]])


def test_eig_sym_rounding_asymmetry_is_averaged():
    w = smallmat.eig_sym([[1.0, 2.0], [2.0 + 1e-15, 1.0]])
    np.testing.assert_allclose(w, [-1.0, 3.0], atol=1e-12)


def test_eig_sym_sweep_budget_exhausted():
    S = np.array([[1.0, 0.5, 0.2], [0.5, 2.0, 0.3], [0.2, 0.3, 3.0]])
    with pytest.raises(NumericFailure) as info:
        smallmat.eig_sym(S, max_sweeps=0)
    assert info.value.residual > 0


def test_eig_sym_zero_and_scalar():
    np.testing.assert_array_equal(smallmat.eig_sym(np.zeros((3, 3))), np.zeros(3))
    np.testing.assert_array_equal(smallmat.eig_sym([[4.0]]), [4.0])


@pytest.mark.parametrize(
    "S, m, expected",
    [(2 * np.eye(2), 1.0, 1.0), ([[2, 0], [0, 0]], 1.0, -1.0), (np.zeros((3, 3)), 0.0, 0.0)],
)
def test_definiteness_shift(S, m, expected):
    assert smallmat.definiteness_shift(S, m) == pytest.approx(expected, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-50, 50, allow_nan=False)))
def test_sym_part_antisymmetric_in_sign(J):
    np.testing.assert_array_equal(smallmat.sym_part(J) + smallmat.sym_part(-J), np.zeros((3, 3)))


@settings(max_examples=60, deadline=None)
@given(sym_matrices())
def test_sym_part_of_symmetric_is_double(S):
    np.testing.assert_array_equal(smallmat.sym_part(S), 2 * S)


@settings(max_examples=100, deadline=None)
@given(sym_matrices(max_n=3))
def test_trace_and_determinant_identities(S):
    w = smallmat.eig_sym(S)
    scale = max(np.linalg.norm(S), 1e-300)
    assert abs(np.sum(w) - np.trace(S)) <= 1e-10 * scale + 1e-300
    # product of eigenvalues scales like |S|^n
    n = S.shape[0]
    assert abs(np.prod(w) - np.linalg.det(S)) <= 1e-10 * max(scale, 1.0) ** n


@settings(max_examples=60, deadline=None)
@given(sym_matrices(max_n=6))
def test_reconstruction_from_eigenpairs(S):
    w, V = smallmat.eig_sym(S, vectors=True)
    err = np.linalg.norm(V @ np.diag(w) @ V.T - S)
    assert err <= 1e-8 * max(np.linalg.norm(S), 1e-300)
    np.testing.assert_allclose(V.T @ V, np.eye(S.shape[0]), atol=1e-10)
