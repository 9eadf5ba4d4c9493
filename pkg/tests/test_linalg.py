import numpy as np
import pytest
import scipy.linalg

from hypothesis import assume, given, seed, settings
from hypothesis import strategies as st

from helpers.benchmarks import tangent_connection
from helpers.errors import DomainError, RankDeficiencyError, SingularOverlapError
from helpers.linalg import (
    eigenphases,
    expm_antihermitian,
    frobenius_norm,
    haar_unitary,
    is_unitary,
    nearest_unitary,
    orthonormalize,
    polar,
    polar_batch,
    svd,
    unitarity_residual,
)
from helpers.rng import stream


def ginibre(rng, rows, cols=None):
    cols = rows if cols is None else cols
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def antihermitian(rng, m):
    x = ginibre(rng, m)
    return 0.5 * (x - x.conj().T)


# ################################################################################
# svd and polar


def test_svd_of_positive_diagonal():
    result = svd(np.diag([3.0, 1.0]))

    assert np.allclose(result.singular_values, [3.0, 1.0])
    assert np.allclose(result.left, result.right)
    assert np.allclose(np.abs(result.left), np.eye(2))


def test_svd_of_antidiagonal():
    m = np.array([[0, 2], [0.5, 0]])
    result = svd(m)

    assert np.allclose(result.singular_values, [2.0, 0.5])
    assert np.allclose(
        result.left @ np.diag(result.singular_values) @ result.right.conj().T, m
    )


def test_svd_of_unitary_has_unit_singular_values():
    q = haar_unitary(4, stream(0, "reconstruct", 1))
    assert np.allclose(svd(q).singular_values, np.ones(4))


def test_polar_of_positive_diagonal():
    result = polar(np.diag([2.0, 0.5]))

    assert np.allclose(result.unitary, np.eye(2))
    assert np.allclose(result.positive, np.diag([2.0, 0.5]))
    assert result.min_singular_value == pytest.approx(0.5)


def test_polar_of_antidiagonal():
    result = polar([[0, 2], [0.5, 0]])

    assert np.allclose(result.unitary, [[0, 1], [1, 0]])
    assert np.allclose(result.positive, np.diag([0.5, 2.0]))


def test_polar_of_unitary_is_itself():
    q = haar_unitary(3, stream(0, "reconstruct", 2))
    result = polar(q)

    assert np.allclose(result.unitary, q, atol=1e-12)
    assert np.allclose(result.positive, np.eye(3), atol=1e-12)


def test_polar_factors_reassemble(rng):
    m = ginibre(rng, 3)
    result = polar(m)

    assert np.allclose(result.unitary @ result.positive, m)
    assert np.allclose(result.positive, result.positive.conj().T)
    assert np.all(np.linalg.eigvalsh(result.positive) > 0.0)
    assert is_unitary(result.unitary, 1e-12)


def test_polar_rejects_singular_matrix():
    with pytest.raises(SingularOverlapError) as err:
        polar([[1.0, 0.0], [0.0, 0.0]])

    assert err.value.index is None
    assert err.value.sigma == 0.0


def test_polar_batch_names_first_offending_index():
    stack = np.stack([np.eye(2), np.eye(2), np.diag([1.0, 1e-14]), np.zeros((2, 2))])

    with pytest.raises(SingularOverlapError) as err:
        polar_batch(stack)

    assert err.value.index == 2
    assert "step 2" in str(err.value)


def test_polar_batch_matches_single_polar(rng):
    stack = np.stack([ginibre(rng, 2) for _ in range(5)])
    unitaries, sigma = polar_batch(stack)

    for k in range(5):
        single = polar(stack[k])
        assert np.allclose(unitaries[k], single.unitary)
        assert sigma[k] == pytest.approx(single.min_singular_value)


def test_nearest_unitary_accepts_singular_input():
    u = nearest_unitary(np.diag([1.0, 0.0]) + 0j)
    assert unitarity_residual(u) < 1e-12


def test_polar_factor_is_the_nearest_unitary():
    rng = np.random.default_rng(2)
    violations = 0

    for trial in range(200):
        m = (2, 3, 4)[trial % 3]
        a = ginibre(rng, m)
        best = frobenius_norm(a - polar(a).unitary)

        for _ in range(50):
            if frobenius_norm(a - haar_unitary(m, rng)) < best - 1e-12:
                violations += 1

    assert violations == 0


@seed(1)
@settings(max_examples=100, deadline=None)
@given(key=st.integers(min_value=0, max_value=2**32 - 1), m=st.integers(min_value=1, max_value=4))
def test_polar_is_unitarily_equivariant(key, m):
    rng = np.random.default_rng(key)
    a, b = haar_unitary(m, rng), haar_unitary(m, rng)
    x = ginibre(rng, m)

    assume(np.linalg.svd(x, compute_uv=False)[-1] > 1e-6)

    expected = a @ polar(x).unitary @ b
    assert np.allclose(polar(a @ x @ b).unitary, expected, atol=1e-10)


# ################################################################################
# exponential and spectra


def test_expm_of_zero_is_identity():
    assert np.allclose(expm_antihermitian(np.zeros((3, 3))), np.eye(3))


def test_expm_of_diagonal():
    a = np.diag([1j * np.pi / 2, -1j * np.pi / 2])
    assert np.allclose(expm_antihermitian(a), np.diag([1j, -1j]))


def test_expm_matches_scipy(rng):
    for m in (1, 2, 3, 5):
        a = antihermitian(rng, m)
        u = expm_antihermitian(a)

        assert np.allclose(u, scipy.linalg.expm(a), atol=1e-12)
        assert unitarity_residual(u) < 1e-13


@pytest.mark.parametrize("m", [2, 3, 5])
@pytest.mark.parametrize("scale", [0.1, 1.0, 5.0, 10.0])
def test_expm_stays_unitary_at_large_norm(m, scale):
    a = antihermitian(np.random.default_rng(m), m)
    a *= scale / np.linalg.norm(a, ord=2)

    u = expm_antihermitian(a)

    assert unitarity_residual(u) < 1e-12
    assert np.allclose(u, scipy.linalg.expm(a), atol=1e-10)


def test_expm_accepts_a_stack(rng):
    stack = np.stack([antihermitian(rng, 2) for _ in range(4)])
    result = expm_antihermitian(stack)

    assert result.shape == (4, 2, 2)
    for a, u in zip(stack, result):
        assert np.allclose(u, scipy.linalg.expm(a), atol=1e-12)


def test_expm_of_tangent_connection_over_the_loop():
    u = expm_antihermitian(-2.0 * np.pi * tangent_connection(0.7))
    assert np.allclose(eigenphases(u), [-1.47754, 1.47754], atol=1e-4)


def test_expm_rejects_non_antihermitian():
    with pytest.raises(DomainError):
        expm_antihermitian(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_eigenphases_examples():
    assert eigenphases(np.eye(2)) == pytest.approx([0.0, 0.0])
    assert eigenphases(np.diag([1j, -1j])) == pytest.approx([-np.pi / 2, np.pi / 2])


def test_eigenphases_map_minus_one_to_pi():
    assert eigenphases(-np.eye(2)) == pytest.approx([np.pi, np.pi])


@seed(2)
@settings(max_examples=100, deadline=None)
@given(key=st.integers(min_value=0, max_value=2**32 - 1), m=st.integers(min_value=1, max_value=4))
def test_eigenphases_of_the_adjoint_are_negated(key, m):
    u = haar_unitary(m, np.random.default_rng(key))
    expected = sorted(-theta for theta in eigenphases(u))

    assert eigenphases(u.conj().T) == pytest.approx(expected, abs=1e-12)


def test_eigenphases_reject_non_unitary():
    with pytest.raises(DomainError):
        eigenphases(2.0 * np.eye(2))


def test_unitarity_residual_examples():
    assert unitarity_residual(2.0 * np.eye(2)) == pytest.approx(3.0 * np.sqrt(2.0))
    assert unitarity_residual(haar_unitary(3, stream(0, "reconstruct", 3))) < 1e-14


# ################################################################################
# haar sampling and orthonormalization


def test_haar_rank_one_is_a_phase():
    q = haar_unitary(1, stream(0, "gauge-test", 1))
    assert abs(abs(q[0, 0]) - 1.0) < 1e-14


def test_haar_samples_are_unitary_and_reproducible():
    a = haar_unitary(4, stream(5, "gauge-test", 9))
    b = haar_unitary(4, stream(5, "gauge-test", 9))

    assert unitarity_residual(a) < 1e-12
    assert np.array_equal(a, b)


def test_haar_trace_moment():
    rng = stream(0, "gauge-test", 100)
    moment = np.mean([abs(np.trace(haar_unitary(2, rng))) ** 2 for _ in range(10_000)])

    assert moment == pytest.approx(1.0, abs=0.05)


def test_orthonormalize_keeps_orthonormal_input():
    frame = haar_unitary(4, stream(0, "reconstruct", 4))[:, :2]
    assert np.allclose(orthonormalize(frame), frame, atol=1e-12)


def test_orthonormalize_normalizes_a_column():
    column = 2.0 * np.array([[1.0], [1j], [0.0]]) / np.sqrt(2.0)
    assert np.allclose(orthonormalize(column), column / 2.0)


def test_orthonormalize_spans_the_input(rng):
    a = ginibre(rng, 3, 2)
    phi = orthonormalize(a)

    assert np.allclose(phi.conj().T @ phi, np.eye(2))
    assert np.allclose(phi @ phi.conj().T, a @ np.linalg.pinv(a))


def test_orthonormalize_rejects_rank_deficient_columns():
    columns = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])

    with pytest.raises(RankDeficiencyError):
        orthonormalize(columns)
