"""Dense complex linear algebra for small logical ranks.

Matrices are plain ``numpy`` complex128 arrays; every kernel accepts a single
matrix, and the hot ones (polar, anti-Hermitian exponential) also accept a
stack shaped ``(..., m, m)`` so whole overlap sequences go through LAPACK in
one call.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DomainError,
    NumericalFailure,
    RankDeficiencyError,
    SingularOverlapError,
)


FRAME_TOL = 1e-10
SINGULAR_TOL = 1e-12
UNITARY_TOL = 1e-8
ANTIHERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class SvdResult:
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class PolarResult:
    unitary: np.ndarray
    positive: np.ndarray
    min_singular_value: float


def as_matrix(value, name="matrix"):
    matrix = np.array(value, dtype=np.complex128)

    if matrix.ndim != 2 or 0 in matrix.shape:
        raise DomainError(f"{name} must be a non-empty 2-d array, got {matrix.shape}")

    if not np.all(np.isfinite(matrix)):
        raise DomainError(f"{name} has non-finite entries")

    return matrix


def as_stack(value, name="stack"):
    stack = np.array(value, dtype=np.complex128)

    if stack.ndim == 2:
        stack = stack[np.newaxis]

    if stack.ndim != 3 or 0 in stack.shape:
        raise DomainError(f"{name} must be shaped (k, rows, cols), got {stack.shape}")

    if not np.all(np.isfinite(stack)):
        raise DomainError(f"{name} has non-finite entries")

    return stack


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def frobenius_norm(a):
    return float(np.linalg.norm(a, ord="fro"))


def operator_norm(a):
    return float(np.linalg.norm(a, ord=2))


def unitarity_residual(u):
    u = np.asarray(u, dtype=np.complex128)

    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DomainError(f"unitarity residual needs a square matrix, got {u.shape}")

    return frobenius_norm(dagger(u) @ u - np.eye(u.shape[0]))


def is_unitary(u, tol=UNITARY_TOL):
    return unitarity_residual(u) <= tol


def _require_unitary(u, tol, name):
    residual = unitarity_residual(u)
    if residual > tol:
        raise DomainError(f"{name} is not unitary, residual {residual:.3e} > {tol:.1e}")


def svd(m):
    m = as_matrix(m)

    try:
        left, sigma, right_h = np.linalg.svd(m, full_matrices=True)
    except np.linalg.LinAlgError as err:
        raise NumericalFailure(f"svd did not converge: {err}") from err

    return SvdResult(left=left, singular_values=sigma, right=dagger(right_h))


def polar(m, tol=SINGULAR_TOL):
    m = as_matrix(m)

    if m.shape[0] != m.shape[1]:
        raise DomainError(f"polar needs a square matrix, got {m.shape}")

    factors = svd(m)
    sigma = factors.singular_values

    if sigma[-1] < tol:
        raise SingularOverlapError(float(sigma[-1]), tol)

    right = factors.right
    return PolarResult(
        unitary=factors.left @ dagger(right),
        positive=(right * sigma) @ dagger(right),
        min_singular_value=float(sigma[-1]),
    )


def polar_batch(stack, tol=SINGULAR_TOL):
    """Polar unitaries of a stack of square matrices.

    Returns ``(unitaries, min_singular_values)``. The first index whose
    smallest singular value falls below ``tol`` raises
    ``SingularOverlapError``; pass ``tol=0`` to get factors regardless.
    """
    stack = as_stack(stack)

    if stack.shape[1] != stack.shape[2]:
        raise DomainError(f"polar needs square matrices, got {stack.shape[1:]}")

    try:
        left, sigma, right_h = np.linalg.svd(stack)
    except np.linalg.LinAlgError as err:
        raise NumericalFailure(f"svd did not converge: {err}") from err

    sigma_min = sigma[:, -1]
    below = np.flatnonzero(sigma_min < tol)

    if below.size:
        k = int(below[0])
        raise SingularOverlapError(float(sigma_min[k]), tol, index=k)

    return left @ right_h, sigma_min


def nearest_unitary(m):
    return polar(m, tol=0.0).unitary


def expm_antihermitian(a, tol=ANTIHERMITIAN_TOL):
    """exp(A) for anti-Hermitian A (or a stack of them).

    Uses the Hermitian eigendecomposition of iA, so the result is unitary to
    working precision.
    """
    a = np.asarray(a, dtype=np.complex128)

    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DomainError(f"expm needs square matrices, got {a.shape}")

    skew = np.linalg.norm(a + dagger(a), axis=(-2, -1))
    scale = np.maximum(1.0, np.linalg.norm(a, axis=(-2, -1)))

    if np.any(skew > tol * scale):
        raise DomainError(f"generator is not anti-Hermitian, |A + A^H| = {skew.max():.3e}")

    h = 1j * a
    h = 0.5 * (h + dagger(h))

    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w)[..., np.newaxis, :]) @ dagger(v)


def eigenphases(u, tol=UNITARY_TOL):
    u = as_matrix(u)
    _require_unitary(u, tol, "eigenphase input")

    theta = np.angle(np.linalg.eigvals(u))
    theta = np.where(theta <= -np.pi, theta + 2.0 * np.pi, theta)

    return sorted(float(t) for t in theta)


def haar_unitary(m, rng):
    if m < 1:
        raise DomainError(f"haar unitary needs m >= 1, got {m}")

    # ginibre matrix, then fix the phases of the r-diagonal
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2.0)
    q, r = scipy.linalg.qr(z)

    d = np.diag(r)
    return q * (d / np.abs(d))


def orthonormalize(columns, tol=SINGULAR_TOL):
    """Thin QR with a positive real R-diagonal.

    The positive diagonal fixes the gauge, so the same columns always produce
    the same frame.
    """
    a = as_matrix(columns, "columns")
    rows, cols = a.shape

    if rows < cols:
        raise DomainError(f"cannot orthonormalize {cols} columns in dimension {rows}")

    sigma = np.linalg.svd(a, compute_uv=False)
    if sigma[-1] < tol:
        raise RankDeficiencyError(f"columns are rank deficient, sigma_min={sigma[-1]:.3e}")

    q, r = np.linalg.qr(a, mode="reduced")
    d = np.diag(r)

    return q * (d / np.abs(d))
