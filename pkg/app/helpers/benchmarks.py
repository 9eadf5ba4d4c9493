"""Synthetic connections, frame loops and their reference holonomies.

- ``pauli_connection`` / ``benchmark_connection``: A(t) = i(ax sx + ay sy + az sz)
  with the midpoint ordered product and a refined reference transport.
- ``tangent_frame_loop``: rank-2 tangent frames along a latitude of the unit
  sphere, with the constant exact connection A_phi.
- ``abelian_loop``: rank-1 spin-coherent loop for the scalar phase limit.
- ``frames_from_transfer_model``: frames extracted from transfer matrices.
"""

import logging
import threading

from dataclasses import dataclass
from typing import Callable, Hashable, Optional

import cachetools
import numpy as np
import scipy.integrate

from .errors import DomainError, RankDeficiencyError
from .linalg import (
    SINGULAR_TOL,
    dagger,
    expm_antihermitian,
    haar_unitary,
    nearest_unitary,
    orthonormalize,
    unitarity_residual,
)
from .transport import CLOSURE_TOL, Frame, FramePath, ordered_product, projector_gap


SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

BENCHMARK_AMPLITUDES = (0.7, 0.4, 0.2)
REFINE_FACTOR = 16
TIE_TOL = 1e-8

_references = cachetools.LRUCache(maxsize=16)
_references_lock = threading.Lock()


@dataclass(frozen=True, eq=False)
class ConnectionModel:
    logical_rank: int
    evaluate: Callable[[float], np.ndarray]
    key: Optional[Hashable] = None

    def sample(self, ts):
        return np.stack([np.asarray(self.evaluate(t), dtype=np.complex128) for t in ts])


@dataclass(frozen=True)
class Partition:
    t_start: float
    t_end: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise DomainError(f"partition needs at least one step, got {self.steps}")

        if not self.t_end > self.t_start:
            raise DomainError(f"empty interval [{self.t_start}, {self.t_end}]")

    @property
    def mesh(self):
        return (self.t_end - self.t_start) / self.steps

    @property
    def nodes(self):
        return np.linspace(self.t_start, self.t_end, self.steps + 1)

    @property
    def midpoints(self):
        return self.t_start + (np.arange(self.steps) + 0.5) * self.mesh

    def refine(self, factor):
        if factor < 1:
            raise DomainError(f"refine factor must be >= 1, got {factor}")

        return Partition(self.t_start, self.t_end, self.steps * int(factor))


def loop_partition(steps):
    return Partition(0.0, 2.0 * np.pi, steps)


# ################################################################################
# connection models


def pauli_connection(ax, ay, az, key=None):
    def evaluate(t):
        return 1j * (ax(t) * SIGMA_X + ay(t) * SIGMA_Y + az(t) * SIGMA_Z)

    return ConnectionModel(logical_rank=2, evaluate=evaluate, key=key)


def benchmark_connection(amplitudes=BENCHMARK_AMPLITUDES):
    a, b, c = (float(x) for x in amplitudes)

    return pauli_connection(
        lambda t: a * np.cos(t),
        lambda t: b * np.sin(2.0 * t),
        lambda t: c,
        key=("pauli-benchmark", a, b, c),
    )


def discrete_ordered_product(model, partition):
    generators = model.sample(partition.midpoints)
    steps = expm_antihermitian(-generators * partition.mesh)
    return ordered_product(steps)


def reference_transport_raw(model, partition, refine_factor=REFINE_FACTOR, extrapolate=True):
    """Refined midpoint product, before projection onto the unitary group.

    The midpoint product is symmetric, so its error expands in even powers of
    the mesh; one Richardson step removes the h^2 term.
    """
    fine = partition.refine(refine_factor)
    u = discrete_ordered_product(model, fine)

    if extrapolate:
        u = (4.0 * discrete_ordered_product(model, fine.refine(2)) - u) / 3.0

    return u


def _reference(model, partition, refine_factor, extrapolate):
    key = None
    if model.key is not None:
        key = (
            model.key,
            partition.t_start,
            partition.t_end,
            partition.steps * refine_factor,
            extrapolate,
        )

        with _references_lock:
            if key in _references:
                return _references[key]

    raw = reference_transport_raw(model, partition, refine_factor, extrapolate)
    entry = (nearest_unitary(raw), unitarity_residual(raw))

    logging.debug(
        f"reference transport: steps={partition.steps * refine_factor}"
        + f", raw residual={entry[1]:.2e}."
    )

    if key is not None:
        with _references_lock:
            _references[key] = entry

    return entry


def reference_transport(model, partition, refine_factor=REFINE_FACTOR, extrapolate=True):
    u, _ = _reference(model, partition, refine_factor, extrapolate)
    return u.copy()


def reference_unitarity_error(model, partition, refine_factor=REFINE_FACTOR, extrapolate=True):
    _, residual = _reference(model, partition, refine_factor, extrapolate)
    return residual


# ################################################################################
# frame loops


def _check_polar_angle(theta0):
    if not 0.0 < theta0 < np.pi:
        raise DomainError(f"theta0 must lie strictly between the poles, got {theta0}")


def tangent_frame_loop(theta0, n):
    _check_polar_angle(theta0)

    if n < 3:
        raise DomainError(f"tangent loop needs N >= 3, got {n}")

    phi = 2.0 * np.pi * np.arange(n + 1) / n
    c, s = np.cos(theta0), np.sin(theta0)

    e_theta = np.stack([c * np.cos(phi), c * np.sin(phi), -s * np.ones_like(phi)], axis=-1)
    e_phi = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)

    frames = np.stack([e_theta, e_phi], axis=-1).astype(np.complex128)
    frames[n] = frames[0]

    return FramePath(frames, phi, closed_subspace=True)


def tangent_connection(theta0):
    c = np.cos(theta0)
    return np.array([[0.0, -c], [c, 0.0]], dtype=np.complex128)


def exact_tangent_holonomy(theta0):
    _check_polar_angle(theta0)

    # exp(-2 pi A_phi), a rotation by -2 pi cos(theta0)
    angle = -2.0 * np.pi * np.cos(theta0)
    return np.array(
        [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]],
        dtype=np.complex128,
    )


def abelian_loop(theta0, n):
    if not 0.0 <= theta0 <= np.pi:
        raise DomainError(f"theta0 must lie in [0, pi], got {theta0}")

    if n < 3:
        raise DomainError(f"abelian loop needs N >= 3, got {n}")

    phi = 2.0 * np.pi * np.arange(n + 1) / n
    u = np.stack(
        [
            np.full(phi.shape, np.cos(theta0 / 2.0), dtype=np.complex128),
            np.exp(1j * phi) * np.sin(theta0 / 2.0),
        ],
        axis=-1,
    )

    frames = u[..., np.newaxis]
    frames[n] = frames[0]

    return FramePath(frames, phi, closed_subspace=True)


def abelian_reference_phase(theta0):
    """Phase of exp(-loop integral of <u|du>), integrated numerically."""

    def integrand(phi):
        u = np.array([np.cos(theta0 / 2.0), np.exp(1j * phi) * np.sin(theta0 / 2.0)])
        du = np.array([0.0, 1j * np.exp(1j * phi) * np.sin(theta0 / 2.0)])
        return float(np.imag(np.vdot(u, du)))

    value, _ = scipy.integrate.quad(integrand, 0.0, 2.0 * np.pi, epsabs=1e-13, epsrel=1e-13)
    return float(np.angle(np.exp(-1j * value)))


# ################################################################################
# transfer matrices


def synthetic_transfer_loop(d, n, rng, max_frequency=1):
    """Periodic unitary transfer matrices T(phi) = V diag(exp(i n_j phi)) V^H.

    Integer frequencies make T(2 pi) = T(0); the last matrix is the first one.
    """
    if d < 1 or n < 1:
        raise DomainError(f"transfer loop needs d >= 1 and N >= 1, got d={d}, N={n}")

    v = haar_unitary(d, rng)
    frequencies = rng.integers(-max_frequency, max_frequency + 1, size=d)

    phi = 2.0 * np.pi * np.arange(n + 1) / n
    phases = np.exp(1j * np.outer(phi, frequencies))

    matrices = (v[np.newaxis] * phases[:, np.newaxis, :]) @ dagger(v)
    matrices[n] = matrices[0]

    return list(matrices)


def frames_from_transfer_model(
    transfer_matrices,
    input_frame,
    method="qr",
    closed=None,
    tol=SINGULAR_TOL,
):
    """Frames Phi_k spanning the transported logical sector of T(lambda_k).

    ``qr`` orthonormalizes T_k Phi_in with the positive-diagonal gauge fix.
    ``svd`` keeps the top-m left singular vectors of T_k (m from the input
    frame) and warns when sigma_m and sigma_{m+1} are tied.
    """
    if not isinstance(input_frame, Frame):
        input_frame = Frame(input_frame)

    d, m = input_frame.ambient_dim, input_frame.logical_rank
    frames = []

    for k, t in enumerate(transfer_matrices):
        t = np.asarray(t, dtype=np.complex128)

        if t.shape != (d, d):
            raise DomainError(f"step {k}: transfer matrix {t.shape} does not act on d={d}")

        if method == "qr":
            try:
                frames.append(orthonormalize(t @ input_frame.matrix, tol))
            except RankDeficiencyError as err:
                raise RankDeficiencyError(str(err), index=k) from err

        elif method == "svd":
            left, sigma, _ = np.linalg.svd(t)

            if sigma[m - 1] < tol:
                raise RankDeficiencyError(
                    f"transmitted sector is rank deficient, sigma_m={sigma[m - 1]:.3e}",
                    index=k,
                )

            if m < d and sigma[m - 1] - sigma[m] < TIE_TOL * sigma[0]:
                logging.warning(
                    f"step {k}: singular values tie at the sector edge"
                    + f" ({sigma[m - 1]:.6f} vs {sigma[m]:.6f}), subspace is not unique."
                )

            frames.append(left[:, :m])

        else:
            raise DomainError(f"unknown frame extraction method {method!r}")

    if len(frames) < 2:
        raise DomainError("a transfer model needs at least two matrices")

    frames = np.stack(frames)
    if closed is None:
        closed = projector_gap(frames[0], frames[-1]) < CLOSURE_TOL

    return FramePath(frames, np.arange(len(frames), dtype=float), closed_subspace=closed)


def transfer_frame_loop(d, m, n, rng, max_frequency=1):
    transfer = synthetic_transfer_loop(d, n, rng, max_frequency)
    input_frame = Frame(np.eye(d, m, dtype=np.complex128))

    return frames_from_transfer_model(transfer, input_frame, closed=True)
