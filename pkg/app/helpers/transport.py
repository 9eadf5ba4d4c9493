"""Holonomy reconstruction from sampled frames or adjacent overlaps.

Frames are compared pairwise, M_k = Phi_k^H Phi_{k+1}. The unitary polar
factor W_k of each overlap is the backward comparator, its adjoint
T_k = W_k^H moves coefficient vectors forward, and the holonomy is the ordered
product T_{N-1} ... T_1 T_0 acting on column coefficient vectors (T_0 first).
"""

import logging

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .correction import EffectiveGate, correct
from .errors import DomainError, SingularOverlapError
from .linalg import (
    FRAME_TOL,
    SINGULAR_TOL,
    as_matrix,
    as_stack,
    dagger,
    eigenphases,
    polar,
    polar_batch,
    unitarity_residual,
)


CLOSURE_TOL = 1e-8
WILSON_ORDERS = 3


def _orthonormality_residuals(stack):
    m = stack.shape[-1]
    return np.linalg.norm(dagger(stack) @ stack - np.eye(m), axis=(-2, -1))


@dataclass(frozen=True, eq=False)
class Frame:
    matrix: np.ndarray
    tol: float = field(default=FRAME_TOL, compare=False)

    def __post_init__(self):
        matrix = as_matrix(self.matrix, "frame")
        d, m = matrix.shape

        if d < m:
            raise DomainError(f"frame needs d >= m, got d={d}, m={m}")

        residual = float(_orthonormality_residuals(matrix))
        if residual > self.tol:
            raise DomainError(f"frame columns are not orthonormal, residual {residual:.3e}")

        object.__setattr__(self, "matrix", matrix)

    @property
    def ambient_dim(self):
        return self.matrix.shape[0]

    @property
    def logical_rank(self):
        return self.matrix.shape[1]

    @property
    def projector(self):
        return self.matrix @ dagger(self.matrix)


@dataclass(frozen=True, eq=False)
class FramePath:
    """Frames Phi_0 ... Phi_N stacked as an array shaped (N + 1, d, m)."""

    frames: np.ndarray
    parameter_values: Optional[np.ndarray] = None
    closed_subspace: bool = False
    tol: float = field(default=FRAME_TOL, compare=False)

    def __post_init__(self):
        frames = as_stack(self.frames, "frame path")
        _, d, m = frames.shape

        if d < m:
            raise DomainError(f"frames need d >= m, got d={d}, m={m}")

        residuals = _orthonormality_residuals(frames)
        worst = int(np.argmax(residuals))
        if residuals[worst] > self.tol:
            raise DomainError(
                f"frame {worst} columns are not orthonormal, residual {residuals[worst]:.3e}"
            )

        if self.parameter_values is None:
            values = np.arange(frames.shape[0], dtype=float)
        else:
            values = np.asarray(self.parameter_values, dtype=float)

        if values.shape != (frames.shape[0],):
            raise DomainError(
                f"{values.size} parameter values for {frames.shape[0]} frames"
            )

        if np.any(np.diff(values) <= 0.0):
            raise DomainError("parameter values must be strictly increasing")

        if self.closed_subspace:
            gap = projector_gap(frames[0], frames[-1])
            if gap >= CLOSURE_TOL:
                raise DomainError(f"projector loop is not closed, |P_N - P_0| = {gap:.3e}")

        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "parameter_values", values)

    @classmethod
    def from_frames(cls, frames, parameter_values=None, closed_subspace=False):
        matrices = [f.matrix if isinstance(f, Frame) else f for f in frames]
        return cls(np.stack(matrices), parameter_values, closed_subspace)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def ambient_dim(self):
        return self.frames.shape[1]

    @property
    def logical_rank(self):
        return self.frames.shape[2]

    @property
    def steps(self):
        return self.frames.shape[0] - 1


@dataclass(frozen=True, eq=False)
class OverlapSequence:
    overlaps: np.ndarray
    min_singular_values: np.ndarray

    def __post_init__(self):
        overlaps = as_stack(self.overlaps, "overlaps")
        sigma = np.asarray(self.min_singular_values, dtype=float)

        if overlaps.shape[1] != overlaps.shape[2]:
            raise DomainError(f"overlaps must be square, got {overlaps.shape[1:]}")

        if sigma.shape != (overlaps.shape[0],):
            raise DomainError("one minimum singular value per overlap is required")

        if np.any(sigma < 0.0):
            raise DomainError("singular values cannot be negative")

        object.__setattr__(self, "overlaps", overlaps)
        object.__setattr__(self, "min_singular_values", sigma)

    @classmethod
    def from_matrices(cls, overlaps):
        overlaps = as_stack(overlaps, "overlaps")
        sigma = np.linalg.svd(overlaps, compute_uv=False)[:, -1]
        return cls(overlaps, sigma)

    def __len__(self):
        return self.overlaps.shape[0]

    @property
    def logical_rank(self):
        return self.overlaps.shape[-1]

    @property
    def mu_min(self):
        return float(self.min_singular_values.min())

    def flagged(self, tol=SINGULAR_TOL):
        return [int(k) for k in np.flatnonzero(self.min_singular_values < tol)]


@dataclass(frozen=True, eq=False)
class HolonomyEstimate:
    holonomy: np.ndarray
    base_frame_holonomy: np.ndarray
    endpoint_identification: np.ndarray
    eigenphase_list: list
    wilson_traces: list
    mu_min: float
    unitarity_residual: float
    corrected_gate: Optional[np.ndarray] = None

    @property
    def logical_rank(self):
        return self.holonomy.shape[0]


def projector_gap(a, b):
    return float(np.linalg.norm(a @ dagger(a) - b @ dagger(b)))


def projector_distances(path):
    p = path.frames @ dagger(path.frames)
    return np.linalg.norm(p[1:] - p[:-1], axis=(-2, -1))


def max_projector_step(path):
    return float(projector_distances(path).max())


def overlaps_from_frames(path, tol=SINGULAR_TOL):
    if len(path) < 2:
        raise DomainError("an overlap sequence needs at least two frames")

    overlaps = dagger(path.frames[:-1]) @ path.frames[1:]
    sequence = OverlapSequence.from_matrices(overlaps)

    flagged = sequence.flagged(tol)
    if flagged:
        k = flagged[0]
        raise SingularOverlapError(float(sequence.min_singular_values[k]), tol, index=k)

    return sequence


def forward_transports(overlaps, tol=SINGULAR_TOL):
    comparators, _ = polar_batch(overlaps.overlaps, tol)
    return dagger(comparators)


def ordered_product(transports):
    transports = np.asarray(transports, dtype=np.complex128)

    if transports.ndim != 3 or transports.shape[1] != transports.shape[2] or not len(transports):
        raise DomainError(f"transports must be shaped (n, m, m), got {transports.shape}")

    u = np.eye(transports.shape[-1], dtype=np.complex128)
    for t in transports:
        u = t @ u

    return u


def endpoint_identification(path, tol=SINGULAR_TOL):
    return polar(dagger(path.frames[0]) @ path.frames[-1], tol).unitary


def wilson_traces(u, r_max=WILSON_ORDERS):
    u = as_matrix(u)
    power = np.eye(u.shape[0], dtype=np.complex128)

    traces = []
    for _ in range(r_max):
        power = power @ u
        traces.append(complex(np.trace(power)))

    return traces


def telescoping_bound(transports, perturbed):
    diff = np.asarray(perturbed) - np.asarray(transports)
    return float(np.linalg.norm(diff, ord=2, axis=(-2, -1)).sum())


def estimate_holonomy(
    source: Union[FramePath, OverlapSequence],
    tol=SINGULAR_TOL,
    r_max=WILSON_ORDERS,
    gate: Optional[EffectiveGate] = None,
):
    """Reconstruct the closed-loop holonomy and its invariant diagnostics.

    Frame input adds the endpoint identification B = polar(Phi_0^H Phi_N) when
    the path is a closed projector loop; eigenphases and Wilson traces always
    come from the base-frame holonomy B @ U.
    """
    if not isinstance(source, (FramePath, OverlapSequence)):
        raise DomainError(f"unsupported holonomy source {type(source).__name__}")

    m = source.logical_rank

    if isinstance(source, FramePath):
        overlaps = overlaps_from_frames(source, tol)

        if source.closed_subspace:
            b = endpoint_identification(source, tol)
        else:
            b = np.eye(m, dtype=np.complex128)

    else:
        overlaps = source
        b = np.eye(m, dtype=np.complex128)

    u = ordered_product(forward_transports(overlaps, tol))
    u0 = b @ u

    estimate = HolonomyEstimate(
        holonomy=u,
        base_frame_holonomy=u0,
        endpoint_identification=b,
        eigenphase_list=eigenphases(u0),
        wilson_traces=wilson_traces(u0, r_max),
        mu_min=overlaps.mu_min,
        unitarity_residual=unitarity_residual(u),
        corrected_gate=None if gate is None else correct(gate, u0),
    )

    logging.debug(
        f"holonomy: m={m}, steps={len(overlaps)}, mu_min={estimate.mu_min:.5f}"
        + f", residual={estimate.unitarity_residual:.2e}."
    )
    return estimate
