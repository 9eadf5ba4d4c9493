"""Frame changes Phi_k -> Phi_k G_k and the covariance checks built on them."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .linalg import dagger, frobenius_norm, haar_unitary, unitarity_residual
from .transport import FramePath

UNITARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GaugeSequence:
    """Unitaries G_0 ... G_N.

    A closed sequence stores G_0 once; ``gauges[-1]`` is the very same array
    object as ``gauges[0]``.
    """

    gauges: tuple
    closed: bool = False

    def __post_init__(self):
        gauges = tuple(np.asarray(g, dtype=np.complex128) for g in self.gauges)

        if len(gauges) < 2:
            raise DomainError("a gauge sequence needs at least two unitaries")

        if self.closed:
            gauges = gauges[:-1] + (gauges[0],)

        shapes = {g.shape for g in gauges}
        if len(shapes) != 1:
            raise DomainError(f"gauges have mixed shapes {sorted(shapes)}")

        residuals = [unitarity_residual(g) for g in gauges]
        worst = int(np.argmax(residuals))
        if residuals[worst] > UNITARY_TOL:
            raise DomainError(f"gauge {worst} is not unitary, residual {residuals[worst]:.3e}")

        object.__setattr__(self, "gauges", gauges)

    def __len__(self):
        return len(self.gauges)

    @property
    def logical_rank(self):
        return self.gauges[0].shape[0]

    @property
    def base(self):
        return self.gauges[0]

    def stack(self):
        return np.stack(self.gauges)


def random_gauge_sequence(m, n, closed, rng):
    if n < 1:
        raise DomainError(f"gauge sequence needs N >= 1, got {n}")

    gauges = [haar_unitary(m, rng) for _ in range(n if closed else n + 1)]
    if closed:
        gauges.append(gauges[0])

    return GaugeSequence(tuple(gauges), closed=closed)


def apply_gauge(path, g):
    if len(g) != len(path):
        raise DomainError(f"{len(g)} gauges for {len(path)} frames")

    if g.logical_rank != path.logical_rank:
        raise DomainError(
            f"gauge rank {g.logical_rank} does not match frame rank {path.logical_rank}"
        )

    return FramePath(
        path.frames @ g.stack(),
        path.parameter_values,
        path.closed_subspace,
        path.tol,
    )


def covariance_residual(est, est_gauged, g0):
    g0 = np.asarray(g0, dtype=np.complex128)
    u = est.base_frame_holonomy
    u_gauged = est_gauged.base_frame_holonomy

    if not (u.shape == u_gauged.shape == g0.shape):
        raise DomainError(
            f"shape mismatch: {u.shape}, {u_gauged.shape}, gauge {g0.shape}"
        )

    return frobenius_norm(u_gauged - dagger(g0) @ u @ g0)


def max_gauge_residual(g):
    return max(unitarity_residual(x) for x in g.gauges)
