"""Feed-forward removal of an estimated holonomy from an effective gate.

A left-acting distortion V_eff = U V is undone by U^H V_eff, a right-acting
one V_eff = V U by V_eff U^H. The side is carried by the gate itself and a
mismatch is an error, never a silent transpose.
"""

import enum
import logging

from dataclasses import dataclass

import numpy as np

from .errors import ConventionError, DomainError
from .linalg import as_matrix, dagger, frobenius_norm, unitarity_residual


GATE_TOL = 1e-8


class Convention(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True, eq=False)
class EffectiveGate:
    matrix: np.ndarray
    convention: Convention
    tol: float = GATE_TOL

    def __post_init__(self):
        matrix = as_matrix(self.matrix, "effective gate")

        if matrix.shape[0] != matrix.shape[1]:
            raise DomainError(f"effective gate must be square, got {matrix.shape}")

        residual = unitarity_residual(matrix)
        if residual >= self.tol:
            raise DomainError(
                f"effective gate is not unitary, residual {residual:.3e} >= {self.tol:.1e}"
            )

        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "convention", Convention(self.convention))

    @property
    def logical_rank(self):
        return self.matrix.shape[0]


def _check(holonomy, v_eff, convention):
    if v_eff.convention is not convention:
        raise ConventionError(
            f"{v_eff.convention.value}-acting gate passed to the"
            + f" {convention.value} correction"
        )

    holonomy = as_matrix(holonomy, "holonomy")
    if holonomy.shape != v_eff.matrix.shape:
        raise DomainError(
            f"holonomy {holonomy.shape} does not match gate {v_eff.matrix.shape}"
        )

    return holonomy


def correct_left(holonomy, v_eff):
    holonomy = _check(holonomy, v_eff, Convention.LEFT)
    return dagger(holonomy) @ v_eff.matrix


def correct_right(v_eff, holonomy):
    holonomy = _check(holonomy, v_eff, Convention.RIGHT)
    return v_eff.matrix @ dagger(holonomy)


def correct(v_eff, holonomy):
    if v_eff.convention is Convention.LEFT:
        return correct_left(holonomy, v_eff)

    return correct_right(v_eff, holonomy)


def gate_fidelity(v_corr, v):
    v_corr = as_matrix(v_corr, "corrected gate")
    v = as_matrix(v, "target gate")

    if v_corr.shape != v.shape or v.shape[0] != v.shape[1]:
        raise DomainError(f"gate shapes differ: {v_corr.shape} vs {v.shape}")

    m = v.shape[0]
    overlap = np.trace(dagger(v_corr) @ v)

    return float(min(1.0, abs(overlap) ** 2 / m**2))


def infidelity(v_corr, v):
    return 1.0 - gate_fidelity(v_corr, v)


def correction_error(v_corr, v):
    return frobenius_norm(np.asarray(v_corr) - np.asarray(v))


def synth_effective_gate(u_true, v, convention, residual=None, tol=GATE_TOL):
    """V_eff = U V + R (left) or V U + R (right).

    A residual large enough to break unitarity beyond ``tol`` still yields a
    gate, built with an infinite tolerance and flagged in the log.
    """
    u_true = as_matrix(u_true, "holonomy")
    v = as_matrix(v, "target gate")
    convention = Convention(convention)

    product = u_true @ v if convention is Convention.LEFT else v @ u_true
    if residual is not None:
        product = product + as_matrix(residual, "residual")

    drift = unitarity_residual(product)
    if drift >= tol:
        logging.warning(f"synthetic gate is non-unitary, residual {drift:.3e}.")
        return EffectiveGate(product, convention, tol=np.inf)

    return EffectiveGate(product, convention, tol=tol)
