"""Reproducible validation studies.

Each study is deterministic given its seed: partitions and trials are mapped
over a thread pool with ``executor.map`` and gathered by index, and every
random draw comes from a stream keyed by (seed, study, point/trial).
"""

import logging

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .benchmarks import (
    ConnectionModel,
    Partition,
    abelian_loop,
    abelian_reference_phase,
    discrete_ordered_product,
    exact_tangent_holonomy,
    reference_transport,
    reference_unitarity_error,
    tangent_frame_loop,
    transfer_frame_loop,
)
from .correction import (
    Convention,
    correct_left,
    correct_right,
    correction_error,
    infidelity,
    synth_effective_gate,
)
from .errors import DomainError, NumericalFailure
from .gauge import apply_gauge, covariance_residual, random_gauge_sequence
from .linalg import (
    SINGULAR_TOL,
    dagger,
    eigenphases,
    frobenius_norm,
    haar_unitary,
    operator_norm,
    polar_batch,
    unitarity_residual,
)
from .rng import stream
from .transport import (
    OverlapSequence,
    estimate_holonomy,
    forward_transports,
    max_projector_step,
    ordered_product,
    overlaps_from_frames,
    telescoping_bound,
    wilson_traces,
)


DEFAULT_LADDER = (20, 40, 80, 160, 320, 640)
DEFAULT_MU_LEVELS = (0.3, 0.5, 0.7, 0.9, 0.99)
LOOP_SPAN = 2.0 * np.pi

ZERO_ERROR = 1e-13
PERTURBATIVE_CUTOFF = 0.1
BASELINE_MU_MIN = 0.9
TELESCOPING_SLACK = 1e-12


def rho_grid(start=1e-6, stop=1e-2, per_decade=5):
    decades = np.log10(stop) - np.log10(start)
    count = int(round(decades * per_decade)) + 1
    return np.logspace(np.log10(start), np.log10(stop), count)


def _map(workers, fn, items):
    items = list(items)

    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def fit_loglog_slope(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)

    if xs.shape != ys.shape or xs.ndim != 1:
        raise DomainError(f"slope fit needs matching 1-d data, got {xs.shape} and {ys.shape}")

    if xs.size < 2:
        raise DomainError("slope fit needs at least two points")

    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise DomainError("slope fit needs finite data")

    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise DomainError("slope fit needs strictly positive data")

    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


def _fit_or_none(xs, ys, label):
    xs, ys = list(xs), list(ys)

    if len(ys) < 2:
        logging.warning(f"{label}: fewer than two usable points, fit skipped.")
        return None

    if max(ys) < ZERO_ERROR:
        logging.info(f"{label}: errors at numerical zero, fit skipped.")
        return None

    pairs = [(x, y) for x, y in zip(xs, ys) if y > 0.0]
    if len(pairs) < 2:
        return None

    return fit_loglog_slope(*zip(*pairs))


# ################################################################################
# convergence


@dataclass
class ConvergenceReport:
    study: str
    partition_sizes: list
    mesh_sizes: list
    errors: list
    fitted_order: Optional[float]
    reference_eigenphases: list
    reference_wilson_traces: list
    mu_min_per_partition: list
    unitarity_residuals: list
    max_projector_steps: list
    failures: list = field(default_factory=list)
    finest_eigenphases: list = field(default_factory=list)
    finest_wilson_traces: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        n = len(self.partition_sizes)
        lengths = {
            len(self.mesh_sizes),
            len(self.errors),
            len(self.mu_min_per_partition),
            len(self.unitarity_residuals),
            len(self.max_projector_steps),
        }

        if lengths != {n}:
            raise DomainError("convergence report columns have inconsistent lengths")

        if any(e < 0.0 for e in self.errors):
            raise DomainError("convergence errors cannot be negative")

    @property
    def finest_error(self):
        return self.errors[-1] if self.errors else None


def convergence_study(
    source,
    ladder,
    reference,
    seed=0,
    workers=1,
    study="convergence",
    span=LOOP_SPAN,
    interval=(0.0, LOOP_SPAN),
    tol=SINGULAR_TOL,
):
    """Error of the reconstructed holonomy against a reference, per partition.

    ``source`` is either a ``ConnectionModel`` (midpoint ordered product) or a
    callable N -> FramePath (full overlap pipeline, base-frame holonomy).
    """
    ladder = sorted(int(n) for n in ladder)
    reference = np.asarray(reference, dtype=np.complex128)

    def sample(n):
        if isinstance(source, ConnectionModel):
            u = discrete_ordered_product(source, Partition(interval[0], interval[1], n))
            return u, None, None

        path = source(n)
        estimate = estimate_holonomy(path, tol)
        return estimate.base_frame_holonomy, estimate.mu_min, max_projector_step(path)

    def run(n):
        try:
            return n, sample(n), None
        except NumericalFailure as err:
            logging.warning(f"{study}: N={n} failed, {err}.")
            return n, None, str(err)

    sizes, meshes, errors, mus, residuals, steps, failures = [], [], [], [], [], [], []
    finest = None

    for n, outcome, failure in _map(workers, run, ladder):
        if failure is not None:
            failures.append({"N": n, "message": failure})
            continue

        u, mu, step = outcome
        error = frobenius_norm(u - reference)

        sizes.append(n)
        meshes.append(span / n)
        errors.append(error)
        mus.append(mu)
        residuals.append(unitarity_residual(u))
        steps.append(step)
        finest = u

        logging.info(f"{study}: N={n}, error={error:.3e}.")

    report = ConvergenceReport(
        study=study,
        partition_sizes=sizes,
        mesh_sizes=meshes,
        errors=errors,
        fitted_order=_fit_or_none(meshes, errors, study),
        reference_eigenphases=eigenphases(reference),
        reference_wilson_traces=wilson_traces(reference),
        mu_min_per_partition=mus,
        unitarity_residuals=residuals,
        max_projector_steps=steps,
        failures=failures,
        finest_eigenphases=[] if finest is None else eigenphases(finest),
        finest_wilson_traces=[] if finest is None else wilson_traces(finest),
        seed=seed,
    )

    if report.fitted_order is not None:
        logging.info(f"{study}: fitted order {report.fitted_order:.5f}.")

    return report


def connection_convergence(
    model,
    ladder=DEFAULT_LADDER,
    refine_factor=16,
    extrapolate=True,
    interval=(0.0, LOOP_SPAN),
    seed=0,
    workers=1,
):
    finest = Partition(interval[0], interval[1], max(ladder))
    reference = reference_transport(model, finest, refine_factor, extrapolate)

    return convergence_study(
        model,
        ladder,
        reference,
        seed=seed,
        workers=workers,
        study="converge-connection",
        span=interval[1] - interval[0],
        interval=interval,
    )


def frame_convergence(theta0=0.7, ladder=DEFAULT_LADDER, seed=0, workers=1):
    return convergence_study(
        lambda n: tangent_frame_loop(theta0, n),
        ladder,
        exact_tangent_holonomy(theta0),
        seed=seed,
        workers=workers,
        study="converge-frames",
    )


# ################################################################################
# abelian reduction


@dataclass
class AbelianReport:
    theta0: float
    oracle_phase: float
    partition_sizes: list
    errors: list
    fitted_order: Optional[float]
    check_steps: int
    check_phase: float
    check_phase_error: float


def _phase_distance(a, b):
    return float(abs(np.angle(np.exp(1j * (a - b)))))


def abelian_study(theta0=0.7, ladder=DEFAULT_LADDER, check_steps=10_000, workers=1):
    oracle = abelian_reference_phase(theta0)
    target = np.exp(1j * oracle)

    def run(n):
        estimate = estimate_holonomy(abelian_loop(theta0, n))
        return complex(estimate.base_frame_holonomy[0, 0])

    ladder = sorted(int(n) for n in ladder)
    values = _map(workers, run, ladder + [int(check_steps)])

    errors = [float(abs(v - target)) for v in values[:-1]]
    check_phase = float(np.angle(values[-1]))

    report = AbelianReport(
        theta0=float(theta0),
        oracle_phase=oracle,
        partition_sizes=ladder,
        errors=errors,
        fitted_order=_fit_or_none([LOOP_SPAN / n for n in ladder], errors, "abelian"),
        check_steps=int(check_steps),
        check_phase=check_phase,
        check_phase_error=_phase_distance(check_phase, oracle),
    )

    logging.info(
        f"abelian: oracle phase {oracle:.6f}, N={check_steps} phase error"
        + f" {report.check_phase_error:.2e}."
    )
    return report


# ################################################################################
# gauge covariance


@dataclass
class GaugeReport:
    cells: list
    max_covariance_residual: float
    max_unitarity_residual: float
    max_eigenphase_drift: float
    max_wilson_drift: float
    sequences: int
    seed: int


def _spectrum_drift(a, b):
    ea = np.exp(1j * np.asarray(a))
    eb = np.exp(1j * np.asarray(b))
    return float(np.abs(ea[:, np.newaxis] - eb[np.newaxis, :]).min(axis=1).max())


def gauge_study(m_values=(2, 3), n_values=(20, 80, 200), sequences=20, seed=0, workers=1):
    grid = [(m, n) for m in m_values for n in n_values]

    def run(indexed):
        index, (m, n) = indexed
        path = transfer_frame_loop(m + 2, m, n, stream(seed, "gauge-test", index, 0))
        estimate = estimate_holonomy(path)

        covariance, unitarity, phases, traces = 0.0, estimate.unitarity_residual, 0.0, 0.0
        for s in range(sequences):
            g = random_gauge_sequence(m, n, True, stream(seed, "gauge-test", index, s + 1))
            gauged = estimate_holonomy(apply_gauge(path, g))

            covariance = max(covariance, covariance_residual(estimate, gauged, g.base))
            unitarity = max(unitarity, gauged.unitarity_residual)
            phases = max(
                phases, _spectrum_drift(estimate.eigenphase_list, gauged.eigenphase_list)
            )
            traces = max(
                traces,
                float(np.max(np.abs(np.subtract(estimate.wilson_traces, gauged.wilson_traces)))),
            )

        logging.info(f"gauge-test: m={m}, N={n}, max residual {covariance:.2e}.")
        return {
            "m": m,
            "N": n,
            "mu_min": estimate.mu_min,
            "max_covariance_residual": covariance,
            "max_unitarity_residual": unitarity,
            "max_eigenphase_drift": phases,
            "max_wilson_drift": traces,
        }

    cells = _map(workers, run, enumerate(grid))

    return GaugeReport(
        cells=cells,
        max_covariance_residual=max(c["max_covariance_residual"] for c in cells),
        max_unitarity_residual=max(c["max_unitarity_residual"] for c in cells),
        max_eigenphase_drift=max(c["max_eigenphase_drift"] for c in cells),
        max_wilson_drift=max(c["max_wilson_drift"] for c in cells),
        sequences=sequences,
        seed=seed,
    )


# ################################################################################
# feed-forward correction


@dataclass
class CorrectionReport:
    partition_sizes: list
    holonomy_errors: list
    left_errors: list
    right_errors: list
    left_infidelities: list
    right_infidelities: list
    holonomy_order: Optional[float]
    left_order: Optional[float]
    right_order: Optional[float]
    reference_raw_unitarity_error: float
    reference_unitarity_error: float
    convention_swap_discrepancy: float
    seed: int

    @property
    def final_infidelity(self):
        return max(self.left_infidelities[-1], self.right_infidelities[-1])


def correction_study(
    model,
    ladder=DEFAULT_LADDER,
    refine_factor=16,
    extrapolate=True,
    interval=(0.0, LOOP_SPAN),
    seed=0,
    workers=1,
):
    ladder = sorted(int(n) for n in ladder)
    finest = Partition(interval[0], interval[1], ladder[-1])

    u_ref = reference_transport(model, finest, refine_factor, extrapolate)
    raw_error = reference_unitarity_error(model, finest, refine_factor, extrapolate)

    v = haar_unitary(model.logical_rank, stream(seed, "correct", 0))
    left = synth_effective_gate(u_ref, v, Convention.LEFT)
    right = synth_effective_gate(u_ref, v, Convention.RIGHT)

    def run(n):
        u_hat = discrete_ordered_product(model, Partition(interval[0], interval[1], n))
        v_left = correct_left(u_hat, left)
        v_right = correct_right(right, u_hat)

        return (
            frobenius_norm(u_hat - u_ref),
            correction_error(v_left, v),
            correction_error(v_right, v),
            infidelity(v_left, v),
            infidelity(v_right, v),
            u_hat,
        )

    rows = _map(workers, run, ladder)
    meshes = [(interval[1] - interval[0]) / n for n in ladder]
    columns = list(zip(*rows))

    # what a left correction does to a right-acting gate
    swapped = dagger(columns[5][-1]) @ right.matrix

    report = CorrectionReport(
        partition_sizes=ladder,
        holonomy_errors=list(columns[0]),
        left_errors=list(columns[1]),
        right_errors=list(columns[2]),
        left_infidelities=list(columns[3]),
        right_infidelities=list(columns[4]),
        holonomy_order=_fit_or_none(meshes, columns[0], "correct: holonomy"),
        left_order=_fit_or_none(meshes, columns[1], "correct: left"),
        right_order=_fit_or_none(meshes, columns[2], "correct: right"),
        reference_raw_unitarity_error=raw_error,
        reference_unitarity_error=unitarity_residual(u_ref),
        convention_swap_discrepancy=correction_error(swapped, v),
        seed=seed,
    )

    logging.info(
        f"correct: orders {report.holonomy_order}, {report.left_order}, {report.right_order}"
        + f", final infidelity {report.final_infidelity:.2e}."
    )
    return report


# ################################################################################
# overlap noise and conditioning


def _unit_perturbations(rng, shape, kind="real"):
    if kind == "complex":
        e = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    elif kind == "real":
        e = rng.standard_normal(shape).astype(np.complex128)
    else:
        raise DomainError(f"unknown noise kind {kind!r}")

    norms = np.linalg.norm(e, ord=2, axis=(-2, -1))
    return e / norms[..., np.newaxis, np.newaxis]


def perturb_overlaps(overlaps, eta, rng, kind="real", tol=SINGULAR_TOL):
    """M_k + E_k with each E_k rescaled to spectral norm exactly eta."""
    if eta < 0.0:
        raise DomainError(f"noise magnitude must be non-negative, got {eta}")

    if eta == 0.0:
        return OverlapSequence(overlaps.overlaps.copy(), overlaps.min_singular_values.copy())

    return _perturb(overlaps, eta, _unit_perturbations(rng, overlaps.overlaps.shape, kind), tol)


def _perturb(overlaps, eta, directions, tol):
    perturbed = OverlapSequence.from_matrices(overlaps.overlaps + eta * directions)

    flagged = perturbed.flagged(tol)
    if flagged:
        logging.warning(
            f"perturbation eta={eta:.2e} left {len(flagged)} overlaps below tol,"
            + f" first at step {flagged[0]}."
        )

    return perturbed


def conditioned_overlaps(overlaps, mu):
    """polar(M_k) diag(1, ..., 1, mu): same comparators, sigma_min = mu."""
    if not 0.0 < mu <= 1.0:
        raise DomainError(f"conditioning level must lie in (0, 1], got {mu}")

    unitaries, _ = polar_batch(overlaps.overlaps, tol=0.0)
    scale = np.ones(overlaps.logical_rank)
    scale[-1] = mu

    return OverlapSequence(unitaries * scale, np.full(len(overlaps), float(mu)))


@dataclass
class NoiseReport:
    conditioning_levels: list
    noise_ratios: list
    mean_errors: list
    fitted_slopes: list
    mean_slope: Optional[float]
    trials_per_point: int
    seed: int
    kind: str
    baseline_mu_min: float
    baseline_unitarity_residual: float
    fixed_eta: float
    fixed_eta_errors: list
    conditioning_slope: Optional[float]
    fixed_eta_monotone: bool
    telescoping_violations: int
    max_unitarity_residual: float
    flagged_perturbations: int


def noise_study(
    path,
    mu_levels=DEFAULT_MU_LEVELS,
    rhos=None,
    trials=64,
    seed=0,
    workers=1,
    kind="real",
    fixed_eta=1e-6,
    tol=SINGULAR_TOL,
):
    """Holonomy error against the scaled noise ratio rho = eta / mu_min.

    Every (mu, rho) point reuses the same unit perturbation directions per
    trial, so the error compares perturbed and clean conditioned holonomies
    under identical noise shapes.
    """
    rhos = rho_grid() if rhos is None else np.asarray(rhos, dtype=float)
    mu_levels = [float(mu) for mu in mu_levels]

    clean = overlaps_from_frames(path, tol)
    if clean.mu_min <= BASELINE_MU_MIN:
        raise DomainError(
            f"noise baseline must be well conditioned, mu_min={clean.mu_min:.5f}"
        )

    baseline = estimate_holonomy(path, tol)
    logging.info(
        f"noise: baseline mu_min={clean.mu_min:.5f}"
        + f", residual={baseline.unitarity_residual:.2e}."
    )

    directions = [
        _unit_perturbations(stream(seed, "noise", t), clean.overlaps.shape, kind)
        for t in range(trials)
    ]

    def trial_errors(conditioned, transports, u_clean, eta):
        errors, violations, worst, flagged = [], 0, 0.0, 0

        for e in directions:
            perturbed = _perturb(conditioned, eta, e, tol)
            unitaries, _ = polar_batch(perturbed.overlaps, tol=0.0)

            flagged += len(perturbed.flagged(tol))
            noisy = dagger(unitaries)
            u = ordered_product(noisy)

            errors.append(frobenius_norm(u - u_clean))
            worst = max(worst, unitarity_residual(u))

            bound = telescoping_bound(transports, noisy)
            if operator_norm(u - u_clean) > bound + TELESCOPING_SLACK:
                violations += 1

        return float(np.mean(errors)), violations, worst, flagged

    def run(mu):
        conditioned = conditioned_overlaps(clean, mu)
        transports = forward_transports(conditioned, tol)
        u_clean = ordered_product(transports)

        row = [trial_errors(conditioned, transports, u_clean, rho * mu) for rho in rhos]
        fixed = trial_errors(conditioned, transports, u_clean, fixed_eta)

        return row, fixed

    outcomes = _map(workers, run, mu_levels)

    mean_errors, slopes = [], []
    violations, worst, flagged = 0, baseline.unitarity_residual, 0

    for mu, (row, fixed) in zip(mu_levels, outcomes):
        means = [r[0] for r in row]
        mean_errors.append(means)

        for r in row + [fixed]:
            violations += r[1]
            worst = max(worst, r[2])
            flagged += r[3]

        regime = [(rho, e) for rho, e in zip(rhos, means) if 0.0 < e < PERTURBATIVE_CUTOFF]
        slope = _fit_or_none([x for x, _ in regime], [y for _, y in regime], f"noise mu={mu}")
        slopes.append(slope)

        logging.info(f"noise: mu={mu}, slope={slope}.")

    fixed_errors = [fixed[0] for _, fixed in outcomes]
    fitted = [s for s in slopes if s is not None]

    # strictly increasing error as mu decreases
    by_mu = [e for _, e in sorted(zip(mu_levels, fixed_errors), reverse=True)]
    monotone = all(b > a for a, b in zip(by_mu, by_mu[1:]))

    report = NoiseReport(
        conditioning_levels=mu_levels,
        noise_ratios=[float(r) for r in rhos],
        mean_errors=mean_errors,
        fitted_slopes=slopes,
        mean_slope=float(np.mean(fitted)) if fitted else None,
        trials_per_point=int(trials),
        seed=seed,
        kind=kind,
        baseline_mu_min=clean.mu_min,
        baseline_unitarity_residual=baseline.unitarity_residual,
        fixed_eta=float(fixed_eta),
        fixed_eta_errors=fixed_errors,
        conditioning_slope=_fit_or_none(
            [1.0 / mu for mu in mu_levels], fixed_errors, "noise fixed-eta"
        ),
        fixed_eta_monotone=monotone,
        telescoping_violations=violations,
        max_unitarity_residual=worst,
        flagged_perturbations=flagged,
    )

    if violations:
        logging.error(f"noise: {violations} trials broke the telescoping bound!")

    return report
