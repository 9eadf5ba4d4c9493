import logging

import numpy as np
import pytest

from helpers.benchmarks import benchmark_connection, tangent_frame_loop
from helpers.errors import DomainError
from helpers.rng import stream
from helpers.studies import (
    abelian_study,
    conditioned_overlaps,
    connection_convergence,
    convergence_study,
    correction_study,
    fit_loglog_slope,
    frame_convergence,
    gauge_study,
    noise_study,
    perturb_overlaps,
    rho_grid,
)
from helpers.transport import (
    FramePath,
    OverlapSequence,
    forward_transports,
    ordered_product,
    overlaps_from_frames,
)


def constant_path(n):
    return FramePath(np.repeat(np.eye(3, 2)[np.newaxis], n + 1, axis=0), closed_subspace=True)


@pytest.fixture(scope="module")
def baseline():
    return tangent_frame_loop(0.7, 80)


# ################################################################################
# fits and grids


def test_slope_of_a_power_law():
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    assert fit_loglog_slope(xs, 3.0 * xs**2) == pytest.approx(2.0)


@pytest.mark.parametrize(
    "xs, ys",
    [
        ([1.0], [1.0]),
        ([1.0, 2.0], [1.0]),
        ([1.0, 2.0], [0.0, 1.0]),
        ([1.0, np.nan], [1.0, 2.0]),
    ],
)
def test_slope_fit_rejects_bad_data(xs, ys):
    with pytest.raises(DomainError):
        fit_loglog_slope(xs, ys)


def test_rho_grid():
    grid = rho_grid()

    assert len(grid) == 21
    assert grid[0] == pytest.approx(1e-6)
    assert grid[-1] == pytest.approx(1e-2)
    assert len(rho_grid(1e-6, 1e-4, 1)) == 3


# ################################################################################
# convergence


def test_connection_convergence_is_second_order():
    report = connection_convergence(benchmark_connection(), ladder=(40, 80, 160), refine_factor=4)

    assert report.partition_sizes == [40, 80, 160]
    assert report.fitted_order == pytest.approx(2.0, abs=0.1)
    assert report.errors[0] > report.errors[1] > report.errors[2]
    assert report.reference_eigenphases == pytest.approx([-0.70134, 0.70134], abs=1e-3)
    assert max(report.unitarity_residuals) < 1e-12
    assert report.failures == []


def test_frame_convergence_on_the_tangent_loop():
    report = frame_convergence(0.7, ladder=(40, 80, 160))

    assert report.fitted_order == pytest.approx(2.0, abs=0.1)
    assert report.finest_error < 1e-3
    assert min(report.mu_min_per_partition) > 0.9
    assert report.max_projector_steps[0] > report.max_projector_steps[-1]
    assert report.finest_eigenphases == pytest.approx([-1.47754, 1.47754], abs=1e-2)


def test_convergence_ladder_is_sorted_and_workers_do_not_change_results():
    serial = frame_convergence(0.7, ladder=(80, 20, 40))
    parallel = frame_convergence(0.7, ladder=(20, 40, 80), workers=3)

    assert serial.partition_sizes == [20, 40, 80]
    assert serial.errors == parallel.errors


def test_exact_estimates_skip_the_fit():
    report = convergence_study(constant_path, (10, 20, 40), np.eye(2))

    assert report.errors == pytest.approx([0.0, 0.0, 0.0])
    assert report.fitted_order is None


def test_failed_partition_is_recorded_and_skipped():
    e1, e2 = np.eye(2, 1), np.array([[0.0], [1.0]])

    def source(n):
        if n == 40:
            return FramePath(np.stack([e1, e2, e1]))
        return FramePath(np.repeat(e1[np.newaxis], n + 1, axis=0))

    report = convergence_study(source, (20, 40, 80), np.eye(1))

    assert report.partition_sizes == [20, 80]
    assert [f["N"] for f in report.failures] == [40]
    assert "step 0" in report.failures[0]["message"]


def test_report_rejects_ragged_columns():
    report = frame_convergence(0.7, ladder=(20, 40))

    with pytest.raises(DomainError):
        type(report)(**{**report.__dict__, "errors": [0.1]})


# ################################################################################
# abelian reduction


def test_abelian_study():
    report = abelian_study(0.7, ladder=(20, 40, 80), check_steps=2000)

    assert report.oracle_phase == pytest.approx(-np.pi * (1.0 - np.cos(0.7)))
    assert report.fitted_order == pytest.approx(2.0, abs=0.2)
    assert report.check_phase_error < 1e-4


def test_abelian_equator_is_exact():
    report = abelian_study(np.pi / 2, ladder=(20, 40), check_steps=100)

    assert max(report.errors) < 1e-13
    assert report.fitted_order is None


# ################################################################################
# gauge covariance


def test_gauge_study_is_covariant_and_reproducible():
    first = gauge_study(m_values=(2, 3), n_values=(20,), sequences=3, seed=4)
    second = gauge_study(m_values=(2, 3), n_values=(20,), sequences=3, seed=4, workers=2)

    assert [(c["m"], c["N"]) for c in first.cells] == [(2, 20), (3, 20)]
    assert first.max_covariance_residual < 1e-12
    assert first.max_unitarity_residual < 1e-12
    assert first.max_eigenphase_drift < 1e-10
    assert first.max_wilson_drift < 1e-10
    assert first.cells == second.cells


# ################################################################################
# correction


def test_correction_errors_track_the_holonomy_error():
    report = correction_study(benchmark_connection(), ladder=(20, 40, 80), refine_factor=4)

    assert report.left_errors == pytest.approx(report.holonomy_errors, rel=1e-9)
    assert report.right_errors == pytest.approx(report.holonomy_errors, rel=1e-9)
    assert report.left_order == pytest.approx(report.holonomy_order, abs=1e-6)
    assert report.right_order == pytest.approx(report.holonomy_order, abs=1e-6)
    assert report.final_infidelity < 1e-3
    assert report.reference_unitarity_error < 1e-13
    assert report.convention_swap_discrepancy > 1e-3


# ################################################################################
# overlap noise


def test_zero_noise_returns_a_copy(baseline):
    clean = overlaps_from_frames(baseline)
    same = perturb_overlaps(clean, 0.0, stream(0, "noise", 0))

    assert same is not clean
    assert np.array_equal(same.overlaps, clean.overlaps)


def test_noise_has_the_requested_spectral_norm(baseline):
    clean = overlaps_from_frames(baseline)

    for kind in ("complex", "real"):
        noisy = perturb_overlaps(clean, 1e-3, stream(0, "noise", 1), kind=kind)
        norms = np.linalg.norm(noisy.overlaps - clean.overlaps, ord=2, axis=(-2, -1))

        assert np.allclose(norms, 1e-3)
        assert np.all(np.abs(noisy.min_singular_values - clean.min_singular_values) <= 1e-3 + 1e-15)


def test_noise_rejects_bad_input(baseline):
    clean = overlaps_from_frames(baseline)

    with pytest.raises(DomainError):
        perturb_overlaps(clean, -1e-3, stream(0, "noise", 2))

    with pytest.raises(DomainError):
        perturb_overlaps(clean, 1e-3, stream(0, "noise", 2), kind="uniform")


def test_noise_on_singular_overlaps_is_flagged_not_raised(caplog):
    zeros = OverlapSequence(np.zeros((3, 2, 2)), np.zeros(3))

    with caplog.at_level(logging.WARNING):
        noisy = perturb_overlaps(zeros, 1e-14, stream(0, "noise", 3))

    assert len(noisy) == 3
    assert "below tol" in caplog.text


def test_conditioned_overlaps(baseline):
    clean = overlaps_from_frames(baseline)
    conditioned = conditioned_overlaps(clean, 0.5)
    sigma = np.linalg.svd(conditioned.overlaps, compute_uv=False)

    assert np.allclose(sigma[:, -1], 0.5)
    assert np.allclose(sigma[:, 0], 1.0)
    assert conditioned.mu_min == pytest.approx(0.5)

    for mu in (0.0, 1.5):
        with pytest.raises(DomainError):
            conditioned_overlaps(clean, mu)


def test_noise_error_is_linear_in_the_ratio(baseline):
    kwargs = dict(mu_levels=(0.5, 0.9), rhos=rho_grid(1e-6, 1e-4, 1), trials=8, seed=3)
    report = noise_study(baseline, **kwargs)

    assert report.baseline_mu_min > 0.9
    assert report.mean_slope == pytest.approx(1.0, abs=0.15)
    assert report.telescoping_violations == 0
    assert report.flagged_perturbations == 0
    assert report.max_unitarity_residual < 1e-12

    again = noise_study(baseline, workers=2, **kwargs)
    assert again.mean_errors == report.mean_errors
    assert again.fixed_eta_errors == report.fixed_eta_errors


def test_default_noise_conditioning_slope(baseline):
    report = noise_study(baseline, rhos=[1e-5], trials=4)

    assert report.kind == "real"
    assert report.conditioning_slope == pytest.approx(0.36445, abs=0.15)
    assert report.fixed_eta_monotone


def test_noise_study_uses_the_perturbed_overlaps(baseline):
    report = noise_study(baseline, mu_levels=(0.9,), rhos=[1e-6, 1e-5], trials=1, seed=5)

    conditioned = conditioned_overlaps(overlaps_from_frames(baseline), 0.9)
    noisy = perturb_overlaps(conditioned, 1e-6, stream(5, "noise", 0))
    error = np.linalg.norm(
        ordered_product(forward_transports(noisy)) - ordered_product(forward_transports(conditioned))
    )

    assert report.fixed_eta_errors[0] == pytest.approx(error, rel=1e-9)


def test_noise_baseline_must_be_well_conditioned():
    with pytest.raises(DomainError):
        noise_study(tangent_frame_loop(0.7, 6), rhos=[1e-5], trials=2)
