"""Tests for the fidelity, Schmidt-number and entanglement-of-formation bounds"""

import logging
import math

import mpmath
import numpy as np
import pytest

from qstate import (
    PureState, max_entangled, weighted_entangled, density_from_pure, isotropic_state,
    isotropic_for_fidelity, entanglement_entropy_pure, random_density_matrix, fidelity_to_target,
)
from measure import (
    plan_full, simulate_counts, RateTable, observable_labels, total_rate,
    estimate_diagonals, estimate_offdiagonals,
)
from certify import (
    REFERENCE_D32, CertRow, CertReport, Certifier,
    schmidt_number_bound, separability_threshold, white_noise_threshold, white_noise_fidelity,
    h_down_comp, h_up_comp, h_down_mub, h_up_mub, binary_entropy, eof_bound,
    eof_bound_from_reference_values, bootstrap_errors, bootstrap_samples, dropped_replicas, nested_analysis,
)
from utils import (
    compensated_sum, AssumptionViolatedError, InvalidParameterError, IncompleteDataError, ValidationError,
)


def _exact_table(rho, d, full_grid=False):
    return RateTable.from_records(simulate_counts(rho, plan_full(d, full_grid=full_grid), exact=True))


def test_mub_entropy_bounds_at_reported_fidelity():
    assert abs(h_down_mub(0.933, 32) - REFERENCE_D32["h_down_mub"]) < 0.005
    # the reported upper bound sits 0.017 below the value the formula gives
    assert abs(h_up_mub(0.933, 32) - REFERENCE_D32["h_up_mub"] - 0.017) < 0.002


@pytest.mark.parametrize("fidelity,d", [(0.933, 32), (0.5, 4), (1.0, 8), (0.2, 5)])
def test_h_up_mub_against_high_precision(fidelity, d):
    mpmath.mp.dps = 50
    f = mpmath.mpf(fidelity)
    expected = -f * mpmath.log(f / d, 2)
    if fidelity < 1:
        expected -= (1 - f) * mpmath.log((1 - f) / (d * d - d), 2)
    assert abs(h_up_mub(fidelity, d) - float(expected)) < 1e-9


def test_reference_values_combine_to_3_749():
    assert abs(eof_bound_from_reference_values() - 3.749) < 1e-3
    assert abs(eof_bound_from_reference_values() - REFERENCE_D32["eof"]) > 0.01


@pytest.mark.parametrize("fidelity,d,k", [
    (0.933, 32, 30), (0.5, 4, 2), (0.51, 4, 3), (1.0, 8, 8), (0.1, 4, 1), (0.0, 4, 1),
])
def test_schmidt_number_bound(fidelity, d, k):
    assert schmidt_number_bound(fidelity, d) == k


def test_schmidt_number_bound_rejects_bad_fidelity():
    with pytest.raises(InvalidParameterError):
        schmidt_number_bound(1.2, 4)


@pytest.mark.parametrize("d", range(2, 33))
def test_white_noise_threshold_meets_separable_fidelity(d):
    p = white_noise_threshold(d)
    assert abs(white_noise_fidelity(p, d) - separability_threshold(d)) < 1e-12


def test_h_up_mub_needs_fidelity_above_separable():
    with pytest.raises(AssumptionViolatedError):
        h_up_mub(0.1, 4)
    with pytest.raises(InvalidParameterError):
        h_down_mub(1.5, 4)


def test_computational_bounds_for_uniform_populations():
    d = 8
    diag = estimate_diagonals(_exact_table(density_from_pure(max_entangled(d)), d), d, 0.0)
    assert np.isclose(h_down_comp(diag), 3.0, atol=1e-12)
    assert np.isclose(h_up_comp(diag), 3.0, atol=1e-12)


def test_computational_bounds_bracket_when_population_is_missing():
    d, eps = 4, 1e-3
    diag = estimate_diagonals(_exact_table(density_from_pure(max_entangled(d)), d), d, eps)
    rest = 12 * eps
    p = (1 - rest) / d
    marginal = [p] * (d - 1) + [p + rest]
    assert np.isclose(h_down_comp(diag), -sum(x * math.log2(x) for x in marginal), atol=1e-12)
    expected_up = -d * p * math.log2(p) - rest * math.log2(rest / 12)
    assert np.isclose(h_up_comp(diag), expected_up, atol=1e-12)
    assert h_down_comp(diag) < h_up_comp(diag)


def test_binary_entropy():
    assert binary_entropy(0.0) == 0.0
    assert np.isclose(binary_entropy(0.5), 1.0)


@pytest.mark.parametrize("d", [2, 4, 8, 16, 32])
def test_maximally_entangled_state_is_certified_exactly(d):
    table = _exact_table(density_from_pure(max_entangled(d)), d)
    report = nested_analysis(table, [d], crosstalk_assumed=0.0)
    row = report.row(d)
    assert abs(row.fidelity - 1.0) < 1e-9
    assert row.schmidt == d
    assert abs(row.eof - math.log2(d)) < 1e-9


def test_nested_blocks_of_maximally_entangled_state():
    table = _exact_table(density_from_pure(max_entangled(32)), 32)
    dims = [2, 4, 8, 16, 32]
    report = nested_analysis(table, dims, crosstalk_assumed=0.0)
    assert [row.d for row in report.rows] == dims
    for row in report.rows:
        assert abs(row.fidelity - 1.0) < 1e-9
        assert abs(row.eof - math.log2(row.d)) < 1e-9


def test_isotropic_fidelity_with_full_grid():
    d, p = 4, 0.8
    row = Certifier().certify_dimension(_exact_table(isotropic_state(d, p), d, full_grid=True), d)
    assert abs(row.fidelity - white_noise_fidelity(p, d)) < 1e-12


def test_isotropic_fidelity_with_matching_crosstalk():
    d, p = 8, 0.9
    row = Certifier((1 - p) / d ** 2).certify_dimension(_exact_table(isotropic_state(d, p), d), d)
    assert abs(row.fidelity - white_noise_fidelity(p, d)) < 1e-12


def _random_pure_state(d, rng, schmidt_diagonal):
    if schmidt_diagonal:
        return weighted_entangled(rng.uniform(0.05, 1.0, size=d))
    amps = rng.normal(size=d * d) + 1j * rng.normal(size=d * d)
    return PureState(d, d, amps / np.linalg.norm(amps))


def test_eof_bound_never_exceeds_entanglement_of_pure_states():
    rng = np.random.default_rng(2020)
    certifier = Certifier(0.0)
    evaluated = 0
    for k in range(100):
        d = (2, 3, 4, 8)[k % 4]
        psi = _random_pure_state(d, rng, schmidt_diagonal=k % 2 == 0)
        table = _exact_table(density_from_pure(psi), d, full_grid=True)
        row = certifier.certify_dimension(table, d)
        if np.isnan(row.eof):
            continue
        evaluated += 1
        assert row.eof <= entanglement_entropy_pure(psi) + 1e-9
    assert evaluated >= 50


def test_bound_is_nan_below_separable_fidelity():
    d = 4
    table = _exact_table(isotropic_state(d, 0.05), d, full_grid=True)
    row = Certifier().certify_dimension(table, d)
    assert row.fidelity < separability_threshold(d)
    assert math.isnan(row.eof)
    assert row.schmidt == 1


def test_eof_bound_function_matches_row():
    d = 4
    rho = isotropic_state(d, 0.9)
    table = _exact_table(rho, d, full_grid=True)
    row = Certifier().certify_dimension(table, d)
    diag = estimate_diagonals(table, d)
    assert np.isclose(eof_bound(diag, row.fidelity, d), row.eof, atol=1e-12)
    assert row.eof <= math.log2(d)


def test_nested_analysis_validates_dimensions():
    table = _exact_table(density_from_pure(max_entangled(4)), 4)
    with pytest.raises(ValidationError):
        nested_analysis(table, [4, 2])
    with pytest.raises(ValidationError):
        nested_analysis(table, [1, 2])
    with pytest.raises(IncompleteDataError):
        nested_analysis(table, [2, 8])


def test_bootstrap_needs_enough_resamples():
    records = simulate_counts(isotropic_state(2, 0.9), plan_full(2), duration_s=1.0)
    with pytest.raises(InvalidParameterError):
        bootstrap_errors(records, lambda table: {}, n_resamples=10)


def test_bootstrap_is_seeded():
    records = simulate_counts(isotropic_state(4, 0.9), plan_full(4), seed=1, duration_s=1.0)
    first = nested_analysis(records, [2, 4], n_resamples=100, seed=9)
    again = nested_analysis(records, [2, 4], n_resamples=100, seed=9)
    for a, b in zip(first.rows, again.rows):
        assert a.fidelity_std == b.fidelity_std
        assert a.fidelity_std > 0
    assert first.meta["n_resamples"] == 100


def test_report_round_trip_keeps_rows():
    report = CertReport([CertRow(4, 0.9, 4, 1.2, 1.9, 2.0, 1.8, 2.3, 0.01, 0.05)], {"seed": 1})
    restored = CertReport.from_dict(report.to_dict())
    assert restored.row(4) == report.row(4)
    assert report.plot_rows()[0]["F_sep"] == 0.25
    with pytest.raises(ValidationError):
        CertRow(4, 0.9, 5, 1.2, 1.9, 2.0, 1.8, 2.3)
    with pytest.raises(ValidationError):
        CertRow(4, 0.9, 4, 2.5, 1.9, 2.0, 1.8, 2.3)


@pytest.mark.slow
def test_isotropic_d32_sampled_campaign():
    d, fidelity = 32, 0.933
    p = isotropic_for_fidelity(d, fidelity)
    records = simulate_counts(isotropic_state(d, p), plan_full(d), seed=20201)
    report = nested_analysis(records, [d], n_resamples=100, seed=7, crosstalk_assumed=(1 - p) / d ** 2)
    row = report.row(d)
    assert row.fidelity_std <= 0.003
    assert abs(row.fidelity - fidelity) <= 3 * row.fidelity_std
    assert row.schmidt >= 29
    assert row.eof > 3.0


@pytest.mark.parametrize("d", [2, 3, 16, 64])
def test_mub_bounds_meet_at_unit_fidelity(d):
    assert abs(h_down_mub(1.0, d) - math.log2(d)) < 1e-12
    assert abs(h_up_mub(1.0, d) - math.log2(d)) < 1e-12


@pytest.mark.parametrize("d", [2, 5, 32])
def test_schmidt_bound_steps_just_above_k_over_d(d):
    for k in range(1, d):
        assert schmidt_number_bound(k / d + 1e-6, d) == k + 1


def test_eof_bound_grows_with_fidelity():
    d = 8
    diag = estimate_diagonals(_exact_table(density_from_pure(max_entangled(d)), d), d, 0.0)
    grid = np.linspace(1.0 / d, 1.0, 40)
    values = [eof_bound(diag, f, d) for f in grid]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("seed", range(6))
def test_fidelity_from_exact_elements_matches_trace(seed):
    d = (2, 4, 8)[seed % 3]
    rho = random_density_matrix(d, seed=seed)
    row = Certifier().certify_dimension(_exact_table(rho, d, full_grid=True), d)
    assert abs(row.fidelity - fidelity_to_target(rho)) < 1e-12


def test_fidelity_error_scales_with_inverse_root_of_counts():
    rho = isotropic_state(4, 0.9)
    plan = plan_full(4)
    durations = (1.0, 10.0, 100.0, 1000.0)
    stds = []
    for duration in durations:
        records = simulate_counts(rho, plan, seed=4, duration_s=duration)
        report = nested_analysis(records, [4], n_resamples=100, seed=2)
        stds.append(report.row(4).fidelity_std)
    for coarse, fine in zip(stds, stds[1:]):
        assert 2.2 < coarse / fine < 4.5
    assert 20.0 < stds[0] / stds[-1] < 50.0


def test_near_pure_bootstrap_keeps_every_replica():
    d = 4
    records = simulate_counts(density_from_pure(max_entangled(d)), plan_full(d, full_grid=True),
                              seed=8, duration_s=2.0)
    report = nested_analysis(records, [d], n_resamples=200, seed=3, crosstalk_assumed=0.0)
    row = report.row(d)
    assert math.isfinite(row.eof) and math.isfinite(row.eof_std)
    assert row.eof_std > 0
    assert report.meta["bootstrap_dropped"] == {"4": 0}


def test_bootstrap_counts_replicas_without_a_value():
    records = simulate_counts(isotropic_state(2, 0.9), plan_full(2), seed=1, duration_s=1.0)
    calls = iter(range(1000))

    def pipeline(table):
        return {"x": float("nan") if next(calls) % 4 == 0 else table.rate(records[0].label)}

    samples = bootstrap_samples(records, pipeline, n_resamples=100, seed=6)
    assert samples["x"].size == 100
    assert dropped_replicas(samples) == {"x": 25}
    assert math.isfinite(bootstrap_errors(records, pipeline, n_resamples=100, seed=6)["x"])


def _boosted_phi_plus_table():
    table = _exact_table(density_from_pure(max_entangled(2)), 2, full_grid=True)
    rates = dict(table.rates)
    for sign, label in observable_labels(0, 1, "X", "X"):
        if sign > 0:
            rates[label] *= 1.1
    return table, RateTable(rates, table.variances)


def _elements(table, d):
    total, _ = total_rate(table, d, 0.0)
    return estimate_diagonals(table, d, 0.0), estimate_offdiagonals(table, d, total=total), total


def test_coherences_within_cauchy_schwarz_pass():
    certifier = Certifier(0.0)
    table, _ = _boosted_phi_plus_table()
    diag, offdiag, total = _elements(table, 2)
    assert abs(offdiag.re[(0, 1)] - 0.5) < 1e-12
    assert certifier.coherence_violations(table, diag, offdiag, total) == []


def test_overshooting_coherence_is_flagged_and_keeps_the_bound(caplog):
    certifier = Certifier(0.0)
    _, boosted = _boosted_phi_plus_table()
    diag, offdiag, total = _elements(boosted, 2)
    assert certifier.coherence_violations(boosted, diag, offdiag, total) == [(0, 1)]

    with caplog.at_level(logging.WARNING):
        row = certifier.certify_dimension(boosted, 2)
    assert "coherences above" in caplog.text
    assert row.fidelity > 1.02
    assert row.schmidt == 2
    assert abs(row.eof - 1.0) < 1e-9


@pytest.mark.parametrize("full_grid,crosstalk", [(True, 0.0), (False, 1e-4)])
def test_sampled_populations_sum_to_at_most_one(full_grid, crosstalk):
    d = 8
    records = simulate_counts(isotropic_state(d, 0.9), plan_full(d, full_grid=full_grid), seed=12,
                              duration_s=1.0)
    diag = estimate_diagonals(records, d, crosstalk)
    assert compensated_sum(diag.p_ab.values()) <= 1.0 + 1e-12
    assert diag.N <= 1.0 + 1e-12
