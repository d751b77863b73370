import math

import numpy as np
import pytest

from nld import (
    AffinityKernelSpec,
    BlowUpError,
    FeatureField,
    InsufficientDataError,
    KernelMatrix,
    MarkovStepper,
    OriginalStepper,
    ProposedStepper,
    StageWeights,
    cfl_verdict,
    eig_symmetric,
    estimate_decay_rate,
    evolve,
    poincare_constant,
    reverse_evolve,
    steady_state_check_original,
    step_original,
    step_proposed,
    variance_dissipation,
    verify_mean_preservation,
    verify_variance_decay,
)

from conftest import make_balanced_kernel, make_field

UNIFORM2 = KernelMatrix.from_entries(np.full((2, 2), 0.5))


# single steps


def test_step_proposed_zero_weight_is_identity():
    Z = make_field(1, 4, 2)
    assert np.array_equal(step_proposed(Z, make_balanced_kernel(1, 4), 0.0).values, Z.values)


def test_step_proposed_hand_value():
    Z = FeatureField(np.array([[1.0], [-1.0]]))
    out = step_proposed(Z, UNIFORM2, 0.5)
    assert np.array_equal(out.values, np.array([[0.5], [-0.5]]))


def test_step_proposed_fixes_constants():
    Z = FeatureField(np.full((2, 3), 2.5))
    out = step_proposed(Z, UNIFORM2, 0.7)
    assert np.array_equal(out.values, Z.values)


def test_step_proposed_matrix_weight():
    Z = FeatureField(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    W = np.array([[0.0, 0.0], [1.0, 0.0]])  # routes channel-0 updates into channel 1
    out = step_proposed(Z, UNIFORM2, W)
    assert np.array_equal(out.values, np.array([[1.0, -1.0], [-1.0, 1.0]]))


def test_step_proposed_rejects_mismatched_matrix_weight():
    Z = FeatureField(np.array([[1.0], [2.0]]))
    with pytest.raises(ValueError):
        step_proposed(Z, UNIFORM2, np.eye(3))


def test_step_proposed_is_linear():
    K = make_balanced_kernel(2, 6)
    Z1 = make_field(3, 6, 2)
    Z2 = make_field(4, 6, 2)
    a, b = 1.7, -0.4
    mix = FeatureField(a * Z1.values + b * Z2.values)
    lhs = step_proposed(mix, K, 0.7).values
    rhs = a * step_proposed(Z1, K, 0.7).values + b * step_proposed(Z2, K, 0.7).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_step_original_zero_weight_is_identity():
    Z = make_field(5, 4, 2)
    out = step_original(Z, AffinityKernelSpec.rbf(bandwidth=1.0), 0.0)
    assert np.array_equal(out.values, Z.values)


def test_step_original_dirac_full_damping():
    Z = make_field(6, 5, 3)
    out = step_original(Z, AffinityKernelSpec.dirac_delta(), -1.0)
    assert np.array_equal(out.values, np.zeros((5, 3)))


def test_step_original_single_position_halves():
    Z = FeatureField(np.array([[2.0]]))
    out = step_original(Z, AffinityKernelSpec.gaussian(), -0.5)
    assert np.array_equal(out.values, np.array([[1.0]]))


def test_step_original_is_not_linear():
    spec = AffinityKernelSpec.rbf(bandwidth=1.0)
    Z1 = make_field(7, 5, 2)
    Z2 = make_field(8, 5, 2)
    mix = FeatureField(Z1.values + Z2.values)
    lhs = step_original(mix, spec, -0.5).values
    rhs = step_original(Z1, spec, -0.5).values + step_original(Z2, spec, -0.5).values
    assert np.max(np.abs(lhs - rhs)) > 1e-6


# stage weights


def test_weights_broadcast_and_per_step():
    w = StageWeights.scalar(0.5)
    assert w.at(0, 10) == 0.5 and w.at(9, 10) == 0.5
    seq = StageWeights.coerce([0.1, 0.2, 0.3])
    assert seq.at(2, 3) == 0.3
    with pytest.raises(ValueError):
        seq.at(0, 4)
    with pytest.raises(ValueError):
        StageWeights(())


def test_weights_per_step_sequence_is_honored():
    K = KernelMatrix.from_entries(np.array([[0.9, 0.1], [0.1, 0.9]]))
    Z0 = FeatureField(np.array([[1.0], [-1.0]]))
    traj = evolve(Z0, ProposedStepper(K, [0.0, 1.0]), 2, record_states=True)
    assert np.array_equal(traj.states[1].values, Z0.values)
    assert np.allclose(traj.states[2].values, [[0.8], [-0.8]], rtol=0, atol=1e-15)


def test_weights_matrix_list_flag():
    assert StageWeights.coerce([np.eye(2), np.eye(2)]).all_matrices()
    assert not StageWeights.coerce([np.eye(2), 0.5]).all_matrices()


# evolve


def test_evolve_zero_steps_records_initial_only():
    Z0 = make_field(9, 3, 2)
    traj = evolve(Z0, MarkovStepper(make_balanced_kernel(9, 3)), 0)
    assert traj.steps == 0 and len(traj.per_step_stats) == 1
    assert traj.states is None
    assert traj.growth_factors() == ()


def test_evolve_markov_two_state_states(two_state_kernel, two_state_field):
    traj = evolve(two_state_field, MarkovStepper(two_state_kernel), 3, record_states=True)
    expect = [0.8, 0.64, 0.512]
    for n, top in enumerate(expect, start=1):
        assert np.allclose(
            traj.states[n].values, [[top], [-top]], rtol=0, atol=1e-12
        )
    assert traj.per_step_stats[1].l2_norm == pytest.approx(0.8 * math.sqrt(2.0), abs=1e-12)
    assert traj.per_step_stats[3].variance == pytest.approx(0.512**2, abs=1e-12)


def test_evolve_rejects_negative_step_count(two_state_kernel, two_state_field):
    with pytest.raises(ValueError):
        evolve(two_state_field, MarkovStepper(two_state_kernel), -1)


def test_evolve_blow_up_detection(exchange_kernel, two_state_field):
    with pytest.raises(BlowUpError) as err:
        evolve(two_state_field, ProposedStepper(exchange_kernel, 1.5), 100)
    # amplification is exactly 2 per step, so 2^40 is the first norm past 1e12
    assert err.value.step == 40
    assert err.value.max_abs == pytest.approx(2.0**40, rel=1e-12)
    partial = err.value.record
    assert partial.steps == 39
    for g in partial.growth_factors():
        assert g == pytest.approx(2.0, abs=1e-9)


def test_markov_stepper_validates_kernel():
    with pytest.raises(ValueError):
        MarkovStepper(KernelMatrix.from_entries(np.array([[2.0, 1.0], [1.0, 3.0]])))


def test_markov_matches_proposed_at_unit_weight():
    K = make_balanced_kernel(10, 8)
    Z0 = make_field(11, 8, 2)
    a = evolve(Z0, MarkovStepper(K), 50, record_states=True)
    b = evolve(Z0, ProposedStepper(K, 1.0), 50, record_states=True)
    worst = max(
        float(np.max(np.abs(x.values - y.values))) for x, y in zip(a.states, b.states)
    )
    assert worst <= 1e-14


# stability verdict


def test_cfl_zero_weight_always_stable(two_state_kernel):
    v = cfl_verdict(two_state_kernel, 0.0)
    assert v.spectral_radius == pytest.approx(1.0, abs=1e-12) and v.stable


def test_cfl_exchange_kernel_boundary(exchange_kernel):
    v = cfl_verdict(exchange_kernel, 1.0)
    assert v.spectral_radius == pytest.approx(1.0, abs=1e-12)
    assert v.stable
    assert v.critical_weight == pytest.approx(1.0, abs=1e-12)


def test_cfl_exchange_kernel_unstable(exchange_kernel):
    v = cfl_verdict(exchange_kernel, 1.5)
    assert v.spectral_radius == pytest.approx(2.0, abs=1e-9)
    assert not v.stable


def test_cfl_two_state_critical_weight(two_state_kernel):
    v = cfl_verdict(two_state_kernel, 0.5)
    assert v.stable
    assert v.critical_weight == pytest.approx(10.0, abs=1e-9)


def test_cfl_rejects_nonsymmetric():
    K = KernelMatrix.from_entries(np.array([[0.5, 0.5], [0.7, 0.3]]))
    with pytest.raises(ValueError):
        cfl_verdict(K, 0.5)


# reverse evolution


def test_reverse_zero_weight_is_identity(two_state_kernel, two_state_field):
    traj = reverse_evolve(two_state_field, two_state_kernel, 0.0, 3, record_states=True)
    for s in traj.states:
        assert np.array_equal(s.values, two_state_field.values)


def test_reverse_two_state_growth(two_state_kernel, two_state_field):
    traj = reverse_evolve(two_state_field, two_state_kernel, 1.0, 2, record_states=True)
    assert np.allclose(traj.states[1].values, [[1.2], [-1.2]], rtol=0, atol=1e-12)
    assert np.allclose(traj.states[2].values, [[1.44], [-1.44]], rtol=0, atol=1e-12)
    for g in traj.growth_factors():
        assert g == pytest.approx(1.2, abs=1e-12)


def test_reverse_rejects_negative_weight(two_state_kernel, two_state_field):
    with pytest.raises(ValueError):
        reverse_evolve(two_state_field, two_state_kernel, -0.5, 2)


def test_reverse_growth_bounded(two_state_kernel):
    w = 0.8
    Z0 = make_field(12, 2, 1)
    traj = reverse_evolve(Z0, two_state_kernel, w, 20)
    for g in traj.growth_factors():
        assert g <= 1.0 + 2.0 * w + 1e-12


def test_forward_then_reverse_composition_error():
    K = make_balanced_kernel(13, 6)
    Z0 = make_field(14, 6, 2)
    w = 0.3
    fwd = evolve(Z0, ProposedStepper(K, w), 1, record_states=True)
    rt = reverse_evolve(fwd.states[-1], K, w, 1, record_states=True)
    L = K.entries - np.eye(6)
    predicted = -(w * w) * (L @ (L @ Z0.values))
    assert np.max(np.abs((rt.states[-1].values - Z0.values) - predicted)) <= 1e-12
    # and the round trip genuinely misses Z0
    assert np.max(np.abs(rt.states[-1].values - Z0.values)) > 1e-6


# theorem checks


def test_mean_preserved_constant_field(two_state_kernel):
    Z0 = FeatureField(np.full((2, 2), 1.5))
    traj = evolve(Z0, MarkovStepper(two_state_kernel), 10)
    report = verify_mean_preservation(traj)
    assert report.passed and report.max_deviation == 0.0
    assert not report.assumption_violated


def test_mean_preserved_long_run():
    K = make_balanced_kernel(15, 16)
    Z0 = make_field(16, 16, 3)
    traj = evolve(Z0, ProposedStepper(K, 0.5), 200)
    report = verify_mean_preservation(traj)
    assert report.passed and report.max_deviation <= 1e-10


def test_mean_preservation_gate_on_nonsymmetric_kernel():
    K = KernelMatrix.from_entries(np.array([[0.5, 0.5], [0.7, 0.3]]))
    Z0 = FeatureField(np.array([[1.0], [-1.0]]))
    report = verify_mean_preservation(evolve(Z0, MarkovStepper(K), 5))
    assert report.assumption_violated and report.passed is None


def test_variance_decay_two_state(two_state_kernel, two_state_field):
    traj = evolve(two_state_field, MarkovStepper(two_state_kernel), 6)
    for n, s in enumerate(traj.per_step_stats):
        assert s.variance == pytest.approx(0.64**n, rel=1e-12)
    report = verify_variance_decay(traj)
    assert report.passed and report.max_increase == 0.0
    assert report.first_violation_step is None


def test_variance_decay_fails_for_unstable_weight(exchange_kernel, two_state_field):
    traj = evolve(two_state_field, ProposedStepper(exchange_kernel, 1.5), 5)
    report = verify_variance_decay(traj)
    assert report.passed is False
    assert report.first_violation_step == 0
    assert report.max_increase > 1.0


def test_variance_decay_constant_field(two_state_kernel):
    Z0 = FeatureField(np.full((2, 1), 3.0))
    traj = evolve(Z0, MarkovStepper(two_state_kernel), 5)
    for s in traj.per_step_stats:
        assert s.variance == 0.0
    assert verify_variance_decay(traj).passed


def test_energy_identity_single_markov_step():
    for seed in range(5):
        K = make_balanced_kernel(seed + 60, 7)
        Z0 = make_field(seed + 400, 7, 2)
        traj = evolve(Z0, MarkovStepper(K), 1)
        drop = traj.per_step_stats[0].variance - traj.per_step_stats[1].variance
        assert drop == pytest.approx(variance_dissipation(K, Z0), abs=1e-10)


def test_variance_dissipation_requires_balanced_kernel():
    K = KernelMatrix.from_entries(np.array([[0.5, 0.5], [0.7, 0.3]]))
    with pytest.raises(ValueError):
        variance_dissipation(K, FeatureField(np.array([[1.0], [0.0]])))


def test_decay_rate_two_state(two_state_kernel, two_state_field):
    traj = evolve(two_state_field, MarkovStepper(two_state_kernel), 200)
    fit = estimate_decay_rate(traj)
    assert fit.lambda_hat == pytest.approx(-math.log(0.8), rel=1e-6)
    assert fit.r_squared >= 0.9999


def test_decay_rate_needs_data(two_state_kernel):
    Z0 = FeatureField(np.full((2, 1), 2.0))
    traj = evolve(Z0, MarkovStepper(two_state_kernel), 10)
    with pytest.raises(InsufficientDataError):
        estimate_decay_rate(traj)


def test_decay_rate_against_spectral_gap():
    K = make_balanced_kernel(17, 8)
    vals, vecs = eig_symmetric(K.entries)
    lam2 = float(vals[1])
    Z0 = make_field(18, 8, 1)
    fit = estimate_decay_rate(evolve(Z0, MarkovStepper(K), 60))
    assert fit.lambda_hat >= (1.0 - lam2) - 1e-6
    eigstart = FeatureField(vecs[:, 1][:, None])
    fit2 = estimate_decay_rate(evolve(eigstart, MarkovStepper(K), 60))
    assert fit2.lambda_hat == pytest.approx(-math.log(lam2), rel=1e-6)


def test_decay_rate_stable_weighted_proposed():
    K = make_balanced_kernel(19, 8)
    vals, vecs = eig_symmetric(K.entries)
    lam2 = float(vals[1])
    w = 0.5
    eigstart = FeatureField(vecs[:, 1][:, None])
    fit = estimate_decay_rate(evolve(eigstart, ProposedStepper(K, w), 60))
    assert fit.lambda_hat == pytest.approx(-math.log(1.0 - w * (1.0 - lam2)), rel=1e-6)


# Poincare constant


def test_poincare_examples(two_state_kernel):
    assert poincare_constant(two_state_kernel) == pytest.approx(0.2, abs=1e-12)
    uniform = KernelMatrix.from_entries(np.full((4, 4), 0.25))
    assert poincare_constant(uniform) == pytest.approx(1.0, abs=1e-12)
    assert poincare_constant(KernelMatrix.from_entries(np.eye(3))) == 0.0


def test_poincare_rejects_unbalanced():
    K = KernelMatrix.from_entries(np.array([[0.5, 0.5], [0.7, 0.3]]))
    with pytest.raises(ValueError):
        poincare_constant(K)


def test_poincare_inequality_on_mean_zero_fields():
    for seed in range(5):
        K = make_balanced_kernel(seed + 80, 9)
        m = poincare_constant(K)
        raw = make_field(seed + 500, 9, 1).values
        z = raw - raw.mean(axis=0)
        diff = z[None, :, 0] - z[:, None, 0]
        lhs = float(np.sum(K.entries * diff * diff))
        assert lhs >= 2.0 * m * float(np.sum(z * z)) - 1e-10


# steady state of the original block


def test_steady_state_zero_field_fixed_point():
    Z0 = FeatureField(np.zeros((3, 2)))
    report = steady_state_check_original(
        AffinityKernelSpec.rbf(bandwidth=1.0), -0.5, Z0, 10, 1e-12
    )
    assert report.status == "passed" and report.final_inf_norm == 0.0


def test_steady_state_single_position_geometric():
    Z0 = FeatureField(np.array([[2.0]]))
    report = steady_state_check_original(
        AffinityKernelSpec.gaussian(), -0.5, Z0, 20, 2e-6
    )
    assert report.status == "passed"
    assert report.final_inf_norm == 2.0 * 0.5**20
    assert report.steps_run == 20
    assert report.decay_curve[0] == 2.0 and len(report.decay_curve) == 21


def test_steady_state_wrong_sign_blows_up():
    Z0 = FeatureField(np.array([[2.0]]))
    report = steady_state_check_original(
        AffinityKernelSpec.gaussian(), 0.5, Z0, 200, 1e-6
    )
    assert report.status == "blow_up"
    assert math.isinf(report.final_inf_norm)
    assert report.decay_curve[1] / report.decay_curve[0] == pytest.approx(1.5, abs=1e-12)


def test_steady_state_not_converged():
    Z0 = FeatureField(np.array([[2.0]]))
    report = steady_state_check_original(
        AffinityKernelSpec.gaussian(), -0.5, Z0, 3, 1e-10
    )
    assert report.status == "not_converged"
    assert report.final_inf_norm == 0.25


# trajectory record plumbing


def test_trajectory_csv_layout(two_state_kernel, two_state_field):
    traj = evolve(two_state_field, MarkovStepper(two_state_kernel), 2)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "step,mean_0,variance,l2,dist_to_mean"
    assert len(lines) == 4
    assert lines[1].startswith("0,")
    first = lines[1].split(",")
    assert float(first[1]) == 0.0
    assert float(first[2]) == pytest.approx(1.0, abs=1e-15)


def test_trajectory_stats_are_nonnegative():
    K = make_balanced_kernel(21, 6)
    traj = evolve(make_field(22, 6, 2), ProposedStepper(K, 0.5), 30)
    assert len(traj.per_step_stats) == traj.steps + 1
    for s in traj.per_step_stats:
        assert s.variance >= 0.0 and s.l2_norm >= 0.0 and s.dist_to_mean >= 0.0
