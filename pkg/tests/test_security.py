import json
import math

import numpy as np
import pytest

from eprqkd.attacks import AttackSpec, apply_attack, eve_conditional_quality, tradeoff_experiment
from eprqkd.criteria import CriterionResult, EprStatistics
from eprqkd.gaussian import make_vacuum, two_mode_squeezer
from eprqkd.security import (
    UNBOUNDED,
    ChainReport,
    JointConditionalTable,
    analytic_joint_table,
    average_inference_bound,
    bound_to_json,
    bounds_report,
    bootstrap_table_checks,
    build_security_report,
    conditional_uncertainty_check,
    floor_two_significant,
    gaussian_error_rates,
    identical_stats_contradiction,
    narrowness_bound,
    normal_upper_tail,
    perfect_correlation_verdict,
    sigma_regime_classifier,
)


def _stats(dx, dp, per_bin_x=None, per_bin_p=None, delta=None):
    return EprStatistics(
        delta_inf_x=dx,
        delta_inf_p=dp,
        gain_g=1.0,
        gain_h=1.0,
        offset_d=0.0,
        offset_d_p=0.0,
        product=dx * dp,
        binned_variance={"x": dx**2, "p": dp**2},
        per_bin_variances={"x": per_bin_x or {}, "p": per_bin_p or {}},
        sample_counts={"x": {}, "p": {}},
        excluded_fraction={"x": 0.0, "p": 0.0},
        delta_narrow=delta,
        n_slots={"x": 1000, "p": 1000},
    )


def test_normal_upper_tail_values():
    assert abs(2 * normal_upper_tail(3.0) - 0.0026997960632601866) < 1e-15
    assert abs(2 * normal_upper_tail(1.0) - 0.31731050786291415) < 1e-15
    assert abs(2 * normal_upper_tail(1.5) - 0.13361440253771617) < 1e-15


def test_gaussian_error_rates_pinned():
    rates = gaussian_error_rates(0.4, 1.0)
    # Bob's rate is independent of sigma: 2 Q(3) = 0.002700 to 4 s.f.
    assert round(rates.bob_rate, 6) == 0.002700
    # sigma = 1/3 with eve_std = 1 = 3*sigma: 2 Q(1) = 0.3173 to 4 s.f.
    rates = gaussian_error_rates(1.0 / 3.0, 1.0)
    assert round(rates.eve_rate, 4) == 0.3173
    # sigma = 0.7 with the conservatively floored bound 1.4: 2 Q(1.5).
    rates = gaussian_error_rates(0.7, 1.4)
    assert abs(rates.eve_rate - 0.13361440253771617) < 1e-12
    with pytest.raises(ValueError):
        gaussian_error_rates(-1.0, 1.0)


def test_eve_rate_monotone_in_eve_std():
    # A fuzzier eavesdropper errs more: the rate grows with her deviation.
    sigma = 0.5
    stds = np.linspace(0.2, 5.0, 40)
    rates = [gaussian_error_rates(sigma, s).eve_rate for s in stds]
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_sigma_regime_classifier():
    assert sigma_regime_classifier(0.3) == "narrow"
    assert sigma_regime_classifier(0.33333) == "narrow"
    assert sigma_regime_classifier(0.5) == "weak"
    assert sigma_regime_classifier(0.6) == "indeterminate"
    assert sigma_regime_classifier(0.7) == "indeterminate"
    with pytest.raises(ValueError):
        sigma_regime_classifier(0.0)


def test_narrowness_bound():
    bound = narrowness_bound(0.5)
    assert bound.eve_min_std == 2.0
    assert bound.demonstrative
    boundary = narrowness_bound(1.0)
    assert boundary.eve_min_std == 1.0
    assert not boundary.demonstrative
    with pytest.raises(ValueError):
        narrowness_bound(0.0)


def test_average_inference_bound():
    assert abs(average_inference_bound(0.7) - 1.4285714285714286) < 1e-15
    assert average_inference_bound(1.0) == 1.0
    for v in (0.2, 0.9, 3.7):
        assert abs(average_inference_bound(average_inference_bound(v)) - v) < 1e-12
    with pytest.raises(ValueError):
        average_inference_bound(0.0)


def test_floor_two_significant():
    assert floor_two_significant(1.4285714) == 1.4
    assert floor_two_significant(3.0) == 3.0
    assert floor_two_significant(0.987) == 0.98
    assert floor_two_significant(20.0) == 20.0


def test_perfect_correlation_verdict():
    perfect = _stats(0.0, 0.0, {0: 0.0, 1: 0.0}, {0: 0.0})
    assert perfect_correlation_verdict(perfect) == "perfect_secure"
    mixed = _stats(0.1, 0.1, {0: 0.0, 1: 0.1}, {0: 0.0})
    assert perfect_correlation_verdict(mixed) == "bounded_secure"
    r1 = _stats(0.5, 0.5, {0: 0.26}, {0: 0.27})
    assert perfect_correlation_verdict(r1) == "bounded_secure"


def test_unbounded_marker_serialization():
    assert bound_to_json(UNBOUNDED) == "unbounded"
    assert bound_to_json(1.5) == 1.5
    assert bound_to_json(None) is None
    assert repr(UNBOUNDED) == "unbounded"


def _synthetic_table(var_x, var_p, counts=1000):
    var_x = np.asarray(var_x, dtype=float)
    shape = var_x.shape
    prob = np.full(shape, 1.0 / var_x.size)
    count = np.full(shape, counts)
    return JointConditionalTable(
        bob_bins=np.arange(shape[0]),
        eve_bins=np.arange(shape[1]),
        prob=prob,
        var_x=var_x,
        var_p=np.asarray(var_p, dtype=float),
        count_x=count.copy(),
        count_p=count.copy(),
        bob_marginal_prob=prob.sum(axis=1),
        bob_marginal_var=np.asarray(var_x, dtype=float).mean(axis=1),
        bob_marginal_count=count.sum(axis=1),
        eve_marginal_prob=prob.sum(axis=0),
        eve_marginal_var=np.asarray(var_p, dtype=float).mean(axis=0),
        eve_marginal_count=count.sum(axis=0),
        bin_width=0.5,
        min_count=2,
    )


def test_uncertainty_check_flags_violation():
    table = _synthetic_table([[2.0, 2.0], [2.0, 0.125]], [[2.0, 2.0], [2.0, 2.0]])
    result = conditional_uncertainty_check(table)
    assert not result.passed
    assert result.worst_cell == (1, 1)
    assert abs(result.worst_product - 0.5) < 1e-12


def test_uncertainty_check_passes_on_vacuum_like_table():
    table = _synthetic_table(np.full((3, 3), 1.2), np.full((3, 3), 1.1))
    result = conditional_uncertainty_check(table)
    assert result.passed
    assert result.n_checked == 9


def test_table_validation():
    table = _synthetic_table(np.full((2, 2), 1.0), np.full((2, 2), 1.0))
    table.validate()
    bad = _synthetic_table(np.full((2, 2), 1.0), np.full((2, 2), 1.0))
    object.__setattr__(bad, "prob", bad.prob * 0.5)
    with pytest.raises(ValueError):
        bad.validate()


def test_chain_cauchy_schwarz_on_random_tables():
    # The pooled-product >= squared-average step is unconditional; check it
    # numerically on random variance grids.
    rng = np.random.default_rng(5)
    for _ in range(200):
        shape = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        var_x = rng.uniform(0.05, 4.0, shape)
        var_p = rng.uniform(0.05, 4.0, shape)
        table = _synthetic_table(var_x, var_p)
        report = identical_stats_contradiction(None, table)
        assert report.pooled_product >= report.cs_lower - 1e-12


def test_chain_honest_state_contradiction():
    # Exact conditionals of the r = 1 source with a trivial vacuum Eve mode.
    r = 1.0
    state, mode_map = apply_attack(
        two_mode_squeezer(r, 0, 1).apply(make_vacuum(2)),
        AttackSpec.beamsplitter_tap(1.0, "bob"),
    )
    strategy = eve_conditional_quality(state, mode_map, math.pi / 2)
    table = analytic_joint_table(state, 0, 0.0, (1, 0.0), strategy.quadratures())
    measured = _stats(1 / math.sqrt(math.cosh(2 * r)), 1 / math.sqrt(math.cosh(2 * r)))
    report = identical_stats_contradiction(measured, table)
    assert report.cs_lower >= 1.0 - 1e-9
    assert report.marginal_product >= report.pooled_product - 1e-9
    assert report.pooled_product >= report.cs_lower - 1e-9
    assert report.hypothesis_refuted
    assert report.holds()
    # Vacuum source: product 1, nothing to refute.
    vac_state, vac_map = apply_attack(make_vacuum(2), AttackSpec.beamsplitter_tap(1.0, "bob"))
    vac_strategy = eve_conditional_quality(vac_state, vac_map, math.pi / 2)
    vac_table = analytic_joint_table(vac_state, 0, 0.0, (1, 0.0), vac_strategy.quadratures())
    vac_report = identical_stats_contradiction(_stats(1.0, 1.0), vac_table)
    assert not vac_report.hypothesis_refuted
    assert vac_report.cs_lower >= 1.0 - 1e-9
    payload = vac_report.to_json_dict()
    assert json.dumps(payload)  # serializable


def test_empirical_table_from_tradeoff_experiment():
    state, mode_map = apply_attack(
        two_mode_squeezer(1.0, 0, 1).apply(make_vacuum(2)),
        AttackSpec.beamsplitter_tap(0.5, "bob"),
    )
    data = tradeoff_experiment(state, mode_map, 60_000, np.random.default_rng(8))
    table, step_se = bootstrap_table_checks(
        data.bob_values, data.eve_values, data.alice_values, data.alice_primary,
        n_bootstrap=40, rng=np.random.default_rng(9),
    )
    table.validate()
    report = identical_stats_contradiction(None, table, step_se=step_se)
    assert report.holds(n_se=3.0)
    check = conditional_uncertainty_check(table)
    assert check.passed


def test_build_security_report_paths():
    # Average-inference path (no usable narrowness half-width).
    stats = _stats(0.515, 0.515)
    criterion = CriterionResult(stats.product, True, 0.25, 0.28, 200)
    report = build_security_report(stats, criterion)
    assert report.verdict == "bounded_secure"
    assert report.hypothesis == "average_inference"
    assert abs(report.eve_bound_p - 1.0 / 0.515) < 1e-12
    assert report.eve_std_floor_conservative == floor_two_significant(1.0 / 0.515)
    assert round(report.bob_error_rate_pred, 4) == 0.0027

    # Narrowness path: a measured half-width below 1 switches the hypothesis.
    narrow = _stats(0.19, 0.19, delta=0.57)
    report = build_security_report(narrow, CriterionResult(narrow.product, True, 0.03, 0.05, 200))
    assert report.hypothesis == "per_outcome_narrowness"
    assert abs(report.eve_std_floor - 1.0 / 0.57) < 1e-12

    # Criterion CI reaching 1 blocks the security claim.
    weak = _stats(1.0, 1.0)
    report = build_security_report(weak, CriterionResult(1.0, False, 0.98, 1.02, 200))
    assert report.verdict == "insecure_indeterminate"

    perfect = _stats(0.0, 0.0, {0: 0.0}, {0: 0.0})
    report = build_security_report(perfect, CriterionResult(0.0, True))
    assert report.verdict == "perfect_secure"
    assert report.eve_bound_x is UNBOUNDED
    assert json.dumps(report.to_json_dict())


def test_bounds_report_sigma_worked_case():
    report = bounds_report(sigma=0.7)
    assert report["regime"] == "indeterminate"
    assert abs(report["eve_std_floor"] - 1.4285714285714286) < 1e-12
    assert report["eve_std_floor_conservative"] == 1.4
    assert abs(report["eve_rate_gaussian"] - 0.13361440253771617) < 1e-12
    assert abs(report["eve_rate_gaussian_exact"] - 2 * normal_upper_tail(3 * 0.7 / (1 / 0.7))) < 1e-12
    assert round(report["bob_rate_gaussian"], 4) == 0.0027
    assert report["gaussian_assumption_only"]


def test_bounds_report_other_selectors():
    report = bounds_report(delta=0.5)
    assert report["eve_min_std"] == 2.0
    report = bounds_report(dinf=0.7)
    assert abs(report["eve_min_std"] - 1.4285714285714286) < 1e-12
    narrow = bounds_report(sigma=0.33333)
    assert narrow["regime"] == "narrow"
    assert round(narrow["eve_rate_gaussian"], 4) == 0.3173
    with pytest.raises(ValueError):
        bounds_report(sigma=0.5, delta=0.5)
    with pytest.raises(ValueError):
        bounds_report()


def test_chain_report_holds_tolerances():
    report = ChainReport(
        marginal_product=1.01,
        pooled_product=1.02,  # slightly out of order
        cs_lower=1.0,
        skipped_mass=0.0,
        step_se={"marginal_minus_pooled": 0.01, "pooled_minus_cs": 0.0, "cs_lower": 0.0},
    )
    assert report.holds(n_se=3.0)
    assert not report.holds(n_se=0.1)
