import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smcascade.core import CascadeSpec, InvalidInput, PredictionSet, ThresholdPolicy
from smcascade.evaluation import (
    Baseline,
    SweepMode,
    TradeoffCurve,
    TradeoffPoint,
    accuracy_gain_points,
    compare_policies,
    evaluate_policy,
    expected_energy,
    max_accuracy_summary,
    sm_histogram,
    sweep_alpha,
)
from smcascade.optimizer import build_class_slices, optimize_class_thresholds, policy_objective
from smcascade.synth import generate, heterogeneous_config, split

from oracles import continuous_instance, duplicated_class_instance, exact_total

seeds = st.integers(0, 2**32 - 1)


def cascade_for(ps, little=1.0, big=10.0):
    return CascadeSpec.two_stage(little, big, ps.class_count)


def manual_curve(rows, m1=(0.6, 1.0), m2=(0.9, 10.0)):
    pts = tuple(TradeoffPoint(a, ThresholdPolicy.global_threshold(0.5), acc, e, 0.0) for a, acc, e in rows)
    return TradeoffCurve(pts, Baseline(*m1), Baseline(*m2), SweepMode.PER_CLASS)


@pytest.mark.parametrize("rate, expected", [(0.0, 1.0), (1.0, 11.0), (0.5, 6.0)])
def test_expected_energy(rate, expected):
    assert expected_energy(CascadeSpec.two_stage(1, 10, 2), rate) == expected


def test_expected_energy_rejects_rate():
    with pytest.raises(InvalidInput):
        expected_energy(CascadeSpec.two_stage(1, 10, 2), 1.2)


def test_half_escalation_energy():
    ps = PredictionSet.from_arrays([0, 1], [[0.9, 0.1], [0.55, 0.45]], [[1, 0], [0, 1]])
    rep = evaluate_policy(ps, ThresholdPolicy.global_threshold(0.5), cascade_for(ps))
    assert (rep.escalation_rate, rep.mean_energy_mj, rep.accuracy) == (0.5, 6.0, 1.0)
    assert [(b.m_c, b.fp, b.escalations) for b in rep.per_class] == [(2, 0, 1), (0, 0, 0)]


def test_evaluate_dimension_mismatch():
    ps = PredictionSet.from_arrays([0], [[0.9, 0.1]], [[1, 0]])
    with pytest.raises(InvalidInput):
        evaluate_policy(ps, ThresholdPolicy.global_threshold(0.5), CascadeSpec.two_stage(1, 10, 3))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_report_invariants(seed):
    rng = np.random.default_rng(seed)
    ps = continuous_instance(rng)
    cas = CascadeSpec.two_stage(float(rng.uniform(0, 5)), float(rng.uniform(5, 50)), ps.class_count)
    rep = evaluate_policy(ps, ThresholdPolicy.per_class(rng.random(ps.class_count)), cas)
    assert rep.mean_energy_mj == cas.little_mj + cas.big_mj * rep.escalation_rate
    assert sum(b.m_c for b in rep.per_class) == len(ps)
    top = evaluate_policy(ps, ThresholdPolicy.per_class([1.0] * ps.class_count), cas)
    assert top.accuracy == ps.stage_accuracy(2)
    assert top.escalation_rate == 1.0


def test_sweep_orders_alphas_and_matches_optimizer():
    ps = generate(heterogeneous_config([0.6, 0.9, 0.8], 300, seed=3))
    val, test = split(ps, 0.5, seed=3)
    curve = sweep_alpha(val, test, cascade_for(ps), alphas=[1.0, 0.0, 0.2])
    assert [p.alpha for p in curve.points] == [0.0, 0.2, 1.0]
    assert curve.points[2].policy == optimize_class_thresholds(val, 1.0).policy()
    assert curve.baseline_m1 == Baseline(test.stage_accuracy(1), 1.0)
    with pytest.raises(InvalidInput):
        sweep_alpha(val, test, cascade_for(ps), alphas=[])


def test_sweep_perfect_little_model():
    s1 = [[0.8, 0.2], [0.3, 0.7], [0.5, 0.5]]
    ps = PredictionSet.from_arrays([0, 1, 0], s1, s1)
    curve = sweep_alpha(ps, ps, cascade_for(ps), alphas=[0])
    assert curve.points[0].accuracy == ps.stage_accuracy(1)
    # the tied sample sits at margin 0 and escalates even at th=0
    assert curve.points[0].escalation_rate == pytest.approx(1 / 3)


def test_gain_point_matching():
    curve = manual_curve([(0, 0.65, 3.0), (1, 0.75, 5.0), (2, 0.9, 8.0), (3, 0.8, 2.5)])
    got = accuracy_gain_points(curve, [0.0, 0.5, 1.0])
    assert [g.mean_energy_mj for g in got] == [2.5, 2.5, 8.0]
    assert got[1].target_accuracy == pytest.approx(0.75)
    assert not accuracy_gain_points(manual_curve([(0, 0.7, 2.0)]), [1.0])[0].reachable


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 20)), min_size=1, max_size=12),
       st.floats(0, 1), st.floats(0, 1))
def test_gain_energy_monotone_in_quantile(rows, q1, q2):
    curve = manual_curve([(i, a, e) for i, (a, e) in enumerate(rows)])
    lo, hi = accuracy_gain_points(curve, sorted([q1, q2]))
    if lo.reachable and hi.reachable:
        assert lo.mean_energy_mj <= hi.mean_energy_mj


def test_compare_identical_curves():
    curve = manual_curve([(0, 0.65, 3.0), (1, 0.9, 8.0)])
    rows = compare_policies(curve, curve, [0.25, 0.5, 1.0])
    assert [r.relative_difference for r in rows] == [0.0, 0.0, 0.0]


def test_compare_unreachable_and_mismatch():
    a = manual_curve([(0, 0.95, 3.0)])
    b = manual_curve([(0, 0.7, 3.0)])
    rows = compare_policies(a, b, [0.25, 1.0])
    assert rows[0].relative_difference == 0.0
    assert rows[1].relative_difference is None
    with pytest.raises(InvalidInput):
        compare_policies(a, manual_curve([(0, 0.9, 1.0)], m1=(0.5, 1.0)))


def test_compare_duplicated_classes_is_zero():
    rng = np.random.default_rng(8)
    ps = duplicated_class_instance(rng, 4, n=80)
    cas = cascade_for(ps)
    alphas = [0, 0.05, 0.2, 1, 5]
    pc = sweep_alpha(ps, ps, cas, alphas, SweepMode.PER_CLASS)
    gl = sweep_alpha(ps, ps, cas, alphas, SweepMode.GLOBAL)
    for r in compare_policies(pc, gl, [0.25, 0.5, 0.75, 1.0]):
        assert r.relative_difference in (0.0, None)
        assert r.energy_per_class == r.energy_global


def test_default_instance_comparison():
    ps = generate(heterogeneous_config([0.5, 0.6, 0.8, 0.9, 0.95], 2000, seed=42))
    val, test = split(ps, 0.5, seed=42)
    cas = cascade_for(ps)
    pc = sweep_alpha(val, test, cas, mode=SweepMode.PER_CLASS)
    gl = sweep_alpha(val, test, cas, mode=SweepMode.GLOBAL)
    rel = [r.relative_difference for r in compare_policies(pc, gl)]
    assert sum(1 for r in rel if r is not None and r <= 0) > len(rel) / 2


@settings(max_examples=20, deadline=None)
@given(seeds, st.sampled_from([0.0, 0.05, 1.0]))
def test_dominance_on_optimization_set(seed, alpha):
    ps = continuous_instance(np.random.default_rng(seed))
    cas = cascade_for(ps)
    pc = sweep_alpha(ps, ps, cas, [alpha], SweepMode.PER_CLASS).points[0].policy
    gl = sweep_alpha(ps, ps, cas, [alpha], SweepMode.GLOBAL).points[0].policy
    a = policy_objective(ps, pc, alpha)
    b = policy_objective(ps, gl, alpha)
    assert exact_total(a.fp, a.escalations, alpha) <= exact_total(b.fp, b.escalations, alpha)


def test_histogram_examples():
    ps = PredictionSet.from_arrays([0, 0, 1], [[0.5, 0.5], [1.0, 0.0], [0.2, 0.8]], [[1, 0]] * 3)
    h = sm_histogram(ps, 0, 2)
    assert h.correct_counts.tolist() == [1, 1]
    assert h.incorrect_counts.tolist() == [0, 0]
    assert h.bin_edges.tolist() == [0.0, 0.5, 1.0]
    empty = sm_histogram(PredictionSet.from_arrays([0], [[0.9, 0.1]], [[1, 0]]), 1, 4)
    assert empty.correct_counts.sum() + empty.incorrect_counts.sum() == 0
    with pytest.raises(InvalidInput):
        sm_histogram(ps, 2)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 40))
def test_histogram_partitions_slice(seed, bins):
    ps = continuous_instance(np.random.default_rng(seed))
    for sl in build_class_slices(ps):
        h = sm_histogram(ps, sl.class_id, bins)
        assert len(h.correct_counts) == len(h.incorrect_counts) == len(h.bin_edges) - 1
        assert h.correct_counts.sum() + h.incorrect_counts.sum() == len(sl)


def test_max_accuracy_summary():
    one = manual_curve([(0, 0.9, 11.0)])
    s = max_accuracy_summary(one)
    assert (s.accuracy, s.mean_energy_mj, s.delta_vs_m2_accuracy, s.delta_vs_m2_energy) == (0.9, 11.0, 0.0, 1.0)
    s = max_accuracy_summary(manual_curve([(0, 0.8, 2.0), (1, 0.85, 6.0), (2, 0.85, 4.0)]))
    assert (s.alpha, s.mean_energy_mj) == (2, 4.0)
    with pytest.raises(InvalidInput):
        max_accuracy_summary(manual_curve([]))


def test_always_escalate_summary_from_sweep():
    ps = generate(heterogeneous_config([0.6, 0.9], 200, seed=1))
    cas = cascade_for(ps)
    rep = evaluate_policy(ps, ThresholdPolicy.global_threshold(1.0), cas)
    assert rep.accuracy == ps.stage_accuracy(2)
    assert rep.mean_energy_mj == 11.0
