"""Cascade metrics, the expected-energy model and trade-off curves."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    CascadeSpec,
    InvalidInput,
    PredictionSet,
    ThresholdPolicy,
    decide_all,
)
from .optimizer import (
    build_class_slices,
    escalations_for_class,
    false_positives_for_class,
    optimize_class_thresholds,
    optimize_global_threshold,
)

DEFAULT_ALPHAS = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0)
DEFAULT_QUANTILES = (0.25, 0.5, 0.75, 1.0)

# Slack when matching a curve point to an accuracy target; absorbs the
# rounding of acc(M1) + q * (acc(M2) - acc(M1)).
ACCURACY_SLACK = 1e-12


class SweepMode(enum.Enum):
    PER_CLASS = "per_class"
    GLOBAL = "global"


@dataclass(frozen=True)
class ClassBreakdown:
    class_id: int
    m_c: int
    fp: int
    escalations: int
    th_used: float


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    mean_energy_mj: float
    escalation_rate: float
    per_class: tuple[ClassBreakdown, ...]
    stage1_accuracy: float
    stage2_accuracy: float
    sample_count: int

    @property
    def stage_accuracies(self) -> dict[str, float]:
        return {"stage1": self.stage1_accuracy, "stage2": self.stage2_accuracy}


@dataclass(frozen=True)
class Baseline:
    accuracy: float
    energy_mj: float


@dataclass(frozen=True)
class TradeoffPoint:
    alpha: float
    policy: ThresholdPolicy
    accuracy: float
    mean_energy_mj: float
    escalation_rate: float


@dataclass(frozen=True)
class TradeoffCurve:
    points: tuple[TradeoffPoint, ...]
    baseline_m1: Baseline
    baseline_m2: Baseline
    mode: SweepMode = SweepMode.PER_CLASS


@dataclass(frozen=True)
class GainPoint:
    """Energy needed to reach a fraction ``quantile`` of the M1->M2 accuracy gap.

    ``mean_energy_mj`` is ``None`` when no curve point reaches the target.
    """

    quantile: float
    target_accuracy: float
    mean_energy_mj: float | None

    @property
    def reachable(self) -> bool:
        return self.mean_energy_mj is not None


@dataclass(frozen=True)
class PolicyComparison:
    quantile: float
    target_accuracy: float
    energy_per_class: float | None
    energy_global: float | None
    relative_difference: float | None


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    correct_counts: np.ndarray
    incorrect_counts: np.ndarray


@dataclass(frozen=True)
class MaxAccuracySummary:
    accuracy: float
    mean_energy_mj: float
    delta_vs_m2_accuracy: float
    delta_vs_m2_energy: float
    alpha: float

    @property
    def relative_energy_vs_m2(self) -> float | None:
        m2 = self.mean_energy_mj - self.delta_vs_m2_energy
        return self.delta_vs_m2_energy / m2 if m2 else None


def expected_energy(cascade: CascadeSpec, escalation_rate: float) -> float:
    """Mean energy per input: little model always, big model at ``escalation_rate``."""
    rate = float(escalation_rate)
    if not 0.0 <= rate <= 1.0:
        raise InvalidInput(f"escalation rate {escalation_rate!r} outside [0, 1]")
    return cascade.little_mj + cascade.big_mj * rate


def _check_dims(predictions: PredictionSet, cascade: CascadeSpec):
    if predictions.class_count != cascade.class_count:
        raise InvalidInput(
            f"cascade declares {cascade.class_count} classes, data has {predictions.class_count}"
        )
    if not len(predictions):
        raise InvalidInput("cannot evaluate on an empty prediction set")


def evaluate_policy(
    predictions: PredictionSet, policy: ThresholdPolicy, cascade: CascadeSpec
) -> EvaluationReport:
    _check_dims(predictions, cascade)
    outcome = decide_all(predictions, policy)
    n = len(predictions)
    correct = int(np.count_nonzero(outcome.predicted == predictions.true_labels))
    rate = int(np.count_nonzero(outcome.escalated)) / n
    th_arr = policy.threshold_array(predictions.class_count)
    per_class = []
    for sl in build_class_slices(predictions):
        th = float(th_arr[sl.class_id])
        per_class.append(
            ClassBreakdown(
                sl.class_id,
                len(sl),
                false_positives_for_class(sl, th),
                escalations_for_class(sl, th),
                th,
            )
        )
    return EvaluationReport(
        accuracy=correct / n,
        mean_energy_mj=expected_energy(cascade, rate),
        escalation_rate=rate,
        per_class=tuple(per_class),
        stage1_accuracy=predictions.stage_accuracy(1),
        stage2_accuracy=predictions.stage_accuracy(2),
        sample_count=n,
    )


def baselines(test_set: PredictionSet, cascade: CascadeSpec) -> tuple[Baseline, Baseline]:
    """Little-only and big-only operating points."""
    return (
        Baseline(test_set.stage_accuracy(1), cascade.little_mj),
        Baseline(test_set.stage_accuracy(2), cascade.big_mj),
    )


def sweep_alpha(
    opt_set: PredictionSet,
    test_set: PredictionSet,
    cascade: CascadeSpec,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    mode: SweepMode | str = SweepMode.PER_CLASS,
) -> TradeoffCurve:
    """Optimize on ``opt_set`` for each alpha, evaluate on ``test_set``."""
    mode = SweepMode(mode)
    alphas = sorted(float(a) for a in alphas)
    if not alphas:
        raise InvalidInput("alpha list is empty")
    if opt_set.class_count != test_set.class_count:
        raise InvalidInput(
            f"optimization set has {opt_set.class_count} classes, test set {test_set.class_count}"
        )
    _check_dims(test_set, cascade)
    points = []
    for a in alphas:
        if mode is SweepMode.PER_CLASS:
            policy = optimize_class_thresholds(opt_set, a).policy()
        else:
            policy = optimize_global_threshold(opt_set, a)
        rep = evaluate_policy(test_set, policy, cascade)
        points.append(TradeoffPoint(a, policy, rep.accuracy, rep.mean_energy_mj, rep.escalation_rate))
    m1, m2 = baselines(test_set, cascade)
    return TradeoffCurve(tuple(points), m1, m2, mode)


def accuracy_gain_points(curve: TradeoffCurve, quantiles: Sequence[float] = DEFAULT_QUANTILES) -> list[GainPoint]:
    """Cheapest curve point reaching each normalized accuracy-gain target.

    No interpolation: a point qualifies only if its own accuracy reaches the
    target.
    """
    a1, a2 = curve.baseline_m1.accuracy, curve.baseline_m2.accuracy
    out = []
    for q in quantiles:
        q = float(q)
        if not 0.0 <= q <= 1.0:
            raise InvalidInput(f"quantile {q!r} outside [0, 1]")
        target = a1 + q * (a2 - a1)
        energies = [p.mean_energy_mj for p in curve.points if p.accuracy >= target - ACCURACY_SLACK]
        out.append(GainPoint(q, target, min(energies) if energies else None))
    return out


def compare_policies(
    per_class_curve: TradeoffCurve,
    global_curve: TradeoffCurve,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
) -> list[PolicyComparison]:
    if (per_class_curve.baseline_m1 != global_curve.baseline_m1
            or per_class_curve.baseline_m2 != global_curve.baseline_m2):
        raise InvalidInput("curves were evaluated against different baselines")
    rows = []
    for pc, gl in zip(accuracy_gain_points(per_class_curve, quantiles),
                      accuracy_gain_points(global_curve, quantiles)):
        e_pc, e_gl = pc.mean_energy_mj, gl.mean_energy_mj
        if e_pc is None or e_gl is None or e_gl == 0:
            rel = None
        else:
            rel = (e_pc - e_gl) / e_gl
        rows.append(PolicyComparison(pc.quantile, pc.target_accuracy, e_pc, e_gl, rel))
    return rows


def sm_histogram(predictions: PredictionSet, class_id: int, bin_count: int = 20) -> Histogram:
    """Stage-1 margins of samples predicted as ``class_id``, split by correctness."""
    if not 0 <= class_id < predictions.class_count:
        raise InvalidInput(f"class id {class_id} outside [0, {predictions.class_count})")
    if bin_count < 1:
        raise InvalidInput(f"bin count must be >= 1, got {bin_count}")
    sl = build_class_slices(predictions)[class_id]
    edges = np.linspace(0.0, 1.0, bin_count + 1)
    # np.histogram closes the last bin on the right
    correct, _ = np.histogram(sl.margins[sl.stage1_correct], bins=edges)
    incorrect, _ = np.histogram(sl.margins[~sl.stage1_correct], bins=edges)
    return Histogram(edges, correct, incorrect)


def max_accuracy_summary(curve: TradeoffCurve) -> MaxAccuracySummary:
    if not curve.points:
        raise InvalidInput("curve has no points")
    best = min(curve.points, key=lambda p: (-p.accuracy, p.mean_energy_mj))
    return MaxAccuracySummary(
        accuracy=best.accuracy,
        mean_energy_mj=best.mean_energy_mj,
        delta_vs_m2_accuracy=best.accuracy - curve.baseline_m2.accuracy,
        delta_vs_m2_energy=best.mean_energy_mj - curve.baseline_m2.energy_mj,
        alpha=best.alpha,
    )
