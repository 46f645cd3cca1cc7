"""Per-class threshold optimization.

For every class ``c`` predicted by the little model, the threshold ``th_c``
minimizes ``FP_c(th) + alpha * E_c(th)`` on an optimization (validation)
set, where ``FP_c`` counts wrongly-predicted samples that the cascade still
gets wrong and ``E_c`` counts escalations to the big model.

Both counts change only when ``th`` crosses an observed margin, so the
objective is piecewise constant with breakpoints at the observed margins.
Evaluating it at ``{0} U {margins}`` covers every attainable value; the
search below is exact rather than a grid approximation.

Candidates are compared with exact integer arithmetic: ``alpha`` is read as
the decimal it prints as (``0.05`` is ``1/20``), so mathematically tied
candidates stay tied and the smallest threshold wins.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import InvalidInput, PredictionSet, ThresholdPolicy


class SliceEntry(NamedTuple):
    stage1_margin: float
    stage1_correct: bool
    stage2_correct: bool


@dataclass(frozen=True, eq=False)
class ClassSlice:
    """Samples whose stage-1 prediction is ``class_id``, in input order."""

    class_id: int
    margins: np.ndarray
    stage1_correct: np.ndarray
    stage2_correct: np.ndarray

    def __post_init__(self):
        m = np.array(self.margins, dtype=np.float64).reshape(-1)
        c1 = np.array(self.stage1_correct, dtype=bool).reshape(-1)
        c2 = np.array(self.stage2_correct, dtype=bool).reshape(-1)
        if not (m.shape == c1.shape == c2.shape):
            raise InvalidInput("slice arrays must have equal length")
        if m.size and (np.any(~np.isfinite(m)) or m.min() < 0.0 or m.max() > 1.0):
            raise InvalidInput(f"class {self.class_id}: margins must lie in [0, 1]")
        for name, arr in (("margins", m), ("stage1_correct", c1), ("stage2_correct", c2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_entries(cls, class_id: int, entries: Iterable[Sequence]) -> "ClassSlice":
        rows = [SliceEntry(float(e[0]), bool(e[1]), bool(e[2])) for e in entries]
        return cls(
            class_id,
            np.array([r.stage1_margin for r in rows], dtype=np.float64),
            np.array([r.stage1_correct for r in rows], dtype=bool),
            np.array([r.stage2_correct for r in rows], dtype=bool),
        )

    @property
    def entries(self) -> list[SliceEntry]:
        return [
            SliceEntry(float(m), bool(a), bool(b))
            for m, a, b in zip(self.margins, self.stage1_correct, self.stage2_correct)
        ]

    def __len__(self):
        return int(self.margins.size)


@dataclass(frozen=True)
class ObjectiveValue:
    fp: int
    escalations: int
    total: float


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    fp: int
    escalations: int
    total: float
    is_argmin: bool


@dataclass(frozen=True)
class OptimizationResult:
    per_class_th: tuple[float, ...]
    per_class_objective: tuple[ObjectiveValue, ...]
    fallback_used: tuple[bool, ...]
    alpha: float
    global_th: float

    def policy(self) -> ThresholdPolicy:
        return ThresholdPolicy.per_class(self.per_class_th, alpha=self.alpha)


def _check_alpha(alpha: float) -> float:
    a = float(alpha)
    if not np.isfinite(a) or a < 0:
        raise InvalidInput(f"alpha must be a finite value >= 0, got {alpha!r}")
    return a


def _check_th(th: float) -> float:
    t = float(th)
    if not 0.0 <= t <= 1.0:
        raise InvalidInput(f"threshold {th!r} outside [0, 1]")
    return t


def alpha_ratio(alpha: float) -> tuple[int, int]:
    """``alpha`` as an exact (numerator, denominator) pair of its decimal form."""
    frac = Fraction(repr(_check_alpha(alpha)))
    return frac.numerator, frac.denominator


def scaled_totals(fp, escalations, alpha: float) -> np.ndarray:
    """Integer keys ordering candidates exactly like ``fp + alpha * escalations``."""
    num, den = alpha_ratio(alpha)
    fp = np.asarray(fp, dtype=np.int64)
    esc = np.asarray(escalations, dtype=np.int64)
    bound = den * int(fp.max(initial=0)) + num * int(esc.max(initial=0))
    if bound < 2**62:
        return fp * den + esc * num
    return fp.astype(object) * den + esc.astype(object) * num


def total_of(fp: int, escalations: int, alpha: float) -> float:
    return float(fp) + float(alpha) * float(escalations)


def build_class_slices(predictions: PredictionSet) -> list[ClassSlice]:
    c1 = predictions.stage_labels(1)
    ok1 = predictions.stage_correct(1)
    ok2 = predictions.stage_correct(2)
    m = predictions.stage1_margins
    slices = []
    for c in range(predictions.class_count):
        idx = np.flatnonzero(c1 == c)
        slices.append(ClassSlice(c, m[idx], ok1[idx], ok2[idx]))
    return slices


def pooled_slice(predictions: PredictionSet) -> ClassSlice:
    """All samples as one slice; its counts are the sums over class slices."""
    return ClassSlice(
        -1,
        predictions.stage1_margins,
        predictions.stage_correct(1),
        predictions.stage_correct(2),
    )


def false_positives_for_class(slice_: ClassSlice, th: float) -> int:
    th = _check_th(th)
    wrong = ~slice_.stage1_correct
    hit = (slice_.margins > th) | ~slice_.stage2_correct
    return int(np.count_nonzero(wrong & hit))


def escalations_for_class(slice_: ClassSlice, th: float) -> int:
    th = _check_th(th)
    return int(np.count_nonzero(slice_.margins <= th))


def objective(slice_: ClassSlice, th: float, alpha: float) -> ObjectiveValue:
    alpha = _check_alpha(alpha)
    fp = false_positives_for_class(slice_, th)
    esc = escalations_for_class(slice_, th)
    return ObjectiveValue(fp, esc, total_of(fp, esc, alpha))


def candidate_thresholds(slice_: ClassSlice) -> list[float]:
    return [float(t) for t in np.unique(np.concatenate(([0.0], slice_.margins)))]


def _counts_at(slice_: ClassSlice, ths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # fp(th) = #wrong with margin > th  +  #(wrong & stage2 wrong) with margin <= th
    wrong = ~slice_.stage1_correct
    all_sorted = np.sort(slice_.margins)
    wrong_sorted = np.sort(slice_.margins[wrong])
    both_sorted = np.sort(slice_.margins[wrong & ~slice_.stage2_correct])
    esc = np.searchsorted(all_sorted, ths, side="right")
    fp = (wrong_sorted.size - np.searchsorted(wrong_sorted, ths, side="right")) + np.searchsorted(
        both_sorted, ths, side="right"
    )
    return fp.astype(np.int64), esc.astype(np.int64)


def _minimize(slice_: ClassSlice, alpha: float) -> tuple[float, ObjectiveValue]:
    ths = np.asarray(candidate_thresholds(slice_))
    fp, esc = _counts_at(slice_, ths)
    k = int(np.argmin(scaled_totals(fp, esc, alpha)))
    return float(ths[k]), ObjectiveValue(int(fp[k]), int(esc[k]), total_of(fp[k], esc[k], alpha))


def objective_curve(slice_: ClassSlice, alpha: float) -> list[CurvePoint]:
    """Objective at every candidate threshold, flagging the chosen minimum."""
    alpha = _check_alpha(alpha)
    ths = np.asarray(candidate_thresholds(slice_))
    fp, esc = _counts_at(slice_, ths)
    k = int(np.argmin(scaled_totals(fp, esc, alpha)))
    return [
        CurvePoint(float(t), int(f), int(e), total_of(f, e, alpha), i == k)
        for i, (t, f, e) in enumerate(zip(ths, fp, esc))
    ]


def optimize_global_threshold(predictions: PredictionSet, alpha: float) -> ThresholdPolicy:
    """Single shared threshold minimizing the objective summed over classes."""
    alpha = _check_alpha(alpha)
    th, _ = _minimize(pooled_slice(predictions), alpha)
    return ThresholdPolicy.global_threshold(th, alpha=alpha)


def optimize_class_thresholds(predictions: PredictionSet, alpha: float) -> OptimizationResult:
    """Independent exact minimization per stage-1 predicted class.

    Classes the little model never predicts on ``predictions`` inherit the
    global optimum and are flagged in ``fallback_used``.
    """
    alpha = _check_alpha(alpha)
    global_th = optimize_global_threshold(predictions, alpha).global_th
    ths, objs, fallback = [], [], []
    for sl in build_class_slices(predictions):
        if len(sl) == 0:
            ths.append(global_th)
            objs.append(ObjectiveValue(0, 0, 0.0))
            fallback.append(True)
            continue
        th, val = _minimize(sl, alpha)
        ths.append(th)
        objs.append(val)
        fallback.append(False)
    return OptimizationResult(tuple(ths), tuple(objs), tuple(fallback), alpha, global_th)


def policy_objective(predictions: PredictionSet, policy: ThresholdPolicy, alpha: float) -> ObjectiveValue:
    """Objective summed over all class slices under ``policy``."""
    alpha = _check_alpha(alpha)
    th_arr = policy.threshold_array(predictions.class_count)
    fp = esc = 0
    for sl in build_class_slices(predictions):
        th = float(th_arr[sl.class_id])
        fp += false_positives_for_class(sl, th)
        esc += escalations_for_class(sl, th)
    return ObjectiveValue(fp, esc, total_of(fp, esc, alpha))
