"""Domain types and the two-stage cascade decision rule.

A cascade runs a cheap "little" classifier first and forwards the input to
the expensive "big" classifier only when the little model's score margin
(top-1 minus top-2 probability) is at or below a threshold.  The threshold
is either shared by all classes or looked up by the little model's
predicted class.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

SUM_TOLERANCE = 1e-4
STAGE_COUNT = 2


class CascadeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(CascadeError, ValueError):
    """An argument violates a documented precondition."""


class ValidationError(InvalidInput):
    """A record failed numeric validation (range, probability sum)."""


class JoinError(InvalidInput):
    """Stage outputs could not be aligned by sample id."""


class ConsistencyError(InvalidInput):
    """Two inputs that must agree (labels, class counts) disagree."""


def _as_matrix(probs) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def margins_of(matrix: np.ndarray) -> np.ndarray:
    """Row-wise score margins of an (n, C) probability matrix, C >= 2."""
    matrix = _as_matrix(matrix)
    if matrix.shape[1] < 2:
        raise InvalidInput(f"score margin needs at least 2 classes, got {matrix.shape[1]}")
    top2 = np.partition(matrix, -2, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def labels_of(matrix: np.ndarray) -> np.ndarray:
    """Row-wise argmax with ties going to the lowest class index."""
    matrix = _as_matrix(matrix)
    if matrix.shape[1] == 0:
        raise InvalidInput("cannot take the argmax of an empty probability vector")
    return np.argmax(matrix, axis=1)


def score_margin(probs: Sequence[float]) -> float:
    """Difference between the largest and second-largest entry of ``probs``."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise InvalidInput(f"score margin needs a vector of length >= 2, got shape {arr.shape}")
    return float(margins_of(arr)[0])


def predicted_label(probs: Sequence[float]) -> int:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInput("cannot take the argmax of an empty probability vector")
    return int(labels_of(arr)[0])


def check_probabilities(vec: np.ndarray, renormalize: bool = False, where: str = "") -> np.ndarray:
    """Validate one probability vector; returns a read-only float64 copy.

    Entries must be finite and within [0, 1].  The sum must be within
    ``SUM_TOLERANCE`` of 1 unless ``renormalize`` is set, in which case the
    vector is divided by its sum instead.
    """
    arr = np.array(vec, dtype=np.float64)
    prefix = f"{where}: " if where else ""
    if arr.ndim != 1:
        raise ValidationError(f"{prefix}probability vector must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{prefix}probabilities must be finite")
    if np.any(arr < 0.0) or (np.any(arr > 1.0) and not renormalize):
        raise ValidationError(f"{prefix}probabilities must lie in [0, 1]")
    total = float(arr.sum())
    if renormalize:
        if total <= 0.0:
            raise ValidationError(f"{prefix}cannot renormalize a vector summing to {total!r}")
        arr = arr / total
    elif abs(total - 1.0) > SUM_TOLERANCE:
        raise ValidationError(
            f"{prefix}probabilities sum to {total:.6f}, outside 1 +/- {SUM_TOLERANCE:g}"
        )
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SampleRecord:
    """One input: its true label and the probability vector of each stage."""

    sample_id: str
    true_label: int
    stage_probs: tuple[np.ndarray, ...]

    def __post_init__(self):
        probs = tuple(np.array(p, dtype=np.float64) for p in self.stage_probs)
        for p in probs:
            p.setflags(write=False)
        object.__setattr__(self, "stage_probs", probs)
        object.__setattr__(self, "true_label", int(self.true_label))

    def __eq__(self, other):
        if not isinstance(other, SampleRecord):
            return NotImplemented
        return (
            self.sample_id == other.sample_id
            and self.true_label == other.true_label
            and len(self.stage_probs) == len(other.stage_probs)
            and all(np.array_equal(a, b) for a, b in zip(self.stage_probs, other.stage_probs))
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Per-sample true labels joined with the outputs of both stages."""

    class_count: int
    samples: tuple[SampleRecord, ...]
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(str(n) for n in self.class_names))
        if self.class_count < 2:
            raise InvalidInput(f"class_count must be >= 2, got {self.class_count}")
        if self.class_names is not None and len(self.class_names) != self.class_count:
            raise InvalidInput(
                f"{len(self.class_names)} class names given for {self.class_count} classes"
            )
        seen = set()
        for s in self.samples:
            if s.sample_id in seen:
                raise InvalidInput(f"duplicate sample id {s.sample_id!r}")
            seen.add(s.sample_id)
            if not 0 <= s.true_label < self.class_count:
                raise InvalidInput(
                    f"sample {s.sample_id!r}: true label {s.true_label} outside [0, {self.class_count})"
                )
            if len(s.stage_probs) != STAGE_COUNT:
                raise InvalidInput(
                    f"sample {s.sample_id!r}: expected {STAGE_COUNT} stages, got {len(s.stage_probs)}"
                )
            for k, p in enumerate(s.stage_probs):
                if p.shape != (self.class_count,):
                    raise InvalidInput(
                        f"sample {s.sample_id!r}, stage {k + 1}: vector length {p.size} != {self.class_count}"
                    )
                check_probabilities(p, where=f"sample {s.sample_id!r}, stage {k + 1}")

    @classmethod
    def from_arrays(
        cls,
        true_labels,
        stage1,
        stage2,
        sample_ids: Iterable[str] | None = None,
        class_names: Sequence[str] | None = None,
        renormalize: bool = False,
    ) -> "PredictionSet":
        s1 = np.asarray(stage1, dtype=np.float64)
        s2 = np.asarray(stage2, dtype=np.float64)
        labels = np.asarray(true_labels, dtype=np.int64)
        if s1.ndim != 2 or s1.shape != s2.shape or labels.shape != (s1.shape[0],):
            raise InvalidInput(
                f"shape mismatch: labels {labels.shape}, stage1 {s1.shape}, stage2 {s2.shape}"
            )
        ids = list(sample_ids) if sample_ids is not None else [f"s{i:06d}" for i in range(len(labels))]
        if len(ids) != len(labels):
            raise InvalidInput(f"{len(ids)} sample ids for {len(labels)} samples")
        samples = []
        for i, sid in enumerate(ids):
            p1 = check_probabilities(s1[i], renormalize, where=f"sample {sid!r}, stage 1")
            p2 = check_probabilities(s2[i], renormalize, where=f"sample {sid!r}, stage 2")
            samples.append(SampleRecord(str(sid), int(labels[i]), (p1, p2)))
        return cls(s1.shape[1], tuple(samples), class_names)

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, PredictionSet):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and self.class_names == other.class_names
            and self.samples == other.samples
        )

    __hash__ = None

    @cached_property
    def sample_ids(self) -> tuple[str, ...]:
        return tuple(s.sample_id for s in self.samples)

    @cached_property
    def true_labels(self) -> np.ndarray:
        out = np.fromiter((s.true_label for s in self.samples), dtype=np.int64, count=len(self))
        out.setflags(write=False)
        return out

    def stage_matrix(self, stage: int) -> np.ndarray:
        """(n, C) probabilities of ``stage`` (1-based)."""
        return self._stage_matrices[stage - 1]

    @cached_property
    def _stage_matrices(self) -> tuple[np.ndarray, ...]:
        mats = []
        for k in range(STAGE_COUNT):
            if self.samples:
                m = np.stack([s.stage_probs[k] for s in self.samples])
            else:
                m = np.empty((0, self.class_count))
            m.setflags(write=False)
            mats.append(m)
        return tuple(mats)

    @cached_property
    def stage1_margins(self) -> np.ndarray:
        m = margins_of(self.stage_matrix(1)) if len(self) else np.empty(0)
        m.setflags(write=False)
        return m

    @cached_property
    def _stage_labels(self) -> tuple[np.ndarray, ...]:
        out = []
        for k in range(STAGE_COUNT):
            lab = labels_of(self.stage_matrix(k + 1)) if len(self) else np.empty(0, dtype=np.int64)
            lab.setflags(write=False)
            out.append(lab)
        return tuple(out)

    def stage_labels(self, stage: int) -> np.ndarray:
        return self._stage_labels[stage - 1]

    def stage_correct(self, stage: int) -> np.ndarray:
        return self.stage_labels(stage) == self.true_labels

    def stage_accuracy(self, stage: int) -> float:
        if not len(self):
            raise InvalidInput("accuracy of an empty prediction set is undefined")
        return float(np.count_nonzero(self.stage_correct(stage))) / len(self)

    def subset(self, indices: Iterable[int]) -> "PredictionSet":
        return PredictionSet(
            self.class_count, tuple(self.samples[i] for i in indices), self.class_names
        )


@dataclass(frozen=True)
class Stage:
    name: str
    energy_mj: float


@dataclass(frozen=True)
class CascadeSpec:
    """The two stages in execution order and their per-inference energy."""

    stages: tuple[Stage, ...]
    class_count: int

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if len(self.stages) != STAGE_COUNT:
            raise InvalidInput(f"exactly {STAGE_COUNT} stages are supported, got {len(self.stages)}")
        for st in self.stages:
            if not np.isfinite(st.energy_mj) or st.energy_mj < 0:
                raise InvalidInput(f"stage {st.name!r}: energy must be a finite value >= 0")
        if self.class_count < 2:
            raise InvalidInput(f"class_count must be >= 2, got {self.class_count}")

    @classmethod
    def two_stage(cls, little_mj: float, big_mj: float, class_count: int,
                  names: tuple[str, str] = ("little", "big")) -> "CascadeSpec":
        return cls((Stage(names[0], float(little_mj)), Stage(names[1], float(big_mj))), class_count)

    @property
    def little_mj(self) -> float:
        return self.stages[0].energy_mj

    @property
    def big_mj(self) -> float:
        return self.stages[1].energy_mj


class PolicyKind(enum.Enum):
    GLOBAL = "global"
    PER_CLASS = "per_class"


@dataclass(frozen=True)
class ThresholdPolicy:
    """Score-margin stopping thresholds.

    A ``GLOBAL`` policy holds a single threshold; a ``PER_CLASS`` policy holds
    one threshold per class, selected by the stage-1 predicted label.
    ``alpha`` records the trade-off weight that produced the policy, if any.
    """

    kind: PolicyKind
    thresholds: tuple[float, ...]
    alpha: float | None = None

    def __post_init__(self):
        ths = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", ths)
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind is PolicyKind.GLOBAL and len(ths) != 1:
            raise InvalidInput(f"a global policy holds exactly one threshold, got {len(ths)}")
        if self.kind is PolicyKind.PER_CLASS and len(ths) < 2:
            raise InvalidInput("a per-class policy needs at least 2 thresholds")
        for t in ths:
            if not 0.0 <= t <= 1.0:
                raise InvalidInput(f"threshold {t!r} outside [0, 1]")
        if self.alpha is not None:
            a = float(self.alpha)
            if not np.isfinite(a) or a < 0:
                raise InvalidInput(f"alpha must be a finite value >= 0, got {self.alpha!r}")
            object.__setattr__(self, "alpha", a)

    @classmethod
    def global_threshold(cls, th: float, alpha: float | None = None) -> "ThresholdPolicy":
        return cls(PolicyKind.GLOBAL, (th,), alpha)

    @classmethod
    def per_class(cls, ths: Sequence[float], alpha: float | None = None) -> "ThresholdPolicy":
        return cls(PolicyKind.PER_CLASS, tuple(ths), alpha)

    @property
    def global_th(self) -> float:
        if self.kind is not PolicyKind.GLOBAL:
            raise InvalidInput("per-class policy has no single global threshold")
        return self.thresholds[0]

    @property
    def class_count(self) -> int | None:
        return len(self.thresholds) if self.kind is PolicyKind.PER_CLASS else None

    def threshold_for(self, label: int) -> float:
        if self.kind is PolicyKind.GLOBAL:
            return self.thresholds[0]
        return self.thresholds[label]

    def threshold_array(self, class_count: int) -> np.ndarray:
        """Thresholds expanded to one entry per class."""
        if self.kind is PolicyKind.GLOBAL:
            return np.full(class_count, self.thresholds[0])
        if len(self.thresholds) != class_count:
            raise InvalidInput(
                f"policy has {len(self.thresholds)} thresholds but data has {class_count} classes"
            )
        return np.asarray(self.thresholds, dtype=np.float64)


@dataclass(frozen=True)
class CascadeDecision:
    predicted_label: int
    stopped_at_stage: int
    stage1_margin: float
    stage1_label: int


def cascade_decide(sample: SampleRecord, policy: ThresholdPolicy) -> CascadeDecision:
    """Stop at stage 1 iff its margin strictly exceeds the applicable threshold."""
    if len(sample.stage_probs) != STAGE_COUNT:
        raise InvalidInput(f"expected {STAGE_COUNT} stage outputs, got {len(sample.stage_probs)}")
    p1, p2 = sample.stage_probs
    if policy.kind is PolicyKind.PER_CLASS and len(policy.thresholds) != p1.size:
        raise InvalidInput(
            f"policy has {len(policy.thresholds)} thresholds but sample has {p1.size} classes"
        )
    c1 = predicted_label(p1)
    m = score_margin(p1)
    if m > policy.threshold_for(c1):
        return CascadeDecision(c1, 1, m, c1)
    return CascadeDecision(predicted_label(p2), 2, m, c1)


@dataclass(frozen=True, eq=False)
class CascadeOutcome:
    """Vectorized cascade decisions over a whole prediction set."""

    predicted: np.ndarray
    escalated: np.ndarray
    stage1_labels: np.ndarray
    margins: np.ndarray
    thresholds_used: np.ndarray = field(repr=False)


def decide_all(predictions: PredictionSet, policy: ThresholdPolicy) -> CascadeOutcome:
    """Apply :func:`cascade_decide` to every sample at once."""
    th = policy.threshold_array(predictions.class_count)
    c1 = predictions.stage_labels(1)
    c2 = predictions.stage_labels(2)
    m = predictions.stage1_margins
    used = th[c1] if len(c1) else np.empty(0)
    escalated = ~(m > used)
    predicted = np.where(escalated, c2, c1)
    return CascadeOutcome(predicted, escalated, c1, m, used)
