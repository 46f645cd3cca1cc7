"""Seeded synthetic prediction sets with per-class difficulty.

Each sample's true label is drawn from the class priors.  For each stage the
sample is correct with the class's stage accuracy; the stage then emits a
probability vector whose argmax is the true label (correct) or a uniformly
chosen wrong label (incorrect).  The top-2 margin is drawn from
``Beta(sharpness_correct, 1)`` for correct outputs and
``Beta(1, sharpness_incorrect)`` for incorrect ones, so larger sharpness
pushes correct margins toward 1 and incorrect margins toward 0.

Given the margin ``m``, the runner-up class (uniform over the rest) gets
``p2`` drawn uniformly from ``[(1 - m) / C, (1 - m) / 2]``, the winner gets
``p2 + m``, and the remaining mass is spread evenly over the other classes.
That range keeps every leftover entry at or below ``p2``.

Every sample draws from its own stream seeded by ``(seed, index)``, so the
output does not depend on generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import InvalidInput, PredictionSet, SampleRecord, check_probabilities


@dataclass(frozen=True)
class ClassProfile:
    class_id: int
    prior: float = 1.0
    stage1_accuracy: float = 0.8
    stage2_accuracy: float = 0.95
    margin_sharpness_correct: float = 4.0
    margin_sharpness_incorrect: float = 4.0

    def __post_init__(self):
        if not (np.isfinite(self.prior) and self.prior >= 0):
            raise InvalidInput(f"class {self.class_id}: prior must be >= 0")
        for name in ("stage1_accuracy", "stage2_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInput(f"class {self.class_id}: {name} {v!r} outside [0, 1]")
        for name in ("margin_sharpness_correct", "margin_sharpness_incorrect"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidInput(f"class {self.class_id}: {name} must be > 0")


@dataclass(frozen=True)
class GeneratorConfig:
    class_profiles: tuple[ClassProfile, ...]
    sample_count: int
    seed: int = 0
    class_names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "class_profiles", tuple(self.class_profiles))
        if len(self.class_profiles) < 2:
            raise InvalidInput("at least 2 class profiles are required")
        if [p.class_id for p in self.class_profiles] != list(range(len(self.class_profiles))):
            raise InvalidInput("class profiles must be listed in class-id order 0..C-1")
        if sum(p.prior for p in self.class_profiles) <= 0:
            raise InvalidInput("class priors must not all be zero")
        if int(self.sample_count) < 1:
            raise InvalidInput(f"sample_count must be >= 1, got {self.sample_count}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInput("seed must be an unsigned 64-bit integer")

    @property
    def class_count(self) -> int:
        return len(self.class_profiles)


def heterogeneous_config(
    stage1_accuracies: Sequence[float],
    sample_count: int,
    seed: int = 0,
    stage2_accuracy: float = 0.95,
    sharpness_correct: float = 4.0,
    sharpness_incorrect: float = 4.0,
) -> GeneratorConfig:
    """Equal priors, shared stage-2 accuracy, one stage-1 accuracy per class."""
    profiles = tuple(
        ClassProfile(c, 1.0, float(a), stage2_accuracy, sharpness_correct, sharpness_incorrect)
        for c, a in enumerate(stage1_accuracies)
    )
    return GeneratorConfig(profiles, sample_count, seed)


def _emit(rng: np.random.Generator, true_label: int, correct: bool, margin_shape: tuple[float, float],
          class_count: int) -> np.ndarray:
    if correct:
        top = true_label
    else:
        wrong = [c for c in range(class_count) if c != true_label]
        top = wrong[rng.integers(len(wrong))]
    m = rng.beta(*margin_shape)
    rest = [c for c in range(class_count) if c != top]
    runner_up = rest[rng.integers(len(rest))]
    p2 = rng.uniform((1.0 - m) / class_count, (1.0 - m) / 2.0)
    probs = np.empty(class_count)
    others = class_count - 2
    probs[:] = (1.0 - m - 2.0 * p2) / others if others else 0.0
    probs[top] = p2 + m
    probs[runner_up] = p2
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def generate(config: GeneratorConfig) -> PredictionSet:
    profiles = config.class_profiles
    C = len(profiles)
    priors = np.array([p.prior for p in profiles], dtype=np.float64)
    cdf = np.cumsum(priors / priors.sum())
    cdf[-1] = 1.0
    samples = []
    for i in range(int(config.sample_count)):
        rng = np.random.default_rng([int(config.seed), i])
        y = int(np.searchsorted(cdf, rng.random(), side="right"))
        y = min(y, C - 1)
        prof = profiles[y]
        stage_probs = []
        for acc in (prof.stage1_accuracy, prof.stage2_accuracy):
            correct = bool(rng.random() < acc)
            shape = (prof.margin_sharpness_correct, 1.0) if correct else (1.0, prof.margin_sharpness_incorrect)
            stage_probs.append(check_probabilities(_emit(rng, y, correct, shape, C)))
        samples.append(SampleRecord(f"s{i:06d}", y, tuple(stage_probs)))
    return PredictionSet(C, tuple(samples), config.class_names)


def resample_by_class(predictions: PredictionSet, keep_fraction: Sequence[float], seed: int = 0) -> PredictionSet:
    """Keep ``ceil(fraction * count)`` random samples of each true class."""
    fracs = [float(f) for f in keep_fraction]
    if len(fracs) != predictions.class_count:
        raise InvalidInput(f"{len(fracs)} fractions given for {predictions.class_count} classes")
    for c, f in enumerate(fracs):
        if not 0.0 < f <= 1.0:
            raise InvalidInput(f"class {c}: keep fraction {f!r} outside (0, 1]")
    labels = predictions.true_labels
    keep = np.zeros(len(predictions), dtype=bool)
    for c, f in enumerate(fracs):
        idx = np.flatnonzero(labels == c)
        k = math.ceil(f * idx.size)
        rng = np.random.default_rng([int(seed), c])
        keep[rng.choice(idx, size=k, replace=False)] = True
    return predictions.subset(np.flatnonzero(keep))


def split(predictions: PredictionSet, val_fraction: float, seed: int = 0) -> tuple[PredictionSet, PredictionSet]:
    """Stratified (validation, test) split; input order is kept on both sides.

    Each class contributes ``round(val_fraction * count)`` samples to the
    validation side.
    """
    f = float(val_fraction)
    if not 0.0 < f < 1.0:
        raise InvalidInput(f"validation fraction {val_fraction!r} outside (0, 1)")
    if len(predictions) < 2:
        raise InvalidInput("need at least 2 samples to split")
    labels = predictions.true_labels
    in_val = np.zeros(len(predictions), dtype=bool)
    for c in range(predictions.class_count):
        idx = np.flatnonzero(labels == c)
        k = int(np.floor(f * idx.size + 0.5))
        rng = np.random.default_rng([int(seed), c])
        in_val[rng.choice(idx, size=k, replace=False)] = True
    if in_val.all() or not in_val.any():
        raise InvalidInput(
            f"split with fraction {f} of {len(predictions)} samples leaves one side empty"
        )
    return predictions.subset(np.flatnonzero(in_val)), predictions.subset(np.flatnonzero(~in_val))
