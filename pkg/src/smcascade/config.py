"""Run and generator configuration.

A config file is a flat YAML mapping: every value is a scalar or a list of
scalars, and no nesting is allowed.  Relative paths are resolved against the
directory holding the file.  Example::

    validation_files: [val_stage1.csv, val_stage2.csv]
    test_files: [test_stage1.csv, test_stage2.csv]
    energy_mj: [1.2, 9.8]
    alphas: [0, 0.05, 0.2, 1]
    quantiles: [0.25, 0.5, 0.75, 1.0]
    renormalize: false
    seed: 42

    # generator keys
    sample_count: 2000
    stage1_accuracy: [0.5, 0.6, 0.8, 0.9, 0.95]
    stage2_accuracy: 0.95
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .core import InvalidInput, ValidationError
from .evaluation import DEFAULT_ALPHAS, DEFAULT_QUANTILES
from .synth import ClassProfile, GeneratorConfig

RUN_KEYS = {
    "stage_files", "validation_files", "test_files", "energy_mj", "alphas",
    "class_names", "renormalize", "seed", "quantiles", "val_fraction",
}
GENERATOR_KEYS = {
    "sample_count", "stage1_accuracy", "stage2_accuracy", "priors",
    "sharpness_correct", "sharpness_incorrect",
}
PATH_PAIRS = ("stage_files", "validation_files", "test_files")

DEFAULT_STAGE1_ACCURACY = (0.5, 0.6, 0.8, 0.9, 0.95)
DEFAULT_SAMPLE_COUNT = 2000
DEFAULT_SEED = 42


@dataclass(frozen=True)
class RunConfig:
    stage_files: tuple[Path, Path] | None = None
    validation_files: tuple[Path, Path] | None = None
    test_files: tuple[Path, Path] | None = None
    energy_mj: tuple[float, float] | None = None
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    class_names: tuple[str, ...] | None = None
    renormalize: bool = False
    seed: int = DEFAULT_SEED
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    val_fraction: float = 0.5


def read_config_file(path) -> dict[str, Any]:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInput(f"{path}: cannot read ({exc.strerror})") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f", line {mark.line + 1}" if mark else ""
        raise ValidationError(f"{path}{line}: not a valid config file") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a key/value mapping")
    for key, val in doc.items():
        if key not in RUN_KEYS | GENERATOR_KEYS:
            raise ValidationError(f"{path}, field {key}: unknown key")
        items = val if isinstance(val, list) else [val]
        if any(isinstance(v, (dict, list)) for v in items):
            raise ValidationError(f"{path}, field {key}: nested values are not allowed")
    base = path.parent
    for key in PATH_PAIRS:
        if key in doc:
            doc[key] = [str(base / p) for p in _pair(doc[key], path, key)]
    return doc


def _pair(val, path, key):
    if not isinstance(val, list) or len(val) != 2:
        raise ValidationError(f"{path}, field {key}: expected a list of exactly 2 entries")
    return val


def _floats(val, path, key) -> tuple[float, ...]:
    items = val if isinstance(val, list) else [val]
    try:
        return tuple(float(v) for v in items)
    except (TypeError, ValueError):
        raise ValidationError(f"{path}, field {key}: expected numbers") from None


def run_config(doc: dict[str, Any], path="<config>") -> RunConfig:
    kw: dict[str, Any] = {}
    for key in PATH_PAIRS:
        if key in doc:
            a, b = _pair(doc[key], path, key)
            kw[key] = (Path(a), Path(b))
    if "energy_mj" in doc:
        e = _floats(_pair(doc["energy_mj"], path, "energy_mj"), path, "energy_mj")
        kw["energy_mj"] = e
    for key in ("alphas", "quantiles"):
        if key in doc:
            kw[key] = _floats(doc[key], path, key)
    if "class_names" in doc:
        kw["class_names"] = tuple(str(n) for n in doc["class_names"])
    if "renormalize" in doc:
        if not isinstance(doc["renormalize"], bool):
            raise ValidationError(f"{path}, field renormalize: expected true or false")
        kw["renormalize"] = doc["renormalize"]
    if "seed" in doc:
        if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
            raise ValidationError(f"{path}, field seed: expected an integer")
        kw["seed"] = doc["seed"]
    if "val_fraction" in doc:
        kw["val_fraction"] = _floats(doc["val_fraction"], path, "val_fraction")[0]
    return RunConfig(**kw)


def generator_config(doc: dict[str, Any], path="<config>", seed: int | None = None) -> GeneratorConfig:
    acc1 = _floats(doc.get("stage1_accuracy", list(DEFAULT_STAGE1_ACCURACY)), path, "stage1_accuracy")
    C = len(acc1)

    def per_class(key, default):
        vals = _floats(doc.get(key, default), path, key)
        if len(vals) == 1:
            vals = vals * C
        if len(vals) != C:
            raise ValidationError(f"{path}, field {key}: expected 1 or {C} values, got {len(vals)}")
        return vals

    acc2 = per_class("stage2_accuracy", ClassProfile.stage2_accuracy)
    priors = per_class("priors", 1.0)
    sc = per_class("sharpness_correct", ClassProfile.margin_sharpness_correct)
    si = per_class("sharpness_incorrect", ClassProfile.margin_sharpness_incorrect)
    try:
        profiles = tuple(ClassProfile(c, priors[c], acc1[c], acc2[c], sc[c], si[c]) for c in range(C))
        n = doc.get("sample_count", DEFAULT_SAMPLE_COUNT)
        if not isinstance(n, int) or isinstance(n, bool):
            raise ValidationError(f"{path}, field sample_count: expected an integer")
        s = seed if seed is not None else doc.get("seed", DEFAULT_SEED)
        names = tuple(doc["class_names"]) if "class_names" in doc else None
        return GeneratorConfig(profiles, n, s, names)
    except ValidationError:
        raise
    except InvalidInput as exc:
        raise ValidationError(f"{path}: {exc}") from None
