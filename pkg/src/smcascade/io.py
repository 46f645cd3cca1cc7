"""Stage files, policy files and the delimited report formats.

Stage file (one per stage)::

    sample_id,true_label,p_0,...,p_{C-1}

UTF-8, comma separated, LF line endings, no quoting.  Rows of the two stage
files are joined on ``sample_id``; output order follows the stage-1 file.

Policy files are JSON and keep thresholds at full precision, since a
threshold equal to an observed margin must survive a round trip.  Every other
emitted number uses six fractional digits.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ConsistencyError,
    InvalidInput,
    JoinError,
    PolicyKind,
    PredictionSet,
    SampleRecord,
    ThresholdPolicy,
    ValidationError,
    check_probabilities,
)
from .evaluation import (
    Baseline,
    EvaluationReport,
    Histogram,
    MaxAccuracySummary,
    PolicyComparison,
    SweepMode,
    TradeoffCurve,
    TradeoffPoint,
)
from .optimizer import CurvePoint

POLICY_FORMAT = "smcascade-policy"
POLICY_VERSION = 1


def fmt(x: float | None, missing: str = "") -> str:
    if x is None:
        return missing
    return f"{float(x):.6f}"


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence[str]]):
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_NONE, escapechar=None)
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise InvalidInput(f"{path}: cannot write ({exc.strerror})") from exc


def _read_csv(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InvalidInput(f"{path}: cannot read ({exc.strerror})") from exc
    if not rows:
        raise ValidationError(f"{path}: file is empty")
    return rows[0], [(i + 2, r) for i, r in enumerate(rows[1:]) if r]


# -- stage files -------------------------------------------------------------

@dataclass
class StageRows:
    path: Path
    class_count: int
    ids: list[str] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)
    probs: list[np.ndarray] = field(default_factory=list)
    lines: list[int] = field(default_factory=list)


def stage_header(class_count: int) -> list[str]:
    return ["sample_id", "true_label"] + [f"p_{k}" for k in range(class_count)]


def read_stage_file(path, renormalize: bool = False) -> StageRows:
    path = Path(path)
    header, rows = _read_csv(path)
    class_count = len(header) - 2
    if class_count < 2 or header != stage_header(class_count):
        raise ValidationError(
            f"{path}, line 1: header must be sample_id,true_label,p_0,...,p_(C-1) with C >= 2"
        )
    out = StageRows(path, class_count)
    seen = {}
    for line, row in rows:
        where = f"{path}, line {line}"
        if len(row) != class_count + 2:
            raise ValidationError(f"{where}: expected {class_count + 2} fields, got {len(row)}")
        sid = row[0]
        if sid in seen:
            raise JoinError(f"{where}: duplicate sample_id {sid!r} (first on line {seen[sid]})")
        seen[sid] = line
        try:
            label = int(row[1])
        except ValueError:
            raise ValidationError(f"{where}, field true_label: {row[1]!r} is not an integer") from None
        if not 0 <= label < class_count:
            raise ValidationError(f"{where}, field true_label: {label} outside [0, {class_count})")
        try:
            vec = np.array([float(v) for v in row[2:]])
        except ValueError:
            raise ValidationError(f"{where}: probabilities must be numbers") from None
        out.ids.append(sid)
        out.labels.append(label)
        out.probs.append(check_probabilities(vec, renormalize, where=where))
        out.lines.append(line)
    return out


def load_prediction_set(stage1, stage2, renormalize: bool = False,
                        class_names: Sequence[str] | None = None) -> PredictionSet:
    a = read_stage_file(stage1, renormalize)
    b = read_stage_file(stage2, renormalize)
    if a.class_count != b.class_count:
        raise ConsistencyError(
            f"{b.path}: {b.class_count} classes, but {a.path} has {a.class_count}"
        )
    index_b = {sid: k for k, sid in enumerate(b.ids)}
    for sid, line in zip(a.ids, a.lines):
        if sid not in index_b:
            raise JoinError(f"{b.path}: sample_id {sid!r} (from {a.path}, line {line}) is missing")
    if len(index_b) != len(a.ids):
        known = set(a.ids)
        extra = next(s for s in b.ids if s not in known)
        raise JoinError(f"{a.path}: sample_id {extra!r} (from {b.path}, line {b.lines[index_b[extra]]}) is missing")
    samples = []
    for sid, label, p1, line in zip(a.ids, a.labels, a.probs, a.lines):
        k = index_b[sid]
        if b.labels[k] != label:
            raise ConsistencyError(
                f"{b.path}, line {b.lines[k]}: true_label {b.labels[k]} for {sid!r} "
                f"disagrees with {a.path}, line {line} ({label})"
            )
        samples.append(SampleRecord(sid, label, (p1, b.probs[k])))
    return PredictionSet(a.class_count, tuple(samples), class_names)


def write_stage_file(path, predictions: PredictionSet, stage: int):
    C = predictions.class_count
    for sid in predictions.sample_ids:
        if "," in sid or "\n" in sid:
            raise InvalidInput(f"sample_id {sid!r} cannot be written unquoted")
    rows = (
        [s.sample_id, str(s.true_label)] + [fmt(p) for p in s.stage_probs[stage - 1]]
        for s in predictions.samples
    )
    _write_csv(path, stage_header(C), rows)


def save_prediction_set(predictions: PredictionSet, stage1, stage2):
    write_stage_file(stage1, predictions, 1)
    write_stage_file(stage2, predictions, 2)


# -- policy files ------------------------------------------------------------

@dataclass(frozen=True)
class PolicyFile:
    class_count: int | None
    policies: tuple[ThresholdPolicy, ...]
    params: dict = field(default_factory=dict)

    def select(self, alpha: float | None = None) -> ThresholdPolicy:
        if alpha is None:
            if len(self.policies) != 1:
                raise InvalidInput(f"policy file holds {len(self.policies)} records; pick one by alpha")
            return self.policies[0]
        for p in self.policies:
            if p.alpha is not None and math.isclose(p.alpha, alpha, rel_tol=0, abs_tol=1e-12):
                return p
        raise InvalidInput(f"no policy record for alpha={alpha!r}")


def save_policy(policies, path, class_count: int | None = None, params: dict | None = None):
    """Write one record per policy; the file round-trips through :func:`load_policy`."""
    if isinstance(policies, ThresholdPolicy):
        policies = [policies]
    policies = list(policies)
    if not policies:
        raise InvalidInput("no policies to save")
    for p in policies:
        if p.kind is PolicyKind.PER_CLASS:
            if class_count is None:
                class_count = len(p.thresholds)
            elif len(p.thresholds) != class_count:
                raise InvalidInput(
                    f"per-class policy has {len(p.thresholds)} thresholds, expected {class_count}"
                )
    doc = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "class_count": class_count,
        "params": dict(params or {}),
        "records": [
            {"alpha": p.alpha, "kind": p.kind.value, "thresholds": list(p.thresholds)}
            for p in policies
        ],
    }
    path = Path(path)
    try:
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise InvalidInput(f"{path}: cannot write ({exc.strerror})") from exc


def load_policy(path) -> PolicyFile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInput(f"{path}: cannot read ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}, line {exc.lineno}: not valid JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or doc.get("format") != POLICY_FORMAT:
        raise ValidationError(f"{path}: not a {POLICY_FORMAT} file")
    if doc.get("version") != POLICY_VERSION:
        raise ValidationError(f"{path}, field version: unsupported version {doc.get('version')!r}")
    class_count = doc.get("class_count")
    policies = []
    for k, rec in enumerate(doc.get("records") or []):
        try:
            pol = ThresholdPolicy(PolicyKind(rec["kind"]), tuple(rec["thresholds"]), rec.get("alpha"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}, records[{k}]: {exc}") from None
        if pol.kind is PolicyKind.PER_CLASS and class_count is not None and len(pol.thresholds) != class_count:
            raise ConsistencyError(
                f"{path}, records[{k}]: {len(pol.thresholds)} thresholds but class_count is {class_count}"
            )
        policies.append(pol)
    if not policies:
        raise ValidationError(f"{path}, field records: no policy records")
    return PolicyFile(class_count, tuple(policies), doc.get("params") or {})


# -- reports -----------------------------------------------------------------

def _r6(x):
    return None if x is None else round(float(x), 6)


def report_to_dict(report: EvaluationReport, policy: ThresholdPolicy) -> dict:
    return {
        "alpha": _r6(policy.alpha),
        "policy_kind": policy.kind.value,
        "sample_count": report.sample_count,
        "accuracy": _r6(report.accuracy),
        "mean_energy_mj": _r6(report.mean_energy_mj),
        "escalation_rate": _r6(report.escalation_rate),
        "stage_accuracies": {"stage1": _r6(report.stage1_accuracy), "stage2": _r6(report.stage2_accuracy)},
        "per_class": [
            {"class_id": b.class_id, "m_c": b.m_c, "fp": b.fp, "escalations": b.escalations,
             "th_used": _r6(b.th_used)}
            for b in report.per_class
        ],
    }


def write_json(path, doc):
    path = Path(path)
    try:
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise InvalidInput(f"{path}: cannot write ({exc.strerror})") from exc


def write_reports(path, reports: Sequence[tuple[EvaluationReport, ThresholdPolicy]], params: dict | None = None):
    write_json(path, {"params": dict(params or {}),
                      "reports": [report_to_dict(r, p) for r, p in reports]})


def summary_to_dict(s: MaxAccuracySummary) -> dict:
    return {
        "alpha": _r6(s.alpha),
        "accuracy": _r6(s.accuracy),
        "mean_energy_mj": _r6(s.mean_energy_mj),
        "delta_vs_m2_accuracy": _r6(s.delta_vs_m2_accuracy),
        "delta_vs_m2_energy": _r6(s.delta_vs_m2_energy),
        "relative_energy_vs_m2": _r6(s.relative_energy_vs_m2),
    }


# -- trade-off curves --------------------------------------------------------

CURVE_FIELDS = ["alpha", "accuracy", "mean_energy_mj", "escalation_rate",
                "m1_accuracy", "m1_energy_mj", "m2_accuracy", "m2_energy_mj", "mode"]


def write_curve(path, curve: TradeoffCurve, class_count: int):
    header = CURVE_FIELDS + [f"th_{k}" for k in range(class_count)]
    rows = []
    for p in curve.points:
        rows.append(
            [fmt(p.alpha), fmt(p.accuracy), fmt(p.mean_energy_mj), fmt(p.escalation_rate),
             fmt(curve.baseline_m1.accuracy), fmt(curve.baseline_m1.energy_mj),
             fmt(curve.baseline_m2.accuracy), fmt(curve.baseline_m2.energy_mj),
             curve.mode.value]
            + [fmt(t) for t in p.policy.threshold_array(class_count)]
        )
    _write_csv(path, header, rows)


def read_curve(path) -> TradeoffCurve:
    path = Path(path)
    header, rows = _read_csv(path)
    n_th = len(header) - len(CURVE_FIELDS)
    if header[: len(CURVE_FIELDS)] != CURVE_FIELDS or n_th < 2 or header[len(CURVE_FIELDS):] != [
        f"th_{k}" for k in range(n_th)
    ]:
        raise ValidationError(f"{path}, line 1: not a trade-off curve header")
    if not rows:
        raise ValidationError(f"{path}: curve has no points")
    points, bases, modes = [], set(), set()
    for line, row in rows:
        where = f"{path}, line {line}"
        if len(row) != len(header):
            raise ValidationError(f"{where}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = dict(zip(header, row))
            mode = SweepMode(vals["mode"])
            num = {k: float(vals[k]) for k in header if k != "mode"}
        except ValueError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        ths = [num[f"th_{k}"] for k in range(n_th)]
        try:
            pol = (ThresholdPolicy.per_class(ths, num["alpha"]) if mode is SweepMode.PER_CLASS
                   else ThresholdPolicy.global_threshold(ths[0], num["alpha"]))
        except InvalidInput as exc:
            raise ValidationError(f"{where}: {exc}") from None
        points.append(TradeoffPoint(num["alpha"], pol, num["accuracy"], num["mean_energy_mj"],
                                    num["escalation_rate"]))
        bases.add((num["m1_accuracy"], num["m1_energy_mj"], num["m2_accuracy"], num["m2_energy_mj"]))
        modes.add(mode)
    if len(bases) != 1 or len(modes) != 1:
        raise ConsistencyError(f"{path}: rows disagree on baselines or mode")
    (a1, e1, a2, e2), = bases
    return TradeoffCurve(tuple(points), Baseline(a1, e1), Baseline(a2, e2), modes.pop())


def write_comparison(path, rows: Sequence[PolicyComparison]):
    header = ["quantile", "target_accuracy", "energy_per_class_mj", "energy_global_mj", "relative_difference"]
    _write_csv(path, header, (
        [fmt(r.quantile), fmt(r.target_accuracy), fmt(r.energy_per_class, "unreachable"),
         fmt(r.energy_global, "unreachable"), fmt(r.relative_difference, "undefined")]
        for r in rows
    ))


def write_histogram(path, hist: Histogram):
    edges = hist.bin_edges
    _write_csv(path, ["bin_lo", "bin_hi", "correct", "incorrect"], (
        [fmt(edges[k]), fmt(edges[k + 1]), str(int(hist.correct_counts[k])), str(int(hist.incorrect_counts[k]))]
        for k in range(len(edges) - 1)
    ))


def write_objective_curve(path, points: Sequence[CurvePoint]):
    _write_csv(path, ["threshold", "fp", "escalations", "total", "is_argmin"], (
        [fmt(p.threshold), str(p.fp), str(p.escalations), fmt(p.total), "1" if p.is_argmin else "0"]
        for p in points
    ))
