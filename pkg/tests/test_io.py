import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smcascade import io
from smcascade.config import generator_config, read_config_file, run_config
from smcascade.core import (
    CascadeSpec,
    ConsistencyError,
    JoinError,
    PolicyKind,
    ThresholdPolicy,
    ValidationError,
)
from smcascade.evaluation import SweepMode, sweep_alpha
from smcascade.synth import generate, heterogeneous_config, split

HEADER = "sample_id,true_label,p_0,p_1,p_2\n"


def write(path, text):
    path.write_text(text, encoding="utf-8", newline="")
    return path


@pytest.fixture
def pair(tmp_path):
    a = write(tmp_path / "a.csv", HEADER + "x,0,0.7,0.2,0.1\ny,1,0.1,0.8,0.1\nz,2,0.3,0.3,0.4\n")
    b = write(tmp_path / "b.csv", HEADER + "z,2,0,0,1\nx,0,1,0,0\ny,1,0.2,0.7,0.1\n")
    return a, b


def test_load_joins_on_id(pair):
    ps = io.load_prediction_set(*pair)
    assert len(ps) == 3
    assert ps.sample_ids == ("x", "y", "z")
    assert ps.stage_matrix(2)[0].tolist() == [1, 0, 0]


def test_missing_id_names_it(pair, tmp_path):
    b = write(tmp_path / "b2.csv", HEADER + "x,0,1,0,0\ny,1,0.2,0.7,0.1\n")
    with pytest.raises(JoinError, match="'z'"):
        io.load_prediction_set(pair[0], b)
    with pytest.raises(JoinError, match="'z'"):
        io.load_prediction_set(b, pair[0])


def test_duplicate_id(pair, tmp_path):
    b = write(tmp_path / "dup.csv", HEADER + "x,0,1,0,0\nx,0,1,0,0\n")
    with pytest.raises(JoinError, match="line 3"):
        io.load_prediction_set(pair[0], b)


def test_label_disagreement(pair, tmp_path):
    b = write(tmp_path / "lab.csv", HEADER + "z,2,0,0,1\nx,1,1,0,0\ny,1,0.2,0.7,0.1\n")
    with pytest.raises(ConsistencyError):
        io.load_prediction_set(pair[0], b)


def test_bad_sum_cites_row(pair, tmp_path):
    bad = write(tmp_path / "sum.csv", HEADER + "x,0,0.7,0.2,0.1\ny,1,0.1,0.78,0.1\nz,2,0.3,0.3,0.4\n")
    with pytest.raises(ValidationError, match="line 3"):
        io.load_prediction_set(bad, pair[1])
    ps = io.load_prediction_set(bad, pair[1], renormalize=True)
    assert ps.stage_matrix(1)[1].sum() == pytest.approx(1.0)


@pytest.mark.parametrize("text, needle", [
    ("id,true_label,p_0,p_1\n", "line 1"),
    ("sample_id,true_label,p_0,p_1\nx,zero,1,0\n", "true_label"),
    ("sample_id,true_label,p_0,p_1\nx,5,1,0\n", "true_label"),
    ("sample_id,true_label,p_0,p_1\nx,0,1\n", "line 2"),
    ("sample_id,true_label,p_0,p_1\nx,0,nan,0\n", "line 2"),
])
def test_stage_file_errors(tmp_path, text, needle):
    f = write(tmp_path / "s.csv", text)
    with pytest.raises(ValidationError, match=needle):
        io.read_stage_file(f)


def test_class_count_mismatch(pair, tmp_path):
    b = write(tmp_path / "two.csv", "sample_id,true_label,p_0,p_1\nx,0,1,0\n")
    with pytest.raises(ConsistencyError):
        io.load_prediction_set(pair[0], b)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_stage_round_trip_within_quantum(tmp_path_factory, seed):
    d = tmp_path_factory.mktemp("rt")
    ps = generate(heterogeneous_config([0.5, 0.8, 0.9], 50, seed=seed))
    io.save_prediction_set(ps, d / "1.csv", d / "2.csv")
    back = io.load_prediction_set(d / "1.csv", d / "2.csv")
    assert back.sample_ids == ps.sample_ids
    assert np.array_equal(back.true_labels, ps.true_labels)
    for k in (1, 2):
        assert np.abs(back.stage_matrix(k) - ps.stage_matrix(k)).max() <= 5e-7
    raw = (d / "1.csv").read_bytes()
    assert b"\r" not in raw and raw.startswith(b"sample_id,true_label,p_0,p_1,p_2\n")


def test_policy_round_trip(tmp_path):
    pols = [ThresholdPolicy.per_class([0.1, 1 / 3, 0.999999999], alpha=0.05),
            ThresholdPolicy.per_class([0.0, 0.0, 1.0], alpha=1.0)]
    io.save_policy(pols, tmp_path / "p.json", params={"mode": "per_class"})
    pf = io.load_policy(tmp_path / "p.json")
    assert pf.policies == tuple(pols)
    assert pf.class_count == 3
    assert pf.select(1.0) == pols[1]
    doc = json.loads((tmp_path / "p.json").read_text())
    assert len(doc["records"][0]["thresholds"]) == 3


def test_global_policy_record(tmp_path):
    io.save_policy(ThresholdPolicy.global_threshold(0.25, alpha=0.2), tmp_path / "g.json")
    doc = json.loads((tmp_path / "g.json").read_text())
    assert doc["records"] == [{"alpha": 0.2, "kind": "global", "thresholds": [0.25]}]
    assert io.load_policy(tmp_path / "g.json").select().kind is PolicyKind.GLOBAL


def test_policy_file_errors(tmp_path):
    write(tmp_path / "bad.json", "{not json")
    with pytest.raises(ValidationError, match="line 1"):
        io.load_policy(tmp_path / "bad.json")
    write(tmp_path / "cc.json", json.dumps({
        "format": "smcascade-policy", "version": 1, "class_count": 4,
        "records": [{"alpha": 0, "kind": "per_class", "thresholds": [0, 0]}]}))
    with pytest.raises(ConsistencyError):
        io.load_policy(tmp_path / "cc.json")


def test_curve_round_trip(tmp_path):
    ps = generate(heterogeneous_config([0.5, 0.9], 200, seed=1))
    val, test = split(ps, 0.5, seed=1)
    for mode in SweepMode:
        curve = sweep_alpha(val, test, CascadeSpec.two_stage(1, 10, 2), [0, 0.05, 1], mode)
        io.write_curve(tmp_path / "c.csv", curve, 2)
        back = io.read_curve(tmp_path / "c.csv")
        assert back.mode is mode
        assert len(back.points) == 3
        assert back.baseline_m2.energy_mj == 10.0
        for a, b in zip(curve.points, back.points):
            assert abs(a.accuracy - b.accuracy) <= 5e-7
            assert a.policy.kind is b.policy.kind
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert len(lines) == 4
    assert lines[1].split(",")[0] == "0.000000"


def test_six_digit_formatting():
    assert io.fmt(1 / 3) == "0.333333"
    assert io.fmt(None, "undefined") == "undefined"


class TestConfig:
    def test_paths_resolved_relative(self, tmp_path):
        f = write(tmp_path / "run.yaml", "test_files: [t1.csv, t2.csv]\nenergy_mj: [1.5, 9]\nalphas: [0, 1]\n")
        cfg = run_config(read_config_file(f), f)
        assert cfg.test_files == (tmp_path / "t1.csv", tmp_path / "t2.csv")
        assert cfg.energy_mj == (1.5, 9.0)
        assert cfg.alphas == (0.0, 1.0)

    @pytest.mark.parametrize("text, needle", [
        ("bogus: 1\n", "bogus"),
        ("alphas: [[1]]\n", "nested"),
        ("energy_mj: [1]\n", "energy_mj"),
        ("seed: x\n", "seed"),
        ("- a\n", "mapping"),
        ("a: [\n", "line"),
    ])
    def test_errors(self, tmp_path, text, needle):
        f = write(tmp_path / "bad.yaml", text)
        with pytest.raises(ValidationError, match=needle):
            run_config(read_config_file(f), f)

    def test_generator_keys(self, tmp_path):
        f = write(tmp_path / "g.yaml", "stage1_accuracy: [0.5, 0.9, 0.7]\nsample_count: 30\npriors: [1, 2, 1]\n")
        gen = generator_config(read_config_file(f), f)
        assert gen.class_count == 3
        assert [p.prior for p in gen.class_profiles] == [1.0, 2.0, 1.0]
        assert gen.seed == 42
        with pytest.raises(ValidationError):
            generator_config({"stage1_accuracy": [0.5, 0.6], "priors": [1, 1, 1]})
