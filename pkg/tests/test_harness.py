import json
import math

import numpy as np
import pytest

from monowalk.harness import (ConfigError, ExperimentConfig, ReplicaResult, emit, loglog_slope, read_csv,
                              read_jsonl, run_experiment, summarize, sweep, to_csv, to_jsonl, worker_count)

BASE = {"model": "obt", "d": 2, "horizon": 2000, "replicas": 3, "master_seed": 5}


def cfg(**kw):
    raw = dict(BASE)
    raw.update(kw)
    return ExperimentConfig.from_dict(raw)


@pytest.mark.parametrize("bad", [
    {"model": "nope"},
    {"horizon": 0},
    {"replicas": 0},
    {"d": 2.5},
    {"colour": "red"},
    {"model": "pobt", "params": {"eps": 0}},
    {"model": "coupled", "d": 3},
    {"model": "egs", "params": {"c": 0.5}},
    {"model": "layered", "d": 1, "params": {"p_plus": 2}},
    {"model": "psrw", "params": {"strategy": "guided", "L": 1}},
    {"checkpoints": [0, 5]},
    {"domain": {"kind": "torus"}},
])
def test_config_rejected(bad):
    with pytest.raises(ConfigError):
        cfg(**bad)


def test_missing_keys_and_yaml():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": "obt"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_yaml("model: [unclosed")
    c = ExperimentConfig.from_yaml("model: srw\nd: 1\nhorizon: 10\n")
    assert c.replicas == 1 and c.checkpoints == "pow2"


def test_single_replica():
    res = run_experiment(cfg(replicas=1, horizon=16))
    assert len(res) == 1 and res[0].checkpoints == [1, 2, 4, 8, 16]


@pytest.mark.parametrize("model,extra", [
    ("srw", {"d": 1}),
    ("obt", {}),
    ("egs", {"d": 2, "params": {"alpha": 0.5}}),
    ("layered", {"d": 1, "params": {"p_plus": 0.6}}),
    ("psrw", {"d": 3, "params": {"strategy": "guided", "L": 3}}),
    ("psrw", {"d": 2, "params": {"strategy": "unguided-coupon"}}),
    ("coupled", {"d": 2, "params": {"p": 0.3}}),
    ("extended", {"d": 2, "params": {"boundary": "drift-to-origin", "delta": 0.1}}),
])
def test_determinism_per_model(model, extra):
    c = cfg(model=model, **extra)
    a = [r.record(wall=False) for r in run_experiment(c)]
    b = [r.record(wall=False) for r in run_experiment(c)]
    assert a == b
    assert all(np.all(np.diff(r["n0"]) >= 0) for r in a)


def test_replica_independence():
    c = cfg(replicas=4)
    full = run_experiment(c)
    part = run_experiment(c, replicas=[3, 1])
    assert [r.replica for r in part] == [1, 3]
    assert part[1].record(False) == full[3].record(False)


def test_parallel_equals_serial():
    c = cfg(model="egs", replicas=8, horizon=5000)
    serial = [r.record(False) for r in run_experiment(c, workers=1)]
    par = [r.record(False) for r in run_experiment(c, workers=2)]
    assert serial == par


def test_worker_env(monkeypatch):
    monkeypatch.setenv("MONOWALK_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("MONOWALK_WORKERS", "many")
    with pytest.raises(ConfigError):
        worker_count()


def test_output_files_byte_identical(tmp_path):
    c = cfg()
    for name in ("a", "b"):
        emit(run_experiment(c), "csv", tmp_path / f"{name}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_sweep_rows_and_singleton():
    c = cfg(model="psrw", d=3, horizon=20_000, replicas=2, params={"strategy": "guided"})
    rows = sweep(c, {"params.L": [2, 4, 8]})
    assert [r["params.L"] for r in rows] == [2, 4, 8]
    m = [r["trailing_mbar_median"] for r in rows]
    assert m[0] > m[1] > m[2]
    one = sweep(c, {"params.L": [4]})[0]
    assert one["final_n0_median"] == summarize(run_experiment(cfg(model="psrw", d=3, horizon=20_000, replicas=2,
                                                                  params={"strategy": "guided", "L": 4}))).final_n0_median
    with pytest.raises(ConfigError):
        sweep(c, {})
    with pytest.raises(ConfigError):
        sweep(c, {"bogus.x": [1]})


def test_summarize_single_and_odd():
    r = ReplicaResult(0, [1, 2, 4], [1, 2, 3], [0, 2, 2])
    s = summarize([r])
    assert s.n0_median == [1, 2, 3] and s.final_n0_median == 3
    rs = [ReplicaResult(i, [1], [v], [0]) for i, v in enumerate([4, 9, 1])]
    assert summarize(rs).final_n0_median == 4
    with pytest.raises(ValueError):
        summarize([])


def test_loglog_slope_three_points():
    # hand computation: log y = log 3 + 0.5 log t exactly
    t = [4, 16, 64]
    y = [6, 12, 24]
    assert math.isclose(loglog_slope(t, y), 0.5)


def test_emit_round_trip(tmp_path):
    res = run_experiment(cfg())
    p = emit(res, "csv", tmp_path / "r.csv")
    assert p.read_text().startswith("# schema_version=1\nreplica,t,N0,last_return,truncated\n")
    rows = read_csv(p)
    flat = [(r.replica, t, n) for r in res for t, n in zip(r.checkpoints, r.n0)]
    assert [(int(x["replica"]), int(x["t"]), int(x["N0"])) for x in rows] == flat
    j = emit(res, "jsonl", tmp_path / "r.jsonl")
    back = read_jsonl(j)
    assert len(back) == len(res)
    assert back[0]["n0"] == res[0].n0 and back[0]["schema"] == 1


def test_empty_emit_is_header_only(tmp_path):
    p = emit([], "csv", tmp_path / "e.csv")
    assert p.read_text().splitlines() == ["# schema_version=1", "replica,t,N0,last_return,truncated"]
    with pytest.raises(ValueError):
        emit([], "xml", tmp_path / "e.xml")


def test_summary_emit(tmp_path):
    s = summarize(run_experiment(cfg()))
    text = to_csv(s)
    assert text.splitlines()[1] == "t,n0_median,n0_q25,n0_q75"
    rec = json.loads(to_jsonl(s))
    assert rec["replicas"] == 3
