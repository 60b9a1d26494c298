import json

import pytest

from monowalk.cli import main


def write(path, text):
    path.write_text(text)
    return str(path)


def test_simulate_ok(tmp_path, capsys):
    cfgp = write(tmp_path / "c.yaml", "model: obt\nd: 2\nhorizon: 512\nreplicas: 2\n")
    assert main(["simulate", "--config", cfgp, "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "c.csv").exists()
    assert (tmp_path / "out" / "c_summary.csv").exists()
    assert json.loads(capsys.readouterr().out)["replicas"] == 2


def test_simulate_config_error(tmp_path):
    cfgp = write(tmp_path / "c.yaml", "model: obt\nd: 2\nhorizon: -1\n")
    assert main(["simulate", "--config", cfgp]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_simulate_truncation_exit(tmp_path):
    cfgp = write(tmp_path / "c.yaml", "model: srw\nd: 1\nhorizon: 10000\nr_max: 3\nreplicas: 2\n"
                                      "domain: {kind: full}\ntruncation_threshold: 0.0\n")
    assert main(["simulate", "--config", cfgp, "--out", str(tmp_path)]) == 3


def test_sweep(tmp_path, capsys):
    cfgp = write(tmp_path / "c.yaml", "model: egs\nd: 3\nhorizon: 4096\nreplicas: 2\n")
    grid = write(tmp_path / "g.yaml", "params.alpha: [1.5, 2.5]\n")
    assert main(["sweep", "--config", cfgp, "--grid", grid]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].startswith("params.alpha,") and len(out) == 4
    empty = write(tmp_path / "e.yaml", "{}\n")
    assert main(["sweep", "--config", cfgp, "--grid", empty]) == 2


def test_criterion(capsys):
    assert main(["criterion", "--family", "egs", "--params", "d=3", "k_max=100"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "# series=egs cutoff=100 verdict=convergent"
    assert out[1] == "k,term,partial_sum" and len(out) == 102
    assert main(["criterion", "--family", "obt-box", "--params", "d=2"]) == 2
    assert main(["criterion", "--family", "egs", "--params", "k_max=100"]) == 2


def test_dirichlet(tmp_path, capsys):
    spec = write(tmp_path / "d.yaml", "kind: interval\nn: 10\n")
    assert main(["dirichlet", "--dim", "1", "--domain", spec, "--start", "4"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert abs(res["h"] - 0.6) < 1e-12
    spec = write(tmp_path / "b.yaml", "kind: ball\nradius: 5\nmetric: graph\n")
    assert main(["dirichlet", "--dim", "2", "--domain", spec, "--start", "1,0", "--method", "cg"]) == 0
    assert abs(json.loads(capsys.readouterr().out)["h"] - 0.4700352526439482) < 1e-10
    assert main(["dirichlet", "--dim", "3", "--domain", spec, "--start", "1,0"]) == 2
