import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from sigma_lab import cli
from sigma_lab.core import FiniteProbSpace, Partition
from sigma_lab.infodesign import InfoDesignInstance, Utility
from sigma_lab.metric import d_kappa


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def invoke(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def files(tmp_path):
    w = [0.1, 0.2, 0.3, 0.4]
    A, B = Partition((0, 0, 1, 1)), Partition((0, 1, 0, 1))
    return {
        "space": write(tmp_path, "s.json", {"weights": w}),
        "a": write(tmp_path, "a.json", A.to_json()),
        "b": write(tmp_path, "b.json", B.to_json()),
        "f": write(tmp_path, "f.json", {"values": [1.0, 2.0, 3.0, 4.0]}),
        "seq": write(tmp_path, "q.json", {"partitions": [A.to_json(), B.to_json(), A.to_json(),
                                                         Partition.discrete(4).to_json()] + [A.to_json()] * 4}),
        "tmp": tmp_path,
    }


def test_dkappa_prints_single_real(capsys, files):
    code, out, _ = invoke(capsys, "metric", "dkappa", "--space", files["space"], "--a", files["a"], "--b", files["b"])
    assert code == 0
    ref = d_kappa(FiniteProbSpace([0.1, 0.2, 0.3, 0.4]), Partition((0, 0, 1, 1)), Partition((0, 1, 0, 1)))
    assert float(out) == ref and len(out.split()) == 1


def test_condexp(capsys, files):
    code, out, _ = invoke(capsys, "condexp", "--space", files["space"], "--partition", files["a"], "--f", files["f"])
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["values"], [5 / 3, 5 / 3, 25 / 7, 25 / 7], atol=1e-15)


def test_charcheck(capsys, files, tmp_path):
    code, out, _ = invoke(capsys, "charcheck", "--space", files["space"], "--partition", files["a"])
    assert code == 0 and all(json.loads(out)[k] for k in ("is_projection", "is_markov", "fixes_constants",
                                                           "range_is_lattice"))
    m = write(tmp_path, "m.json", {"matrix": np.eye(4).tolist()})
    assert invoke(capsys, "charcheck", "--space", files["space"], "--matrix", m)[0] == 0
    assert invoke(capsys, "charcheck", "--space", files["space"])[0] == 1


def test_metric_extract_and_property_e(capsys, files):
    code, out, _ = invoke(capsys, "metric", "extract", "--seq", files["seq"])
    doc = json.loads(out)
    assert code == 0 and doc["limit"] == Partition((0, 0, 1, 1)).to_json()
    code, out, _ = invoke(capsys, "metric", "property-e", "--space", files["space"], "--seq", files["seq"])
    assert code == 0 and json.loads(out)["cauchy_ok"] is True


def test_modes_analyze_hierarchy_ok(capsys, files, tmp_path):
    argv = ["modes", "analyze", "--space", files["space"], "--seq", files["seq"], "--limit", files["a"], "--eps", "0.1"]
    code, out, _ = invoke(capsys, *argv)
    assert code == 0 and json.loads(out)["hierarchy"] == "ok"
    out_csv = str(tmp_path / "r.csv")
    assert invoke(capsys, *argv, "--out", out_csv)[0] == 0
    rows = list(csv.reader(open(out_csv)))
    assert len(rows) == 1 + 8


def test_bundle_commands(capsys, files, tmp_path):
    el = {"u": [1.0, 1.0, -1.0, -1.0], "partition": Partition((0, 0, 1, 1)).to_json()}
    e = write(tmp_path, "e.json", el)
    q = write(tmp_path, "bq.json", {"elements": [el, el]})
    code, out, _ = invoke(capsys, "bundle", "fingerprint", "--space", files["space"], "--element", e)
    assert code == 0 and len(json.loads(out)) == 10
    code, out, _ = invoke(capsys, "bundle", "strongdev", "--space", files["space"], "--seq", q, "--limit", e)
    assert code == 0 and json.loads(out)["strong_dev"] == [0.0, 0.0]
    code, out, _ = invoke(capsys, "bundle", "weakdev", "--space", files["space"], "--seq", q, "--limit", e)
    assert code == 0 and json.loads(out)["w2_dev"] == [0.0, 0.0]
    bad = write(tmp_path, "bad.json", {"u": [1.0, 2.0, 3.0, 4.0], "partition": Partition.trivial(4).to_json()})
    code, _, err = invoke(capsys, "bundle", "fingerprint", "--space", files["space"], "--element", bad)
    assert code == 1 and "measurable" in err


def test_lattice_commands(capsys, files, tmp_path):
    assert json.loads(invoke(capsys, "lattice", "join", "--a", files["a"], "--b", files["b"])[1]) == \
        Partition.discrete(4).to_json()
    assert json.loads(invoke(capsys, "lattice", "meet", "--a", files["a"], "--b", files["b"])[1]) == \
        Partition.trivial(4).to_json()
    u = write(tmp_path, "u.json", {"weights": [0.25] * 4})
    code, out, _ = invoke(capsys, "lattice", "independent", "--space", u, "--a", files["a"], "--b", files["b"])
    assert code == 0 and json.loads(out) == {"independent": True}
    code, out, _ = invoke(capsys, "lattice", "continuity", "--space", u, "--seqa", files["seq"],
                          "--seqb", files["seq"], "--lima", files["a"], "--limb", files["a"])
    assert code == 0 and isinstance(json.loads(out), dict)


def test_density_commands(capsys, files, tmp_path):
    pair = {"partition": Partition((0, 0, 1, 1)).to_json(), "u": [1 / 0.3 * 0.5] * 2 + [0.5 / 0.7] * 2}
    p = write(tmp_path, "p.json", pair)
    code, out, _ = invoke(capsys, "density", "rho", "--space", files["space"], "--pair", p, "--f", files["f"])
    assert code == 0 and float(out) > 0
    q = write(tmp_path, "dq.json", {"pairs": [pair] * 5})
    code, out, _ = invoke(capsys, "density", "extract", "--space", files["space"], "--seq", q)
    doc = json.loads(out)
    assert code == 0 and doc["indices"] == [0, 1, 2, 3, 4] and doc["cluster_radius"] == 0.0


def test_infodesign_solve(capsys, tmp_path):
    G = Partition((0, 0, 1, 1))
    inst = InfoDesignInstance(FiniteProbSpace.uniform(4), G, (G, Partition.discrete(4)), 2, Utility("power", 0.5))
    path = write(tmp_path, "i.json", inst.to_json())
    code, out, _ = invoke(capsys, "infodesign", "solve", "--instance", path)
    doc = json.loads(out)
    assert code == 0 and doc["certificate"]["id_vertex_gap"] == 0
    broken = write(tmp_path, "bad.json", {"weights": [1.0]})
    code, _, err = invoke(capsys, "infodesign", "solve", "--instance", broken)
    assert code == 1 and "instance" in err


def test_dyadic_claim1_rows(capsys):
    code, out, _ = invoke(capsys, "dyadic", "claim1", "--K", "12", "--nmax", "4095")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows) == 4096
    assert rows[0] == ["n", "m", "P_I", "P_I_float", "norm_sq", "norm_sq_float", "delta", "delta_float"]
    assert rows[5][6] == "1/48" and float(rows[5][7]) == 1 / 48


def test_dyadic_claim1_custom_f(capsys, tmp_path):
    f = write(tmp_path, "f.json", {"values": [1.0] * 8})
    code, out, _ = invoke(capsys, "dyadic", "claim1", "--K", "3", "--f", f, "--format", "json")
    assert code == 0 and all(r["delta"] == "0" or r["delta"] == "0/1" for r in json.loads(out)["rows"])


def test_dyadic_claim2(capsys):
    code, out, _ = invoke(capsys, "dyadic", "claim2", "--K", "8", "--omegas", "0.1,0.7")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows) == 256 and len(rows[0]) == 6
    code, out, _ = invoke(capsys, "dyadic", "claim2", "--K", "8", "--format", "json")
    assert len(json.loads(out)["probes"]) == 3
    assert invoke(capsys, "dyadic", "claim2", "--omegas", "a,b")[0] == 1


def test_exit_codes(capsys, files, monkeypatch):
    assert invoke(capsys, "bogus")[0] == 1
    assert invoke(capsys)[0] == 1
    assert invoke(capsys, "metric")[0] == 1
    code, _, err = invoke(capsys, "metric", "dkappa", "--space", "/nonexistent.json", "--a", files["a"],
                          "--b", files["b"])
    assert code == 1 and "space" in err
    code, _, err = invoke(capsys, "metric", "dkappa", "--space", files["f"], "--a", files["a"], "--b", files["b"])
    assert code == 1 and "weights" in err
    assert invoke(capsys, "dyadic", "claim1", "--K", "3", "--nmax", "20")[0] == 1

    def boom(*a, **k):
        raise RuntimeError("kaput")
    monkeypatch.setattr(cli.metric, "d_kappa", boom)
    code, _, err = invoke(capsys, "metric", "dkappa", "--space", files["space"], "--a", files["a"], "--b", files["b"])
    assert code == 2 and "kaput" in err


def test_global_flags_before_and_after(capsys, files):
    base = ["--space", files["space"], "--a", files["a"], "--b", files["b"]]
    a = invoke(capsys, "--tests", "atoms", "metric", "dkappa", *base)
    b = invoke(capsys, "metric", "dkappa", *base, "--tests", "atoms")
    c = invoke(capsys, "metric", "dkappa", *base)
    assert a == b and a[0] == 0 and a[1] != c[1]


def test_generate_determinism_and_round_trip(capsys, tmp_path):
    outs = [invoke(capsys, "generate", "seq", "--n", "6", "--seed", "7")[1] for _ in range(2)]
    assert outs[0] == outs[1]
    assert outs[0] != invoke(capsys, "generate", "seq", "--n", "6", "--seed", "8")[1]
    doc = json.loads(outs[0])
    assert [Partition.from_json(d).to_json() for d in doc["partitions"]] == doc["partitions"]
    s = json.loads(invoke(capsys, "generate", "space", "--n", "5", "--seed", "3")[1])
    assert FiniteProbSpace(s["weights"]).to_json() == s
    assert cli._dumps(json.loads(outs[0])) == outs[0]


def test_out_file(capsys, tmp_path):
    out = tmp_path / "p.json"
    code, stdout, _ = invoke(capsys, "generate", "partition", "--out", str(out))
    assert code == 0 and stdout == "" and "block_of" in json.loads(out.read_text())


def test_jobs_env(monkeypatch):
    ns = type("A", (), {"jobs": None})()
    monkeypatch.setenv("SIGMA_LAB_JOBS", "3")
    assert cli.jobs(ns) == 3
    ns.jobs = 2
    assert cli.jobs(ns) == 2
    ns.jobs = None
    monkeypatch.setenv("SIGMA_LAB_JOBS", "x")
    with pytest.raises(ValueError):
        cli.jobs(ns)


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "sigma_lab.cli", "dyadic", "claim1", "--K", "4"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and len(r.stdout.splitlines()) == 16
    r = subprocess.run([sys.executable, "-m", "sigma_lab.cli", "nope"], capture_output=True, text=True)
    assert r.returncode == 1 and "usage" in r.stderr
