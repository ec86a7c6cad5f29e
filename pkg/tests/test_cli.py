import json

import pytest

from qfhelab.cli import main, parse_family
from qfhelab.dtf import AmpFamily
from qfhelab.gadtf import GAFamily


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_demo_bundled_circuit(capsys):
    code, out, _ = run(capsys, "demo-qfhe", "--seed", "1")
    rep = json.loads(out)
    assert code == 0 and rep["fidelity"] == "1.000000000"
    assert [s["stage"] for s in rep["stages"]][:2] == ["keygen", "enc"]
    assert any(s.get("gate") == "T" for s in rep["stages"])


def test_demo_is_deterministic(capsys):
    _, a, _ = run(capsys, "demo-qfhe", "--seed", "7", "--he", "mask:2")
    _, b, _ = run(capsys, "demo-qfhe", "--seed", "7", "--he", "mask:2")
    assert a == b


def test_demo_errors(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    code, _, err = run(capsys, "demo-qfhe", "--seed", "1", str(bad))
    assert code == 2 and json.loads(err)["error"] == "JSONDecodeError"
    deep = tmp_path / "deep.json"
    deep.write_text(json.dumps({"wires": 1, "gates": [{"g": "T", "targets": [0]}] * 2}))
    code, _, err = run(capsys, "demo-qfhe", "--seed", "1", "-L", "1", str(deep))
    assert code == 3 and json.loads(err)["error"] == "TDepthExceeded"
    weird = tmp_path / "weird.json"
    weird.write_text(json.dumps({"wires": 1, "gates": [{"g": "Y", "targets": [0]}]}))
    assert run(capsys, "demo-qfhe", "--seed", "1", str(weird))[0] == 2
    with pytest.raises(SystemExit) as e:
        main(["demo-qfhe"])  # seed is mandatory
    assert e.value.code == 2


def test_dtf_check_reference(capsys):
    code, out, _ = run(capsys, "dtf-check", "--seed", "3", "--dtf", "ref:3", "--trials", "300")
    rows = json.loads(out)["results"]
    assert code == 0
    assert all(r["failures"] == 0 for r in rows)
    assert rows[1]["epsilon_hat"] == 0.0


def test_dtf_check_group_action(capsys):
    code, out, _ = run(capsys, "dtf-check", "--seed", "5", "--dtf", "ga", "--trials", "2000")
    r = json.loads(out)["results"][1]
    assert code == 0
    assert abs(r["epsilon_hat"] - r["epsilon_exact"]) <= 3 * r["sigma"] + 1e-12
    assert r["epsilon_exact"] <= r["epsilon_bound"]


def test_parse_family():
    assert isinstance(parse_family("ga"), GAFamily)
    f = parse_family("ga:1,3,101")
    assert (f.n, f.B, f.action.N) == (1, 3, 101)
    a = parse_family("amp:2")
    assert isinstance(a, AmpFamily) and a.ell == 2
    assert parse_family("amp:3:ref:2").base.t == 2


def test_bp_compile_or(capsys, tmp_path):
    out = tmp_path / "or.json"
    code, text, _ = run(capsys, "bp-compile", "or", "--out", str(out))
    rep = json.loads(text)
    assert code == 0 and rep["length"] == 4
    assert json.loads(out.read_text()) == rep


def test_bp_compile_dec_and_layout(capsys, tmp_path):
    bp = tmp_path / "bp.json"
    run(capsys, "bp-compile", "dec:mask:2", "--out", str(bp))
    code, a, _ = run(capsys, "gadget-layout", str(bp))
    _, b, _ = run(capsys, "gadget-layout", str(bp))
    lay = json.loads(a)
    assert code == 0 and a == b
    assert len(lay["Q"]) == 10 * lay["layers"]


def test_gadget_layout_errors(capsys, tmp_path):
    bp = tmp_path / "core.json"
    ins = {"var": 0, "class": "ct", "on1": [2, 3, 4, 5, 1], "on0": [1, 2, 3, 4, 5]}
    bp.write_text(json.dumps({"instrs": [ins, ins], "inputs": [{"name": "x", "class": "ct"}]}))
    code, _, err = run(capsys, "gadget-layout", str(bp))
    assert code == 3 and json.loads(err)["error"] == "NotAlternating"
    assert run(capsys, "gadget-layout", str(tmp_path / "missing.json"))[0] == 2


def test_rsp_bell(capsys):
    code, out, _ = run(capsys, "rsp-bell", "--seed", "2", "--trials", "4")
    rows = json.loads(out)["results"]
    assert code == 0
    assert [r["pair_side_matches"] for r in rows] == [4, 4]


def test_gadget_run_transcript(capsys, tmp_path):
    t = tmp_path / "t.jsonl"
    code, out, _ = run(capsys, "gadget-run", "--seed", "3", "--trials", "2", "--he", "mask:1", "--transcript", str(t))
    rep = json.loads(out)
    assert code == 0 and rep["x_counts"] == [1, 1]
    lines = [json.loads(s) for s in t.read_text().splitlines()]
    assert {r["trial"] for r in lines} == {0, 1}


def test_emit_vectors(capsys, tmp_path):
    d = tmp_path / "v"
    code, out, _ = run(capsys, "emit-vectors", "--seed", "4", "--out", str(d))
    assert code == 0
    files = json.loads(out)["files"]
    assert all((d / f).exists() for f in files)
    first = {f: (d / f).read_text() for f in files}
    run(capsys, "emit-vectors", "--seed", "4", "--out", str(d))
    assert first == {f: (d / f).read_text() for f in files}


def test_bad_trials(capsys):
    code, _, err = run(capsys, "rsp-bell", "--seed", "1", "--trials", "0")
    assert code == 2
