import json

import pytest

from hlink.cli import main
from hlink.digraph import Digraph
from hlink.generators import gen_complete
from hlink.linkage import Instance, Pattern, Subdivision, verify_subdivision
from strategies import two_cliques


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _k14_instance(tmp_path):
    inst = Instance(gen_complete(14), Pattern(2, ((0, 1),)), (0, 1), (13,))
    return _write(tmp_path / "k14.json", inst.to_json_obj()), inst


def test_solve_complete_host(tmp_path):
    path, inst = _k14_instance(tmp_path)
    out, rep = tmp_path / "sub.json", tmp_path / "rep.json"
    assert main(["solve", "-i", path, "-o", str(out), "--report", str(rep)]) == 0
    sub = Subdivision.from_json_obj(json.loads(out.read_text()))
    assert verify_subdivision(inst, sub).ok
    report = json.loads(rep.read_text())
    assert report["status"] == "verified"
    assert report["params"]["eps_prime"] == 0.2 and report["params"]["seeds"] == [0]
    assert main(["verify", "-i", path, "-s", str(out), "-o", str(tmp_path / "v.json")]) == 0
    assert json.loads((tmp_path / "v.json").read_text())["ok"]


def test_solve_remark2_is_infeasible(tmp_path):
    inst_path = tmp_path / "r2.json"
    assert main(["gen", "remark2", "--n", "12", "--k", "1", "-o", str(tmp_path / "d.json"), "--instance", str(inst_path)]) == 0
    obj = json.loads(inst_path.read_text())
    assert obj["lengths"] == [11]
    assert main(["solve", "-i", str(inst_path), "-o", str(tmp_path / "s.json")]) == 2
    assert not (tmp_path / "s.json").exists()


@pytest.mark.parametrize("text", ["{not json", '{"digraph": {"n": 3}}', "[]"])
def test_malformed_inputs_exit_1(tmp_path, text):
    bad = tmp_path / "bad.json"
    bad.write_text(text)
    assert main(["solve", "-i", str(bad)]) == 1
    assert main(["analyze", "-i", str(bad)]) == 1


def test_missing_file_and_usage_errors(tmp_path):
    assert main(["solve", "-i", str(tmp_path / "nope.json")]) == 1
    assert main(["solve"]) == 1
    assert main(["bogus"]) == 1
    path, _ = _k14_instance(tmp_path)
    assert main(["solve", "-i", path, "--eps", "1.5"]) == 1
    assert main(["gen", "remark3", "--n", "40", "--k", "5"]) == 1


def test_verify_rejects_bad_subdivision(tmp_path):
    path, _ = _k14_instance(tmp_path)
    sub = _write(tmp_path / "s.json", {"routes": [[0, 2, 1]], "cycles": [False]})
    assert main(["verify", "-i", path, "-s", sub, "-o", str(tmp_path / "v.json")]) == 2
    rules = {v["rule"] for v in json.loads((tmp_path / "v.json").read_text())["violations"]}
    assert "length" in rules and "spanning" in rules


def test_gen_families(tmp_path):
    for fam, extra in (
        ("complete", []),
        ("remark1", []),
        ("remark3", ["--k", "5"]),
        ("random_floor", ["--k", "1", "--seed", "3"]),
        ("double_cover", []),
    ):
        n = "38" if fam == "remark3" else "10"
        out = tmp_path / f"{fam}.json"
        assert main(["gen", fam, "--n", n, "-o", str(out)] + extra) == 0
        D = Digraph.from_json_obj(json.loads(out.read_text()))
        D.check_invariants()
    petersen = Digraph.from_json_obj(json.loads((tmp_path / "double_cover.json").read_text()))
    assert petersen.arc_count() == 30
    dot = tmp_path / "g.dot"
    assert main(["gen", "complete", "--n", "3", "-o", str(tmp_path / "c.json"), "--dot", str(dot)]) == 0
    assert dot.read_text().count("->") == 6


def test_gen_random_instance_is_reproducible(tmp_path):
    outs = []
    for tag in "ab":
        d, i = tmp_path / f"d{tag}.json", tmp_path / f"i{tag}.json"
        assert main(["gen", "random_floor", "--n", "20", "--k", "2", "--seed", "5", "-o", str(d), "--instance", str(i)]) == 0
        outs.append((d.read_bytes(), i.read_bytes()))
    assert outs[0] == outs[1]


def test_analyze_two_cliques(tmp_path):
    path = _write(tmp_path / "d.json", two_cliques(8, 8).to_json_obj())
    out = tmp_path / "a.json"
    assert main(["analyze", "-i", path, "-o", str(out), "--nu", "0.05", "--tau", "0.2"]) == 0
    rep = json.loads(out.read_text())
    assert rep["ec"]["found"] and rep["ec"]["mode"] == "exact"
    assert rep["partition"]["case"] == "tiny-overlap"
    assert rep["expansion"]["verdict"] == "fail"


def test_analyze_complete(tmp_path):
    path = _write(tmp_path / "d.json", gen_complete(12).to_json_obj())
    out = tmp_path / "a.json"
    assert main(["analyze", "-i", path, "-o", str(out), "--nu", "0.1", "--tau", "0.1"]) == 0
    rep = json.loads(out.read_text())
    assert rep["ec"] == {"mode": "exact", "found": False, "certified": True}
    assert rep["expansion"]["verdict"] == "pass" and rep["expansion"]["mode"] == "exact"


def test_analyze_exact_above_cap(tmp_path):
    path = _write(tmp_path / "d.json", gen_complete(30).to_json_obj())
    out = tmp_path / "a.json"
    assert main(["analyze", "-i", path, "-o", str(out), "--exact", "--samples", "50"]) == 0
    rep = json.loads(out.read_text())
    assert len(rep["caveats"]) == 2
    assert rep["expansion"]["mode"] == "sampled" and rep["expansion"]["caveat"]


def test_bench_rows_and_determinism(tmp_path):
    args = ["bench", "--family", "random_floor", "--sizes", "12,14", "--seed", "2", "--seed", "1"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["-o", str(a)]) == 0
    assert main(["bench", "--family", "random_floor", "--sizes", "14,12", "--seed", "1", "--seed", "2", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "instance,family,n,k,seed,status,success,solved_by,retries"
    assert len(lines) == 5
    assert [line.split(",")[4] for line in lines[1:]] == ["1", "2", "1", "2"]


def test_bench_grid_edge_cases(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["bench", "--sizes", "", "-o", str(out)]) == 0
    assert out.read_text().splitlines() == ["instance,family,n,k,seed,status,success,solved_by,retries"]
    assert main(["bench", "--sizes", "12,x"]) == 1
    assert main(["bench", "--sizes", "1"]) == 1
    assert main(["bench", "--sizes", "12", "--family", "remark1"]) == 1


def test_bench_timings_column(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["bench", "--sizes", "12", "--timings", "-o", str(out)]) == 0
    assert out.read_text().splitlines()[0].endswith(",seconds")
