import json
from xml.etree import ElementTree

import pytest

from extremalbox import CubeTiling, DiscreteBox, contact_graph, grid_tiling, validate_tiling
from extremalbox.cli import main

from conftest import q4_box, q7_tiling, stack3_tiling


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def read(path):
    return json.loads(open(path, encoding="utf-8").read())


def stack3_box():
    ids = [c.id for c in stack3_tiling().cubes]
    every = set(ids)
    return DiscreteBox.build(3, ids, [("s0", "s1"), ("s1", "s2")], [({"s2"}, {"s0"}), (every, every), (every, every)])


@pytest.fixture
def q4_file(tmp_path):
    return write(tmp_path / "q4.json", q4_box().dumps())


@pytest.fixture
def seed7(tmp_path):
    tiling = str(tmp_path / "t7.json")
    box = str(tmp_path / "b7.json")
    assert main(["generate", "--n", "3", "--k", "2", "--depth", "1", "--seed", "7", "--out", tiling]) == 0
    assert main(["extract", tiling, "--out", box]) == 0
    return tiling, box


def test_solve_q4(q4_file, tmp_path):
    out = str(tmp_path / "r.json")
    assert main(["solve", q4_file, "--out", out]) == 0
    res = read(out)
    assert res["extremalLength"] == pytest.approx(1.0, abs=1e-6)
    man = read(out + ".manifest.json")
    assert man["inputs"] == [q4_file] and man["outputs"] == [out]
    assert {"command", "seed", "tolerances", "version", "wallClockSeconds"} <= set(man)


def test_solve_k8_brute_force(tmp_path):
    box, _ = contact_graph(grid_tiling(2, 3), with_faces=False)
    path = write(tmp_path / "k8.json", box.dumps())
    out = str(tmp_path / "r.json")
    assert main(["solve", path, "--mode", "brute-force", "--out", out]) == 0
    assert read(out)["extremalLength"] == pytest.approx(1.0, abs=1e-6)


def test_solve_stack3_rejected(tmp_path, capsys):
    path = write(tmp_path / "stack3.json", stack3_box().dumps())
    assert main(["solve", path]) == 1
    assert "stack3.json" in capsys.readouterr().err


def test_parse_error_has_line_context(tmp_path, capsys):
    path = write(tmp_path / "bad.json", '{\n  "n": 2,\n  "vertices": [,]\n}\n')
    assert main(["solve", path]) == 1
    err = capsys.readouterr().err
    assert "bad.json:3:" in err and '"vertices": [,]' in err


def test_missing_file_is_io_error(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == 4


def test_nonconvergence_exit_code(tmp_path):
    box, _ = contact_graph(grid_tiling(3, 2), with_faces=False)
    path = write(tmp_path / "g.json", box.dumps())
    assert main(["solve", path, "--max-iter", "1"]) == 2


def test_generate_is_valid_and_deterministic(seed7, tmp_path):
    tiling, _ = seed7
    assert validate_tiling(CubeTiling.loads(open(tiling).read())).ok
    assert main(["validate", tiling]) == 0
    again = str(tmp_path / "again.json")
    assert main(["generate", "--n", "3", "--k", "2", "--depth", "1", "--seed", "7", "--out", again]) == 0
    assert open(again, "rb").read() == open(tiling, "rb").read()


def test_extract_writes_metric(seed7):
    _, box = seed7
    metric = read(box.replace(".json", ".metric.json"))
    assert all(isinstance(w, str) for w in metric["weights"].values())
    assert set(metric["weights"]) == set(read(box)["vertices"])


def test_check_tip_fails_on_seed7(seed7, tmp_path):
    _, box = seed7
    out = str(tmp_path / "tip.json")
    metric = box.replace(".json", ".metric.json")
    assert main(["check", box, "--metric", metric, "--tip", "--out", out]) == 0
    reports = read(out)["reports"]
    assert len(reports) == 2 and all(r["verdict"] == "fails" for r in reports)


def test_pipeline_chain(seed7, tmp_path):
    tiling, box = seed7
    res = str(tmp_path / "res.json")
    assert main(["solve", box, "--out", res]) == 0
    out = str(tmp_path / "chain.json")
    assert main(["check", tiling, "--chain", "--out", out]) == 0
    assert [r["verdict"] for r in read(out)["reports"]] == ["holds"]


def test_solve_is_byte_identical(q4_file, tmp_path):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    assert main(["solve", q4_file, "--out", a]) == 0
    assert main(["solve", q4_file, "--out", b]) == 0
    assert open(a, "rb").read() == open(b, "rb").read()


def test_render_q7(tmp_path):
    path = write(tmp_path / "q7.json", q7_tiling().dumps())
    out = str(tmp_path / "q7.svg")
    assert main(["render", path, "--out", out]) == 0
    root = ElementTree.fromstring(open(out).read())
    rects = [r for r in root if r.get("id") is not None]
    assert len(rects) == 7
    assert sum(float(r.get("width")) * float(r.get("height")) for r in rects) == pytest.approx(4 * 100**2)


def test_render_slice_3d(tmp_path):
    path = write(tmp_path / "k8.json", grid_tiling(2, 3).dumps())
    out = str(tmp_path / "k8.svg")
    assert main(["render", path, "--slice", "3=1/2", "--out", out]) == 0
    assert main(["render", path, "--out", str(tmp_path / "x.svg")]) == 1


def test_realize2d(tmp_path):
    box, s = contact_graph(q7_tiling(), with_faces=False)
    b = write(tmp_path / "b.json", box.dumps())
    m = write(tmp_path / "m.json", s.dumps())
    out = str(tmp_path / "t.json")
    assert main(["realize2d", b, m, "--out", out]) == 0
    t = CubeTiling.loads(open(out).read())
    assert len(t.cubes) == 7 and validate_tiling(t).ok


def test_jobs_across_inputs(q4_file, tmp_path):
    box, _ = contact_graph(grid_tiling(2, 3), with_faces=False)
    k8 = write(tmp_path / "k8.json", box.dumps())
    outdir = tmp_path / "out"
    assert main(["solve", q4_file, k8, "--jobs", "2", "--out", str(outdir)]) == 0
    for stem in ("q4", "k8"):
        assert read(outdir / f"{stem}.solve.json")["extremalLength"] == pytest.approx(1.0, abs=1e-6)


def test_manifest_on_stderr_without_out(q4_file, capsys):
    assert main(["validate", q4_file]) == 0
    cap = capsys.readouterr()
    assert json.loads(cap.err)["inputs"] == [q4_file]
    assert json.loads(cap.out)["ok"] is True
