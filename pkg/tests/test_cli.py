import json
import subprocess
import sys

import numpy as np
import pytest

from kdt import cli
from kdt.errors import InternalConsistencyError
from kdt.geometry import orient2d
from kdt.pointio import HEADER, parse_points, read_points, write_points
from kdt.triangulation import build_initial, dumps

from conftest import uniform


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_gen_small(tmp_path):
    out = tmp_path / "p.txt"
    assert run("gen", "-n", 3, "--seed", 1, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == HEADER and len(lines) == 4
    pts = read_points(out)
    assert np.all((pts >= 0) & (pts <= 1))


def test_gen_deterministic(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for out in (a, b):
        assert run("gen", "-n", 500, "--seed", 7, "--distribution", "clustered", "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_large_has_no_duplicates(tmp_path):
    out = tmp_path / "p.txt"
    assert run("gen", "-n", 100_000, "--seed", 3, "--out", out) == 0
    pts = read_points(out)
    assert len(pts) == 100_000
    assert len(np.unique(pts, axis=0)) == 100_000


def test_point_file_round_trip(tmp_path):
    pts = np.random.default_rng(0).normal(size=(200, 2)) * 1e-3
    write_points(tmp_path / "p.txt", pts)
    assert np.array_equal(read_points(tmp_path / "p.txt"), pts)


@pytest.mark.parametrize("text,line", [
    ("0.1,0.2\n", 1),
    (HEADER + "\n0.1,0.2\n0.3\n", 3),
    (HEADER + "\n0.1,abc\n", 2),
    (HEADER + "\n0.1,nan\n", 2),
])
def test_parse_errors_have_line_numbers(text, line):
    with pytest.raises(Exception) as exc:
        parse_points(text, "x.txt")
    assert exc.value.line == line


def test_run_zero_steps(tmp_path):
    write_points(tmp_path / "p.txt", uniform(30, 1))
    metrics = tmp_path / "m.jsonl"
    assert run("run", "--points", tmp_path / "p.txt", "--steps", 0, "--metrics", metrics) == 0
    lines = metrics.read_text().splitlines()
    assert len(lines) == 1
    man = json.loads(lines[0])["manifest"]
    assert man["command"] == "run" and man["config"]["steps"] == 0
    assert len(man["points_sha256"]) == 64


def test_run_dumps(tmp_path):
    write_points(tmp_path / "p.txt", uniform(200, 2))
    dumps_dir = tmp_path / "dumps"
    assert run("run", "--points", tmp_path / "p.txt", "--steps", 30, "--dump-every", 10,
               "--threshold", 16, "--metrics", tmp_path / "m.jsonl", "--out", dumps_dir) == 0
    files = sorted(p.name for p in dumps_dir.iterdir())
    assert files == ["dump_t000010.json", "dump_t000020.json", "dump_t000030.json"]
    rows = [json.loads(x) for x in (tmp_path / "m.jsonl").read_text().splitlines()]
    assert len(rows) == 31 and [r["t"] for r in rows[1:]] == list(range(30))
    assert run("validate", dumps_dir / "dump_t000030.json") == 0


def test_dump_round_trip_recovers_points(tmp_path):
    pts = uniform(100, 4)
    write_points(tmp_path / "p.txt", pts)
    assert run("run", "--points", tmp_path / "p.txt", "--steps", 0, "--dump-every", 1,
               "--metrics", tmp_path / "m.jsonl", "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "dump_t000000.json").read_text())
    got = np.array(doc["vertices"])
    assert sorted(map(tuple, got.tolist())) == sorted(map(tuple, pts.tolist()))
    assert doc["manifest"]["tool"] == "kdt"


def test_validate_oracle_match(tmp_path, capsys):
    write_points(tmp_path / "p.txt", uniform(30, 5))
    assert run("run", "--points", tmp_path / "p.txt", "--steps", 10, "--dump-every", 10,
               "--threshold", 8, "--metrics", tmp_path / "m.jsonl", "--out", tmp_path) == 0
    capsys.readouterr()
    assert run("validate", tmp_path / "dump_t000010.json", "--oracle") == 0
    assert "oracle: match" in capsys.readouterr().out
    assert run("validate", "--points", tmp_path / "p.txt", "--oracle") == 0


def test_validate_flipped_diagonal(tmp_path, capsys):
    pts = [(0.0, 0.0), (2.0, 0.0), (2.2, 1.5), (0.0, 1.0)]
    doc = json.loads(dumps(build_initial(pts)))
    a, b = doc["triangles"]
    shared = set(a) & set(b)
    r, s = sorted(set(a) ^ set(b))
    # the other diagonal (r, s), each triangle put in CCW order
    flipped = []
    for x in sorted(shared):
        tri = [r, s, x]
        if orient2d(*(pts[i] for i in tri)) < 0:
            tri = [r, x, s]
        flipped.append(tri)
    doc["triangles"] = flipped
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    capsys.readouterr()
    assert run("validate", path) == 3
    out = capsys.readouterr().out
    assert out.count("violation:") == 2
    assert "invalid" in out


def test_malformed_inputs_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text(HEADER + "\n0.1,0.2\n0.5;0.5\n")
    assert run("run", "--points", bad, "--steps", 1) == 2
    assert ":3" in capsys.readouterr().err
    assert run("validate", tmp_path / "missing.txt") == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert run("validate", broken) == 2
    dup = tmp_path / "dup.txt"
    write_points(dup, [(0, 0), (1, 0), (0, 1), (1, 0)])
    assert run("run", "--points", dup, "--steps", 1) == 2
    assert run("gen", "-n", 2, "--out", tmp_path / "x.txt") == 2


def test_internal_failure_exit_4(tmp_path, monkeypatch):
    write_points(tmp_path / "p.txt", uniform(50, 1))

    def broken(state):
        raise InternalConsistencyError("mesh invalid")

    monkeypatch.setattr(cli, "step", broken)
    assert run("run", "--points", tmp_path / "p.txt", "--steps", 2,
               "--metrics", tmp_path / "m.jsonl") == 4


def test_bench_single_row(tmp_path, capsys):
    write_points(tmp_path / "p.txt", uniform(300, 6))
    report = tmp_path / "bench.json"
    assert run("bench", "--points", tmp_path / "p.txt", "--steps", 5, "--threshold", 16,
               "--modes", "serial-kinetic", "--repeats", 1, "--out", report) == 0
    doc = json.loads(report.read_text())
    assert len(doc["rows"]) == 1
    assert doc["rows"][0]["mode"] == "serial-kinetic"
    assert "speedup_vs_serial" in doc["rows"][0]


def test_bench_parallel_one_worker_matches_serial(tmp_path):
    write_points(tmp_path / "p.txt", uniform(400, 7))
    report = tmp_path / "bench.json"
    assert run("bench", "--points", tmp_path / "p.txt", "--steps", 20, "--threshold", 16,
               "--modes", "parallel-kinetic,serial-kinetic,rebuild", "--workers", "1",
               "--repeats", 2, "--out", report) == 0
    rows = json.loads(report.read_text())["rows"]
    assert len({r["edges_digest"] for r in rows}) == 1
    assert all("speedup_vs_rebuild" in r for r in rows)


def test_module_entry_point(tmp_path):
    out = tmp_path / "p.txt"
    proc = subprocess.run([sys.executable, "-m", "kdt", "gen", "-n", "10", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and out.exists()
    proc = subprocess.run([sys.executable, "-m", "kdt", "run", "--points", str(tmp_path / "no")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
