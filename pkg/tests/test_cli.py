import math
import re
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import solved
from eggpack.cli import int_set, main
from eggpack.experiments import make_test_case, packing_fraction, read_csv
from eggpack.formats import (
    FormatError,
    SolutionFile,
    read_problem,
    read_solution,
    write_problem,
    write_solution,
)
from eggpack.geometry import EggShape, Pose
from eggpack.model import PackingInstance
from eggpack.polygon import RegularPolygon, polygon_area
from eggpack.render import render_svg
from eggpack.verification import verify

SVG_NS = "{http://www.w3.org/2000/svg}"


def problem_file(tmp_path, text, name="p.txt"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def solution_for(result, problem):
    best = result.best
    return SolutionFile(
        d=best.objective,
        poses=problem.layout.poses(best.point),
        objective=best.objective,
        area=polygon_area(problem.instance.m, best.objective),
        fraction=packing_fraction(problem.instance, best.objective),
        certified=result.certified,
        tol=best.certificate.tol,
    )


def svg_paths(text):
    root = ET.fromstring(text)
    out = {}
    for el in root.iter(SVG_NS + "path"):
        nums = re.findall(r"-?\d+\.\d+,-?\d+\.\d+", el.get("d"))
        out[el.get("id")] = np.array([[float(v) for v in s.split(",")] for s in nums])
    return root, out


class TestFormats:
    def test_problem_round_trip(self, tmp_path):
        inst = make_test_case(7, 3, 5)
        path = tmp_path / "p.txt"
        write_problem(path, inst, {"starts": 7})
        back = read_problem(path)
        assert back.instance().eggs == inst.eggs
        assert (back.m, back.lb, back.ub) == (5, inst.lb, inst.ub)
        assert back.config().starts == 7

    def test_solution_round_trip_is_lossless(self, tmp_path, rng):
        poses = [Pose(*rng.normal(size=2), rng.uniform(-3, 3)) for _ in range(3)]
        sol = SolutionFile(math.pi / 3, poses, math.pi / 3, 1.2345678901234567, 0.1 + 0.2, True, -1e-17, 3e-300)
        path = tmp_path / "s.txt"
        write_solution(path, sol)
        back = read_solution(path)
        assert back.d == sol.d and back.fraction == sol.fraction and back.area == sol.area
        assert back.min_pair_margin == sol.min_pair_margin
        assert back.min_containment_margin == sol.min_containment_margin
        assert [(q.xc, q.yc, q.theta) for q in back.poses] == [(q.xc, q.yc, q.theta) for q in poses]

    @pytest.mark.parametrize(
        "text, where",
        [
            ("m = 3\negg = 1 1 2\n", ":2: field 'egg'"),
            ("m = 3\negg = 1 x 2 0\n", ":2: field 'egg'"),
            ("m = three\negg = 1 1 2 0\n", ":1: field 'm'"),
            ("m = 3\negg = 1 1 2 0\ncolour = red\n", ":3: unknown field 'colour'"),
            ("egg = 1 1 2 0\n", "missing field 'm'"),
            ("m = 3\n", "egg list is empty"),
            ("m = 3\negg = 1 1 2.5 0\n", "not an integer"),
            ("m = 3\negg = 1 1 2 50\n", "not convex"),
            ("m = 3\njust text\n", ":2: expected 'key = value'"),
        ],
    )
    def test_malformed_problem(self, tmp_path, text, where):
        with pytest.raises(FormatError, match=re.escape(where)):
            read_problem(problem_file(tmp_path, text))

    def test_int_set(self):
        assert int_set("1,3-5") == [1, 3, 4, 5]
        assert int_set("4-10") == list(range(4, 11))


class TestSolveAndVerify:
    def test_one_unit_circle(self, tmp_path, capsys):
        prob = problem_file(tmp_path, "m = 4\negg = 1 1 2 0\n")
        out = tmp_path / "s.txt"
        assert main(["solve", prob, "--starts", "3", "-o", str(out)]) == 0
        sol = read_solution(out)
        assert sol.d == pytest.approx(1, abs=1e-6)
        assert sol.certified
        assert main(["verify", prob, str(out)]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_solve_to_stdout(self, tmp_path, capsys):
        prob = problem_file(tmp_path, "m = 5\negg = 0.5 0.5 2 0\n")
        assert main(["solve", prob, "--starts", "1"]) == 0
        assert re.search(r"^d = 0\.5", capsys.readouterr().out, re.M)

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        prob = problem_file(tmp_path, "m = 3\negg = 1 0.5 2 0\negg = 0.5 0.5 2 0\n")
        monkeypatch.setenv("EGGPACK_SEED", "9")
        out = tmp_path / "s.txt"
        assert main(["solve", prob, "--starts", "4", "-o", str(out)]) == 0
        assert read_solution(out).seed == 9
        monkeypatch.setenv("EGGPACK_SEED", "nine")
        assert main(["solve", prob, "--starts", "1", "-o", str(out)]) == 1

    def test_empty_egg_list(self, tmp_path, capsys):
        assert main(["solve", problem_file(tmp_path, "m = 4\n")]) == 1
        assert "egg" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["solve", str(tmp_path / "nope.txt")]) == 1

    def test_bad_flag(self):
        assert main(["solve"]) == 1

    def test_overlapped_circles_named(self, tmp_path, capsys):
        prob = problem_file(tmp_path, "m = 4\negg = 1 1 2 0\negg = 1 1 2 0\n")
        sol = tmp_path / "s.txt"
        sol.write_text("d = 2\npose = -0.5 0 0\npose = 0.5 0 0\n")
        assert main(["verify", prob, str(sol)]) == 2
        assert "FAIL pair (1, 2)" in capsys.readouterr().out

    def test_mismatched_counts(self, tmp_path):
        prob = problem_file(tmp_path, "m = 4\negg = 1 1 2 0\negg = 1 1 2 0\n")
        sol = tmp_path / "s.txt"
        sol.write_text("d = 2\npose = -1 0 0\n")
        assert main(["verify", prob, str(sol)]) == 1

    @pytest.mark.parametrize("tol", [1e-6, 1e-9, 1e-12, 1e-15])
    def test_tight_tolerance_matches_margins(self, tmp_path, tol):
        inst, problem, result = solved("two-circles")
        prob = tmp_path / "p.txt"
        sol = tmp_path / "s.txt"
        write_problem(prob, inst)
        write_solution(sol, solution_for(result, problem))
        cert = verify(inst, read_solution(sol).poses, read_solution(sol).d, tol=tol)
        expected = cert.min_pair_margin >= -tol and cert.min_containment_margin >= -tol
        assert main(["verify", str(prob), str(sol), "--tol", repr(tol)]) == (0 if expected else 2)

    def test_round_trip_keeps_verdict(self, tmp_path):
        inst, problem, result = solved("two-circles")
        path = tmp_path / "s.txt"
        write_solution(path, solution_for(result, problem))
        back = read_solution(path)
        assert verify(inst, back.poses, back.d).passed == result.certified

    def test_table_instance_then_verify(self, tmp_path):
        prob, out = tmp_path / "p.txt", tmp_path / "s.txt"
        write_problem(prob, make_test_case(1, 4, 3))
        assert main(["solve", str(prob), "--starts", "50", "--seed", "0", "-o", str(out)]) == 0
        sol = read_solution(out)
        assert sol.certified and sol.starts == 50
        assert sol.d <= 2.76
        assert sol.d <= 1.05 * 2.6781 * math.cos(math.pi / 3)
        assert main(["verify", str(prob), str(out)]) == 0

    def test_module_entry_point(self, tmp_path):
        prob = problem_file(tmp_path, "m = 4\negg = 1 1 2 0\n")
        done = subprocess.run(
            [sys.executable, "-m", "eggpack", "solve", prob, "--starts", "1"], capture_output=True, text=True
        )
        assert done.returncode == 0
        assert done.stdout.startswith("d = ")


class TestBatch:
    def test_single_row(self, tmp_path):
        out = tmp_path / "res.csv"
        assert main(["batch", "--cases", "1", "--ns", "4", "--ms", "3", "--starts", "3", "-o", str(out)]) == 0
        (row,) = read_csv(out)
        assert (row.problem, row.case, row.n, row.m) == (1, 1, 4, 3)
        assert row.verified

    def test_unwritable_output(self, tmp_path):
        out = tmp_path / "no" / "such" / "res.csv"
        assert main(["batch", "--cases", "1", "--ns", "4", "--ms", "3", "-o", str(out)]) != 0
        assert not out.exists()
        assert not out.parent.exists()

    def test_bad_grid(self, tmp_path):
        assert main(["batch", "--cases", "x", "--ns", "4", "--ms", "3", "-o", str(tmp_path / "r.csv")]) == 1


class TestRegress:
    def test_shipped_fixture(self, capsys):
        assert main(["regress", "--cases", "1-6"]) == 0
        text = capsys.readouterr().out
        assert "R^2" in text or "R2" in text

    def test_too_few_rows(self, tmp_path):
        path = tmp_path / "r.csv"
        lines = ["problem,case,m,n,objective,area,fraction,time_sec,verified"]
        lines += [f"{k},1,3,{k + 3},1,1,0.7,0,true" for k in range(1, 6)]
        path.write_text("\n".join(lines) + "\n")
        assert main(["regress", str(path)]) == 1

    def test_degenerate(self, tmp_path, capsys):
        assert main(["regress", "--cases", "1"]) == 1
        assert "singular" in capsys.readouterr().err


class TestRender:
    def test_one_circle_in_square(self, tmp_path):
        inst = PackingInstance(4, (EggShape(1, 1),))
        svg = render_svg(inst, [Pose(0, 0, 0)], 1.0)
        root, paths = svg_paths(svg)
        assert root.get("version") == "1.1"
        assert sorted(paths) == ["container", "egg1"]
        assert len(paths["egg1"]) >= 256
        # container centred on the canvas
        assert np.allclose(paths["container"].mean(axis=0), 0, atol=1e-3)

    def test_cli_render_deterministic(self, tmp_path):
        inst, problem, result = solved("two-circles")
        prob, sol = tmp_path / "p.txt", tmp_path / "s.txt"
        write_problem(prob, inst)
        write_solution(sol, solution_for(result, problem))
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        assert main(["render", str(prob), str(sol), "-o", str(a)]) == 0
        assert main(["render", str(prob), str(sol), "-o", str(b), "--samples", "512"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_render_unwritable(self, tmp_path):
        prob = problem_file(tmp_path, "m = 4\negg = 1 1 2 0\n")
        sol = tmp_path / "s.txt"
        sol.write_text("d = 1\npose = 0 0 0\n")
        assert main(["render", prob, str(sol), "-o", str(tmp_path / "no" / "x.svg")]) == 1

    def test_samples_floor(self):
        inst = PackingInstance(3, (EggShape(1, 1),))
        _, paths = svg_paths(render_svg(inst, [Pose(0, 0, 0)], 2.0, samples=10))
        assert len(paths["egg1"]) == 256

    def test_n8_m5_inside_polygon(self):
        inst, problem, result = solved("1:8:5", starts=2)
        assert result.certified
        d = result.best.objective
        svg = render_svg(inst, problem.layout.poses(result.best.point), d)
        _, paths = svg_paths(svg)
        assert len(paths) == 9
        corners = RegularPolygon(5, d).vertices()
        # recover the drawing scale from the container outline
        scale = np.linalg.norm(paths["container"], axis=1).mean() / np.linalg.norm(corners, axis=1).mean()
        normals = RegularPolygon(5, d).normals
        for k in range(1, 9):
            world = paths[f"egg{k}"] * [1, -1] / scale
            # printed coordinates carry 5e-5 of rounding at canvas scale
            slack = 1e-6 + 1e-4 / scale
            assert np.max(world @ normals.T) <= d + slack
