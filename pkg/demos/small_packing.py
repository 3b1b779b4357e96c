"""Pack the four circles of test case 1 into a square and draw the result.

Run: python3 demos/small_packing.py [starts] [outdir]
Writes problem, solution and SVG files into outdir (default: current dir).
"""
import math
import os
import sys
import time

from eggpack.experiments import load_reference, make_test_case, packing_fraction, problem_number
from eggpack.formats import SolutionFile, write_problem, write_solution
from eggpack.model import build_model
from eggpack.polygon import polygon_area
from eggpack.render import render_svg
from eggpack.solver import SolverConfig, multistart

starts = int(sys.argv[1]) if len(sys.argv) > 1 else 10
outdir = sys.argv[2] if len(sys.argv) > 2 else "."

inst = make_test_case(1, 4, 4)
problem = build_model(inst)
print(f"{problem.n_var} variables, {problem.n_eq} equalities, {problem.n_ineq} inequalities")

t0 = time.perf_counter()
result = multistart(problem, inst, SolverConfig(starts=starts, seed=0))
elapsed = time.perf_counter() - t0
best = result.best
counts = {}
for o in result.outcomes:
    counts[o.status] = counts.get(o.status, 0) + 1
print(f"{starts} starts in {elapsed:.1f} s: {counts}")
if best is None:
    sys.exit("nothing certified; try more starts")

d = best.objective
ref = next(r for r in load_reference(cases={1}) if r.problem == problem_number(1, 4, 4))
print(f"apothem d       = {d:.6f}")
print(f"circumradius    = {d / math.cos(math.pi / 4):.4f}   (published {ref.objective})")
print(f"packing fraction= {packing_fraction(inst, d):.4f}   (published {ref.fraction})")

poses = problem.layout.poses(best.point)
write_problem(os.path.join(outdir, "case1_n4_m4.txt"), inst)
write_solution(
    os.path.join(outdir, "case1_n4_m4.sol"),
    SolutionFile(d, poses, d, polygon_area(4, d), packing_fraction(inst, d), result.certified,
                 best.certificate.min_pair_margin, best.certificate.min_containment_margin,
                 best.certificate.tol, best.status, 0, starts, elapsed),
)
with open(os.path.join(outdir, "case1_n4_m4.svg"), "w") as fh:
    fh.write(render_svg(inst, poses, d, title="case 1, n=4, m=4"))
print("wrote case1_n4_m4.{txt,sol,svg} to", os.path.abspath(outdir))
