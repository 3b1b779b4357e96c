"""Linear model of packing fraction against shape and container features.

Run: python3 demos/fraction_regression.py [batch.csv]
Without an argument the shipped published results are used.
"""
import sys

import numpy as np

from eggpack.experiments import fit_regression, load_reference, read_csv

if len(sys.argv) > 1:
    rows = [r for r in read_csv(sys.argv[1]) if np.isfinite(r.fraction)]
else:
    rows = [r.as_record() for r in load_reference(cases={1, 2, 3, 4, 5, 6})]

fit = fit_regression(rows)
print(fit.summary())

# fraction by container size: more sides waste less room
by_m = {}
for r in rows:
    by_m.setdefault(r.m, []).append(r.fraction)
print("\nmean fraction by m")
for m in sorted(by_m):
    print(f"  m={m:<3d} {np.mean(by_m[m]):.4f}  ({len(by_m[m])} rows)")

worst = np.argsort(np.abs(fit.residuals))[-3:][::-1]
print("\nlargest residuals")
for k in worst:
    r = rows[k]
    print(f"  problem {r.problem:3d} (case {r.case}, n={r.n}, m={r.m}): {fit.residuals[k]:+.4f}")
