"""Benchmark test cases, batch runs, packing fractions and the fraction regression.

The eight benchmark families pack ``n`` eggs with semi-axes
``a_i = i**-0.5`` and ``b_i = a_i`` or ``a_i / 2``.  Published best-found
results for all 224 ``(case, m, n)`` instances ship as a CSV fixture; their
objective column is the container's circumradius, so comparisons convert it
to an apothem first (:meth:`ReferenceRow.apothem`).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import stats

from .geometry import EggShape, egg_area
from .model import PackingInstance, build_model
from .polygon import polygon_area
from .solver import INFEASIBLE, SolverConfig, multistart
from .verification import Certificate, verify

__all__ = [
    "TestCaseSpec",
    "ResultRecord",
    "ReferenceRow",
    "RegressionFit",
    "Certificate",
    "CASES",
    "BATCH_NS",
    "BATCH_MS",
    "CSV_FIELDS",
    "make_test_case",
    "problem_number",
    "packing_fraction",
    "verify",
    "solve_instance",
    "run_batch",
    "compare",
    "write_csv",
    "read_csv",
    "load_reference",
    "fit_regression",
]

log = logging.getLogger(__name__)

BATCH_NS = tuple(range(4, 11))
BATCH_MS = (3, 4, 5, 10)
CSV_FIELDS = ("problem", "case", "m", "n", "objective", "area", "fraction", "time_sec", "verified")
MATCH_FACTOR = 1.05


@dataclass(frozen=True)
class TestCaseSpec:
    """One benchmark family.

    ``t`` is the common distortion factor, or ``None`` when egg ``i`` has
    ``t_i = i / 5``.  ``c`` is the axis ratio ``a_i / b_i``.
    """

    __test__ = False  # keep pytest from collecting this class

    case: int
    p: int
    c: int
    t: float | None

    def shape(self, i: int) -> EggShape:
        """Egg ``i`` (1-based) of the family."""
        a = i**-0.5
        t = i / 5 if self.t is None else self.t
        return EggShape(a, a / self.c, self.p, t)

    def eggs(self, n: int) -> tuple:
        return tuple(self.shape(i) for i in range(1, n + 1))

    def mean_t(self, n: int) -> float:
        return sum(i / 5 for i in range(1, n + 1)) / n if self.t is None else self.t


CASES = {
    1: TestCaseSpec(1, 2, 1, 0.0),
    2: TestCaseSpec(2, 2, 2, 0.0),
    3: TestCaseSpec(3, 2, 1, 0.5),
    4: TestCaseSpec(4, 2, 2, 0.5),
    5: TestCaseSpec(5, 2, 1, 1.0),
    6: TestCaseSpec(6, 2, 2, 1.0),
    7: TestCaseSpec(7, 2, 1, None),
    8: TestCaseSpec(8, 4, 1, 0.0),
}


def _case(case) -> TestCaseSpec:
    try:
        return CASES[int(case)]
    except (KeyError, ValueError, TypeError):
        raise ValueError(f"unknown test case {case!r}; expected 1..8") from None


def make_test_case(case: int, n: int, m: int = 3, epsilon: float = 0.0) -> PackingInstance:
    """Instance with eggs ``1..n`` of family ``case`` in an ``m``-gon."""
    spec = _case(case)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return PackingInstance(m, spec.eggs(int(n)), epsilon=epsilon)


def problem_number(case: int, m: int, n: int) -> int:
    """Position of ``(case, m, n)`` in the published numbering (1..224).

    Instances outside the published grid get numbers after 224, still ordered
    by case, then ``m``, then ``n``.
    """
    if m in BATCH_MS and n in BATCH_NS:
        return (case - 1) * 28 + BATCH_MS.index(m) * 7 + (n - BATCH_NS[0]) + 1
    return 1000 * case + 100 * min(m, 99) + min(n, 99) + 224


def packing_fraction(instance: PackingInstance, d: float) -> float:
    """Total egg area over the area of the ``m``-gon with apothem ``d``."""
    return sum(egg_area(s) for s in instance.eggs) / polygon_area(instance.m, d)


@dataclass
class ResultRecord:
    problem: int
    case: int
    m: int
    n: int
    objective: float
    area: float
    fraction: float
    time_sec: float
    verified: bool
    status: str = ""

    def as_row(self) -> dict:
        return {
            "problem": self.problem,
            "case": self.case,
            "m": self.m,
            "n": self.n,
            "objective": repr(float(self.objective)),
            "area": repr(float(self.area)),
            "fraction": repr(float(self.fraction)),
            "time_sec": f"{self.time_sec:.3f}",
            "verified": str(bool(self.verified)).lower(),
        }


def solve_instance(case: int, n: int, m: int, config: SolverConfig = SolverConfig()) -> ResultRecord:
    """Multistart solve of one benchmark instance; failures give an unverified record."""
    t0 = time.perf_counter()
    number = problem_number(case, m, n)
    try:
        instance = make_test_case(case, n, m)
        result = multistart(build_model(instance), instance, config)
    except Exception as exc:  # recorded, never fatal to a batch
        log.error("problem %d failed: %s", number, exc)
        return ResultRecord(number, case, m, n, math.nan, math.nan, math.nan, time.perf_counter() - t0, False, "error")
    elapsed = time.perf_counter() - t0
    best = result.best
    if best is None:
        return ResultRecord(number, case, m, n, math.nan, math.nan, math.nan, elapsed, False, INFEASIBLE)
    d = best.objective
    return ResultRecord(
        number, case, m, n, d, polygon_area(m, d), packing_fraction(instance, d), elapsed, result.certified, best.status
    )


def _solve_key(args):
    return solve_instance(*args)


def run_batch(cases, ns, ms, config: SolverConfig = SolverConfig(), workers: int = 1) -> list[ResultRecord]:
    """Solve every ``(case, n, m)`` combination; records come back in problem order.

    With ``workers > 1`` instances run in separate processes.  Results do not
    depend on the worker count.
    """
    cases, ns, ms = sorted(set(cases)), sorted(set(ns)), sorted(set(ms))
    if not (cases and ns and ms):
        raise ValueError("cases, ns and ms must all be non-empty")
    for c in cases:
        _case(c)
    jobs = sorted(((c, n, m, config) for c in cases for n in ns for m in ms), key=lambda j: problem_number(j[0], j[2], j[1]))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_solve_key, jobs))
    else:
        records = [_solve_key(j) for j in jobs]
    return sorted(records, key=lambda r: r.problem)


def write_csv(records, path) -> None:
    """Write records atomically: a failed write leaves no partial file."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(r.as_row())
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".eggpack-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("true", "1", "yes")


def read_csv(path) -> list[ResultRecord]:
    """Read a batch CSV written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                out.append(
                    ResultRecord(
                        int(row["problem"]),
                        int(row["case"]),
                        int(row["m"]),
                        int(row["n"]),
                        float(row["objective"]),
                        float(row["area"]),
                        float(row["fraction"]),
                        float(row["time_sec"]),
                        _parse_bool(row["verified"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: {exc}") from None
    return out


@dataclass(frozen=True)
class ReferenceRow:
    """A published best-found result.

    ``objective`` is the circumradius of the container and ``area`` its
    area; :meth:`apothem` gives the value comparable with solver objectives.
    """

    problem: int
    case: int
    m: int
    n: int
    objective: float
    area: float
    fraction: float
    time_sec: float
    source: str

    def apothem(self) -> float:
        return self.objective * math.cos(math.pi / self.m)

    def as_record(self) -> ResultRecord:
        return ResultRecord(
            self.problem, self.case, self.m, self.n, self.objective, self.area, self.fraction, self.time_sec, False
        )


def load_reference(cases=None) -> list[ReferenceRow]:
    """The shipped table of published results, optionally restricted to ``cases``."""
    text = resources.files("eggpack").joinpath("data/reference_results.csv").read_text()
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        row = ReferenceRow(
            int(r["problem"]),
            int(r["case"]),
            int(r["m"]),
            int(r["n"]),
            float(r["objective"]),
            float(r["area"]),
            float(r["fraction"]),
            float(r["time_sec"]),
            r["source"],
        )
        if cases is None or row.case in cases:
            rows.append(row)
    return rows


def compare(record: ResultRecord, reference: ReferenceRow) -> str:
    """``"improved"``, ``"matched"`` (within 5 %), ``"worse"`` or ``"unverified"``."""
    if not record.verified or not math.isfinite(record.objective):
        return "unverified"
    target = reference.apothem()
    if record.objective < target:
        return "improved"
    if record.objective <= MATCH_FACTOR * target:
        return "matched"
    return "worse"


@dataclass(frozen=True)
class RegressionFit:
    """OLS fit ``fraction ~ 1 + t + c + 1/n + 1/m``."""

    coefficients: np.ndarray  # intercept, t, c, 1/n, 1/m
    pvalues: np.ndarray
    r2: float
    design: np.ndarray
    residuals: np.ndarray

    NAMES = ("intercept", "t", "c", "1/n", "1/m")

    def predict(self, design) -> np.ndarray:
        return np.asarray(design, dtype=float) @ self.coefficients

    def summary(self) -> str:
        lines = [f"{'term':<10} {'coef':>10} {'p-value':>11}"]
        for name, b, p in zip(self.NAMES, self.coefficients, self.pvalues):
            lines.append(f"{name:<10} {b:>10.4f} {p:>11.3g}")
        lines.append(f"R^2 = {self.r2:.4f}  (rows = {len(self.residuals)})")
        return "\n".join(lines)


def regression_design(records) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix ``[1, t, c, 1/n, 1/m]`` and response from records.

    Records need ``case``, ``n``, ``m`` and ``fraction``; for the family with
    per-egg distortion the mean ``t_i`` is used.
    """
    X, y = [], []
    for r in records:
        spec = _case(r.case)
        X.append([1.0, spec.mean_t(r.n), float(spec.c), 1.0 / r.n, 1.0 / r.m])
        y.append(float(r.fraction))
    return np.array(X), np.array(y)


def fit_regression(records=None, *, design=None, response=None) -> RegressionFit:
    """Ordinary least squares with two-sided t-test p-values.

    Pass either ``records`` (see :func:`regression_design`) or an explicit
    ``design`` matrix and ``response``.  Raises ``ValueError`` with fewer
    than 6 rows, non-finite data or a rank-deficient design.
    """
    if records is not None:
        X, y = regression_design(records)
    else:
        X, y = np.asarray(design, dtype=float), np.asarray(response, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("design and response sizes disagree")
    rows, k = X.shape
    if rows < k + 1:
        raise ValueError(f"need at least {k + 1} rows for {k} coefficients, got {rows}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in regression data")
    if np.linalg.matrix_rank(X) < k:
        raise ValueError("design matrix is singular")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    # one refinement step on the normal equations keeps X^T r at round-off level
    resid = y - X @ beta
    beta = beta + np.linalg.lstsq(X, resid, rcond=None)[0]
    resid = y - X @ beta
    dof = rows - k
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    pvalues = 2 * stats.t.sf(np.abs(tstat), dof)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return RegressionFit(beta, pvalues, r2, X, resid)
