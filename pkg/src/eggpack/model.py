"""The packing NLP with embedded stationarity conditions.

Decision vector layout (``n`` eggs, ``m`` sides, ``P = n(n-1)/2`` pairs)::

    [ d | (xc, yc, theta) * n | (x, y, lam) * P | (u, v, mu) * n*m ]

Pairs follow the order ``(0,1), (0,2), ..., (n-2,n-1)``.  Each pair has a
measured egg ``i`` and a carrier egg ``j``: the point ``(x, y)`` lives on egg
``j`` and the separation is measured with egg ``i``'s function.  The measured
egg is the one with the larger area (the lower index on ties), because a
one-sided boundary test cannot see the measured egg sitting inside the
carrier, and a larger egg never fits inside a smaller one.  For egg ``i`` and
side ``k`` the point ``(u, v)`` is the tangency point of egg ``i`` with its
supporting line of normal ``c_k``.

Equality rows (all ``= 0``), per pair then per egg-side::

    grad_x e_i(x, y) - lam * grad_x e_j(x, y)
    grad_y e_i(x, y) - lam * grad_y e_j(x, y)
    e_j(x, y)
    c_k.x - mu * grad_x e_i(u, v)
    c_k.y - mu * grad_y e_i(u, v)
    e_i(u, v)

Inequality rows (all ``>= 0``)::

    e_i(x, y) - epsilon                    per pair
    d - c_k . (u, v)                       per egg-side
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import contact
from .geometry import EggShape, PlacedEgg, Pose, check_convexity, egg_area, egg_terms
from .polygon import apothem_angles

__all__ = [
    "PackingInstance",
    "Layout",
    "NlpProblem",
    "build_model",
    "default_bounds",
    "initial_point",
    "check_jacobian",
    "solve_secondary",
    "MU_MIN",
]

MU_MIN = 1e-8
ROW_SCALE_POWER = 1


def default_bounds(eggs) -> tuple[float, float]:
    """Centre bounds ``(-S, S)`` with ``S`` the sum of the eggs' largest semi-axes."""
    if not eggs:
        raise ValueError("need at least one egg")
    ub = float(sum(max(s.a, s.b) for s in eggs))
    return -ub, ub


@dataclass(frozen=True)
class PackingInstance:
    m: int
    eggs: tuple
    epsilon: float = 0.0
    lb: float | None = None
    ub: float | None = None

    def __post_init__(self):
        eggs = tuple(self.eggs)
        object.__setattr__(self, "eggs", eggs)
        if int(self.m) != self.m or self.m < 3:
            raise ValueError(f"m must be an integer >= 3, got {self.m!r}")
        if not eggs:
            raise ValueError("egg list is empty")
        if not all(isinstance(s, EggShape) for s in eggs):
            raise TypeError("eggs must be EggShape instances")
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")
        lb, ub = default_bounds(eggs)
        if self.lb is None:
            object.__setattr__(self, "lb", lb)
        if self.ub is None:
            object.__setattr__(self, "ub", ub)
        if not self.lb < self.ub:
            raise ValueError(f"need lb < ub, got lb={self.lb}, ub={self.ub}")
        for idx, s in enumerate(eggs):
            if not check_convexity(s):
                raise ValueError(f"egg {idx} ({s}) is not convex")

    @property
    def n(self) -> int:
        return len(self.eggs)

    def placed(self, poses) -> list[PlacedEgg]:
        return [PlacedEgg(s, q) for s, q in zip(self.eggs, poses)]


@dataclass(frozen=True)
class Layout:
    """Index arithmetic for the decision vector and residual rows."""

    n: int
    m: int
    pair_list: tuple | None = None  # (measured, carrier) per pair; default (i, j) with i < j

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def n_sides(self) -> int:
        return self.n * self.m

    @property
    def pose0(self) -> int:
        return 1

    @property
    def pair0(self) -> int:
        return 1 + 3 * self.n

    @property
    def cont0(self) -> int:
        return self.pair0 + 3 * self.n_pairs

    @property
    def n_var(self) -> int:
        return self.cont0 + 3 * self.n_sides

    @property
    def n_eq(self) -> int:
        return 3 * self.n_pairs + 3 * self.n_sides

    @property
    def n_ineq(self) -> int:
        return self.n_pairs + self.n_sides

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Measured and carrier egg indices, one entry per pair."""
        if self.pair_list is None:
            i, j = np.triu_indices(self.n, k=1)
            return i, j
        arr = np.array(self.pair_list, dtype=int).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]

    def pose_block(self, x) -> np.ndarray:
        return x[self.pose0 : self.pair0].reshape(self.n, 3)

    def pair_block(self, x) -> np.ndarray:
        return x[self.pair0 : self.cont0].reshape(self.n_pairs, 3)

    def cont_block(self, x) -> np.ndarray:
        """``(n, m, 3)`` view of the containment secondaries."""
        return x[self.cont0 :].reshape(self.n, self.m, 3)

    def poses(self, x) -> list[Pose]:
        return [Pose(*map(float, row)) for row in self.pose_block(x)]


def _jacobian_structure(lay: Layout):
    """Row/column indices of the non-zero Jacobian entries, in evaluation order."""
    n, m, P = lay.n, lay.m, lay.n_pairs
    I, J = lay.pairs
    q = np.arange(P)
    px = lay.pair0 + 3 * q
    pose_i = lay.pose0 + 3 * I
    pose_j = lay.pose0 + 3 * J
    full_pair = np.stack(
        [px, px + 1, px + 2, pose_i, pose_i + 1, pose_i + 2, pose_j, pose_j + 1, pose_j + 2], axis=1
    )
    on_j = np.stack([px, px + 1, pose_j, pose_j + 1, pose_j + 2], axis=1)
    on_i = np.stack([px, px + 1, pose_i, pose_i + 1, pose_i + 2], axis=1)

    egg = np.repeat(np.arange(n), m)
    s = np.arange(n * m)
    ux = lay.cont0 + 3 * s
    pe = lay.pose0 + 3 * egg
    cont_full = np.stack([ux, ux + 1, ux + 2, pe, pe + 1, pe + 2], axis=1)
    cont_e = np.stack([ux, ux + 1, pe, pe + 1, pe + 2], axis=1)
    cont_ineq = np.stack([np.zeros_like(ux), ux, ux + 1], axis=1)

    r0 = 3 * P
    eq_rows = np.concatenate(
        [
            np.repeat(3 * q, 9),
            np.repeat(3 * q + 1, 9),
            np.repeat(3 * q + 2, 5),
            np.repeat(r0 + 3 * s, 6),
            np.repeat(r0 + 3 * s + 1, 6),
            np.repeat(r0 + 3 * s + 2, 5),
        ]
    )
    eq_cols = np.concatenate(
        [full_pair.ravel(), full_pair.ravel(), on_j.ravel(), cont_full.ravel(), cont_full.ravel(), cont_e.ravel()]
    )
    in_rows = np.concatenate([np.repeat(q, 5), np.repeat(P + s, 3)])
    in_cols = np.concatenate([on_i.ravel(), cont_ineq.ravel()])
    return eq_rows, eq_cols, in_rows, in_cols


@dataclass
class Evaluation:
    """Residuals and sparse Jacobian values at one point."""

    eq: np.ndarray
    ineq: np.ndarray
    eq_vals: np.ndarray
    ineq_vals: np.ndarray


@dataclass
class NlpProblem:
    """Minimise ``d`` subject to the embedded packing constraints.

    Built by :func:`build_model`; all evaluators are pure functions of the
    decision vector.
    """

    instance: PackingInstance
    layout: Layout
    lower: np.ndarray
    upper: np.ndarray
    normals: np.ndarray
    lam_lower: float
    _struct: tuple = field(repr=False)

    @property
    def n_var(self) -> int:
        return self.layout.n_var

    @property
    def n_eq(self) -> int:
        return self.layout.n_eq

    @property
    def n_ineq(self) -> int:
        return self.layout.n_ineq

    def objective(self, x) -> float:
        return float(x[0])

    def objective_grad(self, x) -> np.ndarray:
        g = np.zeros(self.n_var)
        g[0] = 1.0
        return g

    def evaluate(self, x, jac: bool = True) -> Evaluation:
        lay = self.layout
        inst = self.instance
        A, B, Pw, T = self._shape_arrays
        poses = lay.pose_block(x)
        xc, yc, th = poses[:, 0], poses[:, 1], poses[:, 2]
        I, J = lay.pairs

        pair = lay.pair_block(x)
        px, py, lam = pair[:, 0], pair[:, 1], pair[:, 2]
        ri = egg_terms(A[I], B[I], Pw[I], T[I], xc[I], yc[I], th[I], px, py, order=2)
        rj = egg_terms(A[J], B[J], Pw[J], T[J], xc[J], yc[J], th[J], px, py, order=2)

        cont = lay.cont_block(x)
        cu, cv, mu = cont[..., 0], cont[..., 1], cont[..., 2]
        E = np.arange(lay.n)[:, None]
        rc = egg_terms(A[E], B[E], Pw[E], T[E], xc[E], yc[E], th[E], cu, cv, order=2)
        ncx = self.normals[:, 0][None, :]
        ncy = self.normals[:, 1][None, :]

        eq = np.empty(lay.n_eq)
        r0 = 3 * lay.n_pairs
        eq[0:r0:3] = ri["gx"] - lam * rj["gx"]
        eq[1:r0:3] = ri["gy"] - lam * rj["gy"]
        eq[2:r0:3] = rj["e"]
        eq[r0::3] = (ncx - mu * rc["gx"]).ravel()
        eq[r0 + 1 :: 3] = (ncy - mu * rc["gy"]).ravel()
        eq[r0 + 2 :: 3] = rc["e"].ravel()

        ineq = np.concatenate(
            [ri["e"] - inst.epsilon, (x[0] - ncx * cu - ncy * cv).ravel()]
        )
        if not jac:
            return Evaluation(eq, ineq, None, None)

        lz = lam
        row1 = np.stack(
            [
                ri["hxx"] - lz * rj["hxx"],
                ri["hxy"] - lz * rj["hxy"],
                -rj["gx"],
                -ri["hxx"],
                -ri["hxy"],
                ri["dgx_dth"],
                lz * rj["hxx"],
                lz * rj["hxy"],
                -lz * rj["dgx_dth"],
            ],
            axis=1,
        )
        row2 = np.stack(
            [
                ri["hxy"] - lz * rj["hxy"],
                ri["hyy"] - lz * rj["hyy"],
                -rj["gy"],
                -ri["hxy"],
                -ri["hyy"],
                ri["dgy_dth"],
                lz * rj["hxy"],
                lz * rj["hyy"],
                -lz * rj["dgy_dth"],
            ],
            axis=1,
        )
        row3 = np.stack([rj["gx"], rj["gy"], -rj["gx"], -rj["gy"], rj["de_dth"]], axis=1)

        def flat(v):
            return np.asarray(v).ravel()

        mu_f = flat(mu)
        hxx, hxy, hyy = flat(rc["hxx"]), flat(rc["hxy"]), flat(rc["hyy"])
        gx, gy = flat(rc["gx"]), flat(rc["gy"])
        crow1 = np.stack(
            [-mu_f * hxx, -mu_f * hxy, -gx, mu_f * hxx, mu_f * hxy, -mu_f * flat(rc["dgx_dth"])], axis=1
        )
        crow2 = np.stack(
            [-mu_f * hxy, -mu_f * hyy, -gy, mu_f * hxy, mu_f * hyy, -mu_f * flat(rc["dgy_dth"])], axis=1
        )
        crow3 = np.stack([gx, gy, -gx, -gy, flat(rc["de_dth"])], axis=1)
        eq_vals = np.concatenate(
            [row1.ravel(), row2.ravel(), row3.ravel(), crow1.ravel(), crow2.ravel(), crow3.ravel()]
        )
        irow = np.stack([ri["gx"], ri["gy"], -ri["gx"], -ri["gy"], ri["de_dth"]], axis=1)
        ineq_vals = np.concatenate([irow.ravel(), self._cont_ineq_vals])
        return Evaluation(eq, ineq, eq_vals, ineq_vals)

    @cached_property
    def _shape_arrays(self):
        eggs = self.instance.eggs
        return (
            np.array([s.a for s in eggs], dtype=float),
            np.array([s.b for s in eggs], dtype=float),
            np.array([s.p for s in eggs], dtype=float),
            np.array([s.t for s in eggs], dtype=float),
        )

    @cached_property
    def _cont_ineq_vals(self) -> np.ndarray:
        n = self.layout.n
        c = np.tile(self.normals, (n, 1))
        return np.column_stack([np.ones(len(c)), -c[:, 0], -c[:, 1]]).ravel()

    @cached_property
    def row_scales(self) -> tuple[np.ndarray, np.ndarray]:
        """Constant row weights that equilibrate the Jacobian for the solver.

        Rows involving small eggs have large derivatives (curvature grows like
        1/size^2); each equality row is multiplied by the smallest semi-axis
        involved, raised to ``ROW_SCALE_POWER``.  Inequality rows are left as is.
        """
        lay = self.layout
        minor = np.array([min(s.a, s.b) for s in self.instance.eggs]) ** ROW_SCALE_POWER
        I, J = lay.pairs
        pair = np.repeat(np.minimum(minor[I], minor[J]), 3)
        cont = np.repeat(np.repeat(minor, lay.m), 3)
        return np.concatenate([pair, cont]), np.ones(lay.n_ineq)

    def eq_residuals(self, x) -> np.ndarray:
        return self.evaluate(x, jac=False).eq

    def ineq_residuals(self, x) -> np.ndarray:
        return self.evaluate(x, jac=False).ineq

    def jac_transpose_dot(self, ev: Evaluation, w_eq, w_ineq) -> np.ndarray:
        """``J_eq^T w_eq + J_ineq^T w_ineq`` without forming the dense Jacobians."""
        er, ec, ir, ic = self._struct
        out = np.bincount(ec, weights=ev.eq_vals * w_eq[er], minlength=self.n_var)
        out += np.bincount(ic, weights=ev.ineq_vals * w_ineq[ir], minlength=self.n_var)
        return out

    def jacobians(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(J_eq, J_ineq)``."""
        ev = self.evaluate(x)
        er, ec, ir, ic = self._struct
        Je = np.zeros((self.layout.n_eq, self.n_var))
        Ji = np.zeros((self.layout.n_ineq, self.n_var))
        np.add.at(Je, (er, ec), ev.eq_vals)
        np.add.at(Ji, (ir, ic), ev.ineq_vals)
        return Je, Ji

    def max_violation(self, x) -> float:
        ev = self.evaluate(x, jac=False)
        v = 0.0
        if ev.eq.size:
            v = max(v, float(np.max(np.abs(ev.eq))))
        if ev.ineq.size:
            v = max(v, float(np.max(-ev.ineq)))
        v = max(v, float(np.max(self.lower - x)), float(np.max(x - self.upper)))
        return v

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def normalize(self, x) -> np.ndarray:
        """Move rotation angles off the +-pi bounds using periodicity.

        Every egg is invariant under a full turn; undistorted eggs (t = 0)
        also under a half turn, so their angles are kept in [-pi/2, pi/2].
        """
        x = np.array(x, dtype=float)
        th = self.layout.pose_block(x)[:, 2]
        sym = self._shape_arrays[3] == 0
        half = sym & (np.abs(th) > math.pi / 2)
        th[half] -= np.sign(th[half]) * math.pi
        edge = ~sym & (np.abs(th) >= math.pi - 1e-9)
        th[edge] = -np.sign(th[edge]) * (math.pi - 1e-9)
        return x

    def polish(self, x) -> np.ndarray:
        """Re-solve the secondaries at the poses of ``x`` and reset ``d`` to the largest support."""
        xp = solve_secondary(self, x)
        cont = self.layout.cont_block(xp)
        support = cont[..., 0] * self.normals[:, 0] + cont[..., 1] * self.normals[:, 1]
        xp[0] = max(float(np.max(support)), self.lower[0])
        return xp


def _oriented_pairs(eggs) -> tuple:
    area = [egg_area(s) for s in eggs]
    out = []
    for i, j in zip(*np.triu_indices(len(eggs), k=1)):
        i, j = int(i), int(j)
        out.append((j, i) if area[j] > area[i] * (1 + 1e-12) else (i, j))
    return tuple(out)


def build_model(instance: PackingInstance) -> NlpProblem:
    lay = Layout(instance.n, instance.m, _oriented_pairs(instance.eggs))
    lb, ub = instance.lb, instance.ub
    lo = np.full(lay.n_var, -np.inf)
    hi = np.full(lay.n_var, np.inf)
    lo[0] = 0.0
    pose = np.arange(lay.pose0, lay.pair0).reshape(lay.n, 3)
    lo[pose[:, :2]] = lb
    hi[pose[:, :2]] = ub
    lo[pose[:, 2]] = -math.pi
    hi[pose[:, 2]] = math.pi
    pair = np.arange(lay.pair0, lay.cont0).reshape(lay.n_pairs, 3)
    lo[pair[:, :2]] = lb
    hi[pair[:, :2]] = ub
    lo[pair[:, 2]] = 2 * lb
    hi[pair[:, 2]] = 0.0
    cont = np.arange(lay.cont0, lay.n_var).reshape(lay.n_sides, 3)
    lo[cont[:, :2]] = lb
    hi[cont[:, :2]] = ub
    lo[cont[:, 2]] = MU_MIN
    ang = apothem_angles(instance.m)
    normals = np.column_stack([np.cos(ang), np.sin(ang)])
    return NlpProblem(instance, lay, lo, hi, normals, 2 * lb, _jacobian_structure(lay))


def solve_secondary(problem: NlpProblem, x) -> np.ndarray:
    """Fill the secondary variables of ``x`` from standalone contact solves.

    Poses (and ``d``) are taken from ``x``; tangency points, stationary points
    and multipliers are recomputed with :mod:`contact`, falling back to the
    sweep oracles when a Newton solve fails.  Results are clipped to the
    variable bounds.
    """
    lay = problem.layout
    inst = problem.instance
    x = np.array(x, dtype=float)
    eggs = inst.placed(lay.poses(x))
    pair = lay.pair_block(x)
    for q, (i, j) in enumerate(zip(*lay.pairs)):
        res = contact.overlap_indicator(eggs[i], eggs[j])
        pair[q] = (res.point[0], res.point[1], res.lam)
    cont = lay.cont_block(x)
    for i, egg in enumerate(eggs):
        for k, c in enumerate(problem.normals):
            try:
                res = contact.support_tangency(egg, c)
                cont[i, k] = (res.tangency[0], res.tangency[1], res.mu)
            except contact.ContactError:
                val, pt = contact._sweep_refine(egg, lambda pts, c=c: pts @ c, 1024)
                g = egg_terms(*contact._params(egg), pt[0], pt[1])
                cont[i, k] = (pt[0], pt[1], contact._multiplier_seed(c, np.array([g["gx"], g["gy"]])))
    return problem.clip(x)


def initial_point(problem: NlpProblem, seed: int) -> np.ndarray:
    """Randomised start: centres uniform in ``[lb/2, ub/2]^2``, angles in ``[-pi, pi]``.

    ``d`` starts at ``ub``; secondaries come from :func:`solve_secondary`.
    """
    inst = problem.instance
    lay = problem.layout
    rng = np.random.default_rng(seed)
    x = np.zeros(lay.n_var)
    x[0] = inst.ub
    poses = lay.pose_block(x)
    poses[:, :2] = rng.uniform(inst.lb / 2, inst.ub / 2, size=(lay.n, 2))
    poses[:, 2] = rng.uniform(-math.pi, math.pi, size=lay.n)
    return solve_secondary(problem, x)


def check_jacobian(problem: NlpProblem, x, step: float = 1e-6) -> float:
    """Largest discrepancy between analytic and central-difference Jacobians.

    Each entry's error is scaled by ``max(1, |analytic entry|)``.
    """
    x = np.asarray(x, dtype=float)
    Je, Ji = problem.jacobians(x)
    Fe = np.zeros_like(Je)
    Fi = np.zeros_like(Ji)
    for k in range(problem.n_var):
        xp = x.copy()
        xm = x.copy()
        xp[k] += step
        xm[k] -= step
        ep = problem.evaluate(xp, jac=False)
        em = problem.evaluate(xm, jac=False)
        Fe[:, k] = (ep.eq - em.eq) / (2 * step)
        Fi[:, k] = (ep.ineq - em.ineq) / (2 * step)
    err = 0.0
    if Je.size:
        err = max(err, float(np.max(np.abs(Je - Fe) / np.maximum(1.0, np.abs(Je)))))
    if Ji.size:
        err = max(err, float(np.max(np.abs(Ji - Fi) / np.maximum(1.0, np.abs(Ji)))))
    return err
