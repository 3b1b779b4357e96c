"""Tangency and separation between eggs, lines and other eggs.

Two families of routines live here:

* Newton solves of the small stationarity systems that the packing model
  embeds (support tangency against a side normal, and the stationary point of
  one egg's function on another egg's boundary).
* Brute-force boundary-sweep oracles that are independent of those systems
  and are used for seeding and for certification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PlacedEgg, boundary_points, egg_terms
from .polygon import Direction

__all__ = [
    "ContactError",
    "SupportResult",
    "OverlapResult",
    "support_tangency",
    "support_oracle",
    "overlap_stationary",
    "overlap_oracle",
    "overlap_indicator",
    "newton_solve",
]

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 100
NEWTON_HALVINGS = 8
OVERLAP_SEEDS = 16


class ContactError(RuntimeError):
    """A stationarity system could not be solved from any seed."""


@dataclass(frozen=True)
class SupportResult:
    l_max: float
    tangency: np.ndarray
    mu: float


@dataclass(frozen=True)
class OverlapResult:
    value: float
    point: np.ndarray
    lam: float
    method: str = "newton"  # "oracle" when the boundary sweep supplied the result


def _params(egg: PlacedEgg):
    s, q = egg.shape, egg.pose
    return s.a, s.b, s.p, s.t, q.xc, q.yc, q.theta


def _terms(egg: PlacedEgg, x, y, order=2):
    return egg_terms(*_params(egg), x, y, order=order)


def _as_direction(dir) -> np.ndarray:
    if isinstance(dir, Direction):
        return dir.as_array()
    c = np.asarray(dir, dtype=float)
    if abs(np.hypot(*c) - 1.0) > 1e-12:
        raise ValueError(f"direction {dir!r} is not unit-norm")
    return c


def newton_solve(fun, x0, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER, max_halvings=NEWTON_HALVINGS):
    """Damped Newton iteration for a small square system.

    ``fun(x)`` returns ``(residual, jacobian)``.  Steps are halved until the
    residual infinity norm decreases.  Returns the solution or ``None`` when
    the residual does not reach ``tol``.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _newton(fun, np.array(x0, dtype=float), tol, maxiter, max_halvings)


def _newton(fun, x, tol, maxiter, max_halvings):
    # non-finite residuals from far-off iterates count as failure
    F, J = fun(x)
    norm = np.max(np.abs(F))
    for _ in range(maxiter):
        if not np.isfinite(norm):
            return None
        if norm <= tol:
            return x
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        alpha = 1.0
        for _ in range(max_halvings + 1):
            x_new = x + alpha * step
            F_new, J_new = fun(x_new)
            norm_new = np.max(np.abs(F_new))
            if norm_new < norm:
                break
            alpha *= 0.5
        # without a decrease the smallest trial step is still taken
        x, F, J, norm = x_new, F_new, J_new, norm_new
    return x if norm <= tol else None


def _zoom_max(score_at, lo, hi, tol=1e-10, points=65, maxiter=40):
    """Maximise ``score_at(angles)`` on ``[lo, hi]`` by repeated vectorised grid refinement.

    Each round keeps the two grid cells around the best sample, shrinking the
    bracket by ``(points - 1) / 2``.
    """
    best_ph, best_val = lo, -math.inf
    for _ in range(maxiter):
        grid = np.linspace(lo, hi, points)
        vals = score_at(grid)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_ph, best_val = float(grid[k]), float(vals[k])
        if hi - lo <= tol:
            break
        step = grid[1] - grid[0]
        lo, hi = grid[k] - step, grid[k] + step
    return best_ph, best_val


def _sweep_refine(egg: PlacedEgg, score, resolution: int):
    """Maximise ``score(points)`` over the boundary of ``egg``.

    The boundary is sampled at ``resolution`` ray angles; the best sample's
    neighbourhood is refined by grid zooming.
    """
    if resolution < 64:
        raise ValueError(f"resolution must be >= 64, got {resolution}")
    phi = 2 * np.pi * np.arange(resolution) / resolution
    pts = boundary_points(egg, phi)
    vals = score(pts)
    k = int(np.argmax(vals))
    h = 2 * np.pi / resolution

    ph, val = _zoom_max(lambda grid: score(boundary_points(egg, grid)), phi[k] - h, phi[k] + h)
    if val >= vals[k]:
        return val, boundary_points(egg, [ph])[0]
    return float(vals[k]), pts[k]


def support_oracle(egg: PlacedEgg, dir, resolution: int = 1024) -> float:
    """Support value ``max dir . x`` over the egg by boundary sweep."""
    c = _as_direction(dir)
    val, _ = _sweep_refine(egg, lambda pts: pts @ c, resolution)
    return val


def _support_system(egg: PlacedEgg, c: np.ndarray):
    def fun(z):
        x, y, mu = z
        r = _terms(egg, x, y)
        F = np.array([c[0] - mu * r["gx"], c[1] - mu * r["gy"], r["e"]])
        J = np.array(
            [
                [-mu * r["hxx"], -mu * r["hxy"], -r["gx"]],
                [-mu * r["hxy"], -mu * r["hyy"], -r["gy"]],
                [r["gx"], r["gy"], 0.0],
            ]
        )
        return F, J

    return fun


def _multiplier_seed(g_top, g_bottom):
    """Least-squares ``lam`` in ``g_top = lam * g_bottom``."""
    den = float(np.dot(g_bottom, g_bottom))
    return float(np.dot(g_top, g_bottom)) / den if den > 0 else 0.0


def support_tangency(egg: PlacedEgg, dir, seeds: int = 3, resolution: int = 256) -> SupportResult:
    """Tangency point of the egg with its supporting line of normal ``dir``.

    Solves ``dir = mu * grad e``, ``e = 0`` by damped Newton from the best
    boundary samples and returns the solution with the largest ``dir . x``.
    """
    c = _as_direction(dir)
    phi = 2 * np.pi * np.arange(resolution) / resolution
    pts = boundary_points(egg, phi)
    score = pts @ c
    fun = _support_system(egg, c)
    best = None
    for k in np.argsort(-score)[:seeds]:
        x, y = pts[k]
        r = _terms(egg, x, y, order=1)
        mu0 = _multiplier_seed(c, np.array([r["gx"], r["gy"]]))
        z = newton_solve(fun, [x, y, mu0])
        if z is None or z[2] <= 0:
            continue
        l_val = float(c @ z[:2])
        if best is None or l_val > best.l_max:
            best = SupportResult(l_val, z[:2].copy(), float(z[2]))
        # the top seed converging to a positive multiplier is conclusive for convex eggs
        break
    if best is None:
        raise ContactError(f"support tangency did not converge for {egg} along {c}")
    return best


def overlap_oracle(egg_i: PlacedEgg, egg_j: PlacedEgg, resolution: int = 1024):
    """Minimum of egg ``i``'s function over the boundary of egg ``j`` by sweep.

    Returns ``(value, point)``.
    """
    a, b, p, t, xc, yc, th = _params(egg_i)

    def neg_e(pts):
        return -egg_terms(a, b, p, t, xc, yc, th, pts[:, 0], pts[:, 1], order=1)["e"]

    val, pt = _sweep_refine(egg_j, neg_e, resolution)
    return -val, pt


def _overlap_system(egg_i: PlacedEgg, egg_j: PlacedEgg):
    def fun(z):
        x, y, lam = z
        ri = _terms(egg_i, x, y)
        rj = _terms(egg_j, x, y)
        F = np.array(
            [ri["gx"] - lam * rj["gx"], ri["gy"] - lam * rj["gy"], rj["e"]]
        )
        J = np.array(
            [
                [ri["hxx"] - lam * rj["hxx"], ri["hxy"] - lam * rj["hxy"], -rj["gx"]],
                [ri["hxy"] - lam * rj["hxy"], ri["hyy"] - lam * rj["hyy"], -rj["gy"]],
                [rj["gx"], rj["gy"], 0.0],
            ]
        )
        return F, J

    return fun


def _oracle_result(egg_i, egg_j, resolution=1024) -> OverlapResult:
    val, pt = overlap_oracle(egg_i, egg_j, resolution)
    ri = _terms(egg_i, *pt, order=1)
    rj = _terms(egg_j, *pt, order=1)
    lam = _multiplier_seed(np.array([ri["gx"], ri["gy"]]), np.array([rj["gx"], rj["gy"]]))
    return OverlapResult(float(val), np.asarray(pt, dtype=float), lam, "oracle")


def overlap_stationary(egg_i: PlacedEgg, egg_j: PlacedEgg, seeds: int = OVERLAP_SEEDS) -> OverlapResult:
    """Minimising stationary point of egg ``i``'s function on egg ``j``'s boundary.

    Solves ``grad e_i = lam * grad e_j``, ``e_j = 0`` by damped Newton from
    ``seeds`` equally spaced boundary points of ``j`` plus the boundary point
    of ``j`` facing the centre of ``i``.  Among converged solutions with
    ``lam < 0`` the one with the smallest ``e_i`` is returned.  A value
    ``>= 0`` certifies that the eggs do not overlap.

    Coincident centres make the system degenerate; the sweep oracle's result
    is returned directly in that case.  Raises :class:`ContactError` when no
    ``lam < 0`` solution is found.
    """
    ci, cj = egg_i.center, egg_j.center
    offset = ci - cj
    if np.hypot(*offset) < 1e-12:
        return _oracle_result(egg_i, egg_j)

    phi = list(2 * np.pi * np.arange(seeds) / seeds)
    phi.append(math.atan2(offset[1], offset[0]))
    pts = boundary_points(egg_j, phi)
    fun = _overlap_system(egg_i, egg_j)
    best = None
    for x, y in pts:
        ri = _terms(egg_i, x, y, order=1)
        rj = _terms(egg_j, x, y, order=1)
        lam0 = _multiplier_seed(np.array([ri["gx"], ri["gy"]]), np.array([rj["gx"], rj["gy"]]))
        z = newton_solve(fun, [x, y, lam0])
        if z is None or not z[2] < 0:
            continue
        val = float(_terms(egg_i, z[0], z[1], order=1)["e"])
        if best is None or val < best.value:
            best = OverlapResult(val, z[:2].copy(), float(z[2]))
    if best is None:
        raise ContactError("no minimising (lam < 0) stationary point found")
    return best


def overlap_indicator(egg_i: PlacedEgg, egg_j: PlacedEgg, resolution: int = 1024) -> OverlapResult:
    """:func:`overlap_stationary` with the sweep oracle as fallback."""
    try:
        return overlap_stationary(egg_i, egg_j)
    except ContactError:
        return _oracle_result(egg_i, egg_j, resolution)
