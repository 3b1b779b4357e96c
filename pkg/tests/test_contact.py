import math

import numpy as np
import pytest

from eggpack.contact import (
    ContactError,
    newton_solve,
    overlap_indicator,
    overlap_oracle,
    overlap_stationary,
    support_oracle,
    support_tangency,
)
from eggpack.geometry import EggShape, PlacedEgg, Pose, boundary_points, check_convexity, egg_terms, eval_egg, grad_egg
from eggpack.polygon import Direction

DIAG = Direction.normalized(1, 1)
ROTATED_ELLIPSE = PlacedEgg.make(1 / 2, 1 / 3, 2, 0.0, 0, 0, 0.5)
OVERLAP_PAIR = (PlacedEgg.make(1, 1, 2, 0.5), PlacedEgg.make(1 / 2, 3 / 4, 2, 0.0))
APART_PAIR = (PlacedEgg.make(3 / 4, 1, 2, 0.5, -1 / 2, 0, 0), PlacedEgg.make(1 / 3, 1 / 2, 2, 0.0, 3 / 4, 0, 0.5))


def random_egg(rng, p=2):
    # distorted p=4 curves are rarely convex, so those stay undistorted
    while True:
        t = rng.uniform(0, 0.8) if p == 2 else 0.0
        shape = EggShape(rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5), p, t)
        if check_convexity(shape):
            return PlacedEgg(shape, Pose(*rng.uniform(-2, 2, 2), rng.uniform(-math.pi, math.pi)))


def nested(outer, inner):
    pts = boundary_points(inner, np.linspace(0, 2 * np.pi, 256, endpoint=False))
    return all(eval_egg(outer, q) < 0 for q in pts)


def cross(egg_i, egg_j, point):
    gi = grad_egg(egg_i, point)
    gj = grad_egg(egg_j, point)
    return gi[1] * gj[0] - gj[1] * gi[0]


class TestSupport:
    def test_unit_circle(self):
        res = support_tangency(PlacedEgg.make(1, 1), Direction(0, 1))
        assert res.l_max == pytest.approx(1)
        assert np.allclose(res.tangency, (0, 1), atol=1e-10)

    def test_translated_circle(self):
        egg = PlacedEgg.make(0.7, 0.7, 2, 0, 1.5, -0.5)
        u = Direction.from_angle(2.0)
        res = support_tangency(egg, u)
        assert res.l_max == pytest.approx(u.as_array() @ (1.5, -0.5) + 0.7, abs=1e-10)

    def test_rotated_ellipse_tangency(self):
        res = support_tangency(ROTATED_ELLIPSE, DIAG)
        assert np.allclose(res.tangency, (0.4000, 0.2914), atol=1e-3)
        assert abs(eval_egg(ROTATED_ELLIPSE, res.tangency)) <= 1e-9
        g = grad_egg(ROTATED_ELLIPSE, res.tangency)
        assert abs(math.atan2(g[1], g[0]) - math.pi / 4) <= 1e-8
        assert res.l_max == pytest.approx(support_oracle(ROTATED_ELLIPSE, DIAG), abs=1e-6)

    def test_rotated_ellipse_multiplier(self):
        res = support_tangency(ROTATED_ELLIPSE, DIAG)
        assert res.mu == pytest.approx(0.2444, abs=1e-4)
        assert res.l_max == pytest.approx(0.4889, abs=1e-4)

    def test_oracle_trivial(self):
        assert support_oracle(PlacedEgg.make(1, 1), (1, 0), 256) == pytest.approx(1, abs=1e-8)
        assert support_oracle(PlacedEgg.make(2, 1), (1, 0)) == pytest.approx(2, abs=1e-8)

    def test_oracle_resolution_floor(self):
        with pytest.raises(ValueError):
            support_oracle(PlacedEgg.make(1, 1), (1, 0), 32)

    def test_oracle_monotone_in_resolution(self):
        egg = PlacedEgg.make(0.9, 0.4, 2, 0.6, 0.1, 0.2, 0.3)
        c = Direction.from_angle(0.77)
        vals = [support_oracle(egg, c, r) for r in (64, 128, 256, 512, 1024)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_random_agreement(self, rng):
        for _ in range(100):
            egg = random_egg(rng, p=int(rng.choice([2, 4])))
            c = Direction.from_angle(rng.uniform(0, 2 * math.pi))
            res = support_tangency(egg, c)
            assert res.l_max == pytest.approx(support_oracle(egg, c), abs=1e-6)
            assert res.mu > 0

    def test_translation_covariance(self, rng):
        egg = random_egg(rng)
        c = Direction.from_angle(1.1)
        v = np.array([0.37, -1.2])
        pose = egg.pose
        moved = PlacedEgg(egg.shape, Pose(pose.xc + v[0], pose.yc + v[1], pose.theta))
        shift = support_tangency(moved, c).l_max - support_tangency(egg, c).l_max
        assert shift == pytest.approx(c.as_array() @ v, abs=1e-10)

    def test_non_unit_direction(self):
        with pytest.raises(ValueError):
            support_tangency(ROTATED_ELLIPSE, (1, 1))


class TestOverlap:
    def test_separated_circles(self):
        a, b = PlacedEgg.make(1, 1), PlacedEgg.make(1, 1, 2, 0, 3, 0)
        res = overlap_stationary(a, b)
        assert res.value == pytest.approx(3)
        assert np.allclose(res.point, (2, 0), atol=1e-9)
        assert res.lam < 0
        val, pt = overlap_oracle(a, b, 512)
        assert val == pytest.approx(3, abs=1e-6)
        assert np.allclose(pt, (2, 0), atol=1e-4)

    def test_overlapping_pair(self):
        res = overlap_stationary(*OVERLAP_PAIR)
        assert abs(eval_egg(OVERLAP_PAIR[1], res.point)) <= 1e-9
        assert res.value < 0
        assert res.value == pytest.approx(overlap_oracle(*OVERLAP_PAIR, 2048)[0], abs=1e-6)
        # coincident centres: the sweep supplies the answer
        assert res.method == "oracle"

    def test_overlapping_pair_multiplier_at_reference_point(self):
        # the reference point is a maximising stationary point; its multiplier is the reference value
        egg_i, egg_j = OVERLAP_PAIR
        a, b, p, t, xc, yc, th = 1, 1, 2, 0.5, 0, 0, 0
        r = egg_terms(a, b, p, t, xc, yc, th, 0.1035, 0.7338)
        gj = grad_egg(egg_j, (0.1035, 0.7338))
        lam = (r["gx"] * gj[0] + r["gy"] * gj[1]) / (gj[0] ** 2 + gj[1] ** 2)
        assert abs(lam) == pytest.approx(0.5924, abs=2e-3)

    def test_separated_pair(self):
        res = overlap_stationary(*APART_PAIR)
        assert abs(eval_egg(APART_PAIR[1], res.point)) <= 1e-9
        assert res.value > 0
        assert res.value == pytest.approx(overlap_oracle(*APART_PAIR, 2048)[0], abs=1e-6)
        assert np.allclose(res.point, (0.3745, 0.1004), atol=1e-3)

    def test_separated_pair_multiplier(self):
        res = overlap_stationary(*APART_PAIR)
        assert res.lam == pytest.approx(-0.5696, abs=1e-4)

    def test_coincident_circles_share_boundary(self):
        val, _ = overlap_oracle(PlacedEgg.make(1, 1), PlacedEgg.make(1, 1))
        assert abs(val) <= 1e-9

    def test_overlap_oracle_resolution_stable(self):
        v1 = overlap_oracle(*OVERLAP_PAIR, 1024)[0]
        v2 = overlap_oracle(*OVERLAP_PAIR, 2048)[0]
        assert v1 < 0
        assert v1 == pytest.approx(v2, abs=1e-6)

    def test_random_pairs(self, rng):
        for _ in range(40):
            egg_i, egg_j = random_egg(rng), random_egg(rng)
            oracle = overlap_oracle(egg_i, egg_j)[0]
            try:
                res = overlap_stationary(egg_i, egg_j)
            except ContactError:
                continue
            assert abs(eval_egg(egg_j, res.point)) <= 1e-9
            assert res.lam < 0
            assert abs(cross(egg_i, egg_j, res.point)) <= 1e-8 * max(1.0, abs(res.lam))
            assert res.value >= oracle - 1e-6

    def test_symmetric_sign(self, rng):
        checked = 0
        while checked < 40:
            egg_i, egg_j = random_egg(rng), random_egg(rng)
            if nested(egg_i, egg_j) or nested(egg_j, egg_i):
                continue
            checked += 1
            assert (overlap_oracle(egg_i, egg_j)[0] >= 0) == (overlap_oracle(egg_j, egg_i)[0] >= 0)

    def test_one_sided_value_misses_nesting(self):
        big, small = PlacedEgg.make(1, 1), PlacedEgg.make(0.3, 0.2, 2, 0.0, 0.1, 0.1, 0.4)
        # the small egg's boundary is inside the big one, but not the other way round
        assert overlap_oracle(big, small)[0] < 0
        assert overlap_oracle(small, big)[0] > 0

    def test_indicator_falls_back(self, monkeypatch):
        import eggpack.contact as contact

        def boom(*args, **kwargs):
            raise ContactError("forced")

        monkeypatch.setattr(contact, "overlap_stationary", boom)
        res = overlap_indicator(*APART_PAIR)
        assert res.method == "oracle"
        assert res.value == pytest.approx(overlap_oracle(*APART_PAIR)[0])


def test_newton_on_scalar_root():
    root = newton_solve(lambda z: (np.array([z[0] ** 2 - 2]), np.array([[2 * z[0]]])), [1.0])
    assert root[0] == pytest.approx(math.sqrt(2), abs=1e-10)


def test_newton_reports_failure():
    assert newton_solve(lambda z: (np.array([z[0] ** 2 + 1]), np.array([[2 * z[0]]])), [1.0], maxiter=20) is None
