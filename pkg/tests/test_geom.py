import math

import numpy as np
import pytest

from imcat import geom
from imcat.errors import NotInvertibleError, RankDeficientError, TooFewPointsError
from imcat.geom import ControlPointSet, PolyTransform2D
from imcat.raster import GreyImage
from imcat.vectorize import Polyline


def grid_points(n=5, span=10.0):
    xs = np.linspace(0, span, n)
    return np.array([(x, y) for x in xs for y in xs])


def normal_equation_fit(src, tgt, order):
    """Oracle: explicit pseudo-inverse (A^T A)^-1 A^T on raw coordinates."""
    cols = [src[:, 0] ** i * src[:, 1] ** j for i, j in geom.monomials(order)]
    a_mat = np.stack(cols, axis=1)
    pinv = np.linalg.inv(a_mat.T @ a_mat) @ a_mat.T
    return pinv @ tgt[:, 0], pinv @ tgt[:, 1]


class TestFitTransform:
    def test_identity(self):
        src = grid_points()
        t = geom.fit_transform(ControlPointSet(src, src), 1)
        assert np.allclose(t.a, [0, 1, 0], atol=1e-12)
        assert np.allclose(t.b, [0, 0, 1], atol=1e-12)
        assert t.rms < 1e-12

    def test_translation(self):
        src = grid_points()
        tgt = src + np.array([2.0, 3.0])
        t = geom.fit_transform(ControlPointSet(src, tgt), 1)
        assert np.allclose(t.a, [2, 1, 0], atol=1e-10)
        assert np.allclose(t.b, [3, 0, 1], atol=1e-10)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_recovers_generator(self, order):
        rng = np.random.RandomState(order)
        mono = geom.monomials(order)
        gen_a = rng.uniform(-1, 1, size=len(mono))
        gen_b = rng.uniform(-1, 1, size=len(mono))
        src = grid_points(6, 4.0)
        ref = PolyTransform2D(order, gen_a, gen_b)
        tgt = geom.apply_points(ref, src)
        t = geom.fit_transform(ControlPointSet(src, tgt), order)
        assert np.abs(t.a - gen_a).max() < 1e-8
        assert np.abs(t.b - gen_b).max() < 1e-8
        assert t.rms < 1e-9

    @pytest.mark.parametrize("order", [1, 2])
    def test_matches_normal_equation_oracle(self, order):
        rng = np.random.RandomState(5)
        src = grid_points(5, 3.0)
        tgt = src @ rng.uniform(-1, 1, (2, 2)).T + rng.uniform(-1, 1, src.shape)
        t = geom.fit_transform(ControlPointSet(src, tgt), order)
        oa, ob = normal_equation_fit(src, tgt, order)
        assert np.abs(t.a - oa).max() < 1e-9
        assert np.abs(t.b - ob).max() < 1e-9

    def test_least_squares_optimality(self):
        rng = np.random.RandomState(6)
        src = grid_points(4, 5.0)
        tgt = src * 1.3 + rng.uniform(-0.5, 0.5, src.shape)
        cps = ControlPointSet(src, tgt)
        t = geom.fit_transform(cps, 1)

        def rms_of(a, b):
            tt = PolyTransform2D(1, a, b)
            pred = geom.apply_points(tt, src)
            return float(((pred - tgt) ** 2).sum(axis=1).mean())

        base = rms_of(t.a, t.b)
        for k in range(3):
            for delta in (1e-3, -1e-3):
                a = t.a.copy()
                a[k] += delta
                assert rms_of(a, t.b) >= base
                b = t.b.copy()
                b[k] += delta
                assert rms_of(t.a, b) >= base

    def test_too_few_points(self):
        src = np.array([[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(TooFewPointsError):
            geom.fit_transform(ControlPointSet(src, src), 1)

    def test_rank_deficient(self):
        # all sources on one line cannot pin an order-1 map
        src = np.array([[float(i), float(i)] for i in range(6)])
        with pytest.raises(RankDeficientError):
            geom.fit_transform(ControlPointSet(src, src), 1)


class TestApply:
    def test_identity_point(self):
        t = geom.identity_transform()
        assert geom.apply_point(t, 7.0, 9.0) == (7.0, 9.0)

    def test_translation_point(self):
        t = PolyTransform2D(1, np.array([2.0, 1, 0]), np.array([3.0, 0, 1]))
        assert geom.apply_point(t, 0.0, 0.0) == (2.0, 3.0)

    def test_order2_matches_direct_evaluation(self):
        rng = np.random.RandomState(2)
        a = rng.uniform(-1, 1, 6)
        b = rng.uniform(-1, 1, 6)
        t = PolyTransform2D(2, a, b)
        for p, q in rng.uniform(-3, 3, size=(10, 2)):
            r, s = geom.apply_point(t, p, q)
            rr = (a[0] + a[1] * p + a[2] * q + a[3] * p * p
                  + a[4] * p * q + a[5] * q * q)
            ss = (b[0] + b[1] * p + b[2] * q + b[3] * p * p
                  + b[4] * p * q + b[5] * q * q)
            assert abs(r - rr) < 1e-12 and abs(s - ss) < 1e-12

    def test_affine_composition_exact(self):
        t1 = PolyTransform2D(1, np.array([1.0, 2.0, 0.0]), np.array([-1.0, 0.0, 2.0]))
        t2 = PolyTransform2D(1, np.array([0.5, 0.0, 1.0]), np.array([0.0, -1.0, 0.0]))
        # compose coefficient-wise: t2 after t1
        comp_a = np.array([t2.a[0] + t2.a[1] * t1.a[0] + t2.a[2] * t1.b[0],
                           t2.a[1] * t1.a[1] + t2.a[2] * t1.b[1],
                           t2.a[1] * t1.a[2] + t2.a[2] * t1.b[2]])
        comp_b = np.array([t2.b[0] + t2.b[1] * t1.a[0] + t2.b[2] * t1.b[0],
                           t2.b[1] * t1.a[1] + t2.b[2] * t1.b[1],
                           t2.b[1] * t1.a[2] + t2.b[2] * t1.b[2]])
        comp = PolyTransform2D(1, comp_a, comp_b)
        for p, q in [(0.0, 0.0), (1.5, -2.0), (3.0, 4.0)]:
            step = geom.apply_point(t2, *geom.apply_point(t1, p, q))
            direct = geom.apply_point(comp, p, q)
            assert step == direct


class TestPolyline:
    def test_identity(self):
        pl = Polyline(((0.0, 0.0), (2.0, 1.0)), closed=False)
        out = geom.transform_polyline(geom.identity_transform(), pl)
        assert out == pl

    def test_rotation_quarter_turn(self):
        src = grid_points(4, 6.0)
        tgt = np.stack([-src[:, 1], src[:, 0]], axis=1)
        t = geom.fit_transform(ControlPointSet(src, tgt), 1)
        pl = Polyline(((1.0, 0.0), (0.0, 2.0)), closed=True)
        out = geom.transform_polyline(t, pl)
        assert out.closed
        assert out.vertices[0] == pytest.approx((0.0, 1.0), abs=1e-9)
        assert out.vertices[1] == pytest.approx((-2.0, 0.0), abs=1e-9)

    def test_order3_matches_pointwise(self):
        rng = np.random.RandomState(9)
        t = PolyTransform2D(3, rng.uniform(-0.1, 0.1, 10), rng.uniform(-0.1, 0.1, 10))
        pl = Polyline(tuple((float(x), float(y))
                            for x, y in rng.uniform(0, 5, (6, 2))))
        out = geom.transform_polyline(t, pl)
        for vin, vout in zip(pl.vertices, out.vertices):
            assert vout == pytest.approx(geom.apply_point(t, *vin), abs=1e-12)


class TestWarp:
    def make_image(self):
        rng = np.random.RandomState(4)
        return GreyImage(rng.randint(0, 256, size=(20, 20)).astype(np.int32))

    def test_identity_warp(self):
        img = self.make_image()
        out = geom.warp_image(geom.identity_transform(), img, (20, 20))
        assert np.array_equal(out.data, img.data)

    def test_integer_translation(self):
        img = self.make_image()
        # inverse of +3,+2 shift maps target back by -3,-2
        inv = PolyTransform2D(1, np.array([-3.0, 1, 0]), np.array([-2.0, 0, 1]))
        out = geom.warp_image(inv, img, (20, 20), background=0)
        assert np.array_equal(out.data[2:, 3:], img.data[:-2, :-3])
        assert np.all(out.data[:2, :] == 0)
        assert np.all(out.data[:, :3] == 0)

    def test_rotation_round_trip_mostly_recovered(self):
        img = self.make_image()
        src = grid_points(5, 19.0)
        ang = 0.3
        rot = np.array([[math.cos(ang), -math.sin(ang)],
                        [math.sin(ang), math.cos(ang)]])
        center = np.array([9.5, 9.5])
        tgt = (src - center) @ rot.T + center
        direct, inverse = geom.fit_transform_pair(ControlPointSet(src, tgt), 1)
        warped = geom.warp_image(inverse, img, (20, 20), background=0)
        back = geom.warp_image(direct, warped, (20, 20), background=0)
        # interior pixels mostly recovered despite nearest-neighbor aliasing
        inner = (slice(4, 16), slice(4, 16))
        same = (back.data[inner] == img.data[inner]).mean()
        assert same >= 0.55

    def test_never_invents_grey_values(self):
        img = self.make_image()
        inv = PolyTransform2D(1, np.array([0.0, 0.8, 0.1]), np.array([0.0, -0.1, 0.9]))
        out = geom.warp_image(inv, img, (24, 24), background=0)
        assert set(np.unique(out.data)) <= set(np.unique(img.data)) | {0}

    def test_not_invertible(self):
        # a fold: two sources land near the same target, no inverse exists
        src = np.array([(p, q) for p in (-3.0, -1.0, 1.0, 3.0)
                        for q in (0.0, 1.0, 2.0, 3.0)])
        tgt = np.stack([src[:, 0] ** 2 + 0.01 * src[:, 1] + 0.001 * src[:, 0],
                        src[:, 1]], axis=1)
        cps = ControlPointSet(src, tgt)
        with pytest.raises(NotInvertibleError):
            direct, inverse = geom.fit_transform_pair(cps, 2)
            geom.warp_image(inverse, self.make_image(), (20, 20), check=cps)

    def test_forward_mode(self):
        img = self.make_image()
        t = PolyTransform2D(1, np.array([3.0, 1, 0]), np.array([2.0, 0, 1]))
        out = geom.warp_image_forward(t, img, (24, 24), background=0)
        assert np.array_equal(out.data[2:22, 3:23], img.data)


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.RandomState(1)
        t = PolyTransform2D(2, rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6))
        back = geom.transform_from_text(geom.transform_to_text(t))
        assert back.order == 2
        assert np.array_equal(back.a, t.a)
        assert np.array_equal(back.b, t.b)
