import math

import numpy as np
import pytest

from imcat import classify as cf
from imcat.errors import (
    DegenerateError,
    DimensionMismatchError,
    EmptyHistogramError,
    RankDeficientError,
)
from imcat.moments import RawMoments, moments_from_cells
from imcat.raster import GreyImage


def plane(data, max_grey=255):
    return GreyImage(np.asarray(data, dtype=np.int32), max_grey)


def two_cluster_pair(rng, n=40, c1=(50, 50), c2=(200, 200)):
    """Two planes whose joint values form two peaked chrominance clusters."""
    h = w = n
    a = np.zeros((h, w), dtype=np.int32)
    b = np.zeros((h, w), dtype=np.int32)
    truth = np.zeros((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            if x < w // 2:
                cu, cv = c1
                truth[y, x] = 1
            else:
                cu, cv = c2
                truth[y, x] = 2
            a[y, x] = cu + rng.binomial(6, 0.5) - 3
            b[y, x] = cv + rng.binomial(6, 0.5) - 3
    return plane(a), plane(b), truth


class TestHistogram2D:
    def test_diagonal(self):
        a = plane([[1, 2], [3, 1]], 3)
        h = cf.build_histogram2d(a, a)
        nz = np.argwhere(h.counts > 0)
        assert all(u == v for u, v in nz)

    def test_constant_single_cell(self):
        a = plane(np.full((4, 4), 3), 10)
        b = plane(np.full((4, 4), 5), 10)
        h = cf.build_histogram2d(a, b)
        assert h.counts[3, 5] == 16
        assert h.counts.sum() == 16

    def test_total(self):
        rng = np.random.RandomState(0)
        a = plane(rng.randint(0, 256, (13, 7)))
        b = plane(rng.randint(0, 256, (13, 7)))
        assert cf.build_histogram2d(a, b).counts.sum() == 13 * 7

    def test_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cf.build_histogram2d(plane([[1]]), plane([[1, 2]]))


class TestClassifyHistogram:
    def test_two_point_masses(self):
        counts = np.zeros((256, 256), dtype=np.int64)
        counts[50, 50] = 100
        counts[200, 200] = 100
        cm = cf.classify_histogram(cf.Histogram2D(counts))
        assert cm.n_classes == 2
        # nearest-seed oracle: the perpendicular bisector splits the plane
        for u, v in ((0, 0), (100, 100), (130, 120)):
            d1 = (u - 50) ** 2 + (v - 50) ** 2
            d2 = (u - 200) ** 2 + (v - 200) ** 2
            expected = 1 if d1 < d2 else 2
            assert cm.lut[u, v] == expected
        # seeds keep their own labels
        assert cm.lut[50, 50] == 1 and cm.lut[200, 200] == 2

    def test_single_mass(self):
        counts = np.zeros((64, 64), dtype=np.int64)
        counts[10, 20] = 5
        cm = cf.classify_histogram(cf.Histogram2D(counts))
        assert cm.n_classes == 1
        assert np.all(cm.lut == 1)

    def test_plateau_single_seed(self):
        counts = np.zeros((32, 32), dtype=np.int64)
        counts[10:13, 10:13] = 9  # flat-topped mode
        cm = cf.classify_histogram(cf.Histogram2D(counts))
        assert cm.n_classes == 1

    def test_partition_property(self):
        rng = np.random.RandomState(1)
        counts = np.zeros((64, 64), dtype=np.int64)
        counts[12, 12] = 50
        counts[40, 50] = 60
        counts[55, 8] = 40
        cm = cf.classify_histogram(cf.Histogram2D(counts))
        assert cm.n_classes == 3
        assert set(np.unique(cm.lut)) == {1, 2, 3}

    def test_empty(self):
        with pytest.raises(EmptyHistogramError):
            cf.classify_histogram(cf.Histogram2D(np.zeros((8, 8), dtype=np.int64)))


class TestRelabel:
    def test_two_cluster_recovery(self):
        rng = np.random.RandomState(3)
        a, b, truth = two_cluster_pair(rng)
        cm = cf.classify_histogram(cf.build_histogram2d(a, b))
        out = cf.relabel_pair(a, b, cm)
        # labels must match the generating cluster on >= 99% of pixels
        # (up to a label permutation)
        best = 0.0
        for mapping in ((1, 2), (2, 1)):
            mapped = np.where(truth == 1, mapping[0], mapping[1])
            best = max(best, float((out.data == mapped).mean()))
        assert best >= 0.99

    def test_constant_planes(self):
        a = plane(np.full((6, 6), 7), 255)
        cm = cf.classify_histogram(cf.build_histogram2d(a, a))
        out = cf.relabel_pair(a, a, cm)
        assert np.all(out.data == out.data[0, 0])

    def test_single_class(self):
        lut = np.ones((256, 256), dtype=np.int64)
        cm = cf.ClassMap(lut, 1)
        rng = np.random.RandomState(0)
        a = plane(rng.randint(0, 256, (5, 5)))
        out = cf.relabel_pair(a, a, cm)
        assert np.all(out.data == 1)


class TestSequentialClassify:
    def test_two_bands_base_case(self):
        rng = np.random.RandomState(4)
        a, b, _ = two_cluster_pair(rng, n=20)
        via_seq = cf.sequential_classify([a, b])
        cm = cf.classify_histogram(cf.build_histogram2d(a, b))
        direct = cf.relabel_pair(a, b, cm)
        assert np.array_equal(via_seq.data, direct.data)

    def test_identical_bands_idempotent(self):
        rng = np.random.RandomState(5)
        a, b, _ = two_cluster_pair(rng, n=20)
        two = cf.sequential_classify([a, b])
        four = cf.sequential_classify([a, b, b, b])
        # the partition must not change when re-presenting the same band
        pairs = set(zip(two.data.reshape(-1).tolist(),
                        four.data.reshape(-1).tolist()))
        assert len(pairs) == len({p[0] for p in pairs})
        assert len(pairs) == len({p[1] for p in pairs})

    def test_three_band_clusters(self):
        rng = np.random.RandomState(6)
        n = 30
        truth = np.zeros((n, n), dtype=np.int64)
        bands = [np.zeros((n, n), dtype=np.int32) for _ in range(3)]
        centers = {1: (40, 60, 80), 2: (200, 40, 160), 3: (120, 220, 30)}
        for y in range(n):
            for x in range(n):
                c = 1 + (3 * x) // n
                truth[y, x] = c
                for k in range(3):
                    bands[k][y, x] = np.clip(
                        centers[c][k] + rng.randint(-6, 7), 0, 255)
        out = cf.sequential_classify([plane(b) for b in bands])
        # map every output label to its majority generator class; at least
        # 95% of pixels must land on their own class
        hits = 0
        for label in set(out.data.reshape(-1).tolist()):
            sel = out.data == label
            counts = np.bincount(truth[sel], minlength=4)
            hits += counts.max()
        assert hits / truth.size >= 0.95


class TestDerivativeStack:
    def test_constant_zero_gradient(self):
        img = plane(np.full((8, 8), 100))
        planes = cf.derivative_stack(img, 2)
        assert np.all(planes[1].data == 0)

    def test_step_edge_gradient_peak(self):
        data = np.zeros((10, 10), dtype=np.int32)
        data[:, 5:] = 200
        planes = cf.derivative_stack(plane(data), 1)
        grad = planes[1].data
        peak_cols = set(np.argwhere(grad == grad.max())[:, 1].tolist())
        assert peak_cols <= {4, 5}

    def test_ramp_zero_laplacian(self):
        data = np.tile(np.arange(16, dtype=np.int32) * 10, (8, 1))
        planes = cf.derivative_stack(plane(data, 255), 2)
        assert np.all(planes[2].data[2:-2, 2:-2] == 0)


class TestRegression:
    def test_exact_line(self):
        x = np.arange(10, dtype=float).reshape(-1, 1)
        y = 2 + 3 * x[:, 0]
        model = cf.fit_regression(x, y)
        assert np.allclose(model.coefficients, [2, 3], atol=1e-10)
        assert model.rms < 1e-10

    def test_constant_target(self):
        rng = np.random.RandomState(0)
        x = rng.uniform(0, 5, (20, 2))
        y = np.full(20, 4.0)
        model = cf.fit_regression(x, y)
        assert model.coefficients[0] == pytest.approx(4.0, abs=1e-9)
        assert np.allclose(model.coefficients[1:], 0, atol=1e-9)

    def test_matches_normal_equations(self):
        rng = np.random.RandomState(1)
        x = rng.uniform(-2, 2, (50, 3))
        y = 1.5 + x @ np.array([0.5, -2.0, 1.0]) + rng.normal(0, 0.1, 50)
        model = cf.fit_regression(x, y)
        design = np.hstack([np.ones((50, 1)), x])
        oracle = np.linalg.inv(design.T @ design) @ design.T @ y
        assert np.abs(model.coefficients - oracle).max() < 1e-9

    def test_residual_orthogonality(self):
        rng = np.random.RandomState(2)
        x = rng.uniform(-1, 1, (30, 2))
        y = rng.uniform(-1, 1, 30)
        model = cf.fit_regression(x, y)
        design = np.hstack([np.ones((30, 1)), x])
        residual = y - design @ model.coefficients
        for col in design.T:
            assert abs(float(col @ residual)) < 1e-8 * max(1.0, np.abs(y).sum())

    def test_rank_deficient(self):
        x = np.ones((5, 2))
        with pytest.raises(RankDeficientError):
            cf.fit_regression(x, np.arange(5.0))


class TestAuthThreshold:
    def test_symmetric(self):
        assert cf.auth_threshold(0, 1, 10, 1) == 5

    def test_direct_substitution(self):
        assert cf.auth_threshold(0, 1, 9, 2) == 3

    def test_zero_variance_pins_mean(self):
        assert cf.auth_threshold(5, 0, 9, 2) == 5

    def test_degenerate(self):
        with pytest.raises(DegenerateError):
            cf.auth_threshold(1, 0, 2, 0)


class TestDiscriminant:
    def test_one_dimensional_boundary(self):
        x = np.array([[-1.0]] * 10 + [[1.0]] * 10)
        labels = [1] * 10 + [2] * 10
        model = cf.fit_discriminant(x, labels)
        got, _ = cf.identify(model, [0.7])
        assert got == 2
        got, _ = cf.identify(model, [-0.7])
        assert got == 1

    def test_single_class(self):
        x = np.array([[1.0, 2.0], [2.0, 1.0], [1.5, 1.5]])
        model = cf.fit_discriminant(x, [1, 1, 1])
        label, v = cf.identify(model, [9.0, 9.0])
        assert label == 1
        assert v[0] == pytest.approx(1.0, abs=1e-9)

    def test_well_separated_accuracy(self):
        rng = np.random.RandomState(7)
        sigma = 0.1
        gap = 3 * sigma * 10
        train1 = rng.normal((0, 0), sigma, (100, 2))
        train2 = rng.normal((gap, gap), sigma, (100, 2))
        x = np.vstack([train1, train2])
        labels = [1] * 100 + [2] * 100
        model = cf.fit_discriminant(x, labels)
        test1 = rng.normal((0, 0), sigma, (200, 2))
        test2 = rng.normal((gap, gap), sigma, (200, 2))
        hits = sum(cf.identify(model, row)[0] == 1 for row in test1)
        hits += sum(cf.identify(model, row)[0] == 2 for row in test2)
        assert hits / 400 >= 0.99

    def test_scores_sum_to_one(self):
        rng = np.random.RandomState(8)
        x = rng.uniform(-3, 3, (60, 4))
        labels = rng.randint(1, 4, 60)
        model = cf.fit_discriminant(x, labels)
        for row in rng.uniform(-5, 5, (20, 4)):
            assert float(cf.identify(model, row)[1].sum()) == pytest.approx(
                1.0, abs=1e-9)

    def test_training_points_recovered(self):
        rng = np.random.RandomState(9)
        x = np.vstack([rng.normal((0, 0), 0.05, (30, 2)),
                       rng.normal((5, 5), 0.05, (30, 2)),
                       rng.normal((0, 5), 0.05, (30, 2))])
        labels = np.array([1] * 30 + [2] * 30 + [3] * 30)
        model = cf.fit_discriminant(x, labels)
        for row, want in zip(x, labels):
            assert cf.identify(model, row)[0] == want

    def test_rescaling_invariance_of_argmax(self):
        rng = np.random.RandomState(10)
        x = np.vstack([rng.normal((0, 0), 0.2, (40, 2)),
                       rng.normal((4, 1), 0.2, (40, 2))])
        labels = [1] * 40 + [2] * 40
        m1 = cf.fit_discriminant(x, labels)
        m2 = cf.fit_discriminant(x * 3.5 + 2.0, labels)
        probes = rng.uniform(-1, 5, (30, 2))
        for row in probes:
            assert (cf.identify(m1, row)[0]
                    == cf.identify(m2, row * 3.5 + 2.0)[0])

    def test_threshold_reject(self):
        rng = np.random.RandomState(11)
        x = np.vstack([rng.normal((0, 0), 0.1, (50, 2)),
                       rng.normal((4, 0), 0.1, (50, 2)),
                       rng.normal((2, 3.5), 0.1, (50, 2))])
        labels = [1] * 50 + [2] * 50 + [3] * 50
        model = cf.fit_discriminant(x, labels, with_thresholds=True)
        # training points pass
        assert cf.identify(model, x[0])[0] == 1
        assert cf.identify(model, x[60])[0] == 2
        # an outlier belonging to no class scores below every threshold
        centroid = x.mean(axis=0)
        assert cf.identify(model, centroid)[0] == cf.REJECT

    def test_tie_goes_to_lowest_class(self):
        model = cf.DiscriminantModel(
            mean_x=np.zeros(1), mean_v=np.array([0.5, 0.5]),
            gain=np.zeros((2, 1)), classes=(1, 2))
        assert cf.identify(model, [0.0])[0] == 1

    def test_arity_mismatch(self):
        x = np.array([[0.0, 1.0], [1.0, 0.0]])
        model = cf.fit_discriminant(x, [1, 2])
        with pytest.raises(DimensionMismatchError):
            cf.identify(model, [1.0])


class TestAggregation:
    def leaf(self, x, y, mass=4):
        pts = [(x + dx, y + dy) for dx in (0, 1) for dy in (0, 1)]
        return moments_from_cells(pts)

    def test_single_leaf(self):
        rm = self.leaf(3, 3)
        tree = cf.aggregate_regions([rm])
        assert tree.root == 0
        assert tree.merge_log == []
        assert tree.nodes[0].features is not None

    def test_two_leaves_mass_weighted_center(self):
        a = self.leaf(0, 0)
        b = self.leaf(10, 0)
        tree = cf.aggregate_regions([a, b])
        root = tree.nodes[tree.root]
        assert root.moments == a + b
        xg = root.moments.mx / root.moments.m0
        assert xg == pytest.approx((0.5 + 10.5) / 2)

    def test_cluster_merges_first(self):
        leaves = [self.leaf(0, 0), self.leaf(3, 0), self.leaf(0, 3),
                  self.leaf(40, 40)]
        tree = cf.aggregate_regions(leaves)
        first_merges = tree.merge_log[:2]
        for a, b, _ in first_merges:
            assert 3 not in (a, b)  # the distant leaf joins last

    def test_internal_nodes_sum_exactly(self):
        rng = np.random.RandomState(12)
        leaves = [self.leaf(int(x), int(y))
                  for x, y in rng.randint(0, 60, (9, 2))]
        tree = cf.aggregate_regions(leaves)

        def leaf_sum(nid):
            node = tree.nodes[nid]
            if node.children is None:
                return node.moments
            return leaf_sum(node.children[0]) + leaf_sum(node.children[1])

        for node in tree.nodes:
            assert leaf_sum(node.node_id) == node.moments
        root_mass = tree.nodes[tree.root].moments.m0
        assert root_mass == sum(leaf.m0 for leaf in leaves)


class TestSkin:
    def make_view(self, rng, skin_uv=(90, 150), other_uv=(30, 40)):
        n = 24
        u = np.zeros((n, n), dtype=np.int32)
        v = np.zeros((n, n), dtype=np.int32)
        mask = np.zeros((n, n), dtype=np.int32)
        for y in range(n):
            for x in range(n):
                central = 6 <= x < 18 and 6 <= y < 18
                cu, cv = skin_uv if central else other_uv
                u[y, x] = np.clip(cu + rng.randint(-4, 5), 0, 255)
                v[y, x] = np.clip(cv + rng.randint(-4, 5), 0, 255)
                mask[y, x] = 127 if central else 0
        return (plane(u), plane(v)), plane(mask)

    def test_self_consistency(self):
        rng = np.random.RandomState(13)
        pair, mask = self.make_view(rng)
        model = cf.skin_calibrate([pair], [mask])
        detected = cf.skin_detect(pair, model)
        central = detected.data[6:18, 6:18]
        assert (central != 0).mean() >= 0.99

    def test_disjoint_cluster_not_skin(self):
        rng = np.random.RandomState(14)
        pair, mask = self.make_view(rng)
        model = cf.skin_calibrate([pair], [mask])
        far_u = plane(np.full((8, 8), 220), 255)
        far_v = plane(np.full((8, 8), 10), 255)
        detected = cf.skin_detect((far_u, far_v), model)
        assert (detected.data != 0).mean() == 0.0

    def test_all_skin_votes(self):
        u = plane(np.full((4, 4), 100))
        v = plane(np.full((4, 4), 120))
        mask = plane(np.full((4, 4), 127))
        model = cf.skin_calibrate([((u, v))], [mask])
        # single-label diffusion covers the whole plane
        assert np.all(model.lut == cf.SkinModel.SKIN)
