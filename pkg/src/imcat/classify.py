"""Statistical layer: histogram classification, least-squares models,
discriminant identification and region aggregation.

Thematic conversion finds the modes of a bi-dimensional histogram of two
planes, diffuses their labels over the whole histogram support (a Voronoi
assignment, far cheaper than a morphological extension) and re-encodes the
image pair through the resulting look-up table.  Chaining the label plane
with each further band extends the scheme to any number of dimensions.

Calibration, authentication and identification all reduce to least
squares: a linear regression for calibration, its residual plus a
two-Gaussian threshold for authentication, and the indicator-target
regression whose score vector is maximized for identification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateError,
    DimensionMismatchError,
    EmptyClassError,
    EmptyHistogramError,
    EmptyMaskError,
    OutOfRangeError,
    RankDeficientError,
    SingularCovarianceError,
)
from .moments import RawMoments, ShapeFeatures, center_moments, principal_frame
from .raster import GreyImage, LabelImage

REJECT = 0


@dataclass(frozen=True)
class Histogram2D:
    """Co-occurrence counts of two planes; counts[u][v] tallies pairs."""

    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "counts",
                           np.asarray(self.counts, dtype=np.int64))


@dataclass(frozen=True)
class ClassMap:
    """Look-up table over (u, v) cells; labels run 1..n_classes."""

    lut: np.ndarray
    n_classes: int
    seeds: tuple[tuple[int, int], ...] = ()


def build_histogram2d(a: GreyImage, b: GreyImage) -> Histogram2D:
    """Count value couples of two equally-sized planes."""
    if a.data.shape != b.data.shape:
        raise DimensionMismatchError("planes must share dimensions")
    side_a = int(a.data.max()) + 1 if a.data.size else 1
    side_b = int(b.data.max()) + 1 if b.data.size else 1
    flat = a.data.reshape(-1).astype(np.int64) * side_b + b.data.reshape(-1)
    counts = np.bincount(flat, minlength=side_a * side_b)
    return Histogram2D(counts.reshape(side_a, side_b))


def _smooth3x3(grid: np.ndarray) -> np.ndarray:
    padded = np.pad(grid.astype(np.float64), 1, mode="constant")
    out = np.zeros_like(grid, dtype=np.float64)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out += padded[dy: dy + grid.shape[0], dx: dx + grid.shape[1]]
    return out / 9.0


def _find_seeds(smoothed: np.ndarray) -> list[tuple[int, int]]:
    """Local maxima of the grid; a plateau collapses to its smallest cell."""
    h, w = smoothed.shape
    candidate = smoothed > 0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == dx == 0:
                continue
            shifted = np.full((h, w), -np.inf)
            ys0, ys1 = max(0, dy), min(h, h + dy)
            xs0, xs1 = max(0, dx), min(w, w + dx)
            shifted[ys0:ys1, xs0:xs1] = smoothed[max(0, -dy): h - max(0, dy),
                                                 max(0, -dx): w - max(0, dx)]
            candidate &= smoothed >= shifted
    seeds = []
    seen = np.zeros((h, w), dtype=bool)
    ys, xs = np.nonzero(candidate)
    cells = sorted(zip(ys.tolist(), xs.tolist()))
    for y, x in cells:
        if seen[y, x]:
            continue
        # flood the equal-valued candidate plateau; keep this smallest cell
        value = smoothed[y, x]
        stack = [(y, x)]
        seen[y, x] = True
        while stack:
            cy, cx = stack.pop()
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = cy + dy, cx + dx
                    if (0 <= ny < h and 0 <= nx < w and not seen[ny, nx]
                            and candidate[ny, nx] and smoothed[ny, nx] == value):
                        seen[ny, nx] = True
                        stack.append((ny, nx))
        seeds.append((y, x))
    return seeds


def classify_histogram(h: Histogram2D) -> ClassMap:
    """Label every histogram cell by its nearest smoothed local maximum.

    Seeds are the local maxima of the 3x3-box-smoothed counts (plateaus
    collapse to their lexicographically smallest cell); diffusion assigns
    each (u, v) cell the label of the nearest seed in Euclidean histogram
    coordinates, smallest label on ties.
    """
    if not (h.counts > 0).any():
        raise EmptyHistogramError("histogram has no counts")
    smoothed = _smooth3x3(h.counts)
    seeds = _find_seeds(smoothed)
    hh, ww = h.counts.shape
    ys, xs = np.meshgrid(np.arange(hh), np.arange(ww), indexing="ij")
    best = np.full((hh, ww), np.inf)
    lut = np.zeros((hh, ww), dtype=np.int64)
    for label, (sy, sx) in enumerate(seeds, start=1):
        dist = (ys - sy) ** 2 + (xs - sx) ** 2
        better = dist < best
        best = np.where(better, dist, best)
        lut[better] = label
    return ClassMap(lut, len(seeds), tuple(seeds))


def relabel_pair(a: GreyImage, b: GreyImage, cm: ClassMap) -> LabelImage:
    """Re-encode a plane pair through the class look-up table."""
    if a.data.shape != b.data.shape:
        raise DimensionMismatchError("planes must share dimensions")
    if (a.data.max(initial=0) >= cm.lut.shape[0]
            or b.data.max(initial=0) >= cm.lut.shape[1]):
        raise OutOfRangeError("plane values outside the class map")
    return LabelImage(cm.lut[a.data, b.data])


def sequential_classify(bands: list[GreyImage]) -> LabelImage:
    """Multidimensional classification by chained planar projections.

    The first two bands are classified together; every further band is
    paired with the label plane of the previous step, so the cost stays
    linear in the number of dimensions.
    """
    if len(bands) < 2:
        raise DimensionMismatchError("need at least two bands")
    current = relabel_pair(bands[0], bands[1],
                           classify_histogram(build_histogram2d(bands[0], bands[1])))
    for band in bands[2:]:
        plane = GreyImage(current.data, int(current.data.max(initial=1)))
        cm = classify_histogram(build_histogram2d(plane, band))
        current = relabel_pair(plane, band, cm)
    return current


def derivative_stack(img: GreyImage, order: int = 2) -> list[GreyImage]:
    """Smoothed plane plus derivative magnitudes up to the given order.

    Returns [3x3 average, Sobel gradient magnitude, Laplacian magnitude]
    truncated to order; the planes feed sequential_classify for
    mono-spectral segmentation by integral-differential behavior.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    data = img.data.astype(np.float64)
    padded = np.pad(data, 1, mode="edge")

    def window(dy, dx):
        return padded[1 + dy: 1 + dy + data.shape[0],
                      1 + dx: 1 + dx + data.shape[1]]

    smooth = sum(window(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)) / 9.0
    planes = [GreyImage(np.clip(np.rint(smooth), 0, img.max_grey).astype(np.int32),
                        img.max_grey)]
    if order >= 1:
        gx = (window(-1, 1) + 2 * window(0, 1) + window(1, 1)
              - window(-1, -1) - 2 * window(0, -1) - window(1, -1))
        gy = (window(1, -1) + 2 * window(1, 0) + window(1, 1)
              - window(-1, -1) - 2 * window(-1, 0) - window(-1, 1))
        mag = np.hypot(gx, gy)
        planes.append(GreyImage(
            np.clip(np.rint(mag), 0, img.max_grey).astype(np.int32), img.max_grey))
    if order >= 2:
        lap = np.abs(window(0, 1) + window(0, -1) + window(1, 0) + window(-1, 0)
                     - 4 * data)
        planes.append(GreyImage(
            np.clip(np.rint(lap), 0, img.max_grey).astype(np.int32), img.max_grey))
    return planes


@dataclass(frozen=True)
class RegressionModel:
    """Least-squares linear model y = a0 + sum a_i x_i with residual rms."""

    coefficients: np.ndarray
    rms: float
    log_flags: tuple[bool, ...] = ()

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if self.log_flags:
            x = x.copy()
            for i, flag in enumerate(self.log_flags):
                if flag:
                    x[..., i] = np.log(x[..., i])
        return float(self.coefficients[0] + x @ self.coefficients[1:])


def fit_regression(x: np.ndarray, y: np.ndarray,
                   log_flags: tuple[bool, ...] = ()) -> RegressionModel:
    """Least-squares fit of y against the explicative variables."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise DimensionMismatchError("x must be (n, p) matching y")
    if log_flags:
        x = x.copy()
        for i, flag in enumerate(log_flags):
            if flag:
                x[:, i] = np.log(x[:, i])
    design = np.hstack([np.ones((len(x), 1)), x])
    if len(x) < design.shape[1] or np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficientError("design matrix rank deficient")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    rms = math.sqrt(float(((design @ coef - y) ** 2).mean()))
    return RegressionModel(coef, rms, log_flags)


def auth_threshold(mu1: float, sigma1: float, mu2: float, sigma2: float) -> float:
    """Compliance threshold between two Gaussian error populations."""
    if sigma1 + sigma2 == 0:
        raise DegenerateError("both dispersions are zero")
    return (sigma2 * mu1 + sigma1 * mu2) / (sigma1 + sigma2)


@dataclass(frozen=True)
class AuthModel:
    """Reference regression plus the compliance threshold on its error."""

    regression: RegressionModel
    threshold: float

    def authenticate(self, x, y: float) -> bool:
        return abs(y - self.regression.predict(x)) < self.threshold


@dataclass(frozen=True)
class DiscriminantModel:
    """Least-squares discriminant: score vector v = G (x - M_x) + M_v."""

    mean_x: np.ndarray
    mean_v: np.ndarray
    gain: np.ndarray
    classes: tuple[int, ...]
    thresholds: np.ndarray | None = None
    ridged: bool = False

    def scores(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != len(self.mean_x):
            raise DimensionMismatchError("feature arity mismatch")
        return self.gain @ (x - self.mean_x) + self.mean_v


def fit_discriminant(x: np.ndarray, labels, with_thresholds: bool = False,
                     ) -> DiscriminantModel:
    """Fit the indicator-target discriminant model.

    Each sample's target is the indicator vector of its class; the model
    is the least-squares estimate of that vector, computed from the
    centered covariance blocks.  A singular feature covariance is retried
    once with a small ridge and the retry is reported on the model.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(labels):
        raise DimensionMismatchError("x must be (n, p) matching labels")
    classes = tuple(sorted(set(labels.tolist())))
    for c in classes:
        if not (labels == c).any():
            raise EmptyClassError(f"class {c} has no samples")
    n, p = x.shape
    m = len(classes)
    w = np.zeros((n, m))
    for j, c in enumerate(classes):
        w[labels == c, j] = 1.0
    mean_x = x.mean(axis=0)
    mean_v = w.mean(axis=0)
    xc = x - mean_x
    wc = w - mean_v
    r_xx = xc.T @ xc / n
    r_vx = wc.T @ xc / n
    ridged = False
    try:
        gain = np.linalg.solve(r_xx, r_vx.T).T
        if not np.isfinite(gain).all():
            raise np.linalg.LinAlgError
        # reject numerically meaningless solves
        if np.linalg.cond(r_xx) > 1e12:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        ridge = 1e-9 * np.trace(r_xx) / p
        if ridge <= 0:
            raise SingularCovarianceError("feature covariance singular")
        try:
            gain = np.linalg.solve(r_xx + ridge * np.eye(p), r_vx.T).T
            ridged = True
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError("feature covariance singular") from exc
    model = DiscriminantModel(mean_x, mean_v, gain, classes, None, ridged)
    if with_thresholds:
        thresholds = np.zeros(m)
        scores = np.stack([model.scores(row) for row in x])
        for j, c in enumerate(classes):
            own = scores[labels == c, j]
            rest = scores[labels != c, j]
            if len(rest) == 0:
                thresholds[j] = -np.inf
                continue
            thresholds[j] = auth_threshold(float(rest.mean()), float(rest.std()),
                                           float(own.mean()), float(own.std()))
        model = DiscriminantModel(mean_x, mean_v, gain, classes, thresholds, ridged)
    return model


def identify(model: DiscriminantModel, x) -> tuple[int, np.ndarray]:
    """Class of the maximal score component; REJECT under the threshold.

    Ties resolve to the lowest class id.  With thresholds enabled, a
    winning score below its class threshold yields REJECT.
    """
    v = model.scores(x)
    best = int(np.argmax(v))
    # argmax returns the first maximum, which is the lowest class id
    label = model.classes[best]
    if model.thresholds is not None and v[best] < model.thresholds[best]:
        return REJECT, v
    return label, v


@dataclass
class AggregationNode:
    """One region of the aggregation tree with its summed raw moments."""

    node_id: int
    moments: RawMoments
    children: tuple[int, int] | None = None
    features: ShapeFeatures | None = None


@dataclass
class AggregationTree:
    nodes: list[AggregationNode]
    merge_log: list[tuple[int, int, int]]
    root: int

    def feature_series(self) -> list[ShapeFeatures]:
        return [n.features for n in self.nodes if n.features is not None]


def _gravity(rm: RawMoments) -> tuple[float, float]:
    return rm.mx / rm.m0, rm.my / rm.m0


def aggregate_regions(leaves: list[RawMoments], max_depth: int = 24
                      ) -> AggregationTree:
    """Merge regions bottom-up through a gravity-center quad-tree.

    Gravity centers are sunk into a regular quad-tree; the deepest
    quadrants merge first, pairing the two regions with the smallest
    center distance until one region per quadrant remains, recursively up
    to the root.  Moments are summed field-wise before any centering, so
    every internal node's moments equal the sum of its leaf descendants.
    """
    if not leaves:
        raise EmptyClassError("no regions to aggregate")
    nodes = [AggregationNode(i, rm, None, principal_frame(center_moments(rm)))
             for i, rm in enumerate(leaves)]
    merge_log: list[tuple[int, int, int]] = []
    active = list(range(len(leaves)))
    if len(active) == 1:
        return AggregationTree(nodes, merge_log, active[0])
    centers = {i: _gravity(nodes[i].moments) for i in active}
    xs = [c[0] for c in centers.values()]
    ys = [c[1] for c in centers.values()]
    x0, y0 = min(xs), min(ys)
    side = max(max(xs) - x0, max(ys) - y0) or 1.0

    def quad_path(center, depth):
        x = min(max((center[0] - x0) / side, 0.0), 1.0 - 1e-12)
        y = min(max((center[1] - y0) / side, 0.0), 1.0 - 1e-12)
        path = []
        for _ in range(depth):
            x *= 2
            y *= 2
            path.append((int(x), int(y)))
            x -= int(x)
            y -= int(y)
        return tuple(path)

    def merge_group(group):
        """Merge members pairwise, nearest centers first, down to one."""
        members = list(group)
        while len(members) > 1:
            best = None
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    ci = centers[members[i]]
                    cj = centers[members[j]]
                    d = (ci[0] - cj[0]) ** 2 + (ci[1] - cj[1]) ** 2
                    key = (d, members[i], members[j])
                    if best is None or key < best:
                        best = key
                        pick = (i, j)
            i, j = pick
            a, b = members[i], members[j]
            summed = nodes[a].moments + nodes[b].moments
            node = AggregationNode(len(nodes), summed, (a, b),
                                   principal_frame(center_moments(summed)))
            nodes.append(node)
            centers[node.node_id] = _gravity(summed)
            merge_log.append((a, b, node.node_id))
            members = [m for k, m in enumerate(members) if k not in (i, j)]
            members.append(node.node_id)
        return members[0]

    depth = max_depth
    while depth >= 0 and len(active) > 1:
        groups: dict[tuple, list[int]] = {}
        for i in active:
            groups.setdefault(quad_path(centers[i], depth), []).append(i)
        if all(len(g) == 1 for g in groups.values()):
            depth -= 1
            continue
        new_active = []
        for path in sorted(groups):
            group = groups[path]
            new_active.append(merge_group(group) if len(group) > 1 else group[0])
        active = new_active
        depth -= 1
    if len(active) > 1:
        root = merge_group(active)
    else:
        root = active[0]
    return AggregationTree(nodes, merge_log, root)


@dataclass(frozen=True)
class SkinModel:
    """Two-class chrominance histogram used as a skin look-up table."""

    lut: np.ndarray  # 1 = skin, 2 = non-skin

    SKIN = 1
    NON_SKIN = 2


def skin_calibrate(views: list[tuple[GreyImage, GreyImage]],
                   masks: list[GreyImage], side: int = 256) -> SkinModel:
    """Learn the skin chrominance distribution from centered-face views.

    Chrominance couples under each mask vote skin, the others non-skin;
    cells seen by neither take the label of the nearest labeled cell.
    """
    skin = np.zeros((side, side), dtype=np.int64)
    non_skin = np.zeros((side, side), dtype=np.int64)
    voted = False
    for (u, v), mask in zip(views, masks):
        if u.data.shape != v.data.shape or u.data.shape != mask.data.shape:
            raise DimensionMismatchError("planes and mask must share dimensions")
        inside = mask.data != 0
        if inside.any():
            voted = True
        flat_u = u.data.reshape(-1)
        flat_v = v.data.reshape(-1)
        flat_m = inside.reshape(-1)
        np.add.at(skin, (flat_u[flat_m], flat_v[flat_m]), 1)
        np.add.at(non_skin, (flat_u[~flat_m], flat_v[~flat_m]), 1)
    if not voted:
        raise EmptyMaskError("no mask selects any pixel")
    lut = np.zeros((side, side), dtype=np.int64)
    lut[skin > non_skin] = SkinModel.SKIN
    lut[non_skin > skin] = SkinModel.NON_SKIN
    lut[(skin > 0) & (skin == non_skin)] = SkinModel.SKIN
    if not (lut != 0).any():
        raise EmptyMaskError("no labeled cells")
    return SkinModel(_diffuse_labels(lut))


def _diffuse_labels(lut: np.ndarray) -> np.ndarray:
    """Fill unlabeled cells with the nearest label (breadth-first rings)."""
    from collections import deque

    out = lut.copy()
    h, w = out.shape
    queue = deque((int(y), int(x)) for y, x in np.argwhere(out != 0))
    # BFS gives the d1-nearest labeled cell; ties resolve by visit order,
    # which follows the scan order of the seed cells
    while queue:
        y, x = queue.popleft()
        for dy, dx in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and out[ny, nx] == 0:
                out[ny, nx] = out[y, x]
                queue.append((ny, nx))
    return out


def skin_detect(pair: tuple[GreyImage, GreyImage], model: SkinModel) -> GreyImage:
    """Per-pixel skin mask from the calibrated look-up table."""
    u, v = pair
    if u.data.shape != v.data.shape:
        raise DimensionMismatchError("planes must share dimensions")
    labels = model.lut[u.data, v.data]
    mask = np.where(labels == SkinModel.SKIN, 127, 0).astype(np.int32)
    return GreyImage(mask, 255)
