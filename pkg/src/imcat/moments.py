"""Generalized object moments and the shape features derived from them.

Raw moments are plain coordinate power sums over an object's pixels,
accumulated exactly in integer arithmetic either cell by cell or per
horizontal run with closed-form span sums.  Centering removes translation,
the principal-frame rotation removes orientation, and the third-order sign
rule removes the remaining half-turn ambiguity, leaving a feature vector
invariant under translation and rotation (and, once normalized by the main
axis length, under scaling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyListError, EmptyObjectError
from .raster import GreyImage


@dataclass(frozen=True)
class RunSegment:
    """Horizontal pixel span on row y covering columns x1..x2 inclusive."""

    y: int
    x1: int
    x2: int

    def __post_init__(self):
        if self.x1 > self.x2:
            raise ValueError("run must have x1 <= x2")


@dataclass(frozen=True)
class RawMoments:
    """Power sums through order 3 in the image frame; m0 is the surface."""

    m0: int = 0
    mx: int = 0
    my: int = 0
    mxx: int = 0
    mxy: int = 0
    myy: int = 0
    mxxx: int = 0
    mxxy: int = 0
    mxyy: int = 0
    myyy: int = 0

    def __add__(self, other: "RawMoments") -> "RawMoments":
        return RawMoments(*(a + b for a, b in zip(self.astuple(), other.astuple())))

    def astuple(self):
        return (self.m0, self.mx, self.my, self.mxx, self.mxy, self.myy,
                self.mxxx, self.mxxy, self.mxyy, self.myyy)


@dataclass(frozen=True)
class CenteredMoments:
    """Moments in the gravity-center frame; first-order terms vanish."""

    surface: float
    xg: float
    yg: float
    mxx: float
    mxy: float
    myy: float
    mxxx: float
    mxxy: float
    mxyy: float
    myyy: float


@dataclass(frozen=True)
class ShapeFeatures:
    """Localization plus the translation/rotation invariant description.

    theta is the main-axis direction in [0, 2*pi) after the a30 >= 0
    disambiguation; lambda1 >= lambda2 are the inertia sums M(u1^2), M(u2^2);
    a30..a03 are the order-3 moments expressed in the Eigen frame; scale is
    the main-axis length 4*sqrt(lambda1/S); invariants holds
    (S/scale^2, lambda2/lambda1, a30/(S*scale^3), a03/(S*scale^3)).
    """

    xg: float
    yg: float
    theta: float
    lambda1: float
    lambda2: float
    a30: float
    a21: float
    a12: float
    a03: float
    surface: float
    scale: float
    invariants: tuple[float, float, float, float]


@dataclass(frozen=True)
class RadiometricStats:
    minimum: float
    maximum: float
    mean: float
    dispersion: float
    asymmetry: float


@dataclass(frozen=True)
class ComplementaryAttributes:
    """Shape attributes outside the moment chain.

    compactness is perimeter squared over surface; eccentricity_ratio is
    the major-over-minor inertia ratio (inf for perfect lines, use the
    invariant lambda2/lambda1 when a bounded value is needed).
    """

    compactness: float
    eccentricity_ratio: float
    radiometric: RadiometricStats | None = None


@dataclass(frozen=True)
class ParticleStats:
    mu: float
    sigma: float
    alpha: float


def moments_from_cells(points: Iterable[tuple[int, int]]) -> RawMoments:
    """Exact power sums over individual (x, y) pixels; the cellular oracle."""
    m0 = mx = my = mxx = mxy = myy = mxxx = mxxy = mxyy = myyy = 0
    for x, y in points:
        m0 += 1
        mx += x
        my += y
        mxx += x * x
        mxy += x * y
        myy += y * y
        mxxx += x * x * x
        mxxy += x * x * y
        mxyy += x * y * y
        myyy += y * y * y
    return RawMoments(m0, mx, my, mxx, mxy, myy, mxxx, mxxy, mxyy, myyy)


def _span_sums(x1: int, x2: int) -> tuple[int, int, int, int]:
    """(count, sum k, sum k^2, sum k^3) for k = x1..x2 inclusive."""
    def s1(n):
        return n * (n + 1) // 2

    def s2(n):
        return n * (n + 1) * (2 * n + 1) // 6

    def s3(n):
        return (n * (n + 1) // 2) ** 2

    a = x1 - 1
    return (x2 - x1 + 1, s1(x2) - s1(a), s2(x2) - s2(a), s3(x2) - s3(a))


def moments_from_runs(runs: Sequence[RunSegment]) -> RawMoments:
    """Raw moments of a run-length covered object.

    Each inclusive span contributes through closed-form power sums, so the
    result equals the cellular summation exactly (integer arithmetic).
    """
    m0 = mx = my = mxx = mxy = myy = mxxx = mxxy = mxyy = myyy = 0
    for run in runs:
        n, sx, sx2, sx3 = _span_sums(run.x1, run.x2)
        y = run.y
        m0 += n
        mx += sx
        my += y * n
        mxx += sx2
        mxy += y * sx
        myy += y * y * n
        mxxx += sx3
        mxxy += y * sx2
        mxyy += y * y * sx
        myyy += y * y * y * n
    return RawMoments(m0, mx, my, mxx, mxy, myy, mxxx, mxxy, mxyy, myyy)


def runs_from_mask(mask: np.ndarray) -> list[RunSegment]:
    """Horizontal runs of the true pixels of a boolean mask."""
    runs = []
    for y in range(mask.shape[0]):
        row = mask[y]
        x = 0
        w = mask.shape[1]
        while x < w:
            if row[x]:
                x0 = x
                while x < w and row[x]:
                    x += 1
                runs.append(RunSegment(y, x0, x - 1))
            else:
                x += 1
    return runs


def center_moments(rm: RawMoments) -> CenteredMoments:
    """Translate raw moments to the gravity center.

    Uses the standard central-moment identities, evaluated in exact rational
    arithmetic and rounded once at the end, so integer translations of the
    object reproduce bitwise-identical centered values.  The result equals
    a direct summation in gravity-centered coordinates.
    """
    if rm.m0 <= 0:
        raise EmptyObjectError("cannot center moments of an empty object")
    s = Fraction(rm.m0)
    xg = Fraction(rm.mx) / s
    yg = Fraction(rm.my) / s
    mxx = rm.mxx - xg * xg * s
    mxy = rm.mxy - xg * yg * s
    myy = rm.myy - yg * yg * s
    mxxx = rm.mxxx - 3 * xg * rm.mxx + 2 * xg ** 3 * s
    mxxy = rm.mxxy - 2 * xg * rm.mxy - yg * rm.mxx + 2 * xg * xg * yg * s
    mxyy = rm.mxyy - 2 * yg * rm.mxy - xg * rm.myy + 2 * xg * yg * yg * s
    myyy = rm.myyy - 3 * yg * rm.myy + 2 * yg ** 3 * s
    return CenteredMoments(float(s), float(xg), float(yg),
                           float(mxx), float(mxy), float(myy),
                           float(mxxx), float(mxxy), float(mxyy), float(myyy))


def _eigen_direction(mxx: float, mxy: float, myy: float,
                     lambda1: float) -> tuple[float, float]:
    """Unit direction (cos, sin) of the main inertia axis, mod pi.

    Branches keep the computation numerically stable and make lattice
    rotations of the input land on exactly rotated directions.
    """
    if mxy == 0:
        return (1.0, 0.0) if mxx >= myy else (0.0, 1.0)
    if mxx >= myy:
        p, q = lambda1 - myy, mxy
    else:
        p, q = mxy, lambda1 - mxx
    r = math.hypot(p, q)
    return p / r, q / r


def principal_frame(cm: CenteredMoments) -> ShapeFeatures:
    """Rotate moments into the object's Eigen frame and fix its direction.

    lambda1/lambda2 come from the closed-form eigenvalues of the inertia
    matrix; theta is resolved mod pi from the eigenvector and mod 2*pi by
    forcing the main-axis asymmetry a30 to be non-negative, negating all
    four order-3 values when theta flips by pi.
    """
    half_trace = (cm.mxx + cm.myy) / 2.0
    root = math.hypot(cm.mxx - cm.myy, 2.0 * cm.mxy) / 2.0
    lambda1 = half_trace + root
    lambda2 = half_trace - root
    c, s = _eigen_direction(cm.mxx, cm.mxy, cm.myy, lambda1)
    a30, a21, a12, a03 = _rotate_order3(cm, c, s)
    theta = math.atan2(s, c) % (2.0 * math.pi)
    if a30 < 0:
        theta = (theta + math.pi) % (2.0 * math.pi)
        a30, a21, a12, a03 = -a30, -a21, -a12, -a03
    surface = cm.surface
    lambda2 = max(lambda2, 0.0)
    scale = 4.0 * math.sqrt(lambda1 / surface) if lambda1 > 0 else 0.0
    if scale > 0:
        norm3 = surface * scale ** 3
        invariants = (surface / scale ** 2, lambda2 / lambda1,
                      a30 / norm3, a03 / norm3)
    else:
        invariants = (0.0, 0.0, 0.0, 0.0)
    return ShapeFeatures(cm.xg, cm.yg, theta, lambda1, lambda2,
                         a30, a21, a12, a03, surface, scale, invariants)


def _rotate_order3(cm: CenteredMoments, c: float, s: float):
    """Order-3 moments in the frame rotated by (cos, sin) = (c, s).

    The products share a fixed association through the precomputed squares
    and every sum goes through fsum, so lattice rotations of the input,
    which permute and negate the terms, land on bitwise-identical values.
    """
    cc = c * c
    ss = s * s
    c3 = cc * c
    s3 = ss * s
    ccs = cc * s
    ssc = ss * c
    a30 = math.fsum((c3 * cm.mxxx, 3.0 * (ccs * cm.mxxy),
                     3.0 * (ssc * cm.mxyy), s3 * cm.myyy))
    a21 = math.fsum((-(ccs * cm.mxxx), c3 * cm.mxxy, -2.0 * (ssc * cm.mxxy),
                     2.0 * (ccs * cm.mxyy), -(s3 * cm.mxyy), ssc * cm.myyy))
    a12 = math.fsum((ssc * cm.mxxx, s3 * cm.mxxy, -2.0 * (ccs * cm.mxxy),
                     c3 * cm.mxyy, -2.0 * (ssc * cm.mxyy), ccs * cm.myyy))
    a03 = math.fsum((-(s3 * cm.mxxx), 3.0 * (ssc * cm.mxxy),
                     -3.0 * (ccs * cm.mxyy), c3 * cm.myyy))
    return a30, a21, a12, a03


def shape_features(rm: RawMoments, perimeter: float
                   ) -> tuple[ShapeFeatures, ComplementaryAttributes]:
    """Full feature chain: centering, principal frame, complementary values."""
    sf = principal_frame(center_moments(rm))
    compactness = perimeter * perimeter / sf.surface
    ecc = sf.lambda1 / sf.lambda2 if sf.lambda2 > 0 else math.inf
    return sf, ComplementaryAttributes(compactness, ecc)


def radiometric_attributes(support: Iterable[tuple[int, int]],
                           img: GreyImage) -> RadiometricStats:
    """Grey-level statistics over an object's support pixels."""
    values = np.array([img.data[y, x] for x, y in support], dtype=np.float64)
    if values.size == 0:
        raise EmptyObjectError("empty support")
    mean = float(values.mean())
    centered = values - mean
    var = float((centered ** 2).mean())
    sigma = math.sqrt(var)
    if sigma > 0:
        alpha = float((centered ** 3).mean()) / sigma ** 3
    else:
        alpha = 0.0
    return RadiometricStats(float(values.min()), float(values.max()),
                            mean, sigma, alpha)


def particle_stats(surfaces: Sequence[float]) -> ParticleStats:
    """Mean, dispersion and Gaussian asymmetry of an object size population."""
    if len(surfaces) == 0:
        raise EmptyListError("no surfaces")
    arr = np.asarray(surfaces, dtype=np.float64)
    mu = float(arr.mean())
    centered = arr - mu
    sigma = math.sqrt(float((centered ** 2).mean()))
    alpha = float((centered ** 3).mean()) / sigma ** 3 if sigma > 0 else 0.0
    return ParticleStats(mu, sigma, alpha)


def format_features(sf: ShapeFeatures) -> str:
    """One text row in the archive column order.

    Columns: center abscissa, center ordinate, angle in degrees, scale,
    then the four invariants (normalized surface, eccentricity and the two
    normalized asymmetries).
    """
    angle = math.degrees(sf.theta) % 360.0
    inv = sf.invariants
    return (f"{sf.xg:.3f} {sf.yg:.3f} {angle:.3f} {sf.scale:.3f} "
            f"{inv[0]:.6f} {inv[1]:.6f} {inv[2]:.6f} {inv[3]:.6f}")


def parse_features(row: str) -> tuple[float, ...]:
    parts = row.split()
    if len(parts) != 8:
        raise ValueError("feature row must have 8 columns")
    return tuple(float(p) for p in parts)
