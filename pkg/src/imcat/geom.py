"""Planar polynomial transformations fit from control-point pairs.

A transform of order k maps (p, q) to (r, s) through two polynomials over
the monomials p^i q^j with i+j <= k, fit by least squares on a set of
control-point pairs.  Fitting happens in a [-1, 1]-normalized frame for
conditioning; the stored coefficients are de-normalized back to the raw
frame, so evaluation needs no bookkeeping.  Image warping resamples by
nearest neighbor through the inverse transform, which avoids the holes a
forward scatter would leave (the forward mode stays available).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotInvertibleError,
    RankDeficientError,
    TooFewPointsError,
)
from .raster import GreyImage, LabelImage, NOT_ASSIGNED
from .vectorize import Polyline


def monomials(order: int) -> list[tuple[int, int]]:
    """Exponent pairs (i, j), i+j <= order, in the a00, a10, a01, ... listing."""
    out = []
    for total in range(order + 1):
        for j in range(total + 1):
            out.append((total - j, j))
    return out


@dataclass(frozen=True)
class ControlPointSet:
    """Paired source (p, q) and target (r, s) coordinates."""

    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.source, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        if src.shape != tgt.shape or src.ndim != 2 or src.shape[1] != 2:
            raise DimensionMismatchError("control points must be (n, 2) pairs")
        if len(np.unique(src, axis=0)) != len(src):
            raise ValueError("duplicate source control points")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)

    def swapped(self) -> "ControlPointSet":
        return ControlPointSet(self.target, self.source)

    def __len__(self) -> int:
        return len(self.source)


@dataclass(frozen=True)
class PolyTransform2D:
    """Fitted polynomial map; a and b are the r- and s-coefficient vectors."""

    order: int
    a: np.ndarray
    b: np.ndarray
    rms: float = 0.0

    def __post_init__(self):
        expected = (self.order + 1) * (self.order + 2) // 2
        if len(self.a) != expected or len(self.b) != expected:
            raise DimensionMismatchError("coefficient count does not match order")


def _design_matrix(pts: np.ndarray, order: int) -> np.ndarray:
    cols = [pts[:, 0] ** i * pts[:, 1] ** j for i, j in monomials(order)]
    return np.stack(cols, axis=1)


def fit_transform(cps: ControlPointSet, order: int) -> PolyTransform2D:
    """Least-squares fit of the order-k polynomial map.

    Solves with the orthogonal-factorization path (the result matches the
    normal-equation pseudo-inverse to working precision); raises
    RankDeficientError when the design matrix loses column rank and
    TooFewPointsError when there are fewer pairs than monomials.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    n_mono = (order + 1) * (order + 2) // 2
    if len(cps) < n_mono:
        raise TooFewPointsError(f"need at least {n_mono} control points")
    src = cps.source
    tgt = cps.target
    # normalize sources into [-1, 1] for conditioning
    lo = src.min(axis=0)
    hi = src.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    center = (hi + lo) / 2.0
    scale = 2.0 / span
    norm = (src - center) * scale
    design = _design_matrix(norm, order)
    if np.linalg.matrix_rank(design) < n_mono:
        raise RankDeficientError("design matrix rank deficient")
    coef, *_ = np.linalg.lstsq(design, tgt, rcond=None)
    a_norm, b_norm = coef[:, 0], coef[:, 1]
    a = _denormalize(a_norm, order, center, scale)
    b = _denormalize(b_norm, order, center, scale)
    t = PolyTransform2D(order, a, b, 0.0)
    pred = apply_points(t, src)
    rms = math.sqrt(float(((pred - tgt) ** 2).sum(axis=1).mean()))
    return PolyTransform2D(order, a, b, rms)


def _denormalize(coef: np.ndarray, order: int, center, scale) -> np.ndarray:
    """Re-express coefficients over raw p, q given p_n = (p - cp) * sp."""
    mono = monomials(order)
    index = {m: k for k, m in enumerate(mono)}
    out = np.zeros(len(mono))
    cp, cq = center
    sp, sq = scale
    for (i, j), c in zip(mono, coef):
        # (sp*(p - cp))^i (sq*(q - cq))^j expanded binomially
        for u in range(i + 1):
            for v in range(j + 1):
                term = (c * sp ** i * sq ** j
                        * math.comb(i, u) * (-cp) ** (i - u)
                        * math.comb(j, v) * (-cq) ** (j - v))
                out[index[(u, v)]] += term
    return out


def apply_point(t: PolyTransform2D, p: float, q: float) -> tuple[float, float]:
    """Evaluate the polynomial map at one point."""
    r = s = 0.0
    for (i, j), ca, cb in zip(monomials(t.order), t.a, t.b):
        m = p ** i * q ** j
        r += ca * m
        s += cb * m
    return r, s


def apply_points(t: PolyTransform2D, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    design = _design_matrix(pts, t.order)
    return np.stack([design @ t.a, design @ t.b], axis=1)


def fit_transform_pair(cps: ControlPointSet, order: int
                       ) -> tuple[PolyTransform2D, PolyTransform2D]:
    """Fit the direct transform together with its inverse (swapped pairs)."""
    return fit_transform(cps, order), fit_transform(cps.swapped(), order)


def transform_polyline(t: PolyTransform2D, pl: Polyline) -> Polyline:
    """Map every vertex, preserving order and closedness."""
    pts = apply_points(t, np.array(pl.vertices))
    return Polyline(tuple((float(x), float(y)) for x, y in pts), pl.closed)


def warp_image(inverse: PolyTransform2D, img, target_size: tuple[int, int],
               background: int = 0, check: ControlPointSet | None = None,
               tolerance: float = 0.5):
    """Resample an image into the target frame by inverse nearest-neighbor.

    inverse maps target coordinates back to source ones; each target pixel
    copies the nearest source pixel or the background value outside the
    source footprint.  When the fitted pair used for the warp is supplied
    through check, a round trip through the control points exceeding
    tolerance raises NotInvertibleError.
    """
    if check is not None:
        back = apply_points(inverse, check.target)
        err = np.abs(back - check.source).max()
        if err > tolerance:
            raise NotInvertibleError(f"inverse round-trip error {err:.3g}")
    w, h = target_size
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    pts = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1).astype(np.float64)
    src = apply_points(inverse, pts)
    sx = np.rint(src[:, 0]).astype(np.int64)
    sy = np.rint(src[:, 1]).astype(np.int64)
    inside = (0 <= sx) & (sx < img.width) & (0 <= sy) & (sy < img.height)
    out = np.full(h * w, background, dtype=img.data.dtype)
    out[inside] = img.data[sy[inside], sx[inside]]
    out = out.reshape(h, w)
    if isinstance(img, GreyImage):
        return GreyImage(out, img.max_grey)
    return LabelImage(out)


def warp_image_forward(t: PolyTransform2D, img, target_size: tuple[int, int],
                       background: int = 0):
    """Forward-scatter warp kept for fidelity experiments; may leave holes."""
    w, h = target_size
    out = np.full((h, w), background, dtype=img.data.dtype)
    xs, ys = np.meshgrid(np.arange(img.width), np.arange(img.height))
    pts = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1).astype(np.float64)
    dst = apply_points(t, pts)
    dx = np.rint(dst[:, 0]).astype(np.int64)
    dy = np.rint(dst[:, 1]).astype(np.int64)
    inside = (0 <= dx) & (dx < w) & (0 <= dy) & (dy < h)
    out[dy[inside], dx[inside]] = img.data.reshape(-1)[inside]
    if isinstance(img, GreyImage):
        return GreyImage(out, img.max_grey)
    return LabelImage(out)


def transform_to_text(t: PolyTransform2D) -> str:
    a_row = " ".join(repr(float(v)) for v in t.a)
    b_row = " ".join(repr(float(v)) for v in t.b)
    return f"order {t.order}\n{a_row}\n{b_row}\n"


def transform_from_text(text: str) -> PolyTransform2D:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) != 3 or not lines[0].startswith("order "):
        raise ValueError("malformed transform block")
    order = int(lines[0].split()[1])
    a = np.array([float(v) for v in lines[1].split()])
    b = np.array([float(v) for v in lines[2].split()])
    return PolyTransform2D(order, a, b)


def identity_transform() -> PolyTransform2D:
    return PolyTransform2D(1, np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))
