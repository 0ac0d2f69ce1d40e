"""Image containers and pixel-level operations.

Grey-level images hold values in [0, max_grey]; label images hold class or
blob identifiers where 0 means NOT_ASSIGNED.  All operations are pure: they
take immutable inputs and return new images, so concurrent use on shared
inputs is safe.  Neighborhood operations work on a snapshot of the input
(no in-place cascading) and use only in-bounds neighbors at the border.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotBinaryError,
    TooSmallError,
    UnimodalError,
)

NOT_ASSIGNED = 0

#: Binary image encoding: objects take half the grey dynamic, background zero.
WHITE = 0


def black(max_grey: int = 255) -> int:
    """Object value of a binary image with the given grey dynamic."""
    return max_grey // 2


class Connectivity(enum.Enum):
    """Pixel adjacency: FOUR uses the d1 moves, EIGHT adds the diagonals."""

    FOUR = 4
    EIGHT = 8

    @property
    def offsets(self) -> tuple[tuple[int, int], ...]:
        if self is Connectivity.FOUR:
            return ((0, -1), (-1, 0), (1, 0), (0, 1))
        return ((-1, -1), (0, -1), (1, -1), (-1, 0),
                (1, 0), (-1, 1), (0, 1), (1, 1))


@dataclass(frozen=True)
class GreyImage:
    """Rectangular grid of grey levels, row-major, values in [0, max_grey]."""

    data: np.ndarray
    max_grey: int = 255

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise DimensionMismatchError("grey image data must be 2-D")
        if arr.size and (arr.min() < 0 or arr.max() > self.max_grey):
            raise ValueError("grey values outside [0, max_grey]")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def with_data(self, data: np.ndarray) -> "GreyImage":
        return GreyImage(data, self.max_grey)


@dataclass(frozen=True)
class LabelImage:
    """Grid of labels; 0 is the NOT_ASSIGNED sentinel, user labels start at 1."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise DimensionMismatchError("label image data must be 2-D")
        if arr.size and arr.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class Histogram1D:
    """Grey-level tallies; counts[g] is the number of sampled pixels at g."""

    counts: np.ndarray
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))


def compute_histogram(img: GreyImage, stride: int = 1) -> Histogram1D:
    """Tally grey levels over every stride-th pixel in row-major order.

    stride > 1 under-samples the image to cut histogram build time; the
    first pixel is always sampled.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    flat = img.data.reshape(-1)[::stride]
    counts = np.bincount(flat, minlength=img.max_grey + 1)
    return Histogram1D(counts[: img.max_grey + 1], stride)


def _local_maxima(values: np.ndarray) -> list[int]:
    """Indices of local maxima; a plateau yields its first index only."""
    n = len(values)
    maxima = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[j + 1] == values[i]:
            j += 1
        left_ok = i == 0 or values[i - 1] < values[i]
        right_ok = j == n - 1 or values[j + 1] < values[i]
        if left_ok and right_ok and values[i] > 0:
            # whole-array plateaus are not modes
            if not (i == 0 and j == n - 1):
                maxima.append(i)
        i = j + 1
    return maxima


def find_valley_threshold(h: Histogram1D, smooth_window: int = 5,
                          object_mode: str = "minor") -> int:
    """Grey level of the valley between the two dominant histogram modes.

    The histogram is smoothed with a centered moving average of width
    smooth_window, the two highest surviving local maxima are located and
    the minimum count strictly between them is returned.  Tied minima are
    broken toward the object mode: the lower-count of the two modes when
    object_mode is "minor" (bright object on dark background scenes), the
    higher-count one when "major".

    Raises UnimodalError when fewer than two maxima survive smoothing.
    """
    if smooth_window < 1 or smooth_window % 2 == 0:
        raise ValueError("smooth_window must be odd and positive")
    if object_mode not in ("minor", "major"):
        raise ValueError("object_mode must be 'minor' or 'major'")
    counts = h.counts.astype(np.float64)
    if counts.size == 0:
        raise UnimodalError("empty histogram")
    kernel = np.ones(smooth_window) / smooth_window
    smoothed = np.convolve(counts, kernel, mode="same")
    maxima = _local_maxima(smoothed)
    if len(maxima) < 2:
        raise UnimodalError("fewer than two modes after smoothing")
    # two highest modes, ties toward lower grey
    top = sorted(maxima, key=lambda g: (-smoothed[g], g))[:2]
    m1, m2 = sorted(top)
    between = smoothed[m1 + 1: m2]
    if between.size == 0:
        raise UnimodalError("adjacent modes leave no valley")
    vmin = between.min()
    valleys = [g for g in range(m1 + 1, m2) if smoothed[g] == vmin]
    if smoothed[m1] == smoothed[m2]:
        obj = m1 if object_mode == "minor" else m2
    elif object_mode == "minor":
        obj = m1 if smoothed[m1] < smoothed[m2] else m2
    else:
        obj = m1 if smoothed[m1] > smoothed[m2] else m2
    return min(valleys, key=lambda g: (abs(g - obj), g))


def binarize(img: GreyImage, threshold: int) -> GreyImage:
    """Two-level image: pixels above threshold become max_grey//2, others 0."""
    if not 0 <= threshold <= img.max_grey:
        raise ValueError("threshold outside grey range")
    out = np.where(img.data > threshold, black(img.max_grey), WHITE)
    return img.with_data(out.astype(img.data.dtype))


def draw_frame(img, background: int):
    """Return a copy whose first/last row and column carry the background value."""
    if img.width < 2 or img.height < 2:
        raise TooSmallError("frame needs width and height >= 2")
    out = img.data.copy()
    out[0, :] = background
    out[-1, :] = background
    out[:, 0] = background
    out[:, -1] = background
    if isinstance(img, GreyImage):
        return img.with_data(out)
    return LabelImage(out)


def _neighbor_label_counts(data: np.ndarray, x: int, y: int,
                           conn: Connectivity) -> dict[int, int]:
    h, w = data.shape
    counts: dict[int, int] = {}
    for dx, dy in conn.offsets:
        nx, ny = x + dx, y + dy
        if 0 <= nx < w and 0 <= ny < h:
            lab = int(data[ny, nx])
            if lab != NOT_ASSIGNED:
                counts[lab] = counts.get(lab, 0) + 1
    return counts


def _majority(counts: dict[int, int]) -> tuple[int, int]:
    """(label, count) of the most frequent label, smallest label on ties."""
    best_label, best_count = NOT_ASSIGNED, 0
    for lab in sorted(counts):
        if counts[lab] > best_count:
            best_label, best_count = lab, counts[lab]
    return best_label, best_count


def median_filter(img: LabelImage, conn: Connectivity) -> LabelImage:
    """Replace each pixel by its dominant assigned neighbor label.

    The replacement only happens when that dominant count strictly exceeds
    the count of the pixel's own label among its neighbors; NOT_ASSIGNED
    neighbors never vote.  Computed on a snapshot so the result does not
    depend on scan order.
    """
    src = img.data
    out = src.copy()
    h, w = src.shape
    for y in range(h):
        for x in range(w):
            counts = _neighbor_label_counts(src, x, y, conn)
            if not counts:
                continue
            best_label, best_count = _majority(counts)
            own = counts.get(int(src[y, x]), 0)
            if best_count > own:
                out[y, x] = best_label
    return LabelImage(out)


def extend_labels(img: LabelImage, conn: Connectivity) -> LabelImage:
    """Grow assigned labels into NOT_ASSIGNED pixels until nothing changes.

    Each pass assigns every unassigned pixel the majority label of its
    assigned neighbors, evaluated on the pass's starting snapshot; pixels
    with no assigned neighbor wait for a later pass.
    """
    cur = img.data.copy()
    h, w = cur.shape
    while True:
        nxt = cur.copy()
        modified = 0
        for y in range(h):
            for x in range(w):
                if cur[y, x] != NOT_ASSIGNED:
                    continue
                counts = _neighbor_label_counts(cur, x, y, conn)
                if counts:
                    nxt[y, x], _ = _majority(counts)
                    modified += 1
        cur = nxt
        if modified == 0:
            return LabelImage(cur)


def split_to_binary(img: LabelImage, label: int, max_grey: int = 255) -> GreyImage:
    """Binary image of one label: its pixels BLACK, every other pixel WHITE."""
    if label < 1:
        raise ValueError("label must be >= 1")
    out = np.where(img.data == label, black(max_grey), WHITE)
    return GreyImage(out.astype(np.int32), max_grey)


class MorphOp(enum.Enum):
    ERODE = "erode"
    DILATE = "dilate"
    THIN = "thin"


def _check_binary(img: GreyImage) -> int:
    b = black(img.max_grey)
    values = np.unique(img.data)
    for v in values:
        if v not in (WHITE, b):
            raise NotBinaryError(f"value {v} is neither WHITE nor BLACK")
    return b


def _erode(data: np.ndarray, b: int, conn: Connectivity) -> np.ndarray:
    h, w = data.shape
    out = data.copy()
    for y in range(h):
        for x in range(w):
            if data[y, x] != b:
                continue
            whites = blacks = 0
            for dx, dy in conn.offsets:
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h:
                    if data[ny, nx] == b:
                        blacks += 1
                    else:
                        whites += 1
            if whites > blacks:
                out[y, x] = WHITE
    return out


def _dilate(data: np.ndarray, b: int, conn: Connectivity) -> np.ndarray:
    h, w = data.shape
    out = data.copy()
    for y in range(h):
        for x in range(w):
            if data[y, x] != WHITE:
                continue
            whites = blacks = 0
            for dx, dy in conn.offsets:
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h:
                    if data[ny, nx] == b:
                        blacks += 1
                    else:
                        whites += 1
            if blacks > whites:
                out[y, x] = b
    return out


def _is_white(data: np.ndarray, x: int, y: int) -> bool:
    """WHITE test with out-of-bounds counting as absent, never white."""
    h, w = data.shape
    return 0 <= x < w and 0 <= y < h and data[y, x] == WHITE


def _thin_pass(data: np.ndarray, b: int, triggers) -> np.ndarray:
    h, w = data.shape
    out = data.copy()
    for y in range(h):
        for x in range(w):
            if data[y, x] != b:
                continue
            if not any(_is_white(data, x + dx, y + dy) for dx, dy in triggers):
                continue
            x_median = _is_white(data, x - 1, y) and _is_white(data, x + 1, y)
            y_median = _is_white(data, x, y - 1) and _is_white(data, x, y + 1)
            if not x_median and not y_median:
                out[y, x] = WHITE
    return out


def morphology(img: GreyImage, mode: MorphOp, conn: Connectivity) -> GreyImage:
    """Binary erosion, dilation or thinning.

    Erode flips BLACK pixels whose WHITE neighbor count exceeds their BLACK
    one; Dilate is the exact dual.  Thin runs two directional passes (first
    deleting pixels west- or south-connected to background, then east- or
    north-connected), each on its own snapshot, and never deletes a median
    point: a BLACK pixel whose west/east neighbors are both WHITE or whose
    north/south neighbors are both WHITE.
    """
    b = _check_binary(img)
    if mode is MorphOp.ERODE:
        return img.with_data(_erode(img.data, b, conn))
    if mode is MorphOp.DILATE:
        return img.with_data(_dilate(img.data, b, conn))
    first = _thin_pass(img.data, b, ((-1, 0), (0, 1)))
    second = _thin_pass(first, b, ((1, 0), (0, -1)))
    return img.with_data(second)


def invert(img: GreyImage) -> GreyImage:
    """Swap BLACK and WHITE in a binary image."""
    b = _check_binary(img)
    out = np.where(img.data == b, WHITE, b)
    return img.with_data(out.astype(img.data.dtype))


def compose_union(points: LabelImage, lines: LabelImage,
                  polygons: LabelImage) -> LabelImage:
    """Pixel-wise union of the three blob kinds, points over lines over polygons."""
    if not (points.data.shape == lines.data.shape == polygons.data.shape):
        raise DimensionMismatchError("blob images must share dimensions")
    out = polygons.data.copy()
    mask = lines.data != NOT_ASSIGNED
    out[mask] = lines.data[mask]
    mask = points.data != NOT_ASSIGNED
    out[mask] = points.data[mask]
    return LabelImage(out)
