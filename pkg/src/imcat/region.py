"""Region-based analysis: blob labeling and per-blob measurements.

Blobs are maximal iso-label connected components of a label image.  The
labeling pass assigns provisional ids from already-visited neighbors and
merges them through an equivalence table resolved to a fixed point, then
recolors to the dense range 1..n.  Attribute scans derive each blob's
intrinsic dimension, bounding box, perimeter and raw moments; a per-row
stack scan recovers which blob directly contains which.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BrokenContourError
from .moments import RawMoments
from .raster import Connectivity, LabelImage, NOT_ASSIGNED


@dataclass
class BlobRecord:
    """Attributes of one blob; moments are exact integer power sums."""

    blob_id: int
    dimension: int = 0
    xmin: int = 0
    xmax: int = 0
    ymin: int = 0
    ymax: int = 0
    perimeter: int = 0
    moments: RawMoments = field(default_factory=RawMoments)
    father: int = NOT_ASSIGNED


class BlobTable(dict):
    """blob id -> BlobRecord."""

    def as_text(self) -> str:
        rows = []
        for bid in sorted(self):
            r = self[bid]
            m = r.moments
            rows.append(
                f"{bid} {r.dimension} {r.xmin} {r.xmax} {r.ymin} {r.ymax} "
                f"{r.perimeter} {m.m0} {m.mx} {m.my} {m.mxx} {m.mxy} {m.myy} "
                f"{m.mxxx} {m.mxxy} {m.mxyy} {m.myyy} {r.father}")
        return "\n".join(rows)


class EquivalenceTable:
    """Union-find over provisional blob ids, 1-based."""

    def __init__(self):
        self.equivalent = [0]

    def new_blob(self) -> int:
        self.equivalent.append(len(self.equivalent))
        return len(self.equivalent) - 1

    def find(self, blob: int) -> int:
        root = blob
        while self.equivalent[root] != root:
            root = self.equivalent[root]
        while self.equivalent[blob] != root:
            self.equivalent[blob], blob = root, self.equivalent[blob]
        return root

    def merge(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller root wins so recoloring is scan-order independent
            if ra < rb:
                self.equivalent[rb] = ra
            else:
                self.equivalent[ra] = rb

    def resolve(self) -> None:
        for blob in range(1, len(self.equivalent)):
            self.equivalent[blob] = self.find(blob)


def segment_blobs(img: LabelImage, conn: Connectivity) -> tuple[LabelImage, int]:
    """Label iso-color connected components.

    Single pass over the image: each assigned pixel takes the blob of an
    iso-label visited neighbor (west/north, plus the diagonals for
    8-connectivity) or opens a new blob; all iso-label visited neighbors
    are merged in the equivalence table, which is then resolved and the
    blob ids recolored to the dense range 1..count.
    """
    data = img.data
    h, w = data.shape
    blobs = np.zeros((h, w), dtype=np.int64)
    table = EquivalenceTable()
    if conn is Connectivity.FOUR:
        predecessors = ((-1, 0), (0, -1))
    else:
        predecessors = ((-1, -1), (0, -1), (1, -1), (-1, 0))
    for y in range(h):
        for x in range(w):
            color = data[y, x]
            if color == NOT_ASSIGNED:
                continue
            hits = []
            for dx, dy in predecessors:
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and data[ny, nx] == color:
                    b = blobs[ny, nx]
                    if b:
                        hits.append(b)
            if not hits:
                blobs[y, x] = table.new_blob()
            else:
                blobs[y, x] = hits[0]
                for other in hits[1:]:
                    table.merge(hits[0], other)
    table.resolve()
    # recolor to dense ids
    roots = sorted({table.equivalent[b] for b in range(1, len(table.equivalent))})
    dense = {root: i + 1 for i, root in enumerate(roots)}
    out = np.zeros((h, w), dtype=np.int64)
    nz = blobs != 0
    if nz.any():
        lut = np.zeros(len(table.equivalent), dtype=np.int64)
        for b in range(1, len(table.equivalent)):
            lut[b] = dense[table.equivalent[b]]
        out[nz] = lut[blobs[nz]]
    return LabelImage(out), len(roots)


def blob_attributes(bi: LabelImage, conn: Connectivity) -> BlobTable:
    """Dimension, bounding box, perimeter and raw moments of every blob.

    A pixel's dimension starts at 2 and loses one per axis on which both
    axis neighbors leave the blob; the blob keeps the maximum over its
    pixels.  The perimeter counts pixels with an assigned 8-neighbor of a
    different blob.  The image border acts as NOT_ASSIGNED.
    """
    data = bi.data
    h, w = data.shape
    table = BlobTable()

    def at(x, y):
        if 0 <= x < w and 0 <= y < h:
            return data[y, x]
        return NOT_ASSIGNED

    eight = Connectivity.EIGHT.offsets
    for y in range(h):
        for x in range(w):
            blob = data[y, x]
            if blob == NOT_ASSIGNED:
                continue
            rec = table.get(blob)
            if rec is None:
                rec = BlobRecord(int(blob), dimension=-1,
                                 xmin=x, xmax=x, ymin=y, ymax=y)
                table[int(blob)] = rec
            dim = 2
            if at(x - 1, y) != blob and at(x + 1, y) != blob:
                dim -= 1
            if at(x, y - 1) != blob and at(x, y + 1) != blob:
                dim -= 1
            if dim > rec.dimension:
                rec.dimension = dim
            rec.xmin = min(rec.xmin, x)
            rec.xmax = max(rec.xmax, x)
            rec.ymin = min(rec.ymin, y)
            rec.ymax = max(rec.ymax, y)
            for dx, dy in eight:
                n = at(x + dx, y + dy)
                if n != NOT_ASSIGNED and n != blob:
                    rec.perimeter += 1
                    break
            rec.moments += RawMoments(
                1, x, y, x * x, x * y, y * y,
                x * x * x, x * x * y, x * y * y, y * y * y)
    return table


def blob_inclusion(bi: LabelImage, table: BlobTable) -> None:
    """Fill the father field: which blob directly contains which.

    Per-row stack scan: entering a new blob pushes it; coming back to the
    blob under the stack top pops and assigns the popped blob's father.
    A later pass may re-assign only when the present father's own father
    is the new candidate, which repairs adjacent-but-not-nested firsts.
    """
    data = bi.data
    h, w = data.shape
    father = {bid: NOT_ASSIGNED for bid in table}

    def assign(prev, blob):
        if father.get(prev, NOT_ASSIGNED) == NOT_ASSIGNED:
            if prev in father:
                father[prev] = int(blob)
        elif father.get(father[prev], NOT_ASSIGNED) == blob:
            father[prev] = int(blob)

    for y in range(h):
        previous = NOT_ASSIGNED
        stack = [NOT_ASSIGNED]
        for x in range(w):
            blob = int(data[y, x])
            if blob == previous:
                continue
            if len(stack) >= 2 and stack[-2] == blob:
                stack.pop()
                if father.get(previous, NOT_ASSIGNED) != blob:
                    assign(previous, blob)
            else:
                stack.append(blob)
            previous = blob
    for bid, f in father.items():
        table[bid].father = f


def extract_boundaries(bi: LabelImage) -> LabelImage:
    """Erase interior pixels, keeping those with a 4-neighbor outside the blob.

    A missing or NOT_ASSIGNED neighbor counts as outside, so isolated
    blobs keep their full outline.
    """
    data = bi.data
    h, w = data.shape
    out = data.copy()
    for y in range(h):
        for x in range(w):
            blob = data[y, x]
            if blob == NOT_ASSIGNED:
                continue
            boundary = False
            for dx, dy in Connectivity.FOUR.offsets:
                nx, ny = x + dx, y + dy
                if not (0 <= nx < w and 0 <= ny < h) or data[ny, nx] != blob:
                    boundary = True
                    break
            if not boundary:
                out[y, x] = NOT_ASSIGNED
    return LabelImage(out)


def trace_contour(boundary: LabelImage, blob_id: int, xmin: int | None = None,
                  ymin: int | None = None) -> list[tuple[int, int]]:
    """Ordered outer contour of a blob in a boundary image.

    Starts at the first blob pixel of row ymin scanning right from xmin
    (both looked up when not given), then repeatedly consumes a
    4-connected pixel of the same blob (east, south, west, north
    preference) until none remains.  Raises BrokenContourError if
    unconsumed pixels of the blob are left over (they were reachable only
    through 8-connected necks).
    """
    data = boundary.data.copy()
    h, w = data.shape
    if xmin is None or ymin is None:
        ys, xs = np.nonzero(data == blob_id)
        if len(ys) == 0:
            raise BrokenContourError(f"blob {blob_id} absent")
        ymin = int(ys.min())
        xmin = int(xs.min())
    x, y = xmin, ymin
    while x < w and data[y, x] != blob_id:
        x += 1
    if x >= w:
        raise BrokenContourError(f"blob {blob_id} absent from row {ymin}")
    remaining = int((data == blob_id).sum())
    points = [(x, y)]
    data[y, x] = NOT_ASSIGNED
    remaining -= 1
    moves = ((1, 0), (0, 1), (-1, 0), (0, -1))
    while True:
        for dx, dy in moves:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and data[ny, nx] == blob_id:
                x, y = nx, ny
                points.append((x, y))
                data[y, x] = NOT_ASSIGNED
                remaining -= 1
                break
        else:
            break
    if remaining:
        raise BrokenContourError(
            f"blob {blob_id}: {remaining} pixels unreachable by 4-connected moves")
    return points


def filter_by_dimension(bi: LabelImage, table: BlobTable, keep: bool,
                        dim: int) -> LabelImage:
    """Keep (or exclude) the pixels of blobs having a given intrinsic dimension."""
    data = bi.data
    out = data.copy()
    match = {bid for bid, rec in table.items() if rec.dimension == dim}
    for y in range(data.shape[0]):
        for x in range(data.shape[1]):
            blob = data[y, x]
            if blob == NOT_ASSIGNED:
                continue
            inside = blob in match
            if keep != inside:
                out[y, x] = NOT_ASSIGNED
    return LabelImage(out)


def mask_unassigned(bi: LabelImage, masks) -> LabelImage:
    """Drop blob pixels that are BLACK in none of the per-label binary masks."""
    out = bi.data.copy()
    covered = np.zeros(bi.data.shape, dtype=bool)
    for mask in masks:
        covered |= mask.data != 0
    out[~covered] = NOT_ASSIGNED
    return LabelImage(out)
