"""Boundary representation: transition lists, contour cycles, contour stats.

An object boundary is represented by two lists: row transitions, recorded
where the thresholded value changes sign between horizontal neighbors, and
column transitions for vertical neighbors.  A transition sits on the
background-adjacent pixel (rising: the pixel before the object, falling:
the pixel after it), so the chained points form an outer ring one pixel
outside the object.  Transitions of one row or column are linked in scan
order; contour following threads all of them into closed cycles by probing,
in order, the central point, the 4-connected and the 8-connected neighbor
slots of the current transition.

Coordinate bookkeeping of the per-row statistics: an object cycle's row
span runs between a rising and a falling transition, so its own pixels are
the ones strictly between; a hole cycle's span runs falling-to-rising over
the background pixels of the hole, endpoints included.  A per-row nesting
stack hands every pixel run to the innermost cycle that owns it, which
makes each cycle's surface the exact pixel count of its object (or hole),
verifiable against flood fill.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CycleOverflowError,
    UnbalancedError,
    UnframedError,
)
from .raster import GreyImage


class Background(enum.Enum):
    DARK = "dark"
    BRIGHT = "bright"


@dataclass
class TransitionSet:
    """Row and column transition lists with their scan-order chains.

    Arrays are 1-based with index 0 as the NULL sentinel.  Global ids
    1..n_row are row transitions, n_row+1..n_row+n_col column ones.
    """

    width: int
    height: int
    max_grey: int
    threshold: int
    background: Background
    n_row: int = 0
    n_col: int = 0
    way: list[int] = field(default_factory=lambda: [0])
    abs_: list[int] = field(default_factory=lambda: [0])
    ord_: list[int] = field(default_factory=lambda: [0])
    succ: list[int] = field(default_factory=lambda: [0])
    row_root: list[int] = field(default_factory=list)
    col_root: list[int] = field(default_factory=list)

    def is_row(self, tid: int) -> bool:
        return 1 <= tid <= self.n_row

    @property
    def count(self) -> int:
        return self.n_row + self.n_col

    def row_chain(self, y: int) -> list[int]:
        out = []
        t = self.row_root[y]
        while t:
            out.append(t)
            t = self.succ[t]
        return out


@dataclass
class CycleSet:
    """Closed transition chains; one per object or hole boundary.

    object_flag keeps the tristate bookkeeping of the statistics scan:
    True for a live top-level cycle, a container cycle id once the cycle
    is found nested, False once discarded.
    """

    roots: list[int] = field(default_factory=list)
    succ: list[int] = field(default_factory=list)
    cycle_of: list[int] = field(default_factory=list)
    closed: list[bool] = field(default_factory=list)
    object_flag: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.roots)

    def transitions_of(self, cycle_id: int) -> list[int]:
        root = self.roots[cycle_id - 1]
        out = [root]
        t = self.succ[root]
        while t and t != root and len(out) <= len(self.succ):
            out.append(t)
            t = self.succ[t]
        return out


@dataclass
class ContourStats:
    """Per-cycle perimeter, mass, first-moment sums and direct container."""

    perimeter: list[int]
    surface: list[int]
    gx_sum: list[int]
    gy_sum: list[int]
    container: list


@dataclass
class ConvexProfile:
    """Per-row extreme transitions and their convexity flags."""

    way: list[int]
    abs_: list[int]
    ord_: list[int]
    is_convex: list[bool]

    @property
    def count(self) -> int:
        return len(self.way)


def scan_transitions(img: GreyImage, threshold: int,
                     background: Background = Background.DARK) -> TransitionSet:
    """Extract the row and column transition lists of a thresholded image.

    The image must be framed so no object pixel touches the border
    (UnframedError otherwise).  A transition exists wherever the sign of
    (pixel - threshold) flips between neighbors; its way is the grey
    difference oriented so entering an object is positive.
    """
    data = img.data.astype(np.int64)
    h, w = data.shape
    border = np.concatenate([data[0, :], data[-1, :], data[:, 0], data[:, -1]])
    if background is Background.DARK:
        if (border > threshold).any():
            raise UnframedError("border pixel above threshold on dark background")
    else:
        if (border < threshold).any():
            raise UnframedError("border pixel below threshold on bright background")

    ts = TransitionSet(w, h, img.max_grey, threshold, background)
    rel = data - threshold
    sign = 1 if background is Background.DARK else -1

    # row transitions: between (y, c) and (y, c+1), scanned row-major
    mark = (rel[:, :-1] * rel[:, 1:]) < 0
    ys, cs = np.nonzero(mark)
    ways = sign * (data[ys, cs + 1] - data[ys, cs])
    abss = np.where(ways > 0, cs, cs + 1)
    ts.n_row = len(ys)
    ts.way.extend(int(v) for v in ways)
    ts.abs_.extend(int(v) for v in abss)
    ts.ord_.extend(int(v) for v in ys)

    # column transitions: between (r, x) and (r+1, x), scanned column-major
    markc = (rel[:-1, :] * rel[1:, :]) < 0
    xs, rs = np.nonzero(markc.T)
    waysc = sign * (data[rs + 1, xs] - data[rs, xs])
    ordsc = np.where(waysc > 0, rs, rs + 1)
    ts.n_col = len(xs)
    ts.way.extend(int(v) for v in waysc)
    ts.abs_.extend(int(v) for v in xs)
    ts.ord_.extend(int(v) for v in ordsc)

    ts.succ = [0] * (ts.count + 1)
    ts.row_root = [0] * h
    prev_key = None
    prev_tid = 0
    for i, y in enumerate(ys):
        tid = i + 1
        if prev_key == y:
            ts.succ[prev_tid] = tid
        else:
            ts.row_root[int(y)] = tid
        prev_key, prev_tid = y, tid
    ts.col_root = [0] * w
    prev_key = None
    for i, x in enumerate(xs):
        tid = ts.n_row + i + 1
        if prev_key == x:
            ts.succ[prev_tid] = tid
        else:
            ts.col_root[int(x)] = tid
        prev_key, prev_tid = x, tid
    return ts


def _scrutinize(ts: TransitionSet, row_axis: bool, chain_index: int,
                target: int, want_positive: bool) -> int:
    """Walk one chain for a transition at the target coordinate and way sign.

    The head pointer first aligns on the requested way parity, then steps
    two transitions at a time (ways alternate along a chain), exactly the
    double advance of the border-following pseudocode.
    """
    if row_axis:
        if not 0 <= chain_index < ts.height:
            return 0
        pointer = ts.row_root[chain_index]
        coord = ts.abs_
    else:
        if not 0 <= chain_index < ts.width:
            return 0
        pointer = ts.col_root[chain_index]
        coord = ts.ord_
    if pointer and (ts.way[pointer] > 0) != want_positive:
        pointer = ts.succ[pointer]
    while pointer and coord[pointer] < target:
        pointer = ts.succ[pointer]
        if pointer:
            pointer = ts.succ[pointer]
    if pointer and coord[pointer] == target and (ts.way[pointer] > 0) == want_positive:
        return pointer
    return 0


def _probes(ts: TransitionSet, tid: int):
    """Probe slots of a transition: central, then 4-connected, then 8-connected.

    Each yields (row_axis, chain_index, target_coordinate, want_positive).
    Directions depend on the transition's way: rising left-side edges walk
    up and corner over the top, falling right-side edges walk down and
    corner under the bottom, so every boundary threads into one loop.
    """
    a = ts.abs_[tid]
    o = ts.ord_[tid]
    w = 1 if ts.way[tid] > 0 else -1
    if ts.is_row(tid):
        yield (False, a, o, w < 0)          # central: column list, opposite way
        yield (True, o - w, a, w > 0)       # 4-connected: row above/below
        yield (False, a + w, o - w, w > 0)  # 8-connected: diagonal column slot
    else:
        yield (True, o, a, w > 0)           # central: row list, same way
        yield (False, a + w, o, w > 0)      # 4-connected: column right/left
        yield (True, o + w, a + w, w < 0)   # 8-connected: diagonal row slot


def follow_contours(ts: TransitionSet, max_cycles: int = 4096) -> CycleSet:
    """Thread every transition into its boundary cycle.

    Cycle beginnings are searched among row transitions in storage order;
    from each, the probe slots are followed until the walk returns to the
    root (a closed cycle) or dead-ends (a degenerate open chain, kept and
    later invalidated by the zero-mass rule).
    """
    cs = CycleSet(succ=[0] * (ts.count + 1), cycle_of=[0] * (ts.count + 1))
    for start in range(1, ts.n_row + 1):
        if cs.succ[start]:
            continue
        if cs.count >= max_cycles:
            raise CycleOverflowError(f"more than {max_cycles} cycles")
        cycle_id = cs.count + 1
        cs.roots.append(start)
        closed = False
        pointer = start
        while True:
            current = pointer
            found = 0
            for row_axis, chain_index, target, want in _probes(ts, current):
                found = _scrutinize(ts, row_axis, chain_index, target, want)
                if found:
                    break
            if not found:
                break
            cs.succ[current] = found
            cs.cycle_of[current] = cycle_id
            if cs.succ[found]:
                closed = found == start
                break
            pointer = found
        cs.closed.append(closed)
        cs.object_flag.append(True)
    return cs


def _row_runs(ts: TransitionSet, cs: CycleSet):
    """Pixel runs per row with their owning cycle, plus the containment map.

    Walks each row chain with a nesting stack: a rising transition of an
    object cycle or a falling one of a hole cycle opens that cycle, its
    mirror closes it.  Object runs (after a rising transition) lie
    strictly between the transition points and belong to the innermost
    open object cycle; background runs include their endpoints and belong
    to the innermost open hole cycle.  A cycle's container is the
    innermost object cycle open when it first appears.
    """
    outer_type = [ts.way[r] > 0 if r else True for r in cs.roots]
    containers: dict[int, int | None] = {}
    runs = []
    for y in range(ts.height):
        chain = ts.row_chain(y)
        stack: list[int] = []
        prev = 0
        for tid in chain:
            cyc = cs.cycle_of[tid]
            if cyc == 0:
                continue
            if prev and stack:
                if ts.way[prev] > 0:
                    x0, x1 = ts.abs_[prev] + 1, ts.abs_[tid] - 1
                else:
                    x0, x1 = ts.abs_[prev], ts.abs_[tid]
                if x0 <= x1:
                    runs.append((y, stack[-1], x0, x1))
            opens = (ts.way[tid] > 0) == outer_type[cyc - 1]
            if opens:
                if cyc not in containers:
                    containers[cyc] = next(
                        (c for c in reversed(stack) if outer_type[c - 1]), None)
                stack.append(cyc)
            elif stack:
                if stack[-1] == cyc:
                    stack.pop()
                elif cyc in stack:
                    while stack and stack.pop() != cyc:
                        pass
            prev = tid
    return runs, containers


def contour_stats(ts: TransitionSet, cs: CycleSet) -> ContourStats:
    """Perimeter, surface, gravity sums and containment for every cycle.

    Surfaces count each cycle's own pixels: the object pixels for object
    cycles, the hole background pixels for hole cycles; zero-mass cycles
    are invalidated and nested cycles get their container id written into
    the object flag, as in the original bookkeeping.
    """
    n = cs.count
    perimeter = [0] * n
    surface = [0] * n
    gx = [0] * n
    gy = [0] * n
    container: list = [None] * n
    for c in range(1, n + 1):
        if cs.closed[c - 1]:
            perimeter[c - 1] = len(cs.transitions_of(c))
    runs, containers = _row_runs(ts, cs)
    for y, owner, x0, x1 in runs:
        count = x1 - x0 + 1
        surface[owner - 1] += count
        gx[owner - 1] += (x0 + x1) * count // 2
        gy[owner - 1] += y * count
    for cyc, cont in containers.items():
        container[cyc - 1] = cont
    for c in range(n):
        if surface[c] == 0:
            cs.object_flag[c] = False
        elif container[c] is not None:
            cs.object_flag[c] = container[c]
    return ContourStats(perimeter, surface, gx, gy, container)


def fill_contours(ts: TransitionSet) -> GreyImage:
    """Rasterize the row transition lists back into a binary image.

    Object pixels are exactly those strictly between each rising/falling
    pair of a row chain; chains with an odd transition count raise
    UnbalancedError.
    """
    if ts.background is Background.DARK:
        bg, obj = 0, ts.max_grey // 2
    else:
        bg, obj = ts.max_grey // 2, 0
    data = np.full((ts.height, ts.width), bg, dtype=np.int32)
    for y in range(ts.height):
        chain = ts.row_chain(y)
        if len(chain) % 2:
            raise UnbalancedError(f"row {y} has {len(chain)} transitions")
        for i in range(0, len(chain), 2):
            rise, fall = chain[i], chain[i + 1]
            x0, x1 = ts.abs_[rise] + 1, ts.abs_[fall] - 1
            if x0 <= x1:
                data[y, x0: x1 + 1] = obj
    return GreyImage(data, ts.max_grey)


def convex_vertices(ts: TransitionSet, cs: CycleSet) -> ConvexProfile:
    """Flag the row-extreme transitions that are convex hull corners.

    Per row, the first and last transitions belonging to live object
    cycles are the candidates; a candidate stays convex unless some pair
    of same-side candidates above and below proves it dented toward the
    object (a strictly interior position relative to their chord).
    Exactly collinear candidates stay convex.
    """
    way: list[int] = []
    abs_: list[int] = []
    ord_: list[int] = []
    side: list[int] = []  # 0 = row minimum, 1 = row maximum
    for y in range(ts.height):
        live = [t for t in ts.row_chain(y)
                if cs.cycle_of[t] and cs.object_flag[cs.cycle_of[t] - 1] is not False]
        if not live:
            continue
        for pick, s in ((live[0], 0), (live[-1], 1)):
            way.append(ts.way[pick])
            abs_.append(ts.abs_[pick])
            ord_.append(ts.ord_[pick])
            side.append(s)
    n = len(way)
    is_convex = [True] * n
    for s in (0, 1):
        idx = [i for i in range(n) if side[i] == s]
        for pos in range(1, len(idx) - 1):
            i = idx[pos]
            if not is_convex[i]:
                continue
            for p1 in range(pos):
                if not is_convex[i]:
                    break
                i1 = idx[p1]
                for p2 in range(pos + 1, len(idx)):
                    i2 = idx[p2]
                    # cross product of (candidate - above, below - candidate)
                    cross = ((abs_[i] - abs_[i1]) * (ord_[i2] - ord_[i])
                             - (abs_[i2] - abs_[i]) * (ord_[i] - ord_[i1]))
                    dented = cross > 0 if s == 0 else cross < 0
                    if dented:
                        is_convex[i] = False
                        break
    return ConvexProfile(way, abs_, ord_, is_convex)


def cycles_to_text(ts: TransitionSet, cs: CycleSet) -> str:
    """One line per cycle: ``cycle <id> : (x,y) ...`` in following order."""
    lines = []
    for c in range(1, cs.count + 1):
        pts = " ".join(f"({ts.abs_[t]},{ts.ord_[t]})" for t in cs.transitions_of(c))
        lines.append(f"cycle {c} : {pts}")
    return "\n".join(lines)
