"""Contour vectorization with bounded error and exact re-digitalization.

A strip tree recursively splits an ordered point chain at the point most
distant from the chord joining the ends of the current span, until every
terminal strip is thinner than the requested precision (sum of the signed
left and right widths).  The surviving split points plus the chain ends
form the polyline.  Digitalization walks a segment back onto the lattice
with the balanced-error variant of the incremental line algorithm: only
horizontal+diagonal moves below the first bisector, vertical+diagonal
above, with the accumulator seeded at half the major extent so the
interpolation error spreads evenly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import TooFewPointsError, UnbalancedError, ZeroLengthError

Point = tuple[float, float]
IntPoint = tuple[int, int]


@dataclass
class StripTree:
    """Node arrays of the bounding-strip decomposition (root is node 1)."""

    father: list[int] = field(default_factory=lambda: [0, 0])
    lftson: list[int] = field(default_factory=lambda: [0, 0])
    rgtson: list[int] = field(default_factory=lambda: [0, 0])
    origin: list[int] = field(default_factory=lambda: [0, 0])
    end: list[int] = field(default_factory=lambda: [0, 0])
    lftwidth: list[float] = field(default_factory=lambda: [0.0, 0.0])
    rgtwidth: list[float] = field(default_factory=lambda: [0.0, 0.0])
    lftmax: list[int] = field(default_factory=lambda: [0, 0])
    rgtmax: list[int] = field(default_factory=lambda: [0, 0])

    @property
    def node_count(self) -> int:
        return len(self.father) - 1

    def add_node(self, father: int) -> int:
        self.father.append(father)
        self.lftson.append(0)
        self.rgtson.append(0)
        self.origin.append(0)
        self.end.append(0)
        self.lftwidth.append(0.0)
        self.rgtwidth.append(0.0)
        self.lftmax.append(0)
        self.rgtmax.append(0)
        return len(self.father) - 1


@dataclass(frozen=True)
class Polyline:
    """Ordered vertices kept from a source chain; closed joins last to first."""

    vertices: tuple[Point, ...]
    closed: bool = False

    def __len__(self) -> int:
        return len(self.vertices)


def strip_widths(points: list[Point], origin: int, end: int
                 ) -> tuple[float, float, int, int]:
    """Signed strip widths of the span and the index of each side's extreme.

    The chord runs from points[origin] to points[end]; widths are the
    largest perpendicular distances on the left (negative side) and right
    (positive side) of the chord.
    """
    x0, y0 = points[origin]
    x1, y1 = points[end]
    a = y1 - y0
    b = x0 - x1
    c = x1 * y0 - x0 * y1
    d = math.hypot(a, b)
    if d == 0:
        raise ZeroLengthError("chord endpoints coincide")
    a, b, c = a / d, b / d, c / d
    left_width = 0.0
    right_width = 0.0
    left_max = origin
    right_max = origin
    for i in range(origin + 1, end):
        dist = a * points[i][0] + b * points[i][1] + c
        if dist < 0:
            if dist < -left_width:
                left_width = -dist
                left_max = i
        elif dist > right_width:
            right_width = dist
            right_max = i
    return left_width, right_width, left_max, right_max


def build_strip_tree(points: list[Point], precision: float) -> tuple[StripTree, list[bool]]:
    """Grow the strip tree and flag the vertex points of the chain.

    Follows the father/son stack-free traversal: divide at the widest
    side's extreme point, descend left, revisit right, and on completion
    fold a subtree's achieved width into its root before ascending.
    """
    n = len(points)
    tree = StripTree()
    root = tree.add_node(0)
    tree.origin[root] = 0
    tree.end[root] = n - 1
    is_vertex = [False] * n
    is_vertex[0] = True
    is_vertex[n - 1] = True
    lw, rw, lm, rm = strip_widths(points, 0, n - 1)
    tree.lftwidth[root], tree.rgtwidth[root] = lw, rw
    tree.lftmax[root], tree.rgtmax[root] = lm, rm
    computed = {root}
    node = root
    while True:
        if tree.lftwidth[node] + tree.rgtwidth[node] > precision:
            if tree.lftson[node] == 0 and tree.rgtson[node] == 0:
                _divide(tree, node, is_vertex)
                son = tree.lftson[node]
                _compute(tree, points, son)
                computed.add(son)
                node = son
            elif (tree.rgtson[node] not in computed
                  or tree.lftwidth[tree.rgtson[node]]
                  + tree.rgtwidth[tree.rgtson[node]] > precision):
                son = tree.rgtson[node]
                if son not in computed:
                    _compute(tree, points, son)
                    computed.add(son)
                node = son
            else:
                # subtree finished: collapse widths, then ascend
                ls, rs = tree.lftson[node], tree.rgtson[node]
                tree.lftwidth[node] = max(tree.lftwidth[ls] + tree.rgtwidth[ls],
                                          tree.lftwidth[rs] + tree.rgtwidth[rs])
                tree.rgtwidth[node] = 0.0
                if node == root:
                    break
                node = tree.father[node]
        else:
            if node == root:
                break
            node = tree.father[node]
    return tree, is_vertex


def _divide(tree: StripTree, node: int, is_vertex: list[bool]) -> None:
    left = tree.add_node(node)
    right = tree.add_node(node)
    tree.lftson[node] = left
    tree.rgtson[node] = right
    split = (tree.lftmax[node] if tree.lftwidth[node] > tree.rgtwidth[node]
             else tree.rgtmax[node])
    tree.origin[left] = tree.origin[node]
    tree.end[left] = split
    tree.origin[right] = split
    tree.end[right] = tree.end[node]
    is_vertex[split] = True


def _compute(tree: StripTree, points: list[Point], node: int) -> None:
    lw, rw, lm, rm = strip_widths(points, tree.origin[node], tree.end[node])
    tree.lftwidth[node], tree.rgtwidth[node] = lw, rw
    tree.lftmax[node], tree.rgtmax[node] = lm, rm


def vectorize(points: list[Point], precision: float, closed: bool = False) -> Polyline:
    """Piecewise-linear approximation of an ordered point chain.

    Every input point ends up within precision of its covering segment
    (the strip criterion bounds the summed signed widths).  precision 0 is
    legal and keeps every direction-change point.  A chain traced from a
    contour keeps its following order; closed only marks that the last
    vertex joins the first, it never duplicates the anchor point.
    """
    if precision < 0:
        raise ValueError("precision must be non-negative")
    pts = list(points)
    if len(pts) < 2:
        raise TooFewPointsError("need at least 2 points")
    if pts[0] == pts[-1]:
        raise ZeroLengthError("chain ends coincide")
    _, is_vertex = build_strip_tree(pts, precision)
    vertices = [pts[i] for i, flag in enumerate(is_vertex) if flag]
    out = [vertices[0]]
    for v in vertices[1:]:
        if v != out[-1]:
            out.append(v)
    return Polyline(tuple(out), closed)


def digitalize_segment(p0: IntPoint, p1: IntPoint) -> list[IntPoint]:
    """Lattice points of the segment p0..p1, max(|dx|,|dy|) + 1 of them.

    Slopes at most 1 take horizontal+diagonal moves, steeper ones take
    vertical+diagonal moves; the accumulator starts at half the major
    extent, centering the interpolation error.
    """
    x, y = p0
    u = abs(p1[0] - x)
    v = abs(p1[1] - y)
    xinc = 1 if p1[0] > x else -1
    yinc = 1 if p1[1] > y else -1
    out = [(x, y)]
    if u >= v:
        acc = u // 2
        for _ in range(u):
            x += xinc
            acc += v
            if acc >= u:
                acc -= u
                y += yinc
            out.append((x, y))
    else:
        acc = v // 2
        for _ in range(v):
            y += yinc
            acc += u
            if acc >= v:
                acc -= v
                x += xinc
            out.append((x, y))
    return out


def digitalize_polyline(pl: Polyline) -> list[IntPoint]:
    """Digitalize every segment, removing the duplicate joint points."""
    if len(pl.vertices) < 2:
        raise TooFewPointsError("polyline needs at least 2 vertices")
    verts = [(round(x), round(y)) for x, y in pl.vertices]
    if pl.closed:
        verts.append(verts[0])
    out: list[IntPoint] = []
    for a, b in zip(verts, verts[1:]):
        seg = digitalize_segment(a, b)
        out.extend(seg if not out else seg[1:])
    if pl.closed and len(out) > 1 and out[-1] == out[0]:
        out.pop()
    return out


def polyline_to_text(pl: Polyline) -> str:
    coords = " ".join(f"{x:g} {y:g}" for x, y in pl.vertices)
    kind = "closed" if pl.closed else "open"
    return f"poly {kind} {len(pl.vertices)} {coords}"


def polyline_from_text(line: str) -> Polyline:
    parts = line.split()
    if len(parts) < 3 or parts[0] != "poly" or parts[1] not in ("closed", "open"):
        raise ValueError("malformed polyline row")
    n = int(parts[2])
    coords = [float(p) for p in parts[3:]]
    if len(coords) != 2 * n:
        raise ValueError("polyline coordinate count mismatch")
    vertices = tuple((coords[2 * i], coords[2 * i + 1]) for i in range(n))
    return Polyline(vertices, parts[1] == "closed")
