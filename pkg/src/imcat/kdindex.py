"""Content index over attribute vectors: a regularly decomposed 2^k-tree.

The attribute space, normalized per dimension to [0, 1), is halved along
cycling dimensions down to a fixed depth; the resulting binary tree is the
index, each object hanging at the leaf its normalized vector falls into.
The nested cells induce an ultra-metric: the distance between two keys is
the size of the smallest cell containing both, so nearest-neighbor answers
come out ranked by shared-path depth, normalized into a similarity index.

Query trees over the same decomposition form a Boolean algebra (union,
intersection, complement and the differences), which combines interval
selections and nearest-neighbor rings into complex queries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySelectionError,
    InvalidIntervalError,
    ShapeMismatchError,
)
from .hilbert import hilbert_sort


@dataclass(frozen=True)
class Bounds:
    """Per-dimension sampling bounds (lower strictly below upper)."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ShapeMismatchError("bounds arity mismatch")
        for lo, hi in zip(self.lower, self.upper):
            if not lo < hi:
                raise InvalidIntervalError(f"bounds [{lo}, {hi}] are empty")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def normalize(self, vector) -> np.ndarray:
        """Map attribute values into [0, 1), clamping out-of-bound values."""
        v = np.asarray(vector, dtype=np.float64)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.clip((v - lo) / (hi - lo), 0.0, np.nextafter(1.0, 0.0))


def key_path(normalized, depth: int) -> tuple[int, ...]:
    """Bit path of a normalized vector: depth bits per dimension, interleaved
    by cycling through the dimensions."""
    cells = [min(int(v * (1 << depth)), (1 << depth) - 1) for v in normalized]
    path = []
    for level in range(depth):
        bit_pos = depth - 1 - level
        for c in cells:
            path.append((c >> bit_pos) & 1)
    return tuple(path)


class KdIndex:
    """Objects hung at the leaves of the regular binary decomposition."""

    def __init__(self, bounds: Bounds, depth: int, dims: tuple[int, ...] | None = None):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        if dims is not None and len(dims) == 0:
            raise EmptySelectionError("no attribute dimensions selected")
        self.bounds = bounds
        self.depth = depth
        self.dims = dims  # attribute columns used, None = all
        self.leaves: dict[tuple[int, ...], list[int]] = {}
        self.vectors: dict[int, np.ndarray] = {}
        self.normalized: dict[int, np.ndarray] = {}
        self.paths: dict[int, tuple[int, ...]] = {}
        self.clamped = 0

    @property
    def dimension(self) -> int:
        return self.bounds.dimension

    def select(self, vector) -> np.ndarray:
        v = np.asarray(vector, dtype=np.float64)
        if self.dims is not None:
            v = v[list(self.dims)]
        if len(v) != self.dimension:
            raise ShapeMismatchError("attribute arity mismatch")
        return v

    def add_object(self, object_id: int, vector) -> tuple[int, ...]:
        """Insert one object; returns the leaf path its key addresses."""
        v = self.select(vector)
        norm = self.bounds.normalize(v)
        raw_norm = (v - np.asarray(self.bounds.lower)) / (
            np.asarray(self.bounds.upper) - np.asarray(self.bounds.lower))
        if ((raw_norm < 0) | (raw_norm >= 1)).any():
            self.clamped += 1
        path = key_path(norm, self.depth)
        self.leaves.setdefault(path, []).append(object_id)
        self.vectors[object_id] = v
        self.normalized[object_id] = norm
        self.paths[object_id] = path
        return path

    def ids_under(self, prefix: tuple[int, ...]) -> list[int]:
        return [oid for path, ids in self.leaves.items()
                if path[: len(prefix)] == prefix for oid in ids]

    def query_interval(self, intervals) -> set[int]:
        """Objects whose attribute vectors lie in the closed parallelotope.

        The query tree of cells overlapping the box is intersected with
        the occupied cells; the collected candidates are then confirmed on
        their stored attribute values, so the result matches a linear scan
        exactly.
        """
        if len(intervals) != self.dimension:
            raise ShapeMismatchError("interval arity mismatch")
        for lo, hi in intervals:
            if lo > hi:
                raise InvalidIntervalError(f"interval [{lo}, {hi}]")
        query = CellTree.from_intervals(self.bounds, self.depth, intervals)
        out = set()
        for path, ids in self.leaves.items():
            if query.covers(path):
                for oid in ids:
                    v = self.vectors[oid]
                    if all(lo <= x <= hi for x, (lo, hi) in zip(v, intervals)):
                        out.add(oid)
        return out

    def query_nearest(self, key, max_results: int | None = None
                      ) -> list[tuple[int, float]]:
        """Similarity ranking by nested neighborhoods of the key.

        Rings are the set differences of successive neighborhoods on the
        key's path, emitted leaf to root; the similarity of a ring at
        shared depth d is 1 - 2^(d - full_depth) ... 2^-d of the space
        volume, so it decreases as the shared cell grows.  Ties inside a
        ring break by Euclidean distance between normalized vectors, then
        by object id.
        """
        key_v = self.select(key)
        norm = self.bounds.normalize(key_v)
        path = key_path(norm, self.depth)
        full = len(path)
        ranked = []
        for oid, opath in self.paths.items():
            shared = 0
            while shared < full and opath[shared] == path[shared]:
                shared += 1
            similarity = 1.0 - 2.0 ** (-shared)
            dist = float(np.linalg.norm(self.normalized[oid] - norm))
            ranked.append((-similarity, dist, oid))
        ranked.sort()
        out = [(oid, -negsim) for negsim, _, oid in ranked]
        if max_results is not None:
            out = out[:max_results]
        return out

    def occupied_tree(self) -> "CellTree":
        tree = CellTree.empty(self.dimension, self.depth)
        for path in self.leaves:
            tree = tree.union(CellTree.single_cell(self.dimension, self.depth, path))
        return tree


class BoolOp(enum.Enum):
    NOT = "not"
    UNION = "union"
    INTERSECT = "intersect"
    EXCLUDE = "exclude"
    DIFF = "diff"


_FULL = True
_EMPTY = False


@dataclass(frozen=True)
class CellTree:
    """Set of cells of the regular decomposition, as a collapsed binary tree.

    node is True (whole subspace), False (nothing) or a (low, high) pair
    of subtrees along the next split of the dimension cycle.
    """

    dimension: int
    depth: int
    node: object

    @property
    def levels(self) -> int:
        return self.dimension * self.depth

    @staticmethod
    def empty(dimension: int, depth: int) -> "CellTree":
        return CellTree(dimension, depth, _EMPTY)

    @staticmethod
    def full(dimension: int, depth: int) -> "CellTree":
        return CellTree(dimension, depth, _FULL)

    @staticmethod
    def single_cell(dimension: int, depth: int, path: tuple[int, ...]) -> "CellTree":
        node: object = _FULL
        for bit in reversed(path):
            node = (node, _EMPTY) if bit == 0 else (_EMPTY, node)
        return CellTree(dimension, depth, node)

    @staticmethod
    def from_intervals(bounds: Bounds, depth: int, intervals) -> "CellTree":
        """Cells of the decomposition overlapping the closed box."""
        k = bounds.dimension
        norm_lo = bounds.normalize([iv[0] for iv in intervals])
        norm_hi = bounds.normalize([iv[1] for iv in intervals])
        levels = k * depth

        def build(level, cell_lo, cell_hi):
            # cell bounds are half-open in normalized space
            for d in range(k):
                if cell_lo[d] > norm_hi[d] or cell_hi[d] <= norm_lo[d]:
                    return _EMPTY
            if level == levels:
                return _FULL
            if all(cell_lo[d] >= norm_lo[d] and cell_hi[d] <= norm_hi[d]
                   for d in range(k)):
                return _FULL
            d = level % k
            mid = (cell_lo[d] + cell_hi[d]) / 2.0
            lo_half_hi = cell_hi.copy()
            lo_half_hi[d] = mid
            hi_half_lo = cell_lo.copy()
            hi_half_lo[d] = mid
            low = build(level + 1, cell_lo, lo_half_hi)
            high = build(level + 1, hi_half_lo, cell_hi)
            if low is _FULL and high is _FULL:
                return _FULL
            if low is _EMPTY and high is _EMPTY:
                return _EMPTY
            return (low, high)

        node = build(0, np.zeros(k), np.ones(k))
        return CellTree(k, depth, node)

    def _check(self, other: "CellTree") -> None:
        if self.dimension != other.dimension or self.depth != other.depth:
            raise ShapeMismatchError("trees of different dimension or depth")

    def covers(self, path: tuple[int, ...]) -> bool:
        node = self.node
        for bit in path:
            if not isinstance(node, tuple):
                return node is _FULL
            node = node[bit]
        return node is _FULL

    def complement(self) -> "CellTree":
        def walk(node):
            if node is _FULL:
                return _EMPTY
            if node is _EMPTY:
                return _FULL
            return (walk(node[0]), walk(node[1]))

        return CellTree(self.dimension, self.depth, walk(self.node))

    def _combine(self, other: "CellTree", op) -> "CellTree":
        self._check(other)

        def walk(a, b):
            if not isinstance(a, tuple) and not isinstance(b, tuple):
                return op(a, b)
            aa = (a, a) if not isinstance(a, tuple) else a
            bb = (b, b) if not isinstance(b, tuple) else b
            low = walk(aa[0], bb[0])
            high = walk(aa[1], bb[1])
            if low is _FULL and high is _FULL:
                return _FULL
            if low is _EMPTY and high is _EMPTY:
                return _EMPTY
            return (low, high)

        return CellTree(self.dimension, self.depth, walk(self.node, other.node))

    def union(self, other: "CellTree") -> "CellTree":
        return self._combine(other, lambda a, b: a or b)

    def intersect(self, other: "CellTree") -> "CellTree":
        return self._combine(other, lambda a, b: a and b)

    def exclude(self, other: "CellTree") -> "CellTree":
        """Symmetric difference: cells in exactly one operand."""
        return self._combine(other, lambda a, b: a != b)

    def diff(self, other: "CellTree") -> "CellTree":
        """Cells of this tree not in the other one."""
        return self._combine(other, lambda a, b: a and not b)

    def cells(self) -> set[tuple[int, ...]]:
        """Enumerate covered leaf cells as full-depth bit paths."""
        out = set()
        levels = self.levels

        def walk(node, prefix):
            if node is _EMPTY:
                return
            if node is _FULL:
                if len(prefix) == levels:
                    out.add(tuple(prefix))
                else:
                    walk(_FULL, prefix + [0])
                    walk(_FULL, prefix + [1])
                return
            walk(node[0], prefix + [0])
            walk(node[1], prefix + [1])

        walk(self.node, [])
        return out


def tree_boolean(op: BoolOp, a: CellTree, b: CellTree | None = None) -> CellTree:
    """Apply one Boolean operator to query trees."""
    if op is BoolOp.NOT:
        return a.complement()
    if b is None:
        raise ShapeMismatchError("binary operator needs two trees")
    if op is BoolOp.UNION:
        return a.union(b)
    if op is BoolOp.INTERSECT:
        return a.intersect(b)
    if op is BoolOp.EXCLUDE:
        return a.exclude(b)
    return a.diff(b)


def equalize_attributes(columns: np.ndarray):
    """Histogram equalization of attribute columns.

    Every column is replaced by its normalized rank statistic in (0, 1);
    equal values share their average rank so the map stays a function.
    Returns the remapped columns and an AttributeEqualizer able to map
    both ways; constant columns are flagged degenerate.
    """
    cols = np.asarray(columns, dtype=np.float64)
    if cols.ndim != 2 or len(cols) == 0:
        raise EmptySelectionError("need an (n, k) column block")
    n, k = cols.shape
    out = np.zeros_like(cols)
    tables = []
    degenerate = []
    for d in range(k):
        values = cols[:, d]
        order = np.argsort(values, kind="stable")
        ranks = np.empty(n, dtype=np.float64)
        ranks[order] = np.arange(n, dtype=np.float64)
        # average the ranks of tied values
        uniq, inverse, counts = np.unique(values, return_inverse=True,
                                          return_counts=True)
        sums = np.zeros(len(uniq))
        np.add.at(sums, inverse, ranks)
        avg = sums / counts
        eq = (avg[inverse] + 0.5) / n
        out[:, d] = eq
        tables.append((uniq, (avg + 0.5) / n))
        degenerate.append(len(uniq) == 1)
    return out, AttributeEqualizer(tables, tuple(degenerate))


@dataclass(frozen=True)
class AttributeEqualizer:
    """Invertible per-column rank maps produced by equalize_attributes."""

    tables: list
    degenerate: tuple[bool, ...]

    def forward(self, value: float, dim: int) -> float:
        uniq, eq = self.tables[dim]
        idx = np.searchsorted(uniq, value)
        idx = min(max(idx, 0), len(uniq) - 1)
        return float(eq[idx])

    def inverse(self, equalized: float, dim: int) -> float:
        uniq, eq = self.tables[dim]
        idx = np.searchsorted(eq, equalized)
        idx = min(max(idx, 0), len(uniq) - 1)
        return float(uniq[idx])


__all__ = [
    "AttributeEqualizer",
    "BoolOp",
    "Bounds",
    "CellTree",
    "KdIndex",
    "equalize_attributes",
    "hilbert_sort",
    "key_path",
    "tree_boolean",
]
