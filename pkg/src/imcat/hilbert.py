"""Hilbert scan: a continuous once-only visiting order over a square grid.

Cell ranks follow the classic bit-twiddling conversion between the curve
parameter and plane coordinates.  Sorting a set of planar keys by their
cell ranks yields a visiting path whose consecutive steps stay spatially
close; for keys of more than two dimensions the rank falls back to bit
interleaving, which keeps the locality property in a weaker form.
"""

from __future__ import annotations

import numpy as np


def hilbert_xy_to_rank(x: int, y: int, order: int) -> int:
    """Curve parameter of cell (x, y) in the 2^order x 2^order grid."""
    rank = 0
    s = 1 << (order - 1)
    while s > 0:
        rx = 1 if (x & s) > 0 else 0
        ry = 1 if (y & s) > 0 else 0
        rank += s * s * ((3 * rx) ^ ry)
        # rotate quadrant
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        s >>= 1
    return rank


def hilbert_rank_to_xy(rank: int, order: int) -> tuple[int, int]:
    """Cell coordinates of a curve parameter; inverse of hilbert_xy_to_rank."""
    x = y = 0
    s = 1
    while s < (1 << order):
        rx = 1 & (rank // 2)
        ry = 1 & (rank ^ rx)
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        rank //= 4
        s *= 2
    return x, y


def hilbert_path(order: int) -> list[tuple[int, int]]:
    """The full visiting path over all 4^order cells, in curve order."""
    return [hilbert_rank_to_xy(r, order) for r in range(4 ** order)]


def interleave_rank(cells: tuple[int, ...], order: int) -> int:
    """Bit-interleaved rank for k > 2 dimensional keys."""
    rank = 0
    k = len(cells)
    for bit in range(order - 1, -1, -1):
        for c in cells:
            rank = (rank << 1) | ((c >> bit) & 1)
    return rank


def hilbert_sort(keys, order: int, bounds=None) -> list[int]:
    """Visiting permutation of the keys by the rank of their grid cells.

    Keys are normalized into the 2^order grid using the given (lo, hi)
    bounds per dimension (data extent when omitted).  Planar keys use
    Hilbert ranks; higher-dimensional ones the interleaved rank.  Ties
    keep input order.
    """
    arr = np.asarray(keys, dtype=np.float64)
    if arr.size == 0:
        return []
    if arr.ndim != 2:
        raise ValueError("keys must be an (n, k) array")
    n, k = arr.shape
    if bounds is None:
        lo = arr.min(axis=0)
        hi = arr.max(axis=0)
    else:
        lo = np.asarray([b[0] for b in bounds], dtype=np.float64)
        hi = np.asarray([b[1] for b in bounds], dtype=np.float64)
    span = np.where(hi > lo, hi - lo, 1.0)
    side = 1 << order
    cells = np.clip(((arr - lo) / span * side).astype(np.int64), 0, side - 1)
    if k == 2:
        ranks = [hilbert_xy_to_rank(int(c[0]), int(c[1]), order) for c in cells]
    else:
        ranks = [interleave_rank(tuple(int(v) for v in c), order) for c in cells]
    return sorted(range(n), key=lambda i: (ranks[i], i))
