"""Numba kernels: right-first depth-first search with memoized dead sites.

The search finds the rightmost open path from the half-line
``(-inf, x0] x {t0}`` to level ``t0 + H``.  Starting sites are tried from
``x0`` leftwards; from each site the right child is tried before the left one
and every site whose subtree cannot reach level ``t0 + H`` is remembered as
dead.  The maximum visited position per level is the right edge of the
half-line process (every site reachable from the half-line and right of the
final path lies in an explored dead subtree).
"""
from __future__ import annotations

import numba
import numpy as np

from .lattice import COORD_LIMIT, edge_open, mix64, seed_keys

OK = 0
NO_SURVIVOR = -1
EDGE_BUFFER_FULL = -2
TABLE_FULL = -3

_OFF = np.int64(COORD_LIMIT)
NEG = np.int64(-(1 << 62))


@numba.njit(cache=True, inline="always")
def site_key(x, j):
    return ((j + _OFF) << 32) | ((x + _OFF) << 1)


@numba.njit(cache=True, inline="always")
def _slot(key, mask):
    return np.int64(mix64(np.uint64(key)) & np.uint64(mask))


@numba.njit(cache=True)
def table_has(tab_key, tab_stamp, stamp, key):
    mask = tab_key.shape[0] - 1
    s = _slot(key, mask)
    while tab_stamp[s] == stamp:
        if tab_key[s] == key:
            return True
        s = (s + 1) & mask
    return False


@numba.njit(cache=True)
def table_add(tab_key, tab_stamp, stamp, fill, key):
    """Insert ``key``; returns False when the table passed half load."""
    mask = tab_key.shape[0] - 1
    s = _slot(key, mask)
    while tab_stamp[s] == stamp:
        if tab_key[s] == key:
            return True
        s = (s + 1) & mask
    tab_stamp[s] = stamp
    tab_key[s] = key
    fill[0] += 1
    return 2 * fill[0] < tab_key.shape[0]


@numba.njit(cache=True)
def dfs_left_boundary(k1, k2, p, x0, t0, H, max_starts,
                      tab_key, tab_stamp, stamp, fill,
                      target, path, rmax, state,
                      record, edges, nedge, info):
    """Fill ``path[0..H]`` with the rightmost open path from the half-line.

    ``target``, if non-empty, is a path known to survive to level ``t0 + H``
    and to dominate the answer; the search stops as soon as it lands on it
    (``rmax`` is then only valid up to the hit depth).  ``info`` receives
    ``(start x, target hit depth or -1, visited site count)``.
    """
    for k in range(H + 1):
        rmax[k] = NEG
    rmax[0] = x0
    has_target = target.shape[0] > 0
    info[1] = -1
    visited = 0
    for s in range(max_starts + 1):
        u = x0 - 2 * s
        if table_has(tab_key, tab_stamp, stamp, site_key(u, t0)):
            continue
        depth = 0
        path[0] = u
        state[0] = 0
        visited += 1
        while depth >= 0:
            x = path[depth]
            if has_target and x == target[depth]:
                for k in range(depth + 1, H + 1):
                    path[k] = target[k]
                info[0] = u
                info[1] = depth
                info[2] = visited
                return OK
            if depth == H:
                info[0] = u
                info[2] = visited
                return OK
            j = t0 + depth
            st = state[depth]
            if st < 2:
                state[depth] = st + 1
                # st == 0 tries the right child, st == 1 the left one
                d = 1 - st
                c = x + 1 if d == 1 else x - 1
                if table_has(tab_key, tab_stamp, stamp, site_key(c, j + 1)):
                    continue
                if record:
                    if nedge[0] >= edges.shape[0]:
                        return EDGE_BUFFER_FULL
                    edges[nedge[0]] = site_key(x, j) | d
                    nedge[0] += 1
                if edge_open(k1, k2, p, x, j, d):
                    depth += 1
                    path[depth] = c
                    state[depth] = 0
                    visited += 1
                    if c > rmax[depth]:
                        rmax[depth] = c
            else:
                if not table_add(tab_key, tab_stamp, stamp, fill, site_key(x, j)):
                    return TABLE_FULL
                depth -= 1
    info[2] = visited
    return NO_SURVIVOR


class Workspace:
    """Scratch buffers for :func:`dfs_left_boundary`, grown on demand."""

    def __init__(self, horizon: int, table_bits: int = 14, edge_cap: int = 0):
        self.tab_key = np.zeros(1 << table_bits, np.int64)
        self.tab_stamp = np.zeros(1 << table_bits, np.int64)
        self.stamp = 0
        self.fill = np.zeros(1, np.int64)
        self.edges = np.zeros(edge_cap, np.int64)
        self.nedge = np.zeros(1, np.int64)
        self.info = np.zeros(3, np.int64)
        self.reserve(horizon)

    def reserve(self, horizon: int) -> None:
        self.path = np.zeros(horizon + 1, np.int64)
        self.rmax = np.zeros(horizon + 1, np.int64)
        self.state = np.zeros(horizon + 1, np.int8)

    def fresh(self) -> None:
        self.stamp += 1
        self.fill[0] = 0
        self.nedge[0] = 0

    def grow_table(self) -> None:
        size = 2 * self.tab_key.shape[0]
        self.tab_key = np.zeros(size, np.int64)
        self.tab_stamp = np.zeros(size, np.int64)
        self.stamp = 0

    def grow_edges(self) -> None:
        self.edges = np.zeros(max(1024, 2 * self.edges.shape[0]), np.int64)


_EMPTY = np.zeros(0, np.int64)


def search(ws: Workspace, field_keys, p: float, x0: int, t0: int, H: int,
           max_starts: int, target=None, record: bool = False,
           fresh: bool = True) -> int:
    """Run the search in ``ws`` with automatic buffer growth.

    Growth restarts the search from scratch with a fresh table, so results
    never depend on buffer sizes.
    """
    if ws.path.shape[0] < H + 1:
        ws.reserve(H)
    if record and ws.edges.shape[0] == 0:
        ws.grow_edges()
    k1, k2 = field_keys
    tgt = _EMPTY if target is None else target
    if fresh:
        ws.fresh()
    while True:
        status = dfs_left_boundary(k1, k2, p, x0, t0, H, max_starts,
                                   ws.tab_key, ws.tab_stamp, ws.stamp, ws.fill,
                                   tgt, ws.path, ws.rmax, ws.state,
                                   record, ws.edges, ws.nedge, ws.info)
        if status == TABLE_FULL:
            ws.grow_table()
        elif status == EDGE_BUFFER_FULL:
            ws.grow_edges()
        else:
            return status
        ws.fresh()


@numba.njit(cache=True)
def fresh_stamp(stamp, fill):
    fill[0] = 0
    return stamp + 1


def keys_for(seed) -> tuple:
    k1, k2 = seed_keys(np.uint64(seed))
    return np.uint64(k1), np.uint64(k2)
