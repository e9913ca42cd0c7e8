"""Exploration clusters: left boundary, right edge and coalescence of right edges.

``explore`` runs the right-first depth-first search from the half-line
``(-inf, z.x] x {z.i}``; ``right_edge_oracle`` recomputes the right edge by
plain level-by-level propagation and shares no code with it.

Horizons here are *absolute* times ``n >= z.i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import FrozenSet, List, Optional, Set

import numba
import numpy as np

from . import _search
from .lattice import COORD_LIMIT, Direction, Edge, EdgeField, Site, check_coords, edge_open
from .paths import LatticePath, NoSurvivorInWindow

MAX_WIDTH = 1 << 20


class WindowOverflow(NoSurvivorInWindow):
    """The half-line search ran past its configured width."""


class WindowTouched(RuntimeError):
    """The window-confined half-line process died out before the horizon.

    While it survives, its rightmost site equals the half-line right edge
    (a path from outside the window to a site further right would have to
    share a site with a surviving confined path).  Once it dies the window
    certifies nothing and must grow.
    """


def decode_edge(key: int) -> Edge:
    d = key & 1
    x = ((key >> 1) & 0x7FFFFFFF) - COORD_LIMIT
    i = (key >> 32) - COORD_LIMIT
    return Edge(Site(int(x), int(i)), Direction(int(d)))


def encode_edge(e: Edge) -> int:
    return int(_search.site_key(e.frm.x, e.frm.i)) | int(e.dir)


@dataclass
class ExplorationCluster:
    root: Site
    horizon: int
    left: LatticePath
    right: LatticePath
    examined: FrozenSet[int] = dc_field(default_factory=frozenset)

    def edges(self) -> Set[Edge]:
        return {decode_edge(k) for k in self.examined}

    def disjoint_from(self, other: "ExplorationCluster") -> bool:
        return self.examined.isdisjoint(other.examined)


def initial_width(n: int) -> int:
    return int(4 * math.sqrt(max(n, 0)) + 16)


def explore(field: EdgeField, z: Site, n: int, width: Optional[int] = None,
            record: bool = True, ws: Optional[_search.Workspace] = None) -> ExplorationCluster:
    """Exploration cluster ``C_z(n)`` with its boundaries.

    ``width`` bounds the number of extra starting sites tried to the left of
    ``z``; when omitted it starts at ``4 sqrt(n) + 16`` and doubles on
    overflow up to ``MAX_WIDTH``.
    """
    if n < z.i:
        raise ValueError("horizon must not precede the root")
    H = n - z.i
    ws = ws or _search.Workspace(H)
    widths = [width] if width is not None else _doubling(initial_width(H))
    for w in widths:
        check_coords(z.x - 2 * w - H, n)
        check_coords(z.x + H, n)
        status = _search.search(ws, field.keys, field.p, z.x, z.i, H, w, record=record)
        if status == _search.OK:
            examined = frozenset(ws.edges[:ws.nedge[0]].tolist()) if record else frozenset()
            return ExplorationCluster(
                root=z, horizon=n,
                left=LatticePath(z.i, ws.path[:H + 1]),
                right=LatticePath(z.i, ws.rmax[:H + 1]),
                examined=examined)
    raise WindowOverflow(f"no open path from (-inf, {z.x}] x {{{z.i}}} to level {n} "
                         f"within {widths[-1]} starts")


def _doubling(w0: int) -> List[int]:
    out = []
    w = w0
    while w < MAX_WIDTH:
        out.append(w)
        w *= 2
    out.append(MAX_WIDTH)
    return out


@numba.njit(cache=True)
def _propagate(k1, k2, p, x0, t0, H, W, out):
    lo = x0 - W
    width = W + H + 1
    occ = np.zeros(width, np.bool_)
    nxt = np.zeros(width, np.bool_)
    top = -1
    for x in range(lo, x0 + 1):
        if (x + t0) % 2 == 0:
            occ[x - lo] = True
            top = x - lo
    out[0] = x0
    for k in range(H):
        j = t0 + k
        ntop = -1
        bottom = (lo + j) & 1  # first index with the right parity
        for idx in range(bottom, top + 1, 2):
            if not occ[idx]:
                continue
            x = lo + idx
            if edge_open(k1, k2, p, x, j, 1):
                nxt[idx + 1] = True
                if idx + 1 > ntop:
                    ntop = idx + 1
            if idx >= 1 and edge_open(k1, k2, p, x, j, 0):
                nxt[idx - 1] = True
                if idx - 1 > ntop:
                    ntop = idx - 1
        if ntop < 0:
            return k + 1
        for idx in range(0, top + 2):
            occ[idx] = nxt[idx]
            nxt[idx] = False
        top = ntop
        out[k + 1] = lo + top
    return 0


def right_edge_oracle(field: EdgeField, z: Site, n: int, W: int) -> LatticePath:
    """Right edge of the half-line process by direct propagation in a window.

    Sites ``z.x - W .. z.x`` at time ``z.i`` start occupied; sites left of
    ``z.x - W`` are dropped.  Raises :class:`WindowTouched` if the confined
    process dies out.
    """
    if n < z.i:
        raise ValueError("horizon must not precede the root")
    if W < 0:
        raise ValueError("window width must be non-negative")
    H = n - z.i
    check_coords(z.x - W, n)
    check_coords(z.x + H, n)
    k1, k2 = field.keys
    out = np.empty(H + 1, np.int64)
    died = _propagate(k1, k2, field.p, z.x, z.i, H, W, out)
    if died:
        raise WindowTouched(f"window of width {W} died out at time {z.i + died}")
    return LatticePath(z.i, out)


def right_edge_adaptive(field: EdgeField, z: Site, n: int, max_width: int = 1 << 14) -> LatticePath:
    """:func:`right_edge_oracle` with the window doubled on :class:`WindowTouched`."""
    W = initial_width(n - z.i)
    while True:
        try:
            return right_edge_oracle(field, z, n, W)
        except WindowTouched:
            if W >= max_width:
                raise
            W = min(2 * W, max_width)


def first_meeting(a: LatticePath, b: LatticePath) -> Optional[int]:
    """First common time at which two paths occupy the same site."""
    t0 = max(a.start_time, b.start_time)
    t1 = min(a.end_time, b.end_time)
    if t1 < t0:
        return None
    pa = a.positions[t0 - a.start_time: t1 - a.start_time + 1]
    pb = b.positions[t0 - b.start_time: t1 - b.start_time + 1]
    hit = np.flatnonzero(pa == pb)
    return int(t0 + hit[0]) if hit.size else None


def coalescence_time(field: EdgeField, z1: Site, z2: Site, n: int) -> Optional[int]:
    """First time ``<= n`` at which the right edges from ``z1`` and ``z2`` agree.

    ``None`` means they have not met by ``n``.
    """
    if z1.i != z2.i or z1.x > z2.x:
        raise ValueError("need z1.i == z2.i and z1.x <= z2.x")
    r1 = explore(field, z1, n, record=False).right
    r2 = explore(field, z2, n, record=False).right
    return first_meeting(r1, r2)


# --- batch kernels used by the Monte Carlo drivers -------------------------


@numba.njit(cache=True)
def right_edges_at(k1, k2, p, starts, H, M, tab_key, tab_stamp, stamp, fill,
                   path, rmax, state, info, out):
    """``out[s] = r_{(starts[s], 0)}(H)``, one fresh table per start.

    Returns ``(status, stamp)``; a non-OK status aborts the batch.
    """
    none = np.zeros(0, np.int64)
    nedge = np.zeros(1, np.int64)
    for s in range(starts.shape[0]):
        stamp += 1
        fill[0] = 0
        st = _search.dfs_left_boundary(k1, k2, p, starts[s], 0, H, M,
                                       tab_key, tab_stamp, stamp, fill,
                                       none, path, rmax, state,
                                       False, none, nedge, info)
        if st != _search.OK:
            return st, stamp
        out[s] = rmax[H]
    return _search.OK, stamp


@numba.njit(cache=True)
def right_edge_pair_tau(k1, k2, p, x1, x2, H, M, tab_key, tab_stamp, stamp, fill,
                        path, rmax, state, info, keep):
    """Coalescence time of right edges from ``(x1,0)`` and ``(x2,0)``, or -1."""
    none = np.zeros(0, np.int64)
    nedge = np.zeros(1, np.int64)
    stamp += 1
    fill[0] = 0
    st = _search.dfs_left_boundary(k1, k2, p, x2, 0, H, M, tab_key, tab_stamp, stamp, fill,
                                   none, path, rmax, state, False, none, nedge, info)
    if st != _search.OK:
        return st, stamp, -1
    for k in range(H + 1):
        keep[k] = rmax[k]
    stamp += 1
    fill[0] = 0
    st = _search.dfs_left_boundary(k1, k2, p, x1, 0, H, M, tab_key, tab_stamp, stamp, fill,
                                   none, path, rmax, state, False, none, nedge, info)
    if st != _search.OK:
        return st, stamp, -1
    for k in range(H + 1):
        if rmax[k] == keep[k]:
            return _search.OK, stamp, k
    return _search.OK, stamp, -1


class BatchRunner:
    """Search buffers reused across replicates; kernels are retried after growth."""

    def __init__(self, H: int):
        self.H = H
        self.ws = _search.Workspace(H)
        self.keep = np.zeros(H + 1, np.int64)

    def _run(self, kernel, keys, *args):
        ws = self.ws
        while True:
            res = kernel(keys[0], keys[1], *args[:-1], ws.tab_key, ws.tab_stamp, ws.stamp,
                         ws.fill, ws.path, ws.rmax, ws.state, ws.info, args[-1])
            ws.stamp = res[1]
            if res[0] != _search.TABLE_FULL:
                return res
            ws.grow_table()

    def right_edges(self, keys, p: float, starts: np.ndarray, M: int) -> Optional[np.ndarray]:
        """Right-edge positions at time ``H`` from ``(y, 0)``, ``y`` in ``starts``.

        None when some half-line search ran out of width.
        """
        out = np.empty(starts.shape[0], np.int64)
        res = self._run(right_edges_at, keys, p, starts, self.H, M, out)
        return out if res[0] == _search.OK else None

    def pair_tau(self, keys, p: float, x1: int, x2: int, M: int):
        """``(ok, tau)`` for right edges from ``(x1,0)``, ``(x2,0)``; tau is -1 if unmet."""
        res = self._run(right_edge_pair_tau, keys, p, x1, x2, self.H, M, self.keep)
        return res[0] == _search.OK, int(res[2])
