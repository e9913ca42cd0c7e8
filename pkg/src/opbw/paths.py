"""Open clusters, finite-horizon survival and rightmost open paths.

Horizons in this module are *relative*: ``N`` counts steps after ``z.i``.
An infinite open path is approximated by an open path reaching level
``z.i + N``; in the supercritical phase finite clusters die fast, so the
prefix of the finite-horizon rightmost path stabilises well before ``N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import _search
from .lattice import EdgeField, Site, check_coords, derive_seed, LEFT, RIGHT


class NoSurvivorInWindow(RuntimeError):
    """No start in the searched window survives to the horizon."""


class LatticePath:
    """Integer-time lattice path ``pi(start_time + k) = positions[k]``.

    Evaluated at real times by linear interpolation between integer times.
    """

    __slots__ = ("start_time", "positions")

    def __init__(self, start_time: int, positions: Sequence[int]):
        self.start_time = int(start_time)
        pos = np.array(positions, dtype=np.int64)
        pos.setflags(write=False)
        self.positions = pos

    @property
    def end_time(self) -> int:
        return self.start_time + len(self.positions) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.start_time, self.end_time + 1)

    def __len__(self) -> int:
        return len(self.positions)

    def at(self, j: int) -> int:
        k = j - self.start_time
        if k < 0 or k >= len(self.positions):
            raise IndexError(f"time {j} outside [{self.start_time}, {self.end_time}]")
        return int(self.positions[k])

    def __call__(self, t: float) -> float:
        if t < self.start_time or t > self.end_time:
            raise ValueError(f"time {t} outside [{self.start_time}, {self.end_time}]")
        return float(np.interp(t, self.times, self.positions))

    def restrict(self, t0: int, t1: Optional[int] = None) -> "LatticePath":
        """Sub-path on ``[t0, t1]`` (``pi^t`` when ``t1`` is omitted)."""
        t1 = self.end_time if t1 is None else t1
        t0 = max(t0, self.start_time)
        return LatticePath(t0, self.positions[t0 - self.start_time: t1 - self.start_time + 1])

    def is_valid(self) -> bool:
        if len(self.positions) == 0:
            return False
        if (int(self.positions[0]) + self.start_time) % 2:
            return False
        return bool(np.all(np.abs(np.diff(self.positions)) == 1))

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticePath):
            return NotImplemented
        return (self.start_time == other.start_time
                and np.array_equal(self.positions, other.positions))

    def __hash__(self):
        return hash((self.start_time, self.positions.tobytes()))

    def __repr__(self) -> str:
        head = ", ".join(str(int(v)) for v in self.positions[:8])
        more = ", ..." if len(self.positions) > 8 else ""
        return f"LatticePath(start_time={self.start_time}, positions=[{head}{more}])"


@dataclass
class ClusterSummary:
    root: Site
    horizon: int
    sites_per_level: List[List[int]]
    survived: bool

    @property
    def size(self) -> int:
        return sum(len(level) for level in self.sites_per_level)


def cluster(field: EdgeField, z: Site, N: int) -> ClusterSummary:
    """Level sets of the open cluster of ``z`` up to time ``z.i + N``."""
    if N < 0:
        raise ValueError("horizon must be non-negative")
    check_coords(z.x - N, z.i + N)
    check_coords(z.x + N, z.i + N)
    levels = [[z.x]]
    current = {z.x}
    for j in range(z.i, z.i + N):
        nxt = set()
        for x in current:
            if field.open_at(x, j, RIGHT):
                nxt.add(x + 1)
            if field.open_at(x, j, LEFT):
                nxt.add(x - 1)
        current = nxt
        levels.append(sorted(nxt))
        if not nxt:
            levels.extend([] for _ in range(z.i + N - j - 1))
            break
    return ClusterSummary(z, N, levels, bool(levels[-1]))


def _check_window(z: Site, N: int, M: int) -> None:
    check_coords(z.x - 2 * M - N, z.i + N)
    check_coords(z.x + N, z.i + N)


def survives(field: EdgeField, z: Site, N: int, ws: Optional[_search.Workspace] = None) -> bool:
    """Whether the open cluster of ``z`` reaches level ``z.i + N``."""
    if N < 0:
        raise ValueError("horizon must be non-negative")
    _check_window(z, N, 0)
    ws = ws or _search.Workspace(N)
    status = _search.search(ws, field.keys, field.p, z.x, z.i, N, 0)
    return status == _search.OK


def rightmost_path(field: EdgeField, z: Site, N: int,
                   ws: Optional[_search.Workspace] = None) -> Optional[LatticePath]:
    """Rightmost open path from ``z`` to level ``z.i + N``, or None."""
    if N < 1:
        raise ValueError("horizon must be at least 1")
    _check_window(z, N, 0)
    ws = ws or _search.Workspace(N)
    status = _search.search(ws, field.keys, field.p, z.x, z.i, N, 0)
    if status != _search.OK:
        return None
    return LatticePath(z.i, ws.path[:N + 1])


def gamma_surrogate(field: EdgeField, z: Site, N: int, M: int,
                    ws: Optional[_search.Workspace] = None) -> LatticePath:
    """Finite-horizon stand-in for the rightmost infinite path from ``(-inf, z.x]``.

    Starts ``z.x, z.x - 2, ..., z.x - 2M`` are tried in that order; the first
    one surviving to level ``z.i + N`` gives the answer.
    """
    if N < 1 or M < 1:
        raise ValueError("need N >= 1 and M >= 1")
    _check_window(z, N, M)
    ws = ws or _search.Workspace(N)
    status = _search.search(ws, field.keys, field.p, z.x, z.i, N, M)
    if status != _search.OK:
        raise NoSurvivorInWindow(
            f"no site in [{z.x - 2 * M}, {z.x}] x {{{z.i}}} survives {N} steps")
    return LatticePath(z.i, ws.path[:N + 1])


def survival_rate(p: float, N: int, replicates: int, seed: int) -> float:
    """Fraction of replicates in which the origin survives ``N`` steps."""
    ws = _search.Workspace(N)
    hits = 0
    for r in range(replicates):
        keys = _search.keys_for(derive_seed(np.uint64(seed), r))
        if _search.search(ws, keys, p, 0, 0, N, 0) == _search.OK:
            hits += 1
    return hits / replicates


def default_search_width(theta: float, delta: float = 1e-9, cap: int = 1 << 16) -> int:
    """Number of extra starts so that ``(1 - theta)^M <= delta``, at most ``cap``."""
    if theta <= 0.0:
        return cap
    return int(min(cap, max(1, math.ceil(math.log(1.0 / delta) / theta))))


def pilot_search_width(p: float, N: int, seed: int, delta: float = 1e-9,
                       replicates: int = 1000) -> int:
    """Search width from a pilot survival estimate at horizon ``min(N, 256)``."""
    theta = survival_rate(p, min(N, 256), replicates, int(derive_seed(np.uint64(seed), 1 << 40)))
    return default_search_width(theta, delta)
