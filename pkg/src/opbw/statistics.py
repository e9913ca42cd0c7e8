"""Counting statistics on path families and Monte Carlo density/inequality checks.

Monte Carlo drivers use start time 0 and even ``n``; ``i in R_0(n)`` means
some right edge from ``(-inf, y] x {0}`` is at ``i`` at time ``n``, and
similarly for the rightmost surviving paths and ``Gamma_0(n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Union

import numba
import numpy as np

from . import _search
from .exploration import BatchRunner
from .lattice import derive_seed, replicate_seeds
from .paths import LatticePath, NoSurvivorInWindow, pilot_search_width
from .scaling import ScaledPath

Path = Union[LatticePath, ScaledPath]

# Abort when more than this fraction of replicates has no survivor in the window.
FAILURE_BUDGET = 1e-3


class FailureBudgetExceeded(RuntimeError):
    pass


# --- path families ---------------------------------------------------------


def _start(path: Path) -> float:
    return path.start_time


def _end(path: Path) -> float:
    return path.end_time


def _restrict(path: Path, t: float) -> Path:
    if _start(path) >= t:
        return path
    if isinstance(path, LatticePath):
        return path.restrict(int(math.ceil(t)))
    return path.restrict(t)


class PathSet:
    """Finite family of paths with the truncation operators used by the counters."""

    def __init__(self, paths: Iterable[Path] = ()):
        self.paths: List[Path] = list(paths)

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def starting_at(self, s: float) -> "PathSet":
        """``K_s``."""
        return PathSet(q for q in self.paths if _start(q) == s)

    def started_by(self, s: float) -> "PathSet":
        """``K_{s-}``."""
        return PathSet(q for q in self.paths if _start(q) <= s)

    def positions(self, s: float) -> set:
        """``K(s)``: positions at time ``s`` of paths alive at ``s`` that started by ``s``."""
        return {q(s) for q in self.paths if _start(q) <= s <= _end(q)}

    def restricted(self, t: float) -> "PathSet":
        """``K^t``: every path cut to ``[t, inf)``; paths ending before ``t`` are dropped."""
        return PathSet(_restrict(q, t) for q in self.paths if _end(q) >= t)


def eta(K: PathSet, t0: float, t: float, a: float, b: float) -> int:
    """Distinct positions at ``t0 + t`` of paths started by ``t0`` that sit in ``[a, b]`` at ``t0``."""
    if not t > 0 or not a < b:
        raise ValueError("need t > 0 and a < b")
    t1 = t0 + t
    vals = {q(t1) for q in K if _start(q) <= t0 and _end(q) >= t1 and a <= q(t0) <= b}
    return len(vals)


def eta_hat(K: PathSet, t0: float, t: float, a: float, b: float) -> int:
    """Distinct positions in the open interval ``(a, b)`` at ``t0 + t`` of paths started by ``t0``."""
    if not t > 0 or not a < b:
        raise ValueError("need t > 0 and a < b")
    t1 = t0 + t
    vals = {q(t1) for q in K if _start(q) <= t0 and _end(q) >= t1}
    return sum(1 for v in vals if a < v < b)


# --- estimates -------------------------------------------------------------


@dataclass
class DensityEstimate:
    n: int
    p_hat: float
    se: float
    replicates: int
    failures: int = 0
    pairs: int = 1


@dataclass
class InequalityCheck:
    lhs: float
    rhs: float
    se: float
    passed: bool
    replicates: int
    failures: int = 0


def _mean_se(x: np.ndarray):
    if len(x) == 0:
        return math.nan, math.nan
    if len(x) == 1:
        return float(x[0]), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def _check_budget(failures: int, replicates: int) -> None:
    if failures > FAILURE_BUDGET * replicates:
        raise FailureBudgetExceeded(
            f"{failures} of {replicates} replicates had no survivor in the search window")


def _require(p: float, n: int) -> None:
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    if n < 1 or n % 2:
        raise ValueError("n must be a positive even integer")


def resolve_width(p: float, horizon: int, seed: int, window: Optional[int]) -> int:
    if window is not None:
        if window < 1:
            raise ValueError("window must be positive")
        return window
    return pilot_search_width(p, horizon, seed)


def default_horizon(n: int) -> int:
    return n + max(128, n // 4)


@numba.njit(cache=True)
def gamma_chain(k1, k2, p, n, H, m, M, tab_key, tab_stamp, stamp, fill,
                path, rmax, state, info, prev):
    """Number of ``k < m`` with ``gamma_{2k}(n) < gamma_{2k+2}(n)``.

    Paths are the rightmost paths from ``(-inf, 2k] x {0}`` to level ``H``.
    The chain runs right to left and stops each search on the previous
    path, sharing dead verdicts (all searches end at level ``H``).
    Returns ``(status, stamp, count)``.
    """
    none = np.zeros(0, np.int64)
    nedge = np.zeros(1, np.int64)
    stamp += 1
    fill[0] = 0
    st = _search.dfs_left_boundary(k1, k2, p, 2 * m, 0, H, M, tab_key, tab_stamp, stamp, fill,
                                   none, path, rmax, state, False, none, nedge, info)
    if st != _search.OK:
        return st, stamp, 0
    count = 0
    for k in range(m - 1, -1, -1):
        for q in range(H + 1):
            prev[q] = path[q]
        st = _search.dfs_left_boundary(k1, k2, p, 2 * k, 0, H, M, tab_key, tab_stamp, stamp,
                                       fill, prev, path, rmax, state, False, none, nedge, info)
        if st != _search.OK:
            return st, stamp, 0
        if info[1] < 0 or info[1] > n:
            count += 1
    return _search.OK, stamp, count


def _run_gamma_chain(ws: _search.Workspace, prev, keys, p, n, H, m, M):
    while True:
        st, ws.stamp, c = gamma_chain(keys[0], keys[1], p, n, H, m, M, ws.tab_key, ws.tab_stamp,
                                      ws.stamp, ws.fill, ws.path, ws.rmax, ws.state, ws.info, prev)
        if st != _search.TABLE_FULL:
            return st, c
        ws.grow_table()


def density_gamma(p: float, n: int, replicates: int, seed: int, horizon: Optional[int] = None,
                  window: Optional[int] = None, pairs: int = 1) -> DensityEstimate:
    """Estimate ``P(0 in Gamma_0(n)) = P(gamma_0(n) < gamma_2(n))``.

    With ``pairs = m`` each replicate averages the ``m`` indicators for the
    adjacent starts ``0, 2, ..., 2m``; each has the same law, so the mean is
    unbiased and the standard error is taken over per-replicate averages.
    """
    _require(p, n)
    if pairs < 1 or replicates < 1:
        raise ValueError("pairs and replicates must be positive")
    H = default_horizon(n) if horizon is None else horizon
    if H < n:
        raise ValueError("horizon must be at least n")
    M = resolve_width(p, H, seed, window)
    ws = _search.Workspace(H)
    prev = np.zeros(H + 1, np.int64)
    seeds = replicate_seeds(np.uint64(seed), replicates)
    vals = np.empty(replicates)
    ok = np.ones(replicates, bool)
    for r in range(replicates):
        st, c = _run_gamma_chain(ws, prev, _search.keys_for(seeds[r]), p, n, H, pairs, M)
        if st != _search.OK:
            ok[r] = False
            continue
        vals[r] = c / pairs
    failures = int((~ok).sum())
    _check_budget(failures, replicates)
    est, se = _mean_se(vals[ok])
    return DensityEstimate(n, est, se, replicates, failures, pairs)


def density_right_edge(p: float, n: int, replicates: int, seed: int,
                       window: Optional[int] = None, pairs: int = 1) -> DensityEstimate:
    """Estimate ``P(0 in R_0(n)) = P(r_0(n) < r_2(n))``, averaged over ``pairs`` adjacent pairs."""
    _require(p, n)
    if pairs < 1 or replicates < 1:
        raise ValueError("pairs and replicates must be positive")
    M = resolve_width(p, n, seed, window)
    runner = BatchRunner(n)
    starts = np.arange(0, 2 * pairs + 1, 2, dtype=np.int64)
    seeds = replicate_seeds(np.uint64(seed), replicates)
    vals = np.empty(replicates)
    ok = np.ones(replicates, bool)
    for r in range(replicates):
        out = runner.right_edges(_search.keys_for(seeds[r]), p, starts, M)
        if out is None:
            ok[r] = False
            continue
        vals[r] = np.count_nonzero(out[:-1] < out[1:]) / pairs
    failures = int((~ok).sum())
    _check_budget(failures, replicates)
    est, se = _mean_se(vals[ok])
    return DensityEstimate(n, est, se, replicates, failures, pairs)


def gamma_points(keys, p: float, n: int, lo: int, hi: int, M: int, H: Optional[int] = None,
                 ws: Optional[_search.Workspace] = None) -> set:
    """Points of ``Gamma_0(n)`` in ``[lo, hi]`` for one configuration.

    Scans ``gamma_y(n)`` over even ``y`` leftwards from a start whose value
    exceeds ``hi`` until one falls below ``lo``; monotonicity in ``y`` means
    nothing outside the scanned range can land in ``[lo, hi]``.
    """
    H = default_horizon(n) if H is None else H
    ws = ws or _search.Workspace(H)
    y = hi - (hi % 2)
    while True:
        if _search.search(ws, keys, p, y, 0, H, M) != _search.OK:
            raise NoSurvivorInWindow(f"no survivor left of {y}")
        if ws.path[n] > hi:
            break
        y += 2 * max(n, 8)
    prev = ws.path[:H + 1].copy()
    pts = set()
    while True:
        y -= 2
        if _search.search(ws, keys, p, y, 0, H, M, target=prev, fresh=False) != _search.OK:
            raise NoSurvivorInWindow(f"no survivor left of {y}")
        v = int(ws.path[n])
        if v < lo:
            return pts
        if v <= hi:
            pts.add(v)
        prev[:] = ws.path[:H + 1]


def density_gamma_scan(p: float, n: int, replicates: int, seed: int, width: int = 64,
                       window: Optional[int] = None) -> DensityEstimate:
    """Fraction of even sites in ``[-width, width]`` hit by ``Gamma_0(n)``."""
    _require(p, n)
    H = default_horizon(n)
    M = resolve_width(p, H, seed, window)
    ws = _search.Workspace(H)
    sites = width + 1
    seeds = replicate_seeds(np.uint64(seed), replicates)
    vals = np.empty(replicates)
    for r in range(replicates):
        pts = gamma_points(_search.keys_for(seeds[r]), p, n, -width, width, M, H, ws)
        vals[r] = len(pts) / sites
    est, se = _mean_se(vals)
    return DensityEstimate(n, est, se, replicates)


# --- right-edge membership and inequality checks ---------------------------


class _RightEdges:
    """Right edges at time ``n`` for one configuration, memoized by start."""

    def __init__(self, runner: BatchRunner, keys, p: float, M: int):
        self.runner, self.keys, self.p, self.M = runner, keys, p, M
        self.cache = {}

    def __call__(self, y: int) -> int:
        v = self.cache.get(y)
        if v is None:
            out = self.runner.right_edges(self.keys, self.p, np.array([y], np.int64), self.M)
            if out is None:
                raise NoSurvivorInWindow(f"right edge from {y}: window exhausted")
            v = self.cache[y] = int(out[0])
        return v

    def member(self, i: int, n: int) -> bool:
        """``i in R_0(n)`` by bisection on the nondecreasing map ``y -> r_y(n)``."""
        lo = i - n - 2  # r_lo(n) <= lo + n < i
        step = max(2, n)
        hi = i + (i % 2)
        while self(hi) < i:
            hi += step
            step *= 2
        # invariant: r(lo) < i <= r(hi)
        while hi - lo > 2:
            mid = lo + 2 * ((hi - lo) // 4)
            if self(mid) < i:
                lo = mid
            else:
                hi = mid
        return self(hi) == i


def negcor_check(p: float, n: int, i: int, j: int, replicates: int, seed: int,
                 window: Optional[int] = None, se_mult: float = 3.0) -> InequalityCheck:
    """``P(i, j in R_0(n)) <= P(i in R_0(n)) P(j in R_0(n))`` up to ``se_mult`` SE."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]; right edges are undefined at p = 0")
    if i >= j or (i + n) % 2 or (j + n) % 2:
        raise ValueError("need i < j with (i, n), (j, n) in Z^2_even")
    M = resolve_width(p, n, seed, window)
    runner = BatchRunner(n)
    seeds = replicate_seeds(np.uint64(seed), replicates)
    Ii = np.zeros(replicates)
    Ij = np.zeros(replicates)
    ok = np.ones(replicates, bool)
    for r in range(replicates):
        edges = _RightEdges(runner, _search.keys_for(seeds[r]), p, M)
        try:
            Ii[r] = edges.member(i, n)
            Ij[r] = edges.member(j, n)
        except NoSurvivorInWindow:
            ok[r] = False
    failures = int((~ok).sum())
    _check_budget(failures, replicates)
    a, b = Ii[ok], Ij[ok]
    mi, mj = a.mean(), b.mean()
    lhs, rhs = float((a * b).mean()), float(mi * mj)
    # delta method for mean(ab) - mean(a) mean(b)
    psi = a * b - mj * a - mi * b
    se = float(psi.std(ddof=1) / math.sqrt(len(psi))) if len(psi) > 1 else math.nan
    return InequalityCheck(lhs, rhs, se, bool(lhs <= rhs + se_mult * se), replicates, failures)


def r00_sizes(p: float, n: int, replicates: int, seed: int,
              window: Optional[int] = None):
    """Per-replicate ``|R^0_0(n)|`` and the indicator of ``D_n``.

    Starts are ``(2x, 0)`` for ``0 <= x < L``, ``L = ceil(sqrt(n))``.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    L = math.isqrt(n - 1) + 1 if n > 0 else 0
    M = resolve_width(p, n, seed, window)
    runner = BatchRunner(n)
    starts = np.arange(0, 2 * L, 2, dtype=np.int64)
    seeds = replicate_seeds(np.uint64(seed), replicates)
    sizes = np.full(replicates, -1, np.int64)
    apart = np.zeros(replicates, bool)
    for r in range(replicates):
        out = runner.right_edges(_search.keys_for(seeds[r]), p, starts, M)
        if out is None:
            continue
        sizes[r] = len(np.unique(out))
        apart[r] = out[0] != out[-1]
    ok = sizes >= 0
    _check_budget(int((~ok).sum()), replicates)
    return sizes[ok], apart[ok], int((~ok).sum())


def disjoint_occurrence_check(p: float, n: int, k: int, replicates: int, seed: int,
                              window: Optional[int] = None,
                              se_mult: float = 3.0) -> InequalityCheck:
    """``P(|R^0_0(n)| >= 2k) <= P(D_n)^k`` up to ``se_mult`` SE."""
    if k < 0:
        raise ValueError("k must be non-negative")
    sizes, apart, failures = r00_sizes(p, n, replicates, seed, window)
    big = (sizes >= 2 * k).astype(float)
    d = apart.astype(float)
    P = d.mean()
    lhs, rhs = float(big.mean()), float(P ** k)
    psi = big - (k * P ** (k - 1) * d if k > 0 else 0.0)
    se = float(psi.std(ddof=1) / math.sqrt(len(psi))) if len(psi) > 1 else math.nan
    if k == 0:
        se = 0.0
    return InequalityCheck(lhs, rhs, se, bool(lhs <= rhs + se_mult * se), replicates, failures)


def combined_se(*ses: float) -> float:
    return math.sqrt(sum(s * s for s in ses))
