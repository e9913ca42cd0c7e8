"""Shearing/diffusive scaling and regeneration estimates of drift and diffusivity."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numba
import numpy as np

from . import _search
from .lattice import derive_seed
from .paths import LatticePath, NoSurvivorInWindow, default_search_width


class InsufficientBreakpoints(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalingParams:
    alpha: float
    sigma: float
    eps: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def point(self, x: float, t: float) -> Tuple[float, float]:
        return (math.sqrt(self.eps) * (x - self.alpha * t) / self.sigma, self.eps * t)


class ScaledPath:
    """Piecewise-linear path through ``(time, position)`` samples."""

    __slots__ = ("times", "values")

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or t.size == 0:
            raise ValueError("times and values must be equal-length 1-d arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        self.times = t
        self.values = v

    @property
    def start_time(self) -> float:
        return float(self.times[0])

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.values.tolist()))

    def __call__(self, t: float) -> float:
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"time {t} outside [{self.times[0]}, {self.times[-1]}]")
        return float(np.interp(t, self.times, self.values))

    def restrict(self, t0: float) -> "ScaledPath":
        if t0 <= self.times[0]:
            return self
        keep = self.times > t0
        return ScaledPath(np.r_[t0, self.times[keep]], np.r_[self(t0), self.values[keep]])

    def __repr__(self) -> str:
        return f"ScaledPath({len(self.times)} samples on [{self.start_time}, {self.end_time}])"


def apply_scaling(path: LatticePath, sp: ScalingParams) -> ScaledPath:
    t = path.times.astype(float)
    x = path.positions.astype(float)
    return ScaledPath(sp.eps * t, math.sqrt(sp.eps) * (x - sp.alpha * t) / sp.sigma)


@dataclass
class DriftEstimate:
    alpha: float
    sigma: float
    alpha_se: float
    sigma_se: float
    breakpoints: int
    replicates: int
    failures: int = 0


@numba.njit(cache=True)
def breakpoint_stats(path, rmax, H, out):
    """Sufficient statistics of regeneration increments on ``[0, H]``.

    A break point is a time where the right edge sits on the surviving
    rightmost path.  ``out`` gets ``(n_increments, Sx, St, Sxx, Sxt, Stt)``.
    """
    last = -1
    for k in range(out.shape[0]):
        out[k] = 0.0
    for j in range(H + 1):
        if path[j] == rmax[j]:
            if last >= 0:
                dx = float(path[j] - path[last])
                dt = float(j - last)
                out[0] += 1.0
                out[1] += dx
                out[2] += dt
                out[3] += dx * dx
                out[4] += dx * dt
                out[5] += dt * dt
            last = j


def _alpha_sigma(s: np.ndarray) -> Tuple[float, float]:
    _, sx, st, sxx, sxt, stt = s
    a = sx / st
    resid = max(sxx - 2 * a * sxt + a * a * stt, 0.0)
    return a, math.sqrt(resid / st)


def estimate_alpha_sigma(p: float, horizon: int, replicates: int, seed: int,
                         tail: int = 256, search_width: int = 64,
                         min_breakpoints: int = 10, batches: int = 20) -> DriftEstimate:
    """Drift and diffusivity of the rightmost path from regeneration increments.

    Each replicate explores from the half-line at the origin to ``horizon +
    tail``; break points are taken on ``[0, horizon]`` only, so the survival
    surrogate always has ``tail`` levels of look-ahead.  Standard errors come
    from ``batches`` batch means over replicates.
    """
    if replicates < batches:
        batches = max(replicates, 1)
    H = horizon + tail
    ws = _search.Workspace(H)
    stats = np.zeros((replicates, 6))
    failures = 0
    for r in range(replicates):
        keys = _search.keys_for(derive_seed(np.uint64(seed), r))
        if _search.search(ws, keys, p, 0, 0, H, search_width) != _search.OK:
            failures += 1
            continue
        breakpoint_stats(ws.path, ws.rmax, horizon, stats[r])
    total = stats.sum(axis=0)
    if total[0] < min_breakpoints or total[2] <= 0:
        raise InsufficientBreakpoints(
            f"{int(total[0])} regeneration increments, need {min_breakpoints}")
    alpha, sigma = _alpha_sigma(total)
    per_batch = []
    for chunk in np.array_split(stats, batches):
        s = chunk.sum(axis=0)
        if s[2] > 0:
            per_batch.append(_alpha_sigma(s))
    if len(per_batch) > 1:
        b = np.array(per_batch)
        se = b.std(axis=0, ddof=1) / math.sqrt(len(per_batch))
    else:
        se = np.array([math.nan, math.nan])
    return DriftEstimate(alpha, sigma, float(se[0]), float(se[1]),
                         int(total[0]), replicates, failures)


def terminal_positions(p: float, n: int, replicates: int, seed: int,
                       tail: int = 256, max_tries: Optional[int] = None) -> np.ndarray:
    """Samples of ``gamma_o(n)`` given that the origin percolates.

    Percolation is replaced by survival to ``n + tail``; configurations in
    which the origin dies are skipped and the next derived seed is used.
    """
    H = n + tail
    ws = _search.Workspace(H)
    out = np.empty(replicates, np.int64)
    max_tries = 100 * replicates + 1000 if max_tries is None else max_tries
    got = 0
    idx = 0
    while got < replicates:
        if idx >= max_tries:
            raise NoSurvivorInWindow(f"origin survived in only {got} of {idx} configurations")
        keys = _search.keys_for(derive_seed(np.uint64(seed), idx))
        idx += 1
        if _search.search(ws, keys, p, 0, 0, H, 0) == _search.OK:
            out[got] = ws.path[n]
            got += 1
    return out


def standardized_displacements(positions: np.ndarray, n: int, est: DriftEstimate,
                               spread_seed: Optional[int] = 0) -> np.ndarray:
    """``(x - alpha n) / (sigma sqrt n)``.

    Positions live on a lattice of spacing 2, which alone puts a KS distance
    of order ``1 / (sigma sqrt n)`` between the sample and any continuous
    law.  Unless ``spread_seed`` is None each position is spread uniformly
    over its cell ``[x - 1, x + 1)`` first.
    """
    x = positions.astype(float)
    if spread_seed is not None:
        x = x + np.random.default_rng(spread_seed).uniform(-1.0, 1.0, len(x))
    return (x - est.alpha * n) / (est.sigma * math.sqrt(n))


def ks_normal(z: np.ndarray, level: float = 0.01) -> Tuple[float, float]:
    """KS distance to N(0,1) and its critical value at ``level``."""
    from scipy import stats

    d = stats.kstest(z, "norm").statistic
    crit = stats.kstwo.ppf(1.0 - level, len(z))
    return float(d), float(crit)


def pair_coalescence_times(p: float, n: int, replicates: int, seed: int, cap: float = 8.0,
                           window: int = 64) -> np.ndarray:
    """Coalescence times of right edges from ``(0,0)`` and ``(2L-2, 0)``, divided by ``n``.

    ``L = ceil(sqrt n)``.  Pairs still apart at time ``cap * n`` get ``inf``.
    """
    from .exploration import BatchRunner

    L = math.isqrt(n - 1) + 1
    H = int(cap * n)
    runner = BatchRunner(H)
    out = np.empty(replicates)
    for r in range(replicates):
        keys = _search.keys_for(derive_seed(np.uint64(seed), r))
        ok, tau = runner.pair_tau(keys, p, 0, 2 * L - 2, window)
        if not ok:
            raise NoSurvivorInWindow(f"replicate {r}: right edge search ran out of width")
        out[r] = math.inf if tau < 0 else tau / n
    return out


def ks_two_sample(x: np.ndarray, y: np.ndarray, level: float = 0.01) -> Tuple[float, float]:
    """Two-sample KS distance and p-value (``inf`` entries act as a common top atom)."""
    from scipy import stats

    big = np.finfo(float).max
    res = stats.ks_2samp(np.where(np.isinf(x), big, x), np.where(np.isinf(y), big, y))
    return float(res.statistic), float(res.pvalue)


def search_width_for(p: float) -> int:
    """Conservative width when no pilot estimate is at hand."""
    return default_search_width(max(p - 0.5, 0.05) if p < 1 else 1.0)
