"""Coalescing Brownian motions and coalescing simple random walks.

Both systems draw their randomness from the counter hash used for the edge
field, keyed by (seed, path label, step), so runs are reproducible and a
path's increments do not depend on which other paths are simulated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numba
import numpy as np

from .lattice import derive_seed, mix64, seed_keys
from .paths import LatticePath
from .scaling import ScaledPath
from .statistics import PathSet

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S11 = np.uint64(11)
_S41 = np.uint64(41)
_S5 = np.uint64(5)
_INV53 = 1.0 / 9007199254740992.0

# stream codes (low 5 bits of the counter key)
_C_NORMAL = 0
_C_BRIDGE = 2
_C_MID = 3
_C_PICK = 11
_C_GAP = 15
_LEVELS = 4  # bisection depth: coalescence time located within dt / 16


def bw_eta_hat_expectation(t: float, a: float, b: float) -> float:
    """Mean number of Brownian-web points in ``(a, b)`` at time ``t`` after the start."""
    if not t > 0 or not a < b:
        raise ValueError("need t > 0 and a < b")
    return (b - a) / math.sqrt(math.pi * t)


def bw_point_intensity() -> float:
    return 1.0 / math.sqrt(math.pi)


def pair_survival(d: float, t: float) -> float:
    """P(two independent standard BMs ``d`` apart have not met by ``t``).

    Their difference is a BM of variance ``2t``; by reflection the chance it
    stays positive is ``erf(d / (2 sqrt t))``.
    """
    return math.erf(abs(d) / (2.0 * math.sqrt(t)))


@numba.njit(cache=True, inline="always")
def _uniform(k1, k2, a, b, c):
    key = (np.uint64(a) << _S41) | (np.uint64(b) << _S5) | np.uint64(c)
    h = mix64(mix64(key * _GOLDEN + k1) ^ k2)
    return (np.float64(h >> _S11) + 0.5) * _INV53


@numba.njit(cache=True)
def _normal(k1, k2, a, b, c):
    """Standard normal for counter ``b``: Box-Muller over the pair ``b // 2``."""
    u1 = _uniform(k1, k2, a, b // 2, c)
    u2 = _uniform(k1, k2, a, b // 2, c + 1)
    r = math.sqrt(-2.0 * math.log(u1))
    if b % 2 == 0:
        return r * math.cos(2.0 * math.pi * u2)
    return r * math.sin(2.0 * math.pi * u2)


@numba.njit(cache=True)
def _normal_sum(k1, k2, a, b0, count, c):
    """Sum of the normals for counters ``b0 .. b0 + count - 1`` (both halves of each pair reused)."""
    total = 0.0
    b = b0
    end = b0 + count
    while b < end:
        if b % 2 == 0 and b + 1 < end:
            u1 = _uniform(k1, k2, a, b // 2, c)
            u2 = _uniform(k1, k2, a, b // 2, c + 1)
            r = math.sqrt(-2.0 * math.log(u1))
            total += r * (math.cos(2.0 * math.pi * u2) + math.sin(2.0 * math.pi * u2))
            b += 2
        else:
            total += _normal(k1, k2, a, b, c)
            b += 1
    return total


@numba.njit(cache=True)
def _hit_time(k1, k2, label, step, d0, d1, h):
    """Locate the first zero of the gap bridge from ``d0 > 0`` to ``d1`` over ``[0, h]``.

    The gap between two independent BMs has variance rate 2; the interval is
    halved ``_LEVELS`` times by sampling the bridge midpoint and picking the
    half holding the first hit.  Returns the centre of the last interval.
    """
    lo = 0.0
    for lev in range(_LEVELS):
        half = h / 2.0
        mid = 0.5 * (d0 + d1) + math.sqrt(half) * _normal(k1, k2, label, 2 * step, _C_MID + 2 * lev)
        if mid <= 0.0:
            d1 = mid
        else:
            qL = math.exp(-d0 * mid / half)
            qR = 1.0 if d1 <= 0.0 else math.exp(-mid * d1 / half)
            if _uniform(k1, k2, label, step, _C_PICK + lev) * (1.0 - (1.0 - qL) * (1.0 - qR)) < qL:
                d1 = mid
            else:
                lo += half
                d0 = mid
        h = half
    return lo + 0.5 * h


@numba.njit(cache=True)
def _cbm(k1, k2, x0, start_step, gap, times, sub, record, rec, coal, final):
    """Core coalescing-BM kernel.

    Labels ``0..n-1`` are sorted by ``(start_step, x0)``.  A label joins at
    grid time ``times[start_step]`` after a free move of variance ``gap``.  Each
    step sums ``sub`` fine normals per cluster and merges neighbours whose
    order reversed or whose connecting bridge hit zero; the right cluster
    then follows the left one.  ``final[label]`` gets the terminal position
    of the label's cluster and ``coal[label]`` its merge time (NaN if none).
    Returns the number of clusters alive at the end.
    """
    n = x0.shape[0]
    pos = np.empty(n)
    new = np.empty(n)
    root = np.arange(n)
    act = np.empty(n, np.int64)
    nxt = np.empty(n, np.int64)
    carry = np.full(n, -1.0)
    nact = 0
    nxt_label = 0
    nsteps = times.shape[0] - 1
    for k in range(nsteps + 1):
        # activation
        while nxt_label < n and start_step[nxt_label] == k:
            lab = nxt_label
            nxt_label += 1
            x = x0[lab]
            if gap[lab] > 0.0:
                x += math.sqrt(gap[lab]) * _normal(k1, k2, lab, 0, _C_GAP)
            pos[lab] = x
            coal[lab] = np.nan
            q = nact
            while q > 0 and pos[act[q - 1]] > x:
                act[q] = act[q - 1]
                q -= 1
            act[q] = lab
            nact += 1
        if record:
            for lab in range(nxt_label):
                r = lab
                while root[r] != r:
                    r = root[r]
                rec[lab, k] = pos[r]
        if k == nsteps:
            break
        dt = times[k + 1] - times[k]
        sq = math.sqrt(dt / sub)
        for q in range(nact):
            c = act[q]
            new[c] = pos[c] + sq * _normal_sum(k1, k2, c, k * sub, sub, _C_NORMAL)
        m = 0
        cur = act[0] if nact > 0 else -1
        ctr = k * sub
        for q in range(1, nact):
            c = act[q]
            d0 = pos[c] - pos[cur]
            d1 = new[c] - new[cur]
            merge = d0 <= 0.0 or d1 <= 0.0
            if not merge:
                # odd counters reuse the leftover of the previous test, so a
                # run on the halved grid decides each coarse step with the
                # same uniform as the coarse run
                if ctr % 2 == 1 and carry[c] >= 0.0:
                    u = carry[c]
                else:
                    u = _uniform(k1, k2, c, ctr, _C_BRIDGE)
                hit = math.exp(-d0 * d1 / dt)
                merge = u < hit
                if not merge and ctr % 2 == 0:
                    carry[c] = (u - hit) / (1.0 - hit)
            if merge:
                root[c] = cur
                tc = 0.0 if d0 <= 0.0 else _hit_time(k1, k2, c, k * sub, d0, d1, dt)
                coal[c] = times[k] + tc
            else:
                nxt[m] = cur
                m += 1
                cur = c
        if nact > 0:
            nxt[m] = cur
            m += 1
        if ctr % 2 == 1:
            for q in range(m):
                carry[nxt[q]] = -1.0
        for q in range(m):
            act[q] = nxt[q]
            pos[nxt[q]] = new[nxt[q]]
        nact = m
    for lab in range(n):
        r = lab
        while root[r] != r:
            r = root[r]
        final[lab] = pos[r]
    return nact


@dataclass
class CoalescingBMSystem:
    starts: List[Tuple[float, float]]
    dt: float
    paths: PathSet
    coalescence_times: np.ndarray


def _prepare(starts: Sequence[Tuple[float, float]], t: float, dt: float):
    if not dt > 0 or dt > t / 100 * (1 + 1e-12):
        raise ValueError("need 0 < dt <= t / 100")
    if len(starts) == 0:
        raise ValueError("need at least one start")
    st = np.array(starts, dtype=float).reshape(-1, 2)
    t_first = float(st[:, 1].min())
    nsteps = int(round(t / dt))
    steps = np.ceil((st[:, 1] - t_first) / dt - 1e-9).astype(np.int64)
    if np.any(steps > nsteps):
        raise ValueError("start time after the end of the run")
    order = np.lexsort((st[:, 0], steps))
    gap = t_first + steps * dt - st[:, 1]
    gap[gap < 1e-12] = 0.0
    return st, order, steps, gap, t_first + dt * np.arange(nsteps + 1)


def simulate_cbm(starts: Sequence[Tuple[float, float]], t: float, dt: float, seed: int,
                 sub: int = 1) -> CoalescingBMSystem:
    """Coalescing BMs from ``(space, time)`` starts, run for duration ``t`` from the earliest start.

    A start between grid times joins at the next grid time after a free
    Gaussian move over the gap.  ``sub`` fine normals are summed per step,
    so ``(dt, sub=2)`` and ``(dt / 2, sub=1)`` share the same Brownian paths.
    """
    st, order, steps, gap, grid = _prepare(starts, t, dt)
    n = len(st)
    k1, k2 = (np.uint64(k) for k in seed_keys(np.uint64(seed)))
    rec = np.full((n, len(grid)), np.nan)
    coal = np.empty(n)
    final = np.empty(n)
    _cbm(k1, k2, st[order, 0].copy(), steps[order].copy(), gap[order].copy(), grid,
         sub, True, rec, coal, final)
    paths: List[Optional[ScaledPath]] = [None] * n
    coal_out = np.empty(n)
    for lab, orig in enumerate(order):
        k0 = steps[orig]
        s0 = st[orig, 1]
        times = grid[k0:]
        vals = rec[lab, k0:]
        if s0 < times[0] - 1e-12:
            times = np.r_[s0, times]
            vals = np.r_[st[orig, 0], vals]
        paths[orig] = ScaledPath(times, vals)
        coal_out[orig] = coal[lab]
    return CoalescingBMSystem([tuple(s) for s in st.tolist()], dt, PathSet(paths), coal_out)


@numba.njit(cache=True)
def _eta_hat_runs(seeds, x0, times, sub, a, b, out):
    n = x0.shape[0]
    zeros_i = np.zeros(n, np.int64)
    zeros_f = np.zeros(n)
    rec = np.empty((0, 0))
    coal = np.empty(n)
    final = np.empty(n)
    for r in range(seeds.shape[0]):
        k1, k2 = seed_keys(seeds[r])
        _cbm(k1, k2, x0, zeros_i, zeros_f, times, sub, False, rec, coal, final)
        # clusters are identified by their terminal position
        cnt = 0
        last = np.nan
        for lab in range(n):
            v = final[lab]
            if v != last:
                if a < v < b:
                    cnt += 1
                last = v
        out[r] = cnt


def start_grid(t: float, a: float, b: float, spacing: float = 0.1, reach: float = 5.0) -> np.ndarray:
    """Evenly spaced starts covering ``[a - reach sqrt t, b + reach sqrt t]``."""
    lo = a - reach * math.sqrt(t)
    hi = b + reach * math.sqrt(t)
    return lo + spacing * np.arange(int(math.floor((hi - lo) / spacing)) + 1)


def time_grid(t: float, steps: int, spacing: float, ratio: float = 0.05) -> np.ndarray:
    """Times ``0 = s_0 < ... < s_K = t`` with step ``min(t / steps, max(e0, ratio s))``.

    Right after a grid start the gaps are ``spacing`` wide and the
    typical gap at time ``s`` is of order ``sqrt s``, so steps proportional to
    ``s`` keep several neighbours from interacting within one step.
    ``e0 = spacing^2 / 100`` sets the first steps.
    """
    dt = t / steps
    e0 = min(dt, spacing * spacing / 100.0)
    out = [0.0]
    s = 0.0
    while s < t:
        h = min(dt, max(e0, ratio * s))
        s = min(t, s + h)
        if t - s < 1e-9 * t:
            s = t
        out.append(s)
    return np.array(out)


def halve_grid(times: np.ndarray) -> np.ndarray:
    """Insert every midpoint."""
    out = np.empty(2 * len(times) - 1)
    out[0::2] = times
    out[1::2] = 0.5 * (times[:-1] + times[1:])
    return out


def eta_hat_bw_samples(t: float, a: float, b: float, replicates: int, seed: int,
                       steps: int = 100, halved: bool = False, spacing: float = 0.1,
                       ratio: float = 0.05) -> np.ndarray:
    """Per-replicate ``eta_hat(0, t; a, b)`` for coalescing BMs started on a fine grid at time 0.

    The Brownian paths are built from normals on the midpoint-refined grid,
    so ``halved=True`` reruns the same paths with every step cut in two.
    """
    x0 = start_grid(t, a, b, spacing)
    grid = time_grid(t, steps, spacing, ratio)
    if halved:
        grid, sub = halve_grid(grid), 1
    else:
        sub = 2
    out = np.empty(replicates, np.int64)
    seeds = np.array([derive_seed(np.uint64(seed), r) for r in range(replicates)], np.uint64)
    _eta_hat_runs(seeds, x0, grid, sub, a, b, out)
    return out


# --- coalescing simple random walks ----------------------------------------


@numba.njit(cache=True)
def _csrw(k1, k2, x0, n, rec):
    m = x0.shape[0]
    root = np.arange(m)
    pos = x0.copy()
    for lab in range(m):
        rec[lab, 0] = pos[lab]
    for j in range(n):
        for lab in range(m):
            if root[lab] == lab:
                up = _uniform(k1, k2, lab, j, 0) < 0.5
                pos[lab] += 1 if up else -1
        # merge clusters that landed on the same site; the left label leads
        for lab in range(1, m):
            if root[lab] == lab:
                for q in range(lab - 1, -1, -1):
                    if root[q] == q:
                        if pos[q] == pos[lab]:
                            root[lab] = q
                        break
        for lab in range(m):
            r = lab
            while root[r] != r:
                r = root[r]
            rec[lab, j + 1] = pos[r]


def simulate_csrw(starts: Sequence[int], n: int, seed: int) -> PathSet:
    """Coalescing +-1 walks from even ``starts`` at time 0 for ``n`` steps."""
    x = np.array(sorted(starts), dtype=np.int64)
    if np.any(x % 2) or len(np.unique(x)) != len(x):
        raise ValueError("starts must be distinct even integers")
    k1, k2 = (np.uint64(k) for k in seed_keys(np.uint64(seed)))
    rec = np.empty((len(x), n + 1), np.int64)
    _csrw(k1, k2, x, n, rec)
    return PathSet(LatticePath(0, row) for row in rec)


def exact_pair_meeting(d: int, n: int) -> float:
    """P(two independent +-1 walks started ``2d`` apart meet within ``n`` steps).

    Half the gap moves by -1, 0, +1 with probabilities 1/4, 1/2, 1/4 and is
    absorbed at 0.
    """
    d = abs(int(d))
    if d == 0:
        return 1.0
    if n < d:
        return 0.0
    size = d + n + 2
    prob = np.zeros(size)
    prob[d] = 1.0
    absorbed = 0.0
    for _ in range(n):
        nxt = 0.5 * prob
        nxt[1:] += 0.25 * prob[:-1]
        nxt[:-1] += 0.25 * prob[1:]
        absorbed += nxt[0]
        nxt[0] = 0.0
        prob = nxt
    return float(absorbed)
