"""Space-time lattice Z^2_even, oriented edges, and a hashed Bernoulli edge field.

Edge openness is a pure function of ``(seed, x, i, direction)`` computed by a
counter-based hash, so any edge can be sampled in any order and two replicates
never share generator state.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Tuple

import numba
import numpy as np

# |x|, |i| must stay below this for the edge key to be injective.
COORD_LIMIT = 1 << 30

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S32 = np.uint64(32)
_ONE = np.uint64(1)
_OFF = np.int64(COORD_LIMIT)
_INV53 = 1.0 / 9007199254740992.0

RIGHT = 1
LEFT = 0

# Above p_c for bond oriented percolation on Z^2_even (~0.6447); used only
# for a warning in experiment drivers.
SUPERCRITICAL_WARNING_P = 0.65


class CoordinateOverflow(ValueError):
    """A coordinate left the range the edge hash can encode."""


@numba.njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(cache=True)
def seed_keys(seed):
    s = np.uint64(seed)
    return mix64(s), mix64(s + _GOLDEN)


@numba.njit(cache=True, inline="always")
def edge_uniform(k1, k2, x, i, d):
    key = (np.uint64(i + _OFF) << _S32) | (np.uint64(x + _OFF) << _ONE) | np.uint64(d)
    h = mix64(mix64(key * _GOLDEN + np.uint64(k1)) ^ np.uint64(k2))
    return np.float64(h >> _S11) * _INV53


@numba.njit(cache=True, inline="always")
def edge_open(k1, k2, p, x, i, d):
    return edge_uniform(k1, k2, x, i, d) < p


@numba.njit(cache=True)
def derive_seed(master, index):
    """Independent child seed for replicate/cell ``index`` of ``master``."""
    k1, k2 = seed_keys(master)
    return mix64(mix64(np.uint64(index) * _GOLDEN + np.uint64(k1)) ^ np.uint64(k2))


@numba.njit(cache=True)
def replicate_seeds(master, count):
    out = np.empty(count, np.uint64)
    for r in range(count):
        out[r] = derive_seed(master, r)
    return out


def check_coords(x: int, i: int) -> None:
    if abs(x) >= COORD_LIMIT or abs(i) >= COORD_LIMIT:
        raise CoordinateOverflow(f"site ({x}, {i}) outside |coord| < 2^30")


class Direction(enum.IntEnum):
    LEFT = LEFT
    RIGHT = RIGHT

    @property
    def step(self) -> int:
        return 1 if self is Direction.RIGHT else -1


@dataclass(frozen=True, order=True)
class Site:
    x: int
    i: int

    def __post_init__(self):
        if (self.x + self.i) % 2:
            raise ValueError(f"({self.x}, {self.i}) is not in Z^2_even")


@dataclass(frozen=True)
class Edge:
    frm: Site
    dir: Direction

    @property
    def target(self) -> Site:
        return Site(self.frm.x + self.dir.step, self.frm.i + 1)

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.frm.x, self.frm.i, int(self.dir))


def children(z: Site) -> Tuple[Site, Site]:
    return Site(z.x - 1, z.i + 1), Site(z.x + 1, z.i + 1)


def parents(z: Site) -> Tuple[Site, Site]:
    return Site(z.x - 1, z.i - 1), Site(z.x + 1, z.i - 1)


@dataclass(frozen=True)
class EdgeField:
    """Bernoulli(p) product measure on oriented edges, keyed by ``seed``."""

    p: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not 0 <= int(self.seed) < 1 << 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def keys(self) -> Tuple[np.uint64, np.uint64]:
        k1, k2 = seed_keys(np.uint64(self.seed))
        return np.uint64(k1), np.uint64(k2)

    def is_open(self, e: Edge) -> bool:
        check_coords(e.frm.x, e.frm.i)
        k1, k2 = self.keys
        return bool(edge_open(k1, k2, self.p, e.frm.x, e.frm.i, int(e.dir)))

    def open_at(self, x: int, i: int, d: int) -> bool:
        """Raw-coordinate form of :meth:`is_open` (no parity check)."""
        check_coords(x, i)
        k1, k2 = self.keys
        return bool(edge_open(k1, k2, self.p, x, i, d))

    def replicate(self, index: int) -> "EdgeField":
        return EdgeField(self.p, int(derive_seed(np.uint64(self.seed), index)))


def open_fraction(field: EdgeField, xs: np.ndarray, i_s: np.ndarray, ds: np.ndarray) -> float:
    k1, k2 = field.keys
    return float(_open_count(k1, k2, field.p, xs, i_s, ds)) / len(xs)


@numba.njit(cache=True)
def _open_count(k1, k2, p, xs, i_s, ds):
    c = 0
    for m in range(xs.shape[0]):
        if edge_open(k1, k2, p, xs[m], i_s[m], ds[m]):
            c += 1
    return c


@numba.njit(cache=True)
def edge_bits_over_seeds(seeds, p, x, i, d):
    """Openness of one fixed edge across many seeds."""
    out = np.empty(seeds.shape[0], np.bool_)
    for r in range(seeds.shape[0]):
        k1, k2 = seed_keys(seeds[r])
        out[r] = edge_open(k1, k2, p, x, i, d)
    return out
