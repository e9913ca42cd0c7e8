import numpy as np
import pytest
from hypothesis import given, strategies as st

from opbw import _search
from opbw.exploration import (BatchRunner, WindowTouched, coalescence_time, decode_edge,
                              encode_edge, explore, first_meeting, right_edge_adaptive,
                              right_edge_oracle)
from opbw.lattice import Direction, Edge, EdgeField, Site
from opbw.paths import LatticePath


def test_straight_boundaries_at_p1():
    c = explore(EdgeField(1.0, 0), Site(2, 0), 6)
    assert c.left.positions.tolist() == list(range(2, 9))
    assert c.right == c.left


def test_explore_rejects_past_horizon():
    with pytest.raises(ValueError):
        explore(EdgeField(0.8, 0), Site(0, 4), 2)


@given(st.integers(-1000, 1000), st.integers(-1000, 1000), st.sampled_from(list(Direction)))
def test_edge_codec_roundtrip(x, i, d):
    if (x + i) % 2:
        x += 1
    e = Edge(Site(x, i), d)
    assert decode_edge(encode_edge(e)) == e


@pytest.mark.parametrize("p", [0.6, 0.75, 0.9])
def test_right_edge_matches_propagation(p):
    rng = np.random.default_rng(3)
    for _ in range(500):
        f = EdgeField(p, int(rng.integers(0, 1 << 62)))
        n = int(rng.integers(0, 40))
        z = Site(0, 0)
        assert explore(f, z, n, record=False).right == right_edge_adaptive(f, z, n)


def test_boundaries_well_formed():
    rng = np.random.default_rng(4)
    for _ in range(200):
        f = EdgeField(0.75, int(rng.integers(0, 1 << 62)))
        c = explore(f, Site(0, 2), 34)
        assert c.left.is_valid()
        assert np.all(c.left.positions <= c.right.positions)
        assert c.left.at(34) == c.right.at(34)
        for j in range(2, 34):
            x, y = c.left.at(j), c.left.at(j + 1)
            assert encode_edge(Edge(Site(x, j), Direction(int(y > x)))) in c.examined
            assert f.open_at(x, j, int(y > x))


def test_window_touched_when_confined_process_dies():
    f = EdgeField(0.3, 1)
    with pytest.raises(WindowTouched):
        right_edge_oracle(f, Site(0, 0), 40, 0)


def test_first_meeting_and_coalescence():
    a = LatticePath(0, [0, 1, 2, 3])
    b = LatticePath(1, [3, 2, 3])
    assert first_meeting(a, b) == 2
    assert first_meeting(a, LatticePath(0, [2, 3, 4, 5])) is None
    f = EdgeField(1.0, 0)
    assert coalescence_time(f, Site(0, 0), Site(2, 0), 10) is None
    assert coalescence_time(f, Site(0, 0), Site(0, 0), 10) == 0
    with pytest.raises(ValueError):
        coalescence_time(f, Site(2, 0), Site(0, 0), 10)


def test_batch_runner_matches_explore():
    rng = np.random.default_rng(5)
    runner = BatchRunner(30)
    starts = np.array([-4, 0, 2, 6], np.int64)
    for _ in range(100):
        f = EdgeField(0.8, int(rng.integers(0, 1 << 62)))
        out = runner.right_edges(f.keys, f.p, starts, 64)
        expect = [explore(f, Site(int(y), 0), 30, record=False).right.at(30) for y in starts]
        assert out.tolist() == expect
        ok, tau = runner.pair_tau(f.keys, f.p, 0, 6, 64)
        assert ok
        t = coalescence_time(f, Site(0, 0), Site(6, 0), 30)
        assert tau == (-1 if t is None else t)


def test_search_table_growth_is_transparent():
    f = EdgeField(0.7, 99)
    small = _search.Workspace(200, table_bits=4)
    big = _search.Workspace(200, table_bits=18)
    for ws in (small, big):
        assert _search.search(ws, f.keys, f.p, 0, 0, 200, 64) == _search.OK
    assert np.array_equal(small.path[:201], big.path[:201])
    assert np.array_equal(small.rmax[:201], big.rmax[:201])
