import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import center_cost, exhaustive_center
from pimslice.bitslice import Slicing, enumerate_slicings
from pimslice.encoder import (
    CENTER,
    UNSIGNED,
    ZERO,
    CenterSolver,
    FilterChunk,
    center_costs,
    chunk_bounds,
    column_cost,
    encode_filter,
    offsets,
    solve_center,
    solve_centers,
    weight_histograms,
)

S44 = Slicing((4, 4))


class TestOffsets:
    @pytest.mark.parametrize("w,c,expected", [(10, 7, (3, 0)), (5, 7, (0, 2)), (7, 7, (0, 0))])
    def test_examples(self, w, c, expected):
        assert offsets(w, c) == expected

    def test_identity_array(self, rng):
        w = rng.integers(0, 256, 1000)
        pos, neg = offsets(w, 77)
        assert np.array_equal(77 + pos - neg, w)
        assert not np.any((pos > 0) & (neg > 0))


class TestColumnCost:
    def test_zero_when_all_equal(self):
        for s in enumerate_slicings()[::7]:
            assert column_cost([100, 100], 100, s) == 0

    def test_symmetric_cancel(self):
        assert column_cost([90, 110], 100, S44) == 0

    def test_off_center(self):
        assert column_cost([90, 110], 99, S44) == 16

    def test_matches_table_costs(self, rng):
        w = rng.integers(0, 256, 40)
        s = Slicing((2, 3, 1, 2))
        table = center_costs(weight_histograms(w[None]), s)[0]
        for phi in (1, 50, 128, 255):
            assert table[phi - 1] == column_cost(w, phi, s) == center_cost(w.tolist(), phi,
                                                                            s.widths)


class TestSolveCenter:
    @pytest.mark.parametrize("c", [1, 17, 128, 255])
    def test_constant_chunk(self, c):
        assert solve_center([c] * 9, S44) == c

    def test_symmetric_pair(self):
        assert solve_center([90, 110], S44) == 100

    def test_ties_take_smallest(self):
        # edge chunks where several centers share the minimum cost
        for w in ([0, 0], [255], [0, 255], [3, 4]):
            for s in (S44, Slicing((1,) * 8), Slicing((4, 2, 2))):
                assert solve_center(w, s) == exhaustive_center(w, s.widths)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(0, 255), min_size=2, max_size=40),
           st.sampled_from(enumerate_slicings()))
    def test_matches_exhaustive_oracle(self, w, s):
        assert solve_center(w, s) == exhaustive_center(w, s.widths)

    def test_large_chunk_exact(self, rng):
        # 512 weights: costs exceed int64 in float terms unless handled exactly
        w = rng.integers(0, 256, 512)
        phi = solve_center(w, Slicing((1,) * 8))
        costs = [center_cost(w.tolist(), p, (1,) * 8) for p in (phi - 1, phi, phi + 1)
                 if 1 <= p <= 255]
        assert center_cost(w.tolist(), phi, (1,) * 8) == min(costs)

    def test_gaussian_center_near_mean(self, rng):
        w = np.clip(np.rint(rng.normal(140, 15, 512)), 0, 255).astype(int)
        phi = solve_center(w, Slicing((4, 2, 2)))
        assert abs(phi - w.mean()) < 10


class TestSolveCenters:
    def test_modes(self, rng):
        w = rng.integers(0, 256, (3, 700))
        assert chunk_bounds(700, 512) == [(0, 512), (512, 700)]
        assert np.array_equal(solve_centers(w, S44, 512, UNSIGNED), np.zeros((3, 2)))
        assert np.array_equal(solve_centers(w, S44, 512, ZERO, 128), np.full((3, 2), 128))
        c = solve_centers(w, S44, 512, CENTER)
        assert c.shape == (3, 2)
        assert c[1, 1] == solve_center(w[1, 512:], S44)

    def test_solver_cache_matches(self, rng):
        w = rng.integers(0, 256, (4, 300))
        solver = CenterSolver(w, 128)
        for s in enumerate_slicings()[::13]:
            assert np.array_equal(solver.solve(s), solve_centers(w, s, 128))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            solve_centers(np.zeros((1, 2)), S44, 512, "bogus")


class TestEncodeFilter:
    def test_constant(self):
        enc = encode_filter(FilterChunk(np.array([100, 100])), S44)
        assert enc.center == 100
        assert all(not np.any(c) for c in enc.slice_columns)

    def test_pair(self):
        enc = encode_filter([90, 110], S44)
        assert enc.center == 100
        assert enc.slice_columns[0].tolist() == [0, 0]
        assert enc.slice_columns[1].tolist() == [-10, 10]
        assert enc.decode().tolist() == [90, 110]

    def test_decode_roundtrip(self, rng):
        w = rng.integers(0, 256, 64)
        for s in enumerate_slicings()[::11]:
            assert np.array_equal(encode_filter(w, s).decode(), w)

    def test_rejects_oversized_chunk(self):
        with pytest.raises(ValueError):
            encode_filter(np.zeros(513, dtype=int), S44)

    @pytest.mark.parametrize("bad", [[], [256], [-1]])
    def test_bad_chunk(self, bad):
        with pytest.raises(ValueError):
            FilterChunk(np.array(bad))
