import numpy as np
import pytest
from hypothesis import given, strategies as st

from pimslice.bitslice import (
    Slicing,
    enumerate_slicings,
    reconstruct,
    slice_array,
    slice_operand,
    slice_signed,
    unsigned_bit_slices,
)


def count_compositions(n, max_part):
    # a(n) = a(n-1) + ... + a(n-max_part), a(0) = 1
    a = [1] + [0] * n
    for i in range(1, n + 1):
        a[i] = sum(a[i - k] for k in range(1, max_part + 1) if i - k >= 0)
    return a[n]


class TestEnumeration:
    def test_count_is_108(self):
        assert len(enumerate_slicings(8, 4)) == 108

    @pytest.mark.parametrize("n,m", [(1, 1), (4, 2), (6, 3), (8, 4), (8, 8), (10, 4)])
    def test_matches_recurrence(self, n, m):
        assert len(enumerate_slicings(n, m)) == count_compositions(n, m)

    def test_all_distinct_and_valid(self):
        s = enumerate_slicings()
        assert len({x.widths for x in s}) == len(s)
        assert all(sum(x.widths) == 8 and max(x.widths) <= 4 for x in s)

    def test_lexicographic(self):
        widths = [x.widths for x in enumerate_slicings()]
        assert widths == sorted(widths)
        assert widths[0] == (1,) * 8
        assert widths[-1] == (4, 4)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            enumerate_slicings(0, 4)


class TestSlicing:
    def test_parse_and_str(self):
        s = Slicing.parse("4,2,2")
        assert s.widths == (4, 2, 2)
        assert str(s) == "4-2-2"
        assert Slicing.parse("4-2-2") == s

    def test_ranges_msb_first(self):
        assert Slicing((4, 2, 2)).ranges == [(7, 4), (3, 2), (1, 0)]
        assert Slicing((4, 2, 2)).lows == [4, 2, 0]

    @pytest.mark.parametrize("bad", [(4, 4, 1), (5, 3), (0, 8), ()])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            Slicing(bad)


class TestSignedSlice:
    def test_examples(self):
        # 0b1101_0110 = 214
        assert slice_signed(7, 4, 214) == 13
        assert slice_signed(3, 0, 214) == 6
        assert slice_signed(7, 4, -214) == -13
        assert slice_signed(3, 2, 0) == 0

    def test_vectorized_matches_scalar(self):
        x = np.arange(-255, 256)
        v = slice_signed(5, 2, x)
        assert [slice_signed(5, 2, int(i)) for i in x] == v.tolist()

    def test_roundtrip_every_value_every_slicing(self):
        x = np.arange(-255, 256)
        for s in enumerate_slicings():
            sl = slice_array(x, s)
            total = sum(sl[i] << l for i, (_, l) in enumerate(s.ranges))
            assert np.array_equal(total, x), s

    @given(st.integers(-255, 255), st.sampled_from(enumerate_slicings()))
    def test_roundtrip_property(self, x, s):
        parts = slice_operand(x, s)
        assert reconstruct(parts) == x
        assert all(abs(p.value) < (1 << 4) for p in parts)
        assert all(p.value == 0 or (p.value > 0) == (x > 0) for p in parts)


class TestUnsignedBitSlices:
    def test_reconstructs(self):
        x = np.arange(256)
        for widths in [(4, 2, 2), (1,) * 8, (4, 4)]:
            sl = unsigned_bit_slices(x, widths)
            lows = np.cumsum((0,) + widths[::-1])[:-1][::-1]
            assert np.array_equal((sl << lows[:, None]).sum(0), x)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            unsigned_bit_slices(np.array([-1]), (4, 4))
