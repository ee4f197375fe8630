import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grmac.formats import (
    FpFormat,
    FpScalar,
    all_codes,
    code_values,
    decode,
    decode_code,
    encode,
    format_sqnr_db,
    min_normal,
    parse_format,
    quantize,
    quantize_array,
)

SMALL_FORMATS = [FpFormat(ne, nm) for ne in range(0, 5) for nm in range(0, 5) if 1 + ne + nm <= 8 and ne + nm >= 1]


def enumerated_grid(fmt: FpFormat) -> list[Fraction]:
    """Every representable magnitude, built from the value formula with exact fractions."""
    e_max = 2**fmt.n_e - 1
    out = set()
    for e_stored in range(2**fmt.n_e):
        e = max(e_stored, 1)
        for mant in range(2**fmt.n_m):
            if fmt.n_e == 0:
                m = Fraction(mant, 2 ** (fmt.n_m + 1))
            elif e_stored == 0:
                m = Fraction(mant, 2 ** (fmt.n_m + 1))
            else:
                m = Fraction(2**fmt.n_m + mant, 2 ** (fmt.n_m + 1))
            out.add(m * Fraction(2) ** (e - e_max))
    return sorted(out)


def nearest_even(x: float, fmt: FpFormat) -> float:
    """Oracle: nearest grid value by search, ties to the even code, saturating."""
    grid = enumerated_grid(fmt)
    a = Fraction(abs(x))
    if a >= grid[-1]:
        best = grid[-1]
    else:
        dists = [abs(g - a) for g in grid]
        d = min(dists)
        ties = [g for g, dd in zip(grid, dists) if dd == d]
        if len(ties) == 1:
            best = ties[0]
        else:
            best = next(g for g in ties if encode(quantize(float(g), fmt), fmt) % 2 == 0)
    return math.copysign(float(best), x)


class TestParse:
    @pytest.mark.parametrize(
        "text, ne, nm",
        [("E2M1", 2, 1), ("e3m2", 3, 2), ("FP4_E2M1", 2, 1), ("E0M7", 0, 7), (" E4M3 ", 4, 3)],
    )
    def test_literals(self, text, ne, nm):
        assert parse_format(text) == FpFormat(ne, nm)

    @pytest.mark.parametrize("text", ["", "E2", "M3", "E-1M2", "FP4", "E2M1x"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            parse_format(text)

    def test_width_and_emax(self):
        f = FpFormat(3, 2)
        assert f.width == 6
        assert f.e_max == 7


class TestDecode:
    def test_leading_normal_binade(self):
        f = FpFormat(2, 1)
        assert decode(FpScalar(1, 0.5, f.e_max, False), f) == 0.5

    def test_lowest_normal_e2m1(self):
        assert decode(FpScalar(1, 0.5, 1, False), FpFormat(2, 1)) == 0.125

    def test_subnormal_e2m2(self):
        assert decode(FpScalar(-1, 0.25, 1, True), FpFormat(2, 2)) == -0.0625

    @pytest.mark.parametrize("fmt", SMALL_FORMATS, ids=str)
    def test_code_table_matches_enumeration(self, fmt):
        mags = sorted({Fraction(abs(v)) for v in code_values(fmt)})
        assert mags == enumerated_grid(fmt)

    @pytest.mark.parametrize("fmt", SMALL_FORMATS, ids=str)
    def test_magnitudes_within_unit_interval(self, fmt):
        v = np.abs(code_values(fmt))
        assert v.max() < 1.0 and v.min() == 0.0

    @pytest.mark.parametrize("fmt", [FpFormat(2, 2), FpFormat(3, 3), FpFormat(4, 1)], ids=str)
    def test_subnormal_step_equals_first_binade_step(self, fmt):
        grid = enumerated_grid(fmt)
        low = [g for g in grid if g < 2 * Fraction(min_normal(fmt))]
        steps = {b - a for a, b in zip(low, low[1:])}
        assert steps == {Fraction(min_normal(fmt)) / 2**fmt.n_m}


class TestQuantize:
    def test_zero(self):
        s = quantize(0.0, FpFormat(2, 1))
        assert (s.sign, s.m, s.is_subnormal) == (1, 0.0, True)

    def test_example_040_e2m1(self):
        s = quantize(0.40, FpFormat(2, 1))
        assert (s.m, s.e) == (0.75, 2)
        assert decode(s, FpFormat(2, 1)) == 0.375
        assert nearest_even(0.40, FpFormat(2, 1)) == 0.375

    def test_clip_at_one(self):
        f = FpFormat(2, 1)
        assert decode(quantize(1.0, f), f) == max(code_values(f))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            quantize(math.nan, FpFormat(2, 1))
        with pytest.raises(ValueError):
            quantize_array([0.1, math.inf], FpFormat(2, 1))

    @pytest.mark.parametrize("fmt", SMALL_FORMATS, ids=str)
    def test_round_trip_every_code(self, fmt):
        for c in all_codes(fmt):
            v = decode_code(c, fmt)
            s = quantize(v, fmt)
            assert decode(s, fmt) == v
            if v != 0.0:
                assert encode(s, fmt) == c

    @pytest.mark.parametrize("fmt", [FpFormat(2, 1), FpFormat(2, 2), FpFormat(3, 2), FpFormat(0, 3)], ids=str)
    def test_matches_enumeration_oracle(self, fmt):
        rng = np.random.default_rng(7)
        xs = rng.uniform(-1, 1, 400)
        # include exact midpoints to exercise the ties-to-even rule
        grid = [float(g) for g in enumerated_grid(fmt)]
        mids = [(a + b) / 2 for a, b in zip(grid, grid[1:])]
        for x in list(xs) + mids + [-m for m in mids]:
            assert float(quantize_array(x, fmt)) == nearest_even(x, fmt), x

    def test_below_half_step_rounds_to_signed_zero(self):
        f = FpFormat(2, 1)
        tiny = min_normal(f) / 2**f.n_m / 2 * 0.99
        q = quantize_array(-tiny, f)
        assert q == 0.0 and math.copysign(1.0, q) == -1.0

    @settings(max_examples=300, deadline=None)
    @given(
        st.floats(-1, 1, allow_nan=False),
        st.floats(-1, 1, allow_nan=False),
        st.sampled_from(SMALL_FORMATS),
    )
    def test_monotone(self, x, y, fmt):
        lo, hi = min(x, y), max(x, y)
        assert quantize_array(lo, fmt) <= quantize_array(hi, fmt)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1, 1, allow_nan=False), st.sampled_from(SMALL_FORMATS))
    def test_idempotent(self, x, fmt):
        q = quantize_array(x, fmt)
        assert quantize_array(q, fmt) == q


class TestMetrics:
    @pytest.mark.parametrize("n_m, expected", [(2, 22.83), (0, 10.79), (4, 34.87)])
    def test_format_sqnr(self, n_m, expected):
        assert format_sqnr_db(n_m) == pytest.approx(expected, abs=1e-9)
        assert format_sqnr_db(FpFormat(3, n_m)) == pytest.approx(expected, abs=1e-9)

    def test_35db_edge_standard_is_about_four_bits(self):
        assert abs(format_sqnr_db(4) - 35.0) < 0.2

    @pytest.mark.parametrize("fmt, expected", [(FpFormat(2, 1), 0.125), (FpFormat(3, 1), 2.0**-7), (FpFormat(0, 4), 0.5)])
    def test_min_normal(self, fmt, expected):
        assert min_normal(fmt) == expected
