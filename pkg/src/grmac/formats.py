"""Low-bit floating-point formats normalized to the unit interval.

A format ``E<ne>M<nm>`` has one sign bit, ``ne`` exponent bits and ``nm``
stored mantissa bits. Values are scaled so the largest binade is
``[0.5, 1)``:

    x = (-1)^S * M * 2^(E - E_max),   E_max = 2^ne - 1

with ``M = 1.m / 2`` for normal codes and ``M = 0.m / 2`` for the
subnormal code (stored exponent 0, effective exponent 1). Every exponent
code is a value code; there are no NaN/Inf encodings. ``ne = 0`` gives a
sign-magnitude integer grid with step ``2^-nm``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "FpFormat",
    "FpScalar",
    "parse_format",
    "quantize",
    "quantize_array",
    "decode",
    "decode_code",
    "encode",
    "decompose",
    "all_codes",
    "code_values",
    "format_sqnr_db",
    "sqnr_db_for_bits",
    "min_normal",
]

_FORMAT_RE = re.compile(r"^\s*(?:FP\d+_)?E(\d+)M(\d+)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class FpFormat:
    n_e: int
    n_m: int
    signed: bool = True

    def __post_init__(self):
        if self.n_e < 0 or self.n_m < 0:
            raise ValueError(f"bit counts must be non-negative, got E{self.n_e}M{self.n_m}")
        if self.n_e > 10:
            raise ValueError("exponent fields wider than 10 bits are not supported")

    @property
    def width(self) -> int:
        return self.n_e + self.n_m + (1 if self.signed else 0)

    @property
    def e_max(self) -> int:
        return 2**self.n_e - 1

    @property
    def significand_bits(self) -> int:
        """Bits of the normalized significand, implicit bit included (INT has none)."""
        return self.n_m + (1 if self.n_e > 0 else 0)

    @property
    def exponent_span(self) -> int:
        """Number of binary shifts between the lowest and highest effective exponent."""
        return max(self.e_max - 1, 0)

    @property
    def dr_bits(self) -> int:
        """log2 of full scale over the smallest nonzero step."""
        return self.n_m + self.e_max

    @property
    def max_value(self) -> float:
        if self.n_e == 0:
            return 1.0 - 2.0**-self.n_m
        return 1.0 - 2.0 ** -(self.n_m + 1)

    @property
    def name(self) -> str:
        return f"E{self.n_e}M{self.n_m}"

    def __str__(self) -> str:
        return self.name


def parse_format(text: str | FpFormat) -> FpFormat:
    """Parse ``"E2M1"`` (optionally ``"FP4_E2M1"``) into a format."""
    if isinstance(text, FpFormat):
        return text
    m = _FORMAT_RE.match(text)
    if not m:
        raise ValueError(f"bad format literal {text!r}; expected e.g. 'E2M1'")
    return FpFormat(int(m.group(1)), int(m.group(2)))


@dataclass(frozen=True)
class FpScalar:
    """Decoded floating-point value: sign, effective significand, effective exponent."""

    sign: int
    m: float
    e: int
    is_subnormal: bool

    def value(self, fmt: FpFormat) -> float:
        return decode(self, fmt)


def min_normal(fmt: FpFormat) -> float:
    # INT formats have a single binade; 0.5 makes 2*min_normal the full scale.
    if fmt.n_e == 0:
        return 0.5
    return 2.0**-fmt.e_max


def _binade_exponent(a: np.ndarray, fmt: FpFormat) -> np.ndarray:
    """Effective exponent E in [1, E_max] of nonnegative magnitudes ``a``."""
    _, ex = np.frexp(a)  # a = f * 2^ex, f in [0.5, 1)
    e = ex.astype(np.int64) + fmt.e_max
    e = np.where(a > 0, e, 1)
    return np.clip(e, 1, max(fmt.e_max, 1))


def quantize_array(x, fmt: FpFormat) -> np.ndarray:
    """Round-to-nearest-even onto the format grid, saturating at the max code.

    Inputs beyond full scale clip; magnitudes below half the smallest step
    round to a signed zero.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("quantize: non-finite input")
    a = np.abs(x)
    e = _binade_exponent(a, fmt)
    # step on the significand grid of the selected binade
    shift = e - fmt.e_max - fmt.n_m - 1
    q = np.ldexp(np.rint(np.ldexp(a, -shift)), shift)
    q = np.minimum(q, fmt.max_value)
    return np.copysign(q, x)


def decompose(values, fmt: FpFormat):
    """Split representable values into ``(sign, M, E)`` arrays.

    ``sign`` is +-1 (zero gets +1 unless negative zero), ``M`` the effective
    significand and ``E`` the effective exponent.
    """
    v = np.asarray(values, dtype=np.float64)
    a = np.abs(v)
    e = _binade_exponent(a, fmt)
    m = np.ldexp(a, fmt.e_max - e)
    sign = np.where(np.signbit(v), -1, 1)
    return sign, m, e


def quantize(x: float, fmt: FpFormat) -> FpScalar:
    if not math.isfinite(x):
        raise ValueError("quantize: non-finite input")
    q = float(quantize_array(x, fmt))
    return _scalar_from_value(q, fmt)


def _scalar_from_value(v: float, fmt: FpFormat) -> FpScalar:
    s, m, e = decompose(v, fmt)
    m = float(m)
    return FpScalar(int(s), m, int(e), m < 0.5)


def decode(v: FpScalar, fmt: FpFormat) -> float:
    if v.sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    return v.sign * math.ldexp(v.m, v.e - fmt.e_max)


def encode(v: FpScalar, fmt: FpFormat) -> int:
    """Bit pattern ``S | E_stored | M_stored`` of a decoded scalar."""
    scale = 2 ** (fmt.n_m + 1)
    frac = v.m * scale
    if frac != int(frac):
        raise ValueError(f"{v} is not on the {fmt} grid")
    frac = int(frac)
    if v.m >= 0.5 and fmt.n_e > 0:
        e_stored, mant = v.e, frac - 2**fmt.n_m
    else:
        e_stored, mant = 0, frac
    sign_bit = 1 if v.sign < 0 else 0
    return (sign_bit << (fmt.n_e + fmt.n_m)) | (e_stored << fmt.n_m) | mant


def decode_code(code: int, fmt: FpFormat) -> float:
    n_codes = 2**fmt.width
    if not 0 <= code < n_codes:
        raise ValueError(f"code {code} out of range for {fmt}")
    mant = code & (2**fmt.n_m - 1)
    e_stored = (code >> fmt.n_m) & (2**fmt.n_e - 1)
    sign = -1.0 if code >> (fmt.n_e + fmt.n_m) else 1.0
    if e_stored == 0:
        m = mant / 2 ** (fmt.n_m + 1)
    else:
        m = (2**fmt.n_m + mant) / 2 ** (fmt.n_m + 1)
    return sign * math.ldexp(m, max(e_stored, 1) - fmt.e_max)


def all_codes(fmt: FpFormat) -> range:
    return range(2**fmt.width)


@lru_cache(maxsize=64)
def _code_table(fmt: FpFormat) -> np.ndarray:
    return np.array([decode_code(c, fmt) for c in all_codes(fmt)])


def code_values(fmt: FpFormat) -> np.ndarray:
    """Decoded value of every bit pattern, indexed by code (read-only)."""
    t = _code_table(fmt)
    t.flags.writeable = False
    return t


def sqnr_db_for_bits(n_m: float) -> float:
    return 6.02 * n_m + 10.79


def format_sqnr_db(fmt: FpFormat | int) -> float:
    """Analytic SQNR ceiling of a format, from its stored mantissa bits."""
    n_m = fmt.n_m if isinstance(fmt, FpFormat) else int(fmt)
    if n_m < 0:
        raise ValueError("n_m must be >= 0")
    return sqnr_db_for_bits(n_m)
