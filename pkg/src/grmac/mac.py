"""Behavioral models of one CIM column: conventional INT-MAC and GR-MAC.

Both models take operand vectors that are already on their format grids
and work on arrays shaped ``(..., n_rows)``, so a whole batch of
Monte-Carlo trials runs in one call. Dot products follow the averaging
convention ``sum(x * w) / n_rows`` so a full-scale column maps to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .formats import FpFormat, FpScalar, decode, decompose, parse_format
from .stimulus import counter_rng

__all__ = [
    "Arch",
    "Granularity",
    "ArchConfig",
    "MacTrace",
    "RangeViolation",
    "ideal_dot",
    "int_mac",
    "gr_mac",
    "run_mac",
    "n_eff",
    "adc_quantize",
    "DEFAULT_GAIN_RANGE_LIMIT",
]

DEFAULT_GAIN_RANGE_LIMIT = 6


class Arch(str, Enum):
    CONVENTIONAL = "conventional"
    GAIN_RANGING = "gr"


class Granularity(str, Enum):
    UNIT = "unit"
    ROW = "row"
    INT_WEIGHTS = "int"


class RangeViolation(ValueError):
    """Exponent span exceeds what the gain-ranging stage can couple."""


@dataclass(frozen=True)
class ArchConfig:
    """Architecture selector plus array geometry and operand formats.

    ``gain_range_limit`` is the largest exponent span (in bits) the
    coupling stage supports; ``None`` disables the check, which is useful
    for idealized sweeps that ignore the ladder's practical range.
    """

    arch: Arch = Arch.GAIN_RANGING
    granularity: Granularity | None = Granularity.UNIT
    n_rows: int = 32
    n_cols: int = 32
    x_fmt: FpFormat = FpFormat(2, 1)
    w_fmt: FpFormat = FpFormat(2, 1)
    gain_range_limit: int | None = DEFAULT_GAIN_RANGE_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "arch", Arch(self.arch))
        object.__setattr__(self, "x_fmt", parse_format(self.x_fmt))
        object.__setattr__(self, "w_fmt", parse_format(self.w_fmt))
        if self.arch is Arch.CONVENTIONAL:
            object.__setattr__(self, "granularity", None)
        else:
            object.__setattr__(self, "granularity", Granularity(self.granularity or Granularity.UNIT))
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError(f"array must be at least 1x1, got {self.n_rows}x{self.n_cols}")
        if self.gain_range_limit is not None and self.gain_range_limit < 0:
            raise ValueError("gain_range_limit must be >= 0")

    @property
    def exponent_span(self) -> int:
        """Span of coupling exponents this configuration must cover, in bits."""
        if self.arch is Arch.CONVENTIONAL:
            return 0
        if self.granularity is Granularity.UNIT:
            return self.x_fmt.exponent_span + self.w_fmt.exponent_span
        if self.granularity is Granularity.ROW:
            return self.x_fmt.exponent_span
        return self.w_fmt.exponent_span

    def range_problems(self) -> list[str]:
        """Human-readable reasons this configuration cannot run natively."""
        out = []
        if self.arch is Arch.GAIN_RANGING:
            if self.granularity is Granularity.INT_WEIGHTS and self.x_fmt.n_e > 0:
                out.append(f"INT-weights granularity needs INT inputs, got {self.x_fmt}")
            lim = self.gain_range_limit
            if lim is not None and self.exponent_span > lim:
                out.append(
                    f"{self.granularity.value} granularity needs a {self.exponent_span}-bit "
                    f"gain range, limit is {lim}"
                )
        return out

    def check_range(self) -> None:
        problems = self.range_problems()
        if problems:
            raise RangeViolation("; ".join(problems))

    def replace(self, **kw) -> "ArchConfig":
        d = dict(
            arch=self.arch,
            granularity=self.granularity,
            n_rows=self.n_rows,
            n_cols=self.n_cols,
            x_fmt=self.x_fmt,
            w_fmt=self.w_fmt,
            gain_range_limit=self.gain_range_limit,
        )
        d.update(kw)
        return ArchConfig(**d)

    def label(self) -> str:
        if self.arch is Arch.CONVENTIONAL:
            return "conventional"
        return f"gr-{self.granularity.value}"


@dataclass(frozen=True)
class MacTrace:
    """Signals of one column evaluation (arrays carry a leading batch shape).

    ``products`` holds what each cell puts on the line before averaging:
    aligned products for the INT-MAC, normalized mantissa products for the
    GR-MAC. ``z_digital`` follows the ``sum(x*w)/n_rows`` convention.
    """

    products: np.ndarray
    z_analog: np.ndarray
    exp_weights: np.ndarray
    exp_sum: np.ndarray
    n_eff: np.ndarray
    z_digital: np.ndarray

    def to_dict(self) -> dict:
        return {k: np.asarray(getattr(self, k)).tolist() for k in self.__dataclass_fields__}


def _as_values(v, fmt: FpFormat) -> np.ndarray:
    if isinstance(v, FpScalar):
        return np.array(decode(v, fmt))
    if isinstance(v, Sequence) and v and isinstance(v[0], FpScalar):
        return np.array([decode(s, fmt) for s in v])
    return np.asarray(v, dtype=np.float64)


def _split(a: np.ndarray):
    # Veltkamp split: a == hi + lo with both halves 26 bits wide
    c = a * 134217729.0
    hi = c - (c - a)
    return hi, a - hi


def ideal_dot(x, w) -> float | np.ndarray:
    """Reference dot product ``sum(x*w) / N`` over the last axis.

    One-dimensional inputs are evaluated exactly (error-free products and
    ``math.fsum``) and correctly rounded; batched inputs use the same
    error-free products with plain pairwise sums.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {w.shape}")
    if x.shape[-1] == 0:
        raise ValueError("empty vectors")
    n = x.shape[-1]
    xh, xl = _split(x)
    wh, wl = _split(w)
    terms = (xh * wh, xh * wl, xl * wh, xl * wl)
    if x.ndim == 1:
        return math.fsum(np.concatenate(terms).tolist()) / n
    return sum(np.sum(t, axis=-1) for t in terms) / n


def n_eff(exp_weights) -> float | np.ndarray:
    """Effective contributor count ``(sum u)^2 / sum u^2`` over the last axis."""
    u = np.asarray(exp_weights, dtype=np.float64)
    if u.size == 0 or u.shape[-1] == 0:
        raise ValueError("n_eff of an empty weight vector")
    if np.any(u <= 0):
        raise ValueError("coupling weights must be positive")
    s = u.sum(axis=-1)
    return s * s / np.sum(u * u, axis=-1)


def _prepare(xq, wq, cfg: ArchConfig):
    x = _as_values(xq, cfg.x_fmt)
    w = _as_values(wq, cfg.w_fmt)
    if x.shape != w.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {w.shape}")
    if x.shape[-1] != cfg.n_rows:
        raise ValueError(f"vectors have {x.shape[-1]} rows, config has {cfg.n_rows}")
    return x, w


def _top(fmt: FpFormat) -> int:
    # INT formats are one binade whose top exponent is taken as 1
    return max(fmt.e_max, 1)


def _normalized(v: np.ndarray, fmt: FpFormat):
    """Sign, full-swing significand and exponent with ``|v| = m * 2^(e - top)``."""
    sign, _, e = decompose(v, fmt)
    return sign, np.ldexp(np.abs(v), _top(fmt) - e), e


def int_mac(xq, wq, cfg: ArchConfig) -> MacTrace:
    """Conventional direct accumulation on the aligned integer grid.

    Operands are aligned to the format's fixed full scale, which makes the
    aligned integer equal to the decoded value itself; every cell couples
    with the same capacitance.
    """
    if cfg.arch is not Arch.CONVENTIONAL:
        raise ValueError("int_mac needs a conventional ArchConfig")
    x, w = _prepare(xq, wq, cfg)
    p = x * w
    z = p.mean(axis=-1)
    batch = z.shape
    u = np.ones_like(p)
    return MacTrace(
        products=p,
        z_analog=z,
        exp_weights=u,
        exp_sum=np.full(batch, float(cfg.n_rows)),
        n_eff=np.full(batch, float(cfg.n_rows)),
        z_digital=z,
    )


def gr_mac(xq, wq, cfg: ArchConfig) -> MacTrace:
    """Gain-ranging MAC: exponent-weighted averaging of normalized products."""
    if cfg.arch is not Arch.GAIN_RANGING:
        raise ValueError("gr_mac needs a gain-ranging ArchConfig")
    cfg.check_range()
    x, w = _prepare(xq, wq, cfg)
    fx, fw = cfg.x_fmt, cfg.w_fmt
    g = cfg.granularity
    if g is Granularity.UNIT:
        sx, mx, ex = _normalized(x, fx)
        sw, mw, ew = _normalized(w, fw)
        e = ex + ew
        m = sx * mx * sw * mw
        scale = _top(fx) + _top(fw)
    elif g is Granularity.ROW:
        # weights stored pre-shifted by their own exponent
        sx, mx, e = _normalized(x, fx)
        m = sx * mx * w
        scale = _top(fx)
    else:
        sw, mw, e = _normalized(w, fw)
        m = x * sw * mw
        scale = _top(fw)
    # rebase so the smallest coupling is 2^0; ratios are what the ladder sets
    u = np.ldexp(1.0, e - 1)
    s = u.sum(axis=-1)
    z = np.sum(u * m, axis=-1) / s
    z_digital = z * np.ldexp(s, 1 - scale) / cfg.n_rows
    return MacTrace(
        products=m,
        z_analog=z,
        exp_weights=u,
        exp_sum=s,
        n_eff=s * s / np.sum(u * u, axis=-1),
        z_digital=z_digital,
    )


def run_mac(xq, wq, cfg: ArchConfig) -> MacTrace:
    if cfg.arch is Arch.CONVENTIONAL:
        return int_mac(xq, wq, cfg)
    return gr_mac(xq, wq, cfg)


def adc_quantize(z, enob: float, seed: int = 0):
    """Uniform ADC over the full scale [-1, 1] with step ``2 / 2**enob``.

    Integer resolutions use a sign-magnitude mid-rise quantizer whose
    zero input is passed through as zero. Fractional resolutions add
    gaussian noise of matching variance instead, drawn from ``seed``.
    """
    z = np.clip(np.asarray(z, dtype=np.float64), -1.0, 1.0)
    if math.isinf(enob) and enob > 0:
        return z
    if not enob > 0:
        raise ValueError(f"enob must be positive, got {enob}")
    delta = 2.0 / 2.0**enob
    if float(enob).is_integer():
        top = 2 ** (int(enob) - 1) - 1
        k = np.minimum(np.floor(np.abs(z) / delta), top)
        q = np.sign(z) * (k + 0.5) * delta
        return np.where(z == 0, 0.0, q)
    noise = counter_rng(seed, 0xADC, 0).normal(0.0, delta / math.sqrt(12.0), np.shape(z))
    return z + noise
