"""Seeded input distributions for the SQNR and ADC-resolution sweeps.

Samples are produced in fixed-size blocks. Block ``b`` of stream ``s``
under master seed ``seed`` always comes from a Philox generator keyed on
``(seed, s)`` with counter ``b``, so the value at a given index does not
depend on how a run is chunked or parallelized.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np
from scipy.special import ndtr, ndtri

from .formats import FpFormat, code_values, parse_format

__all__ = [
    "Kind",
    "DistributionSpec",
    "LabeledSample",
    "SampleBatch",
    "parse_distribution",
    "counter_rng",
    "sample",
    "BLOCK",
]

BLOCK = 8192
_MASK64 = (1 << 64) - 1


class Kind(str, Enum):
    UNIFORM = "uniform"
    MAX_ENTROPY = "maxent"
    GAUSSIAN_OUTLIERS = "gauss-outliers"
    GAUSSIAN = "gauss"


@dataclass(frozen=True)
class DistributionSpec:
    """One input distribution.

    ``bound`` scales the uniform kind to [-bound, bound].
    ``epsilon``/``k`` only apply to gaussian+outliers: the core has
    3*sigma = 1/k of full scale and outliers are uniform on [-1, 1].
    ``clip_sigma`` truncates the gaussian core (3 sigma by default for the
    mixture; the plain gaussian uses sigma = 1/clip_sigma so the clip sits
    at full scale). ``dither`` spreads max-entropy codes uniformly over
    their rounding cells, giving a continuous reference signal.
    """

    kind: Kind
    fmt: FpFormat | None = None
    epsilon: float = 0.01
    k: float = 50.0
    clip_sigma: float | None = None
    dither: bool = False
    bound: float = 1.0

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.MAX_ENTROPY and self.fmt is None:
            raise ValueError("max-entropy distribution needs a format")
        if kind is Kind.GAUSSIAN_OUTLIERS:
            if not 0.0 < self.epsilon < 1.0:
                raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
            if self.k < 1.0:
                raise ValueError(f"k must be >= 1, got {self.k}")
        if kind is Kind.GAUSSIAN and (self.clip_sigma is None or self.clip_sigma <= 0):
            raise ValueError("gaussian distribution needs clip_sigma > 0")
        if self.clip_sigma is not None and self.clip_sigma <= 0:
            raise ValueError("clip_sigma must be positive")
        if not 0.0 < self.bound <= 1.0:
            raise ValueError(f"bound must lie in (0, 1], got {self.bound}")

    @property
    def sigma(self) -> float | None:
        if self.kind is Kind.GAUSSIAN_OUTLIERS:
            return 1.0 / (3.0 * self.k)
        if self.kind is Kind.GAUSSIAN:
            return 1.0 / self.clip_sigma
        return None

    @property
    def core_clip(self) -> float | None:
        """Truncation bound of the gaussian core in units of sigma."""
        if self.kind is Kind.GAUSSIAN_OUTLIERS:
            return 3.0 if self.clip_sigma is None else self.clip_sigma
        if self.kind is Kind.GAUSSIAN:
            return self.clip_sigma
        return None

    @property
    def has_outliers(self) -> bool:
        return self.kind is Kind.GAUSSIAN_OUTLIERS

    def with_dither(self, dither: bool = True) -> "DistributionSpec":
        return DistributionSpec(self.kind, self.fmt, self.epsilon, self.k, self.clip_sigma, dither, self.bound)

    def label(self) -> str:
        if self.kind is Kind.UNIFORM:
            return "uniform" if self.bound == 1.0 else f"uniform:bound={self.bound:g}"
        if self.kind is Kind.MAX_ENTROPY:
            return f"maxent:{self.fmt}" + (",dither" if self.dither else "")
        if self.kind is Kind.GAUSSIAN:
            return f"gauss:clip={self.clip_sigma:g}"
        s = f"gauss-outliers:eps={self.epsilon:g},k={self.k:g}"
        if self.clip_sigma is not None:
            s += f",clip={self.clip_sigma:g}"
        return s

    def __str__(self) -> str:
        return self.label()


_PARAM_RE = re.compile(r"^\s*(\w+)\s*=\s*([^\s,]+)\s*$")


def parse_distribution(text: str | DistributionSpec) -> DistributionSpec:
    """Parse ``uniform[:bound=b]``, ``maxent:E2M1[,dither]``, ``gauss-outliers:eps=0.01,k=50``
    or ``gauss:clip=4``."""
    if isinstance(text, DistributionSpec):
        return text
    head, _, rest = text.strip().partition(":")
    head = head.strip().lower()
    params = [p for p in rest.split(",") if p.strip()] if rest else []
    if head in ("maxent", "max-entropy"):
        if not params:
            raise ValueError("maxent needs a format, e.g. maxent:E2M1")
        flags = {p.strip().lower() for p in params[1:]}
        unknown = flags - {"dither"}
        if unknown:
            raise ValueError(f"unknown maxent flags {sorted(unknown)}")
        return DistributionSpec(Kind.MAX_ENTROPY, parse_format(params[0]), dither="dither" in flags)
    kv = {}
    for p in params:
        m = _PARAM_RE.match(p)
        if not m:
            raise ValueError(f"bad distribution parameter {p!r} in {text!r}")
        kv[m.group(1).lower()] = float(m.group(2))
    if head == "uniform":
        if set(kv) - {"bound"}:
            raise ValueError("uniform takes only bound=<fraction of full scale>")
        return DistributionSpec(Kind.UNIFORM, bound=kv.get("bound", 1.0))
    if head in ("gauss-outliers", "gaussian-outliers"):
        extra = set(kv) - {"eps", "epsilon", "k", "clip"}
        if extra:
            raise ValueError(f"unknown parameters {sorted(extra)}")
        return DistributionSpec(
            Kind.GAUSSIAN_OUTLIERS,
            epsilon=kv.get("eps", kv.get("epsilon", 0.01)),
            k=kv.get("k", 50.0),
            clip_sigma=kv.get("clip"),
        )
    if head in ("gauss", "gaussian"):
        if set(kv) - {"clip"}:
            raise ValueError("gauss takes only clip=<sigmas>")
        return DistributionSpec(Kind.GAUSSIAN, clip_sigma=kv.get("clip", 4.0))
    raise ValueError(f"unknown distribution {text!r}")


@dataclass(frozen=True)
class LabeledSample:
    value: float
    is_outlier: bool


@dataclass(frozen=True)
class SampleBatch:
    values: np.ndarray
    is_outlier: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(float(self.values[i]), bool(self.is_outlier[i]))

    def __iter__(self) -> Iterator[LabeledSample]:
        for v, o in zip(self.values.tolist(), self.is_outlier.tolist()):
            yield LabeledSample(v, o)


def counter_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, block & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _truncated_normal(u: np.ndarray, sigma: float, clip: float) -> np.ndarray:
    lo = ndtr(-clip)
    return sigma * ndtri(lo + u * (1.0 - 2.0 * lo))


def _maxent_cells(fmt: FpFormat):
    """Rounding-cell bounds of every code magnitude, indexed by code."""
    vals = code_values(fmt)
    mags = np.unique(np.abs(vals))
    upper_mid = np.append((mags[1:] + mags[:-1]) / 2, mags[-1] + (mags[-1] - mags[-2]) / 2)
    lower_mid = np.insert((mags[1:] + mags[:-1]) / 2, 0, 0.0)
    idx = np.searchsorted(mags, np.abs(vals))
    return vals, lower_mid[idx], upper_mid[idx]


def _block(spec: DistributionSpec, seed: int, stream: int, b: int):
    g = counter_rng(seed, stream, b)
    outlier = np.zeros(BLOCK, dtype=bool)
    if spec.kind is Kind.UNIFORM:
        x = g.uniform(-spec.bound, spec.bound, BLOCK)
    elif spec.kind is Kind.MAX_ENTROPY:
        codes = g.integers(0, 2**spec.fmt.width, BLOCK)
        vals, lo, hi = _maxent_cells(spec.fmt)
        if spec.dither:
            u = g.random(BLOCK)
            x = np.copysign(lo[codes] + u * (hi[codes] - lo[codes]), vals[codes])
        else:
            x = vals[codes].copy()
    elif spec.kind is Kind.GAUSSIAN:
        x = _truncated_normal(g.random(BLOCK), spec.sigma, spec.core_clip)
    else:
        core = _truncated_normal(g.random(BLOCK), spec.sigma, spec.core_clip)
        outlier = g.random(BLOCK) < spec.epsilon
        wild = g.uniform(-1.0, 1.0, BLOCK)
        x = np.where(outlier, wild, core)
    return np.clip(x, -1.0, 1.0), outlier


def sample(spec: DistributionSpec, n: int, seed: int, stream: int = 0, start: int = 0) -> SampleBatch:
    """Draw samples ``start .. start+n-1`` of the given stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if start < 0:
        raise ValueError("start must be >= 0")
    first, last = start // BLOCK, (start + n - 1) // BLOCK
    parts = [_block(spec, seed, stream, b) for b in range(first, last + 1)]
    x = np.concatenate([p[0] for p in parts])
    o = np.concatenate([p[1] for p in parts])
    off = start - first * BLOCK
    return SampleBatch(x[off : off + n], o[off : off + n])
