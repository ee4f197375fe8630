"""Per-operation energy of a CIM array and the DR x SQNR energy map.

Component models (energies in fJ, capacitances in fF unless noted):

    ADC                 (k1*ENOB + k2*4^ENOB) * Vdd^2       per conversion
    DAC                 k3 * res * Vdd^2                    per conversion
    cell switching      0.5 * Cg * Vdd^2 * Nsw * NR * NC    per MVM
    full adder          6 * Cg * Vdd^2
    adder tree          E_FA * #FA
    N1 x N2 multiplier  (1.5 * Cg * Vdd^2 + E_FA) * N1 * N2
    binary decoder      (0.5*Nin + Nout + 1) * Cg * Vdd^2

A design point is a (dynamic range, SQNR) specification. Its mantissa
width follows from the SQNR, the minimum dynamic range for that width is
the "INT line", and anything beyond it is excess range. The conventional
array pays for excess range in ADC and DAC resolution; gain ranging pays
for it in exponent logic instead.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .adcspec import worst_case_enob
from .formats import FpFormat, format_sqnr_db, parse_format
from .mac import DEFAULT_GAIN_RANGE_LIMIT, Arch, ArchConfig, Granularity

__all__ = [
    "EnergyParams",
    "EnergyBreakdown",
    "DesignPoint",
    "EnobModel",
    "adc_energy",
    "dac_energy",
    "cell_switch_energy",
    "full_adder_energy",
    "adder_tree_fa_count",
    "adder_tree_energy",
    "multiplier_energy",
    "decoder_energy",
    "adc_crossover",
    "mantissa_bits_for_sqnr",
    "calibrate_enob_model",
    "design_point",
    "cim_energy_per_op",
    "format_design_point",
    "energy_map",
    "MapCell",
    "ENERGY_CAP_FJ",
    "ARCH_CHOICES",
    "supported_dr",
    "dr_advantage",
    "granularity_crossover",
    "named_breakdowns",
    "NAMED_FORMATS",
    "slope_ratio",
]

ENERGY_CAP_FJ = 100.0
NAMED_FORMATS = ("FP4_E2M1", "FP6_E3M2", "FP8_E4M3")


@dataclass(frozen=True)
class EnergyParams:
    """28 nm cost-model constants; ``k2_af`` is in aF, the rest in fF and V."""

    c_gate: float = 0.7
    k1: float = 100.0
    k2_af: float = 1.0
    k3: float = 50.0
    v_dd: float = 0.9

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")

    @property
    def v2(self) -> float:
        return self.v_dd**2

    @property
    def k2(self) -> float:
        return self.k2_af * 1e-3


def adc_energy(enob: float, p: EnergyParams = EnergyParams()) -> float:
    if not enob > 0:
        raise ValueError("enob must be positive")
    return (p.k1 * enob + p.k2 * 4.0**enob) * p.v2


def dac_energy(res: float, p: EnergyParams = EnergyParams()) -> float:
    if res < 0:
        raise ValueError("DAC resolution must be >= 0")
    return p.k3 * res * p.v2


def cell_switch_energy(n_sw: float, n_r: int, n_c: int, p: EnergyParams = EnergyParams()) -> float:
    """Switching energy of the whole array for one MVM."""
    if n_sw < 0:
        raise ValueError("n_sw must be >= 0")
    return 0.5 * p.c_gate * p.v2 * n_sw * n_r * n_c


def full_adder_energy(p: EnergyParams = EnergyParams()) -> float:
    return 6.0 * p.c_gate * p.v2


def adder_tree_fa_count(n_inputs: int, width: int) -> int:
    """Full adders in a binary ripple-carry tree summing ``n_inputs`` words.

    Level ``l`` holds ``ceil(n / 2^l)`` adders of width ``width + l - 1``;
    an odd word passes through a level untouched.
    """
    if n_inputs < 1 or width < 0:
        raise ValueError("need n_inputs >= 1 and width >= 0")
    total, n, w = 0, n_inputs, width
    while n > 1:
        total += (n // 2) * w
        n = n // 2 + n % 2
        w += 1
    return total


def adder_tree_energy(n_inputs: int, width: int, p: EnergyParams = EnergyParams()) -> float:
    return full_adder_energy(p) * adder_tree_fa_count(n_inputs, width)


def multiplier_energy(n1: float, n2: float | None = None, p: EnergyParams = EnergyParams()) -> float:
    """Array multiplier; with one width it is the square N-bit case."""
    n2 = n1 if n2 is None else n2
    if n1 < 0 or n2 < 0:
        raise ValueError("widths must be >= 0")
    return (1.5 * p.c_gate * p.v2 + full_adder_energy(p)) * n1 * n2


def decoder_energy(n_in: float, n_out: float, p: EnergyParams = EnergyParams()) -> float:
    if n_in < 0 or n_out < 0:
        raise ValueError("widths must be >= 0")
    if n_in == 0 and n_out == 0:
        return 0.0
    return (0.5 * n_in + n_out + 1.0) * p.c_gate * p.v2


def adc_crossover(p: EnergyParams = EnergyParams()) -> float:
    """Resolution where the linear and 4^N terms of the ADC model are equal."""
    return brentq(lambda n: p.k1 * n - p.k2 * 4.0**n, 1.0, 40.0, xtol=1e-12)


def mantissa_bits_for_sqnr(sqnr_db: float) -> float:
    """Stored mantissa bits that give ``sqnr_db`` (inverse of 6.02*n + 10.79)."""
    return (sqnr_db - 10.79) / 6.02


# ---------------------------------------------------------------- ENOB model

ARCH_CHOICES = ("conventional", "gr-int", "gr-row", "gr-unit")


def _arch_of(label: str) -> tuple[Arch, Granularity | None]:
    if label == "conventional":
        return Arch.CONVENTIONAL, None
    if label.startswith("gr-"):
        return Arch.GAIN_RANGING, Granularity(label[3:])
    raise ValueError(f"unknown architecture {label!r}; choose from {ARCH_CHOICES}")


@dataclass(frozen=True)
class EnobModel:
    """Worst-case ENOB as ``offset + (SQNR + 6)/6.02 (+ excess DR, conventional)``.

    Offsets come from the Monte-Carlo dimensioning solver on an INT input,
    where no range excess exists.
    """

    offsets: dict
    reference: str
    trials: int
    seed: int

    def enob(self, arch: str, sqnr_db: float, excess: float) -> float:
        base = self.offsets[arch] + (sqnr_db + 6.0) / 6.02
        return base + excess if arch == "conventional" else base


@lru_cache(maxsize=16)
def calibrate_enob_model(
    w_fmt: FpFormat = FpFormat(2, 1),
    n_rows: int = 32,
    trials: int = 20_000,
    seed: int = 0,
    reference: FpFormat = FpFormat(0, 6),
) -> EnobModel:
    s = format_sqnr_db(reference)
    out = {}
    for label in ARCH_CHOICES:
        arch, g = _arch_of(label)
        cfg = ArchConfig(arch, g, n_rows, n_rows, reference, w_fmt, None)
        out[label] = worst_case_enob(reference, w_fmt, cfg, trials, seed) - (s + 6.0) / 6.02
    return EnobModel(out, reference.name, trials, seed)


# ------------------------------------------------------------- design points


@dataclass(frozen=True)
class DesignPoint:
    """One specification evaluated for one architecture.

    ``excess`` is the range beyond the INT line in bits; ``x_exp_bits`` is
    the exponent field an input format needs to span it.
    """

    dr_bits: float
    sqnr_db: float
    arch: str
    enob: float
    dac_res: float
    excess: float
    span: float
    feasible: bool
    reason: str = ""

    @property
    def n_m(self) -> float:
        return mantissa_bits_for_sqnr(self.sqnr_db)

    @property
    def x_exp_bits(self) -> int:
        # an E-bit field spans 2^E - 2 binades above the subnormal one
        return 0 if self.excess <= 1e-9 else math.ceil(math.log2(self.excess + 2.0) - 1e-9)


def _w_exp_span(w_fmt: FpFormat) -> int:
    return w_fmt.exponent_span


def design_point(
    dr_bits: float,
    sqnr_db: float,
    arch: str,
    model: EnobModel,
    w_fmt: FpFormat = FpFormat(2, 1),
    gain_range_limit: int | None = DEFAULT_GAIN_RANGE_LIMIT,
) -> DesignPoint:
    """Dimension ADC and DAC for a specification; infeasibility is data."""
    n_m = mantissa_bits_for_sqnr(sqnr_db)
    dr_min = n_m + 1.0
    excess = dr_bits - dr_min
    e = 1e-9
    reason = ""
    span = 0.0
    if excess < -e:
        reason = f"DR below the INT line ({dr_min:.2f} bits for {sqnr_db:g} dB)"
    excess = max(excess, 0.0)
    if arch == "gr-unit":
        span = excess + _w_exp_span(w_fmt)
    elif arch == "gr-row":
        span = excess
    elif arch == "gr-int":
        span = _w_exp_span(w_fmt)
        if excess > e and not reason:
            reason = "INT granularity needs inputs without range excess"
    if not reason and gain_range_limit is not None and span > gain_range_limit + e:
        reason = f"needs a {span:.2f}-bit gain range, limit is {gain_range_limit}"
    enob = model.enob(arch, sqnr_db, excess)
    dac_res = dr_bits if arch == "conventional" else dr_min
    return DesignPoint(dr_bits, sqnr_db, arch, enob, dac_res, excess, span, not reason, reason)


def format_design_point(fmt: FpFormat | str, arch: str, model: EnobModel, **kw) -> DesignPoint:
    """Design point of a named input format at its native range."""
    fmt = parse_format(fmt)
    s = format_sqnr_db(fmt)
    # INT line sits at n_m + 1 bits; E bits add E_max - 1 binades on top
    dr = fmt.n_m + 1 + fmt.exponent_span
    return design_point(dr, s, arch, model, **kw)


# ------------------------------------------------------------------ energy


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy per operation (fJ/Op) by component; one MAC is two operations."""

    adc: float = 0.0
    dac: float = 0.0
    cell_switching: float = 0.0
    adder_trees: float = 0.0
    unit_adders: float = 0.0
    multipliers: float = 0.0
    decoders: float = 0.0
    ops_per_mac: int = 2

    @property
    def logic(self) -> float:
        return self.cell_switching + self.adder_trees + self.unit_adders + self.multipliers + self.decoders

    @property
    def total(self) -> float:
        return self.adc + self.dac + self.logic

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(logic=self.logic, total=self.total)
        return d


def cim_energy_per_op(
    point: DesignPoint,
    cfg: ArchConfig = ArchConfig(),
    p: EnergyParams = EnergyParams(),
) -> EnergyBreakdown:
    """Assemble one MVM's energy and divide by its ``2*NR*NC`` operations.

    Exponent hardware is sized for the point's span: ``span + 1`` one-hot
    coupling lines, an exponent sum of ``span + 1 + log2(NR)`` bits, and an
    output multiplier of ``ceil(ENOB)`` by exponent-sum bits.
    """
    nr, nc = cfg.n_rows, cfg.n_cols
    ops = 2.0 * nr * nc
    w = cfg.w_fmt
    w_bits_aligned = w.n_m + w.e_max  # weight as an aligned integer magnitude
    w_sig = w.significand_bits
    adc = nc * adc_energy(point.enob, p) / ops
    dac = nr * dac_energy(point.dac_res, p) / ops
    if point.arch == "conventional":
        sw = cell_switch_energy(w_bits_aligned, nr, nc, p) / ops
        return EnergyBreakdown(adc=adc, dac=dac, cell_switching=sw)

    onehot = int(math.ceil(point.span - 1e-9)) + 1
    sum_bits = onehot + math.ceil(math.log2(nr))
    mult = nc * multiplier_energy(math.ceil(point.enob - 1e-9), sum_bits, p) / ops
    sel_bits = math.ceil(math.log2(onehot)) if onehot > 1 else 0
    w_e = w.n_e if w.exponent_span > 0 else 0
    if point.arch == "gr-unit":
        sw = cell_switch_energy(w_sig + 1, nr, nc, p) / ops
        adder = nr * nc * max(point.x_exp_bits, w_e) * full_adder_energy(p) / ops
        dec = nr * nc * decoder_energy(sel_bits, onehot, p) / ops
        tree = nc * adder_tree_energy(nr, onehot, p) / ops
        return EnergyBreakdown(adc, dac, sw, tree, adder, mult, dec)
    if point.arch == "gr-row":
        sw = cell_switch_energy(w_bits_aligned + 1, nr, nc, p) / ops
        dec = nr * decoder_energy(point.x_exp_bits, onehot, p) / ops
        tree = adder_tree_energy(nr, onehot, p) / ops
        return EnergyBreakdown(adc, dac, sw, tree, 0.0, mult, dec)
    # INT granularity: column exponent sums are known at compile time
    sw = cell_switch_energy(w_sig + 1, nr, nc, p) / ops
    dec = nr * nc * decoder_energy(w_e, onehot, p) / ops
    return EnergyBreakdown(adc, dac, sw, 0.0, 0.0, mult, dec)


# --------------------------------------------------------------- energy map


@dataclass(frozen=True)
class MapCell:
    point: DesignPoint
    energy: EnergyBreakdown
    optimal: bool

    def row(self) -> dict:
        pt, en = self.point, self.energy
        arch, g = _arch_of(pt.arch)
        return {
            "dr_bits": pt.dr_bits,
            "sqnr_db": pt.sqnr_db,
            "arch": arch.value,
            "granularity": g.value if g else "",
            "enob": pt.enob,
            "dac_res": pt.dac_res,
            "adc_fj": en.adc,
            "dac_fj": en.dac,
            "logic_fj": en.logic,
            "total_fj_per_op": en.total,
            "feasible": pt.feasible,
            "reason": pt.reason,
            "optimal": self.optimal,
        }


def _evaluate(dr, s, arch, model, cfg, p, cap) -> tuple[DesignPoint, EnergyBreakdown]:
    pt = design_point(dr, s, arch, model, cfg.w_fmt, cfg.gain_range_limit)
    en = cim_energy_per_op(pt, cfg, p)
    if pt.feasible and cap is not None and en.total > cap:
        pt = DesignPoint(**{**asdict(pt), "feasible": False, "reason": f"exceeds {cap:g} fJ/Op cap"})
    return pt, en


def energy_map(
    dr_values,
    sqnr_values,
    cfg: ArchConfig = ArchConfig(),
    p: EnergyParams = EnergyParams(),
    model: EnobModel | None = None,
    archs=ARCH_CHOICES,
    cap: float | None = ENERGY_CAP_FJ,
) -> list[MapCell]:
    """Evaluate every architecture on a DR x SQNR grid and mark the cheapest feasible one."""
    dr_values, sqnr_values = list(dr_values), list(sqnr_values)
    if not dr_values or not sqnr_values:
        raise ValueError("empty energy-map grid")
    model = model or calibrate_enob_model(cfg.w_fmt, cfg.n_rows)
    out = []
    for s in sqnr_values:
        for dr in dr_values:
            cells = [_evaluate(dr, s, a, model, cfg, p, cap) for a in archs]
            ok = [i for i, (pt, _) in enumerate(cells) if pt.feasible]
            best = min(ok, key=lambda i: cells[i][1].total) if ok else None
            out.extend(MapCell(pt, en, i == best) for i, (pt, en) in enumerate(cells))
    return out


def supported_dr(
    sqnr_db: float,
    budget_fj: float,
    archs,
    cfg: ArchConfig = ArchConfig(),
    p: EnergyParams = EnergyParams(),
    model: EnobModel | None = None,
    step: float = 0.01,
    max_excess: float = 32.0,
) -> float:
    """Largest DR (bits) any of ``archs`` handles natively within ``budget_fj``.

    Returns ``nan`` when even the INT line is out of budget.
    """
    model = model or calibrate_enob_model(cfg.w_fmt, cfg.n_rows)
    dr_min = mantissa_bits_for_sqnr(sqnr_db) + 1.0
    best = math.nan
    for ex in np.arange(0.0, max_excess + step / 2, step):
        dr = dr_min + ex
        for a in archs:
            pt, en = _evaluate(dr, sqnr_db, a, model, cfg, p, budget_fj)
            if pt.feasible:
                best = dr
                break
    return best


def dr_advantage(
    sqnr_db: float,
    budget_fj: float,
    cfg: ArchConfig = ArchConfig(),
    p: EnergyParams = EnergyParams(),
    model: EnobModel | None = None,
) -> dict:
    """Extra DR gain ranging supports over the conventional array at iso-SQNR and iso-energy."""
    model = model or calibrate_enob_model(cfg.w_fmt, cfg.n_rows)
    conv = supported_dr(sqnr_db, budget_fj, ["conventional"], cfg, p, model)
    gr = supported_dr(sqnr_db, budget_fj, ["gr-int", "gr-row", "gr-unit"], cfg, p, model)
    return {
        "sqnr_db": sqnr_db,
        "budget_fj": budget_fj,
        "dr_conventional": conv,
        "dr_gr": gr,
        "advantage_bits": gr - conv,
    }


def granularity_crossover(
    excess: float = 0.0,
    cfg: ArchConfig = ArchConfig(),
    p: EnergyParams = EnergyParams(),
    model: EnobModel | None = None,
    nm_range=(0.0, 12.0),
    step: float = 0.01,
) -> float:
    """Smallest stored-mantissa width where Unit granularity beats Row.

    Returns ``nan`` if Unit never wins in ``nm_range``.
    """
    model = model or calibrate_enob_model(cfg.w_fmt, cfg.n_rows)
    for nm in np.arange(nm_range[0], nm_range[1] + step / 2, step):
        s = 6.02 * nm + 10.79
        dr = nm + 1.0 + excess
        u = cim_energy_per_op(design_point(dr, s, "gr-unit", model, cfg.w_fmt, None), cfg, p).total
        r = cim_energy_per_op(design_point(dr, s, "gr-row", model, cfg.w_fmt, None), cfg, p).total
        if u < r:
            return float(nm)
    return math.nan


def named_breakdowns(
    cfg: ArchConfig = ArchConfig(),
    p: EnergyParams = EnergyParams(),
    model: EnobModel | None = None,
    names=NAMED_FORMATS,
) -> dict:
    """Per-architecture breakdowns for named input formats at native range."""
    model = model or calibrate_enob_model(cfg.w_fmt, cfg.n_rows)
    out = {}
    for name in names:
        fmt = parse_format(name)
        entries = {}
        for a in ARCH_CHOICES:
            pt = format_design_point(fmt, a, model, w_fmt=cfg.w_fmt, gain_range_limit=cfg.gain_range_limit)
            en = cim_energy_per_op(pt, cfg, p)
            feasible, reason = pt.feasible, pt.reason
            if feasible and en.total > ENERGY_CAP_FJ:
                feasible, reason = False, f"exceeds {ENERGY_CAP_FJ:g} fJ/Op cap"
            entries[a] = {
                "enob": pt.enob,
                "dac_res": pt.dac_res,
                "feasible": feasible,
                "reason": reason,
                "breakdown": en.to_dict(),
            }
        gr = {a: e for a, e in entries.items() if a != "conventional" and e["feasible"]}
        best = min(gr, key=lambda a: gr[a]["breakdown"]["total"]) if gr else None
        out[name] = {"format": fmt.name, "best_gr": best, "archs": entries}
    return out


def slope_ratio(
    dr_values,
    sqnr_values,
    cfg: ArchConfig = ArchConfig(),
    p: EnergyParams = EnergyParams(),
    model: EnobModel | None = None,
    cap: float | None = ENERGY_CAP_FJ,
) -> float:
    """Mean dE/dDR of the best gain-ranging choice over that of the conventional array.

    Only adjacent DR steps where both families are feasible count; ``nan``
    when there are none.
    """
    model = model or calibrate_enob_model(cfg.w_fmt, cfg.n_rows)
    dr_values = sorted(dr_values)
    gr_slopes, conv_slopes = [], []
    for s in sqnr_values:
        prev = None
        for dr in dr_values:
            conv_pt, conv_en = _evaluate(dr, s, "conventional", model, cfg, p, cap)
            gr = [_evaluate(dr, s, a, model, cfg, p, cap) for a in ("gr-int", "gr-row", "gr-unit")]
            gr_ok = [en.total for pt, en in gr if pt.feasible]
            cur = (dr, conv_en.total, min(gr_ok)) if conv_pt.feasible and gr_ok else None
            if cur and prev:
                step = cur[0] - prev[0]
                conv_slopes.append((cur[1] - prev[1]) / step)
                gr_slopes.append((cur[2] - prev[2]) / step)
            prev = cur
    if not conv_slopes:
        return math.nan
    return float(np.mean(np.abs(gr_slopes)) / np.mean(np.abs(conv_slopes)))
