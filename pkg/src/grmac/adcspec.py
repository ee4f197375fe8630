"""Output-referred SQNR and required ADC resolution by Monte-Carlo.

Each trial draws one input vector and one weight vector for a single
column. The reference is the exact dot product of the continuous input
with the quantized weights (only input quantization noise counts); the
device output is the architecture's renormalized result with an ideal
ADC. The ADC requirement then follows in closed form from the measured
signal power at the ADC input.

Trials are processed in fixed-size chunks whose partial sums are merged
in chunk order with ``math.fsum``, so results do not depend on how many
worker processes evaluate the chunks.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .formats import FpFormat, format_sqnr_db, min_normal, parse_format, quantize_array
from .mac import Arch, ArchConfig, Granularity, ideal_dot, run_mac
from .stimulus import DistributionSpec, Kind, parse_distribution, sample

__all__ = [
    "SqnrReport",
    "SweepResult",
    "ColumnStats",
    "MARGIN_DB",
    "CHUNK_TRIALS",
    "point_seed",
    "simulate",
    "simulate_many",
    "solve_report",
    "input_sqnr",
    "output_sqnr",
    "required_enob",
    "enob_from_power",
    "worst_case_enob",
    "enob_sweep",
    "fig3_annotations",
    "Fig3Result",
]

MARGIN_DB = 6.0
CHUNK_TRIALS = 4096
X_STREAM, W_STREAM = 1, 2
# core counts as "no signal" once most of its samples round to zero
NO_SIGNAL_ZERO_FRACTION = 0.5


def point_seed(master: int, *coords) -> int:
    """Stable 63-bit seed for one grid point, derived from its coordinates."""
    text = repr((int(master),) + tuple(str(c) for c in coords)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little") >> 1


@dataclass(frozen=True)
class ColumnStats:
    """Merged Monte-Carlo moments of one (architecture, distribution) point."""

    trials: int
    sig: float
    err: float
    core_trials: int
    core_sig: float
    core_err: float
    pz_sum: float
    pz_active: int
    core_pz_sum: float
    core_pz_active: int
    core_samples: int
    core_zero_samples: int
    n_eff_sum: float

    @property
    def p_z(self) -> float:
        return self.pz_sum / self.pz_active if self.pz_active else 0.0

    @property
    def p_z_core(self) -> float:
        return self.core_pz_sum / self.core_pz_active if self.core_pz_active else 0.0

    @property
    def core_zero_fraction(self) -> float:
        return self.core_zero_samples / self.core_samples if self.core_samples else 1.0


_FIELDS = [f for f in ColumnStats.__dataclass_fields__]


def _db(sig: float, err: float) -> float:
    if sig <= 0.0:
        return -math.inf
    if err <= 0.0:
        return math.inf
    return 10.0 * math.log10(sig / err)


def _effective_x_dist(x_dist: DistributionSpec) -> DistributionSpec:
    # exact codes would make the input quantizer lossless; use the continuous cell spread
    if x_dist.kind is Kind.MAX_ENTROPY and not x_dist.dither:
        return x_dist.with_dither()
    return x_dist


def _moments(cfg: ArchConfig, outl, xq, wq, ref) -> tuple:
    tr = run_mac(xq, wq, cfg)
    err = ref - tr.z_digital
    z = tr.z_analog
    core = ~outl.any(axis=1)
    active = z != 0.0
    core_samples = ~outl
    return (
        len(z),
        math.fsum((ref * ref).tolist()),
        math.fsum((err * err).tolist()),
        int(core.sum()),
        math.fsum((ref[core] ** 2).tolist()),
        math.fsum((err[core] ** 2).tolist()),
        math.fsum((z[active] ** 2).tolist()),
        int(active.sum()),
        math.fsum((z[active & core] ** 2).tolist()),
        int((active & core).sum()),
        int(core_samples.sum()),
        int((core_samples & (xq == 0.0)).sum()),
        math.fsum(np.asarray(tr.n_eff).tolist()),
    )


def _chunk(args) -> list:
    cfgs, x_dist, w_dist, seed, t0, n = args
    c0 = cfgs[0]
    nr = c0.n_rows
    xs = sample(x_dist, n * nr, seed, X_STREAM, start=t0 * nr)
    ws = sample(w_dist, n * nr, seed, W_STREAM, start=t0 * nr)
    x = xs.values.reshape(n, nr)
    outl = xs.is_outlier.reshape(n, nr)
    xq = quantize_array(x, c0.x_fmt)
    wq = quantize_array(ws.values.reshape(n, nr), c0.w_fmt)
    ref = ideal_dot(x, wq)
    return [_moments(c, outl, xq, wq, ref) for c in cfgs]


def simulate_many(
    cfgs: Sequence[ArchConfig],
    x_dist: DistributionSpec | str,
    w_dist: DistributionSpec | str,
    trials: int,
    seed: int,
    workers: int = 1,
) -> list[ColumnStats]:
    """Evaluate several architectures on the same seeded operands.

    All configurations must share row count and operand formats.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfgs = list(cfgs)
    if not cfgs:
        raise ValueError("no configurations given")
    key = {(c.n_rows, c.x_fmt, c.w_fmt) for c in cfgs}
    if len(key) != 1:
        raise ValueError("configurations must share n_rows, x_fmt and w_fmt")
    x_dist = _effective_x_dist(parse_distribution(x_dist))
    w_dist = parse_distribution(w_dist)
    jobs = [
        (cfgs, x_dist, w_dist, seed, t0, min(CHUNK_TRIALS, trials - t0))
        for t0 in range(0, trials, CHUNK_TRIALS)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk, jobs))
    else:
        parts = [_chunk(j) for j in jobs]
    out = []
    for k in range(len(cfgs)):
        merged = {}
        for i, name in enumerate(_FIELDS):
            vals = [p[k][i] for p in parts]
            merged[name] = sum(vals) if isinstance(vals[0], int) else math.fsum(vals)
        out.append(ColumnStats(**merged))
    return out


def simulate(
    cfg: ArchConfig,
    x_dist: DistributionSpec | str,
    w_dist: DistributionSpec | str,
    trials: int,
    seed: int,
    workers: int = 1,
) -> ColumnStats:
    """Run ``trials`` column evaluations and return merged moments."""
    return simulate_many([cfg], x_dist, w_dist, trials, seed, workers)[0]


@dataclass(frozen=True)
class SqnrReport:
    """Output-referred SQNR and, once solved, the ADC requirement.

    ``sqnr_core_db`` is ``-inf`` when the outlier-free core does not survive
    input quantization (most core samples round to zero); the raw ratio is
    kept in ``sqnr_core_raw_db``. ``target_mode`` is ``"ceiling"`` (format
    SQNR ceiling) or ``"measured"`` (the measured output SQNR).
    """

    sqnr_global_db: float
    sqnr_core_db: float
    signal_power_at_adc: float
    trials: int
    seed: int
    sqnr_core_raw_db: float = math.nan
    core_has_signal: bool = True
    core_trials: int = 0
    signal_power_core: float = 0.0
    ceiling_db: float = math.nan
    n_eff_mean: float = math.nan
    enob_required_cont: float | None = None
    enob_required_int: int | None = None
    target_mode: str | None = None
    target_db: float | None = None
    enob_ceiling_cont: float | None = None
    enob_measured_cont: float | None = None
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _report(cfg: ArchConfig, x_dist: DistributionSpec, st: ColumnStats, seed: int) -> SqnrReport:
    glob = _db(st.sig, st.err)
    if x_dist.has_outliers:
        raw = _db(st.core_sig, st.core_err)
        has_signal = st.core_trials > 0 and st.core_zero_fraction < NO_SIGNAL_ZERO_FRACTION
        core = raw if has_signal else -math.inf
        p_core = st.p_z_core
    else:
        raw, has_signal, core, p_core = glob, True, glob, st.p_z
    return SqnrReport(
        sqnr_global_db=glob,
        sqnr_core_db=core,
        signal_power_at_adc=st.p_z,
        trials=st.trials,
        seed=seed,
        sqnr_core_raw_db=raw,
        core_has_signal=has_signal,
        core_trials=st.core_trials if x_dist.has_outliers else st.trials,
        signal_power_core=p_core,
        ceiling_db=format_sqnr_db(cfg.x_fmt),
        n_eff_mean=st.n_eff_sum / st.trials,
    )


def output_sqnr(
    cfg: ArchConfig,
    x_dist: DistributionSpec | str,
    w_dist: DistributionSpec | str,
    trials: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> SqnrReport:
    """Global and core output-referred SQNR with an ideal ADC (ENOB fields unset)."""
    x_dist = parse_distribution(x_dist)
    st = simulate(cfg, x_dist, w_dist, trials, seed, workers)
    return _report(cfg, x_dist, st, seed)


def enob_from_power(p_z: float, target_db: float, margin_db: float = MARGIN_DB) -> float:
    """Smallest ENOB whose noise ``delta^2/12`` sits ``target + margin`` dB under ``p_z``.

    Full scale is [-1, 1], so ``delta = 2 / 2**enob``.
    """
    if not p_z > 0.0:
        raise ValueError("signal power must be positive")
    if not math.isfinite(target_db):
        raise ValueError("target SQNR must be finite")
    return 1.0 + 0.5 * math.log2(10.0 ** ((target_db + margin_db) / 10.0) / (12.0 * p_z))


def _solve(p_z: float, measured_db: float, ceiling_db: float):
    ceil_e = enob_from_power(p_z, ceiling_db)
    meas_e = enob_from_power(p_z, measured_db) if math.isfinite(measured_db) else math.nan
    return ceil_e, meas_e


def solve_report(rep: SqnrReport, x_dist: DistributionSpec, target: str = "ceiling") -> SqnrReport:
    """Fill the ENOB fields of a report from its measured powers and SQNRs."""
    if target not in ("ceiling", "measured"):
        raise ValueError(f"target must be 'ceiling' or 'measured', got {target!r}")
    if rep.signal_power_at_adc <= 0.0:
        return _with(rep, target_mode=target, diagnostic="no signal reaches the ADC; requirement unsatisfiable")
    ceil_e, meas_e = _solve(rep.signal_power_at_adc, rep.sqnr_global_db, rep.ceiling_db)
    if x_dist.has_outliers and rep.core_has_signal and rep.signal_power_core > 0.0:
        c_ceil, c_meas = _solve(rep.signal_power_core, rep.sqnr_core_db, rep.ceiling_db)
        ceil_e = max(ceil_e, c_ceil)
        meas_e = max(meas_e, c_meas)
    chosen = ceil_e if target == "ceiling" else meas_e
    tgt = rep.ceiling_db if target == "ceiling" else rep.sqnr_global_db
    return _with(
        rep,
        enob_required_cont=chosen,
        enob_required_int=int(math.ceil(chosen)) if math.isfinite(chosen) else None,
        target_mode=target,
        target_db=tgt,
        enob_ceiling_cont=ceil_e,
        enob_measured_cont=meas_e,
    )


def required_enob(
    cfg: ArchConfig,
    x_dist: DistributionSpec | str,
    w_dist: DistributionSpec | str,
    trials: int = 100_000,
    seed: int = 0,
    target: str = "ceiling",
    workers: int = 1,
) -> SqnrReport:
    """Output SQNR plus the ADC resolution that keeps ADC noise 6 dB below it.

    For gaussian+outliers inputs the requirement is the larger of the
    global one and, when the core survives quantization, the one computed
    on outlier-free trials alone.
    """
    if target not in ("ceiling", "measured"):
        raise ValueError(f"target must be 'ceiling' or 'measured', got {target!r}")
    x_dist = parse_distribution(x_dist)
    rep = output_sqnr(cfg, x_dist, w_dist, trials, seed, workers)
    return solve_report(rep, x_dist, target)


def _with(rep: SqnrReport, **kw) -> SqnrReport:
    d = rep.to_dict()
    d.update(kw)
    return SqnrReport(**d)


def worst_case_enob(
    x_fmt: FpFormat | str,
    w_fmt: FpFormat | str,
    arch: ArchConfig | Arch = Arch.CONVENTIONAL,
    trials: int = 20_000,
    seed: int = 0,
) -> float:
    """Dimensioning ENOB: uniform input on +-2*min_normal, max-entropy weights.

    The target is the input format's SQNR ceiling. Gain ranging renormalizes
    that input to a full binade, so its bound does not depend on E_max.
    """
    x_fmt, w_fmt = parse_format(x_fmt), parse_format(w_fmt)
    if isinstance(arch, ArchConfig):
        cfg = arch.replace(x_fmt=x_fmt, w_fmt=w_fmt, gain_range_limit=None)
    else:
        g = Granularity.UNIT if Arch(arch) is Arch.GAIN_RANGING else None
        cfg = ArchConfig(Arch(arch), g, x_fmt=x_fmt, w_fmt=w_fmt, gain_range_limit=None)
    if cfg.granularity is Granularity.INT_WEIGHTS and x_fmt.n_e > 0:
        cfg = cfg.replace(granularity=Granularity.ROW)
    x_dist = DistributionSpec(Kind.UNIFORM, bound=min(1.0, 2.0 * min_normal(x_fmt)))
    w_dist = DistributionSpec(Kind.MAX_ENTROPY, w_fmt)
    st = simulate(cfg, x_dist, w_dist, trials, seed)
    return enob_from_power(st.p_z, format_sqnr_db(x_fmt))


@dataclass(frozen=True)
class SweepResult:
    """One cell of an N_E/N_M sweep."""

    ne: int
    nm: int
    arch: str
    dist: str
    sqnr_global_db: float
    sqnr_core_db: float
    enob_cont: float
    enob_int: int | None
    core_has_signal: bool = True
    n_eff_mean: float = math.nan
    p_z: float = math.nan
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = asdict(self)
        d.update(d.pop("extra"))
        return d


def enob_sweep(
    ne_values: Iterable[int],
    nm_values: Iterable[int],
    dists: Sequence[str],
    archs: Sequence[ArchConfig],
    trials: int = 100_000,
    seed: int = 0,
    target: str = "measured",
    workers: int = 1,
) -> list[SweepResult]:
    """Required ENOB over an (N_E, N_M) grid for each architecture and distribution.

    ``archs`` supply geometry, weight format and granularity; the input
    format of each cell replaces their ``x_fmt``. A ``maxent`` entry with
    no format uses the cell's input format.
    """
    out = []
    for dist in dists:
        for ne in ne_values:
            for nm in nm_values:
                x_fmt = FpFormat(ne, nm)
                d = parse_distribution(f"maxent:{x_fmt}" if dist.strip() == "maxent" else dist)
                s = point_seed(seed, d.label(), ne, nm)
                cfgs = [a.replace(x_fmt=x_fmt) for a in archs]
                w_dist = DistributionSpec(Kind.MAX_ENTROPY, cfgs[0].w_fmt)
                stats = simulate_many(cfgs, d, w_dist, trials, s, workers)
                for cfg, st in zip(cfgs, stats):
                    rep = solve_report(_report(cfg, d, st, s), d, target)
                    out.append(
                        SweepResult(
                            ne=ne,
                            nm=nm,
                            arch=cfg.label(),
                            dist=dist.strip(),
                            sqnr_global_db=rep.sqnr_global_db,
                            sqnr_core_db=rep.sqnr_core_db,
                            enob_cont=rep.enob_required_cont,
                            enob_int=rep.enob_required_int,
                            core_has_signal=rep.core_has_signal,
                            n_eff_mean=rep.n_eff_mean,
                            p_z=rep.signal_power_at_adc,
                            seed=s,
                        )
                    )
    return out


@dataclass(frozen=True)
class Fig3Result:
    n_eff_mean: float
    n_rows: int
    power_conventional: float
    power_gr: float

    @property
    def power_gain(self) -> float:
        return self.power_gr / self.power_conventional

    @property
    def delta_enob(self) -> float:
        return 0.5 * math.log2(self.power_gain)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(power_gain=self.power_gain, delta_enob=self.delta_enob)
        return d


def fig3_annotations(trials: int = 20_000, seed: int = 0, n_rows: int = 32, clip: float = 4.0) -> Fig3Result:
    """N_eff and signal-power gain for gaussian operands clipped at full scale."""
    fmt = FpFormat(3, 2)
    dist = DistributionSpec(Kind.GAUSSIAN, clip_sigma=clip)
    gr = ArchConfig(Arch.GAIN_RANGING, Granularity.UNIT, n_rows, n_rows, fmt, fmt, None)
    conv = gr.replace(arch=Arch.CONVENTIONAL)
    s_gr, s_conv = simulate_many([gr, conv], dist, dist, trials, seed)
    return Fig3Result(s_gr.n_eff_sum / trials, n_rows, s_conv.p_z, s_gr.p_z)


def input_sqnr(fmt: FpFormat | str, dist: DistributionSpec | str, n: int = 1_000_000, seed: int = 0) -> float:
    """SQNR (dB) of quantizing ``n`` samples of ``dist`` onto ``fmt``.

    Max-entropy samples are spread over their rounding cells first, since
    exact codes would quantize without error.
    """
    fmt = parse_format(fmt)
    d = _effective_x_dist(parse_distribution(dist))
    x = sample(d, n, seed, X_STREAM).values
    e = x - quantize_array(x, fmt)
    return _db(math.fsum((x * x).tolist()), math.fsum((e * e).tolist()))
