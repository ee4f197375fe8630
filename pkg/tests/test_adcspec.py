import math

import numpy as np
import pytest

from grmac.adcspec import (
    enob_from_power,
    enob_sweep,
    input_sqnr,
    output_sqnr,
    point_seed,
    required_enob,
    worst_case_enob,
)
from grmac.formats import FpFormat, format_sqnr_db, quantize_array
from grmac.mac import Arch, ArchConfig, Granularity, adc_quantize, run_mac
from grmac.stimulus import parse_distribution, sample

E2M1 = FpFormat(2, 1)
GO = "gauss-outliers:eps=0.01,k=50"
W = "maxent:E2M1"
TRIALS = 20_000


def cfg_for(x_fmt, arch="conventional", n=32, limit=None):
    if arch == "conventional":
        return ArchConfig(Arch.CONVENTIONAL, None, n, n, x_fmt, E2M1, limit)
    return ArchConfig(Arch.GAIN_RANGING, arch, n, n, x_fmt, E2M1, limit)


class TestEnobFromPower:
    @pytest.mark.parametrize("bits", [4, 8, 10.5])
    def test_uniform_full_scale_oracle(self, bits):
        # a full-scale uniform signal against a step 2/2^N quantizer has SNR 20 log10(2^N)
        snr = 20 * math.log10(2**bits)
        assert enob_from_power(1 / 3, snr - 6.0) == pytest.approx(bits, abs=1e-12)

    def test_one_bit_per_6db(self):
        a = enob_from_power(1e-3, 20.0)
        b = enob_from_power(1e-3, 20.0 + 20 * math.log10(2))
        assert b - a == pytest.approx(1.0)

    def test_quarter_power_costs_one_bit(self):
        assert enob_from_power(0.25e-3, 20.0) - enob_from_power(1e-3, 20.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("p, t", [(0.0, 20.0), (-1.0, 20.0), (1e-3, math.inf), (1e-3, -math.inf)])
    def test_rejects(self, p, t):
        with pytest.raises(ValueError):
            enob_from_power(p, t)

    def test_margin_holds_with_a_real_quantizer(self):
        # quantize the conventional column output at the solved resolution
        cfg = cfg_for(FpFormat(2, 2))
        n = cfg.n_rows * 20_000
        x = sample(parse_distribution("uniform"), n, 1, 1).values.reshape(-1, 32)
        w = sample(parse_distribution(W), n, 1, 2).values.reshape(-1, 32)
        z = run_mac(quantize_array(x, cfg.x_fmt), w, cfg).z_analog
        target = 30.0
        enob = math.ceil(enob_from_power(np.mean(z**2), target))
        err = adc_quantize(z, enob) - z
        assert 10 * math.log10(np.mean(z**2) / np.mean(err**2)) >= target + 6.0 - 0.3


class TestOutputSqnr:
    def test_max_entropy_near_ceiling(self):
        rep = output_sqnr(cfg_for(FpFormat(3, 2)), "maxent:E3M2", W, TRIALS, 1)
        assert abs(rep.sqnr_global_db - format_sqnr_db(2)) <= 2.0

    def test_gauss_outliers_core_collapse(self):
        rep = output_sqnr(cfg_for(FpFormat(2, 2)), GO, W, TRIALS, 1)
        assert rep.sqnr_global_db == pytest.approx(18.0, abs=2.0)
        assert rep.sqnr_core_db == -math.inf
        assert not rep.core_has_signal
        assert math.isfinite(rep.sqnr_core_raw_db)

    def test_gauss_outliers_core_resolved(self):
        rep = output_sqnr(cfg_for(FpFormat(3, 2)), GO, W, TRIALS, 1)
        assert rep.core_has_signal
        assert rep.sqnr_core_db >= format_sqnr_db(2) - 6.0

    def test_non_outlier_distribution_core_equals_global(self):
        rep = output_sqnr(cfg_for(FpFormat(2, 2)), "uniform", W, 5000, 1)
        assert rep.sqnr_core_db == rep.sqnr_global_db
        assert rep.trials == 5000 and rep.seed == 1

    def test_architecture_does_not_change_sqnr(self):
        # gain ranging is lossless, so quantization noise is the input format's alone
        a = output_sqnr(cfg_for(FpFormat(2, 2)), "uniform", W, 5000, 3)
        b = output_sqnr(cfg_for(FpFormat(2, 2), "unit"), "uniform", W, 5000, 3)
        assert a.sqnr_global_db == pytest.approx(b.sqnr_global_db, abs=1e-9)

    def test_seed_determinism(self):
        a = output_sqnr(cfg_for(FpFormat(3, 2)), GO, W, 5000, 9)
        b = output_sqnr(cfg_for(FpFormat(3, 2)), GO, W, 5000, 9)
        assert a == b

    def test_worker_invariance(self):
        args = (cfg_for(FpFormat(3, 2), "unit"), GO, W, 9000, 9)
        a = output_sqnr(*args, workers=1)
        b = output_sqnr(*args, workers=2)
        assert a.to_dict() == b.to_dict()


class TestRequiredEnob:
    def test_report_fields(self):
        rep = required_enob(cfg_for(FpFormat(2, 2)), "uniform", W, 5000, 0)
        assert rep.enob_required_int == math.ceil(rep.enob_required_cont)
        assert rep.trials > 0 and math.isfinite(rep.sqnr_global_db)
        assert rep.target_db == pytest.approx(format_sqnr_db(2))
        assert rep.enob_required_cont == pytest.approx(enob_from_power(rep.signal_power_at_adc, rep.target_db))

    def test_measured_target(self):
        rep = required_enob(cfg_for(FpFormat(2, 2)), "uniform", W, 5000, 0, target="measured")
        assert rep.target_db == pytest.approx(rep.sqnr_global_db)

    def test_rejects_unknown_target(self):
        with pytest.raises(ValueError):
            required_enob(cfg_for(FpFormat(2, 2)), "uniform", W, 100, 0, target="median")

    @pytest.mark.parametrize("dist", ["uniform", GO, "maxent:E3M2"])
    def test_gr_never_needs_more(self, dist):
        c = required_enob(cfg_for(FpFormat(3, 2)), dist, W, TRIALS, 2)
        g = required_enob(cfg_for(FpFormat(3, 2), "unit"), dist, W, TRIALS, 2)
        assert g.enob_required_cont <= c.enob_required_cont

    def test_gr_distribution_invariance(self):
        # measured target, as in the sweeps; the ceiling target is covered below
        cfg = cfg_for(FpFormat(3, 2), "unit")
        vals = [required_enob(cfg, d, W, TRIALS, 2, target="measured").enob_required_cont for d in ("uniform", GO, "maxent:E3M2")]
        assert max(vals) - min(vals) <= 1.0

    def test_ceiling_target_core_is_stricter_for_subnormal_core(self):
        # at E3 most of the gaussian core is subnormal, so its power sits below the uniform case
        cfg = cfg_for(FpFormat(3, 2), "unit")
        uni = required_enob(cfg, "uniform", W, TRIALS, 2).enob_required_cont
        go = required_enob(cfg, GO, W, TRIALS, 2)
        assert go.enob_required_cont > uni
        assert go.signal_power_core < go.signal_power_at_adc


class TestWorstCase:
    def test_conventional_grows_with_range(self):
        e2 = worst_case_enob(FpFormat(2, 2), E2M1, Arch.CONVENTIONAL, TRIALS, 0)
        e3 = worst_case_enob(FpFormat(3, 2), E2M1, Arch.CONVENTIONAL, TRIALS, 0)
        assert e3 - e2 == pytest.approx(FpFormat(3, 2).e_max - FpFormat(2, 2).e_max, abs=0.1)

    @pytest.mark.parametrize("g", [Granularity.UNIT, Granularity.ROW])
    def test_gain_ranging_is_range_invariant(self, g):
        cfg = cfg_for(FpFormat(2, 2), g)
        e2 = worst_case_enob(FpFormat(2, 2), E2M1, cfg, TRIALS, 0)
        e3 = worst_case_enob(FpFormat(3, 2), E2M1, cfg.replace(x_fmt=FpFormat(3, 2)), TRIALS, 0)
        assert abs(e3 - e2) <= 0.1

    def test_int_equals_full_scale_uniform(self):
        fmt = FpFormat(0, 4)
        wc = worst_case_enob(fmt, E2M1, Arch.CONVENTIONAL, TRIALS, 0)
        full = required_enob(cfg_for(fmt), "uniform", W, TRIALS, 5).enob_required_cont
        assert wc == pytest.approx(full, abs=0.05)


class TestSweep:
    def test_rows_and_columns(self):
        archs = [cfg_for(FpFormat(2, 2)), cfg_for(FpFormat(2, 2), "unit")]
        res = enob_sweep([2, 3], [2], ["uniform"], archs, 3000, 0)
        assert len(res) == 4
        row = res[0].row()
        for k in ("ne", "nm", "arch", "dist", "sqnr_global_db", "sqnr_core_db", "enob_cont", "enob_int"):
            assert k in row

    def test_maxent_follows_cell_format(self):
        bare = enob_sweep([3], [1], ["maxent"], [cfg_for(FpFormat(2, 2))], TRIALS, 0)[0]
        named = enob_sweep([3], [1], ["maxent:E3M1"], [cfg_for(FpFormat(2, 2))], TRIALS, 0)[0]
        other = enob_sweep([3], [1], ["maxent:E4M1"], [cfg_for(FpFormat(2, 2))], TRIALS, 0)[0]
        assert bare.p_z == pytest.approx(named.p_z, rel=0.05)
        assert bare.p_z > 1.5 * other.p_z

    def test_worker_invariance_and_determinism(self):
        archs = [cfg_for(FpFormat(2, 2)), cfg_for(FpFormat(2, 2), "row")]
        a = enob_sweep([1, 2], [1, 2], ["uniform", GO], archs, 2500, 4, workers=1)
        b = enob_sweep([1, 2], [1, 2], ["uniform", GO], archs, 2500, 4, workers=2)
        c = enob_sweep([1, 2], [1, 2], ["uniform", GO], archs, 2500, 4, workers=1)
        assert [r.row() for r in a] == [r.row() for r in b] == [r.row() for r in c]

    def test_monotone_in_mantissa(self):
        res = enob_sweep([3], [1, 2, 3, 4], ["uniform"], [cfg_for(FpFormat(3, 2))], TRIALS, 0)
        e = [r.enob_cont for r in res]
        assert all(b > a for a, b in zip(e, e[1:]))

    def test_point_seed_depends_on_coordinates(self):
        assert point_seed(0, "a", 1) == point_seed(0, "a", 1)
        assert point_seed(0, "a", 1) != point_seed(0, "a", 2)
        assert point_seed(0, "a", 1) != point_seed(1, "a", 1)


class TestInputSqnr:
    def test_uniform_matches_step_oracle(self):
        # INT step 2^-4; a bound on a cell edge keeps every rounding cell whole,
        # so the noise is step^2/12 against power bound^2/3
        step = 2.0**-4
        bound = 7.5 * step
        got = input_sqnr(FpFormat(0, 4), f"uniform:bound={bound}", 400_000, 0)
        expected = 10 * math.log10((bound**2 / 3) / (step**2 / 12))
        assert got == pytest.approx(expected, abs=0.1)
