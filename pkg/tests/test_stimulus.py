import numpy as np
import pytest
from scipy import stats

from grmac.formats import FpFormat, code_values, quantize_array
from grmac.stimulus import BLOCK, DistributionSpec, Kind, parse_distribution, sample

GO = DistributionSpec(Kind.GAUSSIAN_OUTLIERS, epsilon=0.01, k=50)


class TestParse:
    @pytest.mark.parametrize(
        "text, kind",
        [
            ("uniform", Kind.UNIFORM),
            ("maxent:E2M1", Kind.MAX_ENTROPY),
            ("gauss-outliers:eps=0.01,k=50", Kind.GAUSSIAN_OUTLIERS),
            ("gauss:clip=4", Kind.GAUSSIAN),
        ],
    )
    def test_literals(self, text, kind):
        spec = parse_distribution(text)
        assert spec.kind is kind
        assert parse_distribution(spec.label()) == spec

    def test_outlier_params(self):
        spec = parse_distribution("gauss-outliers:eps=0.02,k=10")
        assert (spec.epsilon, spec.k) == (0.02, 10)

    @pytest.mark.parametrize(
        "text",
        ["", "normal", "maxent", "maxent:E9", "gauss-outliers:eps=0", "gauss-outliers:eps=1.5", "gauss-outliers:k=0.5"],
    )
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            parse_distribution(text)

    def test_rejects_empty_draw(self):
        with pytest.raises(ValueError):
            sample(GO, 0, 1)


class TestDeterminism:
    @pytest.mark.parametrize("spec", ["uniform", "maxent:E3M2", "gauss-outliers:eps=0.01,k=50"])
    def test_same_seed_same_samples(self, spec):
        d = parse_distribution(spec)
        a, b = sample(d, 5000, 42), sample(d, 5000, 42)
        assert a.values.tobytes() == b.values.tobytes()
        assert np.array_equal(a.is_outlier, b.is_outlier)

    def test_different_seeds_differ(self):
        d = parse_distribution("uniform")
        assert not np.array_equal(sample(d, 100, 1).values, sample(d, 100, 2).values)

    def test_streams_are_independent(self):
        d = parse_distribution("uniform")
        assert not np.array_equal(sample(d, 100, 1, stream=1).values, sample(d, 100, 1, stream=2).values)

    @pytest.mark.parametrize("start, n", [(0, 10), (BLOCK - 3, 7), (3 * BLOCK + 11, 2 * BLOCK)])
    def test_chunking_invariance(self, start, n):
        full = sample(GO, start + n, 9)
        part = sample(GO, n, 9, start=start)
        assert np.array_equal(full.values[start:], part.values)
        assert np.array_equal(full.is_outlier[start:], part.is_outlier)

    def test_labeled_samples(self):
        batch = sample(GO, 20, 3)
        items = list(batch)
        assert len(items) == 20
        assert items[4].value == batch.values[4]
        assert items[4].is_outlier == batch.is_outlier[4]


class TestUniform:
    def test_variance(self):
        x = sample(parse_distribution("uniform"), 1_000_000, 0).values
        assert abs(x.var() - 1 / 3) < 0.01
        assert np.all(np.abs(x) <= 1)
        assert not sample(parse_distribution("uniform"), 1000, 0).is_outlier.any()

    def test_bound(self):
        x = sample(parse_distribution("uniform:bound=0.25"), 10_000, 0).values
        assert np.all(np.abs(x) <= 0.25) and x.max() > 0.24


class TestMaxEntropy:
    def test_exponent_histogram_uniform(self):
        fmt = FpFormat(2, 1)
        x = sample(DistributionSpec(Kind.MAX_ENTROPY, fmt), 8192, 5).values
        # recover stored exponent codes from decoded values
        table = code_values(fmt)
        e_codes = []
        for v in x:
            code = int(np.flatnonzero((table == v) & (np.signbit(table) == np.signbit(v)))[0])
            e_codes.append((code >> fmt.n_m) & 0b11)
        counts = np.bincount(e_codes, minlength=4)
        n, p = len(x), 0.25
        band = 3 * np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= band)

    @pytest.mark.parametrize("fmt", [FpFormat(2, 1), FpFormat(3, 2), FpFormat(0, 4)], ids=str)
    def test_exactly_representable(self, fmt):
        x = sample(DistributionSpec(Kind.MAX_ENTROPY, fmt), 20_000, 1).values
        assert np.array_equal(quantize_array(x, fmt), x)

    def test_dither_stays_in_rounding_cell(self):
        fmt = FpFormat(2, 2)
        plain = DistributionSpec(Kind.MAX_ENTROPY, fmt)
        x = sample(plain.with_dither(), 20_000, 1).values
        # same code draws, so rounding the dithered value recovers the plain sample
        assert np.array_equal(quantize_array(x, fmt), sample(plain, 20_000, 1).values)
        assert np.mean(quantize_array(x, fmt) != x) > 0.9


@pytest.fixture(scope="module")
def draw():
    return sample(GO, 1_000_000, 11)


class TestGaussianOutliers:
    def test_outlier_fraction(self, draw):
        assert abs(draw.is_outlier.mean() - 0.01) <= 0.001

    def test_core_bound(self, draw):
        core = draw.values[~draw.is_outlier]
        assert np.all(np.abs(core) <= 0.02)

    def test_core_sigma(self, draw):
        core = draw.values[~draw.is_outlier]
        sigma = 1 / 150
        expected = stats.truncnorm(-3, 3, scale=sigma).std()
        assert core.std() == pytest.approx(expected, rel=0.01)

    def test_outliers_span_full_scale(self, draw):
        out = draw.values[draw.is_outlier]
        assert np.all(np.abs(out) <= 1)
        assert np.abs(out).max() > 0.99
        # uniform on [-1, 1] has variance 1/3
        assert out.var() == pytest.approx(1 / 3, rel=0.05)
