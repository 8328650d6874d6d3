import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlens.core import FactorSpace, FactorAssignment, make_rng, sample_batch
from fairlens.estimators import (
    DiscreteDistribution,
    MIMatrix,
    UndefinedCorrelationError,
    discretize,
    entropy,
    mi_matrix,
    mutual_information,
    spearman,
    total_variation,
)
from fairlens.worlds import EncoderSpec, build_encoder


class TestDiscretize:
    def test_right_closed_top_bin(self):
        assert discretize([0.0, 0.5, 1.0], 2).tolist() == [0, 1, 1]

    def test_constant_input_maps_to_zero(self):
        assert discretize([3.0] * 10, 4).tolist() == [0] * 10

    def test_uniform_draws_fill_bins_evenly(self):
        values = make_rng(0).random(10000)
        binned = discretize(values, 20)
        freqs = np.bincount(binned, minlength=20) / 10000
        assert np.all(np.abs(freqs - 0.05) < 0.01)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            discretize([0.0, np.nan], 2)

    def test_too_few_bins_rejected(self):
        with pytest.raises(ValueError):
            discretize([0.0, 1.0], 1)


class TestEntropy:
    def test_fair_coin_is_one_bit(self):
        assert entropy([1, 1]) == 1.0

    def test_point_mass_is_zero(self):
        assert entropy([4, 0]) == 0.0

    def test_uniform_four_is_two_bits(self):
        assert entropy([1, 1, 1, 1]) == 2.0

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            entropy([0, 0])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            entropy([1, -1])


def _mi_from_joint(table):
    """Independent oracle: MI directly from a joint count table."""
    p = np.asarray(table, dtype=float)
    p = p / p.sum()
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float((p[nz] * np.log2(p[nz] / (px @ py)[nz])).sum())


class TestMutualInformation:
    def test_identical_uniform_binary_is_one_bit(self):
        x = np.array([0, 1] * 50)
        assert mutual_information(x, x) == 1.0

    def test_constant_side_is_zero(self):
        x = np.arange(10) % 3
        assert mutual_information(x, np.zeros(10)) == 0.0

    def test_matches_joint_table_oracle(self):
        # joint counts [[2, 1], [1, 2]]
        x = np.array([0, 0, 0, 1, 1, 1])
        y = np.array([0, 0, 1, 0, 1, 1])
        expected = _mi_from_joint([[2, 1], [1, 2]])
        assert mutual_information(x, y) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.0817, abs=5e-5)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mutual_information([0, 1], [0, 1, 0])

    @given(
        st.lists(st.integers(0, 3), min_size=1, max_size=60),
        st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_bounds(self, xs, data):
        ys = data.draw(st.lists(st.integers(0, 3), min_size=len(xs), max_size=len(xs)))
        x, y = np.array(xs), np.array(ys)
        ab = mutual_information(x, y)
        assert ab == mutual_information(y, x)
        hx = entropy(np.bincount(x))
        hy = entropy(np.bincount(y))
        assert 0.0 <= ab <= min(hx, hy) + 1e-9


class TestMiMatrix:
    def test_identity_encoder_is_diagonal(self):
        space = FactorSpace.uniform((4, 4))
        source = build_encoder(EncoderSpec(kind="identity"), space)
        ds = sample_batch(source, space, 10000, FactorAssignment.free(2), make_rng(3))
        m = mi_matrix(ds, bins=4)
        for k in range(2):
            assert m.mi[k, k] > 0.95 * m.factor_entropies[k]
            assert m.mi[1 - k, k] < 0.05

    def test_constant_code_dim_row_is_zero(self):
        space = FactorSpace.uniform((4, 4))
        rng = make_rng(0)
        factors = rng.integers(0, 4, (500, 2))
        codes = np.column_stack([factors[:, 0].astype(float), np.zeros(500)])
        from fairlens.core import Dataset

        m = mi_matrix(Dataset(factors, codes), bins=4)
        assert np.all(m.mi[1] == 0.0)

    def test_row_shuffle_invariance(self):
        space = FactorSpace.uniform((4, 4))
        source = build_encoder(EncoderSpec(kind="random_linear", seed=1), space)
        ds = sample_batch(source, space, 2000, FactorAssignment.free(2), make_rng(5))
        perm = make_rng(6).permutation(2000)
        from fairlens.core import Dataset

        shuffled = Dataset(ds.factors[perm], ds.codes[perm])
        np.testing.assert_array_equal(mi_matrix(ds, 8).mi, mi_matrix(shuffled, 8).mi)

    def test_mi_entry_bounded_by_factor_entropy(self):
        with pytest.raises(ValueError):
            MIMatrix(np.array([[1.5]]), np.array([1.0]))
        with pytest.raises(ValueError):
            MIMatrix(np.array([[-0.5]]), np.array([1.0]))


class TestTotalVariation:
    def test_equal_distributions(self):
        assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_disjoint_point_masses(self):
        assert total_variation([1.0, 0.0], [0.0, 1.0]) == 1.0

    def test_bernoulli_half_vs_third(self):
        assert total_variation([0.5, 0.5], [2 / 3, 1 / 3]) == pytest.approx(1 / 6, abs=1e-15)

    def test_support_mismatch_rejected(self):
        with pytest.raises(ValueError):
            total_variation([1.0], [0.5, 0.5])

    @given(st.integers(2, 5), st.data())
    @settings(max_examples=50, deadline=None)
    def test_metric_axioms(self, size, data):
        def dist():
            raw = data.draw(
                st.lists(st.floats(0.01, 1.0), min_size=size, max_size=size)
            )
            arr = np.array(raw)
            return arr / arr.sum()

        p, q, r = dist(), dist(), dist()
        assert total_variation(p, q) == total_variation(q, p)
        assert total_variation(p, p) <= 1e-12
        assert total_variation(p, r) <= total_variation(p, q) + total_variation(q, r) + 1e-12

    def test_distribution_type_validates(self):
        with pytest.raises(ValueError):
            DiscreteDistribution(np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            DiscreteDistribution(np.array([-0.1, 1.1]))
        d = DiscreteDistribution.from_counts([2, 2])
        assert d.probs.tolist() == [0.5, 0.5]


class TestSpearman:
    def test_perfect_agreement(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == 1.0

    def test_perfect_reversal(self):
        assert spearman([1, 2, 3], [30, 20, 10]) == -1.0

    def test_single_swap(self):
        assert spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(UndefinedCorrelationError):
            spearman([1, 1, 1], [1, 2, 3])

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            spearman([1, 2], [2, 1])

    def test_ties_get_mean_rank(self):
        # a has a 2-way tie; equivalent to ranks (1.5, 1.5, 3)
        assert spearman([5, 5, 9], [1, 1, 7]) == pytest.approx(1.0)

    @given(st.lists(st.integers(-50, 50), min_size=3, max_size=30), st.data())
    @settings(max_examples=60, deadline=None)
    def test_monotone_transform_invariance(self, xs, data):
        ys = data.draw(st.lists(st.integers(-50, 50), min_size=len(xs), max_size=len(xs)))
        a, b = np.array(xs, float), np.array(ys, float)
        try:
            base = spearman(a, b)
        except UndefinedCorrelationError:
            return
        transformed = spearman(2.0 * a**3 + 5.0, b)  # strictly increasing map
        assert transformed == pytest.approx(base, abs=1e-12)
