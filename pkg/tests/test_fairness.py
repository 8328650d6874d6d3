import numpy as np
import pytest

from fairlens.classifiers import GbtConfig
from fairlens.core import FactorSpace, encoder_source, make_rng
from fairlens.fairness import (
    Task,
    enumerate_tasks,
    prediction_distribution,
    task_unfairness,
    train_downstream,
    unfairness_score,
)
from fairlens.worlds import (
    ArgmaxBayesClassifier,
    EncoderSpec,
    MinMixingWorld,
    StochasticBayesClassifier,
    build_encoder,
    min_mixing_source,
    min_mixing_space,
    unfairness_exact,
)

FAST_GBT = GbtConfig(num_trees=40, max_depth=3, train_size=2000, test_size=1000, seed=0)


def _raw_label_source(space):
    """Codes are simply the raw factor labels cast to float."""

    def encode(f, rng):
        return f.astype(float)

    return encoder_source(space, encode, lambda f: f.astype(float), space.num_factors)


class _DimReader:
    """Stub classifier that thresholds a single code dim into integer labels."""

    def __init__(self, dim):
        self.dim = dim

    def predict(self, X):
        return np.rint(np.asarray(X)[:, self.dim]).astype(int)


class _Constant:
    def predict(self, X):
        return np.zeros(len(X), dtype=int)


class TestEnumerateTasks:
    def test_two_factors(self):
        assert len(enumerate_tasks(FactorSpace.uniform((2, 2)))) == 2

    def test_three_factors(self):
        tasks = enumerate_tasks(FactorSpace.uniform((2, 2, 2)))
        assert len(tasks) == 6
        assert all(t.target != t.sensitive for t in tasks)

    def test_single_factor_rejected(self):
        with pytest.raises(ValueError):
            enumerate_tasks(FactorSpace.uniform((4,)))

    def test_task_validates(self):
        with pytest.raises(ValueError):
            Task(1, 1)


class TestTrainDownstream:
    def test_identity_recovers_any_target(self):
        space = FactorSpace.uniform((4, 4))
        source = build_encoder(EncoderSpec(kind="identity"), space)
        for target in (0, 1):
            _, acc = train_downstream(source, space, target, FAST_GBT)
            assert acc >= 0.99

    def test_dropping_target_dim_gives_chance_accuracy(self):
        space = FactorSpace.uniform((4, 4))
        spec = EncoderSpec(kind="collapse", dropped=(0,), base=EncoderSpec(kind="identity"))
        _, acc = train_downstream(build_encoder(spec, space), space, 0, FAST_GBT)
        assert abs(acc - 0.25) < 0.06

    def test_heavy_noise_drives_accuracy_to_chance(self):
        space = FactorSpace.uniform((4, 4))
        spec = EncoderSpec(kind="noisy", sigma=50.0, base=EncoderSpec(kind="identity"))
        _, acc = train_downstream(build_encoder(spec, space), space, 0, FAST_GBT)
        assert abs(acc - 0.25) < 0.08

    def test_bad_target_rejected(self):
        space = FactorSpace.uniform((4, 4))
        source = build_encoder(EncoderSpec(kind="identity"), space)
        with pytest.raises(ValueError):
            train_downstream(source, space, 2, FAST_GBT)


class TestPredictionDistribution:
    def test_constant_classifier_is_point_mass_under_any_intervention(self):
        space = FactorSpace.uniform((4, 4))
        source = _raw_label_source(space)
        for intervention in (None, (1, 3)):
            dist = prediction_distribution(
                _Constant(), source, space, target=0, intervention=intervention,
                n=500, rng=make_rng(0),
            )
            np.testing.assert_allclose(dist.probs, [1, 0, 0, 0])

    def test_min_mixing_argmax_intervened_rate(self):
        world = MinMixingWorld(0.5, 0.5)
        dist = prediction_distribution(
            ArgmaxBayesClassifier(world), min_mixing_source(world), min_mixing_space(world),
            target=0, intervention=(1, 1), exact=True,
        )
        assert dist.probs[1] == pytest.approx(0.5, abs=1e-15)

    def test_exact_marginal_is_prior_mixture_of_interventionals(self):
        space = FactorSpace.uniform((3, 4))
        source = _raw_label_source(space)
        model = _DimReader(0)
        marginal = prediction_distribution(model, source, space, 0, exact=True).probs
        mixture = np.zeros_like(marginal)
        for v in range(4):
            mixture += 0.25 * prediction_distribution(
                model, source, space, 0, intervention=(1, v), exact=True
            ).probs
        np.testing.assert_allclose(marginal, mixture, atol=1e-12)

    def test_sampling_mode_needs_positive_n(self):
        space = FactorSpace.uniform((2, 2))
        with pytest.raises(ValueError):
            prediction_distribution(_Constant(), _raw_label_source(space), space, 0, n=0)


class TestTaskUnfairness:
    def test_classifier_ignoring_s_scores_zero_exactly(self):
        # reads only a code dim that is a function of the target alone
        space = FactorSpace.uniform((4, 4))
        source = _raw_label_source(space)
        model = _DimReader(0)
        for task in (Task(0, 1),):
            assert task_unfairness(model, source, space, task, exact=True) == 0.0

    def test_sampling_mode_noise_floor(self):
        space = FactorSpace.uniform((4, 4))
        source = _raw_label_source(space)
        value = task_unfairness(_DimReader(0), source, space, Task(0, 1), n=2000, rng=make_rng(1))
        assert value <= 0.05

    def test_classifier_that_predicts_s_scores_half(self):
        space = FactorSpace.uniform((2, 2))
        source = _raw_label_source(space)
        assert task_unfairness(_DimReader(1), source, space, Task(0, 1), exact=True) == 0.5

    def test_min_mixing_matches_enumeration_oracle(self):
        world = MinMixingWorld(0.5, 0.5)
        space, source = min_mixing_space(world), min_mixing_source(world)
        stochastic = task_unfairness(
            StochasticBayesClassifier(world), source, space, Task(0, 1), exact=True
        )
        argmax = task_unfairness(
            ArgmaxBayesClassifier(world), source, space, Task(0, 1), exact=True
        )
        assert stochastic == pytest.approx(unfairness_exact(world, "stochastic"), abs=1e-12)
        assert stochastic == pytest.approx(1 / 6, abs=1e-12)
        assert argmax == pytest.approx(0.25, abs=1e-12)

    def test_relabeling_sensitive_categories_is_neutral(self):
        space = FactorSpace.uniform((2, 3))
        perm = (2, 0, 1)

        def encode_base(f, rng=None):
            return f.astype(float)

        def encode_perm(f, rng=None):
            out = f.astype(float)
            out[:, 1] = np.array(perm, dtype=float)[f[:, 1]]
            return out

        base_source = encoder_source(space, encode_base, encode_base, 2)
        perm_source = encoder_source(space, encode_perm, encode_perm, 2)

        class SensitiveIsOne:
            def __init__(self, hot):
                self.hot = hot

            def predict(self, X):
                return (np.rint(np.asarray(X)[:, 1]).astype(int) == self.hot).astype(int)

        base = task_unfairness(SensitiveIsOne(1), base_source, space, Task(0, 1), exact=True)
        relabeled = task_unfairness(
            SensitiveIsOne(perm[1]), perm_source, space, Task(0, 1), exact=True
        )
        assert relabeled == pytest.approx(base, abs=1e-15)


class TestUnfairnessScore:
    def test_identity_world_is_nearly_fair(self):
        space = FactorSpace.uniform((4, 4))
        source = build_encoder(EncoderSpec(kind="identity"), space)
        report = unfairness_score(source, space, FAST_GBT, n_interventional=2000, seed=0)
        assert report.unfairness <= 0.05
        assert report.gbt_accuracy >= 0.99
        assert len(report.task_unfairness) == 2

    def test_min_mixing_world_is_substantially_unfair(self):
        world = MinMixingWorld(0.5, 0.5)
        report = unfairness_score(
            min_mixing_source(world), min_mixing_space(world), FAST_GBT,
            n_interventional=2000, seed=0,
        )
        assert report.unfairness >= 0.15

    def test_repeated_seed_reproduces_report_exactly(self):
        space = FactorSpace.uniform((4, 4))
        source = build_encoder(EncoderSpec(kind="random_linear", seed=0), space)
        a = unfairness_score(source, space, FAST_GBT, n_interventional=1000, seed=5)
        b = unfairness_score(source, space, FAST_GBT, n_interventional=1000, seed=5)
        assert a.unfairness == b.unfairness
        assert a.gbt_accuracy == b.gbt_accuracy
        assert a.task_unfairness == b.task_unfairness
