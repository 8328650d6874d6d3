"""Downstream fairness evaluation.

For every ordered pair of factors (target y, sensitive s) a boosted-tree
classifier trained to predict y from the codes is audited: the sensitive
factor is clamped to each of its values, fresh codes are drawn, and the
unfairness is the mean total variation between the marginal prediction
distribution and each interventional one.  The marginal is always the
prior-weighted mixture of the interventional estimates, so the law of total
probability holds exactly even in sampling mode.

Models are duck-typed: anything with ``predict(X) -> labels`` works.  In
exact mode a model may expose ``predict_proba(X)`` instead, in which case
its prediction randomness is integrated out analytically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifiers import GbtConfig, GbtModel, train_gbt
from .core import FactorAssignment, FactorSpace, RepresentationSource, make_rng, sample_batch
from .estimators import DiscreteDistribution, total_variation


@dataclass(frozen=True)
class Task:
    """One downstream audit: predict ``target``, be fair to ``sensitive``."""

    target: int
    sensitive: int

    def __post_init__(self) -> None:
        if self.target == self.sensitive:
            raise ValueError("target and sensitive factor must differ")


@dataclass(frozen=True)
class FairnessReport:
    """Per-task unfairness, per-target accuracy, and their aggregates."""

    task_unfairness: dict[Task, float]
    target_accuracy: dict[int, float]
    unfairness: float
    gbt_accuracy: float


def enumerate_tasks(space: FactorSpace) -> list[Task]:
    """All ordered (target, sensitive) pairs; k factors give k(k-1) tasks."""
    if space.num_factors < 2:
        raise ValueError("need at least 2 factors to form tasks")
    return [
        Task(y, s)
        for y in range(space.num_factors)
        for s in range(space.num_factors)
        if y != s
    ]


def train_downstream(
    source: RepresentationSource,
    space: FactorSpace,
    target: int,
    config: GbtConfig = GbtConfig(),
    rng: np.random.Generator | None = None,
) -> tuple[GbtModel, float]:
    """Train the downstream classifier on fresh draws and report test accuracy."""
    if not 0 <= target < space.num_factors:
        raise ValueError(f"target {target} out of range")
    rng = rng if rng is not None else make_rng(config.seed)
    free = FactorAssignment.free(space.num_factors)
    train = sample_batch(source, space, config.train_size, free, rng)
    test = sample_batch(source, space, config.test_size, free, rng)
    model = train_gbt(train.codes, train.factors[:, target], config)
    accuracy = float((model.predict(test.codes) == test.factors[:, target]).mean())
    return model, accuracy


def _distribution_from_labels(labels: np.ndarray, support: int) -> DiscreteDistribution:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=support)
    return DiscreteDistribution.from_counts(counts)


def _exact_distribution(
    model, source: RepresentationSource, space: FactorSpace, support: int,
    fixed: FactorAssignment | None,
) -> DiscreteDistribution:
    if source.mean_codes is None:
        raise ValueError("exact mode needs a source with a noise-free mean code map")
    assignments = space.assignments()
    weights = space.assignment_weights(fixed)
    codes = source.mean_codes(assignments)
    proba = getattr(model, "predict_proba", None)
    if proba is not None:
        P = np.asarray(proba(codes))
        probs = np.zeros(support)
        probs[: P.shape[1]] = weights @ P
        return DiscreteDistribution(probs / weights.sum())
    labels = np.asarray(model.predict(codes), dtype=np.int64)
    probs = np.zeros(support)
    np.add.at(probs, labels, weights)
    return DiscreteDistribution(probs / weights.sum())


def prediction_distribution(
    model,
    source: RepresentationSource,
    space: FactorSpace,
    target: int,
    intervention: tuple[int, int] | None = None,
    n: int = 10000,
    rng: np.random.Generator | None = None,
    exact: bool = False,
) -> DiscreteDistribution:
    """Distribution of predicted target labels, marginally or under s = value.

    Sampling mode draws ``n`` fresh rows with the sensitive slot clamped and
    every free slot resampled from its prior; exact mode enumerates all
    assignments with their prior weights using noise-free mean codes.
    """
    support = space.cardinalities[target]
    fixed = (
        FactorAssignment.fixing(space.num_factors, {intervention[0]: intervention[1]})
        if intervention is not None
        else FactorAssignment.free(space.num_factors)
    )
    fixed.validate(space)
    if exact:
        return _exact_distribution(model, source, space, support, fixed)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = rng if rng is not None else make_rng(0)
    draws = sample_batch(source, space, n, fixed, rng)
    return _distribution_from_labels(model.predict(draws.codes), support)


def task_unfairness(
    model,
    source: RepresentationSource,
    space: FactorSpace,
    task: Task,
    n: int = 10000,
    rng: np.random.Generator | None = None,
    exact: bool = False,
) -> float:
    """Mean TV between the marginal prediction distribution and each
    interventional one; the marginal is the prior mixture of the latter.

    Sensitive values with zero prior mass are outside the intervention set
    and are skipped."""
    prior = space.priors[task.sensitive]
    values = [v for v in range(space.cardinalities[task.sensitive]) if prior[v] > 0]
    conditionals = []
    for value in values:
        conditionals.append(
            prediction_distribution(
                model, source, space, task.target,
                intervention=(task.sensitive, value), n=n, rng=rng, exact=exact,
            ).probs
        )
    marginal = np.average(np.stack(conditionals), axis=0, weights=prior[values])
    return float(np.mean([total_variation(marginal, c) for c in conditionals]))


def unfairness_score(
    source: RepresentationSource,
    space: FactorSpace,
    config: GbtConfig = GbtConfig(),
    n_interventional: int = 10000,
    exact: bool = False,
    seed: int | None = None,
) -> FairnessReport:
    """Audit every task; one model per target factor, reused across tasks.

    The sensitive factor is unobserved at training time, so the classifier
    for a target cannot depend on which factor is audited against it.
    """
    tasks = enumerate_tasks(space)
    rng = make_rng(seed if seed is not None else config.seed)
    models: dict[int, GbtModel] = {}
    target_accuracy: dict[int, float] = {}
    for target in sorted({t.target for t in tasks}):
        models[target], target_accuracy[target] = train_downstream(
            source, space, target, config, rng
        )
    per_task: dict[Task, float] = {}
    for task in tasks:
        per_task[task] = task_unfairness(
            models[task.target], source, space, task, n=n_interventional, rng=rng, exact=exact
        )
    return FairnessReport(
        task_unfairness=per_task,
        target_accuracy=target_accuracy,
        unfairness=float(np.mean(list(per_task.values()))),
        gbt_accuracy=float(np.mean(list(target_accuracy.values()))),
    )
