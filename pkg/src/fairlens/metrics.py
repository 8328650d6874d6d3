"""The six disentanglement scores.

Every score maps a representation source plus a sampling budget to a value
in [0, 1]:

* ``betavae_score``: linear classifier predicting which factor was held
  fixed from mean absolute code differences.
* ``factorvae_score``: majority vote on the argmin-variance code dim after
  an intervention, with collapsed dims pruned.
* ``mig``: normalized gap between the top two code/factor mutual
  informations, per factor.
* ``modularity``: penalty on mutual information spread across factors.
* ``dci_disentanglement``: one minus the base-K entropy of per-dim
  importance profiles from boosted-tree probes, importance weighted.
* ``sap_score``: gap between the two most predictive single dims per
  factor, using one-threshold stump classifiers and balanced accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .classifiers import GbtConfig, gbt_feature_importance, majority_vote, train_gbt, train_linear
from .core import FactorAssignment, FactorSpace, RepresentationSource, make_rng, sample_batch
from .estimators import MIMatrix, mi_matrix

logger = logging.getLogger(__name__)

METRIC_NAMES = ("betavae", "factorvae", "mig", "modularity", "dci", "sap")

# Dims whose global std falls below this fraction of the max std are treated
# as collapsed and never win the variance vote.
_PRUNE_FRACTION = 0.02
_MAX_CLAMP = 0.02


class DegenerateRepresentationError(RuntimeError):
    """Raised when a representation has no usable code dimensions."""


@dataclass(frozen=True)
class MetricBudget:
    """Sampling budget shared by the disentanglement scores."""

    num_train_points: int = 10000
    num_eval_points: int = 5000
    batch_size: int = 64
    bins: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.num_train_points, self.num_eval_points, self.batch_size, self.bins) < 1:
            raise ValueError("budget fields must be positive")


@dataclass(frozen=True)
class DisentanglementReport:
    """One value per score, each clamped to [0, 1]."""

    betavae: float
    factorvae: float
    mig: float
    modularity: float
    dci: float
    sap: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _clamp_unit(value: float, name: str) -> float:
    if value < -_MAX_CLAMP or value > 1.0 + _MAX_CLAMP:
        raise RuntimeError(f"{name} = {value!r} is too far outside [0, 1] to clamp")
    clamped = min(1.0, max(0.0, value))
    if clamped != value:
        logger.warning("clamped %s from %r to %r", name, value, clamped)
    return clamped


def _grouped_interventions(space: FactorSpace, num_points: int, rng: np.random.Generator):
    """Pick (factor, value) per point and group point indices by that cell.

    Factors are chosen uniformly; values follow the factor's prior.  Grouping
    lets callers draw one batch per cell instead of one per point.
    """
    ks = rng.integers(0, space.num_factors, size=num_points)
    vs = np.empty(num_points, dtype=np.int64)
    for k in range(space.num_factors):
        sel = np.nonzero(ks == k)[0]
        if len(sel):
            vs[sel] = rng.choice(space.cardinalities[k], size=len(sel), p=space.priors[k])
    groups = []
    for k in range(space.num_factors):
        for v in range(space.cardinalities[k]):
            sel = np.nonzero((ks == k) & (vs == v))[0]
            if len(sel):
                groups.append((k, v, sel))
    return ks, groups


def betavae_score(source: RepresentationSource, space: FactorSpace, budget: MetricBudget) -> float:
    """Accuracy of a linear probe at naming the factor that was held fixed."""
    if space.num_factors < 2:
        raise ValueError("need at least 2 factors")
    rng = make_rng(budget.seed)
    num_points = budget.num_train_points + budget.num_eval_points
    ks, groups = _grouped_interventions(space, num_points, rng)
    features = np.empty((num_points, source.code_dim))
    for k, v, sel in groups:
        fixed = FactorAssignment.fixing(space.num_factors, {k: v})
        ds = sample_batch(source, space, 2 * budget.batch_size * len(sel), fixed, rng)
        codes = ds.codes.reshape(len(sel), 2, budget.batch_size, source.code_dim)
        features[sel] = np.abs(codes[:, 0] - codes[:, 1]).mean(axis=1)
    n_train = budget.num_train_points
    model = train_linear(features[:n_train], ks[:n_train])
    predicted = model.predict(features[n_train:])
    return _clamp_unit(float((predicted == ks[n_train:]).mean()), "betavae")


def factorvae_score(source: RepresentationSource, space: FactorSpace, budget: MetricBudget) -> float:
    """Majority-vote accuracy of the lowest-variance dim under interventions."""
    if space.num_factors < 2:
        raise ValueError("need at least 2 factors")
    rng = make_rng(budget.seed)
    free = FactorAssignment.free(space.num_factors)
    global_std = sample_batch(source, space, budget.num_train_points, free, rng).codes.std(axis=0)
    max_std = global_std.max()
    active = np.nonzero(global_std >= _PRUNE_FRACTION * max_std)[0] if max_std > 0 else np.array([], int)
    if len(active) == 0:
        raise DegenerateRepresentationError("all code dims pruned (representation collapsed)")

    num_votes = budget.num_train_points + budget.num_eval_points
    ks, groups = _grouped_interventions(space, num_votes, rng)
    vote_dims = np.empty(num_votes, dtype=np.int64)
    for k, v, sel in groups:
        fixed = FactorAssignment.fixing(space.num_factors, {k: v})
        ds = sample_batch(source, space, budget.batch_size * len(sel), fixed, rng)
        codes = ds.codes.reshape(len(sel), budget.batch_size, source.code_dim)
        variances = (codes[:, :, active] / global_std[active]).var(axis=1)
        vote_dims[sel] = active[np.argmin(variances, axis=1)]
    n_train = budget.num_train_points
    train_votes = list(zip(vote_dims[:n_train], ks[:n_train]))
    mapping, _ = majority_vote(train_votes)
    eval_hits = [mapping.get(d) == k for d, k in zip(vote_dims[n_train:], ks[n_train:])]
    return _clamp_unit(float(np.mean(eval_hits)), "factorvae")


def mig_from_matrix(matrix: MIMatrix) -> float:
    """Mean normalized gap between the two largest MI entries per factor."""
    terms = []
    for k in range(matrix.num_factors):
        h = matrix.factor_entropies[k]
        if h <= 0:
            logger.warning("skipping factor %d with zero entropy in MIG", k)
            continue
        col = matrix.mi[:, k]
        if matrix.num_codes >= 2:
            top = np.partition(col, -2)[-2:]
            gap = top[1] - top[0]
        else:
            gap = col[0]
        terms.append(gap / h)
    if not terms:
        raise ValueError("every factor had zero entropy; MIG undefined")
    return _clamp_unit(float(np.mean(terms)), "mig")


def mig(source: RepresentationSource, space: FactorSpace, budget: MetricBudget) -> float:
    rng = make_rng(budget.seed)
    ds = sample_batch(source, space, budget.num_train_points, FactorAssignment.free(space.num_factors), rng)
    return mig_from_matrix(mi_matrix(ds, budget.bins))


def modularity(matrix: MIMatrix) -> float:
    """Mean per-dim penalty for MI mass outside the best factor."""
    if matrix.num_factors < 2:
        raise ValueError("modularity needs at least 2 factors")
    scores = []
    for i in range(matrix.num_codes):
        row = matrix.mi[i]
        theta = row.max()
        if theta <= 0:
            scores.append(0.0)
            continue
        delta = (np.square(row).sum() - theta * theta) / (theta * theta * (matrix.num_factors - 1))
        scores.append(1.0 - delta)
    # sorted accumulation keeps the mean exactly invariant to dim order
    return _clamp_unit(float(np.sort(scores).mean()), "modularity")


def _entropy_base(p: np.ndarray, base: int) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum() / np.log(base))


def dci_from_importance(importance: np.ndarray) -> float:
    """Disentanglement from a (num_codes x num_factors) relevance matrix."""
    R = np.asarray(importance, dtype=float)
    if R.ndim != 2 or R.shape[1] < 2:
        raise ValueError("importance must be (codes x factors) with >= 2 factors")
    if np.any(R < 0):
        raise ValueError("importance entries must be nonnegative")
    num_factors = R.shape[1]
    row_sums = R.sum(axis=1)
    P = np.where(
        row_sums[:, None] > 0, R / np.where(row_sums[:, None] > 0, row_sums[:, None], 1.0),
        1.0 / num_factors,
    )
    per_dim = np.array([1.0 - _entropy_base(P[i], num_factors) for i in range(len(P))])
    total = np.sort(row_sums).sum()
    weights = row_sums / total if total > 0 else np.full(len(P), 1.0 / len(P))
    # sorted accumulation keeps the result exactly invariant to dim order
    return float(np.sort(weights * per_dim).sum())


@dataclass(frozen=True)
class DciResult:
    disentanglement: float
    completeness: float
    informativeness: float
    importance: np.ndarray  # (num_codes, num_factors)


def dci_disentanglement(
    source: RepresentationSource,
    space: FactorSpace,
    budget: MetricBudget,
    gbt_config: GbtConfig | None = None,
) -> DciResult:
    """Train one boosted-tree probe per factor and score the importance matrix.

    Completeness and informativeness ride along for diagnostics; the headline
    value is the disentanglement component.
    """
    if space.num_factors < 2:
        raise ValueError("need at least 2 factors")
    cfg = gbt_config or GbtConfig()
    rng = make_rng(budget.seed)
    free = FactorAssignment.free(space.num_factors)
    train = sample_batch(source, space, budget.num_train_points, free, rng)
    test = sample_batch(source, space, budget.num_eval_points, free, rng)
    R = np.empty((source.code_dim, space.num_factors))
    accuracies = []
    for k in range(space.num_factors):
        model = train_gbt(train.codes, train.factors[:, k], cfg)
        R[:, k] = gbt_feature_importance(model)
        accuracies.append(float((model.predict(test.codes) == test.factors[:, k]).mean()))
    col_sums = R.sum(axis=0)
    completeness = float(
        np.mean(
            [
                1.0 - _entropy_base(R[:, k] / col_sums[k], max(source.code_dim, 2))
                for k in range(space.num_factors)
                if col_sums[k] > 0
            ]
        )
    )
    informativeness = float(np.mean(accuracies))
    disent = _clamp_unit(dci_from_importance(R), "dci")
    logger.debug(
        "dci disentanglement=%.4f completeness=%.4f informativeness=%.4f",
        disent, completeness, informativeness,
    )
    return DciResult(disent, completeness, informativeness, R)


def _best_stump(x_train, y_train, x_eval, y_eval) -> float:
    """Balanced eval accuracy of the best train-selected threshold stump.

    Considers every one-vs-rest class and both polarities; balanced accuracy
    keeps chance at 0.5 regardless of class imbalance.
    """
    order = np.argsort(x_train, kind="mergesort")
    xs = x_train[order]
    if len(xs) < 2:
        return 0.5
    distinct = xs[1:] > xs[:-1]
    if not distinct.any():
        return 0.5
    best = (0.5, None, None, True)  # (train balanced acc, class, threshold, low_is_positive)
    for cls in np.unique(y_train):
        ybin = (y_train[order] == cls).astype(float)
        P = ybin.sum()
        N = len(ybin) - P
        if P == 0 or N == 0:
            continue
        tpr = np.cumsum(ybin)[:-1] / P
        fpr = np.cumsum(1.0 - ybin)[:-1] / N
        bal_low = 0.5 * (tpr + 1.0 - fpr)  # predict positive when x <= threshold
        bal_low = np.where(distinct, bal_low, -np.inf)
        t = int(np.argmax(bal_low))
        for score, low_pos in ((bal_low[t], True), (1.0 - bal_low[t], False)):
            if score > best[0]:
                best = (score, cls, 0.5 * (xs[t] + xs[t + 1]), low_pos)
    _, cls, thr, low_pos = best
    if cls is None:
        return 0.5
    pred = (x_eval <= thr) if low_pos else (x_eval > thr)
    actual = y_eval == cls
    rates = []
    if actual.any():
        rates.append(float(pred[actual].mean()))
    if (~actual).any():
        rates.append(float((~pred[~actual]).mean()))
    return float(np.mean(rates))


def sap_score(source: RepresentationSource, space: FactorSpace, budget: MetricBudget) -> float:
    """Mean gap between the two most predictive single code dims per factor."""
    if source.code_dim < 2:
        raise ValueError("SAP needs at least 2 code dims")
    rng = make_rng(budget.seed)
    free = FactorAssignment.free(space.num_factors)
    train = sample_batch(source, space, budget.num_train_points, free, rng)
    test = sample_batch(source, space, budget.num_eval_points, free, rng)
    S = np.empty((source.code_dim, space.num_factors))
    for j in range(source.code_dim):
        for k in range(space.num_factors):
            S[j, k] = _best_stump(
                train.codes[:, j], train.factors[:, k], test.codes[:, j], test.factors[:, k]
            )
    gaps = []
    for k in range(space.num_factors):
        top = np.partition(S[:, k], -2)[-2:]
        gaps.append(top[1] - top[0])
    return _clamp_unit(float(np.mean(gaps)), "sap")


def compute_all_metrics(
    source: RepresentationSource,
    space: FactorSpace,
    budget: MetricBudget,
    gbt_config: GbtConfig | None = None,
) -> tuple[dict[str, float], dict[str, str]]:
    """Run every score, capturing per-score failures instead of aborting.

    Returns (scores, errors); a score appears in exactly one of the two.
    MIG and Modularity share one sampled MI matrix.
    """
    scores: dict[str, float] = {}
    errors: dict[str, str] = {}

    def attempt(name, fn):
        try:
            scores[name] = float(fn())
        except Exception as exc:  # recorded per score, evaluation continues
            errors[name] = f"{type(exc).__name__}: {exc}"

    attempt("betavae", lambda: betavae_score(source, space, budget))
    attempt("factorvae", lambda: factorvae_score(source, space, budget))
    rng = make_rng(budget.seed)
    try:
        ds = sample_batch(
            source, space, budget.num_train_points, FactorAssignment.free(space.num_factors), rng
        )
        matrix = mi_matrix(ds, budget.bins)
        attempt("mig", lambda: mig_from_matrix(matrix))
        attempt("modularity", lambda: modularity(matrix))
    except Exception as exc:
        errors["mig"] = errors["modularity"] = f"{type(exc).__name__}: {exc}"
    attempt("dci", lambda: dci_disentanglement(source, space, budget, gbt_config).disentanglement)
    attempt("sap", lambda: sap_score(source, space, budget))
    return scores, errors
