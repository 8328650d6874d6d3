"""From-scratch supervised learners used throughout the audit harness.

The gradient boosted trees are one-vs-rest ensembles of depth-limited
regression trees fit to the logistic loss with second-order (Newton) leaf
values and exact split search on presorted features.  Feature presorting is
done once per training matrix and shared by every class and boosting round,
which keeps desk-scale training fast without histogram approximations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Leaf regularization and clipping keep Newton steps bounded so the training
# loss is non-increasing at the default learning rate.
_LEAF_LAMBDA = 1e-3
_LEAF_CLIP = 10.0
_MIN_GAIN = 1e-12


class DegenerateModelError(ValueError):
    """Raised when training data cannot support a classifier (one class)."""


@dataclass(frozen=True)
class GbtConfig:
    """Hyperparameters for the downstream boosted-tree classifier."""

    num_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    train_size: int = 10000
    test_size: int = 5000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.train_size < 1 or self.test_size < 1:
            raise ValueError("train_size and test_size must be >= 1")


@dataclass
class _Tree:
    feature: np.ndarray  # (nodes,), -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf values (unscaled by learning rate)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = np.nonzero(feat >= 0)[0]
            if active.size == 0:
                return self.value[node]
            cur = node[active]
            go_left = X[active, feat[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])


def _fit_tree(X, g, h, presort, max_depth):
    """Grow one regression tree on gradients/hessians.

    Returns the tree, the per-row leaf value (so the caller can update scores
    without re-predicting) and the split gain accumulated per feature.
    """
    n, d = X.shape
    feature, threshold, left, right, value = [], [], [], [], []
    row_value = np.zeros(n)
    gains = np.zeros(d)

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    in_node = np.zeros(n, dtype=bool)
    in_node[:] = True
    frontier = [(root, in_node, 0)]
    while frontier:
        node_id, mask, depth = frontier.pop()
        g_sum = g[mask].sum()
        h_sum = h[mask].sum()
        count = int(mask.sum())
        best_gain = _MIN_GAIN
        best = None
        if depth < max_depth and count >= 2:
            parent_score = g_sum * g_sum / (h_sum + _LEAF_LAMBDA)
            for j in range(d):
                srt = presort[:, j]
                rows = srt[mask[srt]]
                xs = X[rows, j]
                gl = np.cumsum(g[rows])[:-1]
                hl = np.cumsum(h[rows])[:-1]
                valid = xs[1:] > xs[:-1]
                if not valid.any():
                    continue
                gr = g_sum - gl
                hr = h_sum - hl
                score = gl * gl / (hl + _LEAF_LAMBDA) + gr * gr / (hr + _LEAF_LAMBDA)
                score = np.where(valid, score, -np.inf)
                t = int(np.argmax(score))
                gain = 0.5 * (score[t] - parent_score)
                if gain > best_gain:
                    best_gain = gain
                    best = (j, 0.5 * (xs[t] + xs[t + 1]), rows[: t + 1])
        if best is None:
            leaf = float(np.clip(-g_sum / (h_sum + _LEAF_LAMBDA), -_LEAF_CLIP, _LEAF_CLIP))
            value[node_id] = leaf
            row_value[mask] = leaf
            continue
        j, thr, left_rows = best
        gains[j] += best_gain
        left_mask = np.zeros(n, dtype=bool)
        left_mask[left_rows] = True
        lid = new_node()
        rid = new_node()
        feature[node_id] = j
        threshold[node_id] = thr
        left[node_id] = lid
        right[node_id] = rid
        frontier.append((lid, left_mask, depth + 1))
        frontier.append((rid, mask & ~left_mask, depth + 1))

    tree = _Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value),
    )
    return tree, row_value, gains


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logistic_loss(F: np.ndarray, y01: np.ndarray) -> float:
    # log(1 + e^F) - y*F, computed stably
    return float(np.mean(np.logaddexp(0.0, F) - y01 * F))


@dataclass
class GbtModel:
    """One-vs-rest boosted trees; prediction is the argmax class score."""

    classes: np.ndarray
    num_features: int
    learning_rate: float
    base_scores: np.ndarray
    trees: list[list[_Tree]]
    feature_gains: np.ndarray
    train_losses: list[np.ndarray] = field(default_factory=list)

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scores = np.tile(self.base_scores, (len(X), 1))
        if len(X) == 0:
            return scores
        for c, class_trees in enumerate(self.trees):
            for tree in class_trees:
                scores[:, c] += self.learning_rate * tree.predict(X)
        return scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if len(X) == 0:
            return np.empty(0, dtype=self.classes.dtype)
        if X.shape[1] != self.num_features:
            raise ValueError(f"expected {self.num_features} features, got {X.shape[1]}")
        # argmax takes the first maximum, i.e. ties go to the lower class
        return self.classes[np.argmax(self.decision_scores(X), axis=1)]


def train_gbt(X, y, config: GbtConfig = GbtConfig()) -> GbtModel:
    """Fit one-vs-rest boosted regression trees on the logistic loss.

    Training is deterministic: exact split search scans features in order and
    keeps the first best split.  The per-round training loss of every class
    ensemble is checked to be non-increasing.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if len(X) < 2:
        raise ValueError("need at least 2 training rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain NaN or Inf")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DegenerateModelError(f"training labels contain a single class: {classes!r}")

    presort = np.argsort(X, axis=0, kind="mergesort")
    all_trees: list[list[_Tree]] = []
    base_scores = np.empty(len(classes))
    gains = np.zeros(X.shape[1])
    losses: list[np.ndarray] = []
    for c, cls in enumerate(classes):
        y01 = (y == cls).astype(float)
        pbar = y01.mean()
        F0 = float(np.log(pbar / (1.0 - pbar)))
        F = np.full(len(y01), F0)
        base_scores[c] = F0
        class_trees: list[_Tree] = []
        class_losses = [_logistic_loss(F, y01)]
        for _ in range(config.num_trees):
            p = _sigmoid(F)
            g = p - y01
            h = p * (1.0 - p)
            tree, row_value, tree_gains = _fit_tree(X, g, h, presort, config.max_depth)
            F = F + config.learning_rate * row_value
            loss = _logistic_loss(F, y01)
            if loss > class_losses[-1] + 1e-9 * (1.0 + abs(class_losses[-1])):
                raise RuntimeError(
                    f"training loss increased for class {cls!r}: "
                    f"{class_losses[-1]!r} -> {loss!r}"
                )
            class_losses.append(loss)
            class_trees.append(tree)
            gains += tree_gains
        all_trees.append(class_trees)
        losses.append(np.array(class_losses))
    return GbtModel(
        classes=classes,
        num_features=X.shape[1],
        learning_rate=config.learning_rate,
        base_scores=base_scores,
        trees=all_trees,
        feature_gains=gains,
        train_losses=losses,
    )


def gbt_predict(model: GbtModel, X) -> np.ndarray:
    return model.predict(np.asarray(X, dtype=float).reshape(-1, model.num_features))


def gbt_feature_importance(model: GbtModel) -> np.ndarray:
    """Split-gain importance per feature, normalized to sum to 1.

    A model that never split (all-zero gains) reports a uniform vector.
    """
    total = model.feature_gains.sum()
    if total <= 0:
        return np.full(model.num_features, 1.0 / model.num_features)
    return model.feature_gains / total


@dataclass
class LinearModel:
    """Multinomial logistic regression parameters."""

    classes: np.ndarray
    weights: np.ndarray  # (K, d)
    bias: np.ndarray  # (K,)

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if len(X) == 0:
            return np.empty(0, dtype=self.classes.dtype)
        return self.classes[np.argmax(self.decision_scores(X), axis=1)]


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def linear_loss_and_grad(weights, bias, X, y_index, l2):
    """Mean cross-entropy (+ l2/2 * ||W||^2) and its exact gradient.

    ``y_index`` holds class indices into the weight rows.  Exposed so the
    gradient can be checked against finite differences.
    """
    n = len(X)
    Z = X @ weights.T + bias
    Zs = Z - Z.max(axis=1, keepdims=True)
    logp = Zs - np.log(np.exp(Zs).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y_index].mean() + 0.5 * l2 * float((weights * weights).sum())
    P = np.exp(logp)
    P[np.arange(n), y_index] -= 1.0
    grad_w = P.T @ X / n + l2 * weights
    grad_b = P.mean(axis=0)
    return loss, grad_w, grad_b


def train_linear(X, y, l2: float = 1e-4, max_iter: int = 5000, tol: float = 1e-6) -> LinearModel:
    """Fit multinomial logistic regression by full-batch gradient descent.

    Stops when the gradient norm drops below ``tol`` or after ``max_iter``
    steps; the step size is the inverse of a Lipschitz bound on the gradient.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain NaN or Inf")
    if len(X) < 2:
        raise ValueError("need at least 2 training rows")
    classes, y_index = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise DegenerateModelError(f"training labels contain a single class: {classes!r}")
    n, d = X.shape
    K = len(classes)
    W = np.zeros((K, d))
    b = np.zeros(K)
    lam_max = float(np.linalg.eigvalsh(X.T @ X / n)[-1])
    step = 1.0 / (0.5 * (lam_max + 1.0) + l2)
    for _ in range(max_iter):
        _, gw, gb = linear_loss_and_grad(W, b, X, y_index, l2)
        gnorm = np.sqrt((gw * gw).sum() + (gb * gb).sum())
        if gnorm <= tol:
            break
        W -= step * gw
        b -= step * gb
    return LinearModel(classes=classes, weights=W, bias=b)


def majority_vote(votes) -> tuple[dict[int, int], float]:
    """Build the dim -> factor majority map and its accuracy on the votes.

    Ties go to the lower factor index.
    """
    votes = list(votes)
    if not votes:
        raise ValueError("need at least one vote")
    counts: dict[int, dict[int, int]] = {}
    for dim, factor in votes:
        counts.setdefault(dim, {})
        counts[dim][factor] = counts[dim].get(factor, 0) + 1
    mapping = {
        dim: min((f for f, c in fc.items() if c == max(fc.values())))
        for dim, fc in counts.items()
    }
    correct = sum(1 for dim, factor in votes if mapping[dim] == factor)
    return mapping, correct / len(votes)
