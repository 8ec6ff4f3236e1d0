"""
From-scratch random forest (Breiman style) used as the base learner of every meta-learner.

Regression mode fits conditional means; probability mode is the same regression on a 0/1
target. Each tree is grown on a bootstrap sample of size n (drawn with probabilities
proportional to ``case_weights`` when given) and keeps its in-bag counts so that out-of-bag
predictions can be formed for the training rows.
"""

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from .exceptions import InsufficientData, InvalidInput
from .forest_config import ForestParams
from .seeding import Stream, substreams

logger = logging.getLogger(__name__)

REGRESSION = "regression"
PROBABILITY = "probability"

_LEAF = -1


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """
    配列表現の二分木
    feature[k] == -1 のノードは葉で、value[k] がその予測値
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == _LEAF))

    def apply(self, features: np.ndarray) -> np.ndarray:
        """Return the leaf index reached by every row."""
        node = np.zeros(features.shape[0], dtype=np.intp)
        active = np.arange(features.shape[0])
        while active.size:
            current = node[active]
            split = self.feature[current] != _LEAF
            active = active[split]
            if not active.size:
                break
            current = current[split]
            go_left = features[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
        return node

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.value[self.apply(features)]


class OobPrediction(NamedTuple):
    values: np.ndarray
    valid: np.ndarray


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: Tuple[RegressionTree, ...]
    inbag: np.ndarray                   # n_trees × n bootstrap counts
    training_range: Tuple[float, float]
    n_features: int
    training_features: Optional[np.ndarray] = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _check_features(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise InvalidInput(f"Expected an m×{self.n_features} matrix, got shape {features.shape}")
        return features

    def _clip(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.training_range[0], self.training_range[1])

    def predict(self, features) -> np.ndarray:
        """各木の葉の平均値をさらに木について平均する"""
        features = self._check_features(features)
        if features.shape[0] == 0:
            return np.empty(0, dtype=np.float64)
        total = np.zeros(features.shape[0], dtype=np.float64)
        for tree in self.trees:
            total += tree.predict(features)
        return self._clip(total / self.n_trees)

    def predict_oob(self) -> OobPrediction:
        """
        Out-of-bag prediction for every training row.

        Rows that are in-bag for every tree fall back to the full-forest prediction and are
        flagged invalid.
        """
        if self.training_features is None:
            raise InvalidInput("Model does not retain its training rows")
        features = self.training_features
        n = features.shape[0]
        total = np.zeros(n, dtype=np.float64)
        oob_total = np.zeros(n, dtype=np.float64)
        oob_count = np.zeros(n, dtype=np.int64)
        for tree, counts in zip(self.trees, self.inbag):
            leaf_values = tree.predict(features)
            total += leaf_values
            out_of_bag = counts == 0
            oob_total[out_of_bag] += leaf_values[out_of_bag]
            oob_count += out_of_bag

        valid = oob_count > 0
        values = np.where(valid, oob_total / np.maximum(oob_count, 1), total / self.n_trees)
        n_fallback = int(n - np.count_nonzero(valid))
        if n_fallback:
            logger.warning(f"OOB fallback to full-forest prediction for {n_fallback} of {n} rows")
        return OobPrediction(self._clip(values), valid)


############################################################
# Split search
############################################################
def _draw_candidates(rng: np.random.Generator, p: int, mtry: int,
                     forced_feature: Optional[int]) -> np.ndarray:
    candidates = rng.choice(p, size=mtry, replace=False)
    if forced_feature is not None and forced_feature not in candidates:
        candidates = np.append(candidates, forced_feature)
    return candidates


def _best_split(features: np.ndarray, targets: np.ndarray, candidates: np.ndarray,
                min_leaf: int, rows: Optional[np.ndarray] = None) -> Optional[Tuple[int, float, float]]:
    """
    Exhaustive variance-reduction search over the candidate features.

    All candidate columns are sorted and scanned at once. Thresholds are midpoints between
    consecutive distinct sorted values; both children must keep at least ``min_leaf`` rows.
    Ties go to the earliest candidate in draw order and, within a feature, to the lowest
    threshold.

    Returns:
        (feature, threshold, gain) or None when no admissible split reduces the variance
    """
    n = targets.shape[0]
    if n < 2 * min_leaf:
        return None
    candidates = np.asarray(candidates, dtype=np.intp)
    block = features[:, candidates] if rows is None else features[np.ix_(rows, candidates)]
    order = np.argsort(block, axis=0, kind="stable")
    xs = np.take_along_axis(block, order, axis=0)
    csum = np.cumsum(targets[order], axis=0)

    total = targets.sum()
    base = total * total / n
    # 左の子のサイズが min_leaf .. n-min_leaf になる分割位置
    left_n = np.arange(min_leaf, n - min_leaf + 1, dtype=np.float64)[:, None]
    left_sum = csum[min_leaf - 1:n - min_leaf]
    right_sum = total - left_sum
    admissible = xs[min_leaf - 1:n - min_leaf] < xs[min_leaf:n - min_leaf + 1]
    gain = left_sum * left_sum / left_n + right_sum * right_sum / (n - left_n) - base
    gain = np.where(admissible, gain, -np.inf)

    position = np.argmax(gain, axis=0)
    column_gain = gain[position, np.arange(candidates.shape[0])]
    j = int(np.argmax(column_gain))
    if not column_gain[j] > 0.0:
        return None
    k = int(position[j])
    lo = xs[min_leaf - 1 + k, j]
    hi = xs[min_leaf + k, j]
    threshold = 0.5 * (lo + hi)
    if threshold >= hi:
        threshold = lo
    return int(candidates[j]), float(threshold), float(column_gain[j])


def _grow_tree(features: np.ndarray, targets: np.ndarray, mtry: int, min_leaf: int,
               forced_feature: Optional[int], rng: np.random.Generator) -> RegressionTree:
    p = features.shape[1]
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []

    def new_node():
        feature.append(_LEAF)
        threshold.append(np.nan)
        left.append(_LEAF)
        right.append(_LEAF)
        value.append(0.0)
        return len(value) - 1

    stack = [(new_node(), np.arange(targets.shape[0]))]
    while stack:
        node, rows = stack.pop()
        node_targets = targets[rows]
        lo, hi = node_targets.min(), node_targets.max()
        if lo == hi:
            value[node] = float(lo)
            continue
        value[node] = float(np.clip(node_targets.mean(), lo, hi))
        if rows.shape[0] < 2 * min_leaf:
            continue

        candidates = _draw_candidates(rng, p, mtry, forced_feature)
        split = _best_split(features, node_targets, candidates, min_leaf, rows=rows)
        if split is None:
            continue

        split_feature, split_threshold, _ = split
        goes_left = features[rows, split_feature] <= split_threshold
        left_node, right_node = new_node(), new_node()
        feature[node] = split_feature
        threshold[node] = split_threshold
        left[node] = left_node
        right[node] = right_node
        stack.append((right_node, rows[~goes_left]))
        stack.append((left_node, rows[goes_left]))

    return RegressionTree(np.asarray(feature, dtype=np.intp),
                          np.asarray(threshold, dtype=np.float64),
                          np.asarray(left, dtype=np.intp),
                          np.asarray(right, dtype=np.intp),
                          np.asarray(value, dtype=np.float64))


def _bootstrap_indices(rng: np.random.Generator, n: int,
                       cdf: Optional[np.ndarray]) -> np.ndarray:
    u = rng.random(n)
    if cdf is None:
        return np.minimum((u * n).astype(np.intp), n - 1)
    return np.minimum(np.searchsorted(cdf, u, side="right"), n - 1)


def _fit_tree(features, targets, mtry, min_leaf, forced_feature, cdf, stream, count_dtype):
    rng = np.random.default_rng(stream)
    n = targets.shape[0]
    indices = _bootstrap_indices(rng, n, cdf)
    tree = _grow_tree(features[indices], targets[indices], mtry, min_leaf, forced_feature, rng)
    counts = np.bincount(indices, minlength=n).astype(count_dtype)
    return tree, counts


def _bootstrap_cdf(case_weights: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if case_weights is None:
        return None
    weights = np.asarray(case_weights, dtype=np.float64)
    # equal weights: identical to the unweighted bootstrap
    if np.all(weights == weights[0]):
        return None
    cdf = np.cumsum(weights) / weights.sum()
    cdf[-1] = 1.0
    return cdf


def fit_forest(features, targets, params: ForestParams, stream: Stream,
               mode: str = REGRESSION, n_jobs: int = 1) -> ForestModel:
    """
    Fit a forest.

    Args:
        features: n×p covariate matrix
        targets: n targets (in [0, 1] for probability mode)
        params: forest parameters
        stream: seed stream; each tree consumes its own pre-derived child stream
        mode: "regression" or "probability"
        n_jobs: joblib worker count for the trees

    Returns:
        ForestModel
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if features.ndim != 2 or targets.ndim != 1 or features.shape[0] != targets.shape[0]:
        raise InvalidInput(f"Shape mismatch: features {features.shape}, targets {targets.shape}")
    n, p = features.shape
    if p < 1:
        raise InvalidInput("At least one feature is required")
    if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
        raise InvalidInput("Non-finite value in forest training data")
    if mode not in (REGRESSION, PROBABILITY):
        raise InvalidInput(f"Unknown forest mode: {mode}")
    if mode == PROBABILITY and (np.any(targets < 0) or np.any(targets > 1)):
        raise InvalidInput("Probability mode requires targets in [0, 1]")
    if n < 2 * params.min_leaf:
        raise InsufficientData(f"{n} rows < 2*min_leaf = {2 * params.min_leaf}")
    mtry = params.validate(n, p)

    cdf = _bootstrap_cdf(params.case_weights)
    count_dtype = np.min_scalar_type(n)
    tree_streams = substreams(stream, params.n_trees)

    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(f"Fitting {params.n_trees} trees on {n}x{p} ({mode}, mtry={mtry}, "
                     f"min_leaf={params.min_leaf}, forced={params.forced_feature}, "
                     f"weighted={cdf is not None})")

    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fit_tree)(features, targets, mtry, params.min_leaf, params.forced_feature,
                           cdf, tree_stream, count_dtype)
        for tree_stream in tree_streams
    )
    trees = tuple(tree for tree, _ in results)
    inbag = np.vstack([counts for _, counts in results])
    return ForestModel(trees=trees,
                       inbag=inbag,
                       training_range=(float(targets.min()), float(targets.max())),
                       n_features=p,
                       training_features=features)


class RandomForestLearner:
    """Base-learner adapter: forest fitting behind the fit / predict / predict_oob contract."""

    def __init__(self, params: Optional[ForestParams] = None, n_jobs: int = 1):
        self.params = params or ForestParams()
        self.n_jobs = n_jobs

    @property
    def min_leaf(self) -> int:
        return self.params.min_leaf

    def fit(self, features, targets, *, role: str, stream: Stream, mode: str = REGRESSION,
            forced_feature: Optional[int] = None,
            case_weights: Optional[np.ndarray] = None) -> ForestModel:
        params = self.params.with_overrides(forced_feature=forced_feature,
                                            case_weights=case_weights)
        try:
            return fit_forest(features, targets, params, stream, mode=mode, n_jobs=self.n_jobs)
        except InsufficientData as e:
            raise InsufficientData(f"{role}: {e}", role=role) from e
