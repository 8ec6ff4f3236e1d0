import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT))

from meta_learners.meta_learner import LearnerParams, ObservedDataset  # noqa: E402
from meta_learners.random_forest import OobPrediction  # noqa: E402


############################################################
# Stub base learners
############################################################
class FunctionModel:
    """Fitted stub: predictions come from a fixed function of the features."""

    def __init__(self, function, training_features):
        self.function = function
        self.training_features = np.asarray(training_features, dtype=np.float64)

    def predict(self, features):
        return np.asarray(self.function(np.asarray(features, dtype=np.float64)), dtype=np.float64)

    def predict_oob(self):
        values = self.predict(self.training_features)
        return OobPrediction(values, np.ones(values.shape[0], dtype=bool))


class OracleLearner:
    """Returns the true function of every role instead of learning it."""

    min_leaf = 1

    def __init__(self, functions):
        self.functions = functions

    def fit(self, features, targets, *, role, stream, mode="regression", forced_feature=None,
            case_weights=None):
        return FunctionModel(self.functions[role], features)


class MeanLearner:
    """Deterministic stub: the (weighted) mean of the targets everywhere."""

    min_leaf = 1

    def __init__(self):
        self.calls = []

    def fit(self, features, targets, *, role, stream, mode="regression", forced_feature=None,
            case_weights=None):
        targets = np.asarray(targets, dtype=np.float64)
        weights = None if case_weights is None else np.asarray(case_weights, dtype=np.float64)
        value = float(np.average(targets, weights=weights))
        self.calls.append({"role": role, "features": np.array(features), "targets": targets,
                           "forced_feature": forced_feature, "case_weights": weights})
        return FunctionModel(lambda x, v=value: np.full(x.shape[0], v), features)


class RowIdLearner(MeanLearner):
    """
    MeanLearner whose propensity fits return 0.5, so every pseudo-outcome is defined.
    Tests put row ids in the last covariate column and read them back from the recorded features.
    """

    def fit(self, features, targets, *, role, stream, mode="regression", forced_feature=None,
            case_weights=None):
        model = super().fit(features, targets, role=role, stream=stream, mode=mode,
                            forced_feature=forced_feature, case_weights=case_weights)
        if role == "e":
            return FunctionModel(lambda x: np.full(x.shape[0], 0.5), features)
        return model


@pytest.fixture
def oracle_learner():
    return OracleLearner


@pytest.fixture
def mean_learner():
    return MeanLearner()


@pytest.fixture
def row_id_learner():
    return RowIdLearner()


############################################################
# Data
############################################################
def make_observed(n=120, p=3, seed=0, treated_share=0.5):
    rng = np.random.default_rng(seed)
    X = rng.random((n, p))
    W = (rng.random(n) < treated_share).astype(np.float64)
    W[:2] = [0.0, 1.0]
    Y = X[:, 0] + W * (1.0 + X[:, 1]) + 0.1 * rng.standard_normal(n)
    return ObservedDataset(X, W, Y)


@pytest.fixture
def observed():
    return make_observed()


@pytest.fixture
def stub_params(mean_learner):
    return LearnerParams(base_learner=mean_learner)


class OracleNuisanceLearner:
    """True functions for the nuisance roles; every other role is fitted by ``learner``."""

    def __init__(self, functions, learner):
        self.functions = functions
        self.learner = learner

    @property
    def min_leaf(self):
        return self.learner.min_leaf

    def fit(self, features, targets, *, role, stream, mode="regression", forced_feature=None,
            case_weights=None):
        if role in self.functions:
            return FunctionModel(self.functions[role], features)
        return self.learner.fit(features, targets, role=role, stream=stream, mode=mode,
                                forced_feature=forced_feature, case_weights=case_weights)
