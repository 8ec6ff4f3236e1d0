"""
Desk-scale statistical checks of the full experiment. Each one runs forests with 200 trees over
tens to hundreds of replications, so they are deselected by default: run with ``pytest -m slow``.
"""

import os

import numpy as np
import pytest

from conftest import OracleNuisanceLearner
from meta_learners.data_generator import (cate_true, generate_dataset, mu0_friedman, propensity,
                                          random_correlation_matrix)
from meta_learners.estimation_procedure import run_procedure
from meta_learners.experiment_config import ExperimentConfig
from meta_learners.forest_config import ForestParams
from meta_learners.meta_learner import LearnerParams, ObservedDataset, compute_r_modified_outcome
from meta_learners.monte_carlo_experiment import run_experiment
from meta_learners.random_forest import RandomForestLearner
from meta_learners.sample_splitting import ProcedureSpec
from meta_learners.semisynthetic import load_semisynthetic

pytestmark = pytest.mark.slow

WORKERS = int(os.getenv("METALEARNERS_WORKERS", "4"))


def _desk(**overrides):
    values = dict(n_trees=200, n_validation=1000, master_seed=2024, record_runtime=False,
                  n_jobs=WORKERS)
    values.update(overrides)
    return ExperimentConfig(**values)


def test_s_learner_shrinks_zero_effect():
    table = run_experiment(_desk(design_id=1, learners=("S",), procedures=("full",),
                                 n_train=(500,), replications=(200,)))
    assert table.get(1, "S", "full", 500).summary.rmse_mean <= 0.05


def test_sample_splitting_variance_penalty():
    table = run_experiment(_desk(design_id=1, learners=("DR",), n_train=(500,), replications=(100,)))
    sd = {p: table.get(1, "DR", p, 500).summary.sd_mean for p in ("full", "split", "crossfit")}
    assert sd["split"] >= 1.4 * sd["crossfit"]
    assert abs(sd["crossfit"] - sd["full"]) <= 0.25 * sd["full"]


def test_s_learner_has_smallest_variance():
    table = run_experiment(_desk(design_id=6, n_train=(500,), replications=(100,)))
    sd = {row.key: row.summary.sd_mean for row in table if row.summary is not None}
    s_full = table.get(6, "S", "full", 500).key
    assert all(sd[s_full] < value for key, value in sd.items() if key[1] not in ("S",))


def test_forced_treatment_split_matches_t_learner():
    table = run_experiment(_desk(design_id=6, learners=("SW", "T"), procedures=("full",),
                                 n_train=(2000,), replications=(50,)))
    sw = table.get(6, "SW", "full", 2000).summary.rmse_mean
    t = table.get(6, "T", "full", 2000).summary.rmse_mean
    assert abs(sw - t) / t <= 0.05


def test_cross_fitted_x_learner_wins_under_imbalance():
    table = run_experiment(_desk(design_id=3, n_train=(2000,), replications=(50,)))
    rmse = {row.key[1:3]: row.summary.rmse_mean for row in table if row.summary is not None}
    assert min(rmse, key=rmse.get) == ("X", "crossfit")


def test_r_learner_recovers_linear_effect():
    corr = random_correlation_matrix(100, 11)
    training = generate_dataset(5, 4000, 1, corr=corr)
    X, W = training.X, training.W
    e, tau = propensity(X, 1 / 8), cate_true(5, X)
    Y = mu0_friedman(X) + e * tau + (W - e) * tau

    phi, weights = compute_r_modified_outcome(Y, W, mu0_friedman(X) + e * tau, e)
    np.testing.assert_allclose(phi, tau, rtol=0, atol=1e-10)
    np.testing.assert_allclose(weights, (W - e) ** 2)

    # τ depends on x1 and x2 only, so every covariate is offered at each split
    forest = RandomForestLearner(ForestParams(n_trees=200, mtry=100), n_jobs=WORKERS)
    nuisances = {"mu": lambda x: mu0_friedman(x) + propensity(x, 1 / 8) * cate_true(5, x),
                 "e": lambda x: propensity(x, 1 / 8)}
    params = LearnerParams(base_learner=OracleNuisanceLearner(nuisances, forest))
    model = run_procedure("R", ObservedDataset(X, W, Y), ProcedureSpec("full"), params, stream=3)

    validation = generate_dataset(5, 1000, 2, corr=corr)
    rmse = np.sqrt(np.mean((model.predict(validation.X) - validation.tau_true) ** 2))
    assert rmse <= 0.05


@pytest.mark.skipif(not os.getenv("ACIC_DATA"), reason="set ACIC_DATA to the ACIC 2018 csv file")
def test_acic_file():
    dataset = load_semisynthetic(os.environ["ACIC_DATA"], 0,
                                 colmap={"W": os.getenv("ACIC_TREATMENT", "Z")})
    assert dataset.n == 10391
    assert abs(dataset.data.treated_share - 0.25) <= 0.05
    assert dataset.X.shape[1] == 100
