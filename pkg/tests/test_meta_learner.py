import numpy as np
import pytest

from conftest import MeanLearner, OracleLearner, OracleNuisanceLearner, make_observed
from meta_learners.data_generator import cate_true, generate_dataset, mu0_friedman, propensity
from meta_learners.exceptions import (DegenerateResidualTreatment, EmptyTreatmentArm,
                                      ExtremePropensity, InvalidInput)
from meta_learners.forest_config import ForestParams
from meta_learners.meta_learner import (LEARNERS, LearnerParams, ObservedDataset,
                                        compute_dr_pseudo_outcome, compute_r_modified_outcome,
                                        fit_s, fit_sw, fit_t, fit_x, impute_x_effects,
                                        parse_learner_id)
from meta_learners.random_forest import RandomForestLearner
from meta_learners.sample_splitting import ProcedureContext


def _noise_free(design=6, n=300, seed=0):
    dataset = generate_dataset(design, n, seed)
    X, W = dataset.X, dataset.W
    mu0 = mu0_friedman(X)
    tau = cate_true(design, X)
    return ObservedDataset(X, W, mu0 + W * tau), mu0, tau


def _full(data, seed=0):
    return ProcedureContext.full_sample(data.n, seed)


############################################################
# Pseudo outcomes
############################################################
def test_impute_x_effects_hand_values():
    data = ObservedDataset(np.zeros((2, 1)), np.array([1.0, 0.0]), np.array([0.4, 0.3]))
    imputed = impute_x_effects(data, mu1_hat=np.array([9.0, 1.0]), mu0_hat=np.array([0.4, 9.0]))
    assert imputed.treated.tolist() == [0.0]
    assert imputed.control == pytest.approx([0.7])


def test_dr_pseudo_outcome_hand_value():
    psi = compute_dr_pseudo_outcome([2.0], [1.0], [1.5], [0.5], [0.5])
    assert psi == pytest.approx([2.0])


def test_dr_pseudo_outcome_without_residuals():
    mu1, mu0 = np.array([1.0, 2.0, 0.5]), np.array([0.2, 0.1, 0.4])
    W = np.array([1.0, 0.0, 1.0])
    Y = np.where(W == 1, mu1, mu0)
    psi = compute_dr_pseudo_outcome(Y, W, mu1, mu0, np.array([0.3, 0.6, 0.9]))
    assert psi == pytest.approx(mu1 - mu0)


def test_dr_extreme_propensity():
    with pytest.raises(ExtremePropensity):
        compute_dr_pseudo_outcome([1.0], [1.0], [1.0], [0.0], [0.0])
    psi = compute_dr_pseudo_outcome([1.0], [1.0], [1.0], [0.0], [0.0], clip=0.01)
    assert np.isfinite(psi).all()


def test_r_modified_outcome_hand_value():
    phi, weights = compute_r_modified_outcome([1.5], [1.0], [1.0], [0.5])
    assert phi == pytest.approx([1.0])
    assert weights == pytest.approx([0.25])


def test_r_degenerate_residual_treatment():
    with pytest.raises(DegenerateResidualTreatment):
        compute_r_modified_outcome([1.0], [1.0], [0.0], [1.0])


def test_robinson_identity():
    rng = np.random.default_rng(3)
    X = rng.random((500, 5))
    e = propensity(X, 1 / 8)
    W = (rng.random(500) < e).astype(float)
    mu = mu0_friedman(X)
    tau = 1 + 0.5 * X[:, 0] + 0.5 * X[:, 1]
    Y = mu + (W - e) * tau
    phi, weights = compute_r_modified_outcome(Y, W, mu, e)
    np.testing.assert_allclose(phi, tau, rtol=0, atol=1e-10)
    np.testing.assert_allclose(weights, (W - e) ** 2)


def test_dr_score_unbiased_with_oracle_nuisances():
    dataset = generate_dataset(3, 10000, 2024)
    mu0 = mu0_friedman(dataset.X)
    psi = compute_dr_pseudo_outcome(dataset.Y, dataset.W, mu0 + 1.0, mu0, dataset.e_true)
    standard_error = psi.std() / np.sqrt(psi.size)
    assert abs(psi.mean() - 1.0) < 3 * standard_error


############################################################
# Learners with stub base learners
############################################################
def test_s_learner_oracle_identity():
    data, mu0, tau = _noise_free()
    oracle = OracleLearner({"mu_xw": lambda x: mu0_friedman(x[:, :-1]) + x[:, -1] * cate_true(6, x[:, :-1])})
    model = fit_s(data, LearnerParams(base_learner=oracle), _full(data))
    np.testing.assert_allclose(model.predict(data.X), tau, atol=1e-12)


def test_s_learner_appends_treatment_column():
    data = make_observed()
    learner = MeanLearner()
    fit_s(data, LearnerParams(base_learner=learner), _full(data))
    call = learner.calls[0]
    assert call["features"].shape == (data.n, data.p + 1)
    assert np.array_equal(call["features"][:, -1], data.W)
    assert call["forced_feature"] is None


def test_sw_learner_forces_treatment_column():
    data = make_observed()
    learner = MeanLearner()
    model = fit_sw(data, LearnerParams(base_learner=learner), _full(data))
    assert learner.calls[0]["forced_feature"] == data.p
    # a model that ignores W predicts no effect
    assert np.all(model.predict(data.X) == 0.0)


def test_t_learner_oracle_identity():
    data, mu0, tau = _noise_free()
    oracle = OracleLearner({"mu1": lambda x: mu0_friedman(x) + cate_true(6, x),
                            "mu0": mu0_friedman})
    model = fit_t(data, LearnerParams(base_learner=oracle), _full(data))
    np.testing.assert_allclose(model.predict(data.X), tau, atol=1e-12)


def test_t_learner_empty_arm():
    data = make_observed()
    no_treated = ObservedDataset(data.X, np.zeros(data.n), data.Y)
    with pytest.raises(EmptyTreatmentArm) as excinfo:
        fit_t(no_treated, LearnerParams(base_learner=MeanLearner()), _full(no_treated))
    assert excinfo.value.role == "mu1"


@pytest.mark.parametrize("e_value, expected", [(0.0, 3.0), (1.0, 5.0), (0.25, 0.25 * 5 + 0.75 * 3)])
def test_x_learner_propensity_weighting(e_value, expected):
    data = make_observed()
    oracle = OracleLearner({"mu1": lambda x: np.ones(len(x)), "mu0": lambda x: np.zeros(len(x)),
                            "e": lambda x: np.full(len(x), e_value),
                            "tau1": lambda x: np.full(len(x), 3.0),
                            "tau0": lambda x: np.full(len(x), 5.0)})
    model = fit_x(data, LearnerParams(base_learner=oracle), _full(data))
    np.testing.assert_allclose(model.predict(data.X[:10]), expected)


def test_x_learner_imputes_true_effects_with_oracle():
    data, mu0, tau = _noise_free(design=5)
    learner = MeanLearner()
    truth = {"mu1": lambda x: mu0_friedman(x) + cate_true(5, x), "mu0": mu0_friedman,
             "e": lambda x: propensity(x, 1 / 8)}

    class Recording(OracleLearner):
        def fit(self, features, targets, *, role, **kwargs):
            if role in ("tau1", "tau0"):
                return learner.fit(features, targets, role=role, **kwargs)
            return super().fit(features, targets, role=role, **kwargs)

    fit_x(data, LearnerParams(base_learner=Recording(truth)), _full(data))
    for call in learner.calls:
        np.testing.assert_allclose(call["targets"], cate_true(5, call["features"]), atol=1e-12)


def test_r_learner_passes_weights_to_second_stage():
    data = make_observed()
    nuisances = {"mu": lambda x: np.zeros(len(x)), "e": lambda x: np.full(len(x), 0.4)}
    learner = MeanLearner()
    LEARNERS["R"](data, LearnerParams(base_learner=OracleNuisanceLearner(nuisances, learner)),
                  _full(data))
    np.testing.assert_allclose(learner.calls[0]["case_weights"], (data.W - 0.4) ** 2)


def test_r_learner_recovers_linear_effect_with_oracle_nuisances():
    rng = np.random.default_rng(21)
    X = rng.random((800, 5))
    e, tau = propensity(X, 1 / 8), cate_true(5, X)
    W = (rng.random(800) < e).astype(np.float64)
    mu = mu0_friedman(X) + e * tau
    Y = mu + (W - e) * tau

    nuisances = {"mu": lambda x: mu0_friedman(x) + propensity(x, 1 / 8) * cate_true(5, x),
                 "e": lambda x: propensity(x, 1 / 8)}
    forest = RandomForestLearner(ForestParams(n_trees=40, mtry=5))
    params = LearnerParams(base_learner=OracleNuisanceLearner(nuisances, forest))
    data = ObservedDataset(X, W, Y)
    model = LEARNERS["R"](data, params, _full(data, seed=2))

    # second-stage targets are the true effects
    np.testing.assert_allclose(compute_r_modified_outcome(Y, W, mu, e)[0], tau, atol=1e-10)
    validation = rng.random((300, 5))
    rmse = np.sqrt(np.mean((model.predict(validation) - cate_true(5, validation)) ** 2))
    assert rmse <= 0.1


def test_full_sample_nuisances_are_out_of_bag():
    data = make_observed()
    model = LEARNERS["DR"](data, LearnerParams(base_learner=MeanLearner()), _full(data))
    assert model.nuisances.overlaps_training()
    assert {source.kind for source in model.nuisances.provenance.values()} == {"oob"}


@pytest.mark.parametrize("learner_id", ["S", "SW", "T", "X", "DR", "R"])
def test_learners_with_forest_base_learner(learner_id):
    data = make_observed(n=160)
    params = LearnerParams(base_learner=RandomForestLearner(ForestParams(n_trees=5)),
                           propensity_clip=0.01)
    model = LEARNERS[learner_id](data, params, _full(data, seed=5))
    predictions = model.predict(data.X[:20])
    assert predictions.shape == (20,)
    assert np.all(np.isfinite(predictions))
    again = LEARNERS[learner_id](data, params, _full(data, seed=5)).predict(data.X[:20])
    assert np.array_equal(predictions, again)


def test_predict_checks_feature_count():
    data = make_observed()
    model = fit_s(data, LearnerParams(base_learner=MeanLearner()), _full(data))
    with pytest.raises(InvalidInput):
        model.predict(np.zeros((3, data.p + 1)))


def test_parse_learner_id():
    assert parse_learner_id("dr") == "DR"
    assert parse_learner_id("S-W") == "SW"
    with pytest.raises(InvalidInput):
        parse_learner_id("U")


def test_observed_dataset_validation():
    with pytest.raises(InvalidInput):
        ObservedDataset(np.zeros((3, 2)), np.array([0.0, 2.0, 1.0]), np.zeros(3))
    with pytest.raises(InvalidInput):
        ObservedDataset(np.zeros((3, 2)), np.zeros(2), np.zeros(3))
    first, second = make_observed(seed=1), make_observed(seed=1)
    assert first.fingerprint() == second.fingerprint()
    assert first.fingerprint() != make_observed(seed=2).fingerprint()
