"""
S / SW / T / X / DR / R meta-learners.

Every learner is a composition of base-learner fits (``role`` names the function being
learned: mu_xw, mu1, mu0, mu, e, tau, tau1, tau0) plus a pseudo-outcome construction.
The row sets of a ``ProcedureContext`` decide which rows train which component; nuisance
predictions for rows a component was trained on are out-of-bag, all others are plain
full-forest predictions.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, NamedTuple, Optional, Tuple

import numpy as np

from .exceptions import (DegenerateResidualTreatment, EmptyTreatmentArm, ExtremePropensity,
                         InvalidInput)
from .random_forest import PROBABILITY, REGRESSION, RandomForestLearner
from .sample_splitting import ProcedureContext, crossfit_combine
from .seeding import substreams

logger = logging.getLogger(__name__)

LEARNER_IDS = ("S", "SW", "T", "X", "DR", "R")
NUISANCE_FREE = frozenset({"S", "SW", "T"})

DENOMINATOR_EPS = 1e-12

# component role -> sub-stream slot
_STREAM_SLOTS = {"mu_xw": 0, "mu1": 1, "mu0": 2, "mu": 3, "e": 4, "tau": 5, "tau1": 6, "tau0": 7}


@dataclass(frozen=True, eq=False)
class ObservedDataset:
    """観測データ (X, W, Y)"""
    X: np.ndarray
    W: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        W = np.asarray(self.W, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.ndim != 2 or W.shape != (X.shape[0],) or Y.shape != (X.shape[0],):
            raise InvalidInput(f"Shape mismatch: X {X.shape}, W {W.shape}, Y {Y.shape}")
        if not np.all((W == 0) | (W == 1)):
            raise InvalidInput("Treatment indicators must be 0 or 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InvalidInput("Non-finite value in observed data")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def treated_share(self) -> float:
        return float(self.W.mean()) if self.n else float("nan")

    def subset(self, rows) -> "ObservedDataset":
        return ObservedDataset(self.X[rows], self.W[rows], self.Y[rows])

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for array in (self.X, self.W, self.Y):
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()


class NuisanceSource(NamedTuple):
    kind: str                   # "oob" or "out-of-sample"
    training_rows: np.ndarray


@dataclass(frozen=True, eq=False)
class NuisanceSet:
    """Nuisance predictions on the second-stage rows, with the rows each column was trained on."""
    rows: np.ndarray
    mu1_hat: Optional[np.ndarray] = None
    mu0_hat: Optional[np.ndarray] = None
    mu_hat: Optional[np.ndarray] = None
    e_hat: Optional[np.ndarray] = None
    provenance: Mapping[str, NuisanceSource] = field(default_factory=dict)

    def overlaps_training(self) -> bool:
        """True when any nuisance column was trained on one of ``rows``."""
        return any(np.intersect1d(source.training_rows, self.rows).size
                   for source in self.provenance.values())


@dataclass(frozen=True)
class LearnerParams:
    base_learner: Any = field(default_factory=RandomForestLearner)
    propensity_clip: Optional[float] = None
    denominator_eps: float = DENOMINATOR_EPS

    @property
    def min_leaf(self) -> int:
        return getattr(self.base_learner, "min_leaf", 1)


@dataclass(frozen=True, eq=False)
class CateModel:
    learner_id: str
    procedure: str
    n_features: int
    components: Mapping[str, Any] = field(default_factory=dict)
    nuisances: Optional[NuisanceSet] = None
    rotations: Tuple["CateModel", ...] = ()
    oob_fallbacks: int = 0

    def predict(self, features) -> np.ndarray:
        """τ̂(x) を予測する"""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise InvalidInput(f"Expected an m×{self.n_features} matrix, got shape {features.shape}")
        if self.rotations:
            return crossfit_combine(np.vstack([model.predict(features) for model in self.rotations]))
        return _COMBINERS[self.learner_id](self.components, features)


############################################################
# Pseudo outcomes
############################################################
class ImputedEffects(NamedTuple):
    treated: np.ndarray     # ξ¹ on the treated rows
    control: np.ndarray     # ξ⁰ on the control rows


def impute_x_effects(data: ObservedDataset, mu1_hat, mu0_hat) -> ImputedEffects:
    mu1_hat = np.asarray(mu1_hat, dtype=np.float64)
    mu0_hat = np.asarray(mu0_hat, dtype=np.float64)
    if mu1_hat.shape != (data.n,) or mu0_hat.shape != (data.n,):
        raise InvalidInput(f"Nuisance predictions must have shape ({data.n},)")
    treated = data.W == 1
    return ImputedEffects(data.Y[treated] - mu0_hat[treated],
                          mu1_hat[~treated] - data.Y[~treated])


def _propensity(e_hat, clip: Optional[float]) -> np.ndarray:
    e_hat = np.asarray(e_hat, dtype=np.float64)
    if clip is not None:
        return np.clip(e_hat, clip, 1.0 - clip)
    return e_hat


def compute_dr_pseudo_outcome(Y, W, mu1_hat, mu0_hat, e_hat,
                              clip: Optional[float] = None) -> np.ndarray:
    """
    Doubly robust score
        ψ = W(Y-μ̂₁)/ê - (1-W)(Y-μ̂₀)/(1-ê) + μ̂₁ - μ̂₀
    """
    Y, W = np.asarray(Y, dtype=np.float64), np.asarray(W, dtype=np.float64)
    mu1_hat = np.asarray(mu1_hat, dtype=np.float64)
    mu0_hat = np.asarray(mu0_hat, dtype=np.float64)
    e_hat = _propensity(e_hat, clip)
    extreme = (e_hat <= 0) | (e_hat >= 1)
    if np.any(extreme):
        raise ExtremePropensity(f"{int(extreme.sum())} propensity estimates outside (0, 1)")
    return (W * (Y - mu1_hat) / e_hat
            - (1 - W) * (Y - mu0_hat) / (1 - e_hat)
            + mu1_hat - mu0_hat)


def compute_r_modified_outcome(Y, W, mu_hat, e_hat, denominator_eps: float = DENOMINATOR_EPS,
                               clip: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Modified outcome φ = (Y-μ̂)/(W-ê) and weights (W-ê)².

    Returns:
        (phi, weights)
    """
    Y, W = np.asarray(Y, dtype=np.float64), np.asarray(W, dtype=np.float64)
    residual_treatment = W - _propensity(e_hat, clip)
    degenerate = np.abs(residual_treatment) <= denominator_eps
    if np.any(degenerate):
        raise DegenerateResidualTreatment(
            f"{int(degenerate.sum())} rows with |W - e_hat| <= {denominator_eps}")
    phi = (Y - np.asarray(mu_hat, dtype=np.float64)) / residual_treatment
    return phi, residual_treatment ** 2


############################################################
# Component fitting helpers
############################################################
def _fit_component(params: LearnerParams, ctx: ProcedureContext, role: str, features, targets,
                   mode: str = REGRESSION, forced_feature: Optional[int] = None,
                   case_weights: Optional[np.ndarray] = None):
    stream = substreams(ctx.stream, len(_STREAM_SLOTS))[_STREAM_SLOTS[role]]
    return params.base_learner.fit(features, targets, role=role, stream=stream, mode=mode,
                                   forced_feature=forced_feature, case_weights=case_weights)


def _arm_rows(data: ObservedDataset, rows: np.ndarray, arm: int, role: str) -> np.ndarray:
    arm_rows = rows[data.W[rows] == arm]
    if arm_rows.size == 0:
        group = "treated" if arm == 1 else "control"
        raise EmptyTreatmentArm(f"{role}: no {group} rows available", role=role)
    return arm_rows


def _predict_rows(model, trained_rows: np.ndarray, target_rows: np.ndarray,
                  features: np.ndarray) -> Tuple[np.ndarray, NuisanceSource, int]:
    """
    Predict a fitted component on ``target_rows``.

    Rows the component was trained on get out-of-bag predictions, every other row the
    full-model prediction.
    """
    in_training = np.isin(target_rows, trained_rows)
    predictions = np.empty(target_rows.shape[0], dtype=np.float64)
    fallbacks = 0
    if np.any(~in_training):
        predictions[~in_training] = model.predict(features[target_rows[~in_training]])
    if np.any(in_training):
        oob = model.predict_oob()
        positions = np.searchsorted(trained_rows, target_rows[in_training])
        predictions[in_training] = oob.values[positions]
        fallbacks = int(np.count_nonzero(~oob.valid[positions]))
    kind = "oob" if np.any(in_training) else "out-of-sample"
    return predictions, NuisanceSource(kind, trained_rows), fallbacks


def _with_treatment(features: np.ndarray, treatment) -> np.ndarray:
    column = np.broadcast_to(np.asarray(treatment, dtype=np.float64), (features.shape[0],))
    return np.column_stack([features, column])


############################################################
# Prediction rules
############################################################
def _predict_s(components, features):
    model = components["mu_xw"]
    return model.predict(_with_treatment(features, 1.0)) - model.predict(_with_treatment(features, 0.0))


def _predict_t(components, features):
    return components["mu1"].predict(features) - components["mu0"].predict(features)


def _predict_x(components, features):
    e_hat = components["e"].predict(features)
    return e_hat * components["tau0"].predict(features) + (1 - e_hat) * components["tau1"].predict(features)


def _predict_second_stage(components, features):
    return components["tau"].predict(features)


_COMBINERS: Dict[str, Callable] = {
    "S": _predict_s,
    "SW": _predict_s,
    "T": _predict_t,
    "X": _predict_x,
    "DR": _predict_second_stage,
    "R": _predict_second_stage,
}


############################################################
# Learners
############################################################
def _fit_single_model(data: ObservedDataset, params: LearnerParams, ctx: ProcedureContext,
                      learner_id: str, forced: bool) -> CateModel:
    rows = ctx.cate_rows
    features = _with_treatment(data.X[rows], data.W[rows])
    model = _fit_component(params, ctx, "mu_xw", features, data.Y[rows],
                           forced_feature=data.p if forced else None)
    return CateModel(learner_id, ctx.procedure, data.p, {"mu_xw": model})


def fit_s(data: ObservedDataset, params: LearnerParams, ctx: ProcedureContext) -> CateModel:
    """S-learner: one model μ̂(x, w) on X ⊕ W, τ̂ = μ̂(x,1) - μ̂(x,0)"""
    return _fit_single_model(data, params, ctx, "S", forced=False)


def fit_sw(data: ObservedDataset, params: LearnerParams, ctx: ProcedureContext) -> CateModel:
    """S-learner with the treatment column forced into every split candidate set"""
    return _fit_single_model(data, params, ctx, "SW", forced=True)


def fit_t(data: ObservedDataset, params: LearnerParams, ctx: ProcedureContext) -> CateModel:
    """T-learner: separate response models per treatment arm"""
    rows = ctx.cate_rows
    treated = _arm_rows(data, rows, 1, "mu1")
    control = _arm_rows(data, rows, 0, "mu0")
    mu1 = _fit_component(params, ctx, "mu1", data.X[treated], data.Y[treated])
    mu0 = _fit_component(params, ctx, "mu0", data.X[control], data.Y[control])
    return CateModel("T", ctx.procedure, data.p, {"mu1": mu1, "mu0": mu0})


def _fit_arm_responses(data, params, ctx):
    treated = _arm_rows(data, ctx.mu_rows, 1, "mu1")
    control = _arm_rows(data, ctx.mu_rows, 0, "mu0")
    mu1 = _fit_component(params, ctx, "mu1", data.X[treated], data.Y[treated])
    mu0 = _fit_component(params, ctx, "mu0", data.X[control], data.Y[control])
    return (mu1, treated), (mu0, control)


def _fit_propensity(data, params, ctx):
    rows = ctx.e_rows
    model = _fit_component(params, ctx, "e", data.X[rows], data.W[rows], mode=PROBABILITY)
    return model, rows


def _nuisance_set(data, ctx, fitted: Mapping[str, Tuple[Any, np.ndarray]]):
    columns, provenance, fallbacks = {}, {}, 0
    for name, (model, trained_rows) in fitted.items():
        predictions, source, n_fallback = _predict_rows(model, trained_rows, ctx.cate_rows, data.X)
        columns[f"{name}_hat"] = predictions
        provenance[name] = source
        fallbacks += n_fallback
    return NuisanceSet(ctx.cate_rows, provenance=provenance, **columns), fallbacks


def fit_x(data: ObservedDataset, params: LearnerParams, ctx: ProcedureContext) -> CateModel:
    """
    X-learner

    μ̂₁, μ̂₀ on the response rows; ê on the propensity rows; imputed effects on the second-stage
    rows train τ̂(x,1) (treated) and τ̂(x,0) (control). Prediction is
    ê(x)·τ̂(x,0) + (1-ê(x))·τ̂(x,1); extreme ê is admissible here.
    """
    mu1, mu0 = _fit_arm_responses(data, params, ctx)
    e_model = _fit_propensity(data, params, ctx)
    nuisances, fallbacks = _nuisance_set(data, ctx, {"mu1": mu1, "mu0": mu0, "e": e_model})

    cate_data = data.subset(ctx.cate_rows)
    imputed = impute_x_effects(cate_data, nuisances.mu1_hat, nuisances.mu0_hat)
    treated = _arm_rows(data, ctx.cate_rows, 1, "tau1")
    control = _arm_rows(data, ctx.cate_rows, 0, "tau0")
    tau1 = _fit_component(params, ctx, "tau1", data.X[treated], imputed.treated)
    tau0 = _fit_component(params, ctx, "tau0", data.X[control], imputed.control)

    components = {"mu1": mu1[0], "mu0": mu0[0], "e": e_model[0], "tau1": tau1, "tau0": tau0}
    return CateModel("X", ctx.procedure, data.p, components, nuisances, oob_fallbacks=fallbacks)


def fit_dr(data: ObservedDataset, params: LearnerParams, ctx: ProcedureContext) -> CateModel:
    """DR-learner: regress the doubly robust score on X"""
    mu1, mu0 = _fit_arm_responses(data, params, ctx)
    e_model = _fit_propensity(data, params, ctx)
    nuisances, fallbacks = _nuisance_set(data, ctx, {"mu1": mu1, "mu0": mu0, "e": e_model})

    rows = ctx.cate_rows
    psi = compute_dr_pseudo_outcome(data.Y[rows], data.W[rows], nuisances.mu1_hat,
                                    nuisances.mu0_hat, nuisances.e_hat, clip=params.propensity_clip)
    tau = _fit_component(params, ctx, "tau", data.X[rows], psi)

    components = {"mu1": mu1[0], "mu0": mu0[0], "e": e_model[0], "tau": tau}
    return CateModel("DR", ctx.procedure, data.p, components, nuisances, oob_fallbacks=fallbacks)


def fit_r(data: ObservedDataset, params: LearnerParams, ctx: ProcedureContext) -> CateModel:
    """R-learner: weighted regression of the modified outcome with weights (W-ê)²"""
    mu_rows = ctx.mu_rows
    mu = _fit_component(params, ctx, "mu", data.X[mu_rows], data.Y[mu_rows])
    e_model = _fit_propensity(data, params, ctx)
    nuisances, fallbacks = _nuisance_set(data, ctx, {"mu": (mu, mu_rows), "e": e_model})

    rows = ctx.cate_rows
    phi, weights = compute_r_modified_outcome(data.Y[rows], data.W[rows], nuisances.mu_hat,
                                              nuisances.e_hat, params.denominator_eps,
                                              clip=params.propensity_clip)
    tau = _fit_component(params, ctx, "tau", data.X[rows], phi, case_weights=weights)

    components = {"mu": mu, "e": e_model[0], "tau": tau}
    return CateModel("R", ctx.procedure, data.p, components, nuisances, oob_fallbacks=fallbacks)


LEARNERS: Dict[str, Callable[[ObservedDataset, LearnerParams, ProcedureContext], CateModel]] = {
    "S": fit_s,
    "SW": fit_sw,
    "T": fit_t,
    "X": fit_x,
    "DR": fit_dr,
    "R": fit_r,
}


def parse_learner_id(value: str) -> str:
    learner_id = str(value).upper().replace("-", "")
    if learner_id not in LEARNERS:
        raise InvalidInput(f"Unknown learner: {value} (choose from {', '.join(LEARNER_IDS)})")
    return learner_id
