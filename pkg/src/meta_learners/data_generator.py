"""
Synthetic data generating processes (designs 1-6).

Covariates are uniform on [0, 1] with a random correlation structure, the control response is
the Friedman function, the propensity a scaled Beta(2, 4) density of a sine index, and the
designs differ in the CATE function and the treated share.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import special, stats

from .exceptions import GenerationStalled, InsufficientData, InvalidInput
from .meta_learner import ObservedDataset
from .seeding import Stream, generator, substreams

logger = logging.getLogger(__name__)

MAX_REDRAWS = 100
BETA_2_4 = stats.beta(2, 4)


@dataclass(frozen=True)
class SimulationDesign:
    design_id: int
    alpha: float
    cate_kind: str
    p_tau: int
    p: int = 100
    p_mu: int = 5
    p_e: int = 4
    noise_sd: float = 1.0
    min_treated_share: Optional[float] = None
    name: str = ""


DESIGNS: Dict[int, SimulationDesign] = {
    1: SimulationDesign(1, 1 / 4, "zero", 0, name="balanced treatment, zero CATE"),
    # τ = 1 - μ₀(x) inherits the support of μ₀
    2: SimulationDesign(2, 1 / 4, "disjoint", 5, name="balanced treatment, disjoint responses"),
    3: SimulationDesign(3, 1 / 12, "const1", 0, min_treated_share=0.15,
                        name="highly unbalanced treatment, constant CATE"),
    4: SimulationDesign(4, 1 / 8, "indicator", 1, name="unbalanced treatment, indicator CATE"),
    5: SimulationDesign(5, 1 / 8, "linear", 2, name="unbalanced treatment, linear CATE"),
    6: SimulationDesign(6, 1 / 8, "sigmoid", 3, name="unbalanced treatment, nonlinear CATE"),
}

MAIN_DESIGN = 6


def get_design(design) -> SimulationDesign:
    if isinstance(design, SimulationDesign):
        return design
    try:
        return DESIGNS[int(design)]
    except (KeyError, ValueError, TypeError):
        raise InvalidInput(f"Unknown design id: {design}")


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    data: ObservedDataset
    tau_true: np.ndarray
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None
    e_true: Optional[np.ndarray] = None
    redraws: int = 0

    @property
    def X(self):
        return self.data.X

    @property
    def W(self):
        return self.data.W

    @property
    def Y(self):
        return self.data.Y

    @property
    def n(self):
        return self.data.n

    def subset(self, rows) -> "SimulatedDataset":
        pick = lambda a: None if a is None else a[rows]
        return SimulatedDataset(self.data.subset(rows), self.tau_true[rows], pick(self.y0),
                                pick(self.y1), pick(self.e_true), self.redraws)


############################################################
# Covariates
############################################################
def random_correlation_matrix(p: int, stream: Stream) -> np.ndarray:
    """
    Random correlation matrix, uniform over the space of p×p correlation matrices
    (extended onion construction with η = 1).
    """
    if p < 1:
        raise InvalidInput(f"p must be positive (got {p})")
    if p == 1:
        return np.ones((1, 1))
    rng = generator(stream)
    beta = 1.0 + (p - 2) / 2.0
    r12 = 2.0 * rng.beta(beta, beta) - 1.0
    corr = np.array([[1.0, r12], [r12, 1.0]])
    for k in range(2, p):
        beta -= 0.5
        y = rng.beta(k / 2.0, beta)
        u = rng.standard_normal(k)
        u /= np.linalg.norm(u)
        w = np.sqrt(y) * u
        z = np.linalg.cholesky(corr) @ w
        grown = np.empty((k + 1, k + 1))
        grown[:k, :k] = corr
        grown[:k, k] = z
        grown[k, :k] = z
        grown[k, k] = 1.0
        corr = grown
    return corr


def _nearest_correlation(matrix: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    eigenvalues, eigenvectors = np.linalg.eigh((matrix + matrix.T) / 2)
    clipped = (eigenvectors * np.maximum(eigenvalues, floor)) @ eigenvectors.T
    scale = np.sqrt(np.diag(clipped))
    result = clipped / np.outer(scale, scale)
    np.fill_diagonal(result, 1.0)
    return result


def draw_covariates(n: int, p: int, corr: np.ndarray, stream: Stream) -> np.ndarray:
    """
    Correlated U(0,1) covariates through a Gaussian copula.

    The latent normal correlation 2·sin(π·r/6) makes the Pearson correlation of the uniform
    margins equal to r.
    """
    corr = np.asarray(corr, dtype=np.float64)
    if corr.shape != (p, p):
        raise InvalidInput(f"Correlation matrix has shape {corr.shape}, expected ({p}, {p})")
    latent = 2.0 * np.sin(np.pi * corr / 6.0)
    try:
        chol = np.linalg.cholesky(latent)
    except np.linalg.LinAlgError:
        logger.info("Latent correlation matrix is not positive definite, projecting to nearest PD")
        chol = np.linalg.cholesky(_nearest_correlation(latent))
    z = generator(stream).standard_normal((n, p)) @ chol.T
    return special.ndtr(z)


############################################################
# Response, propensity and CATE functions
############################################################
def mu0_friedman(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (np.sin(np.pi * x[..., 0] * x[..., 1]) + 2.0 * (x[..., 2] - 0.5) ** 2
            + x[..., 3] + 0.5 * x[..., 4])


def propensity(x, alpha: float) -> np.ndarray:
    """e(x) = α(1 + β₂,₄(sin(π x₁x₂x₃x₄)))"""
    x = np.asarray(x, dtype=np.float64)
    u = np.sin(np.pi * x[..., 0] * x[..., 1] * x[..., 2] * x[..., 3])
    return alpha * (1.0 + BETA_2_4.pdf(u))


def _sigmoid_cate(x, p_tau):
    total = sum(special.expit(12.0 * (x[..., j] - 0.5)) - 0.5 for j in range(p_tau))
    return 1.0 + (4.0 / p_tau) * total


_CATE_FUNCTIONS = {
    "zero": lambda x, d: np.zeros(x.shape[:-1]),
    "disjoint": lambda x, d: 1.0 - mu0_friedman(x),
    "const1": lambda x, d: np.ones(x.shape[:-1]),
    "indicator": lambda x, d: 1.0 + (x[..., 0] > 0.5).astype(np.float64),
    "linear": lambda x, d: 1.0 + 0.5 * x[..., 0] + 0.5 * x[..., 1],
    "sigmoid": lambda x, d: _sigmoid_cate(x, d.p_tau),
}


def cate_true(design, x) -> np.ndarray:
    design = get_design(design)
    if design.cate_kind not in _CATE_FUNCTIONS:
        raise InvalidInput(f"Unknown CATE kind: {design.cate_kind}")
    return _CATE_FUNCTIONS[design.cate_kind](np.asarray(x, dtype=np.float64), design)


############################################################
# Datasets
############################################################
def _draw_once(design: SimulationDesign, n: int, stream: Stream,
               corr: Optional[np.ndarray]) -> SimulatedDataset:
    corr_stream, covariate_stream, outcome_stream = substreams(stream, 3)
    if corr is None:
        corr = random_correlation_matrix(design.p, corr_stream)
    X = draw_covariates(n, design.p, corr, covariate_stream)
    rng = generator(outcome_stream)
    mu0 = mu0_friedman(X)
    tau = cate_true(design, X)
    mu1 = mu0 + tau
    y0 = mu0 + design.noise_sd * rng.standard_normal(n)
    y1 = mu1 + design.noise_sd * rng.standard_normal(n)
    e = propensity(X, design.alpha)
    W = (rng.random(n) < e).astype(np.float64)
    Y = W * y1 + (1.0 - W) * y0
    return SimulatedDataset(ObservedDataset(X, W, Y), tau, y0, y1, e)


def generate_dataset(design, n: int, stream: Stream,
                     corr: Optional[np.ndarray] = None) -> SimulatedDataset:
    """
    Draw one sample of size n from a design.

    A fresh random correlation matrix is drawn unless ``corr`` is given. Designs with a
    minimum treated share are redrawn as a whole until the share is reached.
    """
    design = get_design(design)
    if n < 1:
        raise InvalidInput(f"n must be positive (got {n})")
    attempts = substreams(stream, MAX_REDRAWS + 1)
    for attempt, attempt_stream in enumerate(attempts):
        dataset = _draw_once(design, n, attempt_stream, corr)
        if design.min_treated_share is None or dataset.data.treated_share >= design.min_treated_share:
            if attempt:
                logger.info(f"Design {design.design_id}: sample redrawn {attempt} times "
                            f"to reach treated share {design.min_treated_share}")
            return SimulatedDataset(dataset.data, dataset.tau_true, dataset.y0, dataset.y1,
                                    dataset.e_true, redraws=attempt)
    raise GenerationStalled(f"Design {design.design_id}: treated share below "
                            f"{design.min_treated_share} after {MAX_REDRAWS} redraws (n={n})")


def split_validation(n_total: int, n_validation: int, stream: Stream) -> Tuple[np.ndarray, np.ndarray]:
    """Return (remaining rows, validation rows), both sorted."""
    if n_validation > n_total:
        raise InsufficientData(f"Validation size {n_validation} exceeds {n_total} rows")
    permutation = generator(stream).permutation(n_total)
    return np.sort(permutation[n_validation:]), np.sort(permutation[:n_validation])


def sample_training(dataset: SimulatedDataset, n_train: int, holdout_validation_n: int,
                    stream: Stream, validation_stream: Optional[Stream] = None
                    ) -> Tuple[SimulatedDataset, SimulatedDataset]:
    """
    Draw a training set without replacement from the rows outside the validation set.

    The validation rows depend only on ``validation_stream`` (defaults to ``stream``) so that an
    experiment can keep one validation set while redrawing training sets per replication.
    """
    if n_train < 1 or holdout_validation_n < 0:
        raise InvalidInput("Sample sizes must be positive")
    if n_train + holdout_validation_n > dataset.n:
        raise InsufficientData(f"{n_train} training + {holdout_validation_n} validation rows "
                               f"exceed the {dataset.n} available")
    remaining, validation_rows = split_validation(
        dataset.n, holdout_validation_n, stream if validation_stream is None else validation_stream)
    training_rows = np.sort(generator(stream).choice(remaining, size=n_train, replace=False))
    return dataset.subset(training_rows), dataset.subset(validation_rows)


def describe_dataset(dataset: SimulatedDataset) -> dict:
    """Descriptive summary of a simulated or semi-synthetic sample."""
    X = dataset.X
    summary = {
        "n": dataset.n,
        "p": X.shape[1],
        "treated_share": dataset.data.treated_share,
        "y_mean": float(dataset.Y.mean()),
        "y_sd": float(dataset.Y.std()),
        "tau_mean": float(dataset.tau_true.mean()),
        "tau_sd": float(dataset.tau_true.std()),
        "tau_min": float(dataset.tau_true.min()),
        "tau_max": float(dataset.tau_true.max()),
    }
    if dataset.e_true is not None:
        summary.update(e_mean=float(dataset.e_true.mean()),
                       e_min=float(dataset.e_true.min()),
                       e_max=float(dataset.e_true.max()))
    if X.shape[1] > 1 and dataset.n > 1:
        corr = np.corrcoef(X, rowvar=False)
        off_diagonal = corr[~np.eye(X.shape[1], dtype=bool)]
        off_diagonal = off_diagonal[np.isfinite(off_diagonal)]
        if off_diagonal.size:
            summary.update(corr_abs_mean=float(np.abs(off_diagonal).mean()),
                           corr_min=float(off_diagonal.min()),
                           corr_max=float(off_diagonal.max()))
    return summary
