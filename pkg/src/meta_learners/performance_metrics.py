"""
Across-replication performance measures of CATE predictions.

For each validation observation i the R replication predictions τ̂ʳ(Xᵢ) are compared with the
true τ(Xᵢ): RMSE, mean absolute bias, signed bias, standard deviation, skewness, kurtosis and
the Jarque-Bera statistic. All moments use the population (1/R) divisor, so that
RMSEᵢ² = SDᵢ² + BIASᵢ² holds exactly.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats

from .exceptions import InsufficientReplications, InvalidInput

logger = logging.getLogger(__name__)

# χ²₂ critical values
JB_CRITICAL_5 = 5.991


@dataclass(frozen=True, eq=False)
class PredictionPanel:
    """truth: m 個の真の CATE, preds: R×m の予測"""
    truth: np.ndarray
    preds: np.ndarray

    def __post_init__(self):
        truth = np.asarray(self.truth, dtype=np.float64)
        preds = np.asarray(self.preds, dtype=np.float64)
        if preds.ndim == 1 and truth.size and preds.size % truth.size == 0:
            preds = preds.reshape(-1, truth.size)
        if truth.ndim != 1 or preds.ndim != 2 or preds.shape[1] != truth.shape[0]:
            raise InvalidInput(f"Panel shape mismatch: truth {truth.shape}, preds {preds.shape}")
        if not (np.all(np.isfinite(truth)) and np.all(np.isfinite(preds))):
            raise InvalidInput("Prediction panel contains non-finite values")
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "preds", preds)

    @property
    def R(self) -> int:
        return self.preds.shape[0]

    @property
    def m(self) -> int:
        return self.preds.shape[1]


class PerObservationMetrics(NamedTuple):
    rmse: np.ndarray
    abs_bias: np.ndarray
    bias: np.ndarray
    sd: np.ndarray
    skew: np.ndarray
    kurt: np.ndarray
    jb: np.ndarray
    degenerate: np.ndarray      # zero-variance columns


class JarqueBeraResult(NamedTuple):
    statistic: float
    skew: float
    kurt: float
    p_value: float
    degenerate: bool


def _standardized_moments(samples: np.ndarray):
    """
    Column-wise population skewness and kurtosis of an R×m array.
    Constant columns, and columns whose second moment underflows to 0,
    get skew 0 and kurtosis 3.
    """
    R = samples.shape[0]
    centered = samples - samples.mean(axis=0)
    m2 = (centered ** 2).sum(axis=0) / R
    degenerate = (np.ptp(samples, axis=0) == 0) | (m2 == 0)
    m3 = (centered ** 3).sum(axis=0) / R
    m4 = (centered ** 4).sum(axis=0) / R
    safe_m2 = np.where(degenerate, 1.0, m2)
    skew = np.where(degenerate, 0.0, m3 / safe_m2 ** 1.5)
    kurt = np.where(degenerate, 3.0, m4 / safe_m2 ** 2)
    return np.where(degenerate, 0.0, m2), skew, kurt, degenerate


def _jb_statistic(R: int, skew, kurt):
    return (R / 6.0) * (skew ** 2 + 0.25 * (kurt - 3.0) ** 2)


def jarque_bera(sample) -> JarqueBeraResult:
    """
    Jarque-Bera normality statistic (R/6)(S² + ¼(K−3)²) of one sample.

    A zero-variance sample returns 0 with ``degenerate`` set.
    """
    sample = np.asarray(sample, dtype=np.float64).reshape(-1, 1)
    if sample.shape[0] < 2:
        raise InsufficientReplications(f"Jarque-Bera needs at least 2 values (got {sample.shape[0]})")
    _, skew, kurt, degenerate = _standardized_moments(sample)
    statistic = float(_jb_statistic(sample.shape[0], skew, kurt)[0])
    return JarqueBeraResult(statistic, float(skew[0]), float(kurt[0]),
                            float(stats.chi2.sf(statistic, 2)), bool(degenerate[0]))


def per_obs_metrics(panel: PredictionPanel) -> PerObservationMetrics:
    R = panel.R
    if R < 2:
        raise InsufficientReplications(f"At least 2 replications are required (got {R})")
    errors = panel.truth - panel.preds
    rmse = np.sqrt((errors ** 2).sum(axis=0) / R)
    abs_bias = np.abs(errors).sum(axis=0) / R
    bias = errors.sum(axis=0) / R
    variance, skew, kurt, degenerate = _standardized_moments(panel.preds)
    jb = np.where(degenerate, 0.0, _jb_statistic(R, skew, kurt))
    if degenerate.any() and logger.isEnabledFor(logging.DEBUG):
        logger.debug(f"{int(degenerate.sum())} of {panel.m} observations have constant predictions")
    return PerObservationMetrics(rmse, abs_bias, bias, np.sqrt(variance), skew, kurt, jb, degenerate)


############################################################
# 集計
############################################################
@dataclass(frozen=True)
class MetricsSummary:
    rmse_mean: float
    abs_bias_mean: float
    bias_mean: float
    sd_mean: float
    skew_mean: float
    kurt_mean: float
    jb_mean: float
    jb_reject_share: float
    corr: Optional[float]        # None: not applicable
    varr: Optional[float]
    se_rmse: float
    R: int
    m: int
    degenerate: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _pearson_per_replication(truth: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """Correlation of τ with each replication τ̂ʳ; NaN for constant replications."""
    t = truth - truth.mean()
    p = preds - preds.mean(axis=1, keepdims=True)
    constant = np.ptp(preds, axis=1) == 0
    denominator = np.sqrt((t ** 2).sum() * (p ** 2).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (p @ t) / denominator
    corr[constant] = np.nan
    return corr


def aggregate(rows: PerObservationMetrics, panel: PredictionPanel) -> MetricsSummary:
    """
    Average per-observation metrics over the validation set and add the panel-level measures.

    CORR and VARR average over replications and are not applicable (None) when τ is constant
    on the validation set. SE(RMSE) is the root mean squared deviation of the per-replication
    mean squared errors from the average RMSE.
    """
    if rows.rmse.size == 0:
        raise InvalidInput("No observations to aggregate")
    truth, preds = panel.truth, panel.preds
    rmse_mean = float(rows.rmse.mean())

    corr = varr = None
    if np.ptp(truth) > 0:
        var_truth = truth.var()
        per_rep_corr = _pearson_per_replication(truth, preds)
        if np.any(np.isfinite(per_rep_corr)):
            corr = float(np.nanmean(per_rep_corr))
        varr = float((preds.var(axis=1) / var_truth).mean())

    mse_per_rep = ((truth - preds) ** 2).mean(axis=1)
    se_rmse = float(np.sqrt(((mse_per_rep - rmse_mean) ** 2).mean()))

    return MetricsSummary(
        rmse_mean=rmse_mean,
        abs_bias_mean=float(rows.abs_bias.mean()),
        bias_mean=float(rows.bias.mean()),
        sd_mean=float(rows.sd.mean()),
        skew_mean=float(rows.skew.mean()),
        kurt_mean=float(rows.kurt.mean()),
        jb_mean=float(rows.jb.mean()),
        jb_reject_share=float((rows.jb > JB_CRITICAL_5).mean()),
        corr=corr,
        varr=varr,
        se_rmse=se_rmse,
        R=panel.R,
        m=panel.m,
        degenerate=int(rows.degenerate.sum()),
    )


def summarize(panel: PredictionPanel) -> MetricsSummary:
    return aggregate(per_obs_metrics(panel), panel)


def is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))
