"""
Semi-synthetic data: the 2018 ACIC education dataset augmented with uniform noise covariates.

The file supplies Y, W and ten covariates; the CATE is known in closed form from the generator
of the data challenge. 90 (by default) correlated U(0,1) covariates are appended with the same
construction as the synthetic designs.
"""

import logging
from typing import Mapping, Optional

import numpy as np
import pandas as pd

from .data_generator import SimulatedDataset, draw_covariates, random_correlation_matrix
from .exceptions import InvalidInput, ParseError, SchemaError
from .experiment_config import SEMISYNTH_ROLES, load_column_map
from .meta_learner import ObservedDataset
from .seeding import Stream, substreams

logger = logging.getLogger(__name__)

COVARIATE_ROLES = SEMISYNTH_ROLES[2:]
C1_SHIFTED_CODES = (1, 13, 14)


def semisynthetic_cate(x1, x2, c1) -> np.ndarray:
    """τ(x) = 0.228 + 0.05·1(x1 < 0.07) − 0.05·1(x2 < −0.69) − 0.08·1(c1 ∈ {1, 13, 14})"""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    c1 = np.asarray(c1, dtype=np.float64)
    return (0.228
            + 0.05 * (x1 < 0.07)
            - 0.05 * (x2 < -0.69)
            - 0.08 * np.isin(c1, C1_SHIFTED_CODES))


def _numeric_frame(frame: pd.DataFrame, colmap: Mapping[str, str]) -> pd.DataFrame:
    columns = {}
    for role in SEMISYNTH_ROLES:
        header = colmap.get(role, role)
        if header not in frame.columns:
            raise SchemaError(header)
        raw = frame[header]
        numeric = pd.to_numeric(raw.str.strip(), errors="coerce")
        bad = numeric.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(row, header, raw.iloc[row])
        columns[role] = numeric.astype(np.float64)
    return pd.DataFrame(columns)


def load_semisynthetic(path: str, stream: Stream, colmap: Optional[Mapping[str, str]] = None,
                       augment_p: int = 90, corr: Optional[np.ndarray] = None) -> SimulatedDataset:
    """
    ACIC ファイルを読み込み、ノイズ共変量を追加する

    Args:
        path: comma-separated file with a header row
        stream: seed stream of the augmentation (correlation matrix and covariates)
        colmap: role -> header name, identity by default
        augment_p: number of appended U(0,1) covariates
        corr: correlation matrix of the appended covariates (drawn from ``stream`` if None)

    Returns:
        SimulatedDataset with tau_true populated; potential outcomes and propensities are unknown

    Raises:
        SchemaError: a mapped column is missing
        ParseError: a cell is empty or non-numeric (row is the 0-based data row)
    """
    if augment_p < 0:
        raise InvalidInput(f"augment_p must be non-negative (got {augment_p})")
    colmap = dict(colmap) if colmap is not None else load_column_map()
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    frame.columns = [str(c).strip() for c in frame.columns]
    data = _numeric_frame(frame, colmap)

    n = len(data)
    X = data[list(COVARIATE_ROLES)].to_numpy()
    if augment_p:
        corr_stream, covariate_stream = substreams(stream, 2)
        if corr is None:
            corr = random_correlation_matrix(augment_p, corr_stream)
        X = np.hstack([X, draw_covariates(n, augment_p, corr, covariate_stream)])

    tau = semisynthetic_cate(data["X1"], data["X2"], data["C1"])
    dataset = SimulatedDataset(ObservedDataset(X, data["W"].to_numpy(), data["Y"].to_numpy()), tau)
    logger.info(f"Loaded {n} rows from {path} ({X.shape[1]} covariates, "
                f"treated share {dataset.data.treated_share:.3f})")
    return dataset
