import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from .exceptions import InsufficientData, InvalidInput
from .seeding import Stream, as_stream, generator

logger = logging.getLogger(__name__)

ROLES = ("propensity", "response", "cate")

# component role -> procedure role
COMPONENT_ROLES = {
    "e": "propensity",
    "mu": "response",
    "mu1": "response",
    "mu0": "response",
    "mu_xw": "response",
    "tau": "cate",
    "tau1": "cate",
    "tau0": "cate",
}


class Procedure(Enum):
    FULL_SAMPLE = "full"
    SAMPLE_SPLIT = "split"
    CROSS_FIT = "crossfit"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidInput(f"Unknown procedure: {value}")


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    K: int

    def indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def sizes(self) -> List[int]:
        return np.bincount(self.fold_of, minlength=self.K).tolist()


def assign_folds(n: int, K: int, stream: Stream) -> FoldAssignment:
    """
    Uniformly random partition of n rows into K near-equal folds.
    The remainder goes to the lowest fold indices.
    """
    if K < 1:
        raise InvalidInput(f"K must be positive (got {K})")
    if n < K:
        raise InsufficientData(f"Cannot split {n} rows into {K} folds")
    permutation = generator(stream).permutation(n)
    base, remainder = divmod(n, K)
    fold_of = np.empty(n, dtype=np.intp)
    start = 0
    for k in range(K):
        size = base + (1 if k < remainder else 0)
        fold_of[permutation[start:start + size]] = k
        start += size
    return FoldAssignment(fold_of, K)


def _default_role_map() -> Dict[str, int]:
    return {"propensity": 0, "response": 1, "cate": 2}


@dataclass(frozen=True)
class ProcedureSpec:
    kind: Procedure = Procedure.FULL_SAMPLE
    K: int = 3
    role_map: Dict[str, int] = field(default_factory=_default_role_map)

    def __post_init__(self):
        object.__setattr__(self, "kind", Procedure.parse(self.kind))
        if self.kind is not Procedure.FULL_SAMPLE:
            if sorted(self.role_map) != sorted(ROLES) or sorted(self.role_map.values()) != list(range(self.K)):
                raise InvalidInput(f"role_map must be a bijection roles -> folds, got {self.role_map}")

    def rotations(self) -> List[Dict[str, int]]:
        """Role maps used by the procedure: one for sample splitting, K cyclic shifts for cross-fitting."""
        if self.kind is Procedure.FULL_SAMPLE:
            return []
        if self.kind is Procedure.SAMPLE_SPLIT:
            return [dict(self.role_map)]
        return [{role: (fold + r) % self.K for role, fold in self.role_map.items()}
                for r in range(self.K)]


@dataclass(frozen=True, eq=False)
class ProcedureContext:
    """
    Row sets for one pass of a meta-learner.

    Global row indices (sorted) into the training data: ``e_rows`` train the propensity,
    ``mu_rows`` the response functions and ``cate_rows`` the second stage. Under full-sample
    estimation all three are the whole sample and in-sample nuisance predictions are out-of-bag.
    """
    e_rows: np.ndarray
    mu_rows: np.ndarray
    cate_rows: np.ndarray
    stream: np.random.SeedSequence
    procedure: str = Procedure.FULL_SAMPLE.value
    role_map: Optional[Dict[str, int]] = None

    @classmethod
    def full_sample(cls, n: int, stream: Stream) -> "ProcedureContext":
        rows = np.arange(n)
        return cls(rows, rows, rows, as_stream(stream))

    @classmethod
    def from_folds(cls, folds: FoldAssignment, role_map: Dict[str, int], stream: Stream,
                   procedure: str) -> "ProcedureContext":
        return cls(folds.indices(role_map["propensity"]),
                   folds.indices(role_map["response"]),
                   folds.indices(role_map["cate"]),
                   as_stream(stream), procedure, dict(role_map))

    def fold_of_component(self, component_role: str) -> Optional[int]:
        if self.role_map is None:
            return None
        return self.role_map.get(COMPONENT_ROLES.get(component_role, "cate"))


def crossfit_combine(component_predictions) -> np.ndarray:
    """K×m のローテーション別予測を点ごとに算術平均する"""
    if not isinstance(component_predictions, np.ndarray):
        lengths = {len(row) for row in component_predictions}
        if len(lengths) > 1:
            raise InvalidInput(f"Component predictions differ in length: {sorted(lengths)}")
    predictions = np.asarray(component_predictions, dtype=np.float64)
    if predictions.ndim != 2 or predictions.shape[0] < 1:
        raise InvalidInput(f"Expected a K×m array with K >= 1, got shape {predictions.shape}")
    return predictions.mean(axis=0)
