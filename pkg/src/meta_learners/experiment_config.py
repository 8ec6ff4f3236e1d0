import json
import logging
import os
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Dict, List, Optional, Tuple

from .exceptions import InvalidInput
from .meta_learner import LEARNER_IDS, parse_learner_id
from .sample_splitting import Procedure

logger = logging.getLogger(__name__)

PROCEDURE_IDS = tuple(p.value for p in Procedure)
OUTPUT_FORMATS = ("csv", "json")

# ACIC 2018 の列ロール (Y, W と 10 個の共変量)
SEMISYNTH_ROLES = ("Y", "W", "S3", "C1", "C2", "C3", "XC", "X1", "X2", "X3", "X4", "X5")


############################################################
# 実験プロファイル
############################################################
DEFAULT_PROFILES = {
    "desk": {
        "n_trees": 200,
        "n_train": [500, 2000],
        "replications": [100, 50],
        "n_validation": 1000,
    },
    "paper": {
        "n_trees": 1000,
        "n_train": [500, 2000, 8000, 32000],
        "replications": [2000, 1000, 500, 250],
        "n_validation": 10000,
    },
    "semisynth-desk": {
        "n_trees": 200,
        "n_train": [500, 2000],
        "replications": [100, 50],
        "n_validation": 1000,
    },
    "semisynth-paper": {
        "n_trees": 1000,
        "n_train": [500, 2000, 8000],
        "replications": [2000, 1000, 500],
        "n_validation": 1000,
    },
}


class ExperimentProfiles:
    """名前付きの実験規模プロファイル (config/experiment-profiles.json)"""

    def __init__(self):
        self.profiles = json.loads(json.dumps(DEFAULT_PROFILES))
        self.config_file = "config/experiment-profiles.json"

    def names(self) -> List[str]:
        return sorted(self.profiles)

    def get(self, name: str) -> dict:
        if name not in self.profiles:
            raise InvalidInput(f"Unknown profile '{name}' (available: {', '.join(self.names())})")
        return dict(self.profiles[name])

    def to_dict(self):
        return {"profiles": self.profiles}

    def load_config(self):
        """設定ファイルからプロファイルを読み込む"""
        try:
            if os.path.exists(self.config_file):
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    config_data = json.load(f)

                self.update_from_dict(config_data.get("profiles", {}))
                logger.info(f"Experiment profiles loaded from {self.config_file}")
                return True
            else:
                logger.info(f"Profile file {self.config_file} not found, using defaults")
                self.save_config()
                return False

        except Exception as e:
            logger.error(f"Failed to load experiment profiles: {e}")
            return False

    def update_from_dict(self, profiles):
        for name, values in profiles.items():
            if not isinstance(values, dict):
                continue
            profile = self.profiles.setdefault(name, {})
            for key, value in values.items():
                if key in ["n_trees", "n_validation"]:
                    profile[key] = max(1, int(value))
                elif key in ["n_train", "replications"]:
                    profile[key] = [max(1, int(v)) for v in value]

    def save_config(self):
        try:
            config_data = self.to_dict()
            config_data['last_updated'] = datetime.now().isoformat()

            os.makedirs(os.path.dirname(self.config_file) or ".", exist_ok=True)
            with open(self.config_file, 'w', encoding='utf-8') as f:
                json.dump(config_data, f, ensure_ascii=False, indent=2)

            logger.info(f"Experiment profiles saved to {self.config_file}")
            return True

        except Exception as e:
            logger.error(f"Failed to save experiment profiles: {e}")
            return False


############################################################
# 列マッピング
############################################################
class ColumnMap:
    """準合成データの列ロール -> ヘッダ名"""

    def __init__(self):
        self.columns = {role: role for role in SEMISYNTH_ROLES}
        self.config_file = "config/semisynth-colmap.json"

    def to_dict(self):
        return dict(self.columns)

    def load_config(self):
        try:
            if os.path.exists(self.config_file):
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    config_data = json.load(f)

                self.update_from_dict(config_data)
                logger.info(f"Column map loaded from {self.config_file}")
                return True
            else:
                logger.info(f"Column map {self.config_file} not found, using identity mapping")
                return False

        except Exception as e:
            logger.error(f"Failed to load column map: {e}")
            return False

    def update_from_dict(self, config_dict):
        for role, header in config_dict.items():
            if role in self.columns and isinstance(header, str) and header:
                self.columns[role] = header


def load_column_map(path: Optional[str] = None) -> Dict[str, str]:
    colmap = ColumnMap()
    if path:
        colmap.config_file = path
    colmap.load_config()
    return colmap.to_dict()


############################################################
# 実験設定
############################################################
@dataclass(frozen=True)
class ExperimentConfig:
    """
    One Monte Carlo experiment: a design (or semi-synthetic file), the learner / procedure grid
    and the sample size schedule. ``n_train`` and ``replications`` are paired element-wise.
    """
    design_id: Optional[int] = 6
    data_path: Optional[str] = None
    learners: Tuple[str, ...] = LEARNER_IDS
    procedures: Tuple[str, ...] = PROCEDURE_IDS
    n_train: Tuple[int, ...] = (500, 2000, 8000, 32000)
    replications: Tuple[int, ...] = (2000, 1000, 500, 250)
    n_validation: int = 10000
    n_trees: int = 1000
    mtry: Optional[int] = None
    min_leaf: int = 5
    master_seed: int = 0
    augment_p: int = 90
    colmap_path: Optional[str] = None
    propensity_clip: Optional[float] = None
    fresh_correlation: bool = True
    record_runtime: bool = True
    panel_dir: Optional[str] = None
    n_jobs: int = 1
    forest_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "learners", tuple(parse_learner_id(l) for l in self.learners))
        object.__setattr__(self, "procedures",
                           tuple(Procedure.parse(p).value for p in self.procedures))
        object.__setattr__(self, "n_train", tuple(int(n) for n in self.n_train))
        object.__setattr__(self, "replications", tuple(int(r) for r in self.replications))

    @property
    def semisynthetic(self) -> bool:
        return self.data_path is not None

    @property
    def schedule(self) -> List[Tuple[int, int]]:
        return list(zip(self.n_train, self.replications))

    def validate(self) -> "ExperimentConfig":
        if len(self.n_train) != len(self.replications):
            raise InvalidInput(f"n_train ({len(self.n_train)} entries) and replications "
                               f"({len(self.replications)} entries) must have equal length")
        if not self.n_train:
            raise InvalidInput("n_train must not be empty")
        counts = {"n_train": min(self.n_train), "replications": min(self.replications),
                  "n_validation": self.n_validation, "n_trees": self.n_trees,
                  "min_leaf": self.min_leaf, "n_jobs": self.n_jobs, "forest_jobs": self.forest_jobs}
        for name, value in counts.items():
            if value < 1:
                raise InvalidInput(f"{name} must be positive (got {value})")
        if self.mtry is not None and self.mtry < 1:
            raise InvalidInput(f"mtry must be positive (got {self.mtry})")
        if not self.learners or not self.procedures:
            raise InvalidInput("At least one learner and one procedure are required")
        if not self.semisynthetic and self.design_id is None:
            raise InvalidInput("Either a design id or a semi-synthetic data path is required")
        if self.augment_p < 0:
            raise InvalidInput(f"augment_p must be non-negative (got {self.augment_p})")
        return self

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides) if overrides else self

    @classmethod
    def from_profile(cls, name: str, profiles: Optional[ExperimentProfiles] = None,
                     **overrides) -> "ExperimentConfig":
        """Build a config from a named profile; non-None keyword overrides win."""
        profiles = profiles or ExperimentProfiles()
        profile = profiles.get(name)
        base = cls(n_trees=profile["n_trees"],
                   n_train=tuple(profile["n_train"]),
                   replications=tuple(profile["replications"]),
                   n_validation=profile["n_validation"])
        return base.with_overrides(**overrides)
