import logging
import json
import math
import os
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Optional

import numpy as np

from .exceptions import InvalidInput

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ForestParams:
    """1 回の fit に使うフォレストのパラメータ"""
    n_trees: int = 1000
    mtry: Optional[int] = None          # None: ceil(sqrt(p))
    min_leaf: int = 5
    forced_feature: Optional[int] = None
    case_weights: Optional[np.ndarray] = None

    def with_overrides(self, **kwargs):
        return replace(self, **kwargs)

    def resolve_mtry(self, p: int) -> int:
        return self.mtry if self.mtry is not None else int(math.ceil(math.sqrt(p)))

    def validate(self, n: int, p: int) -> int:
        """Check the invariants against an n×p training matrix and return the effective mtry."""
        if self.n_trees < 1:
            raise InvalidInput(f"n_trees must be >= 1 (got {self.n_trees})")
        if self.min_leaf < 1:
            raise InvalidInput(f"min_leaf must be >= 1 (got {self.min_leaf})")
        mtry = self.resolve_mtry(p)
        if not 1 <= mtry <= p:
            raise InvalidInput(f"mtry must lie in [1, {p}] (got {mtry})")
        if self.forced_feature is not None and not 0 <= self.forced_feature < p:
            raise InvalidInput(f"forced_feature {self.forced_feature} outside [0, {p})")
        if self.case_weights is not None:
            weights = np.asarray(self.case_weights, dtype=np.float64)
            if weights.shape != (n,):
                raise InvalidInput(f"case_weights has shape {weights.shape}, expected ({n},)")
            if not np.all(np.isfinite(weights)) or np.any(weights < 0) or not np.any(weights > 0):
                raise InvalidInput("case_weights must be finite, nonnegative and not all zero")
        return mtry


# Random Forest 設定
class ForestConfig:
    def __init__(self):
        self.n_trees = 1000     # 木の本数
        self.mtry = None        # 分割候補の特徴量数 (None: ceil(sqrt(p)))
        self.min_leaf = 5       # 最小葉サイズ
        self.n_jobs = 1         # 木の学習の並列数
        self.config_file = "config/forest-config.json"

    def to_dict(self):
        """設定を辞書形式で返す"""
        return {
            "n_trees": self.n_trees,
            "mtry": self.mtry,
            "min_leaf": self.min_leaf,
            "n_jobs": self.n_jobs
        }

    def to_params(self, **overrides) -> ForestParams:
        params = ForestParams(n_trees=self.n_trees, mtry=self.mtry, min_leaf=self.min_leaf)
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return params.with_overrides(**overrides) if overrides else params

    def load_config(self):
        """設定ファイルから設定を読み込む"""
        try:
            if os.path.exists(self.config_file):
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    config_data = json.load(f)

                self.update_from_dict(config_data)
                logger.info(f"Forest configuration loaded from {self.config_file}")
                return True
            else:
                logger.info(f"Forest config file {self.config_file} not found, using defaults")
                self.save_config()
                return False

        except Exception as e:
            logger.error(f"Failed to load forest configuration: {e}")
            return False

    def update_from_dict(self, config_dict):
        """辞書から設定を更新"""
        for key, value in config_dict.items():
            if not hasattr(self, key):
                continue
            # 型チェックと範囲チェック
            if key in ["n_trees", "min_leaf", "n_jobs"]:
                setattr(self, key, max(1, int(value)))
            elif key == "mtry":
                self.mtry = None if value is None else max(1, int(value))

    def save_config(self):
        """設定をファイルに保存する"""
        try:
            config_data = self.to_dict()
            config_data['last_updated'] = datetime.now().isoformat()

            os.makedirs(os.path.dirname(self.config_file) or ".", exist_ok=True)
            with open(self.config_file, 'w', encoding='utf-8') as f:
                json.dump(config_data, f, ensure_ascii=False, indent=2)

            logger.info(f"Forest configuration saved to {self.config_file}")
            return True

        except Exception as e:
            logger.error(f"Failed to save forest configuration: {e}")
            return False
