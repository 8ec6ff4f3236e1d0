from typing import Dict, List, Union

import numpy as np

from .exceptions import InvalidInput


class PredictionPanelBuffer:
    """
    レプリケーション別の予測を格納する事前確保 R×m バッファ
    各レプリケーションは自分のスロットにだけ書き込むため、完了順に依存しない。
    """

    def __init__(self, replications: int, m: int, dtype=np.float64):
        """
        Args:
            replications: レプリケーション数 R
            m: 検証データの件数
            dtype: numpy 配列のデータ型（デフォルト: np.float64）
        """
        if replications <= 0 or m < 0:
            raise InvalidInput("replications must be positive and m non-negative")

        self.replications = replications
        self.m = m
        self.dtype = dtype
        self.buffer = np.zeros((replications, m), dtype=dtype)
        self.filled = np.zeros(replications, dtype=bool)
        self.failures: Dict[int, str] = {}

    def _check_slot(self, r: int):
        if not 0 <= r < self.replications:
            raise InvalidInput(f"Replication index {r} outside 0..{self.replications - 1}")

    def put(self, r: int, row: Union[List, np.ndarray]) -> None:
        """
        レプリケーション r の予測を書き込む

        Args:
            r: レプリケーション番号
            row: 長さ m の予測
        """
        self._check_slot(r)
        row = np.asarray(row, dtype=self.dtype)
        if row.shape != (self.m,):
            raise InvalidInput(f"Expected {self.m} predictions, got shape {row.shape}")
        self.buffer[r] = row
        self.filled[r] = True
        self.failures.pop(r, None)

    def fail(self, r: int, cause: str) -> None:
        """レプリケーション r を失敗として記録"""
        self._check_slot(r)
        self.filled[r] = False
        self.failures[r] = cause

    def completed(self) -> np.ndarray:
        """成功したレプリケーションの行をレプリケーション順に返す"""
        return self.buffer[self.filled].copy()

    def failed_replications(self) -> List[int]:
        return sorted(self.failures)

    def size(self) -> int:
        return int(self.filled.sum())
