import json
import logging
import re
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .performance_metrics import PredictionPanel

logger = logging.getLogger(__name__)

_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]+")


def panel_key(design, learner: str, procedure: str, n_train: int) -> str:
    return _UNSAFE.sub("_", f"design{design}_{learner}_{procedure}_n{n_train}")


class PanelStore:
    """予測パネル (truth, preds) を .npz + .meta で保存する"""

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)

    def save_panel(self, panel: PredictionPanel, key: str, **metadata) -> Optional[str]:
        """パネルを NPZ 形式で保存"""
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            filepath = self.output_dir / f"{_UNSAFE.sub('_', key)}.npz"
            np.savez_compressed(filepath, truth=panel.truth, preds=panel.preds)

            # メタデータファイル
            meta = {
                "key": key,
                "replications": panel.R,
                "validation_size": panel.m,
                "timestamp": datetime.now().isoformat(),
            }
            meta.update(metadata)
            with open(filepath.with_suffix('.meta'), 'w', encoding='utf-8') as f:
                json.dump(meta, f, ensure_ascii=False, indent=2, default=str)

            logger.info(f"Prediction panel saved: {filepath} ({panel.R}×{panel.m})")
            return str(filepath)

        except Exception as e:
            logger.error(f"Failed to save prediction panel {key}: {e}")
            return None

    def load_metadata(self, key: str) -> dict:
        meta_path = self.output_dir / f"{key}.meta"
        if not meta_path.exists():
            return {}
        with open(meta_path, 'r', encoding='utf-8') as f:
            return json.load(f)

    @classmethod
    def load_panels(cls, directory: str) -> List[Tuple[str, PredictionPanel]]:
        """ディレクトリ内の全パネルをキー順に読み込む (単一の .npz ファイルも可)"""
        path = Path(directory)
        files = [path] if path.is_file() else sorted(path.glob("*.npz"))
        panels = []
        for file_path in files:
            with np.load(file_path) as archive:
                panels.append((file_path.stem, PredictionPanel(archive["truth"], archive["preds"])))
        logger.info(f"Loaded {len(panels)} prediction panels from {directory}")
        return panels
