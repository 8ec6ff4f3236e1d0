import json
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Iterator, List, Optional, Tuple, Union

import pandas as pd

from .exceptions import InvalidInput, ResultWriteError
from .performance_metrics import MetricsSummary

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["rmse_mean", "abs_bias_mean", "bias_mean", "sd_mean", "skew_mean", "kurt_mean",
                  "jb_mean", "jb_reject_share", "corr", "varr", "se_rmse"]
RESULT_COLUMNS = (["design", "learner", "procedure", "n_train", "replications"]
                  + METRIC_COLUMNS + ["runtime_s", "warnings"])
PLOT_COLUMNS = ["design", "learner", "procedure", "n_train", "measure", "value"]

SIGNIFICANT_DIGITS = 6


@dataclass
class ResultRow:
    """1 セル (design, learner, procedure, n_train) の結果"""
    design: Union[int, str]
    learner: str
    procedure: str
    n_train: int
    replications: int = 0
    summary: Optional[MetricsSummary] = None
    runtime_s: Optional[float] = None
    redraws: int = 0
    oob_fallbacks: int = 0
    failed_reps: List[int] = field(default_factory=list)
    aborted: Optional[str] = None
    fingerprints: Dict[int, str] = field(default_factory=dict, repr=False)

    @property
    def key(self) -> Tuple:
        return (str(self.design), self.learner, self.procedure, int(self.n_train))

    @property
    def warnings(self) -> str:
        text = (f"redraws={self.redraws};oob_fallbacks={self.oob_fallbacks};"
                f"failed_reps={','.join(str(r) for r in self.failed_reps)}")
        if self.aborted:
            text += f";aborted:{self.aborted}"
        return text

    def metric(self, name: str) -> Optional[float]:
        if self.summary is None:
            return None
        return getattr(self.summary, name)

    def to_record(self) -> dict:
        record = {"design": self.design, "learner": self.learner, "procedure": self.procedure,
                  "n_train": int(self.n_train), "replications": int(self.replications)}
        for name in METRIC_COLUMNS:
            record[name] = self.metric(name)
        record["runtime_s"] = self.runtime_s
        record["warnings"] = self.warnings
        return record


class ResultTable:
    """キー (design, learner, procedure, n_train) ごとに 1 行"""

    def __init__(self, rows: Optional[List[ResultRow]] = None):
        self._rows: Dict[Tuple, ResultRow] = {}
        for row in rows or []:
            self.add(row)

    def add(self, row: ResultRow) -> None:
        if row.key in self._rows:
            raise InvalidInput(f"Duplicate result row {row.key}")
        self._rows[row.key] = row

    def get(self, design, learner: str, procedure: str, n_train: int) -> Optional[ResultRow]:
        return self._rows.get((str(design), learner, procedure, int(n_train)))

    def rows(self) -> List[ResultRow]:
        return list(self._rows.values())

    def aborted(self) -> List[ResultRow]:
        return [row for row in self._rows.values() if row.aborted]

    def __iter__(self) -> Iterator[ResultRow]:
        return iter(self._rows.values())

    def __len__(self) -> int:
        return len(self._rows)

    def without_runtime(self) -> "ResultTable":
        return ResultTable([replace(row, runtime_s=None) for row in self])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_record() for row in self], columns=RESULT_COLUMNS)


############################################################
# シリアライズ
############################################################
def _is_na(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


def _format_number(value) -> str:
    if _is_na(value):
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{float(value):.{SIGNIFICANT_DIGITS}g}"


def _json_number(value):
    if _is_na(value):
        return None
    if isinstance(value, int):
        return value
    return float(f"{float(value):.{SIGNIFICANT_DIGITS}g}")


def _ensure_parent(path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def write_results(table: ResultTable, path: str, fmt: str = "csv") -> None:
    """
    結果表を CSV または JSON で書き出す

    Floats carry 6 significant digits; not-applicable cells are empty in CSV and null in JSON.
    """
    fmt = fmt.lower()
    if fmt not in ("csv", "json"):
        raise InvalidInput(f"Unknown output format: {fmt}")
    records = [row.to_record() for row in table]
    try:
        _ensure_parent(path)
        if fmt == "csv":
            formatted = [{column: (_format_number(record[column])
                                   if column in METRIC_COLUMNS or column == "runtime_s"
                                   else str(record[column]))
                          for column in RESULT_COLUMNS} for record in records]
            frame = pd.DataFrame(formatted, columns=RESULT_COLUMNS)
            frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
        else:
            payload = [{column: (_json_number(record[column])
                                 if column in METRIC_COLUMNS or column == "runtime_s"
                                 else record[column])
                        for column in RESULT_COLUMNS} for record in records]
            with open(path, "w", encoding="utf-8") as f:
                json.dump(payload, f, ensure_ascii=False, indent=2)
                f.write("\n")
    except OSError as e:
        raise ResultWriteError(path, e) from e
    logger.info(f"Wrote {len(records)} result rows to {path}")


def _parse_warnings(text: str) -> dict:
    parsed = {"redraws": 0, "oob_fallbacks": 0, "failed_reps": [], "aborted": None}
    for part in (text or "").split(";"):
        if part.startswith("aborted:"):
            parsed["aborted"] = part[len("aborted:"):]
        elif "=" in part:
            name, value = part.split("=", 1)
            if name == "failed_reps":
                parsed[name] = [int(v) for v in value.split(",") if v]
            elif name in parsed:
                parsed[name] = int(value)
    return parsed


def _summary_from_record(record: dict) -> Optional[MetricsSummary]:
    values = {name: (None if _is_na(record.get(name)) else float(record[name]))
              for name in METRIC_COLUMNS}
    if values["rmse_mean"] is None:
        return None
    names = {f.name for f in fields(MetricsSummary)}
    required = [name for name in METRIC_COLUMNS if name not in ("corr", "varr")]
    if any(values[name] is None for name in required):
        return None
    summary_values = {k: v for k, v in values.items() if k in names}
    return MetricsSummary(**summary_values, R=int(record["replications"]), m=0)


def read_results(path: str) -> ResultTable:
    """write_results の出力を読み戻す (m と縮退数は保存されない)"""
    if path.lower().endswith(".json"):
        with open(path, "r", encoding="utf-8") as f:
            records = json.load(f)
    else:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        records = []
        for raw in frame.to_dict(orient="records"):
            record = dict(raw)
            for column in METRIC_COLUMNS + ["runtime_s"]:
                record[column] = float(raw[column]) if raw[column] != "" else None
            records.append(record)

    table = ResultTable()
    for record in records:
        design = record["design"]
        design = int(design) if str(design).lstrip("-").isdigit() else design
        parsed = _parse_warnings(record.get("warnings", ""))
        table.add(ResultRow(design=design, learner=record["learner"],
                            procedure=record["procedure"], n_train=int(record["n_train"]),
                            replications=int(record["replications"]),
                            summary=_summary_from_record(record),
                            runtime_s=None if _is_na(record.get("runtime_s")) else float(record["runtime_s"]),
                            **parsed))
    return table


def plot_data(table: ResultTable) -> pd.DataFrame:
    """summary-vs-n_train の縦持ちデータ"""
    records = []
    for row in sorted(table, key=lambda r: (str(r.design), r.learner, r.procedure, r.n_train)):
        if row.summary is None:
            continue
        for measure in METRIC_COLUMNS:
            value = row.metric(measure)
            if not _is_na(value):
                records.append({"design": row.design, "learner": row.learner,
                                "procedure": row.procedure, "n_train": row.n_train,
                                "measure": measure, "value": value})
    return pd.DataFrame(records, columns=PLOT_COLUMNS)


def emit_plot_data(table: ResultTable, path: str) -> int:
    frame = plot_data(table)
    frame["value"] = frame["value"].map(_format_number)
    try:
        _ensure_parent(path)
        frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    except OSError as e:
        raise ResultWriteError(path, e) from e
    logger.info(f"Wrote {len(frame)} plot data points to {path}")
    return len(frame)
