"""CSV I/O for logs, traces and ranking files (pandas)."""
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import pandas as pd
from pydantic import BaseModel

from utils.file_utils import load_structured, write_text

TRACE_COLUMNS = ["step", "arch", "score", "incumbent_score"]


def _normalize_key(key: str) -> str:
    """Strip BOM, spaces and underscores, lowercase."""
    return key.replace("\ufeff", "").replace(" ", "").replace("_", "").lower()


def find_column(df: pd.DataFrame, *candidates: str) -> Optional[str]:
    """First column whose normalized name matches one of `candidates`."""
    normalized = {_normalize_key(str(c)): c for c in df.columns}
    for name in candidates:
        col = normalized.get(_normalize_key(name))
        if col is not None:
            return col
    return None


def records_frame(records: Iterable[BaseModel | dict[str, Any]], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    rows = [r.model_dump() if isinstance(r, BaseModel) else dict(r) for r in records]
    return pd.DataFrame(rows, columns=list(columns) if columns else None)


def write_csv(path: str | Path, df: pd.DataFrame) -> str:
    return write_text(path, df.to_csv(index=False, lineterminator="\n"))


def write_records(path: str | Path, records: Iterable[BaseModel | dict[str, Any]], columns: Optional[Sequence[str]] = None) -> str:
    return write_csv(path, records_frame(records, columns))


def read_csv(path: str | Path, text_columns: Sequence[str] = ("arch", "id", "best")) -> pd.DataFrame:
    """Arch-string columns are read as text so leading zeros survive."""
    return pd.read_csv(path, dtype={c: str for c in text_columns}, keep_default_na=False)


def read_trace(path: str | Path) -> pd.DataFrame:
    df = read_csv(path)
    missing = [c for c in TRACE_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: not a trace file, missing columns {missing}")
    return df[TRACE_COLUMNS]


def read_ranking(path: str | Path) -> dict[str, float]:
    """id → score from a CSV (id/arch + score/mean_acc columns) or a JSON/YAML mapping."""
    p = Path(path)
    if p.suffix.lower() != ".csv":
        data = load_structured(p)
        return {str(k): float(v) for k, v in data.items()}
    df = read_csv(p)
    id_col = find_column(df, "id", "arch", "arch_string")
    score_col = find_column(df, "score", "mean_acc", "acc", "full_eval_acc")
    if id_col is None or score_col is None:
        raise ValueError(f"{p}: ranking CSV needs an id (or arch) column and a score column")
    if df[id_col].duplicated().any():
        raise ValueError(f"{p}: duplicate ids in ranking file")
    return {str(i): float(s) for i, s in zip(df[id_col], df[score_col])}
