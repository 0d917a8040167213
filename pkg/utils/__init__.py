from .csv_utils import TRACE_COLUMNS, read_ranking, read_trace, write_csv, write_records
from .file_utils import load_structured, write_json, write_model, write_text
from .seeding import derive_seed, query_rng, spawn_seeds, substream

__all__ = [
    "TRACE_COLUMNS",
    "read_ranking",
    "read_trace",
    "write_csv",
    "write_records",
    "load_structured",
    "write_json",
    "write_model",
    "write_text",
    "derive_seed",
    "query_rng",
    "spawn_seeds",
    "substream",
]
