"""Structured files: JSON/YAML config loading and deterministic JSON writes."""
import json
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel

_YAML_SUFFIXES = {".yaml", ".yml"}


def load_structured(path: str | Path) -> dict[str, Any]:
    """Read a JSON or YAML mapping. Raises FileNotFoundError / ValueError."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(str(p))
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() in _YAML_SUFFIXES:
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError(f"{p}: expected a mapping at top level, got {type(data).__name__}")
    return data


def write_text(path: str | Path, text: str) -> str:
    """Write via a temp file + rename so readers never see half a file."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_suffix(p.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(p)
    return str(p)


def write_json(path: str | Path, data: Any) -> str:
    """Sorted keys + fixed indent, so identical data gives identical bytes."""
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json")
    return write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_model(path: str | Path, model: BaseModel) -> str:
    """Field order as declared on the model (for formats whose layout is part of the contract)."""
    return write_text(path, model.model_dump_json(indent=2) + "\n")
