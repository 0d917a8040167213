"""
Shared command plumbing.
- CommandError(exit_code, detail): what main.py turns into stderr + exit status
- run config loading: --config file (plain config or a previous manifest) merged with flag overrides
- error boundary mapping service errors to exit codes
- run directory + manifest
"""
import logging
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Optional, TypeVar

from pydantic import BaseModel, ValidationError

from config import APP_VERSION, settings
from schemas import RunManifest
from services.errors import BudgetStallError, EvaluatorError, NasError
from utils.file_utils import load_structured, write_json

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2
RUNTIME_ERROR = 3

M = TypeVar("M", bound=BaseModel)


class CommandError(Exception):
    def __init__(self, exit_code: int, detail: str):
        super().__init__(detail)
        self.exit_code = exit_code
        self.detail = detail


def add_common_flags(parser, space: bool = True) -> None:
    parser.add_argument("--config", help="JSON/YAML run config, or a manifest.json to rerun")
    parser.add_argument("--seed", type=int, help="run seed (overrides the config file)")
    parser.add_argument("--out", help=f"output directory (default: {settings.output_dir}/<command>)")
    if space:
        parser.add_argument("--space", help="space preset name or path to a space config file")


def _set_path(data: dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        child = node.get(k)
        if not isinstance(child, dict):
            child = {}
            node[k] = child
        node = child
    node[keys[-1]] = value


def load_run_config(model: type[M], config_path: Optional[str], overrides: dict[str, Any]) -> M:
    """File values, then non-None flag overrides (dotted keys reach nested sections)."""
    data: dict[str, Any] = {}
    if config_path:
        try:
            raw = load_structured(config_path)
        except FileNotFoundError as e:
            raise CommandError(CONFIG_ERROR, f"Config file not found: {config_path}") from e
        except ValueError as e:
            raise CommandError(CONFIG_ERROR, f"Config file {config_path}: {e}") from e
        # a manifest carries the merged config of an earlier run
        data = raw["config"] if "command" in raw and isinstance(raw.get("config"), dict) else raw
    for key, value in overrides.items():
        if value is not None:
            _set_path(data, key, value)
    try:
        return model.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        where = ".".join(str(p) for p in err["loc"]) or "config"
        raise CommandError(CONFIG_ERROR, f"Invalid config ({where}): {err['msg']}") from e


@contextmanager
def error_boundary(context: str) -> Iterator[None]:
    """Translate service errors into CommandError with `context` prefixed."""
    try:
        yield
    except CommandError:
        raise
    except (BudgetStallError, EvaluatorError) as e:
        raise CommandError(RUNTIME_ERROR, f"{context}: {e}") from e
    except (NasError, ValidationError, ValueError, KeyError, FileNotFoundError) as e:
        raise CommandError(CONFIG_ERROR, f"{context}: {e}") from e
    except (OSError, RuntimeError) as e:
        raise CommandError(RUNTIME_ERROR, f"{context}: {e}") from e


def out_dir(args, command: str) -> Path:
    p = Path(args.out) if args.out else Path(settings.output_dir) / command
    p.mkdir(parents=True, exist_ok=True)
    return p


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def start_manifest(command: str, config: BaseModel, seed: int, space_fingerprint: Optional[str] = None) -> RunManifest:
    return RunManifest(
        command=command,
        config=config.model_dump(mode="json"),
        seed=seed,
        tool_version=APP_VERSION,
        space_fingerprint=space_fingerprint,
        started_at=_now(),
    )


def finish_manifest(manifest: RunManifest, directory: Path, outputs: dict[str, str]) -> str:
    manifest.finished_at = _now()
    manifest.outputs = {k: str(v) for k, v in sorted(outputs.items())}
    path = write_json(directory / "manifest.json", manifest)
    logger.info("wrote %s", path)
    return path
