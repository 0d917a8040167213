"""Settings: environment-driven defaults (MCTNAS_ prefix)."""
from pydantic_settings import BaseSettings, SettingsConfigDict

APP_NAME = "mctnas"
APP_VERSION = "1.0.0"


class Settings(BaseSettings):
    """Process-wide defaults. Per-run knobs live in the config files (schemas.py)."""

    model_config = SettingsConfigDict(env_prefix="MCTNAS_", env_file=".env", extra="ignore")

    log_level: str = "INFO"

    # enumerate() refuses spaces larger than this
    enumerate_cap: int = 1_000_000

    # rejection sampling under a FLOPs window gives up after this many draws
    max_resample_tries: int = 10_000

    # images in one "full" validation pass, used for search cost accounting
    full_eval_images: int = 50_000

    # default parent directory for run outputs when --out is not given
    output_dir: str = "runs"


settings = Settings()
