import os
from pathlib import Path

try:
    from dotenv import load_dotenv
except ImportError:  # pragma: no cover
    load_dotenv = None


PROJECT_DIR = Path(__file__).resolve().parent
if load_dotenv:
    load_dotenv(PROJECT_DIR / ".env")

DEFAULT_OUTPUT_ROOT = PROJECT_DIR / "out"


class ConfigError(ValueError):
    """Raised when an environment override cannot be interpreted."""


def env_flag(name: str, default: bool = False) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return str(value).strip().lower() in {'1', 'true', 'yes', 'on'}


def get_output_root() -> Path:
    override = os.getenv("BELIEF_TMP_OUT", "").strip()
    if override:
        return Path(override)
    return DEFAULT_OUTPUT_ROOT


def get_log_folder() -> Path:
    override = os.getenv("BELIEF_TMP_LOG_DIR", "").strip()
    if override:
        return Path(override)
    return PROJECT_DIR / "logs"


def get_env_seed() -> int | None:
    """Seed fallback for every command when no --seed is given."""
    raw = os.getenv("BELIEF_TMP_SEED", "").strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"BELIEF_TMP_SEED must be an integer, got {raw!r}") from exc


FIXTURE_FOLDER = PROJECT_DIR / "fixtures"
LOG_FOLDER = get_log_folder()
REPORT_FOLDER = PROJECT_DIR / "reports"
