from dotenv import load_dotenv
import os
from pathlib import Path
from typing import Optional

# Load .env file located at project root
load_dotenv(dotenv_path=Path(__file__).resolve().parents[2] / ".env")


def _flag(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() in ("true", "1", "yes")


def _optional(name: str) -> Optional[str]:
    value = os.getenv(name)
    return value or None


# Service settings
API_KEY: str = os.getenv("API_KEY", "default_key")
DATABASE_URL: str = os.getenv("DATABASE_URL", "sqlite:///./app/database.db")
DEBUG: bool = _flag("DEBUG", "False")
LOG_LEVEL: str = os.getenv("LOG_LEVEL", "DEBUG" if DEBUG else "INFO").upper()
OPERATION_LOG: bool = _flag("OPERATION_LOG", "True")

# Remote client transport; endpoints are read by app.core.run_config
CLIENT_TOKEN: Optional[str] = _optional("CLIENT_TOKEN")
CLIENT_TIMEOUT_S: float = float(os.getenv("CLIENT_TIMEOUT_S", "60"))
CLIENT_MAX_ATTEMPTS: int = int(os.getenv("CLIENT_MAX_ATTEMPTS", "3"))
CLIENT_MAX_IN_FLIGHT: int = int(os.getenv("CLIENT_MAX_IN_FLIGHT", "4"))

# Batch parallelism
WORKERS: int = int(os.getenv("WORKERS", str(os.cpu_count() or 1)))

# Versioned assets (NFBL registry, prompt templates)
ASSETS_DIR: Path = Path(__file__).resolve().parents[1] / "assets"
