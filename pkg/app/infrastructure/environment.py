"""Process-level defaults read from the environment"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from app.core.errors import ValidationError

PROJECT_ROOT = Path(__file__).parent.parent.parent
DEFAULT_OUTPUT_DIR = PROJECT_ROOT / "output"


@dataclass(frozen=True)
class Environment:
    """Defaults the CLI falls back on when a flag is not given"""

    workers: int = 1
    log_level: str = "INFO"
    output_dir: Path = DEFAULT_OUTPUT_DIR


def load_environment(dotenv_path: Optional[Path] = None) -> Environment:
    """
    Read XVAFORGE_* variables, loading a .env file first when one exists.

    Variables already set in the process win over the file.
    """
    path = dotenv_path or os.environ.get("XVAFORGE_DOTENV")
    if path:
        load_dotenv(path, override=False)
    else:
        load_dotenv(override=False)

    raw_workers = os.environ.get("XVAFORGE_WORKERS", "1")
    try:
        workers = int(raw_workers)
    except ValueError:
        raise ValidationError(f"XVAFORGE_WORKERS must be an integer, got {raw_workers!r}")
    if workers < 1:
        raise ValidationError("XVAFORGE_WORKERS must be >= 1")

    output = os.environ.get("XVAFORGE_OUTPUT_DIR")
    return Environment(
        workers=workers,
        log_level=os.environ.get("XVAFORGE_LOG_LEVEL", "INFO").upper(),
        output_dir=Path(output) if output else DEFAULT_OUTPUT_DIR,
    )
