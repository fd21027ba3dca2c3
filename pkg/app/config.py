import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

PROJECT_ROOT = Path(__file__).resolve().parent.parent

DEFAULT_TOL = float(os.getenv("TURNOVER_TOL", "1e-9"))
DEFAULT_WORKERS = int(os.getenv("TURNOVER_WORKERS", "1"))
DATA_DIR = Path(os.getenv("TURNOVER_DATA_DIR", str(PROJECT_ROOT / "data")))
DATABASE_URL = os.getenv("TURNOVER_DATABASE_URL", "sqlite+aiosqlite:///./turnover.db")
