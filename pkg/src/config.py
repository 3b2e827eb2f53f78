"""Configuration and constants."""

import os
import logging
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir)
DB_PATH = os.getenv("PULSELAB_DB") or os.path.join(BASE_DIR, "runs.db")
PRESETS_DIR = Path(__file__).parent.parent / "presets"
OUT_DIR = os.getenv("PULSELAB_OUT_DIR") or "results"

# Figure-numbered names accepted for the pulse presets
PRESET_ALIASES = {
    "fig3": "stiff_pulse",
    "fig4": "smooth_response",
    "fig5": "limited_nutrient",
}


def get_presets() -> list[str]:
    """List bundled preset names (presets/*.yaml) and their aliases."""
    if PRESETS_DIR.exists():
        names = {p.stem for p in PRESETS_DIR.glob("*.yaml")}
        return sorted(names | {alias for alias, target in PRESET_ALIASES.items() if target in names})
    return []


def preset_path(name: str) -> Path:
    return PRESETS_DIR / f"{PRESET_ALIASES.get(name, name)}.yaml"


def default_workers() -> int:
    """Sweep pool size: PULSELAB_WORKERS, else hardware parallelism."""
    env = os.getenv("PULSELAB_WORKERS", "").strip()
    if env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


# Scales of the nondimensional model (metadata only)
TIME_SCALE_SECONDS = 10.0
SPACE_SCALE_MICRONS = 200.0

# Logging setup
LOG_LEVEL = os.getenv("PULSELAB_LOG_LEVEL", "INFO").upper()
logging.basicConfig(
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    level=getattr(logging, LOG_LEVEL, logging.INFO),
)
logger = logging.getLogger(__name__)
