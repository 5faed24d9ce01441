import os
from pathlib import Path

ROOT_DIR = Path(__file__).resolve().parents[1]     # .../layerlq/config.py -> repo root
PACKAGE_DIR = ROOT_DIR / "layerlq"
DATA_DIR = PACKAGE_DIR / "data"                    # bundled graphs
OUTPUT_DIR = Path(os.environ.get("LAYERLQ_OUTPUT", "out"))

SCHEMA_VERSION = 1
DEFAULT_SEED = int(os.environ.get("LAYERLQ_SEED", "42"))

# Simulation defaults for bundled scenarios
DT = 1e-3
T_FINAL = 50.0
TRACE_STRIDE = 100
DIVERGENCE_NORM = 1e12
TAIL_RATIO = 1e-8

# Semidefiniteness tolerances, relative to the spectral norm
TOL_PSD_REL = 1e-9
TOL_PD_REL = 1e-12

# Riccati solvers
ARE_RESIDUAL_REL = 1e-8
FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITER = 200
NEWTON_MAX_ITER = 20

# Layered design checks
GENERALIZED_RESIDUAL_REL = 1e-7
DOMINATION_TOL = 1e-9
MAJORANT_TOL = 1e-10
L_FACTOR_REL = 1e-8
WEIGHT_SAMPLES = 50


def current_seed() -> int:
    """LAYERLQ_SEED is read at call time so the CLI honours late overrides."""
    return int(os.environ.get("LAYERLQ_SEED", DEFAULT_SEED))


def ensure_output_dir(path: Path | None = None) -> Path:
    out = Path(path) if path is not None else OUTPUT_DIR
    out.mkdir(parents=True, exist_ok=True)
    return out
