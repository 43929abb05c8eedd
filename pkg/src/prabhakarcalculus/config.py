from __future__ import annotations

import os
from pathlib import Path

from dotenv import load_dotenv
from platformdirs import PlatformDirs


class InvalidEnvironmentVariable(Exception):
    """Raise for when environment variables are invalid."""

    def __init__(self, msg):
        super().__init__(msg)


# Parse a numeric env var, falling back to the default when it is unset.
# Raises InvalidEnvironmentVariable naming the variable when it doesn't parse.
def _numeric_env_var(name: str, default: int | float, cast: type) -> int | float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default

    try:
        return cast(raw)
    except ValueError as exc:
        raise InvalidEnvironmentVariable(f"ERROR: Ensure {name} is a valid {cast.__name__}. Got {raw!r}.") from exc


def validate_positive_int_env_var(name: str, default: int) -> int:
    value = int(_numeric_env_var(name, default, int))
    if value < 1:
        raise InvalidEnvironmentVariable(f"ERROR: Ensure {name} is a positive integer. Got {value}.")
    return value


def validate_nonnegative_float_env_var(name: str, default: float) -> float:
    value = float(_numeric_env_var(name, default, float))
    if not value >= 0.0:
        raise InvalidEnvironmentVariable(f"ERROR: Ensure {name} is a nonnegative number. Got {value}.")
    return value


load_dotenv()

# Series truncation defaults for SeriesControl
FC_MAX_TERMS = validate_positive_int_env_var("FC_MAX_TERMS", 1000)
FC_ABS_TOL = validate_nonnegative_float_env_var("FC_ABS_TOL", 0.0)
FC_REL_TOL = validate_nonnegative_float_env_var("FC_REL_TOL", 1e-15)

# Adaptive quadrature budget
FC_QUAD_EPSABS = validate_nonnegative_float_env_var("FC_QUAD_EPSABS", 1e-11)
FC_QUAD_EPSREL = validate_nonnegative_float_env_var("FC_QUAD_EPSREL", 1e-10)
FC_QUAD_LIMIT = validate_positive_int_env_var("FC_QUAD_LIMIT", 200)

# -1 is all cores, -2 is all cores but one
FC_JOB_COUNT = int(_numeric_env_var("FC_JOB_COUNT", -2, int))

# ~/.local/share/prabhakarcalculus/ on Linux
_FC_REPORT_DIR_ENV = PlatformDirs("prabhakarcalculus").user_data_dir
_FC_REPORT_DIR_ENV = os.getenv("FC_REPORT_DIR", _FC_REPORT_DIR_ENV)
FC_REPORT_DIR = Path(_FC_REPORT_DIR_ENV)
