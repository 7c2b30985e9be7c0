"""Central defaults and the key-value config file reader.

Every numeric default used by the package lives here exactly once.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any

# Load bus and circuit
R_LOAD = 18.432  # ohm per phase
L_LOAD = 24e-3  # henry per phase
R_GROUND = 10e-3  # ohm, load neutral to ground
F_NOM = 60.0  # hertz
V_LL_RMS = 480.0  # volts

# Fault path impedances used as simulation truth
Z_FAULT_LG = 15e-3
Z_FAULT_LL = 10e-3
Z_FAULT_3P = 15e-3

# Service drop, 1000 ft of 1/0 AWG quadruplex (cable-table estimate)
LINE_R = 0.097
LINE_L = 88e-6

# Sampling and windowing
SAMPLE_PERIOD = 500e-6
FS_OUT = 2000.0
INTERNAL_STEP = 50e-6
WINDOW_N = 5
HYSTERESIS_SAMPLES = 5
T_FAULT = 0.25
T_END = 0.5

# Estimator
SIGMA_V = 0.5
SIGMA_I = 0.05
MAX_ITERATIONS = 25
DELTA_J_THRESHOLD = 1e-6
J_FLOOR = 1e-12
DAMPING = 1e-9
G_F_INITIAL = 10.0
LOAD_BOUND_FACTOR = 10.0

# Orchestrator / analysis
MIN_CONFIDENCE = 0.0
BLACKOUT_THRESHOLD = 0.05
CURRENT_LIMIT_PU = 2.0


def rated_current_rms(
    r_load: float = R_LOAD,
    l_load: float = L_LOAD,
    v_ll_rms: float = V_LL_RMS,
    f_nom: float = F_NOM,
) -> float:
    """Nominal per-phase load current magnitude (A rms)."""
    z = math.hypot(r_load, 2 * math.pi * f_nom * l_load)
    return v_ll_rms / math.sqrt(3) / z


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a ``key = value`` file. ``#`` starts a comment; blank lines are skipped.

    Keys are normalised to lowercase with dashes turned into underscores so
    they line up with CLI option names.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = line.split("=", 1)
        elif ":" in line:
            key, value = line.split(":", 1)
        else:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip().lower().replace("-", "_")
        if not key:
            raise ValueError(f"{path}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# Settings understood by the CLI and config files: name -> (default, type).
SETTINGS: dict[str, tuple[Any, type]] = {
    "r_load": (R_LOAD, float),
    "l_load": (L_LOAD, float),
    "r_ground": (R_GROUND, float),
    "f_nom": (F_NOM, float),
    "v_ll": (V_LL_RMS, float),
    "line_r": (LINE_R, float),
    "line_l": (LINE_L, float),
    "case": (None, str),
    "fault": (None, str),
    "fault_conductance": (None, float),
    "t_fault": (T_FAULT, float),
    "t_end": (T_END, float),
    "fs": (FS_OUT, float),
    "internal_step": (INTERNAL_STEP, float),
    "noise_v": (0.0, float),
    "noise_i": (0.0, float),
    "seed": (None, int),
    "source": ("ideal", str),
    "ilim": (None, float),
    "window": (WINDOW_N, int),
    "dt": (SAMPLE_PERIOD, float),
    "sigma_v": (SIGMA_V, float),
    "sigma_i": (SIGMA_I, float),
    "max_iterations": (MAX_ITERATIONS, int),
    "delta_j": (DELTA_J_THRESHOLD, float),
    "j_floor": (J_FLOOR, float),
    "damping": (DAMPING, float),
    "load_bound": (LOAD_BOUND_FACTOR, float),
    "hysteresis": (HYSTERESIS_SAMPLES, int),
    "min_confidence": (MIN_CONFIDENCE, float),
    "workers": ("thread", str),
    "realtime": (False, bool),
    "reply_timeout": (None, float),
    "speed": (1.0, float),
    "period": (None, float),
    "threshold": (BLACKOUT_THRESHOLD, float),
}


def resolve_settings(file_values: dict[str, str] | None, flags: dict[str, Any]) -> dict[str, Any]:
    """Defaults, overridden by config-file values, overridden by explicit flags."""
    defaults = {k: d for k, (d, _) in SETTINGS.items()}
    typed_file: dict[str, Any] = {}
    for key, raw in (file_values or {}).items():
        if key not in SETTINGS:
            raise ValueError(f"unknown config key {key!r}")
        typed_file[key] = _coerce_typed(raw, SETTINGS[key][1])
    merged = dict(defaults)
    merged.update(typed_file)
    merged.update({k: v for k, v in flags.items() if v is not None and k in SETTINGS})
    return merged


def _coerce_typed(raw: str, typ: type) -> Any:
    if raw.lower() in ("", "none"):
        return None
    if typ is bool:
        return _parse_bool(raw)
    return typ(raw)
