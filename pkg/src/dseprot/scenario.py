"""Offline three-phase circuit simulator producing load-bus measurement files.

Source -> series line -> grounded-wye RL load, with a fault conductance network
switched in at the load bus. Integration is trapezoidal on a fine internal
step; samples are decimated to the output rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import config
from .models import ModelKind, Sample, SystemParams

CSV_HEADER = ("t", "va", "vb", "vc", "ia", "ib", "ic")

CASES = {
    "I": ModelKind.FaultAG,
    "II": ModelKind.FaultBC,
    "III": ModelKind.Fault3P,
}


def default_fault_conductance(kind: ModelKind) -> float:
    if kind.is_line_ground:
        return 1.0 / config.Z_FAULT_LG
    if kind.is_line_line:
        return 1.0 / config.Z_FAULT_LL
    if kind is ModelKind.Fault3P:
        return 1.0 / config.Z_FAULT_3P
    raise ValueError("an unfaulted scenario has no fault conductance")


@dataclass(frozen=True)
class FaultSpec:
    kind: ModelKind
    conductance: float

    def __post_init__(self) -> None:
        if self.kind is ModelKind.Unfaulted:
            raise ValueError("FaultSpec needs a fault kind")
        if not self.conductance > 0:
            raise ValueError("fault conductance must be positive")

    @classmethod
    def default(cls, kind: ModelKind) -> "FaultSpec":
        return cls(kind, default_fault_conductance(kind))

    def admittance(self) -> np.ndarray:
        """3x3 nodal admittance the fault adds at the load bus."""
        Y = np.zeros((3, 3))
        G = self.conductance
        phases = self.kind.fault_phases
        if self.kind.is_line_line:
            p, q = phases
            Y[p, p] = Y[q, q] = G
            Y[p, q] = Y[q, p] = -G
        else:
            for p in phases:
                Y[p, p] = G
        return Y


@dataclass(frozen=True)
class ScenarioConfig:
    case: str = "custom"
    params: SystemParams = field(default_factory=SystemParams)
    line_R: float = config.LINE_R
    line_L: float = config.LINE_L
    fault_kind: ModelKind | None = ModelKind.FaultAG
    fault_conductance: float | None = None
    t_fault: float = config.T_FAULT
    t_end: float = config.T_END
    fs_out: float = config.FS_OUT
    internal_step: float = config.INTERNAL_STEP
    noise_sigma_v: float = 0.0
    noise_sigma_i: float = 0.0
    seed: int | None = None
    source_mode: str = "ideal"
    I_limit: float | None = None

    def __post_init__(self) -> None:
        if self.case in CASES and self.fault_kind is not CASES[self.case]:
            raise ValueError(f"case {self.case} implies {CASES[self.case].name}")
        if self.fault_kind is not None and self.fault_kind is ModelKind.Unfaulted:
            object.__setattr__(self, "fault_kind", None)
        if not (0 <= self.t_fault < self.t_end):
            raise ValueError("need 0 <= t_fault < t_end")
        if not (self.fs_out > 0 and self.internal_step > 0):
            raise ValueError("fs_out and internal_step must be positive")
        ratio = 1.0 / (self.fs_out * self.internal_step)
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("output period must be an integer multiple of internal_step")
        if self.line_R < 0 or self.line_L <= 0:
            raise ValueError("line_R must be >= 0 and line_L > 0")
        if self.noise_sigma_v < 0 or self.noise_sigma_i < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.source_mode not in ("ideal", "current-limited"):
            raise ValueError(f"unknown source_mode {self.source_mode!r}")
        if self.I_limit is not None and not self.I_limit > 0:
            raise ValueError("I_limit must be positive")
        if self.fault_conductance is not None and not self.fault_conductance > 0:
            raise ValueError("fault_conductance must be positive")

    @property
    def decimation(self) -> int:
        return int(round(1.0 / (self.fs_out * self.internal_step)))

    @property
    def fault(self) -> FaultSpec | None:
        if self.fault_kind is None:
            return None
        G = self.fault_conductance or default_fault_conductance(self.fault_kind)
        return FaultSpec(self.fault_kind, G)

    @property
    def current_limit(self) -> float:
        """Instantaneous clamp level (A); defaults to 2 pu of rated rms current."""
        if self.I_limit is not None:
            return self.I_limit
        p = self.params
        return config.CURRENT_LIMIT_PU * config.rated_current_rms(p.R_load, p.L_load, p.V_ll_rms, p.f_nom)


def case_config(case: str, **overrides) -> ScenarioConfig:
    """Scenario for one of the standard cases (I: A-G, II: B-C, III: three-phase)."""
    case = case.upper()
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}; expected one of {sorted(CASES)}")
    return ScenarioConfig(case=case, fault_kind=CASES[case], **overrides)


@dataclass
class SimulationResult:
    """Waveforms at the output rate. Arrays are (3, K) unless noted."""

    t: np.ndarray  # (K,)
    v: np.ndarray  # load-bus phase-to-ground voltage
    i: np.ndarray  # line current into the bus
    i_load: np.ndarray  # load branch currents
    i_fault: np.ndarray  # current into the fault network
    v_neutral: np.ndarray  # (K,)
    e: np.ndarray  # inverter terminal voltage (ideal source value where unclamped)
    clamped: np.ndarray  # bool, phase clamped at that sample
    config: ScenarioConfig

    def samples(self) -> list[Sample]:
        return [
            Sample(float(self.t[k]), *map(float, self.v[:, k]), *map(float, self.i[:, k]))
            for k in range(self.t.size)
        ]


def _rl_companion(R: float, L: float, h: float) -> tuple[float, float]:
    # i(n+1) = a i(n) + b (u(n+1) + u(n))
    c1 = L / h + R / 2.0
    return (L / h - R / 2.0) / c1, 0.5 / c1


def steady_state_phasors(cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Unfaulted steady state (bus voltage, line current) phasors for the discretised network.

    Inductive reactance uses the trapezoidal frequency warping so that the
    simulation starts exactly on its own periodic orbit.
    """
    p = cfg.params
    h = cfg.internal_step
    w = 2 * math.pi * p.f_nom
    warp = (2.0 / h) * math.tan(w * h / 2.0)
    z_line = cfg.line_R + 1j * warp * cfg.line_L
    z_load = p.R_load + 1j * warp * p.L_load
    e = p.v_phase_peak * np.exp(-1j * 2 * math.pi * np.arange(3) / 3)
    i = e / (z_line + z_load)
    return i * z_load, i


def _solve_step(b_l, hist_l, b_L, hist_L, Rg, Y, e_new, clamp, i_forced) -> np.ndarray:
    """Solve one step of the companion network.

    Unknowns ``[v(3), vn, i_line(3), i_load(3)]``; rows are line branches
    (or forced currents where clamped), load branches, the neutral resistor
    and bus KCL.
    """
    A = np.zeros((10, 10))
    rhs = np.zeros(10)
    for ph in range(3):
        A[ph, 4 + ph] = 1.0
        if clamp[ph]:
            rhs[ph] = i_forced[ph]
        else:
            A[ph, ph] = b_l
            rhs[ph] = hist_l[ph] + b_l * e_new[ph]
        A[3 + ph, 7 + ph] = 1.0
        A[3 + ph, ph] = -b_L
        A[3 + ph, 3] = b_L
        rhs[3 + ph] = hist_L[ph]
        A[7 + ph, 4 + ph] = 1.0
        A[7 + ph, 7 + ph] = -1.0
        A[7 + ph, 0:3] -= Y[ph]
    A[6, 3] = 1.0
    A[6, 7:10] = -Rg
    return np.linalg.solve(A, rhs)


def simulate_detailed(cfg: ScenarioConfig) -> SimulationResult:
    p = cfg.params
    h = cfg.internal_step
    w = 2 * math.pi * p.f_nom
    phase = 2 * math.pi * np.arange(3) / 3
    vpk = p.v_phase_peak
    a_l, b_l = _rl_companion(cfg.line_R, cfg.line_L, h)
    a_L, b_L = _rl_companion(p.R_load, p.L_load, h)
    Rg = p.R_ground
    limited = cfg.source_mode == "current-limited"
    ilim = cfg.current_limit if limited else math.inf
    clamp_level = ilim if limited else 0.0

    n_steps = int(round(cfg.t_end / h))
    fault_step = int(math.ceil(cfg.t_fault / h - 1e-9))
    Y_fault = cfg.fault.admittance() if cfg.fault is not None else np.zeros((3, 3))
    dec = cfg.decimation
    n_out = n_steps // dec + 1

    V0, I0 = steady_state_phasors(cfg)
    v = (V0 * 1.0).real.copy()
    i = I0.real.copy()
    iL = i.copy()
    vn = 0.0
    e = vpk * np.cos(-phase)
    u_line = e - v

    out_t = np.empty(n_out)
    out = {k: np.empty((3, n_out)) for k in ("v", "i", "iL", "if", "e")}
    out_vn = np.empty(n_out)
    out_clamp = np.zeros((3, n_out), dtype=bool)

    def record(k_out: int, t: float, Y: np.ndarray, clamp: np.ndarray) -> None:
        out_t[k_out] = t
        out["v"][:, k_out] = v
        out["i"][:, k_out] = i
        out["iL"][:, k_out] = iL
        out["if"][:, k_out] = Y @ v
        out["e"][:, k_out] = e
        out_vn[k_out] = vn
        out_clamp[:, k_out] = clamp

    record(0, 0.0, np.zeros((3, 3)), np.zeros(3, dtype=bool))
    # unknowns: v(0:3) vn(3) i(4:7) iL(7:10)
    prev_topology: tuple = (False, (False, False, False))
    be_left = 0
    for step in range(1, n_steps + 1):
        t = step * h
        faulted = step >= fault_step
        Y = Y_fault if faulted else np.zeros((3, 3))
        e_new = vpk * np.cos(w * t - phase)
        clamp = np.zeros(3, dtype=bool)
        sign = np.zeros(3)
        hist_l = a_l * i + b_l * u_line
        hist_L = a_L * iL + b_L * (v - vn)
        for _ in range(4):
            y = _solve_step(b_l, hist_l, b_L, hist_L, Rg, Y, e_new, clamp, sign * clamp_level)
            over = (~clamp) & (np.abs(y[4:7]) > ilim)
            if not over.any():
                break
            clamp |= over
            sign[over] = np.sign(y[4:7][over])
        topology = (faulted, tuple(bool(c) for c in clamp))
        if topology != prev_topology:
            be_left = 2
        be_step = be_left > 0
        if be_step:
            # critical damping adjustment: two backward-Euler steps across a
            # discontinuity suppress trapezoidal ringing in forced inductors
            be_left -= 1
            bl_be, bL_be = 1.0 / (cfg.line_L / h + cfg.line_R), 1.0 / (p.L_load / h + p.R_load)
            hist_l_be = bl_be * (cfg.line_L / h) * i
            hist_L_be = bL_be * (p.L_load / h) * iL
            y = _solve_step(bl_be, hist_l_be, bL_be, hist_L_be, Rg, Y, e_new, clamp, sign * clamp_level)
        prev_topology = topology
        v = y[0:3]
        vn = y[3]
        i = y[4:7]
        iL = y[7:10]
        # clamped phases report the terminal voltage the line equation implies;
        # the ideal-source history is kept so a phase can leave saturation
        u_line = e_new - v
        if be_step:
            e = np.where(clamp, (i - hist_l_be) / bl_be + v, e_new)
        else:
            e = np.where(clamp, (i - hist_l) / b_l + v, e_new)
        if step % dec == 0:
            record(step // dec, step * h, Y, clamp)

    return SimulationResult(
        t=out_t,
        v=out["v"],
        i=out["i"],
        i_load=out["iL"],
        i_fault=out["if"],
        v_neutral=out_vn,
        e=out["e"],
        clamped=out_clamp,
        config=cfg,
    )


def _add_noise(res: SimulationResult) -> None:
    cfg = res.config
    if cfg.noise_sigma_v == 0 and cfg.noise_sigma_i == 0:
        return
    rng = np.random.default_rng(cfg.seed)
    res.v = res.v + rng.normal(0.0, cfg.noise_sigma_v, res.v.shape)
    res.i = res.i + rng.normal(0.0, cfg.noise_sigma_i, res.i.shape)


def simulate_case(cfg: ScenarioConfig) -> list[Sample]:
    """Decimated (and optionally noisy) load-bus samples for a scenario."""
    res = simulate_detailed(cfg)
    _add_noise(res)
    return res.samples()


def format_row(s: Sample) -> str:
    return ",".join(f"{x!r}" if isinstance(x, float) else str(x) for x in s.as_tuple())


def write_measurements_csv(samples: Sequence[Sample], path: str | Path) -> Path:
    """Write ``t,va,vb,vc,ia,ib,ic`` plus one row per sample (round-trip exact floats)."""
    if not samples:
        raise ValueError("no samples to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for s in samples:
            fh.write(format_row(s) + "\n")
    return path


def parse_row(fields: Iterable[str]) -> Sample:
    values = [float(x) for x in fields]
    if len(values) != 7:
        raise ValueError(f"expected 7 fields, got {len(values)}")
    return Sample(*values)


def read_measurements_csv(path: str | Path) -> list[Sample]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"{path}: bad or missing header {header!r}")
        return [parse_row(row) for row in reader if row]
