"""Operational-mode models of the load bus: state layouts, h(x) and Jacobians.

Every model maps fault-node voltage states ``v_r`` one-to-one onto the
measured phase voltages. Currents come from the load's series-RL branches
(trapezoidal recursion) plus whatever fault conductance the mode adds; the
three-phase model ignores the load and predicts ``i = G_f * v_r``.

Measurement vectors are ordered ``[va(1..N), vb(1..N), vc(1..N), ia.., ib.., ic..]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import config


class ModelKind(enum.IntEnum):
    Unfaulted = 0
    FaultAG = 1
    FaultBG = 2
    FaultCG = 3
    FaultAB = 4
    FaultBC = 5
    FaultCA = 6
    Fault3P = 7

    @property
    def short(self) -> str:
        """Column suffix used in trace files (``U``, ``AG`` ... ``3P``)."""
        return "U" if self is ModelKind.Unfaulted else self.name[5:]

    @property
    def fault_phases(self) -> tuple[int, ...]:
        return _FAULT_PHASES[self]

    @property
    def is_line_ground(self) -> bool:
        return self in (ModelKind.FaultAG, ModelKind.FaultBG, ModelKind.FaultCG)

    @property
    def is_line_line(self) -> bool:
        return self in (ModelKind.FaultAB, ModelKind.FaultBC, ModelKind.FaultCA)

    @classmethod
    def parse(cls, value: str | int) -> "ModelKind":
        """Accept an id (``7``), a member name (``Fault3P``) or a short name (``3P``)."""
        if isinstance(value, int):
            return cls(value)
        text = str(value).strip()
        if text.isdigit():
            return cls(int(text))
        for kind in cls:
            if text.lower() in (kind.name.lower(), kind.short.lower()):
                return kind
        raise ValueError(f"unknown model kind {value!r}")


_FAULT_PHASES = {
    ModelKind.Unfaulted: (),
    ModelKind.FaultAG: (0,),
    ModelKind.FaultBG: (1,),
    ModelKind.FaultCG: (2,),
    ModelKind.FaultAB: (0, 1),
    ModelKind.FaultBC: (1, 2),
    ModelKind.FaultCA: (2, 0),
    ModelKind.Fault3P: (0, 1, 2),
}

CHANNELS = ("va", "vb", "vc", "ia", "ib", "ic")


@dataclass(frozen=True, slots=True)
class Sample:
    """One timestamped six-channel measurement at the load bus."""

    t: float
    va: float
    vb: float
    vc: float
    ia: float
    ib: float
    ic: float

    def __post_init__(self) -> None:
        values = (self.t, self.va, self.vb, self.vc, self.ia, self.ib, self.ic)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite value in sample {values}")
        if self.t < 0:
            raise ValueError(f"negative timestamp {self.t}")

    @property
    def voltages(self) -> tuple[float, float, float]:
        return (self.va, self.vb, self.vc)

    @property
    def currents(self) -> tuple[float, float, float]:
        return (self.ia, self.ib, self.ic)

    def as_tuple(self) -> tuple[float, ...]:
        return (self.t, self.va, self.vb, self.vc, self.ia, self.ib, self.ic)


@dataclass(frozen=True)
class MeasurementWindow:
    samples: tuple[Sample, ...]
    dt: float

    def __post_init__(self) -> None:
        if len(self.samples) < 2:
            raise ValueError("a measurement window needs at least 2 samples")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        ts = np.array([s.t for s in self.samples])
        steps = np.diff(ts)
        if np.any(np.abs(steps - self.dt) > 1e-6 * self.dt):
            raise ValueError(f"timestamps are not uniformly spaced by dt={self.dt}")

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], dt: float | None = None) -> "MeasurementWindow":
        samples = tuple(samples)
        if dt is None:
            if len(samples) < 2:
                raise ValueError("a measurement window needs at least 2 samples")
            dt = (samples[-1].t - samples[0].t) / (len(samples) - 1)
        return cls(samples, dt)

    @property
    def N(self) -> int:
        return len(self.samples)

    def channels(self) -> np.ndarray:
        """Return a ``(6, N)`` array of channel values."""
        return np.array([s.as_tuple()[1:] for s in self.samples]).T

    def z(self) -> np.ndarray:
        return self.channels().ravel()


@dataclass(frozen=True)
class SystemParams:
    R_load: float = config.R_LOAD
    L_load: float = config.L_LOAD
    R_ground: float = config.R_GROUND
    f_nom: float = config.F_NOM
    V_ll_rms: float = config.V_LL_RMS

    def __post_init__(self) -> None:
        for name in ("R_load", "L_load", "f_nom", "V_ll_rms"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.R_ground >= 0:
            raise ValueError(f"R_ground must be non-negative, got {self.R_ground}")

    @property
    def v_phase_peak(self) -> float:
        return math.sqrt(2.0) * self.V_ll_rms / math.sqrt(3.0)


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    N: int
    n_states: int
    m_meas: int
    dof: int
    params: SystemParams
    sigma_v: float
    sigma_i: float
    load_bound_factor: float = config.LOAD_BOUND_FACTOR

    @property
    def vr_offset(self) -> int:
        """Index of the first ``v_r`` state."""
        if self.kind is ModelKind.Fault3P:
            return 1
        if self.kind is ModelKind.Unfaulted:
            return 5
        return 4

    @property
    def il0_offset(self) -> int | None:
        if self.kind is ModelKind.Fault3P:
            return None
        return 2 if self.kind is ModelKind.Unfaulted else 1

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("R", "L") if self.kind is ModelKind.Unfaulted else ("G_f",)

    def params_out(self, x: np.ndarray) -> dict[str, float]:
        if self.kind is ModelKind.Unfaulted:
            return {"R": float(x[0]), "L": float(x[1])}
        return {"G_f": float(x[0])}

    def weights(self) -> np.ndarray:
        """Per-row ``1/sigma`` for the 6N measurement vector."""
        w = np.empty(self.m_meas)
        w[: 3 * self.N] = 1.0 / self.sigma_v
        w[3 * self.N :] = 1.0 / self.sigma_i
        return w


def n_states_for(kind: ModelKind, N: int) -> int:
    if kind is ModelKind.Fault3P:
        return 3 * N + 1
    if kind is ModelKind.Unfaulted:
        return 3 * N + 5
    return 3 * N + 4


def build_model(
    kind: ModelKind,
    N: int,
    params: SystemParams | None = None,
    sigma_v: float = config.SIGMA_V,
    sigma_i: float = config.SIGMA_I,
    load_bound_factor: float = config.LOAD_BOUND_FACTOR,
) -> ModelSpec:
    kind = ModelKind(kind)
    if int(N) != N or N < 2:
        raise ValueError(f"window length must be an integer >= 2, got {N}")
    if not (sigma_v > 0 and sigma_i > 0):
        raise ValueError("sigma_v and sigma_i must be positive")
    if not load_bound_factor >= 1:
        raise ValueError("load_bound_factor must be >= 1")
    params = params or SystemParams()
    n = n_states_for(kind, N)
    m = 6 * N
    return ModelSpec(kind, int(N), n, m, m - n, params, sigma_v, sigma_i, load_bound_factor)


def _rl_coefficients(R: float, L: float, dt: float) -> tuple[float, float, float]:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    c1 = L / dt + R / 2.0
    if not c1 > 0:
        raise ValueError("L/dt + R/2 must be positive")
    c2 = L / dt - R / 2.0
    return c1, c2, c2 / c1


def simulate_branch_currents(R: float, L: float, dt: float, iL0, v_seq) -> np.ndarray:
    """Trapezoidal series-RL branch currents, one row per phase.

    ``iL(1) = iL0`` and
    ``iL(n) = [(L/dt - R/2) iL(n-1) + (v(n) + v(n-1))/2] / (L/dt + R/2)``.
    """
    v = np.atleast_2d(np.asarray(v_seq, dtype=float))
    g, K = branch_sensitivities(float(R), float(L), float(dt), v.shape[1])
    # the recursion is linear: iL = iL0 * g + K v
    return np.outer(np.broadcast_to(np.asarray(iL0, dtype=float), (v.shape[0],)), g) + v @ K.T


@lru_cache(maxsize=256)
def _forcing_response(R: float, L: float, dt: float, N: int) -> np.ndarray:
    """``P`` with ``y = P f`` solving ``c1 y(n) = c2 y(n-1) + f(n)``, ``y(0) = 0``.

    Row and column 0 are zero; ``P[n, k] = alpha**(n-k) / c1`` for ``1 <= k <= n``.
    """
    c1, _, alpha = _rl_coefficients(R, L, dt)
    lag = np.arange(N)[:, None] - np.arange(N)[None, :]
    P = np.where(lag >= 0, alpha ** np.maximum(lag, 0), 0.0) / c1
    P[0, :] = 0.0
    P[:, 0] = 0.0
    P.flags.writeable = False
    return P


@lru_cache(maxsize=256)
def branch_sensitivities(R: float, L: float, dt: float, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Sensitivities of the linear recursion: ``d iL / d iL0`` (N,) and ``d iL / d v`` (N, N).

    Cached; the returned arrays are read-only.
    """
    _, _, alpha = _rl_coefficients(R, L, dt)
    g = alpha ** np.arange(N)
    # the forcing at step n is (v(n) + v(n-1)) / 2
    B = np.zeros((N, N))
    n = np.arange(1, N)
    B[n, n] = 0.5
    B[n, n - 1] = 0.5
    K = _forcing_response(R, L, dt, N) @ B
    g.flags.writeable = False
    K.flags.writeable = False
    return g, K


def _branch_rl_derivatives(R: float, L: float, dt: float, iL: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # differentiate c1 iL(n) = c2 iL(n-1) + (v(n)+v(n-1))/2 in R and L; both
    # derivatives obey the same recursion with their own forcing
    P = _forcing_response(R, L, dt, iL.shape[1])
    fR = np.zeros_like(iL)
    fL = np.zeros_like(iL)
    fR[:, 1:] = -0.5 * (iL[:, :-1] + iL[:, 1:])
    fL[:, 1:] = (iL[:, :-1] - iL[:, 1:]) / dt
    return fR @ P.T, fL @ P.T


def _check_state(spec: ModelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n_states,):
        raise ValueError(f"{spec.kind.name} expects {spec.n_states} states, got shape {x.shape}")
    return x


def _load_rl(spec: ModelSpec, x: np.ndarray) -> tuple[float, float]:
    if spec.kind is ModelKind.Unfaulted:
        return float(x[0]), float(x[1])
    return spec.params.R_load, spec.params.L_load


def evaluate_h(spec: ModelSpec, x, dt: float) -> np.ndarray:
    """Predicted 6N measurement vector for state ``x``."""
    x = _check_state(spec, x)
    N = spec.N
    off = spec.vr_offset
    vr = x[off : off + 3 * N].reshape(3, N)
    kind = spec.kind
    if kind is ModelKind.Fault3P:
        i = x[0] * vr
    else:
        R, L = _load_rl(spec, x)
        i0 = spec.il0_offset
        i = simulate_branch_currents(R, L, dt, x[i0 : i0 + 3], vr)
        G = x[0]
        if kind.is_line_ground:
            (p,) = kind.fault_phases
            i[p] += G * vr[p]
        elif kind.is_line_line:
            p, q = kind.fault_phases
            d = vr[p] - vr[q]
            i[p] += G * d
            i[q] -= G * d
    return np.concatenate([vr.ravel(), i.ravel()])


@lru_cache(maxsize=64)
def _jacobian_template(spec: ModelSpec, dt: float) -> np.ndarray:
    """The parts of ``d h / d x`` that do not depend on the state.

    For the fault models the load is fixed, so the branch sensitivities are
    constant too; for the unfaulted model only the voltage rows are.
    """
    N = spec.N
    off = spec.vr_offset
    H = np.zeros((spec.m_meas, spec.n_states))
    rows = np.arange(N)
    for p in range(3):
        H[p * N + rows, off + p * N + rows] = 1.0
    if spec.kind not in (ModelKind.Unfaulted, ModelKind.Fault3P):
        g, K = branch_sensitivities(spec.params.R_load, spec.params.L_load, dt, N)
        _fill_branch_blocks(H, spec, g, K)
    H.flags.writeable = False
    return H


def _fill_branch_blocks(H: np.ndarray, spec: ModelSpec, g: np.ndarray, K: np.ndarray) -> None:
    N = spec.N
    off = spec.vr_offset
    i0 = spec.il0_offset
    for p in range(3):
        r = slice(3 * N + p * N, 3 * N + (p + 1) * N)
        H[r, i0 + p] = g
        H[r, off + p * N : off + (p + 1) * N] = K


def evaluate_jacobian(spec: ModelSpec, x, dt: float) -> np.ndarray:
    """Exact ``d h / d x`` as a ``(6N, n_states)`` array."""
    x = _check_state(spec, x)
    N = spec.N
    off = spec.vr_offset
    vr = x[off : off + 3 * N].reshape(3, N)
    H = _jacobian_template(spec, float(dt)).copy()
    rows = np.arange(N)
    kind = spec.kind
    G = x[0]

    def irow(p: int) -> slice:
        return slice(3 * N + p * N, 3 * N + (p + 1) * N)

    def diag(p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
        # d i_p(n) / d v_q(n)
        return 3 * N + p * N + rows, off + q * N + rows

    if kind is ModelKind.Fault3P:
        for p in range(3):
            H[irow(p), 0] = vr[p]
            H[diag(p, p)] = G
    elif kind is ModelKind.Unfaulted:
        R, L = float(x[0]), float(x[1])
        g, K = branch_sensitivities(R, L, dt, N)
        _fill_branch_blocks(H, spec, g, K)
        iL = simulate_branch_currents(R, L, dt, x[2:5], vr)
        dR, dL = _branch_rl_derivatives(R, L, dt, iL)
        H[3 * N :, 0] = dR.ravel()
        H[3 * N :, 1] = dL.ravel()
    elif kind.is_line_ground:
        (p,) = kind.fault_phases
        H[irow(p), 0] = vr[p]
        H[diag(p, p)] += G
    else:
        p, q = kind.fault_phases
        d = vr[p] - vr[q]
        H[irow(p), 0] = d
        H[irow(q), 0] = -d
        H[diag(p, p)] += G
        H[diag(p, q)] -= G
        H[diag(q, p)] -= G
        H[diag(q, q)] += G
    return H


def initial_guess(spec: ModelSpec, window: MeasurementWindow) -> np.ndarray:
    """Voltages from the window, branch currents from its first sample, nominal parameters."""
    if window.N != spec.N:
        raise ValueError(f"window has {window.N} samples, model expects {spec.N}")
    ch = window.channels()
    x = np.empty(spec.n_states)
    off = spec.vr_offset
    x[off:] = ch[:3].ravel()
    if spec.kind is ModelKind.Unfaulted:
        x[0] = spec.params.R_load
        x[1] = spec.params.L_load
    else:
        x[0] = config.G_F_INITIAL
    if spec.il0_offset is not None:
        x[spec.il0_offset : spec.il0_offset + 3] = ch[3:, 0]
    return x


def parameter_bounds(spec: ModelSpec) -> tuple[tuple[int, float, float], ...]:
    """``(index, lower, upper)`` for each bounded state.

    ``G_f >= 0``; the unfaulted load's R and L stay within a factor
    ``load_bound_factor`` of nominal.
    """
    if spec.kind is ModelKind.Unfaulted:
        f = spec.load_bound_factor
        p = spec.params
        return ((0, p.R_load / f, p.R_load * f), (1, p.L_load / f, p.L_load * f))
    return ((0, 0.0, math.inf),)


def project_state(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Clamp bounded states to their feasible interval, in place."""
    for j, lo, hi in parameter_bounds(spec):
        x[j] = min(max(x[j], lo), hi)
    return x
