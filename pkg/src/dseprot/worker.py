"""Per-model estimator worker: sliding window in, one reply out per sample.

A worker can run as a thread fed through queues or as a separate process
speaking the line protocol below on stdin/stdout::

    inbound   S <t> <va> <vb> <vc> <ia> <ib> <ic>      sample
              Q                                       shutdown
    outbound  W <model_id> <t>                        warming up
              C <model_id> <t> <conf> <J> <dof> <k> <p1> .. <pk>
              F <model_id> <t>                        solver failed
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from . import config
from .models import MeasurementWindow, ModelKind, Sample, SystemParams, build_model
from .solver import SingularSystemError, SolverOptions, estimate_window

log = logging.getLogger(__name__)

WARMING_UP = "warming-up"
ESTIMATED = "estimated"
SOLVER_FAILED = "solver-failed"

_STATUS_TAG = {WARMING_UP: "W", ESTIMATED: "C", SOLVER_FAILED: "F"}


@dataclass(frozen=True)
class WorkerConfig:
    kind: ModelKind
    window_N: int = config.WINDOW_N
    dt: float = config.SAMPLE_PERIOD
    params: SystemParams = field(default_factory=SystemParams)
    sigma_v: float = config.SIGMA_V
    sigma_i: float = config.SIGMA_I
    solver: SolverOptions = field(default_factory=SolverOptions)
    load_bound_factor: float = config.LOAD_BOUND_FACTOR

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.window_N < 2:
            raise ValueError("window_N must be >= 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def model_spec(self):
        return build_model(
            self.kind, self.window_N, self.params, self.sigma_v, self.sigma_i, self.load_bound_factor
        )

    def to_argv(self) -> list[str]:
        """Command-line arguments that rebuild this config in a worker process."""
        p, s = self.params, self.solver
        return [
            "--model", str(int(self.kind)),
            "--window", str(self.window_N),
            "--dt", repr(self.dt),
            "--r-load", repr(p.R_load),
            "--l-load", repr(p.L_load),
            "--r-ground", repr(p.R_ground),
            "--f-nom", repr(p.f_nom),
            "--v-ll", repr(p.V_ll_rms),
            "--sigma-v", repr(self.sigma_v),
            "--sigma-i", repr(self.sigma_i),
            "--max-iterations", str(s.max_iterations),
            "--delta-j", repr(s.delta_J_threshold),
            "--j-floor", repr(s.J_floor),
            "--damping", repr(s.damping),
            "--load-bound", repr(self.load_bound_factor),
        ]  # fmt: skip


@dataclass(frozen=True)
class WorkerReply:
    model_id: int
    t: float
    status: str
    confidence: float = 0.0
    J: float = math.nan
    dof: int = 0
    params_out: tuple[tuple[str, float], ...] = ()

    @property
    def kind(self) -> ModelKind:
        return ModelKind(self.model_id)

    @property
    def usable(self) -> bool:
        return self.status == ESTIMATED

    def params(self) -> dict[str, float]:
        return dict(self.params_out)


def slide_window(buffer: Sequence[Sample], sample: Sample, N: int) -> list[Sample]:
    """Append ``sample`` and keep only the ``N`` most recent entries."""
    out = list(buffer)
    out.append(sample)
    return out[-N:]


def run_worker(
    config_: WorkerConfig,
    inbound: Iterable[object],
    emit: Callable[[WorkerReply], None],
) -> None:
    """Consume samples until ``inbound`` is exhausted, emitting one reply each.

    Items that are not ``Sample`` instances, or whose timestamps do not
    advance, produce a solver-failed reply and are otherwise ignored.
    """
    spec = config_.model_spec()
    mid = int(config_.kind)
    N = config_.window_N
    buffer: list[Sample] = []
    last_t = -math.inf
    for item in inbound:
        if not isinstance(item, Sample):
            emit(WorkerReply(mid, last_t if math.isfinite(last_t) else math.nan, SOLVER_FAILED))
            continue
        if item.t <= last_t:
            emit(WorkerReply(mid, item.t, SOLVER_FAILED))
            continue
        last_t = item.t
        buffer = slide_window(buffer, item, N)
        if len(buffer) < N:
            emit(WorkerReply(mid, item.t, WARMING_UP))
            continue
        try:
            window = MeasurementWindow(tuple(buffer), config_.dt)
            est = estimate_window(spec, window, config_.solver)
        except (ValueError, SingularSystemError, ArithmeticError) as exc:
            log.debug("model %d failed at t=%r: %s", mid, item.t, exc)
            emit(WorkerReply(mid, item.t, SOLVER_FAILED))
            continue
        emit(
            WorkerReply(
                mid,
                item.t,
                ESTIMATED,
                est.confidence,
                est.J,
                est.dof,
                tuple(est.params_out.items()),
            )
        )


# --- wire format -----------------------------------------------------------


def encode_sample(s: Sample) -> str:
    return "S " + " ".join(repr(float(v)) for v in s.as_tuple())


def decode_inbound(line: str) -> Sample | None | str:
    """Return a Sample, ``None`` for shutdown, or the raw line if malformed."""
    parts = line.split()
    if parts == ["Q"]:
        return None
    if len(parts) == 8 and parts[0] == "S":
        try:
            return Sample(*(float(x) for x in parts[1:]))
        except ValueError:
            return line
    return line


def encode_reply(r: WorkerReply) -> str:
    tag = _STATUS_TAG[r.status]
    head = f"{tag} {r.model_id} {r.t!r}"
    if r.status != ESTIMATED:
        return head
    values = " ".join(repr(v) for _, v in r.params_out)
    tail = f" {values}" if values else ""
    return f"{head} {r.confidence!r} {r.J!r} {r.dof} {len(r.params_out)}{tail}"


def decode_reply(line: str) -> WorkerReply:
    parts = line.split()
    if not parts:
        raise ValueError("empty reply line")
    tag = parts[0]
    mid = int(parts[1])
    t = float(parts[2])
    if tag == "W" and len(parts) == 3:
        return WorkerReply(mid, t, WARMING_UP)
    if tag == "F" and len(parts) == 3:
        return WorkerReply(mid, t, SOLVER_FAILED)
    if tag == "C":
        conf, J, dof, k = float(parts[3]), float(parts[4]), int(parts[5]), int(parts[6])
        values = [float(x) for x in parts[7:]]
        if len(values) != k:
            raise ValueError(f"reply declares {k} params but carries {len(values)}")
        names = build_model(ModelKind(mid), 2).param_names
        if len(names) != k:
            names = tuple(f"p{j}" for j in range(k))
        return WorkerReply(mid, t, ESTIMATED, conf, J, dof, tuple(zip(names, values)))
    raise ValueError(f"malformed reply {line!r}")


def _stdin_messages(stream) -> Iterable[object]:
    for line in stream:
        line = line.strip()
        if not line:
            continue
        msg = decode_inbound(line)
        if msg is None:
            return
        yield msg


def _parse_args(argv: Sequence[str] | None) -> WorkerConfig:
    ap = argparse.ArgumentParser(prog="dseprot-worker", description="Run one estimator worker on stdin/stdout.")
    ap.add_argument("--model", required=True)
    ap.add_argument("--window", type=int, default=config.WINDOW_N)
    ap.add_argument("--dt", type=float, default=config.SAMPLE_PERIOD)
    ap.add_argument("--r-load", type=float, default=config.R_LOAD)
    ap.add_argument("--l-load", type=float, default=config.L_LOAD)
    ap.add_argument("--r-ground", type=float, default=config.R_GROUND)
    ap.add_argument("--f-nom", type=float, default=config.F_NOM)
    ap.add_argument("--v-ll", type=float, default=config.V_LL_RMS)
    ap.add_argument("--sigma-v", type=float, default=config.SIGMA_V)
    ap.add_argument("--sigma-i", type=float, default=config.SIGMA_I)
    ap.add_argument("--max-iterations", type=int, default=config.MAX_ITERATIONS)
    ap.add_argument("--delta-j", type=float, default=config.DELTA_J_THRESHOLD)
    ap.add_argument("--j-floor", type=float, default=config.J_FLOOR)
    ap.add_argument("--damping", type=float, default=config.DAMPING)
    ap.add_argument("--load-bound", type=float, default=config.LOAD_BOUND_FACTOR)
    a = ap.parse_args(argv)
    return WorkerConfig(
        kind=ModelKind.parse(a.model),
        window_N=a.window,
        dt=a.dt,
        params=SystemParams(a.r_load, a.l_load, a.r_ground, a.f_nom, a.v_ll),
        sigma_v=a.sigma_v,
        sigma_i=a.sigma_i,
        solver=SolverOptions(a.max_iterations, a.delta_j, a.j_floor, a.damping),
        load_bound_factor=a.load_bound,
    )


def main(argv: Sequence[str] | None = None) -> int:
    cfg = _parse_args(argv)
    out = sys.stdout

    def emit(reply: WorkerReply) -> None:
        out.write(encode_reply(reply) + "\n")
        out.flush()

    run_worker(cfg, _stdin_messages(sys.stdin), emit)
    return 0


if __name__ == "__main__":
    sys.exit(main())
