"""Fan samples out to the eight model workers, pick a model, debounce, act.

The core loop is a per-sample barrier: broadcast, gather one reply per
model, select the best-fitting model, then update the hysteresis state.
"""

from __future__ import annotations

import logging
import math
import queue
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Protocol, Sequence

from . import config
from .chi2 import chi_squared_cdf
from .models import ModelKind, Sample
from .worker import (
    ESTIMATED,
    SOLVER_FAILED,
    WorkerConfig,
    WorkerReply,
    decode_reply,
    encode_sample,
    run_worker,
)

log = logging.getLogger(__name__)

ACTION_NONE = "None"
ACTION_TRIP_ALL = "TripAll"


def trip_phase(phase: str) -> str:
    phase = phase.lower()
    if phase not in ("a", "b", "c"):
        raise ValueError(f"unknown phase {phase!r}")
    return f"TripPhase({phase})"


def default_action_table() -> dict[ModelKind, str]:
    table = {kind: ACTION_TRIP_ALL for kind in ModelKind}
    table[ModelKind.Unfaulted] = ACTION_NONE
    return table


TRACE_HEADER = (
    "t",
    "chosen",
    "committed",
    "action",
    *(f"c_{k.short}" for k in ModelKind),
    "gf_or_R",
    "L_opt",
)


@dataclass(frozen=True)
class OrchestratorConfig:
    hysteresis_samples: int = config.HYSTERESIS_SAMPLES
    min_confidence: float = config.MIN_CONFIDENCE
    reply_timeout: float | None = None  # None waits forever (deterministic)
    action_table: Mapping[ModelKind, str] = field(default_factory=default_action_table)

    def __post_init__(self) -> None:
        if self.hysteresis_samples < 0:
            raise ValueError("hysteresis_samples must be >= 0")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must be in [0, 1]")
        missing = [k.name for k in ModelKind if k not in self.action_table]
        if missing:
            raise ValueError(f"action_table missing {missing}")
        if self.reply_timeout is not None and not self.reply_timeout > 0:
            raise ValueError("reply_timeout must be positive")


@dataclass(frozen=True)
class OrchestratorState:
    prev_chosen: ModelKind = ModelKind.Unfaulted
    counter_N: int = 0
    committed: ModelKind = ModelKind.Unfaulted
    committed_action: str = ACTION_NONE


@dataclass(frozen=True)
class TraceRecord:
    t: float
    chosen: ModelKind
    committed: ModelKind
    action: str
    confidences: tuple[float, ...]
    params: dict[str, float]
    action_changed: bool = False
    blackout: bool = False
    degraded: tuple[int, ...] = ()

    def csv_row(self) -> list[str]:
        gf_or_r = self.params.get("G_f", self.params.get("R"))
        l_opt = self.params.get("L")
        return [
            repr(self.t),
            self.chosen.name,
            self.committed.name,
            self.action,
            *(repr(c) for c in self.confidences),
            "" if gf_or_r is None else repr(gf_or_r),
            "" if l_opt is None else repr(l_opt),
        ]

    def trip_command(self) -> str:
        return f"TRIP {self.action} model={self.committed.name} t={self.t!r}"


def _rank_key(reply: WorkerReply | None) -> tuple[float, float]:
    # confidence first; for confidences that round to the same double the
    # lower-tail cdf still orders them (1 - F computed without cancellation)
    if reply is None or reply.status != ESTIMATED:
        return (0.0, -1.0)
    cdf = chi_squared_cdf(reply.dof, reply.J) if reply.dof >= 1 and reply.J >= 0 else 1.0
    return (reply.confidence, -cdf)


def select_model(replies: Sequence[WorkerReply | None], prev_chosen: ModelKind) -> ModelKind:
    """Highest-confidence model; ties go to ``prev_chosen``, else the lowest id."""
    if len(replies) != len(ModelKind):
        raise ValueError(f"expected {len(ModelKind)} replies, got {len(replies)}")
    keys = [_rank_key(r) for r in replies]
    best = max(keys)
    tied = [k for k in ModelKind if keys[k] == best]
    if prev_chosen in tied:
        return prev_chosen
    return tied[0]


def hysteresis_update(state: OrchestratorState, chosen: ModelKind, cfg: OrchestratorConfig) -> OrchestratorState:
    counter = state.counter_N + 1 if chosen == state.prev_chosen else 0
    if counter > cfg.hysteresis_samples:
        return OrchestratorState(chosen, counter, chosen, cfg.action_table[chosen])
    return replace(state, prev_chosen=chosen, counter_N=counter)


# --- worker channels ---------------------------------------------------------


class WorkerChannel(Protocol):
    kind: ModelKind

    def send(self, sample: Sample) -> None: ...

    def recv(self, timeout: float | None = None) -> WorkerReply | None: ...

    def close(self) -> None: ...


_DEAD = object()


class _QueueChannel:
    """Shared receive side: replies arrive on a queue, a sentinel marks death."""

    kind: ModelKind

    def __init__(self) -> None:
        self._replies: queue.Queue = queue.Queue()
        self.dead = False

    def recv(self, timeout: float | None = None) -> WorkerReply | None:
        if self.dead:
            return None
        try:
            item = self._replies.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is _DEAD:
            self.dead = True
            return None
        return item


class ThreadWorker(_QueueChannel):
    """Worker running in a daemon thread of this process."""

    def __init__(self, cfg: WorkerConfig) -> None:
        super().__init__()
        self.kind = cfg.kind
        self._inbound: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._run, args=(cfg,), name=f"worker-{cfg.kind.name}", daemon=True)
        self._thread.start()

    def _messages(self) -> Iterator[object]:
        while True:
            item = self._inbound.get()
            if item is None:
                return
            yield item

    def _run(self, cfg: WorkerConfig) -> None:
        try:
            run_worker(cfg, self._messages(), self._replies.put)
        except Exception:  # noqa: BLE001 - a dying worker must not take the relay down
            log.exception("worker %s crashed", cfg.kind.name)
        finally:
            self._replies.put(_DEAD)

    def send(self, sample: Sample) -> None:
        if not self.dead:
            self._inbound.put(sample)

    def close(self) -> None:
        self._inbound.put(None)
        self._thread.join(timeout=5)


class ProcessWorker(_QueueChannel):
    """Worker in a child process, talking the line protocol over pipes."""

    def __init__(self, cfg: WorkerConfig, python: str | None = None) -> None:
        super().__init__()
        self.kind = cfg.kind
        cmd = [python or sys.executable, "-m", "dseprot.worker", *cfg.to_argv()]
        self._proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._reader = threading.Thread(target=self._read, name=f"reader-{cfg.kind.name}", daemon=True)
        self._reader.start()

    def _read(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                self._replies.put(decode_reply(line))
            except ValueError:
                log.warning("worker %s sent malformed reply %r", self.kind.name, line)
        self._replies.put(_DEAD)

    def send(self, sample: Sample) -> None:
        if self.dead or self._proc.poll() is not None:
            return
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(encode_sample(sample) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            log.warning("worker %s pipe closed", self.kind.name)

    def close(self) -> None:
        try:
            if self._proc.poll() is None and self._proc.stdin is not None:
                self._proc.stdin.write("Q\n")
                self._proc.stdin.flush()
                self._proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass
        try:
            self._proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        self._reader.join(timeout=5)


def spawn_workers(worker_configs: Sequence[WorkerConfig], mode: str = "thread") -> list[WorkerChannel]:
    if mode == "thread":
        return [ThreadWorker(c) for c in worker_configs]
    if mode == "process":
        return [ProcessWorker(c) for c in worker_configs]
    raise ValueError(f"unknown worker mode {mode!r}")


def default_worker_configs(**kwargs) -> list[WorkerConfig]:
    return [WorkerConfig(kind=k, **kwargs) for k in ModelKind]


# --- orchestrator --------------------------------------------------------------


class Orchestrator:
    """Per-sample barrier over eight worker channels.

    Use as a context manager so workers are shut down when the input ends.
    """

    def __init__(
        self,
        workers: Sequence[WorkerChannel],
        cfg: OrchestratorConfig | None = None,
        state: OrchestratorState | None = None,
    ) -> None:
        kinds = sorted(w.kind for w in workers)
        if kinds != list(ModelKind):
            raise ValueError("need exactly one worker per model kind")
        self.workers = sorted(workers, key=lambda w: w.kind)
        self.cfg = cfg or OrchestratorConfig()
        self.state = state or OrchestratorState()
        self.latencies: list[float] = []

    def __enter__(self) -> "Orchestrator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        for w in self.workers:
            w.close()

    def _gather(self, w: WorkerChannel, t: float) -> WorkerReply | None:
        timeout = self.cfg.reply_timeout
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            reply = w.recv(remaining)
            if reply is None:
                return None
            # drop replies for samples that already timed out
            if reply.t == t or (reply.status == SOLVER_FAILED and math.isnan(reply.t)):
                return reply
            if reply.t > t:
                return None

    def process(self, sample: Sample) -> TraceRecord:
        start = time.perf_counter()
        for w in self.workers:
            w.send(sample)
        replies: list[WorkerReply | None] = [self._gather(w, sample.t) for w in self.workers]
        degraded = tuple(int(w.kind) for w, r in zip(self.workers, replies) if r is None)
        if degraded:
            log.warning("t=%r: no reply from models %s, scored 0", sample.t, degraded)

        prev = self.state
        chosen = select_model(replies, prev.prev_chosen)
        self.state = hysteresis_update(prev, chosen, self.cfg)
        confidences = tuple(r.confidence if r is not None and r.status == ESTIMATED else 0.0 for r in replies)
        chosen_reply = replies[chosen]
        params = chosen_reply.params() if chosen_reply is not None and chosen_reply.status == ESTIMATED else {}
        blackout = self.cfg.min_confidence > 0 and max(confidences) < self.cfg.min_confidence
        rec = TraceRecord(
            t=sample.t,
            chosen=chosen,
            committed=self.state.committed,
            action=self.state.committed_action,
            confidences=confidences,
            params=params,
            action_changed=self.state.committed_action != prev.committed_action,
            blackout=blackout,
            degraded=degraded,
        )
        self.latencies.append(time.perf_counter() - start)
        return rec


def run_orchestrator(
    samples: Iterable[Sample],
    workers: Sequence[WorkerChannel] | None = None,
    cfg: OrchestratorConfig | None = None,
    state0: OrchestratorState | None = None,
    worker_mode: str = "thread",
) -> Iterator[TraceRecord]:
    """Yield one TraceRecord per sample; workers are shut down at the end."""
    if workers is None:
        workers = spawn_workers(default_worker_configs(), worker_mode)
    with Orchestrator(workers, cfg, state0) as orch:
        for s in samples:
            yield orch.process(s)
