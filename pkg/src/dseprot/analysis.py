"""Summaries of orchestrator trace files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean

from .models import ModelKind
from .orchestrator import TRACE_HEADER


@dataclass(frozen=True)
class TraceRow:
    t: float
    chosen: ModelKind
    committed: ModelKind
    action: str
    confidences: tuple[float, ...]


@dataclass
class TraceSummary:
    n_samples: int
    fault_time: float | None
    fault_index: int | None
    latency_samples: int | None
    detected_model: ModelKind | None
    commitment_changes: int
    changes: list[tuple[float, ModelKind, ModelKind]]
    final_committed: ModelKind | None
    blackout_spans: list[tuple[int, int]]
    model_stats: dict[ModelKind, dict[str, float]] = field(default_factory=dict)

    @property
    def longest_blackout(self) -> int:
        return max((b - a + 1 for a, b in self.blackout_spans), default=0)

    def report(self) -> str:
        lines = [f"samples: {self.n_samples}"]
        if self.fault_time is not None:
            lines.append(f"fault time: {self.fault_time!r} (sample {self.fault_index})")
        if self.latency_samples is None:
            lines.append("detection latency: none")
        else:
            lines.append(f"detection latency: {self.latency_samples} samples -> {self.detected_model.name}")
        lines.append(f"commitment changes: {self.commitment_changes}")
        for t, old, new in self.changes:
            lines.append(f"  t={t!r}: {old.name} -> {new.name}")
        if self.final_committed is not None:
            lines.append(f"final committed: {self.final_committed.name}")
        spans = ", ".join(f"[{a}, {b}]" for a, b in self.blackout_spans) or "none"
        lines.append(f"blackout spans (sample index): {spans}")
        lines.append(f"longest blackout: {self.longest_blackout} samples")
        lines.append("model      mean_conf  max_conf  argmax_frac")
        for kind, st in self.model_stats.items():
            lines.append(f"{kind.name:<10} {st['mean']:9.4f} {st['max']:9.4f} {st['argmax_frac']:11.4f}")
        return "\n".join(lines)

    def stats_csv_rows(self) -> list[list[str]]:
        rows = [["model", "mean_conf", "max_conf", "min_conf", "argmax_frac"]]
        for kind, st in self.model_stats.items():
            rows.append([kind.name, repr(st["mean"]), repr(st["max"]), repr(st["min"]), repr(st["argmax_frac"])])
        return rows


def read_trace(path: str | Path) -> list[TraceRow]:
    rows: list[TraceRow] = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return rows
        if tuple(header) != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header!r}")
        for n, rec in enumerate(reader, 2):
            if not rec:
                continue
            if len(rec) != len(TRACE_HEADER):
                raise ValueError(f"{path}:{n}: expected {len(TRACE_HEADER)} fields, got {len(rec)}")
            try:
                rows.append(
                    TraceRow(
                        t=float(rec[0]),
                        chosen=ModelKind.parse(rec[1]),
                        committed=ModelKind.parse(rec[2]),
                        action=rec[3],
                        confidences=tuple(float(x) for x in rec[4:12]),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from exc
    return rows


def analyze_trace(
    rows: list[TraceRow],
    fault_time: float | None = None,
    threshold: float = 0.05,
    window_N: int = 5,
) -> TraceSummary:
    """Detection latency, commitment changes, blackout spans and per-model statistics.

    The first ``window_N - 1`` rows are warm-up and excluded from blackout
    detection. Latency counts samples from the first sample at or after
    ``fault_time`` to the first committed fault model.
    """
    n = len(rows)
    changes = [
        (rows[k].t, rows[k - 1].committed, rows[k].committed)
        for k in range(1, n)
        if rows[k].committed != rows[k - 1].committed
    ]

    fault_index = latency = detected = None
    if fault_time is not None:
        fault_index = next((k for k, r in enumerate(rows) if r.t >= fault_time - 1e-12), None)
        if fault_index is not None:
            hit = next(
                (k for k in range(fault_index, n) if rows[k].committed != ModelKind.Unfaulted),
                None,
            )
            if hit is not None:
                latency = hit - fault_index
                detected = rows[hit].committed

    spans: list[tuple[int, int]] = []
    start = None
    for k in range(max(window_N - 1, 0), n):
        low = max(rows[k].confidences) < threshold
        if low and start is None:
            start = k
        elif not low and start is not None:
            spans.append((start, k - 1))
            start = None
    if start is not None:
        spans.append((start, n - 1))

    stats: dict[ModelKind, dict[str, float]] = {}
    body = rows[max(window_N - 1, 0) :]
    for kind in ModelKind:
        cs = [r.confidences[kind] for r in body]
        stats[kind] = {
            "mean": mean(cs) if cs else math.nan,
            "max": max(cs) if cs else math.nan,
            "min": min(cs) if cs else math.nan,
            "argmax_frac": (sum(r.chosen == kind for r in body) / len(body)) if body else math.nan,
        }

    return TraceSummary(
        n_samples=n,
        fault_time=fault_time,
        fault_index=fault_index,
        latency_samples=latency,
        detected_model=detected,
        commitment_changes=len(changes),
        changes=changes,
        final_committed=rows[-1].committed if rows else None,
        blackout_spans=spans,
        model_stats=stats,
    )
