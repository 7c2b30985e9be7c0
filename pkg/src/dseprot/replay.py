"""ADC emulation: stream a measurement CSV line by line at the sample rate."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, TextIO

from .scenario import CSV_HEADER

_SPIN = 300e-6  # final stretch before a deadline is busy-waited


@dataclass(frozen=True)
class ReplayConfig:
    path: Path
    speed: float = 1.0
    period_override: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", Path(self.path))
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
        if self.period_override is not None and not self.period_override > 0:
            raise ValueError("period_override must be positive")


class ReplayError(RuntimeError):
    pass


def load_rows(path: Path) -> tuple[str, list[str], list[float]]:
    """Read and validate a measurement file; return header, raw data rows and timestamps."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise ReplayError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or tuple(h.strip() for h in lines[0].split(",")) != CSV_HEADER:
        raise ReplayError(f"{path}: missing or wrong header (expected {','.join(CSV_HEADER)})")
    rows = [ln for ln in lines[1:] if ln.strip()]
    times: list[float] = []
    for n, row in enumerate(rows, 2):
        fields = row.split(",")
        try:
            if len(fields) != len(CSV_HEADER):
                raise ValueError(f"{len(fields)} fields")
            t = float(fields[0])
            for f in fields[1:]:
                float(f)
        except ValueError as exc:
            raise ReplayError(f"{path}:{n}: corrupt row ({exc})") from exc
        if times and not t > times[-1]:
            raise ReplayError(f"{path}:{n}: timestamp {t} does not increase")
        times.append(t)
    return lines[0], rows, times


def _wait_until(deadline: float, clock: Callable[[], float]) -> None:
    while True:
        remaining = deadline - clock()
        if remaining <= 0:
            return
        if remaining > _SPIN:
            time.sleep(remaining - _SPIN)


def replay(cfg: ReplayConfig, out: TextIO, clock: Callable[[], float] = time.perf_counter) -> int:
    """Write the header, then each data row at its scheduled time. Returns rows emitted.

    Deadlines are absolute (``start + offset/speed``) so sleep overshoot does
    not accumulate.
    """
    header, rows, times = load_rows(cfg.path)
    out.write(header + "\n")
    out.flush()
    start = clock()
    for n, (row, t) in enumerate(zip(rows, times)):
        if cfg.speed > 0 and n > 0:
            offset = n * cfg.period_override if cfg.period_override else t - times[0]
            _wait_until(start + offset / cfg.speed, clock)
        out.write(row + "\n")
        out.flush()
    return len(rows)
