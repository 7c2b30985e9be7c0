"""Cached simulations and orchestrated runs shared across test modules.

An orchestrated 1001-sample run takes several seconds, so each
(case, source mode) pair is computed at most once per session.
"""

from __future__ import annotations

from functools import lru_cache

from dseprot.orchestrator import run_orchestrator
from dseprot.scenario import case_config, simulate_case, simulate_detailed

FAULT_INDEX = 500  # t_fault / dt
WINDOW_N = 5


@lru_cache(maxsize=None)
def samples(case: str, mode: str = "ideal", noisy: bool = False, seed: int = 7):
    kw = dict(noise_sigma_v=0.5, noise_sigma_i=0.05, seed=seed) if noisy else {}
    return tuple(simulate_case(case_config(case, source_mode=mode, **kw)))


@lru_cache(maxsize=None)
def detailed(case: str, mode: str = "ideal"):
    return simulate_detailed(case_config(case, source_mode=mode))


@lru_cache(maxsize=None)
def trace(case: str, mode: str = "ideal"):
    return tuple(run_orchestrator(samples(case, mode)))
