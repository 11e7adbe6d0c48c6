"""Routing policies the planner is compared against.

Full-information policies read the true fillings (and rates); limited-
information policies see only the acknowledgement counts of the last epoch.
Ties are broken uniformly at random everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FULL_INFO_KINDS = ("jsq", "djsq", "sed")
LIMITED_INFO_KINDS = ("jmo", "jmo-e")
STRATEGY_KINDS = ("pol",) + FULL_INFO_KINDS + LIMITED_INFO_KINDS


@dataclass(frozen=True)
class Strategy:
    """A named policy with its knobs (``d`` for djsq, ``explore_prob`` for jmo-e)."""

    kind: str
    d: int = 2
    explore_prob: float = 0.2

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(
                f"unknown strategy {self.kind!r}; choose from {STRATEGY_KINDS}"
            )
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not (0.0 <= self.explore_prob <= 1.0):
            raise ValueError("explore_prob must lie in [0, 1]")

    @property
    def name(self) -> str:
        return self.kind


def _argmin_tie_random(values, candidates, rng: np.random.Generator) -> int:
    best = min(values[i] for i in candidates)
    ties = [i for i in candidates if values[i] == best]
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.integers(len(ties)))]


def _argmax_tie_random(values, candidates, rng: np.random.Generator) -> int:
    best = max(values[i] for i in candidates)
    ties = [i for i in candidates if values[i] == best]
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.integers(len(ties)))]


def decide_full_info(
    strategy: Strategy,
    true_fillings: np.ndarray,
    service_rates: np.ndarray,
    rng: np.random.Generator,
) -> int:
    """jsq: emptiest queue; djsq: emptiest of d random queues; sed: argmin b/mu."""
    n = len(true_fillings)
    if strategy.kind == "jsq":
        return _argmin_tie_random(true_fillings, range(n), rng)
    if strategy.kind == "djsq":
        if strategy.d > n:
            raise ValueError("d cannot exceed the number of queues")
        polled = rng.choice(n, size=strategy.d, replace=False)
        return _argmin_tie_random(true_fillings, polled.tolist(), rng)
    if strategy.kind == "sed":
        delays = [true_fillings[i] / service_rates[i] for i in range(n)]
        return _argmin_tie_random(delays, range(n), rng)
    raise ValueError(f"{strategy.kind!r} is not a full-information strategy")


def decide_limited_info(
    strategy: Strategy,
    last_epoch_acks: np.ndarray,
    used_last_epoch: np.ndarray,
    rng: np.random.Generator,
) -> int:
    """jmo: most acks seen last epoch; jmo-e: sometimes jump to an idle server.

    A server counts as idle when it produced no acknowledgement in the last
    epoch and received no job in it either (idleness is not directly
    observable, so this is the conservative observable proxy).
    """
    n = len(last_epoch_acks)
    if strategy.kind == "jmo":
        return _argmax_tie_random(last_epoch_acks, range(n), rng)
    if strategy.kind == "jmo-e":
        if rng.random() < strategy.explore_prob:
            idle = [
                i
                for i in range(n)
                if last_epoch_acks[i] == 0 and not used_last_epoch[i]
            ]
            if idle:
                return idle[int(rng.integers(len(idle)))]
        return _argmax_tie_random(last_epoch_acks, range(n), rng)
    raise ValueError(f"{strategy.kind!r} is not a limited-information strategy")
