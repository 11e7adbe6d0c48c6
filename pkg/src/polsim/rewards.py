"""Transition-reward catalog for the load-balancing objective.

All kinds score the post-transition fillings b'.  Sign conventions: every kind
is a penalty (<= 0) except ``queue_len_variance``, which is implemented with
the positive sign it is conventionally written with; maximizing it literally
favors *imbalance*, so it is kept for completeness rather than recommended
(see README).  Experiments default to ``combined``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_LINEAR = 0
_EXPON = 1
_VARIANCE = 2
_PROPORTIONAL = 3
_LOSS = 4
_IDLE = 5
_COMBINED = 6

_REWARD_CODES = {
    "queue_len_linear": _LINEAR,
    "queue_len_exponential": _EXPON,
    "queue_len_variance": _VARIANCE,
    "proportional": _PROPORTIONAL,
    "loss_penalty": _LOSS,
    "idle_penalty": _IDLE,
    "combined": _COMBINED,
}


@dataclass(frozen=True)
class RewardSpec:
    """Reward kind plus its scalar knobs.

    ``chi`` (> 1) is the base of the exponential queue-length penalty;
    ``kappa`` (> 0) weights the full-buffer penalty inside ``combined``.
    """

    kind: str
    chi: float = 2.0
    kappa: float = 100.0

    def __post_init__(self):
        if self.kind not in _REWARD_CODES:
            raise ValueError(f"unknown reward kind {self.kind!r}")
        if self.kind == "queue_len_exponential" and self.chi <= 1.0:
            raise ValueError("chi must be > 1")
        if self.kind == "combined" and self.kappa <= 0.0:
            raise ValueError("kappa must be > 0")

    def _encode(self) -> tuple[int, float, float]:
        return _REWARD_CODES[self.kind], float(self.chi), float(self.kappa)


@njit(cache=True)
def _reward_core(kind, chi, kappa, b_next, caps, mu):
    n = b_next.shape[0]
    if kind == _LINEAR:
        total = 0.0
        for i in range(n):
            total += b_next[i]
        return -total
    if kind == _EXPON:
        total = 0.0
        for i in range(n):
            total += chi ** np.float64(b_next[i])
        return -total
    if kind == _VARIANCE:
        mean = 0.0
        for i in range(n):
            mean += b_next[i]
        mean /= n
        var = 0.0
        for i in range(n):
            d = b_next[i] - mean
            var += d * d
        return var / n
    if kind == _PROPORTIONAL:
        total = 0.0
        for i in range(n):
            total += b_next[i] / mu[i]
        return -total
    if kind == _LOSS:
        full = 0.0
        for i in range(n):
            if b_next[i] == caps[i]:
                full += 1.0
        return -full
    if kind == _IDLE:
        idle = 0.0
        for i in range(n):
            if b_next[i] == 0:
                idle += 1.0
        return -idle
    # combined: queue-length sum plus kappa per full buffer
    total = 0.0
    for i in range(n):
        total += b_next[i]
        if b_next[i] == caps[i]:
            total += kappa
    return -total


def reward(
    spec: RewardSpec,
    next_state,
    state,
    action,
    service_rates: np.ndarray,
    buffer_caps: np.ndarray,
) -> float:
    """Evaluate one transition.  Current kinds read only the next fillings;
    the previous state and action stay in the signature for kinds that may
    need them."""
    kind, chi, kappa = spec._encode()
    b_next = np.asarray(next_state.b, dtype=np.int64)
    return float(
        _reward_core(
            kind,
            chi,
            kappa,
            b_next,
            np.asarray(buffer_caps, dtype=np.int64),
            np.asarray(service_rates, dtype=np.float64),
        )
    )
