"""Particle belief over the latent queue states, updated by importance resampling.

After each routing decision the balancer sees only the epoch's acknowledgement
counts.  The filter propagates particles through the generative model under
the taken action, weights each propagated particle by the binomial likelihood
of the real observation given that particle's in-flight acknowledgement count,
and resamples.  Surviving particles are made consistent with the observation
(their seen/unseen ack split is determined once the count is observed).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numba import njit
from scipy import stats

from .model import AugmentedState, ModelParams, Observation, _draw_duration, _draw_job_count

logger = logging.getLogger(__name__)


@dataclass
class Belief:
    """Unweighted particle set; rows of ``b``/``x``/``y`` are particles."""

    b: np.ndarray
    x: np.ndarray
    y: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        self.b = np.atleast_2d(np.asarray(self.b, dtype=np.int64))
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.int64))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.int64))
        if not (self.b.shape == self.x.shape == self.y.shape):
            raise ValueError("particle arrays must share one shape")

    @property
    def n_particles(self) -> int:
        return self.b.shape[0]

    @property
    def n_queues(self) -> int:
        return self.b.shape[1]

    def particle(self, i: int) -> AugmentedState:
        return AugmentedState(self.b[i].copy(), self.x[i].copy(), self.y[i].copy())

    def particles(self) -> Iterator[AugmentedState]:
        return (self.particle(i) for i in range(self.n_particles))

    def sample(self, rng: np.random.Generator) -> AugmentedState:
        return self.particle(int(rng.integers(self.n_particles)))


@dataclass
class BeliefStats:
    """Per-queue location summary of the particle cloud."""

    mean: np.ndarray
    p10: np.ndarray
    p90: np.ndarray


def init_belief(n_particles: int, initial: AugmentedState) -> Belief:
    """All particles start at ``initial`` (an empty system, typically)."""
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    return Belief(
        b=np.tile(initial.b, (n_particles, 1)),
        x=np.tile(initial.x, (n_particles, 1)),
        y=np.tile(initial.y, (n_particles, 1)),
    )


def observation_likelihood(
    prev_available: np.ndarray, z: Observation, p: np.ndarray
) -> float:
    """P(observed counts | particle's per-queue available-ack counts).

    Product over queues of Binomial(available, p) at z; zero whenever some
    z exceeds what the particle had in flight.
    """
    prev_available = np.asarray(prev_available)
    return float(np.prod(stats.binom.pmf(np.asarray(z), prev_available, np.asarray(p))))


def systematic_resample(
    weights: np.ndarray, n_out: int, rng: np.random.Generator
) -> np.ndarray:
    """Low-variance resampling; returns ``n_out`` indices into ``weights``."""
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights must have positive sum")
    positions = (rng.random() + np.arange(n_out)) / n_out
    return np.searchsorted(np.cumsum(weights / total), positions, side="right").clip(
        0, weights.shape[0] - 1
    )


@njit(cache=True)
def _propagate_core(bs, xs, action, pack, rng):
    """Batch one-epoch propagation; returns next fillings and available acks."""
    caps, p_obs, arrival, service, reward = pack
    a_kind, a_p0, a_p1, a_samples = arrival
    s_kind, s_p0, s_p1, s_flat, s_off = service

    m, n = bs.shape
    b_next = np.empty((m, n), dtype=np.int64)
    avail = np.empty((m, n), dtype=np.int64)
    for j in range(m):
        u = _draw_duration(a_kind, a_p0, a_p1, a_samples, rng)
        for i in range(n):
            k = _draw_job_count(
                s_kind[i], s_p0[i], s_p1[i], s_flat[s_off[i]:s_off[i + 1]], u, rng
            )
            leave = min(bs[j, i], k)
            rest = bs[j, i] - leave
            if i == action and rest < caps[i]:
                rest += 1
            b_next[j, i] = rest
            avail[j, i] = leave + xs[j, i]
    return b_next, avail


def sir_update(
    belief: Belief,
    action: int,
    z: Observation,
    model: ModelParams,
    budget: int,
    rng: np.random.Generator,
) -> Belief:
    """Condition the belief on one (action, observation) pair.

    ``budget`` candidate transitions are simulated from uniformly drawn source
    particles and the particle set is resampled from them in proportion to the
    observation likelihood.  A resampled particle's ack bookkeeping is pinned
    to the observation: y' = z and x' = available - z.

    When every candidate has zero joint likelihood the update degrades
    gracefully instead of discarding the observation: queues are resampled
    independently by their per-queue likelihoods (they are conditionally
    independent given the epoch length, so this only drops the weak coupling
    through the shared epoch), and a queue whose per-queue weights are all
    zero keeps its propagated sub-states with x' clamped to
    max(available - z, 0).  Such updates are flagged on the returned belief
    and logged.  ``budget`` <= 0 is a documented no-weighting mode: the set is
    propagated once and only the ack bookkeeping is pinned to z.
    """
    z = np.asarray(z, dtype=np.int64)
    n_out = belief.n_particles
    pack = model._pack

    if budget <= 0:
        b2, avail = _propagate_core(belief.b, belief.x, action, pack, rng)
        return Belief(
            b=b2,
            x=np.maximum(avail - z[None, :], 0),
            y=np.tile(z, (n_out, 1)),
        )

    src = rng.integers(0, belief.n_particles, size=budget)
    b2, avail = _propagate_core(
        np.ascontiguousarray(belief.b[src]),
        np.ascontiguousarray(belief.x[src]),
        action,
        pack,
        rng,
    )
    per_queue = stats.binom.pmf(z[None, :], avail, model.ack_probs[None, :])
    weights = per_queue.prod(axis=1)
    total = weights.sum()
    if np.isfinite(total) and total > 0.0:
        idx = systematic_resample(weights, n_out, rng)
        new_avail = avail[idx]
        return Belief(
            b=b2[idx],
            x=new_avail - z[None, :],
            y=np.tile(z, (n_out, 1)),
        )

    # joint collapse: expected occasionally since the exact environment can
    # emit acks the epoch-granular model cannot (job served within its
    # arrival epoch), and routinely under hard (p=1) observations with many
    # queues, where the joint hit probability vanishes
    logger.debug(
        "belief update degenerate: observation %s inconsistent with all %d "
        "simulated particles; resampling queues independently",
        z.tolist(),
        budget,
    )
    n_queues = b2.shape[1]
    new_b = np.empty((n_out, n_queues), dtype=np.int64)
    new_x = np.empty((n_out, n_queues), dtype=np.int64)
    for i in range(n_queues):
        col = per_queue[:, i]
        col_total = col.sum()
        if np.isfinite(col_total) and col_total > 0.0:
            idx = systematic_resample(col, n_out, rng)
        else:
            idx = rng.integers(0, b2.shape[0], size=n_out)
        new_b[:, i] = b2[idx, i]
        new_x[:, i] = np.maximum(avail[idx, i] - z[i], 0)
    return Belief(
        b=new_b,
        x=new_x,
        y=np.tile(z, (n_out, 1)),
        degenerate=True,
    )


def belief_stats(belief: Belief) -> BeliefStats:
    """Elementwise mean and 10th/90th percentile fillings over particles."""
    return BeliefStats(
        mean=belief.b.mean(axis=0),
        p10=np.percentile(belief.b, 10, axis=0),
        p90=np.percentile(belief.b, 90, axis=0),
    )
