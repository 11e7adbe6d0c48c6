"""Queueing-state types, duration distributions, and the one-epoch generative simulator.

The decision clock is the job-arrival clock: one epoch spans one inter-arrival
interval.  The latent per-queue state is the triple (filling ``b``, in-flight
acknowledgements ``x``, observed acknowledgements ``y``).  A transition draws
the epoch length, the number of jobs each server could serve in it, applies the
routing action, and thins the outstanding acknowledgements with a per-queue
Bernoulli observation probability ``p``.

The numerical core is JIT-compiled (numba) because the planner replays this
transition millions of times per experiment run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .rewards import RewardSpec, _reward_core

# distribution kind codes used by the compiled kernels
_EXPONENTIAL = 0
_GAMMA = 1
_PARETO = 2
_DETERMINISTIC = 3
_EMPIRICAL = 4

_KIND_CODES = {
    "exponential": _EXPONENTIAL,
    "gamma": _GAMMA,
    "pareto": _PARETO,
    "deterministic": _DETERMINISTIC,
    "empirical": _EMPIRICAL,
}

_EMPTY_F64 = np.empty(0, dtype=np.float64)


@dataclass(frozen=True)
class DistributionSpec:
    """A positive-duration distribution with a fixed parameterization.

    Supported kinds: ``exponential(rate)``, ``gamma(shape, rate)``,
    ``pareto(scale, tail_index)`` (classical Pareto, support ``[scale, inf)``),
    ``deterministic(value)``, and ``empirical(samples)`` (uniform resampling of
    an observed trace).  Use the classmethod constructors.
    """

    kind: str
    rate: float = 0.0
    shape: float = 0.0
    scale: float = 0.0
    tail_index: float = 0.0
    value: float = 0.0
    samples: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def exponential(cls, rate: float) -> "DistributionSpec":
        if rate <= 0:
            raise ValueError("exponential rate must be > 0")
        return cls(kind="exponential", rate=float(rate))

    @classmethod
    def gamma(cls, shape: float, rate: float) -> "DistributionSpec":
        if shape <= 0 or rate <= 0:
            raise ValueError("gamma shape and rate must be > 0")
        return cls(kind="gamma", shape=float(shape), rate=float(rate))

    @classmethod
    def pareto(cls, scale: float, tail_index: float) -> "DistributionSpec":
        if scale <= 0 or tail_index <= 0:
            raise ValueError("pareto scale and tail_index must be > 0")
        return cls(kind="pareto", scale=float(scale), tail_index=float(tail_index))

    @classmethod
    def deterministic(cls, value: float) -> "DistributionSpec":
        if value <= 0:
            raise ValueError("deterministic value must be > 0")
        return cls(kind="deterministic", value=float(value))

    @classmethod
    def empirical(cls, samples: Sequence[float]) -> "DistributionSpec":
        samples = tuple(float(s) for s in samples)
        if not samples:
            raise ValueError("empirical sample list must be non-empty")
        if min(samples) <= 0:
            raise ValueError("empirical samples must all be > 0")
        return cls(kind="empirical", samples=samples)

    def mean(self) -> float:
        """Expected duration; ``inf`` for a Pareto tail index <= 1."""
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "gamma":
            return self.shape / self.rate
        if self.kind == "pareto":
            if self.tail_index <= 1.0:
                return math.inf
            return self.tail_index * self.scale / (self.tail_index - 1.0)
        if self.kind == "deterministic":
            return self.value
        return float(np.mean(self.samples))

    def scaled_to_mean(self, mean: float) -> "DistributionSpec":
        """Same shape, rescaled so the expected duration equals ``mean``."""
        if mean <= 0:
            raise ValueError("target mean must be > 0")
        cur = self.mean()
        if not math.isfinite(cur):
            raise ValueError("cannot rescale a distribution with infinite mean")
        f = mean / cur
        if self.kind == "exponential":
            return DistributionSpec.exponential(self.rate / f)
        if self.kind == "gamma":
            return DistributionSpec.gamma(self.shape, self.rate / f)
        if self.kind == "pareto":
            return DistributionSpec.pareto(self.scale * f, self.tail_index)
        if self.kind == "deterministic":
            return DistributionSpec.deterministic(self.value * f)
        return DistributionSpec.empirical(tuple(s * f for s in self.samples))

    def _encode(self) -> tuple[int, float, float, np.ndarray]:
        """(kind_code, p0, p1, samples) layout consumed by the kernels."""
        code = _KIND_CODES[self.kind]
        if code == _EXPONENTIAL:
            return code, self.rate, 0.0, _EMPTY_F64
        if code == _GAMMA:
            return code, self.shape, self.rate, _EMPTY_F64
        if code == _PARETO:
            return code, self.scale, self.tail_index, _EMPTY_F64
        if code == _DETERMINISTIC:
            return code, self.value, 0.0, _EMPTY_F64
        return code, 0.0, 0.0, np.asarray(self.samples, dtype=np.float64)


@dataclass(frozen=True)
class QueueParams:
    """Static description of one server: buffer size, service law, ack probability."""

    buffer_capacity: int
    service: DistributionSpec
    ack_probability: float

    def __post_init__(self):
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")
        if not (0.0 < self.ack_probability <= 1.0):
            raise ValueError("ack_probability must lie in (0, 1]")


@dataclass
class AugmentedState:
    """Per-queue latent state: filling ``b``, unseen acks ``x``, seen acks ``y``."""

    b: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if not (self.b.shape == self.x.shape == self.y.shape):
            raise ValueError("b, x, y must have identical shapes")

    @classmethod
    def empty(cls, n_queues: int) -> "AugmentedState":
        z = np.zeros(n_queues, dtype=np.int64)
        return cls(b=z.copy(), x=z.copy(), y=z.copy())

    @property
    def n_queues(self) -> int:
        return self.b.shape[0]

    def copy(self) -> "AugmentedState":
        return AugmentedState(self.b.copy(), self.x.copy(), self.y.copy())


# An action is the index of the queue receiving the arriving job; an
# observation is the int64 vector of acknowledgement counts seen in one epoch.
Action = int
Observation = np.ndarray


@dataclass
class ModelParams:
    """World model handed to the planner: arrival law, per-queue parameters, reward.

    This may be the ground truth or an inferred stand-in; the environment keeps
    its own instance.  Derived arrays are cached for the compiled kernels.
    """

    arrival: DistributionSpec
    queues: tuple[QueueParams, ...]
    reward: RewardSpec

    buffer_caps: np.ndarray = field(init=False, repr=False)
    ack_probs: np.ndarray = field(init=False, repr=False)
    service_rates: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.queues = tuple(self.queues)
        if not self.queues:
            raise ValueError("at least one queue is required")
        self.buffer_caps = np.array(
            [q.buffer_capacity for q in self.queues], dtype=np.int64
        )
        self.ack_probs = np.array(
            [q.ack_probability for q in self.queues], dtype=np.float64
        )
        self.service_rates = np.array(
            [1.0 / q.service.mean() for q in self.queues], dtype=np.float64
        )
        self._pack = _pack_model(self)

    @property
    def n_queues(self) -> int:
        return len(self.queues)

    @property
    def arrival_rate(self) -> float:
        return 1.0 / self.arrival.mean()

    def offered_load(self) -> float:
        """Arrival rate over total service capacity."""
        return self.arrival_rate / float(np.sum(self.service_rates))


def _pack_model(model: ModelParams) -> tuple:
    """Flatten a ModelParams into the tuple-of-arrays layout the kernels take."""
    a_kind, a_p0, a_p1, a_samples = model.arrival._encode()
    n = model.n_queues
    s_kind = np.empty(n, dtype=np.int64)
    s_p0 = np.empty(n, dtype=np.float64)
    s_p1 = np.empty(n, dtype=np.float64)
    chunks = []
    offsets = np.zeros(n + 1, dtype=np.int64)
    for i, q in enumerate(model.queues):
        k, p0, p1, smp = q.service._encode()
        s_kind[i] = k
        s_p0[i] = p0
        s_p1[i] = p1
        chunks.append(smp)
        offsets[i + 1] = offsets[i] + smp.shape[0]
    s_flat = np.concatenate(chunks) if offsets[-1] else _EMPTY_F64
    r_kind, r_chi, r_kappa = model.reward._encode()
    return (
        model.buffer_caps,
        model.ack_probs,
        (a_kind, a_p0, a_p1, a_samples),
        (s_kind, s_p0, s_p1, s_flat, offsets),
        (r_kind, r_chi, r_kappa, model.service_rates),
    )


@njit(cache=True)
def _draw_duration(kind, p0, p1, samples, rng):
    if kind == _EXPONENTIAL:
        return rng.exponential(1.0 / p0)
    if kind == _GAMMA:
        return rng.gamma(p0, 1.0 / p1)
    if kind == _PARETO:
        # classical Pareto on [scale, inf): scale * U^(-1/alpha)
        return p0 * rng.random() ** (-1.0 / p1)
    if kind == _DETERMINISTIC:
        return p0
    return samples[rng.integers(0, samples.shape[0])]


@njit(cache=True)
def _draw_job_count(kind, p0, p1, samples, u, rng):
    """Largest j such that j consecutive service draws fit inside u."""
    if kind == _EXPONENTIAL:
        # service completions form a Poisson process while the server is busy
        return rng.poisson(p0 * u)
    if kind == _DETERMINISTIC:
        return np.int64(u / p0)
    total = 0.0
    count = np.int64(0)
    while True:
        total += _draw_duration(kind, p0, p1, samples, rng)
        if total > u:
            return count
        count += 1


@njit(cache=True)
def _step_core(b, x, action, pack, rng):
    """One epoch of the generative model on raw arrays.

    Returns (b_next, x_next, acks_seen, available, reward, dropped): the new
    fillings, the new in-flight counts, the observation vector, the per-queue
    count of acknowledgements that could have been seen this epoch, the
    transition reward, and whether the routed job was lost to a full buffer.
    """
    caps, p_obs, arrival, service, reward = pack
    a_kind, a_p0, a_p1, a_samples = arrival
    s_kind, s_p0, s_p1, s_flat, s_off = service
    r_kind, r_chi, r_kappa, mu = reward

    n = b.shape[0]
    u = _draw_duration(a_kind, a_p0, a_p1, a_samples, rng)
    b_next = np.empty(n, dtype=np.int64)
    x_next = np.empty(n, dtype=np.int64)
    seen = np.empty(n, dtype=np.int64)
    avail = np.empty(n, dtype=np.int64)
    dropped = False
    for i in range(n):
        k = _draw_job_count(
            s_kind[i], s_p0[i], s_p1[i], s_flat[s_off[i]:s_off[i + 1]], u, rng
        )
        leave = min(b[i], k)
        rest = b[i] - leave
        if i == action:
            if rest == caps[i]:
                dropped = True
                b_next[i] = rest
            else:
                b_next[i] = rest + 1
        else:
            b_next[i] = rest
        avail[i] = leave + x[i]
        seen[i] = rng.binomial(avail[i], p_obs[i])
        x_next[i] = avail[i] - seen[i]
    r = _reward_core(r_kind, r_chi, r_kappa, b_next, caps, mu)
    return b_next, x_next, seen, avail, r, dropped


# --- planner-facing kernel flavor -----------------------------------------
#
# Passing a np.random.Generator across the JIT boundary costs ~9 us per call,
# which the tree search cannot afford.  These twins draw from numba's internal
# np.random state instead (zero crossing cost); the planner seeds it once per
# planning call via `_seed_internal`.  The Generator flavor above remains the
# public API and the reference the twins are tested against.


@njit(cache=True)
def _seed_internal(seed):
    np.random.seed(seed)


@njit(cache=True)
def _draw_duration_ir(kind, p0, p1, samples):
    if kind == _EXPONENTIAL:
        return np.random.exponential(1.0 / p0)
    if kind == _GAMMA:
        return np.random.gamma(p0, 1.0 / p1)
    if kind == _PARETO:
        return p0 * np.random.random() ** (-1.0 / p1)
    if kind == _DETERMINISTIC:
        return p0
    return samples[np.random.randint(0, samples.shape[0])]


@njit(cache=True)
def _draw_job_count_ir(kind, p0, p1, samples, u):
    if kind == _EXPONENTIAL:
        return np.random.poisson(p0 * u)
    if kind == _DETERMINISTIC:
        return np.int64(u / p0)
    total = 0.0
    count = np.int64(0)
    while True:
        total += _draw_duration_ir(kind, p0, p1, samples)
        if total > u:
            return count
        count += 1


@njit(cache=True)
def _step_tree_ir(b, x, action, pack):
    """Tree-search transition: like `_step_core` minus the filter bookkeeping."""
    caps, p_obs, arrival, service, reward = pack
    a_kind, a_p0, a_p1, a_samples = arrival
    s_kind, s_p0, s_p1, s_flat, s_off = service
    r_kind, r_chi, r_kappa, mu = reward

    n = b.shape[0]
    u = _draw_duration_ir(a_kind, a_p0, a_p1, a_samples)
    b_next = np.empty(n, dtype=np.int64)
    x_next = np.empty(n, dtype=np.int64)
    seen = np.empty(n, dtype=np.int64)
    for i in range(n):
        k = _draw_job_count_ir(
            s_kind[i], s_p0[i], s_p1[i], s_flat[s_off[i]:s_off[i + 1]], u
        )
        leave = min(b[i], k)
        rest = b[i] - leave
        if i == action and rest < caps[i]:
            rest += 1
        b_next[i] = rest
        avail = leave + x[i]
        seen[i] = np.random.binomial(avail, p_obs[i])
        x_next[i] = avail - seen[i]
    r = _reward_core(r_kind, r_chi, r_kappa, b_next, caps, mu)
    return b_next, x_next, seen, r


@njit(cache=True)
def _rollout_ir(b, depth, gamma, pack):
    """Discounted return of a uniform-random-action playout of `depth` epochs.

    Fillings evolve independently of the ack bookkeeping and every reward kind
    reads fillings only, so the playout skips the thinning draws entirely.
    """
    caps, p_obs, arrival, service, reward = pack
    a_kind, a_p0, a_p1, a_samples = arrival
    s_kind, s_p0, s_p1, s_flat, s_off = service
    r_kind, r_chi, r_kappa, mu = reward

    n = b.shape[0]
    cur = b.copy()
    total = 0.0
    disc = 1.0
    for _ in range(depth):
        action = np.random.randint(0, n)
        u = _draw_duration_ir(a_kind, a_p0, a_p1, a_samples)
        for i in range(n):
            k = _draw_job_count_ir(
                s_kind[i], s_p0[i], s_p1[i], s_flat[s_off[i]:s_off[i + 1]], u
            )
            rest = cur[i] - min(cur[i], k)
            if i == action and rest < caps[i]:
                rest += 1
            cur[i] = rest
        total += disc * _reward_core(r_kind, r_chi, r_kappa, cur, caps, mu)
        disc *= gamma
    return total


class GenStep(NamedTuple):
    """Result of one generative transition.

    ``available`` is the per-queue count of acknowledgements in flight during
    the epoch (departures this epoch plus the backlog), which is exactly the
    trial count of the observation's binomial thinning; the belief filter
    needs it to weight particles.  ``dropped`` flags a routed job lost to a
    full buffer.
    """

    state: AugmentedState
    observation: Observation
    reward: float
    available: np.ndarray
    dropped: bool


def sample_duration(spec: DistributionSpec, rng: np.random.Generator) -> float:
    """Draw one duration from the spec."""
    kind, p0, p1, samples = spec._encode()
    return float(_draw_duration(kind, p0, p1, samples, rng))


def sample_durations(
    spec: DistributionSpec, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized `sample_duration` (plain numpy; used by trace tooling and tests)."""
    if spec.kind == "exponential":
        return rng.exponential(1.0 / spec.rate, size)
    if spec.kind == "gamma":
        return rng.gamma(spec.shape, 1.0 / spec.rate, size)
    if spec.kind == "pareto":
        return spec.scale * rng.random(size) ** (-1.0 / spec.tail_index)
    if spec.kind == "deterministic":
        return np.full(size, spec.value)
    return rng.choice(np.asarray(spec.samples), size=size, replace=True)


def job_count_pmf_mm(arrival_rate: float, service_rate: float, k: int) -> float:
    """P(exactly k jobs can be served in one inter-arrival interval), both exponential.

    With exponential inter-arrivals (rate lam) and exponential services (rate
    mu) the count is geometric starting at 0:
    P(K=k) = (mu/(lam+mu))^k * (lam/(lam+mu)).
    """
    if arrival_rate <= 0 or service_rate <= 0:
        raise ValueError("rates must be > 0")
    if k < 0:
        return 0.0
    q = service_rate / (arrival_rate + service_rate)
    return q**k * (arrival_rate / (arrival_rate + service_rate))


def sample_job_count(
    service: DistributionSpec, inter_arrival: float, rng: np.random.Generator
) -> int:
    """Number of service completions that fit in a given inter-arrival interval.

    Memoryless per-epoch approximation: no residual service is carried between
    calls.
    """
    if inter_arrival <= 0:
        raise ValueError("inter_arrival must be > 0")
    kind, p0, p1, samples = service._encode()
    return int(_draw_job_count(kind, p0, p1, samples, inter_arrival, rng))


def sample_ack_observation(
    available: int, p: float, rng: np.random.Generator
) -> int:
    """Binomial thinning of the acknowledgements available this epoch."""
    return int(rng.binomial(available, p))


def step_generative(
    state: AugmentedState,
    action: Action,
    model: ModelParams,
    rng: np.random.Generator,
) -> GenStep:
    """Simulate one epoch: serve, route, and thin acknowledgements.

    Fillings update as b' = min(max(b - k, 0) + e_a, cap) with the routed job
    lost (flagged, not enqueued) when its queue is still full after this
    epoch's departures.  Acks conserve: min(b, k) + x == x' + y'.
    """
    b_next, x_next, seen, avail, r, dropped = _step_core(
        state.b, state.x, action, model._pack, rng
    )
    return GenStep(
        state=AugmentedState(b=b_next, x=x_next, y=seen.copy()),
        observation=seen,
        reward=float(r),
        available=avail,
        dropped=bool(dropped),
    )
