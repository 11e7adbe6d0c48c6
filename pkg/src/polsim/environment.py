"""Ground-truth queueing network: event-driven, exact residual service.

Unlike the planner's per-epoch generative model, the environment carries the
remaining work of an in-service job across epochs, so response times and drop
counts are those of the real continuous-time system.  For exponential service
the two coincide in distribution.

Common random numbers: every strategy replaying a given run seed consumes the
same pre-drawn inter-arrival sequence, the same per-queue service-requirement
stream (attached to draw position at the queue, not to jobs, so the coupling
survives divergent routing), and the same per-queue acknowledgement coins.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import DistributionSpec, ModelParams, Observation, sample_durations
from .rewards import _reward_core


@dataclass
class CrnStreams:
    """Per-run random streams shared by all strategies replaying the run."""

    inter_arrivals: np.ndarray
    service_rngs: list[np.random.Generator]
    ack_rngs: list[np.random.Generator]
    service_log: list[list[float]]
    _service_specs: list[DistributionSpec]

    @classmethod
    def from_seed(
        cls, run_seed: int, arrival: DistributionSpec, services, n_jobs: int
    ) -> "CrnStreams":
        arrival_rng = np.random.default_rng(np.random.SeedSequence([run_seed, 0]))
        return cls(
            inter_arrivals=sample_durations(arrival, n_jobs, arrival_rng),
            service_rngs=[
                np.random.default_rng(np.random.SeedSequence([run_seed, 1, i]))
                for i in range(len(services))
            ],
            ack_rngs=[
                np.random.default_rng(np.random.SeedSequence([run_seed, 2, i]))
                for i in range(len(services))
            ],
            service_log=[[] for _ in services],
            _service_specs=list(services),
        )

    def next_service(self, queue: int) -> float:
        kind, p0, p1, samples = self._service_specs[queue]._encode()
        rng = self.service_rngs[queue]
        if kind == 0:
            v = rng.exponential(1.0 / p0)
        elif kind == 1:
            v = rng.gamma(p0, 1.0 / p1)
        elif kind == 2:
            v = p0 * rng.random() ** (-1.0 / p1)
        elif kind == 3:
            v = p0
        else:
            v = samples[rng.integers(samples.shape[0])]
        self.service_log[queue].append(v)
        return float(v)


@dataclass
class EnvState:
    """Mutable simulation state for one (run, strategy) replay."""

    model: ModelParams
    queues: list[deque] = field(init=False)
    ack_pool: np.ndarray = field(init=False)
    clock: float = 0.0
    arrivals_used: int = 0
    jobs_arrived: int = 0
    jobs_dropped: int = 0
    routed: np.ndarray = field(init=False)
    dropped_at: np.ndarray = field(init=False)
    completed: np.ndarray = field(init=False)
    observed_cum: np.ndarray = field(init=False)
    response_times: list = field(default_factory=list)
    reward_trace: list = field(default_factory=list)

    def __post_init__(self):
        n = self.model.n_queues
        self.queues = [deque() for _ in range(n)]
        self.ack_pool = np.zeros(n, dtype=np.int64)
        self.routed = np.zeros(n, dtype=np.int64)
        self.dropped_at = np.zeros(n, dtype=np.int64)
        self.completed = np.zeros(n, dtype=np.int64)
        self.observed_cum = np.zeros(n, dtype=np.int64)

    def fillings(self) -> np.ndarray:
        return np.array([len(q) for q in self.queues], dtype=np.int64)

    @property
    def residual_jobs(self) -> int:
        return int(sum(len(q) for q in self.queues))


class EnvStep(NamedTuple):
    observation: Observation
    fillings: np.ndarray
    reward: float
    dropped: bool


@dataclass
class RunMetrics:
    """Outcome aggregates of one replay; response times cover completed jobs only."""

    jobs_arrived: int
    jobs_dropped: int
    drop_rate: float
    response_times: np.ndarray
    cumulative_reward: float
    reward_trace: np.ndarray
    residual_jobs: int
    decision_latencies: np.ndarray = field(
        default_factory=lambda: np.empty(0, dtype=np.float64)
    )

    @property
    def mean_response(self) -> float:
        return float(np.mean(self.response_times)) if self.response_times.size else float("nan")

    @property
    def p95_response(self) -> float:
        return (
            float(np.percentile(self.response_times, 95))
            if self.response_times.size
            else float("nan")
        )


def make_env(model: ModelParams, n_jobs: int, run_seed: int) -> tuple[EnvState, CrnStreams]:
    """Empty system at clock zero plus the run's shared random streams."""
    if n_jobs < 1:
        raise ValueError("n_jobs must be >= 1")
    streams = CrnStreams.from_seed(
        run_seed, model.arrival, [q.service for q in model.queues], n_jobs
    )
    return EnvState(model=model), streams


def step_env(env: EnvState, streams: CrnStreams, action: int) -> EnvStep:
    """Route the arriving job, run all servers for one inter-arrival, observe.

    The job is lost (drop recorded) when its queue is full at the routing
    instant.  During the epoch each server works through its FIFO, carrying
    residual work; completions push an acknowledgement into the queue's pool.
    At the epoch end every pooled ack is seen independently with the queue's
    ack probability.  The reward is evaluated on the post-epoch fillings.
    """
    model = env.model
    if env.arrivals_used >= streams.inter_arrivals.shape[0]:
        raise RuntimeError("run complete: all arrivals consumed")

    dropped = False
    env.jobs_arrived += 1
    queue = env.queues[action]
    if len(queue) >= model.queues[action].buffer_capacity:
        dropped = True
        env.jobs_dropped += 1
        env.dropped_at[action] += 1
    else:
        queue.append([env.clock, None])
        env.routed[action] += 1

    u = float(streams.inter_arrivals[env.arrivals_used])
    env.arrivals_used += 1
    t_end = env.clock + u

    for i, q in enumerate(env.queues):
        t = env.clock
        while q:
            job = q[0]
            if job[1] is None:
                job[1] = streams.next_service(i)
            if t + job[1] <= t_end:
                t += job[1]
                q.popleft()
                env.response_times.append(t - job[0])
                env.completed[i] += 1
                env.ack_pool[i] += 1
            else:
                job[1] -= t_end - t
                break
    env.clock = t_end

    n = model.n_queues
    z = np.zeros(n, dtype=np.int64)
    for i in range(n):
        pooled = int(env.ack_pool[i])
        if pooled:
            seen = int(
                np.count_nonzero(
                    streams.ack_rngs[i].random(pooled) < model.ack_probs[i]
                )
            )
            z[i] = seen
            env.ack_pool[i] -= seen
            env.observed_cum[i] += seen

    fillings = env.fillings()
    r_kind, r_chi, r_kappa = model.reward._encode()
    reward = float(
        _reward_core(
            r_kind, r_chi, r_kappa, fillings, model.buffer_caps, model.service_rates
        )
    )
    env.reward_trace.append(reward)
    return EnvStep(observation=z, fillings=fillings, reward=reward, dropped=dropped)


def finalize(env: EnvState, decision_latencies=None) -> RunMetrics:
    """Aggregate counters; jobs still queued at the horizon are reported as
    residuals and appear in neither drops nor response times."""
    arrived = env.jobs_arrived
    return RunMetrics(
        jobs_arrived=arrived,
        jobs_dropped=env.jobs_dropped,
        drop_rate=env.jobs_dropped / arrived if arrived else float("nan"),
        response_times=np.asarray(env.response_times, dtype=np.float64),
        cumulative_reward=float(np.sum(env.reward_trace)),
        reward_trace=np.asarray(env.reward_trace, dtype=np.float64),
        residual_jobs=env.residual_jobs,
        decision_latencies=np.asarray(
            decision_latencies if decision_latencies is not None else [],
            dtype=np.float64,
        ),
    )
