"""Experiment orchestration: CRN-coupled runs per strategy, CSVs, summaries.

A run is one arrival/service sample path; every strategy in the experiment
replays it against the same streams.  Results are written as CSV files that
are self-sufficient: the summary is always recomputed from them.
"""

from __future__ import annotations

import time
import zlib
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .baselines import FULL_INFO_KINDS, LIMITED_INFO_KINDS, Strategy, decide_full_info, decide_limited_info
from .belief import belief_stats, init_belief, sir_update
from .environment import EnvState, finalize, make_env, step_env
from .model import AugmentedState, DistributionSpec, ModelParams, QueueParams
from .planner import PlannerParams, SearchTree, advance_root, plan
from .rewards import RewardSpec

RUNS_CSV = "runs.csv"
RESPONSES_CSV = "responses.csv"
HEATMAP_CSV = "heatmap.csv"
BELIEF_TRACE_CSV = "belief_trace.csv"

_RUNS_HEADER = (
    "run_id,strategy,seed,eta,jobs_arrived,jobs_dropped,drop_rate,"
    "mean_response,p95_response,cumulative_reward"
)


def _fmt(v: float) -> str:
    """Fixed 9-significant-digit float formatting so reruns are byte-identical."""
    return format(float(v), ".9g")


@dataclass
class ExperimentConfig:
    """Complete description of one experiment (see README for the file keys)."""

    n_queues: int
    arrival: DistributionSpec
    queues: list[QueueParams]
    reward: RewardSpec
    planner: PlannerParams
    strategies: list[Strategy]
    t_m: int = 20
    t_e: int = 2000
    base_seed: int = 0
    output_dir: Path = Path("results")
    workers: int = 1
    write_response_times: bool = True
    write_heatmap: bool | None = None
    write_belief_trace: bool = False

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.n_queues < 1:
            raise ValueError("config field 'n_queues': must be >= 1")
        if len(self.queues) != self.n_queues:
            raise ValueError(
                f"config field 'queues': expected {self.n_queues} entries, "
                f"got {len(self.queues)}"
            )
        if self.t_m < 1 or self.t_e < 1:
            raise ValueError("config fields 't_m'/'t_e': must be >= 1")
        if not self.strategies:
            raise ValueError("config field 'strategies': must not be empty")
        for s in self.strategies:
            if s.kind == "djsq" and s.d > self.n_queues:
                raise ValueError("config field 'strategies': djsq d exceeds n_queues")
        if self.write_heatmap is None:
            self.write_heatmap = self.n_queues == 2

    def model(self) -> ModelParams:
        return ModelParams(
            arrival=self.arrival, queues=tuple(self.queues), reward=self.reward
        )

    def offered_load(self) -> float:
        return self.model().offered_load()


@dataclass
class RunOutput:
    """Everything one run contributes to the result files."""

    run_id: int
    run_rows: list = field(default_factory=list)
    response_rows: list = field(default_factory=list)
    heatmap_counts: Counter = field(default_factory=Counter)
    belief_rows: list = field(default_factory=list)


def _decision_rng(config: ExperimentConfig, run_id: int, name: str) -> np.random.Generator:
    # decision randomness is namespaced away from the CRN streams so routing
    # choices never perturb the shared arrival/service sample path
    salt = zlib.crc32(name.encode())
    return np.random.default_rng(
        np.random.SeedSequence([config.base_seed, run_id, 3, salt])
    )


def _replay_pol(config, model, run_id, strategy, env, streams, out: RunOutput):
    params = config.planner
    rng = _decision_rng(config, run_id, strategy.name)
    belief = init_belief(params.n_particles, AugmentedState.empty(model.n_queues))
    tree = SearchTree()
    budget = params.belief_budget if params.belief_budget is not None else params.n_particles
    latencies = []
    for epoch in range(config.t_e):
        pre = env.fillings()
        t0 = time.perf_counter()
        action = plan(belief, model, params, rng, tree=tree)
        latencies.append(time.perf_counter() - t0)
        step = step_env(env, streams, action)
        belief = sir_update(belief, action, step.observation, model, budget, rng)
        tree = advance_root(tree, action, step.observation) if params.reuse_tree else SearchTree()
        if config.write_heatmap and model.n_queues == 2:
            out.heatmap_counts[(strategy.name, int(pre[0]), int(pre[1]), action)] += 1
        if config.write_belief_trace:
            st = belief_stats(belief)
            for q in range(model.n_queues):
                out.belief_rows.append(
                    (run_id, epoch, q, int(step.fillings[q]),
                     st.mean[q], st.p10[q], st.p90[q])
                )
    return latencies


def _replay_baseline(config, model, run_id, strategy, env, streams, out: RunOutput):
    rng = _decision_rng(config, run_id, strategy.name)
    n = model.n_queues
    last_acks = np.zeros(n, dtype=np.int64)
    used_last = np.zeros(n, dtype=bool)
    limited = strategy.kind in LIMITED_INFO_KINDS
    for _ in range(config.t_e):
        pre = env.fillings()
        if limited:
            action = decide_limited_info(strategy, last_acks, used_last, rng)
        else:
            action = decide_full_info(strategy, pre, model.service_rates, rng)
        step = step_env(env, streams, action)
        last_acks = step.observation
        used_last = np.zeros(n, dtype=bool)
        used_last[action] = True
        if config.write_heatmap and n == 2:
            out.heatmap_counts[(strategy.name, int(pre[0]), int(pre[1]), action)] += 1
    return []


def run_one(config: ExperimentConfig, run_id: int) -> RunOutput:
    """Replay every configured strategy against the run's shared streams."""
    model = config.model()
    eta = model.offered_load()
    seed = config.base_seed + run_id
    out = RunOutput(run_id=run_id)
    for strategy in config.strategies:
        env, streams = make_env(model, config.t_e, seed)
        if strategy.kind == "pol":
            latencies = _replay_pol(config, model, run_id, strategy, env, streams, out)
        elif strategy.kind in FULL_INFO_KINDS + LIMITED_INFO_KINDS:
            latencies = _replay_baseline(config, model, run_id, strategy, env, streams, out)
        else:
            raise ValueError(f"unknown strategy kind {strategy.kind!r}")
        metrics = finalize(env, latencies)
        out.run_rows.append(
            {
                "run_id": run_id,
                "strategy": strategy.name,
                "seed": seed,
                "eta": eta,
                "jobs_arrived": metrics.jobs_arrived,
                "jobs_dropped": metrics.jobs_dropped,
                "drop_rate": metrics.drop_rate,
                "mean_response": metrics.mean_response,
                "p95_response": metrics.p95_response,
                "cumulative_reward": metrics.cumulative_reward,
            }
        )
        if config.write_response_times:
            out.response_rows.extend(
                (strategy.name, run_id, rt) for rt in metrics.response_times
            )
    return out


def _run_one_star(args) -> RunOutput:
    return run_one(*args)


def run_experiment(config: ExperimentConfig):
    """Execute all runs, write the CSVs, and return the summary rows.

    Runs are independent and may execute on worker processes; output files are
    ordered by run id regardless, so worker count never changes file content.
    """
    outdir = config.output_dir
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise RuntimeError(f"cannot create output dir {outdir}: {e}") from e

    jobs = [(config, r) for r in range(config.t_m)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outputs = list(pool.map(_run_one_star, jobs))
    else:
        outputs = [run_one(*job) for job in jobs]
    outputs.sort(key=lambda o: o.run_id)

    with (outdir / RUNS_CSV).open("w") as fh:
        fh.write(_RUNS_HEADER + "\n")
        for out in outputs:
            for row in out.run_rows:
                fh.write(
                    f"{row['run_id']},{row['strategy']},{row['seed']},"
                    f"{_fmt(row['eta'])},{row['jobs_arrived']},{row['jobs_dropped']},"
                    f"{_fmt(row['drop_rate'])},{_fmt(row['mean_response'])},"
                    f"{_fmt(row['p95_response'])},{_fmt(row['cumulative_reward'])}\n"
                )
    if config.write_response_times:
        with (outdir / RESPONSES_CSV).open("w") as fh:
            fh.write("strategy,run_id,response_time\n")
            for out in outputs:
                for name, rid, rt in out.response_rows:
                    fh.write(f"{name},{rid},{_fmt(rt)}\n")
    if config.write_heatmap:
        total = Counter()
        for out in outputs:
            total.update(out.heatmap_counts)
        with (outdir / HEATMAP_CSV).open("w") as fh:
            fh.write("strategy,b1,b2,action,count\n")
            for (name, b1, b2, action), count in sorted(total.items()):
                fh.write(f"{name},{b1},{b2},{action},{count}\n")
    if config.write_belief_trace:
        with (outdir / BELIEF_TRACE_CSV).open("w") as fh:
            fh.write("run_id,epoch,queue,true_b,belief_mean,belief_p10,belief_p90\n")
            for out in outputs:
                for rid, epoch, q, tb, bm, p10, p90 in out.belief_rows:
                    fh.write(
                        f"{rid},{epoch},{q},{tb},{_fmt(bm)},{_fmt(p10)},{_fmt(p90)}\n"
                    )

    return summarize(outdir)


def _read_runs_csv(path: Path) -> list[dict]:
    rows = []
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        if header != _RUNS_HEADER.split(","):
            raise RuntimeError(f"{path}: unexpected header {header}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != len(header):
                raise RuntimeError(f"{path}: malformed row {line!r}")
            rows.append(dict(zip(header, parts)))
    return rows


def summarize(results_dir) -> list[dict]:
    """Aggregate per-strategy statistics from the result CSVs alone."""
    results_dir = Path(results_dir)
    runs_path = results_dir / RUNS_CSV
    if not runs_path.exists():
        raise RuntimeError(f"no results: {runs_path} not found")
    rows = _read_runs_csv(runs_path)
    if not rows:
        raise RuntimeError(f"no results: {runs_path} has no data rows")

    order = []
    for row in rows:
        if row["strategy"] not in order:
            order.append(row["strategy"])
    summary = []
    for name in order:
        drops = np.array([float(r["drop_rate"]) for r in rows if r["strategy"] == name])
        responses = np.array(
            [float(r["mean_response"]) for r in rows if r["strategy"] == name]
        )
        rewards = np.array(
            [float(r["cumulative_reward"]) for r in rows if r["strategy"] == name]
        )
        summary.append(
            {
                "strategy": name,
                "runs": int(drops.size),
                "drop_median": float(np.median(drops)),
                "drop_p5": float(np.percentile(drops, 5)),
                "drop_p95": float(np.percentile(drops, 95)),
                "mean_response": float(np.nanmean(responses)),
                "mean_cumulative_reward": float(np.mean(rewards)),
            }
        )
    return summary


def format_summary(summary: list[dict]) -> str:
    lines = [
        f"{'strategy':<10} {'runs':>4} {'drop median':>12} {'drop [p5,p95]':>22} "
        f"{'mean resp':>10} {'mean reward':>12}"
    ]
    for s in summary:
        band = f"[{_fmt(s['drop_p5'])}, {_fmt(s['drop_p95'])}]"
        lines.append(
            f"{s['strategy']:<10} {s['runs']:>4} {_fmt(s['drop_median']):>12} "
            f"{band:>22} {_fmt(s['mean_response']):>10} "
            f"{_fmt(s['mean_cumulative_reward']):>12}"
        )
    return "\n".join(lines)


def sweep(config: ExperimentConfig, etas) -> dict[float, list[dict]]:
    """Rerun the experiment with the arrival rate scaled to each offered load."""
    total_mu = float(np.sum(config.model().service_rates))
    results = {}
    for eta in etas:
        if eta <= 0:
            raise ValueError("offered load targets must be > 0")
        arrival = config.arrival.scaled_to_mean(1.0 / (eta * total_mu))
        sub = replace(
            config,
            arrival=arrival,
            output_dir=config.output_dir / f"eta_{eta:g}",
        )
        results[eta] = run_experiment(sub)
    return results


# --- config file handling ---------------------------------------------------


def _spec_from_dict(d, where: str) -> DistributionSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError(f"config field '{where}': expected a mapping with 'kind'")
    kind = d["kind"]
    try:
        if kind == "exponential":
            return DistributionSpec.exponential(d["rate"])
        if kind == "gamma":
            return DistributionSpec.gamma(d["shape"], d["rate"])
        if kind == "pareto":
            return DistributionSpec.pareto(d["scale"], d["tail_index"])
        if kind == "deterministic":
            return DistributionSpec.deterministic(d["value"])
        if kind == "empirical":
            return DistributionSpec.empirical(d["samples"])
    except KeyError as e:
        raise ValueError(f"config field '{where}': missing key {e}") from None
    except ValueError as e:
        raise ValueError(f"config field '{where}': {e}") from None
    raise ValueError(f"config field '{where}.kind': unknown kind {kind!r}")


def _queue_from_dict(d, where: str) -> QueueParams:
    try:
        return QueueParams(
            buffer_capacity=int(d["buffer_capacity"]),
            service=_spec_from_dict(d["service"], f"{where}.service"),
            ack_probability=float(d["ack_probability"]),
        )
    except KeyError as e:
        raise ValueError(f"config field '{where}': missing key {e}") from None


def _strategy_from_entry(entry) -> Strategy:
    if isinstance(entry, str):
        return Strategy(kind=entry)
    if isinstance(entry, dict):
        return Strategy(
            kind=entry.get("kind", ""),
            d=int(entry.get("d", 2)),
            explore_prob=float(entry.get("explore_prob", 0.2)),
        )
    raise ValueError(f"config field 'strategies': bad entry {entry!r}")


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from plain data (parsed YAML)."""
    if not isinstance(d, dict):
        raise ValueError("config root must be a mapping")
    required = ["n_queues", "arrival", "queues", "strategies"]
    for key in required:
        if key not in d:
            raise ValueError(f"config field '{key}': required")

    queues_raw = d["queues"]
    if isinstance(queues_raw, dict):
        count = int(queues_raw.get("count", d["n_queues"]))
        template = {k: v for k, v in queues_raw.items() if k != "count"}
        queues = [_queue_from_dict(template, "queues") for _ in range(count)]
    else:
        queues = [
            _queue_from_dict(q, f"queues[{i}]") for i, q in enumerate(queues_raw)
        ]

    reward_raw = d.get("reward", {"kind": "combined"})
    try:
        reward = RewardSpec(
            kind=reward_raw.get("kind", "combined"),
            chi=float(reward_raw.get("chi", 2.0)),
            kappa=float(reward_raw.get("kappa", 100.0)),
        )
    except ValueError as e:
        raise ValueError(f"config field 'reward': {e}") from None

    planner_raw = d.get("planner", {})
    try:
        planner = PlannerParams(
            depth=int(planner_raw.get("depth", 10)),
            uct_c=float(planner_raw.get("uct_c", 1.0)),
            n_simulations=int(planner_raw.get("n_simulations", 500)),
            gamma=float(planner_raw.get("gamma", 0.95)),
            n_particles=int(planner_raw.get("n_particles", 1000)),
            time_budget=planner_raw.get("time_budget"),
            belief_budget=planner_raw.get("belief_budget"),
            reuse_tree=bool(planner_raw.get("reuse_tree", True)),
        )
    except ValueError as e:
        raise ValueError(f"config field 'planner': {e}") from None

    strategies_raw = d["strategies"]
    if isinstance(strategies_raw, str):
        strategies_raw = [s.strip() for s in strategies_raw.split(",") if s.strip()]
    strategies = [_strategy_from_entry(e) for e in strategies_raw]

    return ExperimentConfig(
        n_queues=int(d["n_queues"]),
        arrival=_spec_from_dict(d["arrival"], "arrival"),
        queues=queues,
        reward=reward,
        planner=planner,
        strategies=strategies,
        t_m=int(d.get("t_m", 20)),
        t_e=int(d.get("t_e", 2000)),
        base_seed=int(d.get("base_seed", 0)),
        output_dir=Path(d.get("output_dir", "results")),
        workers=int(d.get("workers", 1)),
        write_response_times=bool(d.get("write_response_times", True)),
        write_heatmap=d.get("write_heatmap"),
        write_belief_trace=bool(d.get("write_belief_trace", False)),
    )


def apply_overrides(d: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides onto a config mapping."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r}: expected KEY=VALUE")
        key, _, raw = item.partition("=")
        value = yaml.safe_load(raw)
        node = d
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {item!r}: {part} is not a mapping")
        node[parts[-1]] = value
    return d


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise RuntimeError(f"config file not found: {path}")
    with path.open() as fh:
        data = yaml.safe_load(fh)
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)
