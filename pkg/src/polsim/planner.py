"""Belief-driven Monte Carlo tree search over routing actions.

One planning call runs a budget of simulated episodes from particles of the
current belief: each episode descends the tree picking actions by UCT,
branches on the simulated acknowledgement observation, expands one leaf, and
scores it with a uniform-random playout.  The chosen action is the root child
with the highest mean discounted return.  After acting and observing, the
subtree consistent with (action, observation) is promoted to the root and all
siblings are discarded.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .belief import Belief
from .model import (
    AugmentedState,
    ModelParams,
    Observation,
    _rollout_ir,
    _seed_internal,
    _step_tree_ir,
)


@dataclass
class PlannerParams:
    """Search-budget and objective knobs.

    ``n_simulations`` is the per-decision episode count; set ``time_budget``
    (seconds) to spend wall-clock time instead, which mirrors deployment but
    is machine-dependent.  ``belief_budget`` is the filter's simulation budget
    per update (defaults to ``n_particles``).
    """

    depth: int = 10
    uct_c: float = 1.0
    n_simulations: int = 500
    gamma: float = 0.95
    n_particles: int = 1000
    time_budget: Optional[float] = None
    belief_budget: Optional[int] = None
    reuse_tree: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.uct_c <= 0.0:
            raise ValueError("uct_c must be > 0")
        if self.n_simulations < 1:
            raise ValueError("n_simulations must be >= 1")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")


class ActionEdge:
    """Statistics of one action under a history node."""

    __slots__ = ("visits", "value", "children")

    def __init__(self):
        self.visits = 0
        self.value = 0.0
        self.children: dict[bytes, SearchNode] = {}


class SearchNode:
    """History node; lazily expands one edge per action."""

    __slots__ = ("visits", "edges")

    def __init__(self):
        self.visits = 0
        self.edges: Optional[list[ActionEdge]] = None


class SearchTree:
    """Root holder so the tree can survive across decisions (reuse + pruning)."""

    __slots__ = ("root", "last_sim_count")

    def __init__(self, root: Optional[SearchNode] = None):
        self.root = root if root is not None else SearchNode()
        self.last_sim_count = 0

    def node_count(self) -> int:
        total = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            total += 1
            if node.edges is not None:
                for edge in node.edges:
                    stack.extend(edge.children.values())
        return total


def _obs_key(observation: np.ndarray) -> bytes:
    return np.ascontiguousarray(observation, dtype=np.int64).tobytes()


def uct_select(node: SearchNode, uct_c: float, rng: np.random.Generator) -> int:
    """Pick the action maximizing value + uct_c * sqrt(ln(N) / n).

    Unvisited actions score infinity and are tried first; exact ties are
    broken uniformly at random.
    """
    edges = node.edges
    unvisited = [a for a, e in enumerate(edges) if e.visits == 0]
    if unvisited:
        if len(unvisited) == 1:
            return unvisited[0]
        return unvisited[int(rng.integers(len(unvisited)))]
    log_n = math.log(node.visits)
    best_score = -math.inf
    best: list[int] = []
    for a, e in enumerate(edges):
        score = e.value + uct_c * math.sqrt(log_n / e.visits)
        if score > best_score:
            best_score = score
            best = [a]
        elif score == best_score:
            best.append(a)
    if len(best) == 1:
        return best[0]
    return best[int(rng.integers(len(best)))]


def _simulate(node, b, x, depth, n_actions, uct_c, gamma, pack, rng):
    """One episode from `node`; returns (action taken at this node, return)."""
    node.visits += 1
    if node.edges is None:
        node.edges = [ActionEdge() for _ in range(n_actions)]
    a = uct_select(node, uct_c, rng)
    edge = node.edges[a]
    b2, x2, obs, r = _step_tree_ir(b, x, a, pack)
    child = edge.children.get(obs.tobytes()) if depth > 1 else None
    if child is None:
        if depth > 1:
            edge.children[obs.tobytes()] = SearchNode()
        g = r + gamma * _rollout_ir(b2, depth - 1, gamma, pack)
    else:
        g = r + gamma * _simulate(
            child, b2, x2, depth - 1, n_actions, uct_c, gamma, pack, rng
        )[1]
    edge.visits += 1
    edge.value += (g - edge.value) / edge.visits
    return a, g


def plan(
    belief: Belief,
    model: ModelParams,
    params: PlannerParams,
    rng: np.random.Generator,
    tree: Optional[SearchTree] = None,
    trace: Optional[list] = None,
) -> int:
    """Run the search budget from the belief and return the best root action.

    ``tree`` carries statistics across decisions when given (see
    `advance_root`); otherwise a throwaway tree is used.  ``trace``, when
    provided, collects (root_action, discounted_return) per episode for
    offline verification of the backed-up values.
    """
    if tree is None:
        tree = SearchTree()
    root = tree.root
    n_actions = model.n_queues
    pack = model._pack
    _seed_internal(int(rng.integers(0, 2**32 - 1)))

    sims = 0
    if params.time_budget is None:
        particle_idx = rng.integers(0, belief.n_particles, size=params.n_simulations)
        for i in particle_idx:
            a, g = _simulate(
                root, belief.b[i], belief.x[i], params.depth,
                n_actions, params.uct_c, params.gamma, pack, rng,
            )
            if trace is not None:
                trace.append((a, g))
            sims += 1
    else:
        deadline = time.perf_counter() + params.time_budget
        while sims == 0 or time.perf_counter() < deadline:
            i = int(rng.integers(0, belief.n_particles))
            a, g = _simulate(
                root, belief.b[i], belief.x[i], params.depth,
                n_actions, params.uct_c, params.gamma, pack, rng,
            )
            if trace is not None:
                trace.append((a, g))
            sims += 1
    tree.last_sim_count = sims

    best_value = -math.inf
    best: list[int] = []
    for a, edge in enumerate(root.edges):
        if edge.visits == 0:
            continue
        if edge.value > best_value:
            best_value = edge.value
            best = [a]
        elif edge.value == best_value:
            best.append(a)
    if not best:
        return int(rng.integers(n_actions))
    if len(best) == 1:
        return best[0]
    return best[int(rng.integers(len(best)))]


def rollout(
    state: AugmentedState,
    depth_remaining: int,
    model: ModelParams,
    gamma: float,
    rng: np.random.Generator,
) -> float:
    """Discounted return of a uniform-random playout from ``state``.

    Fillings evolve independently of the acknowledgement counters and all
    reward kinds read fillings only, so the playout tracks fillings alone.
    """
    if depth_remaining < 0:
        raise ValueError("depth_remaining must be >= 0")
    if depth_remaining == 0:
        return 0.0
    _seed_internal(int(rng.integers(0, 2**32 - 1)))
    return float(_rollout_ir(state.b, depth_remaining, gamma, model._pack))


def advance_root(
    tree: SearchTree, taken: int, observed: Observation
) -> SearchTree:
    """Promote the (taken, observed) child to the root, discarding siblings.

    Returns a fresh tree rooted at an empty node when that child was never
    simulated.  The next `plan` call supplies the updated belief as the root's
    particle source.
    """
    root = tree.root
    child = None
    if root.edges is not None:
        child = root.edges[taken].children.get(_obs_key(observed))
    return SearchTree(root=child)
