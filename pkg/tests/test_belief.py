import logging

import numpy as np
import pytest

from polsim import (
    AugmentedState,
    DistributionSpec,
    ModelParams,
    QueueParams,
    RewardSpec,
    belief_stats,
    init_belief,
    observation_likelihood,
    sir_update,
    step_generative,
    systematic_resample,
)

from exact_filter import ExactSingleQueueFilter, belief_bx_histogram, tv_distance


def single_queue_model(lam=5.0, mu=4.0, cap=2, p=0.6):
    return ModelParams(
        arrival=DistributionSpec.exponential(lam),
        queues=(QueueParams(cap, DistributionSpec.exponential(mu), p),),
        reward=RewardSpec("queue_len_linear"),
    )


class TestInitBelief:
    def test_replication(self):
        belief = init_belief(1000, AugmentedState.empty(3))
        assert belief.n_particles == 1000
        assert np.all(belief.b == 0) and np.all(belief.x == 0)

    def test_single_particle(self):
        s = AugmentedState(b=[2, 1], x=[1, 0], y=[0, 3])
        belief = init_belief(1, s)
        assert belief.particle(0).b.tolist() == [2, 1]
        assert belief.particle(0).y.tolist() == [0, 3]

    def test_marginal_mean_is_initial(self):
        s = AugmentedState(b=[4, 7], x=[0, 0], y=[0, 0])
        belief = init_belief(64, s)
        assert belief_stats(belief).mean.tolist() == [4.0, 7.0]

    def test_rejects_zero_particles(self):
        with pytest.raises(ValueError):
            init_belief(0, AugmentedState.empty(1))


class TestObservationLikelihood:
    def test_exact_observation_no_delay(self):
        avail = np.array([3, 5])
        assert observation_likelihood(avail, np.array([3, 5]), np.array([1.0, 1.0])) == 1.0

    def test_impossible_observation(self):
        avail = np.array([3, 5])
        assert observation_likelihood(avail, np.array([4, 0]), np.array([0.5, 0.5])) == 0.0

    def test_binomial_hand_check(self):
        got = observation_likelihood(np.array([2]), np.array([1]), np.array([0.6]))
        assert got == pytest.approx(2 * 0.6 * 0.4, abs=1e-12)


class TestSystematicResample:
    def test_point_mass(self):
        rng = np.random.default_rng(0)
        idx = systematic_resample(np.array([1.0, 0.0, 0.0]), 8, rng)
        assert np.all(idx == 0)

    def test_even_split(self):
        rng = np.random.default_rng(1)
        idx = systematic_resample(np.array([0.5, 0.5]), 10, rng)
        counts = np.bincount(idx, minlength=2)
        assert counts.tolist() == [5, 5]

    def test_rejects_zero_weights(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ValueError):
            systematic_resample(np.zeros(4), 4, rng)


class TestSirUpdate:
    def test_output_size_and_consistency(self):
        model = single_queue_model(cap=5)
        rng = np.random.default_rng(3)
        belief = init_belief(500, AugmentedState.empty(1))
        # drive a chain from the model itself so observations are feasible
        state = AugmentedState.empty(1)
        for _ in range(30):
            step = step_generative(state, 0, model, rng)
            state = step.state
            belief = sir_update(belief, 0, step.observation, model, 500, rng)
            assert belief.n_particles == 500
            assert np.all(belief.y == step.observation)
            assert np.all(belief.x >= 0)
            if not belief.degenerate:
                # survivors could have produced the observation
                assert np.all(belief.x + belief.y >= step.observation)

    def test_no_delay_pins_observation(self):
        model = single_queue_model(cap=4, p=1.0)
        rng = np.random.default_rng(4)
        state = AugmentedState.empty(1)
        belief = init_belief(200, state)
        for _ in range(20):
            step = step_generative(state, 0, model, rng)
            state = step.state
            belief = sir_update(belief, 0, step.observation, model, 400, rng)
            assert not belief.degenerate
            assert np.all(belief.y == step.observation)
            assert np.all(belief.x == 0)

    def test_zero_budget_propagates_without_weighting(self):
        model = single_queue_model(cap=5)
        rng = np.random.default_rng(5)
        belief = init_belief(300, AugmentedState.empty(1))
        updated = sir_update(belief, 0, np.array([0]), model, 0, rng)
        assert updated.n_particles == 300
        assert not updated.degenerate

    def test_degenerate_observation_falls_back(self, caplog):
        model = single_queue_model(cap=2)
        rng = np.random.default_rng(6)
        belief = init_belief(100, AugmentedState.empty(1))
        with caplog.at_level(logging.DEBUG, logger="polsim.belief"):
            updated = sir_update(belief, 0, np.array([50]), model, 200, rng)
        assert updated.degenerate
        assert updated.n_particles == 100
        assert np.all(updated.y == 50)
        assert np.all(updated.x == 0)
        assert any("degenerate" in r.message for r in caplog.records)

    def test_matches_exact_filter(self):
        lam, mu, cap, p = 5.0, 4.0, 2, 0.6
        model = single_queue_model(lam, mu, cap, p)
        rng = np.random.default_rng(7)
        oracle = ExactSingleQueueFilter(cap, lam, mu, p, x_max=60)
        n_particles = 10_000
        belief = init_belief(n_particles, AugmentedState.empty(1))
        state = AugmentedState.empty(1)
        tvs = []
        for _ in range(100):
            step = step_generative(state, 0, model, rng)
            state = step.state
            z = int(step.observation[0])
            oracle.update(z)
            belief = sir_update(belief, 0, step.observation, model, n_particles, rng)
            hist = belief_bx_histogram(belief, cap, x_max=60)
            tvs.append(tv_distance(hist, oracle.bx_distribution()))
        assert oracle.lost_mass < 1e-9
        assert float(np.mean(tvs)) < 0.05

    def test_tracking_degrades_with_delay(self):
        """Matched chains: tracking error at p=1.0 beats p=0.1."""
        errors = {}
        for p in (1.0, 0.1):
            model = ModelParams(
                arrival=DistributionSpec.exponential(3.0),
                queues=tuple(
                    QueueParams(10, DistributionSpec.exponential(1.0), p)
                    for _ in range(3)
                ),
                reward=RewardSpec("queue_len_linear"),
            )
            rng = np.random.default_rng(8)
            action_rng = np.random.default_rng(9)
            state = AugmentedState.empty(3)
            belief = init_belief(500, state)
            errs = []
            for _ in range(400):
                action = int(action_rng.integers(3))
                step = step_generative(state, action, model, rng)
                state = step.state
                belief = sir_update(belief, action, step.observation, model, 1000, rng)
                errs.append(np.abs(belief_stats(belief).mean - state.b).mean())
            errors[p] = float(np.mean(errs))
        assert errors[1.0] < errors[0.1]


class TestBeliefStats:
    def test_identical_particles(self):
        belief = init_belief(50, AugmentedState(b=[3, 1], x=[0, 0], y=[0, 0]))
        st = belief_stats(belief)
        assert st.mean.tolist() == [3.0, 1.0]
        assert st.p10.tolist() == [3.0, 1.0]
        assert st.p90.tolist() == [3.0, 1.0]

    def test_two_particle_mean(self):
        belief = init_belief(2, AugmentedState(b=[0], x=[0], y=[0]))
        belief.b[1, 0] = 10
        assert belief_stats(belief).mean[0] == 5.0

    def test_percentiles_bracket_mean(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            b = rng.integers(0, 11, size=(200, 4))
            belief = init_belief(200, AugmentedState.empty(4))
            belief.b = b
            st = belief_stats(belief)
            assert np.all(st.p10 <= st.mean + 1e-12)
            assert np.all(st.mean <= st.p90 + 1e-12)
