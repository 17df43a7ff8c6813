import numpy as np
import pytest

from shelm.envs import (
    CONCEPT_GRID,
    DISTRACTOR_TMAZE,
    TMAZE_MEMORY,
    EnvSpec,
    ToyEnv,
    cue_side_map,
    grid_layout,
    oracle_return,
)
from shelm.errors import ArgumentError, StateError


def tmaze_spec(store, kind=TMAZE_MEMORY, corridor=4, n_concepts=2, limit=None, seed=0):
    return EnvSpec(kind=kind, corridor_length=corridor, n_concepts=n_concepts,
                   episode_limit=limit or corridor + 1, seed=seed, store=store)


def run_episode(env, episode_seed, junction_action):
    obs = env.reset(episode_seed)
    observations = [obs]
    total = 0.0
    while True:
        res = env.step(junction_action)
        observations.append(res.observation)
        total += res.reward
        if res.done:
            return total, observations


class TestSpecValidation:
    def test_odd_concepts_rejected_for_tmaze(self, toy_store):
        with pytest.raises(ArgumentError, match="even"):
            tmaze_spec(toy_store, n_concepts=3)

    def test_episode_limit_bound(self, toy_store):
        with pytest.raises(ArgumentError):
            tmaze_spec(toy_store, corridor=5, limit=5)

    def test_needs_filler_cluster(self, toy_store):
        with pytest.raises(ArgumentError, match="clusters"):
            tmaze_spec(toy_store, n_concepts=8)

    def test_unknown_kind(self, toy_store):
        with pytest.raises(ArgumentError):
            EnvSpec(kind="labyrinth", corridor_length=3, n_concepts=2,
                    episode_limit=5, seed=0, store=toy_store)


class TestReset:
    def test_same_seeds_identical_episode(self, toy_store):
        spec = tmaze_spec(toy_store)
        a, b = ToyEnv(spec), ToyEnv(spec)
        ra, obs_a = run_episode(a, episode_seed=3, junction_action=0)
        rb, obs_b = run_episode(b, episode_seed=3, junction_action=0)
        assert ra == rb
        for oa, ob in zip(obs_a, obs_b):
            assert oa.concept_label == ob.concept_label
            np.testing.assert_array_equal(oa.features, ob.features)

    def test_cue_in_concept_set(self, toy_store):
        spec = tmaze_spec(toy_store, n_concepts=4)
        env = ToyEnv(spec)
        for s in range(20):
            obs = env.reset(s)
            assert obs.concept_label in spec.cue_labels
            assert obs.concept_label == env.cue

    def test_distinct_seeds_vary_cue(self, toy_store):
        env = ToyEnv(tmaze_spec(toy_store, n_concepts=4))
        cues = {env.reset(s).concept_label for s in range(24)}
        assert len(cues) > 1

    def test_cue_distribution_uniform(self, toy_store):
        spec = tmaze_spec(toy_store, n_concepts=4)
        env = ToyEnv(spec)
        n = 10_000
        counts = {label: 0 for label in spec.cue_labels}
        for s in range(n):
            counts[env.reset(s).concept_label] += 1
        p = 1 / 4
        sigma = np.sqrt(n * p * (1 - p))
        for label, c in counts.items():
            assert abs(c - n * p) <= 3 * sigma, (label, c)


class TestTmaze:
    def test_optimal_policy_returns_one(self, toy_store):
        spec = tmaze_spec(toy_store, corridor=5)
        side = cue_side_map(spec)
        env = ToyEnv(spec)
        for s in range(30):
            env.reset(s)
            total, _ = 0.0, None
            while True:
                res = env.step(side[env.cue])
                total += res.reward
                if res.done:
                    break
            assert total == 1.0

    def test_uniform_random_junction_is_half(self, toy_store):
        spec = tmaze_spec(toy_store, corridor=3)
        env = ToyEnv(spec)
        rng = np.random.default_rng(0)
        n = 2000
        wins = 0
        for s in range(n):
            total, _ = run_episode(env, s, junction_action=int(rng.integers(2)))
            wins += total
        sigma = np.sqrt(n * 0.25)
        assert abs(wins - n / 2) <= 3 * sigma

    def test_memoryless_constant_policy_is_half(self, toy_store):
        # sides are balanced, so always-left earns exactly 1/2 the cues
        spec = tmaze_spec(toy_store, corridor=3, n_concepts=4)
        side = cue_side_map(spec)
        assert sorted(side.values()) == [0, 0, 1, 1]

    def test_corridor_fillers_carry_no_cue_information(self, toy_store):
        spec = tmaze_spec(toy_store, corridor=6)
        env = ToyEnv(spec)
        for s in range(10):
            env.reset(s)
            labels = []
            while True:
                res = env.step(0)
                labels.append(res.observation.concept_label)
                if res.done:
                    break
            # everything after the cue is the fixed filler concept
            assert set(labels) == {spec.filler_label}

    def test_distractor_corridor_is_random_noise(self, toy_store):
        spec = tmaze_spec(toy_store, kind=DISTRACTOR_TMAZE, corridor=8, limit=9)
        env = ToyEnv(spec)
        seen = set()
        for s in range(12):
            env.reset(s)
            while True:
                res = env.step(0)
                if res.done:
                    break
                if not res.info.get("at_junction"):
                    seen.add(res.observation.concept_label)
                    assert res.observation.concept_label in spec.distractor_labels
        assert len(seen) > 1

    def test_step_after_done_raises(self, toy_store):
        env = ToyEnv(tmaze_spec(toy_store, corridor=1, limit=2))
        run_episode(env, 0, junction_action=1)
        with pytest.raises(StateError):
            env.step(0)

    def test_action_out_of_range(self, toy_store):
        env = ToyEnv(tmaze_spec(toy_store))
        env.reset(0)
        with pytest.raises(ArgumentError):
            env.step(2)

    def test_returns_bounded(self, toy_store):
        for kind in (TMAZE_MEMORY, DISTRACTOR_TMAZE):
            env = ToyEnv(tmaze_spec(toy_store, kind=kind, corridor=2))
            for s in range(40):
                total, _ = run_episode(env, s, junction_action=s % 2)
                assert 0.0 <= total <= 1.0


class TestConceptGrid:
    def grid_spec(self, store, g=3, n_concepts=2, limit=12, seed=1):
        return EnvSpec(kind=CONCEPT_GRID, corridor_length=g, n_concepts=n_concepts,
                       episode_limit=limit, seed=seed, store=store)

    def test_reaching_cue_cell_rewards_and_ends(self, toy_store):
        spec = self.grid_spec(toy_store)
        layout = grid_layout(spec)
        env = ToyEnv(spec)
        env.reset(0)
        target = next(cell for cell, label in layout.items() if label == env.cue)
        pos = (0, 0)
        total = 0.0
        for _ in range(spec.episode_limit):
            if pos[0] < target[0]:
                action, pos = 1, (pos[0] + 1, pos[1])
            elif pos[1] < target[1]:
                action, pos = 3, (pos[0], pos[1] + 1)
            elif pos[0] > target[0]:
                action, pos = 0, (pos[0] - 1, pos[1])
            else:
                action, pos = 2, (pos[0], pos[1] - 1)
            res = env.step(action)
            total += res.reward
            if res.done:
                break
        assert total == 1.0
        assert res.done

    def test_wandering_truncates_with_zero(self, toy_store):
        spec = self.grid_spec(toy_store, limit=5)
        env = ToyEnv(spec)
        env.reset(3)
        steps = 0
        while True:
            res = env.step(0)  # bump against the top wall forever
            steps += 1
            if res.done:
                break
        assert steps == 5
        assert res.reward == 0.0
        assert res.info.get("truncated")

    def test_observations_match_layout(self, toy_store):
        spec = self.grid_spec(toy_store, g=4, n_concepts=3, limit=20)
        layout = grid_layout(spec)
        env = ToyEnv(spec)
        env.reset(1)
        rng = np.random.default_rng(5)
        pos = (0, 0)
        for _ in range(10):
            action = int(rng.integers(4))
            dr, dc = ((-1, 0), (1, 0), (0, -1), (0, 1))[action]
            pos = (min(max(pos[0] + dr, 0), 3), min(max(pos[1] + dc, 0), 3))
            res = env.step(action)
            assert res.observation.concept_label == layout[pos]
            assert res.info["position"] == pos
            if res.done:
                break


class TestOracle:
    def test_tmaze_is_one(self, toy_store):
        assert oracle_return(tmaze_spec(toy_store, corridor=5)) == 1.0

    def test_distractor_is_one(self, toy_store):
        assert oracle_return(tmaze_spec(toy_store, kind=DISTRACTOR_TMAZE)) == 1.0

    def test_grid_matches_manhattan_reachability(self, toy_store):
        # open grid: optimal value is 1 iff the cue cell is within
        # episode_limit Manhattan steps of the start
        values = set()
        for seed in range(8):
            for limit in (6, 7, 8):
                spec = EnvSpec(kind=CONCEPT_GRID, corridor_length=5, n_concepts=2,
                               episode_limit=limit, seed=seed, store=toy_store)
                layout = grid_layout(spec)
                expect = []
                for cue in spec.cue_labels:
                    cell = next(c for c, lab in layout.items() if lab == cue)
                    expect.append(1.0 if abs(cell[0]) + abs(cell[1]) <= limit else 0.0)
                got = oracle_return(spec)
                assert got == pytest.approx(np.mean(expect))
                values.add(got)
        assert len(values) > 1  # the sweep exercises unreachable layouts too

    def test_grid_small_instance_value(self, toy_store):
        spec = EnvSpec(kind=CONCEPT_GRID, corridor_length=3, n_concepts=2,
                       episode_limit=12, seed=1, store=toy_store)
        assert oracle_return(spec) == 1.0

    def test_refuses_large_instances(self, toy_store):
        with pytest.raises(ArgumentError, match="oracle"):
            oracle_return(tmaze_spec(toy_store, corridor=9, limit=10))


class TestEnvAgnosticInvariants:
    def test_junction_observation_label_fixed(self, toy_store):
        spec = tmaze_spec(toy_store, corridor=2)
        env = ToyEnv(spec)
        for s in range(10):
            env.reset(s)
            env.step(0)
            res = env.step(0)
            assert res.info["at_junction"]
            assert res.observation.concept_label == spec.filler_label
