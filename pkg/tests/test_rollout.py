import numpy as np
import pytest

from pyvitac.errors import ConfigError
from pyvitac.policy import PolicyModel
from pyvitac.rollout import (ExpertChunkPolicy, LearnedPolicy, RandomPolicy,
                             evaluate, rollout)
from pyvitac.synthworld import DONE, SynthWorld, WorldConfig, initial_state_for


@pytest.fixture(scope='module')
def world():
    return SynthWorld(WorldConfig())


def success_rate(results):
    return sum(1 for r in results if r.success) / float(len(results))


def test_expert_always_succeeds():
    results = evaluate(ExpertChunkPolicy(8), WorldConfig(), 10, 1000, replan_every=8,
                       blend_horizon=4)
    assert success_rate(results) == 1.0


def test_random_policy_rarely_succeeds():
    results = evaluate(RandomPolicy(8, seed=3), WorldConfig(), 20, 1000, replan_every=8)
    assert success_rate(results) <= 0.25


def test_rollout_stops_when_done(world):
    result = rollout(ExpertChunkPolicy(8), world, initial_state_for(world, 0, 0),
                     replan_every=4)
    assert result.phase == DONE
    assert result.steps < world.config.horizon
    assert len(result.actions) == result.steps
    assert len(result.trajectory) == result.steps + 1
    assert result.final_distance < world.config.tolerance
    assert result.min_distance <= result.final_distance


def test_replanning_count(world):
    result = rollout(ExpertChunkPolicy(8), world, initial_state_for(world, 0, 3),
                     horizon=16, replan_every=4)
    assert result.replans == (result.steps + 3) // 4


def test_replanning_past_the_chunk(world):
    with pytest.raises(ConfigError):
        rollout(ExpertChunkPolicy(4), world, initial_state_for(world, 0, 0), replan_every=5)
    with pytest.raises(ConfigError):
        rollout(ExpertChunkPolicy(4), world, initial_state_for(world, 0, 0), replan_every=0)


def test_blending_consistent_chunks_changes_nothing(world):
    state = initial_state_for(world, 2, 1)
    plain = rollout(ExpertChunkPolicy(8), world, state, replan_every=2, blend_horizon=0)
    blended = rollout(ExpertChunkPolicy(8), world, state, replan_every=2, blend_horizon=2)
    np.testing.assert_array_equal(plain.trajectory, blended.trajectory)


def test_evaluate_is_deterministic():
    policy = RandomPolicy(4, seed=1)
    first = evaluate(policy, WorldConfig(), 3, 7, replan_every=2, horizon=20)
    second = evaluate(policy, WorldConfig(), 3, 7, replan_every=2, horizon=20)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.trajectory, b.trajectory)


def test_learned_policy_runs(micro_config):
    model = PolicyModel(micro_config.policy_config())
    results = evaluate(LearnedPolicy(model), micro_config.world_config(), 2, 0,
                       replan_every=2, blend_horizon=2, horizon=10)
    assert len(results) == 2
    assert all(0 < r.steps <= 10 for r in results)
    assert all(r.actions.shape[1] == micro_config.world_config().proprio_dim
               for r in results)
