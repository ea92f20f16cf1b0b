"""Closed loop execution of chunking policies in the synthetic world.

Every `replan_every` steps the policy is asked for a new chunk of joint
targets.  The first frames of the new chunk are cross-faded with the frames
the previous chunk still had queued, then frames are executed one per step
until the next replanning point, the task is done, or the horizon runs out.
"""

import numpy as np

from pyvitac.episodes import history, tactile_window
from pyvitac.errors import ConfigError
from pyvitac.kinematics import JOINT_LIMIT
from pyvitac.policy import ZERO_LATENT, Observation, temporal_smooth
from pyvitac.synthworld import (DONE, SynthWorld, expert_action,
                                initial_state_for)
from pyvitac.utilities import _log, mix_seed, rng_for


RANDOM_KEY = 0xA11D


class ChunkPolicy(object):
    """Base class of the policies a rollout can drive.  Subclasses return an
    array [n, P] of joint target frames from act()."""

    name = 'policy'
    observes = False

    def act(self, world, state, observation):
        raise NotImplementedError


class ExpertChunkPolicy(ChunkPolicy):
    """The scripted expert, planned `horizon` steps ahead by simulating the
    world forward from the true state"""

    name = 'expert'

    def __init__(self, horizon):
        self.horizon = int(horizon)

    def act(self, world, state, observation):
        frames = []
        tactile = world.tactile(state)
        for _ in range(self.horizon):
            action = expert_action(world, state, tactile)
            frames.append(action)
            state, tactile, _, _ = world.step(state, action)
        return np.array(frames)


class RandomPolicy(ChunkPolicy):
    """Uniformly random left arm joint targets within the joint limits"""

    name = 'random'

    def __init__(self, horizon, seed=0):
        self.horizon = int(horizon)
        self.seed = seed

    def act(self, world, state, observation):
        rng = rng_for(self.seed, world.seed, state.step, RANDOM_KEY)
        frames = np.zeros((self.horizon, world.config.proprio_dim))
        joints = world.fk.n_joints
        frames[:, :joints] = rng.uniform(-JOINT_LIMIT, JOINT_LIMIT, size=(self.horizon, joints))
        return frames


class LearnedPolicy(ChunkPolicy):
    """A trained PolicyModel queried on raw observations

    Args:
        model -- a PolicyModel carrying its normalization statistics

    Keyword Args:
        latent_mode -- 'zero' or 'sampled'
        seed        -- seed of sampled latents, mixed with the step index
    """

    name = 'learned'
    observes = True

    def __init__(self, model, latent_mode=ZERO_LATENT, seed=0):
        self.model = model
        self.latent_mode = latent_mode
        self.seed = seed

    @property
    def config(self):
        return self.model.config

    def act(self, world, state, observation):
        return self.model.infer(observation, self.latent_mode,
                                seed=mix_seed(self.seed, state.step))


class RolloutResult(object):
    """Outcome of one closed loop run"""

    def __init__(self, success, phase, steps, min_distance, final_distance,
                 trajectory, actions, replans):
        self.success = success
        self.phase = phase
        self.steps = steps
        self.min_distance = min_distance
        self.final_distance = final_distance
        self.trajectory = trajectory
        self.actions = actions
        self.replans = replans

    def __repr__(self):
        return "<RolloutResult success=%s phase=%s steps=%d final_distance=%.4f>" % (
            self.success, self.phase, self.steps, self.final_distance)


def _observation(config, images, tactile_log, proprio_log):
    t = len(tactile_log) - 1
    return Observation(images,
                       tactile_window(np.array(tactile_log), t, config.tactile_history),
                       history(np.array(proprio_log), t, config.proprio_history))


def rollout(policy, world, state, horizon=None, replan_every=1, blend_horizon=0):
    """Runs a policy in closed loop.

    Args:
        policy -- a ChunkPolicy
        world  -- the SynthWorld
        state  -- the start WorldState (left unchanged)

    Keyword Args:
        horizon       -- step budget, the world's horizon when None
        replan_every  -- steps between policy calls, at most the chunk
                         length; equal to it the chunks run open loop
        blend_horizon -- frames cross-faded into each new chunk, capped by
                         the frames the previous chunk still had queued

    Returns:
        A RolloutResult; success means done within the horizon and within
        tolerance at the end
    """
    if replan_every < 1:
        raise ConfigError("replan_every must be positive", context={'value': replan_every})
    if blend_horizon < 0:
        raise ConfigError("blend_horizon must be nonnegative", context={'value': blend_horizon})
    horizon = world.config.horizon if horizon is None else int(horizon)
    tactile_log = [world.tactile(state)]
    proprio_log = [world.proprio(state)]
    images = world.render(state)
    trajectory = [state.effector.copy()]
    executed = []
    min_distance = state.distance
    plan, cursor, replans = None, 0, 0

    for _ in range(horizon):
        if state.phase == DONE:
            break
        if plan is None or cursor >= replan_every or cursor >= len(plan):
            observation = None
            if policy.observes:
                observation = _observation(policy.config, images, tactile_log, proprio_log)
            fresh = np.asarray(policy.act(world, state, observation), dtype=np.float64)
            if replan_every > len(fresh):
                raise ConfigError("replan_every exceeds the chunk length",
                                  context={'replan_every': replan_every, 'chunk': len(fresh)})
            if plan is not None:
                tail = plan[cursor:]
                fresh = temporal_smooth(tail, fresh, min(blend_horizon, len(tail), len(fresh)))
            plan, cursor = fresh, 0
            replans += 1
        action = plan[cursor]
        cursor += 1
        state, tactile, images, proprio = world.step(state, action)
        tactile_log.append(tactile)
        proprio_log.append(proprio)
        trajectory.append(state.effector.copy())
        executed.append(action)
        min_distance = min(min_distance, state.distance)

    return RolloutResult(world.succeeded(state), state.phase, len(executed), min_distance,
                         state.distance, np.array(trajectory), np.array(executed), replans)


def evaluate(policy, world_config, runs, seed, replan_every=1, blend_horizon=0,
             horizon=None):
    """Rolls a policy out from `runs` start states drawn from `seed`.

    Returns:
        list of RolloutResult, in run order
    """
    results = []
    for index in range(runs):
        world = SynthWorld(world_config, seed=mix_seed(seed, index))
        state = initial_state_for(world, seed, index)
        results.append(rollout(policy, world, state, horizon, replan_every, blend_horizon))
    successes = sum(1 for r in results if r.success)
    _log("%s policy: %d/%d successful runs" % (policy.name, successes, runs),
         log_name="pyvitac.rollout")
    return results
