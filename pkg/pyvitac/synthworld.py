"""A deterministic two dimensional insertion world where touch reveals what
vision cannot.

An effector moves in the unit box towards a hidden target.  The cameras see
the effector, but only the cell of a coarse grid (of side `quantization`) the
target lies in, while the success tolerance is tighter than half a cell.
Fingertip force/torque readings follow a smooth bump around the target whose
shear components point at it, so a policy has to use touch to finish the
job.

Phases only move forward: approach -> align (first contact) -> insert
(within tolerance) -> done (a step started in insert ends within tolerance).
"""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from pyvitac.errors import ConfigError
from pyvitac.kinematics import ForwardKinematics
from pyvitac.utilities import _log, mix_seed, rng_for


APPROACH = 'approach'
ALIGN = 'align'
INSERT = 'insert'
DONE = 'done'
PHASES = (APPROACH, ALIGN, INSERT, DONE)

DEADBAND = 1e-12
CHANNELS_PER_FINGERTIP = 6
TASK_NAME = 'synth_insertion'

# R2 low discrepancy sequence, from the plastic number
PLASTIC = 1.32471795724474602596
R2_ALPHA = np.array([1.0 / PLASTIC, 1.0 / (PLASTIC * PLASTIC)])
TARGET_KEY = 0x5EED
START_KEY = 0x57A7
NOISE_KEY = 0x0015E


class WorldConfig(object):
    """Constants of the world.

    Keyword Args:
        quantization      -- side of the grid cells the target is drawn in
        tolerance         -- success distance, must be below quantization / 2
        bump_width        -- width of the tactile bump
        max_step          -- largest effector move per step
        contact_threshold -- bump strength that counts as contact
        horizon           -- step budget of an episode
        dt                -- seconds per step
        margin            -- keep targets and starts this far from the edges
        noise             -- std of gaussian noise on tactile readings
        views             -- (height, width, channels) of each camera view
        tactile_channels  -- C, six per fingertip
        proprio_groups    -- proprio layout, the first group (left arm) is
                             driven by the effector
    """

    def __init__(self, quantization=0.25, tolerance=0.05, bump_width=0.15,
                 max_step=0.05, contact_threshold=0.05, horizon=60, dt=0.1,
                 margin=0.1, noise=0.0, views=((16, 16, 1), (16, 16, 1)),
                 tactile_channels=12, proprio_groups=(3, 0, 3, 0, 0)):
        self.quantization = float(quantization)
        self.tolerance = float(tolerance)
        self.bump_width = float(bump_width)
        self.max_step = float(max_step)
        self.contact_threshold = float(contact_threshold)
        self.horizon = int(horizon)
        self.dt = float(dt)
        self.margin = float(margin)
        self.noise = float(noise)
        self.views = [tuple(int(d) for d in view) for view in views]
        self.tactile_channels = int(tactile_channels)
        self.proprio_groups = [int(g) for g in proprio_groups]

        if not self.tolerance < self.quantization / 2.0:
            raise ConfigError(
                "tolerance must be below half the quantization, otherwise vision "
                "alone can localize the target and touch is not needed",
                context={'tolerance': self.tolerance, 'quantization': self.quantization})
        if min(self.quantization, self.tolerance, self.bump_width, self.max_step,
               self.contact_threshold, self.dt) <= 0:
            raise ConfigError("world constants must be positive")
        if not 0 <= self.margin < 0.5 or self.noise < 0 or self.horizon <= 0:
            raise ConfigError("margin must lie in [0, 0.5), noise and horizon must be "
                              "nonnegative and positive")
        if self.tactile_channels <= 0 or self.tactile_channels % CHANNELS_PER_FINGERTIP:
            raise ConfigError("tactile_channels must be a positive multiple of %d"
                              % CHANNELS_PER_FINGERTIP)
        if not self.views:
            raise ConfigError("at least one camera view is needed")
        if self.proprio_groups[0] < ForwardKinematics.n_joints:
            raise ConfigError("the left arm group drives the effector and needs %d joints"
                              % ForwardKinematics.n_joints)

    @property
    def fingertips(self):
        return self.tactile_channels // CHANNELS_PER_FINGERTIP

    @property
    def proprio_dim(self):
        return sum(self.proprio_groups)


class WorldState(object):
    """Effector and target positions, contact flag, phase and step index"""

    def __init__(self, effector, target, contact=False, phase=APPROACH, step=0):
        self.effector = np.array(effector, dtype=np.float64)
        self.target = np.array(target, dtype=np.float64)
        self.contact = bool(contact)
        self.phase = phase
        self.step = int(step)

    def copy(self):
        return WorldState(self.effector, self.target, self.contact, self.phase, self.step)

    @property
    def distance(self):
        return float(np.linalg.norm(self.target - self.effector))

    def __repr__(self):
        return "<WorldState step=%d phase=%s effector=%s>" % (
            self.step, self.phase, np.round(self.effector, 4).tolist())


class SynthWorld(object):
    """Dynamics, sensors and renderer of the insertion world.

    Args:
        config -- a WorldConfig

    Keyword Args:
        seed -- seed of the tactile noise (unused when noise is 0)
    """

    def __init__(self, config, seed=0):
        self.config = config
        self.seed = seed
        self.fk = ForwardKinematics()

    ### Sensors

    def bump(self, effector, target):
        offset = np.asarray(target) - np.asarray(effector)
        width = self.config.bump_width
        return math.exp(-float(offset @ offset) / (2.0 * width * width))

    def tactile(self, state):
        """Raw tactile frame [C]: per fingertip force xyz then torque xyz"""
        cfg = self.config
        strength = self.bump(state.effector, state.target)
        rel = (state.target - state.effector) / cfg.bump_width
        frame = np.empty(cfg.tactile_channels)
        for k in range(cfg.fingertips):
            phi = 2.0 * math.pi * k / cfg.fingertips
            c, s = math.cos(phi), math.sin(phi)
            shear_x = strength * (c * rel[0] - s * rel[1])
            shear_y = strength * (s * rel[0] + c * rel[1])
            frame[6 * k:6 * k + 6] = (shear_x, shear_y, strength,
                                      -0.5 * shear_y, 0.5 * shear_x,
                                      0.5 * strength * c)
        if cfg.noise > 0:
            frame = frame + rng_for(self.seed, state.step, NOISE_KEY).normal(
                0.0, cfg.noise, size=frame.shape)
        return frame

    def quantized_target(self, target):
        """Center of the grid cell holding the target"""
        q = self.config.quantization
        cells = np.floor(np.asarray(target) / q)
        return np.clip((cells + 0.5) * q, 0.0, 1.0)

    def _pixel(self, point, height, width):
        col = min(max(int(point[0] * width), 0), width - 1)
        row = min(max(int((1.0 - point[1]) * height), 0), height - 1)
        return row, col

    def _cell_mask(self, target, height, width):
        q = self.config.quantization
        low = np.floor(np.asarray(target) / q) * q
        xs = (np.arange(width) + 0.5) / width
        ys = 1.0 - (np.arange(height) + 0.5) / height
        in_x = (xs >= low[0]) & (xs < low[0] + q)
        in_y = (ys >= low[1]) & (ys < low[1] + q)
        mask = np.outer(in_y, in_x)
        if not mask.any():
            row, col = self._pixel(self.quantized_target(target), height, width)
            mask[row, col] = True
        return mask

    def render(self, state):
        """One image per view: even views show the effector as a single
        pixel, odd views the target's grid cell.  A lone view shows both,
        the cell at 0.5."""
        images = []
        single = len(self.config.views) == 1
        for i, (height, width, channels) in enumerate(self.config.views):
            image = np.zeros((height, width, channels))
            if single or i % 2 == 1:
                cell = self._cell_mask(state.target, height, width)
                image[cell] = 0.5 if single else 1.0
            if single or i % 2 == 0:
                row, col = self._pixel(state.effector, height, width)
                image[row, col] = 1.0
            images.append(image)
        return images

    def joint_frame(self, point):
        """A proprio-structured frame whose left arm joints place the tool
        at `point`; every other group is zero"""
        frame = np.zeros(self.config.proprio_dim)
        frame[:self.fk.n_joints] = self.fk.inverse(point)
        return frame

    def proprio(self, state):
        return self.joint_frame(state.effector)

    def hold_action(self, state):
        return self.joint_frame(state.effector)

    ### Dynamics

    def _advance_phase(self, phase, effector, target):
        cfg = self.config
        if phase == APPROACH and self.bump(effector, target) > cfg.contact_threshold:
            phase = ALIGN
        if phase == ALIGN and np.linalg.norm(target - effector) < cfg.tolerance:
            phase = INSERT
        return phase

    def initial_state(self, effector, target):
        effector = np.asarray(effector, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        contact = self.bump(effector, target) > self.config.contact_threshold
        return WorldState(effector, target, contact,
                          self._advance_phase(APPROACH, effector, target), 0)

    def step(self, state, action):
        """Applies an action frame.

        Actions are absolute joint targets, not joint velocities: the
        all-zero frame drives the effector towards the tool tip of a
        straight arm, outside the box.  Only frames whose left arm joints
        put the tool tip on the current effector, such as
        hold_action(state), leave a state in place.

        Args:
            state  -- the current WorldState (left unchanged)
            action -- joint target frame [P]; the effector moves towards the
                      tool position of the left arm joints by at most
                      max_step

        Returns:
            (next state, tactile frame, images, proprio frame), observed at
            the next state
        """
        cfg = self.config
        desired = self.fk.position(np.asarray(action)[:self.fk.n_joints])
        delta = desired - state.effector
        norm = float(np.linalg.norm(delta))
        if norm <= DEADBAND or state.phase == DONE:
            effector = state.effector.copy()
        else:
            if norm > cfg.max_step:
                delta = delta * (cfg.max_step / norm)
            effector = np.clip(state.effector + delta, 0.0, 1.0)

        target = state.target
        if state.phase == INSERT:
            close = np.linalg.norm(target - effector) < cfg.tolerance
            phase = DONE if close else INSERT
        elif state.phase == DONE:
            phase = DONE
        else:
            phase = self._advance_phase(state.phase, effector, target)
        contact = state.contact or self.bump(effector, target) > cfg.contact_threshold
        nxt = WorldState(effector, target, contact, phase, state.step + 1)
        return nxt, self.tactile(nxt), self.render(nxt), self.proprio(nxt)

    def succeeded(self, state):
        return state.phase == DONE and state.distance < self.config.tolerance


def expert_action(world, state, tactile):
    """The scripted demonstrator.

    Approach: pure pursuit towards the center of the target's visible grid
    cell.  Align: step by bump_width * (f_x, f_y) / f_z read from the first
    fingertip, which points at the target.  Insert and done: hold still.

    Args:
        world   -- the SynthWorld
        state   -- the current WorldState
        tactile -- the raw tactile frame observed at `state`
    """
    cfg = world.config
    effector = state.effector
    if state.phase == APPROACH:
        offset = world.quantized_target(state.target) - effector
    elif state.phase == ALIGN:
        fx, fy, fz = tactile[0], tactile[1], tactile[2]
        if fz <= 0:
            return world.hold_action(state)
        offset = cfg.bump_width * np.array([fx, fy]) / fz
    else:
        return world.hold_action(state)
    distance = float(np.linalg.norm(offset))
    if distance > cfg.max_step:
        offset = offset * (cfg.max_step / distance)
    return world.joint_frame(np.clip(effector + offset, 0.0, 1.0))


class Episode(object):
    """One recorded demonstration.  Frame i holds the observations at state
    i and the action taken there; stepping the last action ends the episode.

    Args:
        task             -- task name
        seed             -- the episode's own seed
        dt               -- seconds per step
        initial_effector -- start position
        target           -- hidden target position
        images           -- list per view of arrays [N, H, W, C]
        tactile          -- raw tactile frames [N, C]
        proprio          -- proprio frames [N, P]
        actions          -- action frames [N, P]
        success          -- whether the final state succeeded
    """

    def __init__(self, task, seed, dt, initial_effector, target, images, tactile,
                 proprio, actions, success):
        self.task = task
        self.seed = int(seed)
        self.dt = float(dt)
        self.initial_effector = np.asarray(initial_effector, dtype=np.float64)
        self.target = np.asarray(target, dtype=np.float64)
        self.images = [np.asarray(image, dtype=np.float64) for image in images]
        self.tactile = np.asarray(tactile, dtype=np.float64)
        self.proprio = np.asarray(proprio, dtype=np.float64)
        self.actions = np.asarray(actions, dtype=np.float64)
        self.success = bool(success)

    @property
    def length(self):
        return self.actions.shape[0]

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, Episode):
            return NotImplemented
        return (self.task == other.task and self.seed == other.seed
                and self.dt == other.dt and self.success == other.success
                and np.array_equal(self.initial_effector, other.initial_effector)
                and np.array_equal(self.target, other.target)
                and len(self.images) == len(other.images)
                and all(np.array_equal(a, b) for a, b in zip(self.images, other.images))
                and np.array_equal(self.tactile, other.tactile)
                and np.array_equal(self.proprio, other.proprio)
                and np.array_equal(self.actions, other.actions))

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result


def record_episode(world, state, act, task=TASK_NAME, seed=0):
    """Runs a policy function act(world, state, tactile) -> action frame
    from `state` until done or out of steps, recording every frame"""
    initial = state.copy()
    images = [[] for _ in world.config.views]
    tactile_frames, proprio_frames, actions = [], [], []
    tactile = world.tactile(state)
    rendered = world.render(state)
    proprio = world.proprio(state)
    while state.phase != DONE and len(actions) < world.config.horizon:
        action = act(world, state, tactile)
        for store, image in zip(images, rendered):
            store.append(image)
        tactile_frames.append(tactile)
        proprio_frames.append(proprio)
        actions.append(action)
        state, tactile, rendered, proprio = world.step(state, action)
    views = world.config.views
    return Episode(
        task, seed, world.config.dt, initial.effector, initial.target,
        [np.array(store) if store else np.zeros((0,) + tuple(view))
         for store, view in zip(images, views)],
        np.array(tactile_frames).reshape(-1, world.config.tactile_channels),
        np.array(proprio_frames).reshape(-1, world.config.proprio_dim),
        np.array(actions).reshape(-1, world.config.proprio_dim),
        world.succeeded(state))


def replay(world, episode):
    """Re-executes an episode's actions from its initial state.

    Returns:
        (tactile [N, C], images per view, proprio [N, P], final state)
    """
    state = world.initial_state(episode.initial_effector, episode.target)
    tactile = [world.tactile(state)]
    images = [[image] for image in world.render(state)]
    proprio = [world.proprio(state)]
    for action in episode.actions:
        state, frame, rendered, joints = world.step(state, action)
        tactile.append(frame)
        for store, image in zip(images, rendered):
            store.append(image)
        proprio.append(joints)
    count = episode.length
    return (np.array(tactile[:count]), [np.array(store[:count]) for store in images],
            np.array(proprio[:count]), state)


def target_for(seed, index, margin):
    """Target of episode `index`: point index + 1 of an R2 sequence shifted
    by a seed-dependent rotation, scaled into [margin, 1 - margin]^2"""
    shift = rng_for(seed, TARGET_KEY).random(2)
    point = np.mod(shift + (index + 1) * R2_ALPHA, 1.0)
    return margin + (1.0 - 2.0 * margin) * point


def start_for(seed, index, margin):
    """Start position of episode `index`, drawn from its own sub-seed"""
    sub_seed = mix_seed(seed, index)
    return rng_for(sub_seed, START_KEY).uniform(margin, 1.0 - margin, size=2), sub_seed


def initial_state_for(world, seed, index):
    """Start state of episode `index` of a run seeded with `seed`"""
    start, _ = start_for(seed, index, world.config.margin)
    return world.initial_state(start, target_for(seed, index, world.config.margin))


def generate_episode(config, seed, index):
    """Records the expert on episode `index`.  The episode keeps its sub-seed,
    which also seeds the tactile noise."""
    _, sub_seed = start_for(seed, index, config.margin)
    world = SynthWorld(config, seed=sub_seed)
    state = initial_state_for(world, seed, index)
    return record_episode(world, state, expert_action, seed=sub_seed)


def generate_dataset(n_episodes, seed, config, workers=1):
    """Generates expert demonstrations.

    Args:
        n_episodes -- how many episodes, at least one
        seed       -- dataset seed; episode i uses splitmix64(seed ^ i * golden)
        config     -- a WorldConfig

    Keyword Args:
        workers -- generation threads; the result does not depend on it

    Returns:
        list of Episode in index order
    """
    if n_episodes < 1:
        raise ConfigError("at least one episode is needed", context={'n_episodes': n_episodes})
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            episodes = list(pool.map(lambda i: generate_episode(config, seed, i),
                                     range(n_episodes)))
    else:
        episodes = [generate_episode(config, seed, i) for i in range(n_episodes)]
    failures = sum(1 for e in episodes if not e.success)
    _log("generated %d episodes (seed %d, %d failed)" % (n_episodes, seed, failures),
         log_name="pyvitac.synthworld")
    return episodes
