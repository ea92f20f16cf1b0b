import numpy as np
import pytest

from pyvitac.errors import ConfigError
from pyvitac.synthworld import (ALIGN, APPROACH, DONE, INSERT, PHASES,
                                SynthWorld, WorldConfig, WorldState,
                                expert_action, generate_dataset,
                                generate_episode, initial_state_for, replay,
                                target_for)


@pytest.fixture(scope='module')
def world():
    return SynthWorld(WorldConfig())


class TestConfig:

    def test_tolerance_must_be_below_half_a_cell(self):
        with pytest.raises(ConfigError):
            WorldConfig(quantization=0.05, tolerance=0.05)
        with pytest.raises(ConfigError):
            WorldConfig(quantization=0.2, tolerance=0.1)

    def test_fingertip_channels(self):
        with pytest.raises(ConfigError):
            WorldConfig(tactile_channels=8)

    def test_derived(self):
        config = WorldConfig(tactile_channels=18, proprio_groups=(7, 17, 7, 17, 2))
        assert config.fingertips == 3
        assert config.proprio_dim == 50


class TestSensors:

    def test_first_fingertip_points_at_the_target(self, world):
        state = WorldState([0.4, 0.45], [0.47, 0.41])
        frame = world.tactile(state)
        fx, fy, fz = frame[:3]
        step = world.config.bump_width * np.array([fx, fy]) / fz
        np.testing.assert_allclose(step, state.target - state.effector, atol=1e-12)
        assert frame.shape == (12,)

    def test_touch_fades_with_distance(self, world):
        near = world.tactile(WorldState([0.5, 0.5], [0.52, 0.5]))
        far = world.tactile(WorldState([0.1, 0.1], [0.9, 0.9]))
        assert near[2] > 0.9
        assert far[2] < 1e-10

    def test_noise_is_seeded(self):
        config = WorldConfig(noise=0.01)
        state = WorldState([0.4, 0.4], [0.5, 0.5], step=3)
        clean = SynthWorld(WorldConfig()).tactile(state)
        first = SynthWorld(config, seed=2).tactile(state)
        np.testing.assert_array_equal(first, SynthWorld(config, seed=2).tactile(state))
        assert not np.array_equal(first, clean)
        assert not np.array_equal(first, SynthWorld(config, seed=3).tactile(state))

    def test_cameras_only_see_the_target_cell(self, world):
        a = WorldState([0.2, 0.2], [0.51, 0.52])
        b = WorldState([0.2, 0.2], [0.55, 0.57])
        for left, right in zip(world.render(a), world.render(b)):
            np.testing.assert_array_equal(left, right)
        assert not np.array_equal(world.tactile(WorldState([0.5, 0.5], [0.51, 0.52])),
                                  world.tactile(WorldState([0.5, 0.5], [0.55, 0.57])))

    def test_views(self, world):
        effector_view, target_view = world.render(WorldState([0.3, 0.6], [0.8, 0.2]))
        assert effector_view.shape == (16, 16, 1)
        assert np.count_nonzero(effector_view) == 1
        # a 0.25 cell covers a 4 x 4 block of a 16 pixel view
        assert np.count_nonzero(target_view) == 16

    def test_a_lone_view_shows_both(self):
        world = SynthWorld(WorldConfig(views=[(16, 16, 1)]))
        (image,) = world.render(WorldState([0.1, 0.9], [0.8, 0.2]))
        assert sorted(set(image.ravel().tolist())) == [0.0, 0.5, 1.0]

    def test_quantized_target_is_within_half_a_cell_diagonal(self, world):
        for target in np.random.default_rng(0).uniform(0.0, 1.0, size=(50, 2)):
            center = world.quantized_target(target)
            assert np.linalg.norm(center - target) <= 0.25 * np.sqrt(2.0) / 2 + 1e-12


class TestDynamics:

    def test_holding_is_a_fixed_point(self, world):
        state = world.initial_state([0.3, 0.7], [0.6, 0.2])
        nxt, _, _, _ = world.step(state, world.hold_action(state))
        np.testing.assert_array_equal(nxt.effector, state.effector)
        assert nxt.step == 1

    def test_a_zero_frame_is_a_joint_target(self, world):
        state = world.initial_state([0.3, 0.7], [0.6, 0.2])
        zeros = np.zeros_like(world.hold_action(state))
        nxt, _, _, _ = world.step(state, zeros)
        assert np.linalg.norm(nxt.effector - state.effector) > 0.0

    def test_steps_are_clipped(self, world):
        state = world.initial_state([0.2, 0.2], [0.8, 0.8])
        nxt, _, _, _ = world.step(state, world.joint_frame([0.9, 0.9]))
        assert np.linalg.norm(nxt.effector - state.effector) == pytest.approx(0.05)

    def test_contact_starts_alignment(self, world):
        assert world.initial_state([0.5, 0.5], [0.9, 0.9]).phase == APPROACH
        assert world.initial_state([0.5, 0.5], [0.6, 0.5]).phase == ALIGN
        assert world.initial_state([0.5, 0.5], [0.51, 0.5]).phase == INSERT

    def test_done_freezes_the_effector(self, world):
        state = WorldState([0.5, 0.5], [0.5, 0.5], True, DONE, 4)
        nxt, _, _, _ = world.step(state, world.joint_frame([0.9, 0.9]))
        np.testing.assert_array_equal(nxt.effector, state.effector)
        assert nxt.phase == DONE

    def test_expert_phases_only_move_forward(self, world):
        state = initial_state_for(world, 4, 2)
        order = [PHASES.index(state.phase)]
        while state.phase != DONE and state.step < world.config.horizon:
            action = expert_action(world, state, world.tactile(state))
            state = world.step(state, action)[0]
            order.append(PHASES.index(state.phase))
        assert order == sorted(order)
        assert world.succeeded(state)


class TestDatasets:

    def test_expert_succeeds(self):
        episodes = generate_dataset(12, 0, WorldConfig())
        assert all(e.success for e in episodes)
        assert all(0 < e.length <= 60 for e in episodes)

    def test_generation_is_deterministic(self):
        config = WorldConfig(noise=0.005)
        assert generate_dataset(3, 9, config) == generate_dataset(3, 9, config)
        assert generate_dataset(3, 9, config, workers=3) == generate_dataset(3, 9, config)
        assert generate_episode(config, 9, 0) != generate_episode(config, 10, 0)

    def test_replay_reproduces_the_observations(self):
        config = WorldConfig(noise=0.005)
        episode = generate_episode(config, 1, 5)
        tactile, images, proprio, final = replay(SynthWorld(config, seed=episode.seed), episode)
        np.testing.assert_array_equal(tactile, episode.tactile)
        np.testing.assert_array_equal(proprio, episode.proprio)
        for replayed, recorded in zip(images, episode.images):
            np.testing.assert_array_equal(replayed, recorded)
        assert final.phase == DONE

    def test_episode_layout(self):
        episode = generate_episode(WorldConfig(), 0, 0)
        n = episode.length
        assert episode.tactile.shape == (n, 12)
        assert episode.proprio.shape == (n, 6)
        assert episode.actions.shape == (n, 6)
        assert [image.shape for image in episode.images] == [(n, 16, 16, 1)] * 2
        assert episode.task == 'synth_insertion'

    def test_at_least_one_episode(self):
        with pytest.raises(ConfigError):
            generate_dataset(0, 0, WorldConfig())

    def test_targets_cover_the_box(self):
        margin = 0.1
        targets = np.array([target_for(0, i, margin) for i in range(1000)])
        assert targets.min() >= margin and targets.max() <= 1.0 - margin
        probes = np.stack(np.meshgrid(np.linspace(margin, 1 - margin, 25),
                                      np.linspace(margin, 1 - margin, 25)), -1).reshape(-1, 2)
        gaps = np.linalg.norm(probes[:, None, :] - targets[None, :, :], axis=-1).min(axis=1)
        assert gaps.max() < 0.2
