import os

import numpy as np
import pytest

from pyvitac.checkpoint import load_checkpoint
from pyvitac.config import RunConfig
from pyvitac.errors import ConfigError, FormatError, NumericError
from pyvitac.episodes import future_window, observation_at
from pyvitac.policy import GROUND_TRUTH, PREDICTED, PolicyModel, PolicyVariant
from pyvitac.synthworld import generate_dataset
from pyvitac.training import (CHECKPOINT_NAME, METRIC_COLUMNS, CurriculumSchedule,
                              OptimizerState, adam_step, curriculum_phase,
                              metrics_digest, read_metrics, train)


class TestAdam:

    def test_first_step_moves_by_the_learning_rate(self):
        params = {'w': np.array([1.0, -2.0, 0.5])}
        grads = {'w': np.array([0.3, -4.0, 1e-3])}
        updated, state = adam_step(params, grads, OptimizerState(lr=0.01))
        np.testing.assert_allclose(updated['w'] - params['w'], -0.01 * np.sign(grads['w']),
                                   rtol=1e-4)
        assert state.step == 1

    def test_inputs_are_left_alone(self):
        params = {'w': np.ones(2)}
        state = OptimizerState()
        adam_step(params, {'w': np.ones(2)}, state)
        assert params['w'].tolist() == [1.0, 1.0]
        assert state.step == 0
        assert state.first == {}

    def test_unreached_parameters_stay(self):
        params = {'w': np.ones(2), 'b': np.zeros(2)}
        updated, state = adam_step(params, {'w': np.ones(2), 'b': None}, OptimizerState())
        assert updated['b'].tolist() == [0.0, 0.0]
        assert 'b' not in state.first

    def test_non_finite_gradient(self):
        with pytest.raises(NumericError) as info:
            adam_step({'w': np.ones(2)}, {'w': np.array([1.0, np.inf])}, OptimizerState())
        assert info.value.context['parameter'] == 'w'

    def test_moments_accumulate(self):
        params = {'w': np.zeros(1)}
        state = OptimizerState(lr=0.1)
        for _ in range(3):
            params, state = adam_step(params, {'w': np.ones(1)}, state)
        assert state.step == 3
        assert params['w'][0] == pytest.approx(-0.3, rel=1e-6)


class TestCurriculum:

    def test_switch_epoch(self):
        schedule = CurriculumSchedule(100, 0.75)
        assert curriculum_phase(74, schedule) == GROUND_TRUTH
        assert curriculum_phase(75, schedule) == PREDICTED
        assert CurriculumSchedule(10, 0.75).switch_epoch == 8

    def test_whole_run_on_ground_truth(self):
        schedule = CurriculumSchedule(5, 1.0)
        assert [curriculum_phase(e, schedule) for e in range(5)] == [GROUND_TRUTH] * 5

    def test_bad_schedules(self):
        with pytest.raises(ConfigError):
            CurriculumSchedule(0)
        with pytest.raises(ConfigError):
            CurriculumSchedule(10, 1.5)
        with pytest.raises(ConfigError):
            curriculum_phase(10, CurriculumSchedule(10))


class TestTrain:

    def test_outputs(self, micro_episodes, micro_config, tmp_path):
        out = str(tmp_path / 'run')
        result = train(micro_episodes, micro_config, out)
        digest, rows = read_metrics(result.metrics_path)
        assert digest == micro_config.digest()
        assert len(rows) == micro_config.epochs
        assert all(len(row) == len(METRIC_COLUMNS) for row in rows)
        assert [row[0] for row in rows] == ['0', '1']
        assert result.checkpoint_path == os.path.join(out, CHECKPOINT_NAME)
        loaded = load_checkpoint(result.checkpoint_path, micro_config.policy_config())
        for name, values in result.model.params.arrays().items():
            np.testing.assert_array_equal(loaded.params[name].data, values)

    def test_training_is_deterministic(self, micro_episodes, micro_config, tmp_path):
        first = train(micro_episodes, micro_config, str(tmp_path / 'a'))
        second = train(micro_episodes, micro_config, str(tmp_path / 'b'))
        assert metrics_digest(first.metrics_path) == metrics_digest(second.metrics_path)
        with open(first.checkpoint_path, 'rb') as a, open(second.checkpoint_path, 'rb') as b:
            assert a.read() == b.read()

    def test_seed_changes_the_run(self, micro_episodes, micro_config):
        first = train(micro_episodes, micro_config)
        second = train(micro_episodes, micro_config, seed=1)
        assert first.final.total != second.final.total

    def test_curriculum_switch_in_the_log(self, micro_episodes, micro_config, tmp_path):
        config = micro_config.replace(epochs=4)
        _, rows = read_metrics(train(micro_episodes, config, str(tmp_path)).metrics_path)
        assert [row[1] for row in rows] == ['GroundTruthTactile'] * 3 + ['PredictedTactile']

    def test_no_feedback_stays_on_ground_truth(self, micro_episodes, micro_config):
        result = train(micro_episodes, micro_config.replace(epochs=4),
                       variant=PolicyVariant.NEXT_TOUCH_PRED)
        assert [r.phase for r in result.records] == [GROUND_TRUTH] * 4
        assert result.metrics_path is None

    def test_touchless_records_no_tactile_loss(self, micro_episodes, micro_config):
        result = train(micro_episodes, micro_config, variant=PolicyVariant.WITHOUT_TOUCH)
        assert all(r.tactile == 0.0 for r in result.records)

    def test_epoch_checkpoints(self, micro_episodes, micro_config, tmp_path):
        config = micro_config.replace(epochs=3, checkpoint_every=1)
        train(micro_episodes, config, str(tmp_path))
        names = sorted(os.listdir(str(tmp_path)))
        assert names == ['checkpoint.pvck', 'checkpoint_epoch0001.pvck',
                         'checkpoint_epoch0002.pvck', 'metrics.tsv']

    def test_empty_dataset(self, micro_config):
        with pytest.raises(FormatError):
            train([], micro_config)


def forecast_error(model, episodes):
    """Mean absolute error of a model's tactile forecast over every frame"""
    config = model.config
    errors = []
    for episode in episodes:
        for t in range(episode.length):
            predicted = model.forecast(observation_at(episode, t, config))
            target = future_window(episode.tactile, t, config.tactile_future)
            errors.append(np.abs(predicted - target).mean())
    return float(np.mean(errors))


@pytest.mark.slow
def test_desk_training_lowers_the_loss():
    config = RunConfig.desk()
    assert (config.episodes, config.epochs, config.seed) == (50, 100, 0)
    world = config.world_config()
    episodes = generate_dataset(config.episodes, config.data_seed, world)
    result = train(episodes, config)
    assert result.final.total <= result.records[0].total / 5.0
    assert result.final.ja < result.records[0].ja

    held_out = generate_dataset(5, config.data_seed + 7919, world)
    untrained = PolicyModel(result.model.config, stats=result.samples.stats)
    assert forecast_error(result.model, held_out) < 0.5 * forecast_error(untrained, held_out)
