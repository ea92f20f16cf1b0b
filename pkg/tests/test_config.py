import os

import pytest

from pyvitac.config import KEYS, RunConfig, describe_keys
from pyvitac.errors import ConfigError, VariantError
from pyvitac.losses import LossWeights


CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, 'configs')


class TestParsing:

    def test_defaults(self):
        config = RunConfig()
        assert config.epochs == 100
        assert config.switch_fraction == 0.75
        assert config.runs == 10
        assert config.views == [(16, 16, 1), (16, 16, 1)]

    def test_values_and_comments(self):
        config = RunConfig.parse("epochs = 3  # short\nviews = 8x8x1\npatch_size = 4\n"
                                 "share_fusion = yes\n")
        assert config.epochs == 3
        assert config.views == [(8, 8, 1)]
        assert config.share_fusion is True

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.parse("epochs = 3\nlearning_rat = 0.1\n")
        assert info.value.context['line'] == 2

    def test_duplicate_key(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.parse("seed = 1\n\nseed = 2\n")
        assert info.value.context['line'] == 3
        assert info.value.context['first_line'] == 1

    def test_malformed_value(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.parse("# header\nepochs = many\n")
        assert info.value.context['line'] == 2

    def test_line_without_a_value(self):
        with pytest.raises(ConfigError):
            RunConfig.parse("epochs\n")

    def test_non_finite_float(self):
        with pytest.raises(ConfigError):
            RunConfig.parse("learning_rate = nan\n")

    def test_unknown_variant(self):
        with pytest.raises(VariantError):
            RunConfig(values={'variant': 'huge'})


class TestDigest:

    def test_key_order_does_not_matter(self):
        first = RunConfig.parse("seed = 3\nepochs = 7\n")
        second = RunConfig.parse("epochs = 7\nseed = 3\n")
        assert first.digest() == second.digest()

    def test_text_round_trip(self):
        config = RunConfig.micro(learning_rate=0.1, share_fusion=True)
        assert RunConfig.parse(config.to_text()).digest() == config.digest()

    def test_any_value_changes_the_digest(self):
        assert RunConfig(values={'seed': 1}).digest() != RunConfig().digest()

    def test_model_digest_follows_the_architecture_only(self):
        assert RunConfig(values={'epochs': 3}).model_digest() == RunConfig().model_digest()
        assert RunConfig(values={'model_dim': 32}).model_digest() != RunConfig().model_digest()

    @pytest.mark.parametrize('name', ['desk', 'micro', 'robot'])
    def test_shipped_files_match_the_factories(self, name):
        shipped = RunConfig.load(os.path.join(CONFIG_DIR, name + '.conf'))
        assert shipped.digest() == getattr(RunConfig, name)().digest()


class TestValidation:

    def test_replanning_within_the_chunk(self):
        with pytest.raises(ConfigError):
            RunConfig.micro(replan_every=5)

    def test_information_gap(self):
        with pytest.raises(ConfigError):
            RunConfig(values={'quantization': 0.05, 'tolerance': 0.05})

    def test_fingertip_channels(self):
        with pytest.raises(ConfigError):
            RunConfig(values={'tactile_channels': 10})

    def test_switch_fraction_range(self):
        with pytest.raises(ConfigError):
            RunConfig(values={'switch_fraction': 0.0})

    def test_robot_scale_checks_shapes(self):
        with pytest.raises(ConfigError):
            RunConfig(values={'scale': 'robot'})
        assert RunConfig.robot().action_horizon == 100

    def test_replace_revalidates(self):
        with pytest.raises(ConfigError):
            RunConfig.micro().replace(workers=0)


class TestDerived:

    def test_policy_config(self):
        policy = RunConfig.micro().policy_config(variant='naive_touch', seed=9)
        assert policy.variant == 'naive_touch'
        assert policy.seed == 9
        assert policy.model_dim == 8

    def test_loss_weights(self):
        weights = RunConfig(values={'w_kl': 2.0}).loss_weights()
        assert isinstance(weights, LossWeights)
        assert weights.w_kl == 2.0

    def test_world_config(self):
        world = RunConfig.micro().world_config()
        assert world.tactile_channels == 6
        assert world.fingertips == 1
        assert world.proprio_dim == 6

    def test_every_key_is_documented(self):
        text = describe_keys()
        for key in KEYS:
            assert key.name in text
