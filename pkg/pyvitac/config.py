"""Run configuration: one flat key=value document holding every knob of a
run (model shape, loss weights, schedule, world constants, evaluation and
ablation settings).

Every key is declared once in KEYS with its type, default and a line of
documentation.  Unknown and duplicated keys are rejected, naming the line
they appear on.  The digest of a configuration is taken over its canonical
form (sorted keys, normalized values), so reordering a file does not change
it.
"""

import math

from pyvitac.errors import ConfigError
from pyvitac.losses import LossWeights
from pyvitac.layers import INIT_SCHEMES
from pyvitac.policy import LATENT_MODES, PolicyConfig, PolicyVariant
from pyvitac.synthworld import WorldConfig
from pyvitac.utilities import (format_real, format_views, parse_int_list,
                               parse_key_values, parse_views, sha256_hex)


SCALES = ('desk', 'micro', 'robot')

ROBOT_SHAPES = {
    'action_horizon': 100,
    'proprio_groups': [7, 17, 7, 17, 2],
    'proprio_history': 6,
    'tactile_history': 18,
    'tactile_channels': 60,
}


class Key(object):
    """One configuration key: name, value type, default and documentation"""

    def __init__(self, name, kind, default, doc):
        self.name = name
        self.kind = kind
        self.default = default
        self.doc = doc

    def parse(self, text, line=None):
        context = {'key': self.name}
        if line is not None:
            context['line'] = line
        try:
            if self.kind == 'int':
                return int(text)
            elif self.kind == 'float':
                value = float(text)
                if not math.isfinite(value):
                    raise ValueError(text)
                return value
            elif self.kind == 'bool':
                lowered = text.strip().lower()
                if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                    raise ValueError(text)
                return lowered in ('true', '1', 'yes')
            elif self.kind == 'ints':
                return parse_int_list(text)
            elif self.kind == 'views':
                return parse_views(text)
            return text.strip()
        except ValueError:
            raise ConfigError("malformed value %r for %s" % (text, self.name),
                              context=context)

    def format(self, value):
        if self.kind == 'float':
            return format_real(value)
        elif self.kind == 'bool':
            return 'true' if value else 'false'
        elif self.kind == 'ints':
            return ",".join(str(v) for v in value)
        elif self.kind == 'views':
            return format_views(value)
        return str(value)


KEYS = [
    Key('scale', 'str', 'desk', "desk, micro or robot; robot enforces the full robot shapes"),
    Key('variant', 'str', PolicyVariant.FULL, "policy variant, one of " + ", ".join(PolicyVariant.LADDER)),
    # model
    Key('model_dim', 'int', 64, "token width D"),
    Key('n_heads', 'int', 4, "attention heads, must divide model_dim"),
    Key('encoder_layers', 'int', 2, "blocks in the style encoder"),
    Key('decoder_layers', 'int', 2, "blocks in each decoder"),
    Key('latent_dim', 'int', 16, "size Z of the style latent"),
    Key('share_fusion', 'bool', False, "share weights between the two fusion sites"),
    Key('views', 'views', [(16, 16, 1), (16, 16, 1)], "camera views as HxWxC, comma separated"),
    Key('patch_size', 'ints', [8], "patch side, one value or one per view"),
    Key('tactile_channels', 'int', 12, "tactile channels C, a multiple of 6"),
    Key('tactile_history', 'int', 6, "frames H_t in the tactile window"),
    Key('tactile_future', 'int', 6, "frames H_f in the forecast window"),
    Key('proprio_groups', 'ints', [3, 0, 3, 0, 0], "sizes of left arm, left hand, right arm, right hand, neck"),
    Key('proprio_history', 'int', 2, "frames H_p of proprio history"),
    Key('action_horizon', 'int', 16, "frames H_a per action chunk"),
    Key('init_scheme', 'str', 'scaled_uniform', "parameter init, scaled_uniform or zeros"),
    Key('seed', 'int', 0, "seed of parameter init, batch order and style noise"),
    # training
    Key('epochs', 'int', 100, "training epochs"),
    Key('batch_size', 'int', 128, "samples per batch; the last partial batch is kept"),
    Key('learning_rate', 'float', 1e-4, "Adam step size"),
    Key('beta1', 'float', 0.9, "Adam first moment decay"),
    Key('beta2', 'float', 0.999, "Adam second moment decay"),
    Key('adam_eps', 'float', 1e-8, "Adam denominator regularizer"),
    Key('switch_fraction', 'float', 0.75, "fraction of epochs trained on ground truth future tactile"),
    Key('w_kl', 'float', 10.0, "weight of the KL term"),
    Key('w_ja', 'float', 1.0, "weight of the joint angle L1 term"),
    Key('w_tactile', 'float', 1.0, "weight of the future tactile L1 term"),
    Key('w_arm', 'float', 1.0, "weight of the arm pose term"),
    Key('lambda_position', 'float', 1.0, "weight of the position part of the arm term"),
    Key('lambda_rotation', 'float', 1.0, "weight of the rotation part of the arm term"),
    Key('checkpoint_every', 'int', 0, "epochs between checkpoints, 0 for the final one only"),
    Key('std_floor', 'float', 1e-6, "lower bound of normalization standard deviations"),
    # data and world
    Key('episodes', 'int', 50, "expert episodes to generate"),
    Key('data_seed', 'int', 0, "seed of the generated dataset"),
    Key('quantization', 'float', 0.25, "cell size q of the rendered target"),
    Key('tolerance', 'float', 0.05, "success tolerance, must be below quantization / 2"),
    Key('bump_width', 'float', 0.15, "width of the tactile bump"),
    Key('max_step', 'float', 0.05, "largest effector move per step"),
    Key('contact_threshold', 'float', 0.05, "bump strength counted as contact"),
    Key('horizon', 'int', 60, "steps per episode and per rollout"),
    Key('dt', 'float', 0.1, "seconds per step"),
    Key('margin', 'float', 0.1, "distance of targets and start poses from the box edge"),
    Key('tactile_noise', 'float', 0.0, "std of gaussian noise on tactile readings"),
    # evaluation
    Key('task', 'str', 'synth_insertion', "scoring scheme used for evaluation"),
    Key('runs', 'int', 10, "closed loop rollouts per evaluation"),
    Key('replan_every', 'int', 8, "steps between policy calls, at most action_horizon"),
    Key('blend_horizon', 'int', 4, "frames cross-faded between consecutive chunks"),
    Key('eval_seed', 'int', 1000, "seed of the evaluation start states"),
    Key('latent_mode', 'str', 'zero', "style latent at inference, zero or sampled"),
    Key('ablate_seeds', 'ints', [0, 1, 2, 3, 4], "seeds of the ablation sweep"),
    Key('workers', 'int', 1, "threads for dataset generation and ablation"),
]

KEY_INDEX = dict((key.name, key) for key in KEYS)


class RunConfig(object):
    """A validated set of values for every key in KEYS.

    Keyword Args:
        values -- mapping of key -> value overriding the defaults
    """

    def __init__(self, values=None):
        merged = dict((key.name, key.default) for key in KEYS)
        for name, value in (values or {}).items():
            if name not in KEY_INDEX:
                raise ConfigError("unknown configuration key %r" % name)
            merged[name] = value
        self._values = merged
        self._validate()

    def __getattr__(self, name):
        values = self.__dict__.get('_values')
        if values is not None and name in values:
            return values[name]
        raise AttributeError(name)

    def __getitem__(self, name):
        return self._values[name]

    def as_dict(self):
        return dict(self._values)

    def replace(self, **overrides):
        values = self.as_dict()
        values.update(overrides)
        return RunConfig(values)

    ### Parsing

    @classmethod
    def parse(cls, text):
        """Builds a configuration from key=value text"""
        values = {}
        seen = {}
        for line, name, raw in parse_key_values(text):
            if raw is None:
                raise ConfigError("expected key = value", context={'line': line})
            if name not in KEY_INDEX:
                raise ConfigError("unknown configuration key %r" % name, context={'line': line})
            if name in seen:
                raise ConfigError("duplicate configuration key %r" % name,
                                  context={'line': line, 'first_line': seen[name]})
            seen[name] = line
            values[name] = KEY_INDEX[name].parse(raw, line)
        return cls(values)

    @classmethod
    def load(cls, path):
        with open(path) as handle:
            return cls.parse(handle.read())

    def to_text(self):
        """The canonical document: every key, sorted, one per line"""
        lines = []
        for name in sorted(self._values):
            lines.append("%s = %s" % (name, KEY_INDEX[name].format(self._values[name])))
        return "\n".join(lines) + "\n"

    def digest(self):
        return sha256_hex(self.to_text())

    def model_digest(self):
        return self.policy_config().digest()

    ### Validation

    def _validate(self):
        v = self._values
        if v['scale'] not in SCALES:
            raise ConfigError("unknown scale %r" % v['scale'], context={'known': ",".join(SCALES)})
        PolicyVariant.validate(v['variant'])
        if v['init_scheme'] not in INIT_SCHEMES:
            raise ConfigError("unknown init scheme %r" % v['init_scheme'])
        if v['latent_mode'] not in LATENT_MODES:
            raise ConfigError("unknown latent mode %r" % v['latent_mode'])
        for name in ('epochs', 'batch_size', 'episodes', 'runs', 'replan_every',
                     'horizon', 'workers'):
            if v[name] <= 0:
                raise ConfigError("%s must be positive" % name, context={'value': v[name]})
        for name in ('checkpoint_every', 'blend_horizon'):
            if v[name] < 0:
                raise ConfigError("%s must be nonnegative" % name, context={'value': v[name]})
        if not 0.0 < v['switch_fraction'] <= 1.0:
            raise ConfigError("switch_fraction must lie in (0, 1]",
                              context={'value': v['switch_fraction']})
        if v['learning_rate'] <= 0 or v['adam_eps'] <= 0 or v['std_floor'] <= 0:
            raise ConfigError("learning_rate, adam_eps and std_floor must be positive")
        if not (0.0 <= v['beta1'] < 1.0 and 0.0 <= v['beta2'] < 1.0):
            raise ConfigError("Adam decays must lie in [0, 1)")
        if v['replan_every'] > v['action_horizon']:
            raise ConfigError("replan_every may not exceed action_horizon",
                              context={'replan_every': v['replan_every'],
                                       'action_horizon': v['action_horizon']})
        if v['blend_horizon'] > v['action_horizon']:
            raise ConfigError("blend_horizon may not exceed action_horizon")
        if v['tactile_channels'] % 6:
            raise ConfigError("tactile_channels must be a multiple of 6 (force and torque per fingertip)",
                              context={'value': v['tactile_channels']})
        if not v['ablate_seeds']:
            raise ConfigError("ablate_seeds may not be empty")
        if v['scale'] == 'robot':
            for name, expected in ROBOT_SHAPES.items():
                if v[name] != expected:
                    raise ConfigError("robot scale requires %s = %s" % (name, expected),
                                      context={'actual': v[name]})
        self.loss_weights()
        self.policy_config()
        self.world_config()

    ### Derived objects

    def policy_config(self, variant=None, seed=None):
        v = self._values
        return PolicyConfig(
            model_dim=v['model_dim'], n_heads=v['n_heads'],
            encoder_layers=v['encoder_layers'], decoder_layers=v['decoder_layers'],
            latent_dim=v['latent_dim'], views=v['views'], patch_sizes=v['patch_size'],
            tactile_channels=v['tactile_channels'], tactile_history=v['tactile_history'],
            tactile_future=v['tactile_future'], proprio_groups=v['proprio_groups'],
            proprio_history=v['proprio_history'], action_horizon=v['action_horizon'],
            variant=variant or v['variant'], share_fusion=v['share_fusion'],
            init_scheme=v['init_scheme'], seed=v['seed'] if seed is None else seed)

    def loss_weights(self):
        v = self._values
        return LossWeights(v['w_kl'], v['w_ja'], v['w_tactile'], v['w_arm'],
                           v['lambda_position'], v['lambda_rotation'])

    def world_config(self):
        v = self._values
        return WorldConfig(
            quantization=v['quantization'], tolerance=v['tolerance'],
            bump_width=v['bump_width'], max_step=v['max_step'],
            contact_threshold=v['contact_threshold'], horizon=v['horizon'],
            dt=v['dt'], margin=v['margin'], noise=v['tactile_noise'],
            views=v['views'], tactile_channels=v['tactile_channels'],
            proprio_groups=v['proprio_groups'])

    ### Factories

    @classmethod
    def desk(cls, **overrides):
        """The desk-scale defaults"""
        values = {'scale': 'desk'}
        values.update(overrides)
        return cls(values)

    @classmethod
    def micro(cls, **overrides):
        """A tiny configuration for smoke runs and gradient checks"""
        values = {
            'scale': 'micro', 'model_dim': 8, 'n_heads': 2, 'encoder_layers': 1,
            'decoder_layers': 1, 'latent_dim': 4, 'views': [(8, 8, 1), (8, 8, 1)],
            'patch_size': [4], 'tactile_channels': 6, 'tactile_history': 3,
            'tactile_future': 2, 'proprio_groups': [3, 0, 3, 0, 0],
            'proprio_history': 2, 'action_horizon': 4, 'epochs': 2, 'batch_size': 16,
            'episodes': 4, 'runs': 2, 'replan_every': 2, 'blend_horizon': 2,
            'ablate_seeds': [0, 1],
        }
        values.update(overrides)
        return cls(values)

    @classmethod
    def robot(cls, **overrides):
        """Shapes of the full size system: four camera views, ten
        fingertips, 50 proprio channels and 100 frame chunks"""
        values = {
            'scale': 'robot',
            'views': [(180, 320, 3), (180, 320, 3), (256, 280, 3), (256, 280, 3)],
            'patch_size': [20, 20, 8, 8], 'tactile_channels': 60,
            'tactile_history': 18, 'tactile_future': 18,
            'proprio_groups': [7, 17, 7, 17, 2], 'proprio_history': 6,
            'action_horizon': 100, 'replan_every': 100, 'blend_horizon': 10,
        }
        values.update(overrides)
        return cls(values)


def describe_keys():
    """Documentation of every key, one per line"""
    return "\n".join("%-18s %-6s %s" % (key.name, key.kind, key.doc) for key in KEYS)
