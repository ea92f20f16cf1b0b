"""The visuo-tactile action chunking policy.

A transformer encoder summarizes an expert action chunk and the proprio
history into a style latent z.  Camera views are cut into patches and tactile
and proprio frames are projected into tokens.  Depending on the variant, the
visual and tactile tokens are concatenated or cross-attended, a decoder
forecasts the next window of tactile readings, and a second decoder turns
[z, proprio, fused observation, future tactile] into a chunk of future
joint targets.

Variants form a ladder, each one adding a mechanism to the one before:

    without_touch    style latent, proprio and visual tokens
    naive_touch      + tactile tokens, concatenated with the visual ones
    cross_attention  + cross-modal attention instead of concatenation
    next_touch_pred  + tactile forecasting head; actions see ground truth
                       future tactile in training and the forecast at
                       inference
    autoregressive   + actions train on the forecast in the second phase of
                       the curriculum
    full             + future tactile tokens also take part in the second
                       cross-modal attention
"""

import hashlib
from collections import OrderedDict

import numpy as np

from pyvitac import tensor as T
from pyvitac.errors import ConfigError, ShapeError, VariantError
from pyvitac.fusion import (CrossModalFusion, ModalityTokens, cross_modal_fuse,
                            naive_token_fuse)
from pyvitac.kinematics import ForwardKinematics
from pyvitac.layers import (AttentionConfig, DecoderBlock, EncoderBlock, Linear,
                            PositionalEncoding, INIT_SCHEMES, init_params)
from pyvitac.losses import (LossWeights, action_l1, arm_terms, composite_loss,
                            kl_diag_gaussian, tactile_l1)
from pyvitac.normalization import NormalizationStats
from pyvitac.utilities import format_views, rng_for


GROUND_TRUTH = 'ground_truth'
PREDICTED = 'predicted'
PHASES = (GROUND_TRUTH, PREDICTED)

ZERO_LATENT = 'zero'
SAMPLED_LATENT = 'sampled'
LATENT_MODES = (ZERO_LATENT, SAMPLED_LATENT)

GROUP_NAMES = ('left_arm', 'left_hand', 'right_arm', 'right_hand', 'neck')
ARM_GROUPS = (0, 2)


class PolicyVariant(object):
    """Names and mechanisms of the ablation ladder"""

    WITHOUT_TOUCH = 'without_touch'
    NAIVE_TOUCH = 'naive_touch'
    CROSS_ATTENTION = 'cross_attention'
    NEXT_TOUCH_PRED = 'next_touch_pred'
    AUTOREGRESSIVE = 'autoregressive'
    FULL = 'full'

    LADDER = (WITHOUT_TOUCH, NAIVE_TOUCH, CROSS_ATTENTION, NEXT_TOUCH_PRED,
              AUTOREGRESSIVE, FULL)

    LABELS = {
        WITHOUT_TOUCH: 'w/o Touch',
        NAIVE_TOUCH: 'w/ Touch',
        CROSS_ATTENTION: 'w/ CrossAttention',
        NEXT_TOUCH_PRED: 'w/ NextTouchPred',
        AUTOREGRESSIVE: 'w/ AutoRegressive',
        FULL: 'Full',
    }

    _ADDED = {
        WITHOUT_TOUCH: ('style', 'proprio', 'visual'),
        NAIVE_TOUCH: ('tactile',),
        CROSS_ATTENTION: ('cross_attention',),
        NEXT_TOUCH_PRED: ('forecast',),
        AUTOREGRESSIVE: ('feedback',),
        FULL: ('future_fusion',),
    }

    @classmethod
    def validate(cls, name):
        if name not in cls.LADDER:
            raise VariantError("unknown policy variant %r" % name,
                               context={'known': ",".join(cls.LADDER)})
        return name

    @classmethod
    def mechanisms(cls, name):
        """The cumulative set of mechanisms the named variant enables"""
        cls.validate(name)
        enabled = set()
        for variant in cls.LADDER:
            enabled.update(cls._ADDED[variant])
            if variant == name:
                break
        return frozenset(enabled)

    @classmethod
    def has(cls, name, mechanism):
        return mechanism in cls.mechanisms(name)


def _positive(name, value):
    if int(value) != value or value <= 0:
        raise ConfigError("%s must be a positive integer" % name, context={'value': value})
    return int(value)


class PolicyConfig(object):
    """Every number that shapes a PolicyModel.

    Keyword Args:
        model_dim        -- token width D
        n_heads          -- attention heads
        encoder_layers   -- blocks in the style encoder
        decoder_layers   -- blocks in each of the two decoders
        latent_dim       -- size Z of the style latent
        views            -- list of (height, width, channels) per camera view
        patch_sizes      -- square patch side per view (one value applies to
                            every view)
        tactile_channels -- C, so tactile window rows are 2C wide
        tactile_history  -- H_t, frames in the tactile window
        tactile_future   -- H_f, frames in the forecast window
        proprio_groups   -- sizes of [left arm, left hand, right arm, right
                            hand, neck]
        proprio_history  -- H_p, frames of proprio history
        action_horizon   -- H_a, frames in an action chunk
        variant          -- one of PolicyVariant.LADDER
        share_fusion     -- use one set of weights at both fusion sites
        init_scheme      -- 'scaled_uniform' or 'zeros'
        seed             -- parameter initialization seed
    """

    def __init__(self, model_dim=64, n_heads=4, encoder_layers=2, decoder_layers=2,
                 latent_dim=16, views=((16, 16, 1), (16, 16, 1)), patch_sizes=(8,),
                 tactile_channels=12, tactile_history=6, tactile_future=6,
                 proprio_groups=(3, 0, 3, 0, 0), proprio_history=2,
                 action_horizon=16, variant=PolicyVariant.FULL, share_fusion=False,
                 init_scheme='scaled_uniform', seed=0):
        self.model_dim = _positive('model_dim', model_dim)
        self.n_heads = _positive('n_heads', n_heads)
        self.encoder_layers = _positive('encoder_layers', encoder_layers)
        self.decoder_layers = _positive('decoder_layers', decoder_layers)
        self.latent_dim = _positive('latent_dim', latent_dim)
        self.tactile_channels = _positive('tactile_channels', tactile_channels)
        self.tactile_history = _positive('tactile_history', tactile_history)
        self.tactile_future = _positive('tactile_future', tactile_future)
        self.proprio_history = _positive('proprio_history', proprio_history)
        self.action_horizon = _positive('action_horizon', action_horizon)
        self.variant = PolicyVariant.validate(variant)
        self.share_fusion = bool(share_fusion)
        if init_scheme not in INIT_SCHEMES:
            raise ConfigError("unknown init scheme %r" % init_scheme)
        self.init_scheme = init_scheme
        self.seed = int(seed)
        self.attention = AttentionConfig(self.model_dim, self.n_heads)

        self.views = [tuple(int(d) for d in view) for view in views]
        if not self.views:
            raise ConfigError("at least one camera view is needed")
        patch_sizes = [int(p) for p in patch_sizes]
        if len(patch_sizes) == 1:
            patch_sizes = patch_sizes * len(self.views)
        if len(patch_sizes) != len(self.views):
            raise ConfigError("one patch size per view is needed",
                              context={'views': len(self.views), 'patch_sizes': len(patch_sizes)})
        for (height, width, channels), patch in zip(self.views, patch_sizes):
            _positive('patch size', patch)
            _positive('view channels', channels)
            if height % patch or width % patch:
                raise ConfigError("view resolution not divisible by the patch size",
                                  context={'view': "%dx%d" % (height, width), 'patch': patch})
        self.patch_sizes = patch_sizes

        self.proprio_groups = [int(g) for g in proprio_groups]
        if len(self.proprio_groups) != len(GROUP_NAMES) or min(self.proprio_groups) < 0:
            raise ConfigError("proprio_groups needs five nonnegative sizes (%s)"
                              % ", ".join(GROUP_NAMES))
        for index in ARM_GROUPS:
            if 0 < self.proprio_groups[index] < ForwardKinematics.n_joints:
                raise ConfigError("an arm group needs at least %d joints"
                                  % ForwardKinematics.n_joints,
                                  context={'group': GROUP_NAMES[index]})
        if not self.arm_offsets:
            raise ConfigError("at least one arm group is needed")

    @property
    def proprio_dim(self):
        return sum(self.proprio_groups)

    @property
    def tactile_width(self):
        return 2 * self.tactile_channels

    @property
    def arm_offsets(self):
        """Column of P where each present arm's joints start"""
        offsets = []
        for index in ARM_GROUPS:
            if self.proprio_groups[index]:
                offsets.append(sum(self.proprio_groups[:index]))
        return tuple(offsets)

    def view_token_count(self, index):
        height, width, _ = self.views[index]
        patch = self.patch_sizes[index]
        return (height // patch) * (width // patch)

    @property
    def visual_token_count(self):
        return sum(self.view_token_count(i) for i in range(len(self.views)))

    def canonical(self):
        """The configuration as sorted key=value lines"""
        values = {
            'model_dim': self.model_dim,
            'n_heads': self.n_heads,
            'encoder_layers': self.encoder_layers,
            'decoder_layers': self.decoder_layers,
            'latent_dim': self.latent_dim,
            'views': format_views(self.views),
            'patch_size': ",".join(str(p) for p in self.patch_sizes),
            'tactile_channels': self.tactile_channels,
            'tactile_history': self.tactile_history,
            'tactile_future': self.tactile_future,
            'proprio_groups': ",".join(str(g) for g in self.proprio_groups),
            'proprio_history': self.proprio_history,
            'action_horizon': self.action_horizon,
            'variant': self.variant,
            'share_fusion': 'true' if self.share_fusion else 'false',
        }
        return "\n".join("%s=%s" % (k, values[k]) for k in sorted(values)) + "\n"

    def digest(self):
        """Hash of the architecture.  Checkpoints embed it and refuse to
        load under a different one.  The init scheme and seed only pick
        starting values and are left out."""
        return hashlib.sha256(self.canonical().encode('utf-8')).hexdigest()


class Observation(object):
    """What the policy sees at one decision step.

    Args:
        images  -- list with one array per view, [H, W, C] (or [B, H, W, C])
        tactile -- tactile window [H_t, 2C] (or [B, H_t, 2C])
        proprio -- proprio history [H_p, P] (or [B, H_p, P])
    """

    def __init__(self, images, tactile, proprio):
        self.images = [np.asarray(image, dtype=np.float64) for image in images]
        self.tactile = np.asarray(tactile, dtype=np.float64)
        self.proprio = np.asarray(proprio, dtype=np.float64)

    @property
    def batched(self):
        return self.tactile.ndim == 3

    @property
    def batch_size(self):
        return self.tactile.shape[0] if self.batched else 1

    def as_batch(self):
        if self.batched:
            return self
        return Observation([image[None] for image in self.images],
                           self.tactile[None], self.proprio[None])

    def normalized(self, stats):
        return Observation(self.images, stats.tactile.normalize(self.tactile),
                           stats.proprio.normalize(self.proprio))

    @classmethod
    def stack(cls, observations):
        """Batches a list of unbatched observations"""
        views = len(observations[0].images)
        return cls([np.stack([o.images[i] for o in observations]) for i in range(views)],
                   np.stack([o.tactile for o in observations]),
                   np.stack([o.proprio for o in observations]))


class Batch(object):
    """Normalized training samples.

    Args:
        observation    -- a batched, normalized Observation
        actions        -- expert chunks [B, H_a, P]
        future_tactile -- ground truth forecast targets [B, H_f, 2C]
        noise          -- standard normal draws [B, Z] for the style latent
    """

    def __init__(self, observation, actions, future_tactile, noise):
        self.observation = observation
        self.actions = np.asarray(actions, dtype=np.float64)
        self.future_tactile = np.asarray(future_tactile, dtype=np.float64)
        self.noise = np.asarray(noise, dtype=np.float64)

    @property
    def size(self):
        return self.actions.shape[0]


class LossBundle(object):
    """Every loss term of one training forward pass.  `total` is the Tensor
    to backpropagate; the parts are plain floats.  When the variant has no
    forecasting head the tactile term is reported as 0 with
    tactile_present unset."""

    def __init__(self, total, kl, ja, tactile, arm, phase, variant):
        self.total = total
        self.phase = phase
        self.variant = variant
        self.kl = kl.item()
        self.ja = ja.item()
        self.tactile_present = tactile is not None
        self.tactile = tactile.item() if tactile is not None else 0.0
        self.arm = arm.total.item()
        self.arm_position = arm.position.item()
        self.arm_rotation = arm.rotation.item()
        self.arm_violations = arm.violations

    @property
    def total_value(self):
        return self.total.item()

    def parts(self):
        return OrderedDict([('kl', self.kl), ('ja', self.ja),
                            ('tactile', self.tactile), ('arm', self.arm)])

    def recompute(self, weights):
        """The weighted sum of the reported parts, as plain floats"""
        return (((weights.w_kl * self.kl + weights.w_ja * self.ja)
                 + weights.w_tactile * self.tactile) + weights.w_arm * self.arm)


def reparameterize(mu, logvar, noise):
    """z = mu + exp(logvar / 2) * noise"""
    return T.add(mu, T.mul(T.exp(T.mul(logvar, 0.5)), _tensor(noise)))


def temporal_smooth(prev_tail, new_chunk, blend_horizon):
    """Cross-fades the unexecuted frames of the previous chunk into a new
    chunk.  Frame k < B of the result is prev[k] + (k / B) (new[k] - prev[k]);
    from frame B on the new chunk passes through.

    Args:
        prev_tail     -- array [n, P], the previous chunk's remaining frames
        new_chunk     -- array [H_a, P]
        blend_horizon -- B, at most the length of either input

    >>> temporal_smooth([[0.0], [0.0]], [[1.0], [1.0], [1.0]], 2).ravel().tolist()
    [0.0, 0.5, 1.0]
    """
    new = np.array(new_chunk, dtype=np.float64)
    blend = int(blend_horizon)
    if blend < 0:
        raise ShapeError("blend horizon must be nonnegative", context={'blend': blend})
    if blend == 0:
        return new
    prev = np.asarray(prev_tail, dtype=np.float64)
    if blend > len(new) or blend > len(prev):
        raise ShapeError("blend horizon exceeds the chunk length",
                         context={'blend': blend, 'new': len(new), 'prev': len(prev)})
    if prev.shape[1:] != new.shape[1:]:
        raise ShapeError("chunks differ in frame width",
                         context={'prev': prev.shape, 'new': new.shape})
    for k in range(blend):
        alpha = k / float(blend)
        new[k] = prev[k] + alpha * (new[k] - prev[k])
    return new


def _tensor(value):
    if isinstance(value, T.Tensor):
        return value
    return T.Tensor(value)


def _tile(param, batch):
    """Repeats a [n, D] parameter along a new leading batch axis"""
    return T.stack([param] * batch, axis=0)


def patchify(image, patch):
    """Cuts [B, H, W, C] images into [B, (H/p)(W/p), p*p*C] row-major
    patches"""
    batch, height, width, channels = image.shape
    rows, cols = height // patch, width // patch
    blocks = image.reshape(batch, rows, patch, cols, patch, channels)
    blocks = blocks.transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(blocks.reshape(batch, rows * cols, patch * patch * channels))


class PolicyModel(object):
    """Parameters and forward passes of one policy.

    Weights for every mechanism are created whatever the variant, so models
    of different variants built from one config have the same parameter
    names; a variant simply leaves the weights of the mechanisms it lacks
    untouched.

    Args:
        config -- a PolicyConfig

    Keyword Args:
        stats   -- NormalizationStats applied by infer; identity when None
        weights -- LossWeights used by forward_train
        fk      -- forward kinematics for the arm loss
    """

    def __init__(self, config, stats=None, weights=None, fk=None):
        self.config = config
        self.stats = stats or NormalizationStats.identity(config.proprio_dim,
                                                          config.tactile_width)
        self.weights = weights or LossWeights()
        self.fk = fk or ForwardKinematics()
        self.params = init_params(config.seed, config.init_scheme)
        self._build()

    def _build(self):
        cfg = self.config
        attention = cfg.attention
        dim = cfg.model_dim
        p = self.params
        width = cfg.proprio_dim

        self.style_token = p.weight('style.cls', (1, dim), fan_in=dim)
        self.style_proprio = Linear(p, 'style.proprio', width, dim)
        self.style_actions = Linear(p, 'style.actions', width, dim)
        self.style_blocks = [EncoderBlock(p, 'style.block%d' % i, attention)
                             for i in range(cfg.encoder_layers)]
        self.style_head = Linear(p, 'style.head', dim, 2 * cfg.latent_dim, bias=False)

        self.view_embeddings = []
        for i, (view, patch) in enumerate(zip(cfg.views, cfg.patch_sizes)):
            self.view_embeddings.append(
                Linear(p, 'embed.view%d' % i, patch * patch * view[2], dim, bias=False))
        self.tactile_embedding = Linear(p, 'embed.tactile', cfg.tactile_width, dim)
        self.proprio_embedding = Linear(p, 'embed.proprio', width, dim)
        self.latent_embedding = Linear(p, 'embed.latent', cfg.latent_dim, dim)
        self.future_embedding = Linear(p, 'embed.future_tactile', cfg.tactile_width, dim)

        self.fusion_forecast = CrossModalFusion(p, 'fusion.forecast', attention)
        if cfg.share_fusion:
            self.fusion_action = self.fusion_forecast
        else:
            self.fusion_action = CrossModalFusion(p, 'fusion.action', attention)

        self.forecast_queries = p.weight('forecast.queries', (cfg.tactile_future, dim), fan_in=dim)
        self.forecast_blocks = [DecoderBlock(p, 'forecast.block%d' % i, attention)
                                for i in range(cfg.decoder_layers)]
        self.forecast_head = Linear(p, 'forecast.head', dim, cfg.tactile_width)

        self.action_queries = p.weight('action.queries', (cfg.action_horizon, dim), fan_in=dim)
        self.action_blocks = [DecoderBlock(p, 'action.block%d' % i, attention)
                              for i in range(cfg.decoder_layers)]
        self.action_head = Linear(p, 'action.head', dim, width)

        longest = max([1 + cfg.proprio_history + cfg.action_horizon,
                       cfg.tactile_history, cfg.tactile_future]
                      + [cfg.view_token_count(i) for i in range(len(cfg.views))])
        self.positions = PositionalEncoding(longest, dim)

    def _check(self, array, shape, label):
        if tuple(array.shape[1:]) != tuple(shape):
            raise ShapeError("%s has the wrong shape" % label,
                             context={'expected': tuple(shape), 'actual': tuple(array.shape[1:])})

    ### Style encoder

    def encode_style(self, actions, proprio):
        """Maps an expert chunk and the proprio history to (mu, logvar).

        Args:
            actions -- normalized chunk [H_a, P] or [B, H_a, P]
            proprio -- normalized history [H_p, P] or [B, H_p, P]

        Returns:
            (mu, logvar), each [Z] (or [B, Z] for batched input)
        """
        cfg = self.config
        actions = _tensor(actions)
        proprio = _tensor(proprio)
        single = actions.ndim == 2
        if single:
            actions = T.reshape(actions, (1,) + actions.shape)
            proprio = T.reshape(proprio, (1,) + proprio.shape)
        self._check(actions, (cfg.action_horizon, cfg.proprio_dim), "action chunk")
        self._check(proprio, (cfg.proprio_history, cfg.proprio_dim), "proprio history")
        batch = actions.shape[0]

        tokens = T.concat([_tile(self.style_token, batch),
                           self.style_proprio(proprio),
                           self.style_actions(actions)], axis=-2)
        x = self.positions.add_to(tokens)
        for block in self.style_blocks:
            x = block(x)
        summary = T.reshape(T.slice_axis(x, 1, 0, 1), (batch, cfg.model_dim))
        stats = self.style_head(summary)
        mu = T.slice_axis(stats, -1, 0, cfg.latent_dim)
        logvar = T.slice_axis(stats, -1, cfg.latent_dim, 2 * cfg.latent_dim)
        if single:
            mu = T.reshape(mu, (cfg.latent_dim,))
            logvar = T.reshape(logvar, (cfg.latent_dim,))
        return mu, logvar

    ### Observation tokens

    def embed_observations(self, observation):
        """Projects a batched, normalized observation into tokens.

        Returns:
            (ModalityTokens, proprio tokens [B, H_p, D])
        """
        cfg = self.config
        if len(observation.images) != len(cfg.views):
            raise ShapeError("wrong number of camera views",
                             context={'expected': len(cfg.views),
                                      'actual': len(observation.images)})
        visual = []
        for i, (image, view) in enumerate(zip(observation.images, cfg.views)):
            self._check(image, view, "view %d" % i)
            patches = T.Tensor(patchify(image, cfg.patch_sizes[i]))
            visual.append(self.positions.add_to(self.view_embeddings[i](patches)))
        visual = visual[0] if len(visual) == 1 else T.concat(visual, axis=-2)

        self._check(observation.tactile, (cfg.tactile_history, cfg.tactile_width),
                    "tactile window")
        self._check(observation.proprio, (cfg.proprio_history, cfg.proprio_dim),
                    "proprio history")
        tactile = self.positions.add_to(self.tactile_embedding(T.Tensor(observation.tactile)))
        proprio = self.positions.add_to(self.proprio_embedding(T.Tensor(observation.proprio)))
        return ModalityTokens(visual, tactile), proprio

    def embed_future_tactile(self, future):
        """Projects future tactile rows [B, H_f, 2C] into tokens"""
        return self.positions.add_to(self.future_embedding(_tensor(future)))

    def _latent_token(self, z):
        batch = z.shape[0]
        return T.reshape(self.latent_embedding(z), (batch, 1, self.config.model_dim))

    def _decode(self, queries, blocks, memory):
        batch = memory.shape[0]
        x = self.positions.add_to(_tile(queries, batch))
        for block in blocks:
            x = block(x, memory)
        return x

    ### Heads

    def predict_future_tactile(self, z, proprio_tokens, fused_tokens):
        """Forecasts the next H_f normalized tactile rows.

        Args:
            z              -- style latent [B, Z]
            proprio_tokens -- [B, H_p, D]
            fused_tokens   -- output of the first fusion site [B, L, D]

        Returns:
            Tensor [B, H_f, 2C]
        """
        z = _tensor(z)
        memory = T.concat([self._latent_token(z), proprio_tokens, fused_tokens], axis=-2)
        return self.forecast_head(self._decode(self.forecast_queries, self.forecast_blocks,
                                               memory))

    def generate_actions(self, z, proprio_tokens, fused_tokens, future_tokens=None):
        """Decodes a normalized action chunk.

        Args:
            z              -- style latent [B, Z]
            proprio_tokens -- [B, H_p, D]
            fused_tokens   -- output of the second fusion site [B, L, D]

        Keyword Args:
            future_tokens -- projected future tactile [B, H_f, D], appended to
                             the memory when given

        Returns:
            Tensor [B, H_a, P]
        """
        z = _tensor(z)
        segments = [self._latent_token(z), proprio_tokens, fused_tokens]
        if future_tokens is not None:
            segments.append(future_tokens)
        memory = T.concat(segments, axis=-2)
        return self.action_head(self._decode(self.action_queries, self.action_blocks, memory))

    def fuse_for_actions(self, tokens, future_tokens, variant):
        """The observation tokens the action decoder attends to"""
        mechanisms = PolicyVariant.mechanisms(variant)
        if 'tactile' not in mechanisms:
            return tokens.visual
        if 'cross_attention' not in mechanisms:
            return naive_token_fuse(tokens)
        if 'feedback' in mechanisms and 'future_fusion' in mechanisms \
                and future_tokens is not None:
            tactile = T.concat([tokens.tactile, future_tokens], axis=-2)
            tokens = ModalityTokens(tokens.visual, tactile)
        return cross_modal_fuse(tokens, self.fusion_action)

    def memory_streams(self, variant=None):
        """Token counts of the action decoder's memory, by stream"""
        variant = variant or self.config.variant
        return memory_streams(self.config, variant)

    ### Passes

    def _denormalized_actions(self, chunk):
        stats = self.stats.actions
        std = T.Tensor(np.broadcast_to(stats.std, chunk.shape).copy())
        mean = T.Tensor(np.broadcast_to(stats.mean, chunk.shape).copy())
        return T.add(T.mul(chunk, std), mean)

    def forward_train(self, batch, phase=GROUND_TRUTH, variant=None):
        """Runs the full training pipeline of a variant on a batch.

        Args:
            batch -- a Batch of normalized samples

        Keyword Args:
            phase   -- GROUND_TRUTH or PREDICTED, the curriculum phase
            variant -- overrides the configured variant

        Returns:
            A LossBundle
        """
        variant = PolicyVariant.validate(variant or self.config.variant)
        if phase not in PHASES:
            raise ConfigError("unknown curriculum phase %r" % phase)
        mechanisms = PolicyVariant.mechanisms(variant)
        if phase == PREDICTED and 'forecast' not in mechanisms:
            raise VariantError("variant %s has no tactile forecasting head to train on"
                               % variant, context={'phase': phase})

        obs = batch.observation
        actions = T.Tensor(batch.actions)
        mu, logvar = self.encode_style(actions, T.Tensor(obs.proprio))
        z = reparameterize(mu, logvar, batch.noise)
        tokens, proprio_tokens = self.embed_observations(obs)

        tactile_loss = None
        future_tokens = None
        if 'forecast' in mechanisms:
            fused = cross_modal_fuse(tokens, self.fusion_forecast)
            predicted = self.predict_future_tactile(z, proprio_tokens, fused)
            target = T.Tensor(batch.future_tactile)
            tactile_loss = tactile_l1(predicted, target)
            if 'feedback' in mechanisms:
                future_tokens = self.embed_future_tactile(
                    predicted if phase == PREDICTED else target)

        fused = self.fuse_for_actions(tokens, future_tokens, variant)
        chunk = self.generate_actions(z, proprio_tokens, fused, future_tokens)

        kl = kl_diag_gaussian(mu, logvar)
        ja = action_l1(chunk, actions)
        arm = arm_terms(self._denormalized_actions(chunk),
                        self._denormalized_actions(actions), self.fk,
                        self.weights.lambda_position, self.weights.lambda_rotation,
                        self.config.arm_offsets)
        parts = {'kl': kl, 'ja': ja, 'tactile': tactile_loss, 'arm': arm.total}
        total = composite_loss(parts, self.weights)
        return LossBundle(total, kl, ja, tactile_loss, arm, phase, variant)

    def infer(self, observation, latent_mode=ZERO_LATENT, seed=0, variant=None):
        """Predicts a denormalized action chunk without the style encoder.

        Args:
            observation -- raw (unnormalized) Observation, batched or not

        Keyword Args:
            latent_mode -- 'zero' for z = 0, 'sampled' for z ~ N(0, I)
            seed        -- seed of the sampled latent
            variant     -- overrides the configured variant

        Returns:
            array [H_a, P] (or [B, H_a, P] for a batched observation)
        """
        variant = PolicyVariant.validate(variant or self.config.variant)
        if latent_mode not in LATENT_MODES:
            raise ConfigError("unknown latent mode %r" % latent_mode,
                              context={'known': ",".join(LATENT_MODES)})
        single = not observation.batched
        obs = observation.as_batch().normalized(self.stats)
        shape = (obs.batch_size, self.config.latent_dim)
        if latent_mode == ZERO_LATENT:
            z = np.zeros(shape)
        else:
            z = rng_for(seed).standard_normal(shape)

        with T.no_grad():
            z = T.Tensor(z)
            tokens, proprio_tokens = self.embed_observations(obs)
            future_tokens = None
            if PolicyVariant.has(variant, 'feedback'):
                fused = cross_modal_fuse(tokens, self.fusion_forecast)
                predicted = self.predict_future_tactile(z, proprio_tokens, fused)
                future_tokens = self.embed_future_tactile(predicted)
            fused = self.fuse_for_actions(tokens, future_tokens, variant)
            chunk = self.generate_actions(z, proprio_tokens, fused, future_tokens)

        actions = self.stats.actions.denormalize(chunk.data)
        return actions[0] if single else actions

    def forecast(self, observation, latent_mode=ZERO_LATENT, seed=0):
        """Predicts the denormalized future tactile window of an
        observation"""
        single = not observation.batched
        obs = observation.as_batch().normalized(self.stats)
        shape = (obs.batch_size, self.config.latent_dim)
        z = np.zeros(shape) if latent_mode == ZERO_LATENT else rng_for(seed).standard_normal(shape)
        with T.no_grad():
            tokens, proprio_tokens = self.embed_observations(obs)
            fused = cross_modal_fuse(tokens, self.fusion_forecast)
            predicted = self.predict_future_tactile(T.Tensor(z), proprio_tokens, fused)
        rows = self.stats.tactile.denormalize(predicted.data)
        return rows[0] if single else rows


def memory_streams(config, variant):
    """Token counts of the action decoder's memory for a variant.

    Returns:
        OrderedDict of stream name -> token count.  Each variant's streams
        include all of the streams of the variants below it on the ladder.
    """
    mechanisms = PolicyVariant.mechanisms(variant)
    streams = OrderedDict()
    streams['latent'] = 1
    streams['proprio'] = config.proprio_history
    streams['visual'] = config.visual_token_count
    if 'tactile' in mechanisms:
        streams['tactile'] = config.tactile_history
    if 'feedback' in mechanisms:
        streams['future_tactile'] = config.tactile_future
    if 'future_fusion' in mechanisms:
        streams['future_tactile_fused'] = config.tactile_future
    return streams
