"""The Adam optimizer, the two-phase tactile curriculum and the training
loop.

Training is deterministic given the configuration: batches are shuffled
per epoch from the run seed, style noise is drawn per (epoch, batch), and
batches are processed one after the other.  The metrics log starts with the
configuration digest and holds one tab separated row per epoch.
"""

import logging
import math
import os
import time
from fractions import Fraction

import numpy as np

from pyvitac import tensor as T
from pyvitac.checkpoint import save_checkpoint
from pyvitac.episodes import SampleSet
from pyvitac.errors import ConfigError, FormatError, NumericError, check_finite
from pyvitac.policy import GROUND_TRUTH, PREDICTED, PolicyModel, PolicyVariant
from pyvitac.utilities import _log, format_real, rng_for, sha256_hex


SHUFFLE_KEY = 0x5F1
NOISE_KEY = 0x2015E

PHASE_TAGS = {GROUND_TRUTH: 'GroundTruthTactile', PREDICTED: 'PredictedTactile'}
METRIC_COLUMNS = ('epoch', 'phase', 'L_total', 'L_KL', 'L_JA', 'L_tactile', 'L_arm', 'wall_ms')
DIGEST_PREFIX = "# config_digest="
METRICS_NAME = "metrics.tsv"
CHECKPOINT_NAME = "checkpoint.pvck"
EPOCH_CHECKPOINT_NAME = "checkpoint_epoch%04d.pvck"


### Optimizer

class OptimizerState(object):
    """Adam hyper-parameters, step counter and per-parameter moments.

    Keyword Args:
        lr    -- step size
        beta1 -- first moment decay
        beta2 -- second moment decay
        eps   -- denominator regularizer
    """

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, step=0,
                 first=None, second=None):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = step
        self.first = dict(first or {})
        self.second = dict(second or {})

    def copy(self):
        return OptimizerState(self.lr, self.beta1, self.beta2, self.eps, self.step,
                              dict((k, v.copy()) for k, v in self.first.items()),
                              dict((k, v.copy()) for k, v in self.second.items()))


def adam_step(params, grads, state):
    """One bias-corrected Adam update.  Neither input is modified.

    Args:
        params -- mapping of name -> array
        grads  -- mapping of name -> gradient array, or None for parameters
                  the loss doesn't reach; those are left alone
        state  -- an OptimizerState

    Returns:
        (dict of updated arrays, new OptimizerState)

    Raises:
        NumericError -- naming the first parameter with a non-finite gradient
    """
    new_state = state.copy()
    new_state.step = state.step + 1
    t = new_state.step
    first_fix = 1.0 - state.beta1 ** t
    second_fix = 1.0 - state.beta2 ** t
    updated = {}
    for name in params:
        value = np.asarray(params[name], dtype=np.float64)
        grad = grads.get(name)
        if grad is None:
            updated[name] = value.copy()
            continue
        grad = np.asarray(grad, dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient", context={'parameter': name})
        m = state.first.get(name, np.zeros_like(value))
        v = state.second.get(name, np.zeros_like(value))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        new_state.first[name] = m
        new_state.second[name] = v
        updated[name] = value - state.lr * (m / first_fix) / (np.sqrt(v / second_fix) + state.eps)
    return updated, new_state


### Curriculum

class CurriculumSchedule(object):
    """Epochs before ceil(switch_fraction * total_epochs) train the action
    decoder on ground truth future tactile; the rest on the forecast."""

    def __init__(self, total_epochs, switch_fraction=0.75):
        if total_epochs <= 0:
            raise ConfigError("total_epochs must be positive", context={'value': total_epochs})
        if not 0.0 < switch_fraction <= 1.0:
            raise ConfigError("switch_fraction must lie in (0, 1]",
                              context={'value': switch_fraction})
        self.total_epochs = int(total_epochs)
        self.switch_fraction = switch_fraction

    @property
    def switch_epoch(self):
        """
        >>> CurriculumSchedule(100).switch_epoch
        75
        >>> CurriculumSchedule(1).switch_epoch
        1
        """
        return int(math.ceil(Fraction(repr(float(self.switch_fraction))) * self.total_epochs))


def curriculum_phase(epoch, schedule):
    if not 0 <= epoch < schedule.total_epochs:
        raise ConfigError("epoch out of range",
                          context={'epoch': epoch, 'total_epochs': schedule.total_epochs})
    return GROUND_TRUTH if epoch < schedule.switch_epoch else PREDICTED


### Training loop

class EpochRecord(object):
    """Batch-size weighted means of one epoch's losses"""

    def __init__(self, epoch, phase, total, kl, ja, tactile, arm, wall_ms, violations=0):
        self.epoch = epoch
        self.phase = phase
        self.total = total
        self.kl = kl
        self.ja = ja
        self.tactile = tactile
        self.arm = arm
        self.wall_ms = wall_ms
        self.violations = violations

    def row(self):
        values = [self.total, self.kl, self.ja, self.tactile, self.arm]
        return "\t".join([str(self.epoch), PHASE_TAGS[self.phase]]
                         + [format_real(v) for v in values] + ["%d" % self.wall_ms])


class TrainResult(object):
    """The trained model with its per-epoch records and output paths"""

    def __init__(self, model, records, samples, metrics_path=None, checkpoint_path=None):
        self.model = model
        self.records = records
        self.samples = samples
        self.metrics_path = metrics_path
        self.checkpoint_path = checkpoint_path

    @property
    def final(self):
        return self.records[-1]


@check_finite("epoch loss")
def _weighted_means(sums, count):
    return np.asarray(sums, dtype=np.float64) / float(count)


def _run_batch(model, samples, indices, noise, phase, variant, epoch, number):
    T.reset_graph()
    model.params.zero_grad()
    bundle = model.forward_train(samples.batch(indices, noise), phase, variant)
    if not math.isfinite(bundle.total_value):
        T.reset_graph()
        raise NumericError("non-finite training loss",
                           context={'epoch': epoch, 'batch': number})
    T.backward(bundle.total)
    return bundle


def train(episodes, config, out_dir=None, variant=None, seed=None, samples=None):
    """Trains a policy on recorded episodes.

    Args:
        episodes -- list of Episode
        config   -- a RunConfig

    Keyword Args:
        out_dir  -- where the metrics log and checkpoints go; nothing is
                    written when None
        variant  -- overrides the configured variant
        seed     -- overrides the configured seed
        samples  -- a prebuilt SampleSet of the same episodes, to share
                    windows and statistics between runs

    Returns:
        A TrainResult

    Raises:
        FormatError  -- the dataset is empty
        NumericError -- a loss or gradient stopped being finite
    """
    if not episodes:
        raise FormatError("cannot train on an empty dataset")
    variant = PolicyVariant.validate(variant or config.variant)
    seed = config.seed if seed is None else seed
    policy_config = config.policy_config(variant=variant, seed=seed)
    if samples is None:
        samples = SampleSet(episodes, policy_config, floor=config.std_floor)
    model = PolicyModel(policy_config, stats=samples.stats, weights=config.loss_weights())
    state = OptimizerState(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    schedule = CurriculumSchedule(config.epochs, config.switch_fraction)
    uses_feedback = PolicyVariant.has(variant, 'feedback')
    log_name = "pyvitac.training"

    metrics_path = None
    if out_dir is not None:
        if not os.path.isdir(out_dir):
            os.makedirs(out_dir)
        metrics_path = os.path.join(out_dir, METRICS_NAME)
        with open(metrics_path, 'w') as handle:
            handle.write(DIGEST_PREFIX + config.digest() + "\n")
            handle.write("\t".join(METRIC_COLUMNS) + "\n")

    _log("training %s on %d samples for %d epochs (%d parameters)"
         % (variant, len(samples), config.epochs, model.params.count()), log_name=log_name)
    records = []
    count = len(samples)
    for epoch in range(config.epochs):
        phase = curriculum_phase(epoch, schedule) if uses_feedback else GROUND_TRUTH
        started = time.time()
        order = rng_for(seed, epoch, SHUFFLE_KEY).permutation(count)
        sums = np.zeros(5)
        violations = 0
        for number, start in enumerate(range(0, count, config.batch_size)):
            indices = order[start:start + config.batch_size]
            noise = rng_for(seed, epoch, number, NOISE_KEY).standard_normal(
                (len(indices), policy_config.latent_dim))
            bundle = _run_batch(model, samples, indices, noise, phase, variant, epoch, number)
            grads = dict((name, param.grad) for name, param in model.params.items())
            values, state = adam_step(model.params.arrays(), grads, state)
            model.params.assign(values)
            sums += len(indices) * np.array([bundle.total_value, bundle.kl, bundle.ja,
                                             bundle.tactile, bundle.arm])
            violations += bundle.arm_violations

        means = _weighted_means(sums, count)
        wall_ms = int(round(1000.0 * (time.time() - started)))
        record = EpochRecord(epoch, phase, *means, wall_ms=wall_ms, violations=violations)
        records.append(record)
        _log("epoch %d/%d %s L_total=%.6g L_KL=%.6g L_JA=%.6g L_tactile=%.6g L_arm=%.6g"
             % (epoch + 1, config.epochs, PHASE_TAGS[phase], record.total, record.kl,
                record.ja, record.tactile, record.arm), log_name=log_name)
        if violations:
            _log("epoch %d: %d predicted joint values outside the joint limits"
                 % (epoch + 1, violations), level=logging.WARNING, log_name=log_name)
        if metrics_path is not None:
            with open(metrics_path, 'a') as handle:
                handle.write(record.row() + "\n")
            every = config.checkpoint_every
            if every and (epoch + 1) % every == 0 and epoch + 1 < config.epochs:
                save_checkpoint(model, os.path.join(out_dir, EPOCH_CHECKPOINT_NAME % (epoch + 1)))

    checkpoint_path = None
    if out_dir is not None:
        checkpoint_path = os.path.join(out_dir, CHECKPOINT_NAME)
        save_checkpoint(model, checkpoint_path)
    return TrainResult(model, records, samples, metrics_path, checkpoint_path)


def read_metrics(path):
    """Returns (config digest, list of row field lists) of a metrics log"""
    with open(path) as handle:
        lines = handle.read().splitlines()
    if not lines or not lines[0].startswith(DIGEST_PREFIX):
        raise FormatError("metrics log does not start with a config digest",
                          context={'path': path})
    digest = lines[0][len(DIGEST_PREFIX):].strip()
    rows = [line.split("\t") for line in lines[2:] if line.strip()]
    return digest, rows


def metrics_digest(path):
    """Hash of a metrics log without its wall clock column, so two runs of
    the same configuration hash equal"""
    with open(path) as handle:
        lines = handle.read().splitlines()
    kept = []
    for line in lines:
        if line.startswith("#"):
            kept.append(line)
        else:
            kept.append("\t".join(line.split("\t")[:-1]))
    return sha256_hex("\n".join(kept))
