"""Finite difference checks of every backward rule, layer, fusion site,
loss and of the whole policy.

Each suite reports the worst relative error it saw together with the step
and tolerance it used.  The operation suite probes every kind registered in
BACKWARD_RULES on its own, so a broken rule is reported by name.
"""

import logging

import numpy as np

from pyvitac import tensor as T
from pyvitac.errors import VerificationError
from pyvitac.fusion import CrossModalFusion, ModalityTokens, cross_modal_fuse
from pyvitac.kinematics import ForwardKinematics
from pyvitac.layers import (AttentionConfig, DecoderBlock, EncoderBlock,
                            MultiHeadAttention, init_params)
from pyvitac.losses import action_l1, arm_loss, kl_diag_gaussian, tactile_l1
from pyvitac.policy import PREDICTED, Batch, Observation, PolicyModel
from pyvitac.utilities import _log, rng_for


EPS = 1e-5
RTOL = 1e-4
MODEL_RTOL = 1e-3
MODEL_SAMPLES = 20
SUITES = ('ops', 'layers', 'fusion', 'losses', 'model')


class SuiteResult(object):
    """Worst error of one suite, and the labels of the checks that failed"""

    def __init__(self, name, rtol, eps=EPS):
        self.name = name
        self.rtol = rtol
        self.eps = eps
        self.worst = 0.0
        self.failures = []

    def record(self, label, error):
        self.worst = max(self.worst, error)
        if not error < self.rtol:
            self.failures.append((label, error))

    @property
    def passed(self):
        return not self.failures

    def line(self):
        status = 'ok' if self.passed else 'FAILED (%s)' % ", ".join(
            "%s %.3g" % failure for failure in self.failures)
        return "%-8s worst=%.3e eps=%g rtol=%g %s" % (self.name, self.worst, self.eps,
                                                      self.rtol, status)


class VerifyReport(object):

    def __init__(self, results):
        self.results = results

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def failing(self):
        return [label for r in self.results for label, _ in r.failures]

    def to_text(self):
        return "\n".join(r.line() for r in self.results) + "\n"

    def require_passed(self):
        if not self.passed:
            raise VerificationError("gradient check failed",
                                    context={'failing': ",".join(self.failing())})
        return self


def _leaf(values):
    return T.Tensor(values, requires_grad=True)


def _weighted_sum(y, weights):
    return T.reduce_sum(T.mul(y, T.Tensor(weights)))


def _op_probes(rng):
    """One scalar function of a [2, 3] input per operation kind"""
    c23 = rng.uniform(0.5, 1.5, size=(2, 3))
    c32 = rng.uniform(0.5, 1.5, size=(3, 2))
    w34 = rng.uniform(-1.0, 1.0, size=(3, 4))
    c24 = rng.uniform(0.5, 1.5, size=(2, 4))
    c43 = rng.uniform(0.5, 1.5, size=(4, 3))
    c223 = rng.uniform(0.5, 1.5, size=(2, 2, 3))
    gain = T.Tensor(rng.uniform(0.5, 1.5, size=3))
    bias = T.Tensor(rng.uniform(-0.5, 0.5, size=3))
    unary = lambda kind: (lambda x: _weighted_sum(T.elementwise(kind, x), c23))
    probes = dict((kind, unary(kind)) for kind in T.UNARY_KINDS)
    probes.update({
        'add': lambda x: _weighted_sum(T.add(x, T.Tensor(c23)), c23),
        'sub': lambda x: _weighted_sum(T.sub(T.Tensor(c23), x), c23),
        'mul': lambda x: _weighted_sum(T.mul(x, x), c23),
        'div': lambda x: _weighted_sum(T.div(T.Tensor(c23), x), c23),
        'matmul': lambda x: _weighted_sum(T.matmul(x, T.Tensor(w34)), c24),
        'sum': lambda x: T.reduce_sum(T.square(T.reduce_sum(x, axis=1))),
        'mean': lambda x: T.reduce_sum(T.square(T.reduce_mean(x, axis=0))),
        'max': lambda x: _weighted_sum(T.reduce_max(x, axis=1), c23[:, 0]),
        'reshape': lambda x: _weighted_sum(T.reshape(x, (3, 2)), c32),
        'transpose': lambda x: _weighted_sum(T.transpose(x), c32),
        'concat': lambda x: _weighted_sum(T.concat([x, T.square(x)], axis=0), c43),
        'slice': lambda x: T.reduce_sum(T.square(T.slice_axis(x, 1, 1, 3))),
        'stack': lambda x: _weighted_sum(T.stack([x, T.square(x)], axis=0), c223),
        'softmax': lambda x: _weighted_sum(T.softmax(x, axis=-1), c23),
        'layer_norm': lambda x: _weighted_sum(T.layer_norm(x, gain, bias), c23),
    })
    return probes


def check_ops(seed=0, rtol=RTOL, eps=EPS):
    """Probes every registered backward rule at a point away from kinks
    and ties"""
    rng = rng_for(seed)
    probes = _op_probes(rng)
    result = SuiteResult('ops', rtol, eps)
    # distinct positive values, away from relu/abs kinks and max ties
    point = np.array([[0.7, 1.3, 0.4], [1.1, 0.55, 0.9]])
    for kind in sorted(T.BACKWARD_RULES):
        probe = probes.get(kind)
        if probe is None:
            result.record(kind + ' (no probe)', np.inf)
            continue
        result.record(kind, T.finite_diff_check(probe, _leaf(point.copy()), eps))
    return result


def _param_suite(name, loss_fn, params, inputs, rtol, eps, samples=40):
    result = SuiteResult(name, rtol, eps)
    for label, (fn, x) in inputs.items():
        result.record(label, T.finite_diff_check(fn, x, eps))
    worst, details = T.finite_diff_check_params(loss_fn, params, n_samples=samples,
                                                seed=0, eps=eps)
    for pname, index, error in details:
        result.record("%s[%d]" % (pname, index), error)
    return result


def check_layers(seed=0, rtol=RTOL, eps=EPS, model_dim=8, n_heads=2, length=3):
    """Two stacked encoder blocks feeding a decoder block, and a bare
    attention layer"""
    rng = rng_for(seed, 1)
    cfg = AttentionConfig(model_dim, n_heads)
    params = init_params(seed)
    encoders = [EncoderBlock(params, 'check.enc%d' % i, cfg) for i in range(2)]
    decoder = DecoderBlock(params, 'check.dec', cfg)
    attention = MultiHeadAttention(params, 'check.mha', cfg)
    tokens = _leaf(rng.normal(size=(length, model_dim)))
    queries = T.Tensor(rng.normal(size=(length - 1, model_dim)))
    weights = rng.uniform(0.5, 1.5, size=(length - 1, model_dim))
    weights_full = rng.uniform(0.5, 1.5, size=(length, model_dim))

    def stack_loss(x):
        memory = x
        for block in encoders:
            memory = block(memory)
        return _weighted_sum(decoder(queries, memory), weights)

    def attention_loss(x):
        return _weighted_sum(attention(x, x), weights_full)

    def loss():
        return T.add(stack_loss(tokens), attention_loss(tokens))

    return _param_suite('layers', loss, params,
                        {'encoder-decoder input': (stack_loss, tokens),
                         'attention input': (attention_loss, tokens)}, rtol, eps)


def check_fusion(seed=0, rtol=RTOL, eps=EPS, model_dim=8, n_heads=2):
    rng = rng_for(seed, 2)
    cfg = AttentionConfig(model_dim, n_heads)
    params = init_params(seed)
    fusion = CrossModalFusion(params, 'check.fusion', cfg)
    visual = _leaf(rng.normal(size=(4, model_dim)))
    tactile = _leaf(rng.normal(size=(3, model_dim)))
    weights = rng.uniform(0.5, 1.5, size=(7, model_dim))

    def loss_visual(v):
        return _weighted_sum(cross_modal_fuse(ModalityTokens(v, tactile), fusion), weights)

    def loss_tactile(t):
        return _weighted_sum(cross_modal_fuse(ModalityTokens(visual, t), fusion), weights)

    return _param_suite('fusion', lambda: loss_visual(visual), params,
                        {'visual tokens': (loss_visual, visual),
                         'tactile tokens': (loss_tactile, tactile)}, rtol, eps)


def check_losses(seed=0, rtol=RTOL, eps=EPS):
    rng = rng_for(seed, 3)
    result = SuiteResult('losses', rtol, eps)
    mu = _leaf(rng.normal(size=(2, 4)))
    logvar = T.Tensor(rng.normal(scale=0.5, size=(2, 4)))
    result.record('kl mu', T.finite_diff_check(lambda m: kl_diag_gaussian(m, logvar), mu, eps))
    result.record('kl logvar', T.finite_diff_check(
        lambda lv: kl_diag_gaussian(T.Tensor(mu.data), lv), _leaf(logvar.data.copy()), eps))

    target = rng.normal(size=(3, 6))
    # offsets of at least 0.2 keep the L1 terms away from their kinks
    offsets = rng.uniform(0.2, 1.0, size=(3, 6)) * rng.choice([-1.0, 1.0], size=(3, 6))
    result.record('action l1', T.finite_diff_check(
        lambda p: action_l1(p, T.Tensor(target)), _leaf(target + offsets), eps))
    result.record('tactile l1', T.finite_diff_check(
        lambda p: tactile_l1(p, T.Tensor(target)), _leaf(target - offsets), eps))

    fk = ForwardKinematics()
    joints = rng.uniform(-1.0, 1.0, size=(4, 6))
    reference = T.Tensor(joints + rng.uniform(0.3, 0.6, size=(4, 6)))
    result.record('arm', T.finite_diff_check(
        lambda p: arm_loss(p, reference, fk, 1.0, 0.5, (0, 3)), _leaf(joints), eps))
    return result


def _random_batch(config, rng):
    views = [rng.uniform(0.0, 1.0, size=(1,) + tuple(view)) for view in config.views]
    observation = Observation(views,
                              rng.normal(size=(1, config.tactile_history, config.tactile_width)),
                              rng.normal(size=(1, config.proprio_history, config.proprio_dim)))
    return Batch(observation,
                 rng.normal(size=(1, config.action_horizon, config.proprio_dim)),
                 rng.normal(size=(1, config.tactile_future, config.tactile_width)),
                 rng.normal(size=(1, config.latent_dim)))


def check_model(run_config, seed=0, rtol=MODEL_RTOL, eps=EPS, samples=MODEL_SAMPLES):
    """The composite training loss of the full policy on one sample, in the
    curriculum phase that feeds predicted tactile back"""
    config = run_config.policy_config(variant='full', seed=seed)
    model = PolicyModel(config, weights=run_config.loss_weights())
    batch = _random_batch(config, rng_for(seed, 4))

    def loss():
        return model.forward_train(batch, PREDICTED).total

    result = SuiteResult('model', rtol, eps)
    worst, details = T.finite_diff_check_params(loss, model.params, n_samples=samples,
                                                seed=seed, eps=eps)
    for name, index, error in details:
        result.record("%s[%d]" % (name, index), error)
    return result


def run_suites(run_config, suites=SUITES, seed=0):
    """Runs the named suites in order.

    Args:
        run_config -- a RunConfig; its model shape sizes the model suite

    Returns:
        A VerifyReport
    """
    results = []
    for name in suites:
        if name == 'ops':
            result = check_ops(seed)
        elif name == 'layers':
            result = check_layers(seed)
        elif name == 'fusion':
            result = check_fusion(seed)
        elif name == 'losses':
            result = check_losses(seed)
        elif name == 'model':
            result = check_model(run_config, seed)
        else:
            raise VerificationError("unknown verification suite %r" % name,
                                    context={'known': ",".join(SUITES)})
        level = logging.INFO if result.passed else logging.ERROR
        _log(result.line(), level=level, log_name="pyvitac.verify")
        results.append(result)
    return VerifyReport(results)
