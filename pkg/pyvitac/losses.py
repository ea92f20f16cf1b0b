"""Training objectives: the style KL term, L1 terms on actions and on future
tactile readings, the forward kinematics based arm term, and their weighted
sum."""

import math

from pyvitac import tensor as T
from pyvitac.errors import ConfigError, ShapeError


class LossWeights(object):
    """Weights of the four loss terms, and of the position and rotation
    parts of the arm term"""

    def __init__(self, w_kl=10.0, w_ja=1.0, w_tactile=1.0, w_arm=1.0,
                 lambda_position=1.0, lambda_rotation=1.0):
        self.w_kl = float(w_kl)
        self.w_ja = float(w_ja)
        self.w_tactile = float(w_tactile)
        self.w_arm = float(w_arm)
        self.lambda_position = float(lambda_position)
        self.lambda_rotation = float(lambda_rotation)
        for name, value in self.as_dict().items():
            if not math.isfinite(value) or value < 0:
                raise ConfigError("loss weight %s must be finite and nonnegative" % name,
                                  context={'value': value})

    def as_dict(self):
        return {
            'w_kl': self.w_kl,
            'w_ja': self.w_ja,
            'w_tactile': self.w_tactile,
            'w_arm': self.w_arm,
            'lambda_position': self.lambda_position,
            'lambda_rotation': self.lambda_rotation,
        }


def _check_same_shape(pred, target, label):
    if pred.shape != target.shape:
        raise ShapeError("%s prediction and target differ in shape" % label,
                         context={'pred': pred.shape, 'target': target.shape})


def kl_diag_gaussian(mu, logvar):
    """KL divergence of N(mu, exp(logvar)) from the standard normal, summed
    over the latent axis and averaged over any leading batch axes.

    Args:
        mu     -- Tensor [Z] or [B, Z]
        logvar -- Tensor of the same shape
    """
    _check_same_shape(mu, logvar, "kl")
    inner = T.sub(T.add(T.exp(logvar), T.square(mu)), T.add(logvar, 1.0))
    per_sample = T.mul(T.reduce_sum(inner, axis=-1), 0.5)
    if per_sample.ndim == 0:
        return per_sample
    return T.reduce_mean(per_sample)


def action_l1(pred, target):
    """Mean absolute error over every entry of two action chunks"""
    _check_same_shape(pred, target, "action")
    return T.reduce_mean(T.absolute(T.sub(pred, target)))


def tactile_l1(pred, target):
    """Mean absolute error over every entry of two future tactile windows"""
    _check_same_shape(pred, target, "tactile")
    return T.reduce_mean(T.absolute(T.sub(pred, target)))


class ArmTerms(object):
    """The position and rotation parts of the arm term, plus the number of
    predicted joint values found outside the joint limits"""

    def __init__(self, position, rotation, total, violations):
        self.position = position
        self.rotation = rotation
        self.total = total
        self.violations = violations


def arm_terms(pred, target, fk, lambda_position=1.0, lambda_rotation=1.0,
              arm_offsets=(0,)):
    """Compares the end effector poses of predicted and target joint
    values.

    Args:
        pred, target -- Tensors [..., P] of (denormalized) joint values
        fk           -- an object whose forward(joints) returns lists of three
                        position and three rotation Tensors [..., 1]

    Keyword Args:
        lambda_position -- weight of the mean squared position error
        lambda_rotation -- weight of the mean absolute rotation error
        arm_offsets     -- column where each arm's joints start in P

    Returns:
        An ArmTerms instance; positions and rotations are averaged over all
        frames and over the arms
    """
    _check_same_shape(pred, target, "arm")
    if not arm_offsets:
        raise ShapeError("arm loss needs at least one arm")
    width = fk.n_joints
    position = None
    rotation = None
    violations = 0
    for offset in arm_offsets:
        pred_joints = T.slice_axis(pred, -1, offset, offset + width)
        target_joints = T.slice_axis(target, -1, offset, offset + width)
        if hasattr(fk, 'count_violations'):
            violations += fk.count_violations(pred_joints.data)
        pred_pos, pred_rot = fk.forward(pred_joints)
        target_pos, target_rot = fk.forward(target_joints)

        squared = T.square(T.sub(pred_pos[0], target_pos[0]))
        for p, t in zip(pred_pos[1:], target_pos[1:]):
            squared = T.add(squared, T.square(T.sub(p, t)))
        absolute = T.absolute(T.sub(pred_rot[0], target_rot[0]))
        for p, t in zip(pred_rot[1:], target_rot[1:]):
            absolute = T.add(absolute, T.absolute(T.sub(p, t)))

        arm_pos = T.reduce_mean(squared)
        arm_rot = T.reduce_mean(absolute)
        position = arm_pos if position is None else T.add(position, arm_pos)
        rotation = arm_rot if rotation is None else T.add(rotation, arm_rot)

    count = float(len(arm_offsets))
    position = T.div(position, count)
    rotation = T.div(rotation, count)
    total = T.add(T.mul(position, lambda_position), T.mul(rotation, lambda_rotation))
    return ArmTerms(position, rotation, total, violations)


def arm_loss(pred, target, fk, lambda_position=1.0, lambda_rotation=1.0,
             arm_offsets=(0,)):
    """lambda_position * L_position + lambda_rotation * L_rotation"""
    return arm_terms(pred, target, fk, lambda_position, lambda_rotation,
                     arm_offsets).total


def composite_loss(parts, weights):
    """Weighted sum of the loss parts.

    Args:
        parts   -- mapping with keys 'kl', 'ja', 'tactile' and 'arm' to scalar
                   Tensors; missing or None entries contribute nothing
        weights -- a LossWeights instance

    Returns:
        ((w_kl * kl + w_ja * ja) + w_tactile * tactile) + w_arm * arm
    """
    order = (('kl', weights.w_kl), ('ja', weights.w_ja),
             ('tactile', weights.w_tactile), ('arm', weights.w_arm))
    total = None
    for key, weight in order:
        part = parts.get(key)
        if part is None:
            continue
        term = T.mul(part, weight)
        total = term if total is None else T.add(total, term)
    if total is None:
        return T.zeros(())
    return total
