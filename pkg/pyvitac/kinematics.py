"""Forward and inverse kinematics of the planar three link arm that stands in
for the first joints of each seven joint arm.

Positions are reported as 3-vectors (x, y, 0) and orientations as axis-angle
3-vectors (0, 0, theta), so the arm loss can treat this arm like a spatial
one.
"""

import math

import numpy as np

from pyvitac import tensor as T
from pyvitac.errors import DomainError, ShapeError


LINK_LENGTHS = (1.0, 1.0, 1.0)
BASE = (0.5, -1.5)
JOINT_LIMIT = math.pi
TOOL_ANGLE = math.pi / 2


def wrap_angle(angle):
    """Maps an angle into [-pi, pi)

    >>> abs(wrap_angle(3 * math.pi / 2) + math.pi / 2) < 1e-12
    True
    """
    return (angle + math.pi) % (2 * math.pi) - math.pi


class ForwardKinematics(object):
    """Planar chain of unit links anchored below the unit workspace box.

    Keyword Args:
        base  -- (x, y) position of the first joint
        links -- the three link lengths
        limit -- joints are expected to lie in [-limit, limit]
    """

    n_joints = 3

    def __init__(self, base=BASE, links=LINK_LENGTHS, limit=JOINT_LIMIT):
        self.base = tuple(float(b) for b in base)
        self.links = tuple(float(l) for l in links)
        self.limit = float(limit)

    def forward(self, joints):
        """Differentiable forward kinematics.

        Args:
            joints -- Tensor [..., n] with n >= 3; the first three columns are
                      the chain's joint angles

        Returns:
            (position, rotation), each a list of three Tensors [..., 1]
        """
        if joints.shape[-1] < self.n_joints:
            raise ShapeError("forward kinematics needs %d joint columns" % self.n_joints,
                             context={'shape': joints.shape})
        x = self.base[0]
        y = self.base[1]
        angle = None
        for i, length in enumerate(self.links):
            q = T.slice_axis(joints, -1, i, i + 1)
            angle = q if angle is None else T.add(angle, q)
            x = T.add(T.mul(T.cos(angle), length), x)
            y = T.add(T.mul(T.sin(angle), length), y)
        zero = T.zeros(angle.shape)
        return [x, y, zero], [zero, zero, angle]

    def pose(self, joints):
        """Forward kinematics on plain arrays: returns (x, y, tool angle)"""
        q = np.asarray(joints, dtype=np.float64)[:self.n_joints]
        angles = np.cumsum(q)
        x = self.base[0] + sum(l * math.cos(a) for l, a in zip(self.links, angles))
        y = self.base[1] + sum(l * math.sin(a) for l, a in zip(self.links, angles))
        return x, y, float(angles[-1])

    def position(self, joints):
        x, y, _ = self.pose(joints)
        return np.array([x, y])

    def inverse(self, point, tool_angle=TOOL_ANGLE):
        """Joint angles placing the tool tip at `point` with the given tool
        orientation, taking the positive elbow branch.

        Raises:
            DomainError -- if the point is out of reach
        """
        l1, l2, l3 = self.links
        wx = point[0] - l3 * math.cos(tool_angle) - self.base[0]
        wy = point[1] - l3 * math.sin(tool_angle) - self.base[1]
        c2 = (wx * wx + wy * wy - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
        if not -1.0 <= c2 <= 1.0:
            raise DomainError("point out of reach of the arm", index=0,
                              context={'x': point[0], 'y': point[1]})
        q2 = math.acos(c2)
        q1 = math.atan2(wy, wx) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
        q3 = wrap_angle(tool_angle - q1 - q2)
        return np.array([q1, q2, q3])

    def count_violations(self, joints):
        """Counts joint values outside [-limit, limit] in an array whose last
        axis holds (at least) the chain's joints"""
        q = np.asarray(joints)[..., :self.n_joints]
        return int(np.count_nonzero(np.abs(q) > self.limit))
