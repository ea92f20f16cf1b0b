import math

import numpy as np
import pytest

from pyvitac import tensor as T
from pyvitac.errors import DomainError, ShapeError
from pyvitac.kinematics import TOOL_ANGLE, ForwardKinematics, wrap_angle


@pytest.fixture
def fk():
    return ForwardKinematics()


def test_straight_arm(fk):
    x, y, angle = fk.pose([0.0, 0.0, 0.0])
    assert (x, y, angle) == (3.5, -1.5, 0.0)


def test_inverse_reaches_the_whole_box(fk):
    for px in np.linspace(0.0, 1.0, 6):
        for py in np.linspace(0.0, 1.0, 6):
            joints = fk.inverse((px, py))
            x, y, angle = fk.pose(joints)
            assert abs(x - px) < 1e-12 and abs(y - py) < 1e-12
            assert abs(wrap_angle(angle - TOOL_ANGLE)) < 1e-12
            assert fk.count_violations(joints) == 0


def test_out_of_reach(fk):
    with pytest.raises(DomainError):
        fk.inverse((5.0, 5.0))


def test_tensor_forward_matches_pose(fk):
    joints = np.array([[0.3, -1.1, 0.7, 9.0], [1.2, 0.4, -0.5, 9.0]])
    position, rotation = fk.forward(T.Tensor(joints))
    for row, q in enumerate(joints):
        x, y, angle = fk.pose(q)
        assert position[0].data[row, 0] == pytest.approx(x, abs=1e-12)
        assert position[1].data[row, 0] == pytest.approx(y, abs=1e-12)
        assert rotation[2].data[row, 0] == pytest.approx(angle, abs=1e-12)
        assert position[2].data[row, 0] == 0.0


def test_forward_needs_three_joints(fk):
    with pytest.raises(ShapeError):
        fk.forward(T.zeros((2, 2)))


def test_count_violations(fk):
    joints = np.array([[4.0, 0.0, -4.0, 100.0], [0.0, math.pi, 0.0, 0.0]])
    assert fk.count_violations(joints) == 2


def test_wrap_angle():
    assert wrap_angle(0.5) == pytest.approx(0.5)
    assert wrap_angle(-math.pi) == pytest.approx(-math.pi)
    assert wrap_angle(2 * math.pi + 0.25) == pytest.approx(0.25)
