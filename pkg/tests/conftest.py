import sys

import numpy as np
import pytest

from timeik.collision import CollisionWorld
from timeik.kinematics import ChainModel, DualArmSystem, Joint, Pose
from timeik.robot_file import load_scene


def planar_arm(lengths, vel=1.0, acc=1.0, limit=3.0, radius=None):
    joints = []
    offset = 0.0
    for L in lengths:
        joints.append(Joint([0, 0, 1], Pose([offset, 0, 0]), -limit, limit, vel, acc))
        offset = L
    spheres = ()
    if radius is not None:
        spheres = [[[0, 0, 0, radius]]] + [[[x, 0, 0, radius] for x in np.linspace(0, L, 4)] for L in lengths]
    return ChainModel(joints, Pose([lengths[-1], 0, 0]) if lengths else Pose(), spheres)


@pytest.fixture(scope="session")
def desk():
    return CollisionWorld.from_scene(load_scene("desk"))


@pytest.fixture(scope="session")
def desk_open():
    return CollisionWorld.from_scene(load_scene("desk_open"))


@pytest.fixture(scope="session")
def spatial_sys():
    rng = np.random.default_rng(42)
    from oracles import random_chain
    return DualArmSystem(random_chain(rng, 6), random_chain(rng, 7),
                         Pose([0, 0, 0.1], [1, 0, 0, 0]), Pose([0.9, 0.1, 0], rng.normal(size=4)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
