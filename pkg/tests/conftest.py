import logging

import numpy as np
import pytest
from hypothesis import settings

from epiforge.camera import Pose3D
from epiforge.synth import generate_poses, generate_scene

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    def record(name, passed, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="epiforge")


@pytest.fixture(scope="session")
def scene4():
    return generate_scene(n_cameras=4, n_frames=20, seed=3)


@pytest.fixture(scope="session")
def scene2():
    return generate_scene(n_cameras=2, n_frames=5, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def poses17():
    return generate_poses(50, seed=99)


def random_pose(rng, J=17, scale=400.0):
    return Pose3D(rng.normal(scale=scale, size=(J, 3)))
