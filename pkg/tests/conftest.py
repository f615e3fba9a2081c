import numpy as np
import pytest

from pcaglue.basis import train_basis
from pcaglue.phantom import Inclusion, MotionSpec, SceneSpec, simulate_pair, training_fields


@pytest.fixture(scope="session")
def basis_512x64():
    return train_basis(training_fields(512, 64, 150, seed=1))


@pytest.fixture(scope="session")
def compression_pair():
    scene = SceneSpec(512, 64, seed=11, noise_db=30.0)
    return simulate_pair(scene, MotionSpec("axial-compression", 5.0))


@pytest.fixture(scope="session")
def inclusion_pair():
    scene = SceneSpec(512, 64, seed=12, noise_db=30.0, inclusion=Inclusion(256, 32, 60, 3.0))
    return simulate_pair(scene, MotionSpec("axial-compression", 5.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    for mod in list(sys.modules.values()):
        results = getattr(mod, "ACCEPTANCE_RESULTS", None)
        if isinstance(results, dict) and results:
            terminalreporter.section("acceptance criteria")
            for n in sorted(results):
                terminalreporter.write_line(results[n])
            break
