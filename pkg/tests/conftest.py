import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import A1, A2_EX1, A2_EX2, B  # noqa: E402

from avgpred.certificates import certify  # noqa: E402
from avgpred.harness import load_scenario  # noqa: E402
from avgpred.harness.runner import simulate_scenario  # noqa: E402
from avgpred.plant import SwitchedPlant  # noqa: E402
from avgpred.predictor import AverageSystem, PredictionContext, mean_system  # noqa: E402


def make_example(a2, delay=1.0):
    plant = SwitchedPlant.from_arrays([A1, a2], [B, B], delay)
    avg = AverageSystem.by_poles(*mean_system(plant), [-3, -2])
    return plant, avg


@pytest.fixture(scope="session")
def ex1():
    return make_example(A2_EX1)


@pytest.fixture(scope="session")
def ex2():
    return make_example(A2_EX2)


@pytest.fixture(scope="session")
def ex1_run():
    """Bundled example-1 closed loop: h = 1e-3, horizon 10, seeded signal."""
    sc = load_scenario("example1")
    traj, sig = simulate_scenario(sc)
    ctx = PredictionContext(sc.plant, sc.avg, sig)
    cert = certify(sc.plant, sc.avg, sc.dwell_time)
    return sc, traj, ctx, cert


@pytest.fixture(scope="session")
def flat_plant():
    """Both modes equal to the example-1 average system (zero mismatch)."""
    a_bar = 0.5 * (A1 + A2_EX1)
    plant = SwitchedPlant.from_arrays([a_bar, a_bar], [B, B], 1.0)
    avg = AverageSystem.by_poles(a_bar, B, [-3, -2])
    return plant, avg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
