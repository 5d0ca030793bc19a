import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from magcalderon.oracle import ElectromagneticScenario, SymbolOracle
from magcalderon.scenarios import get_scenario

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def minkowski():
    return get_scenario("minkowski-disk")


@pytest.fixture(scope="session")
def euclid():
    return get_scenario("euclid-box").metric


@pytest.fixture(scope="session")
def mink_oracle(minkowski):
    return SymbolOracle(ElectromagneticScenario.from_scenario(minkowski))


@pytest.fixture(scope="session")
def oracle_for():
    cache = {}

    def make(name):
        if name not in cache:
            cache[name] = SymbolOracle(ElectromagneticScenario.from_scenario(get_scenario(name)))
        return cache[name]

    return make


@pytest.fixture
def no_clamp_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def curve_distance(traj, points, gap=1e-3):
    """Distance from points to a traced curve, refined on the dense output."""
    from scipy.optimize import minimize_scalar

    out = []
    for p in np.atleast_2d(points):
        best = np.inf
        for leg in traj.legs:
            s, X = leg.dense_points(gap)
            i = int(np.argmin(np.linalg.norm(X - p, axis=1)))
            lo, hi = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
            if hi <= lo:
                best = min(best, float(np.linalg.norm(X[i] - p)))
                continue
            res = minimize_scalar(lambda t: float(np.sum((leg.state(np.array([t]))[0, : p.size] - p) ** 2)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
            best = min(best, float(np.sqrt(res.fun)), float(np.linalg.norm(X[i] - p)))
        out.append(best)
    return np.array(out)
