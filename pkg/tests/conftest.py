"""Shared fixtures: nominal parameters, a small generated dataset, and
a builder for hand-constructed trajectories used by the labeling and
split tests."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import falltime.params as pm
import falltime.scenario as sc

settings.register_profile(
    "suite", deadline=None,
    suppress_health_check=[HealthCheck.too_slow,
                           HealthCheck.data_too_large,
                           HealthCheck.filter_too_much])
settings.load_profile("suite")


@pytest.fixture(scope="session")
def params():
    return pm.RobotParams()


@pytest.fixture(scope="session")
def small_dataset(params):
    """6 abrupt + 6 incipient trajectories, seed 7. Generated once per
    test session; several modules reuse it."""
    cfg = sc.DatasetConfig(count_abrupt=6, count_incipient=6)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        manifest, trajs = sc.generate_dataset(cfg, seed=7, params=params)
    return manifest, trajs


def _build_traj(tid="t0", kind="none", magnitude=0.0, t_start=0.0,
                duration=0.0, fall_time=None, t=None, n=40, dt=0.03,
                t0=2.01, seed=0):
    if t is None:
        t = t0 + dt * np.arange(n)
    t = np.asarray(t, dtype=float)
    rng = np.random.default_rng(seed)
    m = t.size
    q = rng.normal(size=(m, 6))
    qd = rng.normal(size=(m, 6))
    u = rng.normal(size=(m, 3))
    f = np.abs(rng.normal(size=(m, 4)))
    fault = sc.FaultSpec(kind, magnitude, t_start, duration)
    return sc.Trajectory(tid, fault, 0.0, 1, t, q, qd, u, f,
                         fall_time, False)


@pytest.fixture(scope="session")
def make_traj():
    """Builds a synthetic trajectory with arbitrary timing and fault
    metadata; state arrays are random noise (labels ignore them)."""
    return _build_traj
