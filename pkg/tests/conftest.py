import numpy as np
import pytest

from jumpctl.model import builtin_model


@pytest.fixture(scope="session")
def planar5():
    return builtin_model("planar5")


@pytest.fixture(scope="session")
def kuavo16():
    return builtin_model("kuavo16")


@pytest.fixture(scope="session")
def pointleg5():
    return builtin_model("pointleg5")


@pytest.fixture(scope="session")
def masslessleg5():
    return builtin_model("masslessleg5")


def random_states(model, n, seed=0, qdot_scale=2.0):
    """Joint-limit-respecting random (q, qdot) samples for a model."""
    rng = np.random.default_rng(seed)
    lo, hi = model.joint_limits()
    lo = np.where(np.isinf(lo), -1.0, lo)
    hi = np.where(np.isinf(hi), 1.0, hi)
    for _ in range(n):
        q = rng.uniform(lo, hi)
        qdot = rng.uniform(-qdot_scale, qdot_scale, model.dof)
        yield q, qdot
