import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from edgepress.model import LayerSpec, ModelConfig, build_model

settings.register_profile("edgepress", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("edgepress")


def small_config(input_shape=(6, 9, 2), seed=3, activation="relu"):
    """A miniature CNN with every layer kind the reference CNN uses."""
    layers = [
        dict(kind="conv2d", name="c1", filters=3, kernel_size=[3, 2], padding="same"),
        dict(kind="activation", name="a1", function=activation),
        dict(kind="maxpool", name="p1", pool_size=[2, 2]),
        dict(kind="flatten", name="f"),
        dict(kind="dense", name="d1", units=8, regularization={"l1": 3e-4, "l2": 4e-3, "bias_l2": 3e-3}),
        dict(kind="activation", name="a2", function=activation),
        dict(kind="dense", name="d2", units=1, regularization={"l1": 1e-3, "l2": 1e-2, "bias_l2": 1e-2}),
        dict(kind="activation", name="out", function="sigmoid"),
    ]
    return ModelConfig(list(input_shape), [LayerSpec.from_dict(d) for d in layers], seed=seed)


def lstm_config(input_shape=(5, 6, 2), seed=3):
    layers = [
        dict(kind="conv2d", name="c1", filters=3, kernel_size=3, padding="same"),
        dict(kind="lstm", name="lstm", units=4),
        dict(kind="attention", name="att", units=3),
        dict(kind="dense", name="d", units=1),
        dict(kind="activation", name="out", function="sigmoid"),
    ]
    return ModelConfig(list(input_shape), [LayerSpec.from_dict(d) for d in layers], seed=seed)


def separable_set(n, shape, seed=0):
    """Two Gaussian blobs whose means differ along every input dimension."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n,) + tuple(shape)).astype(np.float32) + (2.0 * y - 1.0).reshape((-1,) + (1,) * len(shape))
    return X, y


@pytest.fixture
def small_model():
    return build_model(small_config())


@pytest.fixture(scope="session")
def small_data():
    X, y = separable_set(64, (6, 9, 2), seed=1)
    return (X[:48], y[:48]), (X[48:], y[48:])


ACCEPTANCE = {}


def record(n, ok, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE[n] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
