import numpy as np
import pytest

from potsbench.core import SampleSet, mask_from_missing
from potsbench.pipeline import csv_recipe, frame_from_arrays, prepare


def sinusoid_frame(length=2400, n_features=4, period=24, noise=0.05, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    cols = [np.sin(2 * np.pi * t / period + 0.7 * d) + noise * rng.standard_normal(length) for d in range(n_features)]
    return frame_from_arrays(np.stack(cols, axis=1))


def linear_target_frame(length=4800, periods=(17.0, 29.0, 41.0, 53.0), noise=0.05, seed=0):
    """Sinusoids with incommensurate periods plus a final ``y`` column that is a fixed linear mix of them.

    The periods do not divide typical window lengths, so windows differ and the
    features carry information about the target.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    x = np.stack([np.sin(2 * np.pi * t / p + rng.uniform(0, 2 * np.pi)) for p in periods], axis=1)
    x += noise * rng.standard_normal(x.shape)
    y = x @ rng.standard_normal(len(periods)) + noise * rng.standard_normal(length)
    names = [f"x{i}" for i in range(len(periods))] + ["y"]
    return frame_from_arrays(np.column_stack([x, y]), feature_names=names)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_set(rng):
    values = rng.standard_normal((3, 10, 4))
    values[rng.random(values.shape) < 0.2] = np.nan
    return mask_from_missing(values)


@pytest.fixture
def full_set(rng):
    values = rng.standard_normal((4, 12, 3))
    return SampleSet(values, np.ones(values.shape, dtype=np.uint8))


@pytest.fixture(scope="session")
def sinusoid_data():
    return prepare(csv_recipe("sinusoid", "unused.csv", 48), sinusoid_frame())


# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
