import sys

import numpy as np
import pytest

from robotkit import nn


@pytest.fixture(scope="session")
def blobs():
    """Four-class synthetic set in [0,1]^16 that a small MLP learns quickly."""
    rng = np.random.default_rng(123)
    centers = rng.uniform(0.2, 0.8, size=(4, 16))
    y = rng.integers(0, 4, size=400)
    x = np.clip(centers[y] + rng.normal(0, 0.08, size=(400, 16)), 0, 1)
    return nn.LabeledDataset(x.astype(np.float32), y)


@pytest.fixture(scope="session")
def blob_model(blobs):
    return nn.train(nn.init_mlp([16, 24, 4], 2), blobs, nn.TrainConfig(30, 16, 0.1, 2))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
