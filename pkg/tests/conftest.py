"""Shared fixtures: small deterministic datasets and model configs.

Everything here is sized for speed; the full-scale experiment lives in
test_acceptance.py behind a session-scoped fixture.
"""

import numpy as np
import pytest

from botuq.datasets import Dataset, SplitSpec, SynthSpec, normalize, split, synth_generate
from botuq.models import ArchConfig, TrainConfig

# Criterion verdicts collected by test_acceptance.py; replayed after the
# test lines so they survive output capture.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_data():
    """24 rows, 6 features, well separated; split and scaled once."""
    d = synth_generate(SynthSpec(n=24, features=6, class_separation=6.0, seed=5))
    tr, te = split(d, SplitSpec(train_fraction=0.7, seed=1))
    tr, stats = normalize(tr)
    te, _ = normalize(te, stats)
    return tr, te


@pytest.fixture(scope="session")
def tiny_train(tiny_data):
    return tiny_data[0]


@pytest.fixture
def lstm_arch():
    return ArchConfig(kind="lstm", hidden_size=4, embed_dim=3)


@pytest.fixture
def cnn_arch():
    return ArchConfig(kind="cnn_lstm", hidden_size=4, embed_dim=3, conv_filters=5, conv_kernel=3)


@pytest.fixture
def fast_tcfg():
    return TrainConfig(learning_rate=0.05, epochs=2, seed=3)


@pytest.fixture
def handmade():
    """Four hand-written rows where every model quantity is easy to trace."""
    feats = np.array(
        [
            [0.1, 0.2, 0.3],
            [0.9, 0.8, 0.7],
            [0.2, 0.1, 0.4],
            [0.8, 0.9, 0.6],
        ]
    )
    labels = np.array([0, 1, 0, 1])
    return Dataset("handmade", feats, labels, ("a", "b", "c"))
