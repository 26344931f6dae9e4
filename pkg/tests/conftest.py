import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from streamasr.toy_model import DecoderConfig, ModelConfig, ToyModel, TrainConfig, synthetic_utterances, train  # noqa: E402

OVERFIT_STEPS = 500
OVERFIT_LR = 1e-2

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _overfit(kind):
    model = ToyModel(ModelConfig(vocab_size=6, decoder=DecoderConfig(kind), dropout=0.0))
    data = synthetic_utterances(16, vocab_size=6, seed=0)
    t0 = time.perf_counter()
    log = train(model, data, OVERFIT_STEPS, TrainConfig(layerwise=False), lr_fn=lambda epoch: OVERFIT_LR)
    return model, np.array(log.losses), time.perf_counter() - t0


@pytest.fixture(scope="session")
def overfit_mocha():
    """MoChA toy model trained 500 steps on 16 synthetic utterances; (model, per-step losses, seconds)."""
    return _overfit("mocha")


@pytest.fixture(scope="session")
def overfit_rnnt():
    return _overfit("rnnt")


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """(manifest path, noise catalog path) of the generated 16-utterance WAV corpus."""
    from streamasr.harness.corpus import make_toy_corpus

    return make_toy_corpus(tmp_path_factory.mktemp("toy_corpus"), n_utts=16, seed=0)
