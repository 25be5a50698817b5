import os

# single-threaded BLAS keeps floating-point reductions reproducible
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from prosoda.config import load_config  # noqa: E402
from prosoda.corpus import default_corpus_spec, gen_corpus  # noqa: E402

# a corpus and config small enough for integration tests (not acceptance)
TINY = {
    "n_speakers": 2,
    "utts_per_cell": 5,
    "K": 24,
    "emotion_epochs": 8,
    "pred_epochs": 4,
    "ser_epochs": 4,
    "n_donor_draws": 1,
}


@pytest.fixture(scope="session")
def tiny_cfg():
    return load_config(overrides=TINY)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory, tiny_cfg):
    out = tmp_path_factory.mktemp("tiny_corpus")
    spec = default_corpus_spec(tiny_cfg.n_languages, tiny_cfg.n_speakers, tiny_cfg.utts_per_cell, seed=0)
    gen_corpus(spec, out)
    return out / "manifest.tsv"


@pytest.fixture(scope="session")
def tiny_bundle(tiny_corpus, tiny_cfg):
    from prosoda.pipeline import train_all

    return train_all(tiny_corpus, tiny_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
            terminalreporter.write_line(line)
