import numpy as np
import pytest

from polyprotect.data import Corpus, Embedding, SyntheticConfig, generate_synthetic_corpus


def make_corpus(rows, split="development", role="reference"):
    """Corpus from (subject, sample, values) triples."""
    return Corpus([Embedding(s, k, np.asarray(v, float)) for s, k, v in rows], split, role)


@pytest.fixture(scope="session")
def small_corpus():
    cfg = SyntheticConfig(n_subjects=6, samples_per_subject=12, dim=32, seed=11)
    return generate_synthetic_corpus(cfg)


@pytest.fixture(scope="session")
def dev_eval_pair():
    """Full-size seeded development/evaluation corpora (20 subjects, ratio 10)."""
    dev = generate_synthetic_corpus(SyntheticConfig(seed=1), split="development")
    ev = generate_synthetic_corpus(SyntheticConfig(seed=2), split="evaluation")
    return dev, ev


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    """Store the one-line verdict printed after the run."""
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(ACCEPTANCE_LINES[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
