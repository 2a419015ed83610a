import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from d2t.metrics import EvalCorpus

# Populated by tests/test_acceptance.py; printed after the run so every
# acceptance criterion gets exactly one visible pass/fail line.
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def eval_fixture() -> EvalCorpus:
    """20-item corpus with varied overlap, multi-reference items, punctuation
    and Czech diacritics."""
    rng = np.random.default_rng(42)
    vocab = (
        "the a restaurant cheap expensive near city centre river is in serves "
        "food Kočár z Vídně německou kuchyni ve středu města telefonní číslo "
        "na nabízí jídlo u řeky drahé levné dobré pro děti oběd večeři snídani"
    ).split()
    items = []
    for i in range(20):
        n_refs = 1 + i % 3
        refs = []
        base = [vocab[rng.integers(len(vocab))] for _ in range(4 + int(rng.integers(8)))]
        for _ in range(n_refs):
            ref = list(base)
            for j in range(len(ref)):
                if rng.random() < 0.3:
                    ref[j] = vocab[rng.integers(len(vocab))]
            refs.append(" ".join(ref) + ".")
        pred = list(base)
        for j in range(len(pred)):
            if rng.random() < 0.4:
                pred[j] = vocab[rng.integers(len(vocab))]
        if i == 5:
            pred = refs[0].rstrip(".").split()  # exact match item
        if i == 11:
            pred = ["zzz", "qqq"]  # zero overlap item
        items.append((" ".join(pred), tuple(refs)))
    return EvalCorpus(items=tuple(items))
