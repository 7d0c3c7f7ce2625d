import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).parent))

import pytest

TESTS = pathlib.Path(__file__).parent
CORPUS = TESTS / "corpus"
CORPUS_BAD = TESTS / "corpus_bad"
GOLDEN = TESTS / "golden"


@pytest.fixture(scope="session")
def corpus_paths():
    return sorted(CORPUS.glob("*.eff"))


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN
