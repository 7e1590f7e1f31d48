import sys

sys.setrecursionlimit(200_000)

from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "corpus"
