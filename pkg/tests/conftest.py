import sys
from pathlib import Path

import numpy as np
import pytest

from tcam.frame import read_rgb, rgb_to_yuv

CORPUS = Path(__file__).parent / "corpus"
PAIR = ("pair_reference", "pair_current")


def corpus_paths():
    return sorted(p for p in CORPUS.glob("*.ppm.gz") if not p.name.startswith("pair_"))


@pytest.fixture(scope="session")
def corpus_yuv():
    return {p.name.split(".")[0]: rgb_to_yuv(read_rgb(p)) for p in corpus_paths()}


@pytest.fixture(scope="session")
def pair_yuv():
    return tuple(rgb_to_yuv(read_rgb(CORPUS / f"{n}.ppm.gz")) for n in PAIR)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
