from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from consep.audio import SourceSet, Waveform  # noqa: E402
from consep.mixsim import build_dataset, synth_corpus  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rand_set(rng, m, n=400, rate=8000):
    return SourceSet(Waveform(rng.standard_normal(n), rate) for _ in range(m))


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    return synth_corpus(out, n_speakers=6, utts_per_speaker=3, rate_hz=16000, seed=0, duration_range=(1.0, 2.0))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, corpus):
    """12 one-second mixtures at 8 kHz."""
    out = tmp_path_factory.mktemp("data")
    build_dataset(corpus, 12, (0.0, 5.0), seed=5, out_dir=out, duration_s=1.0)
    return out / "manifest.jsonl"


# -- acceptance reporting ----------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert every check."""
    def record(number: int, checks: dict, detail: str = ""):
        failed = [name for name, ok in checks.items() if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"{status} criterion {number}: {detail}" + (f" (failed: {', '.join(failed)})" if failed else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert not failed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
