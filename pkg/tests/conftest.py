import numpy as np
import pytest

from emofuse.ingest import SyntheticSpec, make_synthetic_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """120 synthetic items with strong signal in both modalities."""
    d = tmp_path_factory.mktemp("small")
    recs = make_synthetic_dataset(
        SyntheticSpec(120, seed=5, text_informativeness=0.9, audio_informativeness=0.9), d)
    return recs, d


def random_simplex(rng, n, k=6):
    return rng.dirichlet(np.ones(k), size=n).T


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Call with (number, title, passed, detail) to log one PASS/FAIL line for the summary."""
    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        return passed
    return record
