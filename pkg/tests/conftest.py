import numpy as np
import pytest

from metaselect.dataio import make_sample
from shapes import disc_mask


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def blob_sample(rng):
    mask = disc_mask(20, pad=12)
    image = rng.integers(30, 220, size=mask.shape).astype(np.uint8)
    return make_sample("blob", image, mask, 1, "A")


# -- acceptance summary ------------------------------------------------------------

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def criterion(request, capsys):
    """Record and print one pass/fail line for an acceptance criterion."""

    def report(number, title, ok, detail=""):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        request.config.stash[_CRITERIA][number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_CRITERIA]
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
