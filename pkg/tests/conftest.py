import math

import pytest
from hypothesis import settings

from hbac.core import gyromagnetic_ratio
from hbac.espin import NuclearParams, SecularParams

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

TWO_PI = 2 * math.pi


def endor_params(b1=20e6, b2=8e6, B0=0.35):
    """Synthetic electron + 1H + 13C secular parameters with MW-resolvable hyperfine lines."""
    gH, gC = gyromagnetic_ratio("1H"), gyromagnetic_ratio("13C")
    return SecularParams(
        TWO_PI * 9.8e9,
        (
            NuclearParams(gH * B0, TWO_PI * 400e6, TWO_PI * b1, gH),
            NuclearParams(gC * B0, TWO_PI * 160e6, TWO_PI * b2, gC),
        ),
    )


@pytest.fixture
def endor():
    return endor_params()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
