import numpy as np
import pytest

from nsfde.functionals import Distributed, FunctionalSpec, PointDelay, PointwiseMap
from nsfde.measures import DelayMeasure
from nsfde.picard import Problem


def linear_problem(c=0.3, a=-1.0, sigma=0.5, T=2.0, psi=1.0):
    """``d(X - c int_{-1}^0 X(t+s) ds) = a X dt + sigma dB`` with constant history."""
    tau = 1.0
    D = FunctionalSpec((Distributed(DelayMeasure.uniform_density(c, -1.0, tau=tau)),), tau) if c else \
        FunctionalSpec((), tau)
    f = FunctionalSpec((PointDelay(0.0, PointwiseMap("affine", a=a)),), tau) if a else FunctionalSpec((), tau)
    g = FunctionalSpec((), tau, 1, [sigma])
    return Problem(D, f, g, lambda s: psi, T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
