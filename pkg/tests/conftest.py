import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pwa_barrier.polytope import AffineMap, Polyhedron
from pwa_barrier.system import PwaSystem, build_partition

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def box(lo, hi):
    return Polyhedron.box(lo, hi)


def line_system(A=1.0, b=0.0, x0=(-0.5, 0.5), xs=(-2.5, 2.5), domain=(-np.inf, np.inf), T=10):
    region = box([domain[0]], [domain[1]])
    return PwaSystem([region], [AffineMap([[A]], [b])], box([x0[0]], [x0[1]]),
                     box([xs[0]], [xs[1]]), horizon=T)


@pytest.fixture
def martingale_system():
    return line_system()


@pytest.fixture
def martingale_partition(martingale_system):
    return build_partition(martingale_system, [np.linspace(-2.5, 2.5, 6)], unbounded_ends=True)


# acceptance results, one line per criterion, echoed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
