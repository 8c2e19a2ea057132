import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vortexpatch.geometry import Domain, build_grid
from vortexpatch.maximizer import PatchSpec, solve_maximizer

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

LAM_DISK = 4 / np.pi


@pytest.fixture(scope="session")
def disk_spec():
    return PatchSpec(LAM_DISK, 1.0)


@pytest.fixture(scope="session")
def disk32():
    return build_grid(Domain.disk(1.0), 32)


@pytest.fixture(scope="session")
def disk64():
    return build_grid(Domain.disk(1.0), 64)


@pytest.fixture(scope="session")
def disk_max64(disk64, disk_spec):
    return solve_maximizer(disk64, disk_spec)


@pytest.fixture(scope="session")
def disk_max32(disk32, disk_spec):
    return solve_maximizer(disk32, disk_spec)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """``report(n, ok, detail)`` prints a criterion line and keeps it for the session summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def report(n, ok, detail):
        line = f"ACCEPTANCE #{n} {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
