import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from romimaging import Grid2D, TransducerArray, VelocityModel, WaveletSpec

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def ramp_model(nx=5, ny=4, h=1.0, boundary=None):
    """Velocity ``1 + 0.1 iy + 0.05 ix`` used by the frozen oracle values."""
    grid = Grid2D(nx, ny, h)
    c = 1.0 + 0.1 * np.arange(ny)[:, None] + 0.05 * np.arange(nx)[None, :]
    return VelocityModel(grid, c, boundary or {})


@pytest.fixture
def tiny():
    """5x4 ramp model, two transducers, s=2: the setting of the frozen data values."""
    model = ramp_model()
    array = TransducerArray(np.array([(0, 1), (0, 3)]))
    wavelet = WaveletSpec(sigma=0.3, tau=0.5, n2=8)
    return model, array, wavelet


@pytest.fixture
def small_physical():
    """12x12 grid at physical scale, m=3, 2n=12."""
    grid = Grid2D(12, 12, 10.0)
    c = 2000.0 + 40.0 * np.arange(12)[:, None] + np.zeros((1, 12))
    c[6:8, 3:9] = 1500.0
    model = VelocityModel(grid, c)
    array = TransducerArray.along_edge(grid, 3)
    wavelet = WaveletSpec.from_tau(0.015, 12)
    return model, array, wavelet


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
