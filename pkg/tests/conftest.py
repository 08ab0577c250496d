import numpy as np
import pytest

from zwei.abr_env import AbrConfig
from zwei.traces import HD_LADDER_KBPS, NetworkTrace, synth_manifest, synth_network_trace


@pytest.fixture
def hd_manifest():
    return synth_manifest(HD_LADDER_KBPS, 48)


@pytest.fixture
def fixed_2mbps():
    return synth_network_trace("fixed", {"level": 2.0, "duration": 200})


@pytest.fixture
def plain_config():
    """No request overhead: download time is bytes over bandwidth."""
    return AbrConfig(rtt=0.0, payload_ratio=1.0)


def constant_trace(mbps, duration=100.0):
    return NetworkTrace((0.0, duration / 2), (mbps, mbps), name=f"const-{mbps}")


def random_trace(rng, n_points=20, lo=0.2, hi=6.0):
    gaps = rng.uniform(0.5, 5.0, size=n_points)
    times = np.concatenate(([0.0], np.cumsum(gaps[:-1])))
    return NetworkTrace(tuple(float(t) for t in times), tuple(float(b) for b in rng.uniform(lo, hi, n_points)),
                        name=f"rand-{rng.integers(1 << 30)}")


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """``report(n, ok, detail)`` records one criterion line and fails the test if not ok."""
    lines = request.config.stash[_ACCEPTANCE]

    def _report(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((n, line))
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
