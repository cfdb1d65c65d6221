import numpy as np
import pytest
from hypothesis import settings

from outage_cbf import ChannelSet, generate_channel_set

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def cs22():
    return generate_channel_set(2, 2, eta=0.5, seed=1)


@pytest.fixture
def cs34():
    return generate_channel_set(3, 4, eta=0.5, seed=3)


def scalar_cs(gains, sigma2=1.0, P=1.0, eps=0.1, delta=1e-5):
    """Single-antenna instance from a K x K gain table g[k, i]."""
    g = np.asarray(gains, float)
    return ChannelSet(Q=g[:, :, None, None].astype(complex), sigma2=sigma2, P=P, eps=eps,
                      delta=delta)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[name] = (bool(passed), detail)
    print(f"{name}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s[1:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}")
