import numpy as np
import pytest
from hypothesis import settings

from qmacfb.qcore import density_from_matrix

settings.register_profile("qmacfb", deadline=None, max_examples=60)
settings.load_profile("qmacfb")

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> str:
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def random_density(rng: np.random.Generator, d: int, space=None, rank: int | None = None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return density_from_matrix(m / np.trace(m).real, space or [("S", d)])


def random_kraus(rng: np.random.Generator, din: int, dout: int, k: int = 3):
    """Kraus operators of a random channel from a random Stinespring isometry."""
    g = rng.normal(size=(dout * k, din)) + 1j * rng.normal(size=(dout * k, din))
    q, _ = np.linalg.qr(g)
    return [q[i * dout:(i + 1) * dout, :] for i in range(k)]


def random_admissible_tests(rng, rho, eps, count):
    """Random 0 <= Pi <= I pushed toward I just enough to meet tr(Pi rho) >= 1 - eps."""
    d = rho.shape[0]
    for _ in range(count):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        u, _ = np.linalg.qr(g)
        lam = rng.random(d) ** rng.choice([0.25, 1.0, 4.0])
        pi = (u * lam) @ u.conj().T
        have = np.real(np.trace(pi @ rho))
        if have < 1 - eps:
            s = (1 - eps - have) / (1 - have)
            pi = (1 - s) * pi + s * np.eye(d)
        yield pi


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
