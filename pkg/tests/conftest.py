import numpy as np
import pytest

from tems.hamiltonian import nondegenerate_difference_spectrum, spectral_from_levels
from tems.operator_core import haar_unitary
from tems.protocol import Protocol

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_partition(dim: int, rng) -> list[int]:
    """Random composition of ``dim`` into positive parts."""
    cuts = sorted(rng.choice(np.arange(1, dim), size=rng.integers(0, dim), replace=False)) if dim > 1 else []
    edges = [0, *cuts, dim]
    return [b - a for a, b in zip(edges, edges[1:])]


def random_hamiltonian(dim: int, rng, degenerate: bool = False, nondegenerate_differences: bool = False,
                       scale: float = 3.0):
    """Spectral Hamiltonian in a Haar-random eigenbasis."""
    if nondegenerate_differences:
        energies = nondegenerate_difference_spectrum(dim, rng) * scale
        degs = None
    elif degenerate:
        degs = random_partition(dim, rng)
        energies = np.sort(rng.uniform(-scale, scale, size=len(degs)))
    else:
        degs = None
        energies = np.sort(rng.uniform(-scale, scale, size=dim))
    return spectral_from_levels(energies, degs, haar_unitary(dim, rng))


def random_protocol(dim: int, rng, degenerate: bool = False, **kw) -> Protocol:
    return Protocol(random_hamiltonian(dim, rng, degenerate, **kw),
                    random_hamiltonian(dim, rng, degenerate, **kw), haar_unitary(dim, rng))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
