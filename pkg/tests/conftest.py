import numpy as np
import pytest

from lifshitz_lab.assembly import SymmetricOperatorMatrix


def fd_laplacian(n, h=1.0):
    diag = np.full((n, 1, 1), 2.0 / h**2)
    lower = np.full((n - 1, 1, 1), -1.0 / h**2)
    return SymmetricOperatorMatrix.from_blocks(diag, lower)


def fd_eigenvalues(n, h=1.0):
    j = np.arange(1, n + 1)
    return 4.0 / h**2 * np.sin(j * np.pi / (2 * (n + 1))) ** 2


def random_block_tridiagonal(rng, b, nb, complex_=False):
    diag = rng.normal(size=(nb, b, b))
    lower = rng.normal(size=(nb - 1, b, b))
    if complex_:
        diag = diag + 1j * rng.normal(size=diag.shape)
        lower = lower + 1j * rng.normal(size=lower.shape)
    return SymmetricOperatorMatrix.from_blocks(diag, lower)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


def record_acceptance(number, title, ok, detail):
    line = f"acceptance {number:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
