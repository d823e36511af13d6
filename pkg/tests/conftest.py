import sys

import numpy as np
import pytest

from mimo_otfs.blockmat import BlockEigenMatrix
from mimo_otfs.rng import complex_normal


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix written out from its definition (no FFT)."""
    a = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(a, a) / n) / np.sqrt(n)


def psi(antennas: int, M: int, N: int) -> np.ndarray:
    return np.kron(np.eye(antennas), np.kron(dft_matrix(M), dft_matrix(N)))


def loop_channel(gains, taps, M, N):
    """Dense MIMO channel placed entry by entry from the delay-Doppler shift rule."""
    n_r, n_t, _ = gains.shape
    mn = M * N
    h = np.zeros((n_r * mn, n_t * mn), dtype=complex)
    for r in range(n_r):
        for t in range(n_t):
            for i, (l_i, k_i) in enumerate(taps):
                for l in range(M):
                    for k in range(N):
                        row = k + N * l
                        col = (k - k_i) % N + N * ((l - l_i) % M)
                        h[r * mn + row, t * mn + col] += gains[r, t, i]
    return h


def random_block(rng, rows, cols, mn):
    return BlockEigenMatrix(complex_normal(rng, (rows, cols, mn)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
