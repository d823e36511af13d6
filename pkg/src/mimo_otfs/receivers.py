"""LZ/LM equalisation in the eigenvalue domain, dense ZF/MMSE oracles,
hard-decision mapping and likelihood ascent search (LAS) refinement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockmat import (
    BlockEigenMatrix,
    DEFAULT_SINGULAR_TOL,
    bd_adjoint,
    bd_invert,
    bd_matvec,
    bd_mul,
    dense_invert,
    gram,
)
from .channel import NoiseModel, apply_channel, apply_channel_adjoint, apply_transform
from .complexity import OpCounter
from .frame import SymbolFrame

__all__ = [
    "Constellation",
    "BPSK",
    "QPSK",
    "SymbolFrame",
    "modulate",
    "demap",
    "equalize",
    "equalize_with_csi_error",
    "conventional_equalize",
    "las_refine",
]


@dataclass(frozen=True)
class Constellation:
    """Unit-power Gray-labelled constellation.

    ``points[i]`` carries the bit label given by the binary expansion of
    ``i`` (MSB first), so index order is lexicographic label order.
    """

    name: str
    points: np.ndarray
    k0: float
    k1: float

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(len(self.points)))

    @property
    def size(self) -> int:
        return len(self.points)

    def labels(self) -> np.ndarray:
        """Bit labels, shape ``(Q, bits_per_symbol)``."""
        q = np.arange(self.size)[:, None]
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return (q >> shifts) & 1


BPSK = Constellation("BPSK", np.array([1.0 + 0j, -1.0 + 0j]), k0=1.0, k1=2.0)
QPSK = Constellation(
    "QPSK",
    np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0),
    k0=1.0,
    k1=1.0,
)

CONSTELLATIONS = {"BPSK": BPSK, "QPSK": QPSK}


def modulate(bits: np.ndarray, constellation: Constellation, streams: int, M: int, N: int,
             p_x: float = 1.0) -> SymbolFrame:
    bits = np.asarray(bits, dtype=np.int64).reshape(-1)
    b = constellation.bits_per_symbol
    n_sym = streams * M * N
    if bits.size != n_sym * b:
        raise ValueError(f"expected {n_sym * b} bits, got {bits.size}")
    weights = 1 << np.arange(b - 1, -1, -1)
    idx = bits.reshape(n_sym, b) @ weights
    return SymbolFrame(np.sqrt(p_x) * constellation.points[idx], streams, M, N)


def demap(xhat: SymbolFrame | np.ndarray, constellation: Constellation,
          p_x: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-point hard decisions.

    Returns ``(symbol_indices, bits)``.  Equidistant candidates resolve to the
    smallest bit label.
    """
    z = xhat.data if isinstance(xhat, SymbolFrame) else np.asarray(xhat)
    pts = np.sqrt(p_x) * constellation.points
    dist = np.abs(z[:, None] - pts[None, :]) ** 2
    idx = np.argmin(dist, axis=1)  # first minimum == smallest label
    return idx, constellation.labels()[idx].reshape(-1)


def _receiver_rho(mode: str, noise: NoiseModel) -> float:
    if mode == "LZ":
        return 0.0
    if mode == "LM":
        if noise.rho <= 0:
            raise ValueError("LM needs a positive noise-to-signal ratio rho")
        return noise.rho
    raise ValueError(f"unknown receiver mode {mode!r}")


def combiner(d: BlockEigenMatrix, mode: str, noise: NoiseModel, counter: OpCounter | None = None,
             *, singular_tol: float = DEFAULT_SINGULAR_TOL) -> BlockEigenMatrix:
    """``D (D^H D + rho I)^{-1}`` (``rho = 0`` for LZ), an ``N_r x N_t`` block matrix."""
    rho = _receiver_rho(mode, noise)
    inv = bd_invert(gram(d, rho, counter), counter, singular_tol=singular_tol)
    return bd_mul(d, inv, counter)


def equalize(d: BlockEigenMatrix, y: SymbolFrame, mode: str, noise: NoiseModel,
             counter: OpCounter | None = None, *,
             singular_tol: float = DEFAULT_SINGULAR_TOL) -> SymbolFrame:
    """Soft estimate ``G_A^H y`` computed in the eigenvalue domain.

    ``y`` is transformed per receive antenna, multiplied by the adjoint of
    ``D (D^H D + rho I)^{-1}``, then transformed back per stream.
    """
    if y.streams != d.rows or y.mn != d.mn:
        raise ValueError("received frame does not match the eigenvalue matrix")
    g = combiner(d, mode, noise, counter, singular_tol=singular_tol)
    yt = apply_transform(y.data, d.rows, y.M, y.N, "forward", counter)
    z = bd_matvec(bd_adjoint(g), yt, counter)
    xhat = apply_transform(z, d.cols, y.M, y.N, "adjoint", counter)
    return SymbolFrame(xhat, d.cols, y.M, y.N)


def equalize_with_csi_error(d_hat: BlockEigenMatrix, y: SymbolFrame, mode: str, noise: NoiseModel,
                            counter: OpCounter | None = None) -> SymbolFrame:
    """Same receiver, built from the estimated eigenvalues ``D + dD``."""
    return equalize(d_hat, y, mode, noise, counter)


def conventional_equalize(h: np.ndarray, y: SymbolFrame, mode: str, noise: NoiseModel,
                          n_t: int | None = None) -> SymbolFrame:
    """Dense ZF/MMSE: ``(H^H H + rho I)^{-1} H^H y``."""
    h = np.asarray(h)
    rho = _receiver_rho("LZ" if mode in ("ZF", "LZ", "cZF") else "LM", noise)
    hh = h.conj().T
    a = hh @ h
    if rho:
        a = a + rho * np.eye(a.shape[0])
    xhat = dense_invert(a) @ (hh @ y.data)
    streams = n_t if n_t is not None else h.shape[1] // y.mn
    return SymbolFrame(xhat, streams, y.M, y.N)


# ---------------------------------------------------------------------------
# likelihood ascent search
# ---------------------------------------------------------------------------

def las_refine(
    init: SymbolFrame,
    h: BlockEigenMatrix | np.ndarray,
    y: SymbolFrame,
    constellation: Constellation,
    max_iters: int | None = None,
    p_x: float = 1.0,
    trace: list | None = None,
) -> SymbolFrame:
    """Steepest-descent 1-LAS on ``||y - H s||^2``.

    Each step scans every single-position substitution to any constellation
    point and applies the one with the largest cost decrease; it stops at a
    local optimum or after ``max_iters`` moves.  ``h`` is either the
    eigenvalue matrix (fast path) or a dense channel.  Accepted costs are
    appended to ``trace`` when given.
    """
    M, N = init.M, init.N
    mn = init.mn
    n_t = init.streams
    pts = np.sqrt(p_x) * constellation.points
    s = init.data.copy()
    if max_iters is None:
        max_iters = n_t * mn

    if isinstance(h, BlockEigenMatrix):
        d = h
        forward = lambda v: apply_channel(d, v, M, N)
        backward = lambda r: apply_channel_adjoint(d, r, M, N)
        gen = np.fft.ifft2(d.blocks.reshape(d.rows, d.cols, M, N), axes=(2, 3))
        # every column of stream t is a cyclic shift of the same generators
        energy = np.repeat(np.sum(np.abs(gen) ** 2, axis=(0, 2, 3)), mn)

        def column(p):
            t, q = divmod(p, mn)
            l0, k0 = divmod(q, N)
            return np.roll(gen[:, t], (l0, k0), axis=(1, 2)).reshape(-1)
    else:
        hd = np.asarray(h)
        forward = lambda v: hd @ v
        backward = lambda r: hd.conj().T @ r
        energy = np.sum(np.abs(hd) ** 2, axis=0)

        def column(p):
            return hd[:, p]

    r = y.data - forward(s)
    cost = float(np.vdot(r, r).real)
    if trace is not None:
        trace.append(cost)
    energy = energy[:, None]

    for _ in range(max_iters):
        c = backward(r)  # h_p^H r for every position p
        delta = pts[None, :] - s[:, None]
        change = np.abs(delta) ** 2 * energy - 2.0 * np.real(np.conj(delta) * c[:, None])
        p, j = np.unravel_index(np.argmin(change), change.shape)
        if change[p, j] >= -1e-12 * max(cost, 1.0):
            break
        step = delta[p, j]
        r = r - step * column(p)
        s[p] = pts[j]
        cost = float(np.vdot(r, r).real)
        if trace is not None:
            trace.append(cost)
    return init.with_data(s)
