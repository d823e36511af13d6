"""Delay-Doppler MIMO channels: sampling, dense and eigenvalue forms, CSI error.

Each antenna pair sees a doubly-block-circulant ``MN x MN`` channel.  Its
first column, laid out on the ``M x N`` (delay, Doppler) grid, is the
*generator*; the unnormalised 2D DFT of the generator gives the diagonal of
eigenvalues, so ``H = Psi_R^H D Psi_T`` with ``Psi`` the per-antenna unitary
2D DFT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockmat import BlockEigenMatrix
from .complexity import OpCounter, tally
from .frame import SymbolFrame
from .rng import complex_normal


class ConfigurationError(ValueError):
    pass


# Reference five-tap vehicular channel: delays (us), Doppler shifts (Hz), tap powers (dB).
TABLE2_DELAYS_US = (2.08, 5.20, 8.328, 11.46, 14.80)
TABLE2_DOPPLERS_HZ = (0.0, 470.0, 940.0, 1410.0, 1851.0)
TABLE2_POWERS_DB = (1.0, -1.804, -3.565, -5.376, -8.860)
TABLE2_CARRIER_HZ = 4e9
TABLE2_SUBCARRIER_HZ = 15e3


@dataclass(frozen=True)
class Tap:
    power_db: float
    delay: int
    doppler: int


@dataclass(frozen=True)
class DelayDopplerProfile:
    taps: tuple[Tap, ...]
    M: int
    N: int
    carrier_hz: float = TABLE2_CARRIER_HZ
    subcarrier_spacing_hz: float = TABLE2_SUBCARRIER_HZ

    def __post_init__(self):
        object.__setattr__(self, "taps", tuple(self.taps))
        if self.M < 1 or self.N < 1:
            raise ConfigurationError("M and N must be positive")
        if not self.taps:
            raise ConfigurationError("profile needs at least one tap")
        seen = set()
        for tap in self.taps:
            if not (0 <= tap.delay < self.M and 0 <= tap.doppler < self.N):
                raise ConfigurationError(
                    f"tap (l={tap.delay}, k={tap.doppler}) outside the {self.M}x{self.N} grid"
                )
            if (tap.delay, tap.doppler) in seen:
                raise ConfigurationError(f"duplicate tap (l={tap.delay}, k={tap.doppler})")
            seen.add((tap.delay, tap.doppler))

    @property
    def n_taps(self) -> int:
        return len(self.taps)

    @property
    def mn(self) -> int:
        return self.M * self.N

    @property
    def delays(self) -> np.ndarray:
        return np.array([t.delay for t in self.taps])

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([t.doppler for t in self.taps])

    def powers(self) -> np.ndarray:
        """Linear tap variances, normalised to unit sum."""
        lin = 10.0 ** (np.array([t.power_db for t in self.taps]) / 10.0)
        return lin / lin.sum()

    def nonzeros_per_circulant_block(self) -> np.ndarray:
        """Non-zeros per row of each of the M circulant N x N blocks."""
        return np.bincount(self.delays, minlength=self.M)


def profile_from_physical(
    delays_s,
    dopplers_hz,
    powers_db,
    M: int,
    N: int,
    carrier_hz: float = TABLE2_CARRIER_HZ,
    subcarrier_spacing_hz: float = TABLE2_SUBCARRIER_HZ,
) -> DelayDopplerProfile:
    """Map physical delays/Dopplers onto the nearest free integer grid points.

    The delay resolution is ``1/(M*df)`` and the Doppler resolution ``df/N``.
    Taps are placed in the given order; a tap whose nearest grid point is
    already taken goes to the closest unoccupied one (ties broken by delay,
    then Doppler index).
    """
    frac_l = np.asarray(delays_s, float) * M * subcarrier_spacing_hz
    frac_k = np.asarray(dopplers_hz, float) * N / subcarrier_spacing_hz
    ll, kk = np.meshgrid(np.arange(M), np.arange(N), indexing="ij")
    taken = np.zeros((M, N), dtype=bool)
    taps = []
    for fl, fk, p in zip(frac_l, frac_k, powers_db):
        dist = (ll - fl) ** 2 + (kk - fk) ** 2
        dist = np.where(taken, np.inf, dist)
        if not np.isfinite(dist).any():
            raise ConfigurationError("more taps than grid points")
        flat = int(np.argmin(dist))
        l, k = divmod(flat, N)
        taken[l, k] = True
        taps.append(Tap(float(p), int(l), int(k)))
    return DelayDopplerProfile(tuple(taps), M, N, carrier_hz, subcarrier_spacing_hz)


def table2_profile(M: int = 32, N: int = 32) -> DelayDopplerProfile:
    """The reference five-tap channel (preset `table2`) at 4 GHz carrier and 15 kHz spacing."""
    return profile_from_physical(
        np.array(TABLE2_DELAYS_US) * 1e-6, TABLE2_DOPPLERS_HZ, TABLE2_POWERS_DB, M, N
    )


def random_profile(rng: np.random.Generator, M: int, N: int, n_taps: int = 5) -> DelayDopplerProfile:
    """Distinct random taps with random powers in [-10, 0] dB; used by tests."""
    cells = rng.choice(M * N, size=n_taps, replace=False)
    powers = rng.uniform(-10.0, 0.0, size=n_taps)
    taps = tuple(Tap(float(p), int(c // N), int(c % N)) for c, p in zip(cells, powers))
    return DelayDopplerProfile(taps, M, N)


@dataclass(frozen=True)
class NoiseModel:
    p_x: float = 1.0
    sigma_v_sq: float = 0.0

    def __post_init__(self):
        if self.p_x <= 0:
            raise ConfigurationError("symbol power must be positive")
        if self.sigma_v_sq < 0:
            raise ConfigurationError("noise variance must be non-negative")

    @property
    def rho(self) -> float:
        return self.sigma_v_sq / self.p_x

    @classmethod
    def from_snr_db(cls, snr_db: float, p_x: float = 1.0) -> "NoiseModel":
        return cls(p_x, p_x * 10.0 ** (-snr_db / 10.0))


@dataclass(frozen=True)
class CsiErrorModel:
    sigma_e_sq: float
    nonzeros: int = 1

    def __post_init__(self):
        if self.sigma_e_sq < 0:
            raise ConfigurationError("CSI error variance must be non-negative")

    @property
    def sigma_d_sq(self) -> float:
        return self.sigma_e_sq * self.nonzeros

    @classmethod
    def for_profile(cls, sigma_e_sq: float, profile: DelayDopplerProfile) -> "CsiErrorModel":
        return cls(sigma_e_sq, int(profile.nonzeros_per_circulant_block().sum()))


@dataclass(frozen=True)
class ChannelRealization:
    """Per-antenna-pair tap gains ``h'_i`` of shape ``(N_r, N_t, L_h)``."""

    gains: np.ndarray
    profile: DelayDopplerProfile

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=complex)
        if g.ndim != 3 or g.shape[2] != self.profile.n_taps:
            raise ConfigurationError(f"gains shape {g.shape} does not match the profile")
        object.__setattr__(self, "gains", g)

    @property
    def n_r(self) -> int:
        return self.gains.shape[0]

    @property
    def n_t(self) -> int:
        return self.gains.shape[1]

    @property
    def M(self) -> int:
        return self.profile.M

    @property
    def N(self) -> int:
        return self.profile.N

    @property
    def mn(self) -> int:
        return self.profile.mn

    def generators(self) -> np.ndarray:
        """First columns of every ``H_{r,t}`` on the grid, shape ``(N_r, N_t, M, N)``."""
        out = np.zeros((self.n_r, self.n_t, self.M, self.N), dtype=complex)
        # taps are distinct, so plain assignment is exact
        out[:, :, self.profile.delays, self.profile.dopplers] = self.gains
        return out


def sample_channel(
    profile: DelayDopplerProfile, nt: int, nr: int, rng: np.random.Generator
) -> ChannelRealization:
    """Draw i.i.d. ``CN(0, sigma_i^2)`` gains per tap and antenna pair."""
    if nt < 1 or nr < nt:
        raise ConfigurationError(f"need 1 <= N_t <= N_r, got N_t={nt}, N_r={nr}")
    sig = profile.powers()
    h = complex_normal(rng, (nr, nt, profile.n_taps)) * np.sqrt(sig)
    # h'_i = h_i exp(-j 2 pi nu_i tau_i), with nu_i tau_i = k_i l_i / (MN)
    phase = np.exp(-2j * np.pi * profile.dopplers * profile.delays / profile.mn)
    return ChannelRealization(h * phase, profile)


def build_dense_channel(real: ChannelRealization) -> np.ndarray:
    """Dense ``N_r MN x N_t MN`` channel (oracle path)."""
    M, N, mn = real.M, real.N, real.mn
    k, l = np.meshgrid(np.arange(N), np.arange(M), indexing="xy")
    rows = (k + N * l).reshape(-1)
    h = np.zeros((real.n_r, mn, real.n_t, mn), dtype=complex)
    for i, tap in enumerate(real.profile.taps):
        cols = ((k - tap.doppler) % N + N * ((l - tap.delay) % M)).reshape(-1)
        h[:, rows, :, cols] += real.gains[:, :, i]
    return h.reshape(real.n_r * mn, real.n_t * mn)


def eigen_matrix(real: ChannelRealization, counter: OpCounter | None = None) -> BlockEigenMatrix:
    """Eigenvalue block matrix ``D`` with ``H = Psi_R^H D Psi_T``."""
    tally(counter, transforms=real.n_r * real.n_t)
    lam = np.fft.fft2(real.generators(), axes=(2, 3))
    return BlockEigenMatrix(lam.reshape(real.n_r, real.n_t, real.mn))


def apply_transform(
    v: np.ndarray,
    antennas: int,
    M: int,
    N: int,
    direction: str = "forward",
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Apply ``I_antennas (x) F_M (x) F_N`` (``forward``) or its adjoint.

    Each antenna segment is viewed as an ``M x N`` grid and transformed with a
    unitary 2D DFT.
    """
    v = np.asarray(v)
    if v.size != antennas * M * N:
        raise ValueError(f"vector length {v.size} != antennas*M*N = {antennas * M * N}")
    grid = v.reshape(antennas, M, N)
    if direction == "forward":
        out = np.fft.fft2(grid, norm="ortho")
    elif direction == "adjoint":
        out = np.fft.ifft2(grid, norm="ortho")
    else:
        raise ValueError(f"unknown direction {direction!r}")
    tally(counter, transforms=antennas)
    return out.reshape(-1)


def apply_channel(d: BlockEigenMatrix, x: np.ndarray, M: int, N: int) -> np.ndarray:
    """``H x`` through the eigenvalue domain."""
    xt = apply_transform(x, d.cols, M, N, "forward").reshape(d.cols, M * N)
    yt = np.einsum("rtn,tn->rn", d.blocks, xt)
    return apply_transform(yt.reshape(-1), d.rows, M, N, "adjoint")


def apply_channel_adjoint(d: BlockEigenMatrix, y: np.ndarray, M: int, N: int) -> np.ndarray:
    """``H^H y`` through the eigenvalue domain."""
    yt = apply_transform(y, d.rows, M, N, "forward").reshape(d.rows, M * N)
    xt = np.einsum("rtn,rn->tn", np.conj(d.blocks), yt)
    return apply_transform(xt.reshape(-1), d.cols, M, N, "adjoint")


def transmit(
    x: SymbolFrame,
    real: ChannelRealization,
    noise: NoiseModel,
    rng: np.random.Generator,
    *,
    eig: BlockEigenMatrix | None = None,
) -> SymbolFrame:
    """``y = H x + v`` with ``v ~ CN(0, sigma_v^2 I)``, via the eigenvalue path."""
    if x.streams != real.n_t or x.M != real.M or x.N != real.N:
        raise ValueError("frame dimensions do not match the channel")
    d = eigen_matrix(real) if eig is None else eig
    y = apply_channel(d, x.data, real.M, real.N)
    if noise.sigma_v_sq > 0:
        y = y + complex_normal(rng, y.shape, noise.sigma_v_sq)
    return SymbolFrame(y, real.n_r, real.M, real.N)


def perturb_csi(
    real: ChannelRealization, err: CsiErrorModel, rng: np.random.Generator
) -> tuple[ChannelRealization, BlockEigenMatrix]:
    """Channel estimate ``H + dH`` and the eigenvalue error ``dD``.

    ``dH`` has the same tap support as ``H`` with i.i.d. ``CN(0, sigma_e^2)`` entries.
    """
    delta = complex_normal(rng, real.gains.shape, err.sigma_e_sq)
    err_real = ChannelRealization(delta, real.profile)
    estimate = ChannelRealization(real.gains + delta, real.profile)
    return estimate, eigen_matrix(err_real)
