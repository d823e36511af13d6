"""Closed-form post-equalisation SINR of LZ/LM under imperfect CSI, BER
mapping, and Monte Carlo validators for the approximations behind them.

Every matrix here is a block matrix of diagonal blocks, so for a block
``K_{t,t}`` the symbol-domain diagonal of ``Psi^H K Psi`` within stream ``t``
is the constant ``mean(K_{t,t})``.  Covariances and SINRs are therefore
uniform within a stream and are computed per stream, then replicated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .blockmat import (
    BlockEigenMatrix,
    bd_add,
    bd_adjoint,
    bd_invert,
    bd_mul,
    bd_scale,
    gram,
)
from .channel import (
    ChannelRealization,
    CsiErrorModel,
    NoiseModel,
    apply_transform,
    eigen_matrix,
    perturb_csi,
    sample_channel,
    transmit,
)
from .frame import SymbolFrame
from .receivers import QPSK, Constellation, equalize
from .rng import complex_normal, trial_streams

MODES = ("LZ", "LM")


@dataclass(frozen=True)
class CovarianceDiag:
    """Symbol-domain diagonal of a noise-plus-distortion covariance."""

    diag: np.ndarray
    streams: int
    mn: int

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        if d.shape != (self.streams * self.mn,):
            raise ValueError("covariance diagonal has the wrong length")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("covariance diagonal must be finite and non-negative")
        object.__setattr__(self, "diag", d)

    def per_stream(self) -> np.ndarray:
        return self.diag.reshape(self.streams, self.mn).mean(axis=1)


@dataclass(frozen=True)
class SinrReport:
    gamma: np.ndarray
    mode: str
    csi: str
    streams: int
    mn: int

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.shape != (self.streams * self.mn,):
            raise ValueError("SINR vector has the wrong length")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ValueError("SINR entries must be finite and non-negative")
        object.__setattr__(self, "gamma", g)

    def per_stream(self) -> np.ndarray:
        return self.gamma.reshape(self.streams, self.mn).mean(axis=1)


def symbol_diagonal(k: BlockEigenMatrix) -> np.ndarray:
    """Diagonal of ``Psi^H K Psi`` for a block-square ``K``, length ``T*MN``."""
    if k.rows != k.cols:
        raise ValueError("need a block-square matrix")
    idx = np.arange(k.rows)
    per_stream = k.blocks[idx, idx].mean(axis=1)
    return np.repeat(per_stream.real, k.mn)


def _stream_vector(values: np.ndarray, mn: int, floor: float = 1e-12) -> np.ndarray:
    """Replicate per-stream values, clipping round-off negatives of a PSD diagonal."""
    values = np.asarray(values, dtype=float)
    tol = floor * max(float(np.abs(values).max(initial=0.0)), 1.0)
    if np.any(values < -tol):
        raise ArithmeticError("covariance diagonal is significantly negative")
    return np.repeat(np.clip(values, 0.0, None), mn)


def bar_projection(y: BlockEigenMatrix, target: int) -> BlockEigenMatrix:
    """``sum_i I_target (x) Y_{i,i}``: the diagonal-block sum tiled over ``target`` blocks."""
    if y.rows != y.cols:
        raise ValueError("bar_projection needs a block-square matrix")
    idx = np.arange(y.rows)
    total = y.blocks[idx, idx].sum(axis=0)
    out = np.zeros((target, target, y.mn), dtype=complex)
    out[np.arange(target), np.arange(target)] = total
    return BlockEigenMatrix(out)


@dataclass(frozen=True)
class LmAuxiliary:
    s: BlockEigenMatrix
    d1: BlockEigenMatrix
    d2: BlockEigenMatrix
    d3: BlockEigenMatrix


def lm_auxiliary(d: BlockEigenMatrix, rho: float) -> LmAuxiliary:
    s = bd_invert(gram(d, rho))
    dh = bd_adjoint(d)
    d1 = bd_mul(d, dh)
    d2 = bd_mul(bd_mul(d, s), dh)
    d3 = bd_mul(d, bd_adjoint(s))
    return LmAuxiliary(s, d1, d2, d3)


def lm_noise_cov(d: BlockEigenMatrix, noise: NoiseModel, sigma_d_sq: float) -> CovarianceDiag:
    """Diagonal of the LM noise-plus-distortion covariance ``R_v``."""
    rho = noise.rho
    if rho <= 0:
        raise ValueError("LM covariance needs rho > 0")
    n_r, n_t = d.rows, d.cols
    aux = lm_auxiliary(d, rho)
    s, d1, d2, d3 = aux.s, aux.d1, aux.d2, aux.d3
    sh, d2h, d3h = bd_adjoint(s), bd_adjoint(d2), bd_adjoint(d3)

    bar1 = bar_projection(bd_mul(bd_mul(d2, d1), d2h), n_t)
    bar2 = bar_projection(bd_mul(d2, d1), n_t)
    bar4 = bar_projection(d1, n_t)
    bar6 = bar_projection(bd_mul(d1, d2h), n_t)
    til1 = bar_projection(bd_mul(d2, d2h), n_t)
    til2 = bar_projection(d2, n_t)
    til6 = bar_projection(d2h, n_t)
    bar8 = bar_projection(bd_mul(bd_mul(d3h, d1), d3), n_r)
    til8 = bar_projection(bd_mul(d3h, d3), n_r)
    eye_nt = BlockEigenMatrix.identity(n_t, d.mn)

    inner = bd_add(bar1, til1, 1, rho)
    inner = bd_add(inner, bd_add(bar2, til2, 1, rho), 1, -1)
    inner = bd_add(inner, bd_add(bar4, eye_nt, 1, rho * n_r), 1, 1)
    inner = bd_add(inner, bd_add(bar6, til6, 1, rho), 1, -1)
    distortion = bd_add(
        bd_mul(bd_mul(s, inner), sh),
        bd_mul(bd_mul(d3h, bd_add(bar8, til8, 1, rho)), d3),
    )
    rv = bd_add(
        bd_scale(distortion, noise.p_x * sigma_d_sq),
        bd_scale(bd_mul(d3h, d3), noise.sigma_v_sq),
    )
    idx = np.arange(n_t)
    return CovarianceDiag(
        _stream_vector(rv.blocks[idx, idx].mean(axis=1).real, d.mn), n_t, d.mn
    )


def lm_sinr(d: BlockEigenMatrix, noise: NoiseModel, sigma_d_sq: float) -> SinrReport:
    """Per-symbol LM SINR.

    The effective symbol-domain response is ``W = Psi^H K Psi`` with
    ``K = D_LM^{-1} D^H D``.  Row powers of ``W`` come from the block
    diagonals of ``K``: within stream ``t`` the diagonal gain is
    ``mean(K_tt)``, the total own-stream row power is ``mean|K_tt|^2`` and
    stream ``t'`` contributes ``mean|K_tt'|^2``.
    """
    n_t = d.cols
    s = bd_invert(gram(d, noise.rho))
    k = bd_mul(s, bd_mul(bd_adjoint(d), d)).blocks
    idx = np.arange(n_t)
    gain = k[idx, idx].mean(axis=1)
    row_power = (np.abs(k) ** 2).mean(axis=2)  # (t, t')
    own = np.abs(gain) ** 2
    intra = row_power[idx, idx] - own
    inter = row_power.sum(axis=1) - row_power[idx, idx]
    rv = lm_noise_cov(d, noise, sigma_d_sq).per_stream()
    gamma = noise.p_x * own / (noise.p_x * (intra + inter) + rv)
    csi = "perfect" if sigma_d_sq == 0 else "imperfect"
    return SinrReport(np.repeat(gamma, d.mn), "LM", csi, n_t, d.mn)


def lz_noise_cov(d: BlockEigenMatrix, noise: NoiseModel, sigma_d_sq: float) -> CovarianceDiag:
    """Diagonal of the LZ covariance ``R_vbar``:

    ``sigma_v^2 D_LZ^{-1} + P_x N_t sigma_d^2 D_LZ^{-1}
    + sigma_v^2 sigma_d^2 D_LZ^{-1} D^H Dbar_LZ D D_LZ^{-1}``.
    """
    n_r, n_t = d.rows, d.cols
    inv = bd_invert(gram(d, 0.0))
    dbar = bar_projection(inv, n_r)
    spread = bd_mul(bd_mul(bd_mul(bd_mul(inv, bd_adjoint(d)), dbar), d), inv)
    coef = noise.sigma_v_sq + noise.p_x * n_t * sigma_d_sq
    rv = bd_add(inv, spread, coef, noise.sigma_v_sq * sigma_d_sq)
    idx = np.arange(n_t)
    return CovarianceDiag(
        _stream_vector(rv.blocks[idx, idx].mean(axis=1).real, d.mn), n_t, d.mn
    )


def lz_sinr(d: BlockEigenMatrix, noise: NoiseModel, sigma_d_sq: float) -> SinrReport:
    cov = lz_noise_cov(d, noise, sigma_d_sq)
    if np.any(cov.diag == 0):
        raise ZeroDivisionError("zero LZ noise variance: SINR is unbounded")
    csi = "perfect" if sigma_d_sq == 0 else "imperfect"
    return SinrReport(noise.p_x / cov.diag, "LZ", csi, cov.streams, cov.mn)


def sinr(d: BlockEigenMatrix, mode: str, noise: NoiseModel, sigma_d_sq: float) -> SinrReport:
    if mode == "LZ":
        return lz_sinr(d, noise, sigma_d_sq)
    if mode == "LM":
        return lm_sinr(d, noise, sigma_d_sq)
    raise ValueError(f"unknown receiver mode {mode!r}")


def q_function(x):
    """Gaussian tail probability ``Q(x) = erfc(x / sqrt 2) / 2``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def analytic_ber(report: SinrReport, constellation: Constellation) -> float:
    """Mean over symbols of ``k0 Q(sqrt(k1 gamma))``."""
    return float(np.mean(constellation.k0 * q_function(np.sqrt(constellation.k1 * report.gamma))))


# ---------------------------------------------------------------------------
# Monte Carlo validators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentCheck:
    name: str
    mean: np.ndarray
    expected: np.ndarray
    stderr: np.ndarray

    @property
    def z(self) -> np.ndarray:
        """Deviation in units of the complex standard error, per entry."""
        se = np.where(self.stderr > 0, self.stderr, np.inf)
        z = np.abs(self.mean - self.expected) / se
        return np.where((self.stderr == 0) & (self.mean != self.expected), np.inf, z)

    def passed(self, bands: float = 3.0) -> bool:
        return bool(np.all(self.z <= bands))


def _complex_moment(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean over axis 0 and its standard error ``sqrt(E|w - mean|^2 / n)``."""
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    var = (np.abs(samples - mean) ** 2).sum(axis=0) / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def validate_lemma_expectations(
    rng: np.random.Generator,
    dims: tuple[int, int, int] = (2, 2, 4),
    trials: int = 10_000,
    sigma_x_sq: float = 1.0,
) -> dict[str, MomentCheck]:
    """Monte Carlo means of ``X^H Y X``, ``X Z X^H``, ``X A X`` and ``X^H B X^H``.

    ``X`` is ``N_r x N_t`` blocks with i.i.d. ``CN(0, sigma_x^2)`` entries;
    ``Y``, ``Z``, ``A``, ``B`` are fixed random block matrices of the
    matching shapes.  Expected values are ``sigma_x^2 Ybar``,
    ``sigma_x^2 Zbar``, ``0`` and ``0``.
    """
    n_r, n_t, mn = dims
    y = BlockEigenMatrix(complex_normal(rng, (n_r, n_r, mn)))
    z = BlockEigenMatrix(complex_normal(rng, (n_t, n_t, mn)))
    a = complex_normal(rng, (n_t, n_r, mn))
    b = complex_normal(rng, (n_r, n_t, mn))
    x = complex_normal(rng, (trials, n_r, n_t, mn), sigma_x_sq)
    xh = np.conj(np.swapaxes(x, 1, 2))

    xyx = np.einsum("kirn,rsn,ksjn->kijn", xh, y.blocks, x)
    xzx = np.einsum("kitn,tsn,ksjn->kijn", x, z.blocks, xh)
    xax = np.einsum("kitn,trn,krjn->kijn", x, a, x)
    xbx = np.einsum("kirn,rtn,ktjn->kijn", xh, b, xh)

    out = {}
    for name, samples, expected in (
        ("XhYX", xyx, sigma_x_sq * bar_projection(y, n_t).blocks),
        ("XZXh", xzx, sigma_x_sq * bar_projection(z, n_r).blocks),
        ("XAX", xax, np.zeros((n_r, n_t, mn), dtype=complex)),
        ("XhBXh", xbx, np.zeros((n_t, n_r, mn), dtype=complex)),
    ):
        mean, se = _complex_moment(samples)
        out[name] = MomentCheck(name, mean, expected, se)
    return out


@dataclass(frozen=True)
class EmpiricalSinr:
    report: SinrReport
    gain: np.ndarray  # per stream
    residual_power: np.ndarray  # per stream
    trials: int


def _linear_delta_g_h(d: BlockEigenMatrix, x: BlockEigenMatrix, mode: str, rho: float) -> BlockEigenMatrix:
    """First-order combiner error ``dG^H`` (eigenvalue domain) for error ``x = dD``."""
    s = bd_invert(gram(d, rho if mode == "LM" else 0.0))
    dh = bd_adjoint(d)
    if mode == "LM":
        # S dD^H (I - D S D^H) - S D^H dD S D^H
        d2 = bd_mul(bd_mul(d, s), dh)
        proj = bd_add(BlockEigenMatrix.identity(d.rows, d.mn), d2, 1, -1)
        d3h = bd_mul(s, dh)
        return bd_add(bd_mul(bd_mul(s, bd_adjoint(x)), proj), bd_mul(bd_mul(d3h, x), d3h), 1, -1)
    # LZ: -D^+ dD D^+ with D^+ = D_LZ^{-1} D^H
    pinv = bd_mul(s, dh)
    return bd_scale(bd_mul(bd_mul(pinv, x), pinv), -1.0)


def simulate_linearized_noise(
    real: ChannelRealization,
    mode: str,
    noise: NoiseModel,
    err: CsiErrorModel,
    trials: int,
    seed: int = 0,
) -> MomentCheck:
    """Per-stream ``E|v_k|^2`` of the linearised noise-plus-distortion term.

    LM: ``v = G^H n + dG^H (H x + n)``; LZ: ``v = xhat - x`` with
    ``xhat = D^+ (I - dD D^+) (H x + n)`` and ``D^+ = D_LZ^{-1} D^H``.  ``x`` is i.i.d. QPSK at power
    ``P_x``.  The expected value is left as zeros; callers compare against
    :func:`lm_noise_cov` / :func:`lz_noise_cov`.
    """
    d = eigen_matrix(real)
    n_t, n_r, mn, M, N = real.n_t, real.n_r, real.mn, real.M, real.N
    rho = noise.rho
    s = bd_invert(gram(d, rho if mode == "LM" else 0.0))
    g_h = bd_mul(s, bd_adjoint(d))
    power = np.empty((trials, n_t))
    for i in range(trials):
        st = trial_streams(seed, i)
        idx = st.bits.integers(0, 4, n_t * mn)
        x = np.sqrt(noise.p_x) * QPSK.points[idx]
        n = complex_normal(st.noise, n_r * mn, noise.sigma_v_sq)
        _, dd = perturb_csi(real, err, st.csi)
        dgh = _linear_delta_g_h(d, dd, mode, rho)
        xt = BlockEigenMatrix.from_vector(apply_transform(x, n_t, M, N), mn)
        nt_ = BlockEigenMatrix.from_vector(apply_transform(n, n_r, M, N), mn)
        rx = bd_add(bd_mul(d, xt), nt_)
        # for LZ, D^+ D = I turns xhat - x into the same form
        v = bd_add(bd_mul(g_h, nt_), bd_mul(dgh, rx))
        vs = apply_transform(v.to_vector(), n_t, M, N, "adjoint")
        power[i] = (np.abs(vs.reshape(n_t, mn)) ** 2).mean(axis=1)
    mean, se = _complex_moment(power.astype(complex))
    return MomentCheck(f"{mode} linearised noise power", mean.real, np.zeros(n_t), se)


def empirical_sinr(
    real: ChannelRealization,
    mode: str,
    noise: NoiseModel,
    err: CsiErrorModel | None,
    trials: int,
    seed: int = 0,
) -> EmpiricalSinr:
    """SINR of the actual receiver on a fixed channel by simulation.

    For each trial fresh QPSK data, noise and (if ``err`` is given) a CSI
    error are drawn; the receiver is built from ``D + dD``.  Per stream,
    ``gain = E[xhat conj(x)] / P_x`` and
    ``SINR = |gain|^2 P_x / E|xhat - gain x|^2``, pooled over the ``MN``
    symbols of the stream (their statistics are identical).
    """
    d = eigen_matrix(real)
    n_t, mn = real.n_t, real.mn
    xs, xh_all = [], []
    for i in range(trials):
        st = trial_streams(seed, i)
        idx = st.bits.integers(0, 4, n_t * mn)
        x = np.sqrt(noise.p_x) * QPSK.points[idx]
        y = transmit(SymbolFrame(x, n_t, real.M, real.N), real, noise, st.noise, eig=d)
        if err is not None and err.sigma_e_sq > 0:
            _, dd = perturb_csi(real, err, st.csi)
            d_use = BlockEigenMatrix(d.blocks + dd.blocks)
        else:
            d_use = d
        xhat = equalize(d_use, y, mode, noise).data
        xs.append(x.reshape(n_t, mn))
        xh_all.append(xhat.reshape(n_t, mn))
    x = np.stack(xs)
    xh = np.stack(xh_all)
    gain = (xh * np.conj(x)).mean(axis=(0, 2)) / noise.p_x
    resid = (np.abs(xh - gain[None, :, None] * x) ** 2).mean(axis=(0, 2))
    gamma = np.abs(gain) ** 2 * noise.p_x / resid
    csi = "perfect" if err is None or err.sigma_e_sq == 0 else "imperfect"
    report = SinrReport(np.repeat(gamma, mn), mode, csi, n_t, mn)
    return EmpiricalSinr(report, gain, resid, trials)


@dataclass(frozen=True)
class TaylorRegimeStats:
    lambda_max: np.ndarray
    frob_error_sq: np.ndarray  # ||dD^H dD||_F per draw
    frob_cross: np.ndarray  # ||dD^H D||_F per draw

    @property
    def frac_lambda_above_one(self) -> float:
        return float(np.mean(self.lambda_max > 1.0))

    @property
    def frac_frobenius_violations(self) -> float:
        return float(np.mean(self.frob_error_sq >= self.frob_cross))


def taylor_regime_stats(
    profile,
    n_t: int,
    n_r: int,
    noise: NoiseModel,
    err: CsiErrorModel,
    draws: int,
    seed: int = 0,
) -> TaylorRegimeStats:
    """Per draw of channel and CSI error: the largest ``|eig(T S)|`` with
    ``T = dD^H D + D^H dD``, ``S = (D^H D + rho I)^{-1}``, and the
    Frobenius norms of ``dD^H dD`` and ``dD^H D``."""
    lam = np.empty(draws)
    f_err = np.empty(draws)
    f_cross = np.empty(draws)
    for i in range(draws):
        st = trial_streams(seed, i)
        real = sample_channel(profile, n_t, n_r, st.channel)
        d = eigen_matrix(real)
        _, dd = perturb_csi(real, err, st.csi)
        cross = bd_mul(bd_adjoint(dd), d)
        t = bd_add(cross, bd_adjoint(cross))
        ts = bd_mul(t, bd_invert(gram(d, noise.rho)))
        eig = np.linalg.eigvals(np.moveaxis(ts.blocks, 2, 0))
        lam[i] = np.abs(eig).max()
        f_err[i] = np.linalg.norm(bd_mul(bd_adjoint(dd), dd).blocks)
        f_cross[i] = np.linalg.norm(cross.blocks)
    return TaylorRegimeStats(lam, f_err, f_cross)
