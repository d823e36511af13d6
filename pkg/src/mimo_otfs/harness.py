"""Experiment configuration, seeded Monte Carlo sweeps and CSV emission.

Configuration files are INI text read with :mod:`configparser`; the
``[experiment]`` section drives ``ber-sweep`` and ``sinr-validate`` and the
optional ``[complexity]`` section drives ``complexity-report``.  Example::

    [experiment]
    M = 16
    N = 16
    n_t = 2
    n_r = 4
    constellation = QPSK
    snr_db = 0, 4, 8, 12
    profile = table2
    csi = scaled
    receivers = LZ, LM, cZF, cMMSE
    trials = 100
    seed = 1

    [complexity]
    points = 8 8 8 8 20; 8 8 16 16 20
    receivers = LZ, LM, cMMSE, MP

``profile`` is ``table2`` or a ``;``-separated tap list of
``power_db:delay:doppler``.  ``csi`` is ``perfect``, ``scaled``
(``sigma_e^2 = rho / N_t``) or ``fixed`` (uses ``sigma_e_sq``).  ``#``
starts an inline comment.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .blockmat import BlockEigenMatrix, SingularBlockError, dense_expand
from .channel import (
    ConfigurationError,
    CsiErrorModel,
    DelayDopplerProfile,
    NoiseModel,
    Tap,
    build_dense_channel,
    eigen_matrix,
    perturb_csi,
    random_profile,
    sample_channel,
    table2_profile,
    transmit,
)
from .complexity import RECEIVERS, complexity_report
from .receivers import CONSTELLATIONS, conventional_equalize, demap, equalize, las_refine, modulate
from .rng import trial_streams
from .sinr import analytic_ber, sinr, validate_lemma_expectations

log = logging.getLogger(__name__)

ENV_PREFIX = "MIMO_OTFS_"
BER_HEADER = ("snr_db", "receiver", "csi", "trials", "bit_errors", "total_bits", "ber", "analytic_ber")
COMPLEXITY_HEADER = (
    "receiver", "n_t", "n_r", "m", "n", "n_iter",
    "predicted_ops", "predicted_transforms", "measured_ops", "measured_transforms", "exact",
)
BER_RECEIVERS = ("LZ", "LM", "cZF", "cMMSE", "LZ-LAS", "LM-LAS")
ANALYTIC_RECEIVERS = ("LZ", "LM")
CSI_MODES = ("perfect", "scaled", "fixed")


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    M: int = 16
    N: int = 16
    n_t: int = 2
    n_r: int = 4
    constellation: str = "QPSK"
    snr_db: tuple[float, ...] = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0)
    profile: str = "table2"
    csi: str = "perfect"
    sigma_e_sq: float = 0.0
    receivers: tuple[str, ...] = ("LZ", "LM")
    trials: int = 100
    seed: int = 0
    out: str | None = None
    las_max_iters: int | None = None
    max_redraws: int = 5
    threads: int = 1

    def __post_init__(self):
        if min(self.M, self.N) < 1:
            raise ConfigurationError("M and N must be positive")
        if self.n_t < 1 or self.n_r < self.n_t:
            raise ConfigurationError(f"need 1 <= n_t <= n_r, got n_t={self.n_t}, n_r={self.n_r}")
        if self.constellation not in CONSTELLATIONS:
            raise ConfigurationError(f"unknown constellation {self.constellation!r}")
        if not self.snr_db:
            raise ConfigurationError("snr_db grid is empty")
        if self.csi not in CSI_MODES:
            raise ConfigurationError(f"csi must be one of {CSI_MODES}, got {self.csi!r}")
        if self.csi == "fixed" and self.sigma_e_sq < 0:
            raise ConfigurationError("sigma_e_sq must be non-negative")
        if not self.receivers:
            raise ConfigurationError("receiver list is empty")
        bad = [r for r in self.receivers if r not in BER_RECEIVERS]
        if bad:
            raise ConfigurationError(f"unknown receivers {bad}; choose from {BER_RECEIVERS}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        self.build_profile()  # validates the tap table

    def build_profile(self) -> DelayDopplerProfile:
        if self.profile.strip().lower() == "table2":
            return table2_profile(self.M, self.N)
        return DelayDopplerProfile(parse_taps(self.profile), self.M, self.N)

    def sigma_e_sq_at(self, noise: NoiseModel) -> float:
        if self.csi == "perfect":
            return 0.0
        if self.csi == "scaled":
            return noise.rho / self.n_t
        return self.sigma_e_sq


@dataclass(frozen=True)
class ComplexityConfig:
    points: tuple[tuple[int, int, int, int, int], ...] = field(default_factory=lambda: default_sweep())
    receivers: tuple[str, ...] = ("LZ", "LM", "cMMSE", "MP")
    q: int = 4
    n_taps: int = 5
    window: int = 10
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if not self.points:
            raise ConfigurationError("complexity sweep is empty")
        bad = [r for r in self.receivers if r not in RECEIVERS]
        if bad:
            raise ConfigurationError(f"unknown receivers {bad}; choose from {RECEIVERS}")


def default_sweep() -> tuple[tuple[int, int, int, int, int], ...]:
    """Sweeps over M=N, N_t=N_r and N_I."""
    pts = [(8, 8, m, m, 20) for m in (8, 16, 32)]
    pts += [(a, a, 32, 32, 20) for a in (2, 4)]
    pts += [(8, 8, 32, 32, ni) for ni in (10, 30)]
    return tuple(pts)


def parse_taps(text: str) -> tuple[Tap, ...]:
    taps = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        parts = item.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"tap {item!r} is not power_db:delay:doppler")
        try:
            taps.append(Tap(float(parts[0]), int(parts[1]), int(parts[2])))
        except ValueError as exc:
            raise ConfigurationError(f"tap {item!r}: {exc}") from None
    if not taps:
        raise ConfigurationError("tap list is empty")
    return tuple(taps)


# ---------------------------------------------------------------------------
# config loading
# ---------------------------------------------------------------------------

def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[(.+)\]", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return no
    return None


def _csv_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _profile_field(v: str) -> str:
    if v.strip().lower() != "table2":
        parse_taps(v)  # syntax only; grid bounds need M and N
    return v


_EXPERIMENT_FIELDS = {
    "M": int, "N": int, "n_t": int, "n_r": int,
    "constellation": str.upper,
    "snr_db": lambda v: tuple(float(x) for x in _csv_list(v)),
    "profile": _profile_field, "csi": str.lower, "sigma_e_sq": float,
    "receivers": lambda v: tuple(_csv_list(v)),
    "trials": int, "seed": int, "out": str,
    "las_max_iters": int, "max_redraws": int, "threads": int,
}


def _complexity_points(v: str) -> tuple[tuple[int, ...], ...]:
    pts = []
    for item in filter(None, (s.strip() for s in v.split(";"))):
        vals = tuple(int(x) for x in item.replace(",", " ").split())
        if len(vals) != 5:
            raise ValueError(f"point {item!r} needs n_t n_r M N n_iter")
        pts.append(vals)
    return tuple(pts)


_COMPLEXITY_FIELDS = {
    "points": _complexity_points,
    "receivers": lambda v: tuple(_csv_list(v)),
    "q": int, "n_taps": int, "window": int, "seed": int, "out": str,
}


def _read_section(parser, text, path, section, fields) -> dict:
    out = {}
    if not parser.has_section(section):
        return out
    for key, raw in parser.items(section):
        name = next((f for f in fields if f.lower() == key.lower()), None)
        line = _line_of(text, section, key)
        where = f"{path}:{line}" if line else path
        if name is None:
            raise ConfigurationError(f"{where}: unknown field {key!r} in [{section}]")
        try:
            out[name] = fields[name](raw)
        except (ValueError, ConfigurationError) as exc:
            raise ConfigurationError(f"{where}: field {key!r}: {exc}") from None
    return out


def load_config(path: str | None = None) -> tuple[ExperimentConfig, ComplexityConfig]:
    """Parse a config file; missing sections fall back to defaults."""
    exp, cx = {}, {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            parser.read_string(text, source=path)
        except configparser.Error as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        extra = set(parser.sections()) - {"experiment", "complexity"}
        if extra:
            raise ConfigurationError(f"{path}: unknown sections {sorted(extra)}")
        exp = _read_section(parser, text, path, "experiment", _EXPERIMENT_FIELDS)
        cx = _read_section(parser, text, path, "complexity", _COMPLEXITY_FIELDS)
    try:
        return ExperimentConfig(**exp), ComplexityConfig(**cx)
    except ConfigurationError as exc:
        where = path or "<defaults>"
        raise ConfigurationError(f"{where}: {exc}") from None


def apply_overrides(cfg, **overrides):
    """Return ``cfg`` with the non-``None`` overrides that it has fields for."""
    names = cfg.__dataclass_fields__
    kept = {k: v for k, v in overrides.items() if v is not None and k in names}
    return replace(cfg, **kept) if kept else cfg


def env_overrides(environ=None) -> dict:
    """Read ``MIMO_OTFS_{CONFIG,SEED,OUT,TRIALS,THREADS}``."""
    environ = os.environ if environ is None else environ
    out = {}
    for key, conv in (("config", str), ("seed", int), ("out", str), ("trials", int), ("threads", int)):
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is None or raw == "":
            continue
        try:
            out[key] = conv(raw)
        except ValueError:
            raise ConfigurationError(f"environment {ENV_PREFIX + key.upper()}={raw!r} is invalid") from None
    return out


# ---------------------------------------------------------------------------
# BER sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    receiver: str
    csi: str
    trials: int
    bit_errors: int
    total_bits: int
    analytic_ber: float | None = None

    @property
    def ber(self) -> float:
        return self.bit_errors / self.total_bits

    def row(self) -> list[str]:
        return [
            f"{self.snr_db:.10g}", self.receiver, self.csi, str(self.trials),
            str(self.bit_errors), str(self.total_bits), f"{self.ber:.10g}",
            "" if self.analytic_ber is None else f"{self.analytic_ber:.10g}",
        ]


@dataclass
class TrialResult:
    bit_errors: dict[str, int]
    analytic: dict[str, float]
    redraws: int


def _detect(rx: str, d, d_hat, h_hat, y, cfg, noise, const):
    base = rx.split("-")[0]
    if base in ("cZF", "cMMSE"):
        return conventional_equalize(h_hat(), y, "ZF" if base == "cZF" else "MMSE", noise, cfg.n_t)
    soft = equalize(d_hat, y, base, noise)
    if rx.endswith("-LAS"):
        idx, _ = demap(soft, const, noise.p_x)
        init = soft.with_data(np.sqrt(noise.p_x) * const.points[idx])
        return las_refine(init, d_hat, y, const, cfg.las_max_iters, noise.p_x)
    return soft


def run_trial(cfg: ExperimentConfig, snr_idx: int, trial_idx: int, profile=None) -> TrialResult:
    """One channel realization and frame, detected by every configured receiver.

    All receivers see the same channel, data, noise and CSI error.  A
    realization whose Gram matrix is singular for any receiver is redrawn,
    up to ``max_redraws`` times.
    """
    profile = profile or cfg.build_profile()
    const = CONSTELLATIONS[cfg.constellation]
    noise = NoiseModel.from_snr_db(cfg.snr_db[snr_idx])
    err = CsiErrorModel.for_profile(cfg.sigma_e_sq_at(noise), profile)
    n_bits = cfg.n_t * profile.mn * const.bits_per_symbol

    for attempt in range(cfg.max_redraws + 1):
        key = (snr_idx, trial_idx) if attempt == 0 else (snr_idx, trial_idx, attempt)
        st = trial_streams(cfg.seed, *key)
        real = sample_channel(profile, cfg.n_t, cfg.n_r, st.channel)
        bits = st.bits.integers(0, 2, n_bits)
        x = modulate(bits, const, cfg.n_t, cfg.M, cfg.N, noise.p_x)
        d = eigen_matrix(real)
        y = transmit(x, real, noise, st.noise, eig=d)
        if err.sigma_e_sq > 0:
            est, dd = perturb_csi(real, err, st.csi)
            d_hat = BlockEigenMatrix(d.blocks + dd.blocks)
        else:
            est, d_hat = real, d
        h_hat = lambda: build_dense_channel(est)
        try:
            errors = {}
            for rx in cfg.receivers:
                xhat = _detect(rx, d, d_hat, h_hat, y, cfg, noise, const)
                _, got = demap(xhat, const, noise.p_x)
                errors[rx] = int(np.count_nonzero(got != bits))
            analytic = {
                rx: analytic_ber(sinr(d, rx, noise, err.sigma_d_sq), const)
                for rx in cfg.receivers
                if rx in ANALYTIC_RECEIVERS
            }
        except (SingularBlockError, np.linalg.LinAlgError, ZeroDivisionError) as exc:
            log.info("snr %d trial %d attempt %d: singular realization (%s), redrawing",
                     snr_idx, trial_idx, attempt, exc)
            continue
        return TrialResult(errors, analytic, attempt)
    raise NumericalFailure(
        f"snr index {snr_idx}, trial {trial_idx}: singular after {cfg.max_redraws} redraws"
    )


def run_ber_sweep(cfg: ExperimentConfig) -> list[BerRecord]:
    profile = cfg.build_profile()
    const = CONSTELLATIONS[cfg.constellation]
    jobs = [(s, t) for s in range(len(cfg.snr_db)) for t in range(cfg.trials)]

    def work(job):
        return job, run_trial(cfg, job[0], job[1], profile)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = dict(pool.map(work, jobs))
    else:
        results = dict(map(work, jobs))

    redraws = sum(r.redraws for r in results.values())
    if redraws:
        log.warning("%d singular realizations were redrawn", redraws)

    bits_per_trial = cfg.n_t * profile.mn * const.bits_per_symbol
    records = []
    for s, snr in enumerate(cfg.snr_db):
        per_trial = [results[(s, t)] for t in range(cfg.trials)]  # fixed summation order
        for rx in cfg.receivers:
            analytic = None
            if rx in ANALYTIC_RECEIVERS:
                analytic = float(np.mean([r.analytic[rx] for r in per_trial]))
            records.append(BerRecord(
                float(snr), rx, cfg.csi, cfg.trials,
                sum(r.bit_errors[rx] for r in per_trial),
                bits_per_trial * cfg.trials, analytic,
            ))
    order = {rx: i for i, rx in enumerate(cfg.receivers)}
    records.sort(key=lambda r: (r.snr_db, order[r.receiver]))
    return records


def run_sinr_validation(cfg: ExperimentConfig) -> list[BerRecord]:
    """Simulated and analytic BER side by side for the LZ/LM receivers."""
    receivers = tuple(r for r in cfg.receivers if r in ANALYTIC_RECEIVERS) or ANALYTIC_RECEIVERS
    return run_ber_sweep(replace(cfg, receivers=receivers))


def run_complexity_report(cfg: ComplexityConfig) -> list[dict]:
    return complexity_report(
        cfg.points, cfg.receivers, q=cfg.q, n_taps=cfg.n_taps, window=cfg.window, seed=cfg.seed
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def ber_csv(records: list[BerRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BER_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def complexity_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPLEXITY_HEADER)
    for row in rows:
        w.writerow(["" if row[k] is None else str(row[k]).lower() if isinstance(row[k], bool) else row[k]
                    for k in COMPLEXITY_HEADER])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def _suite_reconstruction() -> str:
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        real = sample_channel(random_profile(rng, 8, 8), 2, 2, rng)
        h = build_dense_channel(real)
        f = np.kron(np.fft.fft(np.eye(8), norm="ortho"), np.fft.fft(np.eye(8), norm="ortho"))
        psi = np.kron(np.eye(2), f)
        rec = psi.conj().T @ dense_expand(eigen_matrix(real)) @ psi
        worst = max(worst, np.linalg.norm(rec - h) / np.linalg.norm(h))
    if worst > 1e-10:
        raise AssertionError(f"relative error {worst:.2e}")
    return f"max relative error {worst:.1e}"


def _suite_equivalence() -> str:
    worst = 0.0
    for seed in range(6):
        cfg = ExperimentConfig(M=8, N=8, n_t=2, n_r=4, trials=1, seed=seed)
        st = trial_streams(seed, 0)
        profile = cfg.build_profile()
        real = sample_channel(profile, 2, 4, st.channel)
        noise = NoiseModel.from_snr_db(10.0)
        x = modulate(st.bits.integers(0, 2, 2 * 64 * 2), CONSTELLATIONS["QPSK"], 2, 8, 8)
        y = transmit(x, real, noise, st.noise)
        d, h = eigen_matrix(real), build_dense_channel(real)
        for mode, conv in (("LZ", "ZF"), ("LM", "MMSE")):
            a = equalize(d, y, mode, noise).data
            b = conventional_equalize(h, y, conv, noise, 2).data
            worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(b))
    if worst > 1e-8:
        raise AssertionError(f"relative difference {worst:.2e}")
    return f"max relative difference {worst:.1e}"


def _suite_op_counts() -> str:
    pts = [(n_t, n_r, m, m, 20) for n_t in (2, 4) for n_r in (4, 8) for m in (8, 16)]
    complexity_report(pts, ("LZ", "LM"))
    return f"{len(pts)} dimension points exact"


def _suite_lemmas() -> str:
    checks = validate_lemma_expectations(np.random.default_rng(0), (2, 2, 4), 4000)
    failed = [name for name, c in checks.items() if not c.passed()]
    if failed:
        raise AssertionError(f"outside 3-sigma bands: {failed}")
    worst = max(float(c.z.max()) for c in checks.values())
    return f"all identities within 3 sigma (max z {worst:.2f})"


SELFTEST_SUITES = (
    ("reconstruction", _suite_reconstruction),
    ("oracle-equivalence", _suite_equivalence),
    ("op-exactness", _suite_op_counts),
    ("lemma-statistics", _suite_lemmas),
)


def selftest(stream=None) -> bool:
    """Run each suite and print one verdict line per suite."""
    stream = stream or sys.stdout
    ok = True
    for name, suite in SELFTEST_SUITES:
        try:
            detail = suite()
            print(f"PASS {name}: {detail}", file=stream)
        except Exception as exc:  # a failing suite must not stop the others
            ok = False
            print(f"FAIL {name}: {exc}", file=stream)
    return ok
