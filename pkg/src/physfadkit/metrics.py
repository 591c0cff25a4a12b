"""Linearity metric with its calibration protocol, impulse responses, and
reverberation-time extraction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .channels import RisChannelSolver
from .errors import NoDecayDetectedError, RankDeficientError
from .physics import RisConfiguration, Scene


@dataclass(frozen=True)
class CalibrationSet:
    """Random +/-1 RIS configurations paired with measured complex SISO channels."""

    labels: np.ndarray  # (n, n_s), entries +/-1
    channels: np.ndarray  # (n,), complex
    seed: Optional[int] = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=float)
        channels = np.asarray(self.channels, dtype=complex).reshape(-1)
        if labels.ndim != 2 or labels.shape[0] != channels.size:
            raise ValueError("labels must be (n, n_s) matching n channels")
        if not np.isin(labels, (-1.0, 1.0)).all():
            raise ValueError("labels must be +/-1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "channels", channels)

    @property
    def n(self) -> int:
        return self.channels.size

    @property
    def n_s(self) -> int:
        return self.labels.shape[1]

    def configurations(self) -> list[RisConfiguration]:
        return [
            RisConfiguration.from_bits(((row + 1) / 2).astype(int))
            for row in self.labels
        ]


def default_calibration_size(n_s: int) -> int:
    """Calibration draws 5 configurations per RIS element."""
    return 5 * n_s


DEFAULT_TEST_SIZE = 100


def collect_calibration_set(
    scene: Scene,
    f: float,
    n: int,
    rng: np.random.Generator,
    solver: Optional[RisChannelSolver] = None,
    seed: Optional[int] = None,
) -> CalibrationSet:
    """Draw n uniform random configurations and record the exact SISO channels."""
    bm = scene.block_map
    if bm.n_t != 1 or bm.n_r != 1:
        raise ValueError("the linearity protocol is defined for SISO scenes")
    if solver is None:
        solver = RisChannelSolver(scene, f)
    bits = rng.integers(0, 2, size=(n, bm.n_s))
    channels = np.empty(n, dtype=complex)
    for i in range(n):
        config = RisConfiguration.from_bits(bits[i])
        channels[i] = solver.channel(config).siso
    return CalibrationSet(labels=2.0 * bits - 1.0, channels=channels, seed=seed)


def fit_cascaded_siso(cal: CalibrationSet) -> tuple[complex, np.ndarray]:
    """Least-squares fit of h ~ h0 + t . labels over the calibration set.

    Solved in the complex field via the normal equations; a 1e-12 diagonal
    regularization is retried once if the plain solve is unusable. Raises
    :class:`RankDeficientError` when the configuration ensemble does not span
    the n_s + 1 unknowns.
    """
    n, n_s = cal.labels.shape
    p = n_s + 1
    if n < p:
        raise RankDeficientError(f"need at least {p} samples, got {n}")
    design = np.hstack([np.ones((n, 1)), cal.labels])
    gram = design.T @ design
    rank = np.linalg.matrix_rank(gram)
    if rank < p:
        raise RankDeficientError(
            f"design matrix rank {rank} < {p}: configuration ensemble does not "
            "span (draw a fresh seed)"
        )
    rhs = design.T @ cal.channels
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        coef = np.linalg.solve(gram + 1e-12 * np.eye(p), rhs)
    if not np.isfinite(coef).all():
        coef = np.linalg.solve(gram + 1e-12 * np.eye(p), rhs)
    return complex(coef[0]), coef[1:]


def complex_sd(values: np.ndarray) -> float:
    """Population standard deviation sqrt(E|h - E h|^2) of complex samples."""
    values = np.asarray(values, dtype=complex).reshape(-1)
    mean = values.mean()
    return float(np.sqrt(np.mean(np.abs(values - mean) ** 2)))


@dataclass(frozen=True)
class LinearityReport:
    """Fitted affine model and the linearity metric on the test set."""

    h0: complex
    t: np.ndarray
    zeta: float
    zeta_db: float
    degenerate: bool
    n_cal: int
    n_test: int


def linearity_metric(cal: CalibrationSet, test: CalibrationSet) -> LinearityReport:
    """Fit on the calibration set, predict the test set, and form
    zeta = SD(h_test) / SD(h_test - h_predicted), with zeta_dB = 20 log10(zeta).

    A perfectly affine channel makes the denominator vanish; that sets the
    degenerate flag and the +inf sentinel instead of raising.
    """
    h0, t = fit_cascaded_siso(cal)
    predicted = h0 + test.labels @ t
    residual = test.channels - predicted
    num = complex_sd(test.channels)
    den = complex_sd(residual)
    if den == 0.0:
        return LinearityReport(
            h0=h0,
            t=t,
            zeta=math.inf,
            zeta_db=math.inf,
            degenerate=True,
            n_cal=cal.n,
            n_test=test.n,
        )
    zeta = num / den
    zeta_db = 20.0 * math.log10(zeta) if zeta > 0.0 else -math.inf
    return LinearityReport(
        h0=h0,
        t=t,
        zeta=zeta,
        zeta_db=zeta_db,
        degenerate=False,
        n_cal=cal.n,
        n_test=test.n,
    )


def measure_linearity(
    scene: Scene,
    f: float,
    rng: np.random.Generator,
    n_cal: Optional[int] = None,
    n_test: int = DEFAULT_TEST_SIZE,
) -> LinearityReport:
    """Run the full protocol: 5 N_S calibration + 100 test random configurations."""
    bm = scene.block_map
    if n_cal is None:
        n_cal = default_calibration_size(bm.n_s)
    solver = RisChannelSolver(scene, f)
    cal = collect_calibration_set(scene, f, n_cal, rng, solver=solver)
    test = collect_calibration_set(scene, f, n_test, rng, solver=solver)
    return linearity_metric(cal, test)


def write_calibration_csv(
    cal: CalibrationSet, path: str | Path, seed: Optional[int] = None
) -> None:
    """Columns: seed, config_bits (bitstring), re(h), im(h)."""
    seed = cal.seed if seed is None else seed
    with open(path, "w", newline="") as fh:
        fh.write("# physfadkit-csv-v1 calibration\n")
        writer = csv.writer(fh)
        writer.writerow(["seed", "config_bits", "re_h", "im_h"])
        for row, h in zip(cal.labels, cal.channels):
            bits = "".join("1" if v > 0 else "0" for v in row)
            writer.writerow([seed if seed is not None else "", bits,
                             repr(h.real), repr(h.imag)])


def read_calibration_csv(path: str | Path) -> CalibrationSet:
    rows = []
    channels = []
    seed: Optional[int] = None
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        reader = csv.DictReader(fh)
        for rec in reader:
            if seed is None and rec["seed"] not in ("", None):
                seed = int(rec["seed"])
            bits = np.array([int(ch) for ch in rec["config_bits"]], dtype=float)
            rows.append(2.0 * bits - 1.0)
            channels.append(complex(float(rec["re_h"]), float(rec["im_h"])))
    return CalibrationSet(
        labels=np.array(rows), channels=np.array(channels), seed=seed
    )


# ---------------------------------------------------------------------------
# Impulse response and reverberation time
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImpulseResponse:
    """Power envelope |IDFT of H(f)|^2 on a uniform delay grid."""

    delays: np.ndarray
    envelope: np.ndarray
    band: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "delays", np.asarray(self.delays, dtype=float))
        object.__setattr__(self, "envelope", np.asarray(self.envelope, dtype=float))


def impulse_response(
    scene: Scene,
    config: RisConfiguration,
    band: tuple[float, float] = (0.8, 1.2),
    n_f: int = 512,
) -> ImpulseResponse:
    """Exact channel on a uniform frequency grid, then the IDFT power envelope.

    ``n_f`` must be a power of two, at least 64; the grid excludes the upper
    band edge so the delay axis follows the plain DFT convention.
    """
    f_lo, f_hi = band
    if f_lo <= 0.0 or f_hi <= f_lo:
        raise ValueError("band must satisfy 0 < f_lo < f_hi")
    if n_f < 64 or (n_f & (n_f - 1)) != 0:
        raise ValueError("n_f must be a power of two >= 64")
    from .channels import channel_frequency_sweep

    f_grid = f_lo + (f_hi - f_lo) * np.arange(n_f) / n_f
    h = channel_frequency_sweep(scene, config, f_grid)
    if h.shape[1] != 1 or h.shape[2] != 1:
        raise ValueError("impulse_response is defined for SISO scenes")
    spectrum = h[:, 0, 0]
    cir = np.fft.ifft(spectrum)
    df = (f_hi - f_lo) / n_f
    delays = np.arange(n_f) / (n_f * df)
    return ImpulseResponse(delays=delays, envelope=np.abs(cir) ** 2, band=band)


def synthetic_impulse_response(
    spectrum: np.ndarray, band: tuple[float, float]
) -> ImpulseResponse:
    """Envelope of a user-supplied H(f) sampled on the matching uniform grid."""
    spectrum = np.asarray(spectrum, dtype=complex).reshape(-1)
    n_f = spectrum.size
    f_lo, f_hi = band
    df = (f_hi - f_lo) / n_f
    delays = np.arange(n_f) / (n_f * df)
    cir = np.fft.ifft(spectrum)
    return ImpulseResponse(delays=delays, envelope=np.abs(cir) ** 2, band=band)


@dataclass(frozen=True)
class ReverbReport:
    """Exponential decay time of the power envelope and the derived quality factor."""

    tau: float
    q: float
    fit_window_db: float
    r_squared: float
    n_points: int


_MIN_FIT_POINTS = 8


def reverberation_time(
    cir: ImpulseResponse,
    window_db: float = 20.0,
    f0: float = 1.0,
) -> ReverbReport:
    """Linear fit of the log power envelope over the window below its peak.

    The envelope decays as exp(-t/tau) on average, so tau = -1/slope
    (natural-log convention) and Q = 2 pi f0 tau. Raises
    :class:`NoDecayDetectedError` when the window is too short, the slope is
    nonnegative, or the fit quality r^2 falls below 0.5.
    """
    if window_db <= 0.0:
        raise ValueError("window_db must be > 0")
    env = cir.envelope
    if (env < 0.0).any():
        raise ValueError("envelope must be nonnegative")
    peak_idx = int(np.argmax(env))
    peak = env[peak_idx]
    if peak <= 0.0:
        raise NoDecayDetectedError("envelope is identically zero")
    floor = peak * 10.0 ** (-window_db / 10.0)
    tail_env = env[peak_idx:]
    tail_t = cir.delays[peak_idx:]
    below = np.nonzero(tail_env < floor)[0]
    stop = below[0] if below.size else tail_env.size
    window_env = tail_env[:stop]
    window_t = tail_t[:stop]
    keep = window_env > 0.0
    window_env = window_env[keep]
    window_t = window_t[keep]
    if window_env.size < _MIN_FIT_POINTS:
        raise NoDecayDetectedError(
            f"only {window_env.size} samples inside the {window_db:g} dB window"
        )
    logs = np.log(window_env)
    slope, intercept = np.polyfit(window_t, logs, 1)
    predicted = slope * window_t + intercept
    ss_res = float(np.sum((logs - predicted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 0.0
    if slope >= 0.0:
        raise NoDecayDetectedError(f"nonnegative envelope slope {slope:.3g}")
    if r2 < 0.5:
        raise NoDecayDetectedError(f"decay fit r^2 = {r2:.3f} below 0.5")
    tau = -1.0 / slope
    return ReverbReport(
        tau=tau,
        q=2.0 * math.pi * f0 * tau,
        fit_window_db=window_db,
        r_squared=r2,
        n_points=int(window_env.size),
    )
