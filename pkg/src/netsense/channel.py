"""Array responses, clutter channels, the null-space ISAC precoder and
snapshot generators for the environment-estimation (EE) and target-sensing
(TS) periods.

Two clutter generators are available.  ``"waveform"`` follows the physical
chain: each patch reflects the precoded symbols with a fresh complex gain per
subframe.  ``"gaussian"`` draws the clutter-plus-noise directly from
``CN(0, R)``, the law the detector is derived under.  Both share the same
covariance.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, DomainError, UnsensableTargetError
from .scenario import GeometrySolution, ScenarioConfig, solve_geometry

POWER_SCALES = ("consistent", "literal")


def complex_normal(rng, size, var=1.0):
    """Circular complex Gaussian draws; real and imaginary parts N(0, var/2)."""
    var = np.asarray(var, dtype=float)
    z = rng.standard_normal(size=tuple(np.atleast_1d(size)) + (2,))
    return np.sqrt(var / 2.0) * (z[..., 0] + 1j * z[..., 1])


def steering(angle, n, spacing_ratio=0.5):
    """Unit-norm ULA response; entry m is ``exp(j 2 pi m d/lambda cos angle) / sqrt(n)``."""
    if n < 1:
        raise DomainError("antenna count must be >= 1")
    m = np.arange(n)
    return np.exp(2j * np.pi * spacing_ratio * m * np.cos(angle)) / np.sqrt(n)


def steering_matrix(angles, n, spacing_ratio=0.5):
    """Columns are :func:`steering` at each angle; shape ``(n, len(angles))``."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    m = np.arange(n)[:, None]
    return np.exp(2j * np.pi * spacing_ratio * m * np.cos(angles)[None, :]) / np.sqrt(n)


def channel_amplitude(cfg: ScenarioConfig):
    """Amplitude constant ``sqrt(N_R N_T)`` of the clutter channel model."""
    return np.sqrt(cfg.n_rx * cfg.n_tx)


def power_constant(cfg: ScenarioConfig, power_scale="consistent"):
    if power_scale == "consistent":
        return cfg.n_rx * cfg.n_tx
    if power_scale == "literal":
        return np.sqrt(cfg.n_rx * cfg.n_tx)
    raise DomainError(f"power_scale must be one of {POWER_SCALES}")


@dataclass(frozen=True)
class Precoder:
    matrix: np.ndarray           # F_ISAC, or F when no extension
    base: np.ndarray             # communication precoder F
    isac_extension: np.ndarray | None = None  # f_perp
    ue_weights: np.ndarray | None = None      # omega


@dataclass
class SnapshotBatch:
    snapshots: np.ndarray        # (n, N_R)
    period: str                  # "EE" or "TS"
    target_amplitude: np.ndarray | None = None  # (n,), TS only

    def __post_init__(self):
        if self.snapshots.ndim != 2:
            raise DomainError("snapshots must be a 2-D (n, N_R) array")

    def to_csv(self, fh=None):
        """Flat dump: subframe, antenna, re, im."""
        own = fh is None
        fh = fh or io.StringIO()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subframe", "antenna", "re", "im"])
        for n, row in enumerate(self.snapshots):
            for k, val in enumerate(row):
                w.writerow([n, k, repr(float(val.real)), repr(float(val.imag))])
        return fh.getvalue() if own else None


def bs_steering(cfg, angles):
    return steering_matrix(angles, cfg.n_tx, cfg.spacing_ratio)


def tmt_steering(cfg, angles):
    return steering_matrix(angles, cfg.n_rx, cfg.spacing_ratio)


def comm_precoder(cfg: ScenarioConfig, geo: GeometrySolution | None = None):
    """Matched beams toward the UEs, total power ``P_T`` split evenly."""
    geo = geo or solve_geometry(cfg)
    if cfg.n_ue == 0:
        raise DomainError("field 'ue_indices': at least one UE is required")
    a_ue = bs_steering(cfg, geo.aod_clutter[list(cfg.ue_indices)])
    return np.sqrt(cfg.tx_power / cfg.n_ue) * a_ue


def default_ue_weights(cfg: ScenarioConfig):
    return np.full(cfg.n_ue, np.sqrt(cfg.sensing_power / cfg.n_ue), dtype=complex)


def clutter_channel(cfg, geo, l, rng, n_draws=None):
    """Clutter channel matrices ``H_l`` for TMT ``l``.

    Returns shape ``(N_R, N_T)`` or ``(n_draws, N_R, N_T)``.
    """
    if cfg.n_clutter < 1:
        raise DomainError("at least one clutter patch is required")
    var = cfg.clutter_powers()[l]
    shape = (1 if n_draws is None else n_draws, cfg.n_clutter)
    eps = complex_normal(rng, shape, var)
    a_r = tmt_steering(cfg, geo.aoa_clutter[l])
    a_t = bs_steering(cfg, geo.aod_clutter)
    amp = channel_amplitude(cfg)
    h = amp * np.einsum("np,rp,tp->nrt", eps, a_r, a_t.conj())
    return h[0] if n_draws is None else h


def clutter_power_diag(cfg, geo, l, F, power_scale="consistent"):
    """Diagonal of the received clutter power matrix for TMT ``l``."""
    a_t = bs_steering(cfg, geo.aod_clutter)
    resp = np.sum(np.abs(a_t.conj().T @ F) ** 2, axis=1)
    return power_constant(cfg, power_scale) * cfg.clutter_powers()[l] * resp


def clutter_covariance(cfg, geo, l, F, power_scale="consistent"):
    """``A_R P A_R^H + sigma^2 I`` for TMT ``l`` under precoder ``F``."""
    a_r = tmt_steering(cfg, geo.aoa_clutter[l])
    p = clutter_power_diag(cfg, geo, l, F, power_scale)
    R = (a_r * p) @ a_r.conj().T + cfg.noise_power * np.eye(cfg.n_rx)
    return 0.5 * (R + R.conj().T)


def null_space_beam(cfg: ScenarioConfig, geo: GeometrySolution | None = None):
    """Normalized projection of the target beam onto the clutter null space.

    Satisfies ``A_T^H f = 0`` and ``a_T(phi_t)^H f = 1``.
    """
    geo = geo or solve_geometry(cfg)
    a_t = bs_steering(cfg, [geo.aod_target])[:, 0]
    if cfg.n_clutter == 0:
        return a_t.copy()
    A = bs_steering(cfg, geo.aod_clutter)
    sv = np.linalg.svd(A, compute_uv=False)
    if A.shape[1] > A.shape[0] or sv[-1] < 1e-10 * max(sv[0], 1.0):
        raise DegenerateGeometryError("clutter departure steering matrix is rank deficient")
    coef = np.linalg.solve(A.conj().T @ A, A.conj().T @ a_t)
    proj = A @ coef
    denom = 1.0 - np.real(np.vdot(a_t, proj))
    if denom < 1e-12:
        raise UnsensableTargetError("target departure direction lies in the clutter subspace")
    return (a_t - proj) / denom


def isac_precoder(F, f_perp, omega) -> Precoder:
    """``F + f_perp omega^T``."""
    F = np.asarray(F, dtype=complex)
    f_perp = np.asarray(f_perp, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    if F.shape != (f_perp.shape[0], omega.shape[0]):
        raise DomainError(
            f"precoder shapes disagree: F {F.shape}, f_perp {f_perp.shape}, omega {omega.shape}")
    return Precoder(F + np.outer(f_perp, omega), F, f_perp, omega)


def default_precoder(cfg, geo=None, isac=True) -> Precoder:
    geo = geo or solve_geometry(cfg)
    F = comm_precoder(cfg, geo)
    if not isac:
        return Precoder(F, F)
    return isac_precoder(F, null_space_beam(cfg, geo), default_ue_weights(cfg))


def _clutter_plus_noise(cfg, geo, l, F, n, rng, model, power_scale="consistent",
                        symbols=None):
    if model == "gaussian":
        R = clutter_covariance(cfg, geo, l, F, power_scale)
        C = np.linalg.cholesky(R)
        return complex_normal(rng, (n, cfg.n_rx)) @ C.T
    if model != "waveform":
        raise DomainError(f"unknown clutter model {model!r}")
    if symbols is None:
        symbols = complex_normal(rng, (n, F.shape[1]))
    a_t = bs_steering(cfg, geo.aod_clutter)
    a_r = tmt_steering(cfg, geo.aoa_clutter[l])
    eps = complex_normal(rng, (n, cfg.n_clutter), cfg.clutter_powers()[l])
    amp = channel_amplitude(cfg)
    tx = symbols @ (a_t.conj().T @ F).T          # (n, P) beam responses
    t = amp * eps * tx
    noise = complex_normal(rng, (n, cfg.n_rx), cfg.noise_power)
    return t @ a_r.T + noise


def simulate_ee(cfg, geo, l, F, n_snapshots, rng, model="waveform",
                power_scale="consistent") -> SnapshotBatch:
    """EE-period echoes at TMT ``l``: clutter reflections of ``F s`` plus noise."""
    if n_snapshots < 1:
        raise DomainError("n_snapshots must be >= 1")
    F = F.matrix if isinstance(F, Precoder) else F
    y = _clutter_plus_noise(cfg, geo, l, F, n_snapshots, rng, model, power_scale)
    return SnapshotBatch(y, "EE")


def target_gain_variance(cfg, geo, l, precoder: Precoder):
    """Variance of the target reflection gain giving ``E|c|^2 = SNR_l sigma^2``."""
    from .scenario import snr_from_range
    a_t = bs_steering(cfg, [geo.aod_target])[:, 0]
    beam = precoder.matrix.T @ a_t.conj()     # a_T^H F_ISAC as a K-vector
    gain = cfg.n_rx * cfg.n_tx * np.sum(np.abs(beam) ** 2)
    return snr_from_range(cfg, l, geo) * cfg.noise_power / gain


def simulate_ts(cfg, geo, l, precoder: Precoder, target_present, n_trials, rng,
                amplitudes=None, mode="fluctuating", model="waveform",
                power_scale="consistent", symbols=None) -> SnapshotBatch:
    """TS-period signal-under-test at TMT ``l``, one row per trial.

    ``amplitudes`` fixes the target amplitude ``c`` (scalar or per trial).
    Otherwise ``c = sqrt(N_R N_T) eps_t a_T^H(phi_t) F_ISAC s`` with the gain
    ``eps_t`` deterministic (``mode="fixed"``) or complex Gaussian
    (``mode="fluctuating"``), scaled so that ``E|c|^2 = SNR_l sigma^2``.
    """
    if precoder.isac_extension is None:
        raise DomainError("TS simulation needs an ISAC precoder with f_perp")
    F = precoder.matrix
    if symbols is None:
        symbols = complex_normal(rng, (n_trials, F.shape[1]))
    y = _clutter_plus_noise(cfg, geo, l, F, n_trials, rng, model, power_scale,
                            symbols=symbols)
    c = np.zeros(n_trials, dtype=complex)
    if target_present:
        if amplitudes is not None:
            c = np.broadcast_to(np.asarray(amplitudes, dtype=complex), (n_trials,)).copy()
        else:
            var = target_gain_variance(cfg, geo, l, precoder)
            if mode == "fixed":
                eps = np.full(n_trials, np.sqrt(var), dtype=complex)
            elif mode == "fluctuating":
                eps = complex_normal(rng, n_trials, var)
            else:
                raise DomainError(f"unknown amplitude mode {mode!r}")
            a_t = bs_steering(cfg, [geo.aod_target])[:, 0]
            amp = channel_amplitude(cfg)
            c = amp * eps * (symbols @ (F.T @ a_t.conj()))
        a_r = tmt_steering(cfg, [geo.aoa_target[l]])[:, 0]
        y = y + c[:, None] * a_r[None, :]
    return SnapshotBatch(y, "TS", c)
