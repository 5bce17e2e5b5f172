"""Joint GLRT detector across TMTs, noncentrality and array-gain analysis.

Statistics carry a factor of 2 relative to the raw whitened matched-filter
power ``|a^H R^-1 y|^2 / (a^H R^-1 a)``.  With that scaling a TMT's statistic
is exactly chi-square with two degrees of freedom under H0, and noncentral
with ``mu^2 = 2 |c|^2 a^H R^-1 a`` under H1, so every threshold and Marcum-Q
formula applies without further correction.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import specfun
from .errors import DomainError, NumericError

RANK_MARGIN = 9.0


@dataclass
class TmtObservation:
    y: np.ndarray       # (N_R,) or (n_trials, N_R)
    a_t: np.ndarray     # (N_R,) target steering vector
    R: np.ndarray       # (N_R, N_R) known or estimated covariance

    def __post_init__(self):
        n = self.a_t.shape[0]
        if self.R.shape != (n, n) or self.y.shape[-1] != n:
            raise DomainError(
                f"dimension mismatch: y {self.y.shape}, a_t {self.a_t.shape}, R {self.R.shape}")


@dataclass
class FusionResult:
    per_tmt: np.ndarray
    total: float | np.ndarray
    threshold: float
    decision: bool | np.ndarray


@dataclass
class ClutterSubspace:
    eigvecs: np.ndarray
    eigvals: np.ndarray
    projector_perp: np.ndarray
    noise_power: float
    weights: np.ndarray | None = field(default=None)

    @property
    def rank(self) -> int:
        return self.eigvecs.shape[1]


def _whiten(a_t, R):
    """Return ``R^-1 a`` and ``a^H R^-1 a`` via a Cholesky solve."""
    try:
        cho = linalg.cho_factor(R, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericError("covariance is not positive definite") from exc
    w = linalg.cho_solve(cho, a_t, check_finite=False)
    q = np.real(np.vdot(a_t, w))
    if not q > 0:
        raise NumericError("covariance is singular along the target direction")
    return w, q


def glrt_statistic(obs: TmtObservation):
    """``2 |a^H R^-1 y|^2 / (a^H R^-1 a)``; vectorized over leading axes of ``y``."""
    w, q = _whiten(obs.a_t, obs.R)
    return 2.0 * np.abs(obs.y @ w.conj()) ** 2 / q


def amplitude_estimate(obs: TmtObservation):
    w, q = _whiten(obs.a_t, obs.R)
    return (obs.y @ w.conj()) / q


def detection_threshold(pfa, L, method="approx"):
    if method == "approx":
        return specfun.threshold_approx(pfa, L)
    if method == "exact":
        return specfun.threshold_exact(pfa, L)
    raise DomainError(f"threshold method must be 'approx' or 'exact', got {method!r}")


def fuse_and_decide(observations, pfa, threshold="approx") -> FusionResult:
    """Sum the per-TMT statistics and compare against the CFAR threshold."""
    L = len(observations)
    if L < 1:
        raise DomainError("at least one observation is required")
    per = np.stack([glrt_statistic(o) for o in observations])
    total = per.sum(axis=0)
    gamma = detection_threshold(pfa, L, threshold)
    decision = total > gamma
    if np.ndim(total) == 0:
        total, decision = float(total), bool(decision)
    return FusionResult(per, total, gamma, decision)


def noncentral_exact(c, a_t, R):
    """``mu^2 = 2 |c|^2 a^H R^-1 a``."""
    _, q = _whiten(a_t, R)
    return 2.0 * abs(c) ** 2 * q


def clutter_subspace(R_env, noise_power, rank_margin=RANK_MARGIN) -> ClutterSubspace:
    """Dominant eigenvectors of ``R_env`` above ``noise_power * (1 + rank_margin)``."""
    R_env = np.asarray(R_env, dtype=complex)
    vals, vecs = np.linalg.eigh(0.5 * (R_env + R_env.conj().T))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > noise_power * (1.0 + rank_margin)
    V = vecs[:, keep]
    n = R_env.shape[0]
    P_perp = np.eye(n) - V @ V.conj().T
    return ClutterSubspace(V, vals[keep] - noise_power, P_perp, noise_power)


def noncentral_highcnr(sub: ClutterSubspace, a_t, snr):
    """High-CNR approximation ``2 SNR ||P_perp a||^2``."""
    return 2.0 * snr * projection_cos2(sub, a_t)


def projection_cos2(sub: ClutterSubspace, a_t):
    """``||P_perp a||^2 / ||a||^2``, the clutter-free fraction of the target beam."""
    a_t = np.asarray(a_t)
    r = sub.projector_perp @ a_t
    return float(np.real(np.vdot(r, r)) / np.real(np.vdot(a_t, a_t)))


def projection_weights(sub: ClutterSubspace, a_t, clutter_steering):
    """Least-squares weights expressing ``P_V a`` in the clutter steering vectors."""
    a_p = a_t - sub.projector_perp @ a_t
    A = np.asarray(clutter_steering)
    alpha, *_ = np.linalg.lstsq(A, a_p, rcond=None)
    return alpha, np.linalg.cond(A)


def sinc_overlap(delta, n_rx):
    """``a_t^H a_R(theta_i)`` written with the Dirichlet kernel.

    ``delta = (d/lambda)(cos theta_t - cos theta_i)``.  At ``delta`` integer
    the ratio of sincs is taken as its limit.
    """
    delta = np.asarray(delta, dtype=float)
    num = specfun.sinc(n_rx * delta)
    den = specfun.sinc(delta)
    near = np.abs(den) < 1e-12
    ratio = np.where(near, np.cos(np.pi * (n_rx - 1) * delta), num / np.where(near, 1.0, den))
    return np.exp(-1j * np.pi * (n_rx - 1) * delta) * ratio


def sinc_decomposition(aoa_target, aoa_clutter, alpha, n_rx, snr, spacing_ratio=0.5):
    """Noncentrality from the sinc expansion of the projected steering vector.

    ``2 SNR (1 - |sum_i alpha_i e^{-j pi (N-1) D_i} sinc(N D_i) / sinc(D_i)|)``.
    """
    delta = spacing_ratio * (np.cos(aoa_target) - np.cos(np.asarray(aoa_clutter)))
    overlap = np.sum(np.asarray(alpha) * sinc_overlap(delta, n_rx))
    return 2.0 * snr * (1.0 - abs(overlap))


def sinc_predictor(sub, a_t, clutter_steering, aoa_target, aoa_clutter, n_rx, snr,
                   spacing_ratio=0.5, max_cond=1e8):
    """Fit the projection weights then evaluate :func:`sinc_decomposition`.

    Falls back to :func:`noncentral_highcnr` with a warning when the clutter
    steering matrix is ill-conditioned.
    """
    alpha, cond = projection_weights(sub, a_t, clutter_steering)
    if not np.isfinite(cond) or cond > max_cond:
        warnings.warn("ill-conditioned steering fit; using the projector form",
                      RuntimeWarning, stacklevel=2)
        return noncentral_highcnr(sub, a_t, snr)
    sub.weights = alpha
    return sinc_decomposition(aoa_target, aoa_clutter, alpha, n_rx, snr, spacing_ratio)
