"""Marcum-Q, chi-square tails and CFAR thresholds."""
import math

import numpy as np

from . import _backend
from .errors import DomainError, NumericError


def _check_finite(**kwargs):
    for name, val in kwargs.items():
        if not math.isfinite(val):
            raise DomainError(f"{name} must be finite, got {val!r}")


def _check_order(L):
    if int(L) != L or L < 1:
        raise DomainError(f"detection order L must be a positive integer, got {L!r}")
    return int(L)


def marcum_pair(v, a, b):
    """``(Q_v(a, b), 1 - Q_v(a, b))``, both accurate near 0 and near 1."""
    v, a, b = float(v), float(a), float(b)
    _check_finite(v=v, a=a, b=b)
    if v <= 0:
        raise DomainError(f"order must be positive, got {v}")
    if a < 0 or b < 0:
        raise DomainError(f"arguments must be nonnegative, got a={a}, b={b}")
    return _backend.marcum_pair(v, a, b)


def marcum_q(v, a, b):
    """Generalized Marcum Q-function of order ``v``.

    Equals the survival function at ``b**2`` of a noncentral chi-square with
    ``2v`` degrees of freedom and noncentrality ``a**2``.  Absolute error is
    below 1e-12; relative error is near machine precision on the smaller of
    ``Q`` and ``1 - Q``.
    """
    return marcum_pair(v, a, b)[0]


def marcum_qc(v, a, b):
    """``1 - Q_v(a, b)`` without cancellation."""
    return marcum_pair(v, a, b)[1]


def log_marcum_q(v, a, b):
    q, qc = marcum_pair(v, a, b)
    if q > 0.5:
        return math.log1p(-qc)
    return math.log(q) if q > 0 else -math.inf


def log_pfa_closed_form(gamma, L):
    """Natural log of the CFAR false-alarm probability, summed in log space."""
    gamma = float(gamma)
    _check_finite(gamma=gamma)
    L = _check_order(L)
    if gamma < 0:
        raise DomainError(f"threshold must be nonnegative, got {gamma}")
    if gamma == 0:
        return 0.0
    half = 0.5 * gamma
    terms = np.array([l * math.log(half) - math.lgamma(l + 1.0) for l in range(L)])
    top = terms.max()
    return -half + top + math.log(np.exp(terms - top).sum())


def pfa_closed_form(gamma, L):
    """False-alarm probability ``exp(-g/2) * sum_{l<L} (g/2)**l / l!``."""
    return math.exp(log_pfa_closed_form(gamma, L))


def threshold_exact(pfa, L, max_iter=400):
    """Invert ``pfa_closed_form`` by bisection.

    The bracket upper end doubles until the false-alarm probability drops
    below the target; bisection then runs to floating-point resolution.
    """
    pfa = float(pfa)
    L = _check_order(L)
    if not 0.0 < pfa < 1.0:
        raise DomainError(f"pfa must lie in (0, 1), got {pfa}")
    log_target = math.log(pfa)
    lo, hi = 0.0, 1.0
    while log_pfa_closed_form(hi, L) > log_target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise NumericError("could not bracket the CFAR threshold")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        if log_pfa_closed_form(mid, L) > log_target:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    if abs(pfa_closed_form(mid, L) - pfa) > 1e-12:
        raise NumericError("CFAR threshold bisection did not converge")
    return mid


def _cfar_log_term(pfa):
    pfa = float(pfa)
    if not 0.0 < pfa < 1.0:
        raise DomainError(f"pfa must lie in (0, 1), got {pfa}")
    arg = 4.0 * pfa * (1.0 - pfa)
    if arg >= 1.0 or pfa >= 0.25:
        raise DomainError(
            f"pfa={pfa} outside (0, 1/4): log argument 4*pfa*(1-pfa) must be < 1")
    return math.sqrt(-1.6 * math.log(arg))


def threshold_approx(pfa, L):
    """Closed-form CFAR threshold approximation used by the detector."""
    L = _check_order(L)
    root = _cfar_log_term(pfa)
    return (L - 0.5) + (root + math.sqrt(L - 0.5)) ** 2


def threshold_increment(pfa, L):
    """``threshold_approx(pfa, L + 1) - threshold_approx(pfa, L)`` in closed form."""
    L = _check_order(L)
    root = _cfar_log_term(pfa)
    return 2.0 * root * (math.sqrt(L + 0.5) - math.sqrt(L - 0.5)) + 2.0


def pd_theoretical(zeta, gamma, L):
    """Detection probability ``Q_L(sqrt(zeta), sqrt(gamma))``."""
    zeta, gamma = float(zeta), float(gamma)
    L = _check_order(L)
    if zeta < 0 or gamma < 0:
        raise DomainError("noncentrality and threshold must be nonnegative")
    return marcum_q(L, math.sqrt(zeta), math.sqrt(gamma))


def sinc(x):
    """Normalized sinc, ``sin(pi x) / (pi x)``; works elementwise on arrays."""
    return np.sinc(x)
