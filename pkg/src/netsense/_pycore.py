"""Pure-Python reference kernels.

Same signatures as the compiled ``_core`` module.  Used when the extension
is not built, or when ``NETSENSE_PURE_PYTHON`` is set.
"""
import math

import numpy as np
from scipy import special

_EPS = 1e-17
_MAX_TERMS = 200_000


def _log_poisson(k, log_lam, lam):
    return -lam + k * log_lam - math.lgamma(k + 1.0)


def marcum_pair(v, a, b):
    """Return ``(Q_v(a, b), 1 - Q_v(a, b))``, each with full relative accuracy.

    Poisson mixture of regularized incomplete gamma functions.  The sum runs
    outward from the Poisson mode and stops once a geometric bound on the
    neglected terms drops below ``_EPS`` times the partial sum.  Only the
    smaller of the two tails is summed; the other is ``1 - sum``.
    """
    if b == 0.0:
        return 1.0, 0.0
    x = 0.5 * b * b
    lam = 0.5 * a * a
    if lam == 0.0:
        return float(special.gammaincc(v, x)), float(special.gammainc(v, x))

    upper = x > v + lam
    gfun = special.gammaincc if upper else special.gammainc
    log_lam = math.log(lam)
    k0 = int(lam)

    total = 0.0
    # upward from the mode
    k = k0
    g_k = 1.0
    for _ in range(_MAX_TERMS):
        w = math.exp(_log_poisson(k, log_lam, lam))
        g_k = float(gfun(v + k, x))
        total += w * g_k
        ratio = lam / (k + 2.0)
        if ratio < 1.0:
            w_next = w * lam / (k + 1.0)
            # gammaincc rises with k (bounded by 1); gammainc falls with k
            g_bound = 1.0 if upper else g_k
            if g_bound * w_next / (1.0 - ratio) <= _EPS * total:
                break
        k += 1
    # downward from the mode
    k = k0 - 1
    while k >= 0:
        w = math.exp(_log_poisson(k, log_lam, lam))
        g_k = float(gfun(v + k, x))
        total += w * g_k
        if k == 0:
            break
        ratio = (k - 1.0) / lam if k >= 1 else 0.0
        w_prev = w * k / lam
        g_bound = g_k if upper else 1.0
        if ratio < 1.0 and g_bound * w_prev / (1.0 - ratio) <= _EPS * total:
            break
        k -= 1

    total = min(total, 1.0)
    if upper:
        return total, 1.0 - total
    return 1.0 - total, total


def _group_by_size(offsets):
    sizes = np.diff(offsets)
    groups = {}
    for n, p in enumerate(sizes):
        groups.setdefault(int(p), []).append(n)
    return groups


def estep_phi(R, values, idx, offsets):
    """Average conditional second moment of partially observed snapshots.

    ``values[offsets[n]:offsets[n+1]]`` are the entries of snapshot ``n``
    observed at antennas ``idx[offsets[n]:offsets[n+1]]``.  ``R`` is the
    current covariance estimate.
    """
    R = np.asarray(R, dtype=np.complex128)
    dim = R.shape[0]
    n_snap = len(offsets) - 1
    phi = np.zeros((dim, dim), dtype=np.complex128)
    all_idx = np.arange(dim)
    for p, members in sorted(_group_by_size(offsets).items()):
        members = np.asarray(members)
        if p == 0:
            phi += len(members) * R
            continue
        obs = np.stack([idx[offsets[n]:offsets[n + 1]] for n in members])
        vals = np.stack([values[offsets[n]:offsets[n + 1]] for n in members])
        rows = np.arange(len(members))[:, None]
        z = np.zeros((len(members), dim), dtype=np.complex128)
        z[rows, obs] = vals
        if p == dim:
            phi += np.einsum("gi,gj->ij", z, z.conj())
            continue
        mask = np.ones((len(members), dim), dtype=bool)
        mask[rows, obs] = False
        miss = np.stack([all_idx[m] for m in mask])
        r_oo = R[obs[:, :, None], obs[:, None, :]]
        r_mo = R[miss[:, :, None], obs[:, None, :]]
        r_om = R[obs[:, :, None], miss[:, None, :]]
        r_mm = R[miss[:, :, None], miss[:, None, :]]
        try:
            np.linalg.cholesky(r_oo)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "observed covariance block is not positive definite") from exc
        rhs = np.concatenate([vals[:, :, None], r_om], axis=2)
        sol = np.linalg.solve(r_oo, rhs)
        k = np.einsum("gmp,gp->gm", r_mo, sol[:, :, 0])
        psi = r_mm - r_mo @ sol[:, :, 1:]
        z[rows, miss] = k
        phi += np.einsum("gi,gj->ij", z, z.conj())
        embed = np.zeros((len(members), dim, dim), dtype=np.complex128)
        embed[rows[:, :, None], miss[:, :, None], miss[:, None, :]] = psi
        phi += embed.sum(axis=0)
    return phi / n_snap
