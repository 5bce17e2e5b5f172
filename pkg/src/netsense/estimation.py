"""Clutter covariance estimation from partially sampled snapshots.

Each TMT forwards only a subset of its antenna outputs per subframe.  The EM
iteration fills in the missing entries with their conditional Gaussian
moments given the current estimate; an optional identity shrinkage keeps the
estimate well conditioned.  All routines work in noise-normalized units
(snapshots divided by ``sigma``) so the identity is the noise floor.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DomainError, NumericError


@dataclass(frozen=True)
class SamplingPattern:
    selections: tuple     # per-snapshot index arrays, in observation order
    dim: int

    def __post_init__(self):
        sels = tuple(np.asarray(s, dtype=np.intp) for s in self.selections)
        for n, s in enumerate(sels):
            if s.ndim != 1 or np.any(s < 0) or np.any(s >= self.dim):
                raise DomainError(f"selection {n} has indices outside [0, {self.dim})")
            if np.unique(s).size != s.size:
                raise DomainError(f"selection {n} repeats an antenna index")
        object.__setattr__(self, "selections", sels)

    @property
    def n_snapshots(self) -> int:
        return len(self.selections)

    def counts(self):
        return np.array([s.size for s in self.selections])

    def complements(self):
        full = np.arange(self.dim)
        return tuple(np.setdiff1d(full, s) for s in self.selections)

    def sampling_matrix(self, n):
        """The 0/1 selection matrix of snapshot ``n``, shape ``(p_n, dim)``."""
        s = self.selections[n]
        omega = np.zeros((s.size, self.dim))
        omega[np.arange(s.size), s] = 1.0
        return omega

    def realized_ratio(self) -> float:
        return float(self.counts().sum()) / (self.n_snapshots * self.dim)

    def permuted(self, perm):
        """Pattern after relabelling antenna ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return SamplingPattern(tuple(perm[s] for s in self.selections), self.dim)


def make_pattern(n_snapshots, dim, iota, rng, fixed=False) -> SamplingPattern:
    """``round(iota * dim)`` antennas per snapshot, uniformly without replacement.

    With ``fixed=True`` every snapshot reuses the first draw.
    """
    if not 0.0 < iota <= 1.0:
        raise DomainError(f"sparsity ratio must lie in (0, 1], got {iota}")
    p = int(round(iota * dim))
    if p < 1:
        raise DomainError(f"sparsity ratio {iota} leaves no antennas out of {dim}")
    if p == dim:
        return SamplingPattern(tuple(np.arange(dim) for _ in range(n_snapshots)), dim)
    if fixed:
        s = np.sort(rng.choice(dim, size=p, replace=False))
        return SamplingPattern(tuple(s for _ in range(n_snapshots)), dim)
    sels = np.argsort(rng.random((n_snapshots, dim)), axis=1)[:, :p]
    return SamplingPattern(tuple(np.sort(sels, axis=1)), dim)


@dataclass
class PartialSnapshots:
    values: tuple
    pattern: SamplingPattern

    def __post_init__(self):
        vals = tuple(np.asarray(v, dtype=np.complex128) for v in self.values)
        if len(vals) != self.pattern.n_snapshots:
            raise DomainError("one value vector per pattern row is required")
        for n, (v, s) in enumerate(zip(vals, self.pattern.selections)):
            if v.shape != s.shape:
                raise DomainError(f"snapshot {n}: {v.size} values for {s.size} indices")
        self.values = vals
        counts = self.pattern.counts()
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.intp)
        if counts.sum():
            self.flat_values = np.ascontiguousarray(np.concatenate(vals))
            self.flat_idx = np.ascontiguousarray(
                np.concatenate(self.pattern.selections)).astype(np.intp)
        else:
            self.flat_values = np.zeros(0, dtype=np.complex128)
            self.flat_idx = np.zeros(0, dtype=np.intp)

    @classmethod
    def from_full(cls, snapshots, pattern: SamplingPattern):
        """Keep the entries of ``snapshots`` (shape ``(N, dim)``) named by ``pattern``."""
        snapshots = np.asarray(snapshots)
        if snapshots.shape != (pattern.n_snapshots, pattern.dim):
            raise DomainError(
                f"snapshots shape {snapshots.shape} does not match pattern "
                f"({pattern.n_snapshots}, {pattern.dim})")
        return cls(tuple(row[s] for row, s in zip(snapshots, pattern.selections)), pattern)

    @property
    def dim(self) -> int:
        return self.pattern.dim

    @property
    def n_snapshots(self) -> int:
        return self.pattern.n_snapshots

    def scaled(self, factor):
        return PartialSnapshots(tuple(v * factor for v in self.values), self.pattern)


@dataclass
class EmState:
    estimate: np.ndarray
    iteration: int = 0
    loglik: float = float("nan")


@dataclass
class EmResult:
    state: EmState
    iterates: list = field(default_factory=list)
    loglik_trace: list = field(default_factory=list)
    converged: bool = False


def hermitian(A):
    return 0.5 * (A + A.conj().T)


def scm(snapshots):
    """Sample covariance ``(1/N) sum y y^H`` of full snapshots, shape ``(N, dim)``."""
    Y = np.atleast_2d(np.asarray(snapshots, dtype=np.complex128))
    if Y.shape[0] < 1:
        raise DomainError("at least one snapshot is required")
    return hermitian(Y.T @ Y.conj() / Y.shape[0])


def em_e_step(state, data: PartialSnapshots, backend=None):
    """``Phi = (1/N) sum_n E[y_n y_n^H | observed entries; R]``."""
    R = state.estimate if isinstance(state, EmState) else np.asarray(state)
    R = np.ascontiguousarray(R, dtype=np.complex128)
    if R.shape != (data.dim, data.dim):
        raise DomainError(f"estimate shape {R.shape} does not match dimension {data.dim}")
    kern = _backend.kernels(backend)
    try:
        phi = kern.estep_phi(R, data.flat_values, data.flat_idx, data.offsets)
    except np.linalg.LinAlgError as exc:
        raise NumericError(str(exc)) from exc
    return hermitian(np.asarray(phi))


def conditional_second_moment(R, values, observed, backend=None):
    """``S_n`` for one snapshot observed at ``observed``."""
    observed = np.asarray(observed, dtype=np.intp)
    pattern = SamplingPattern((observed,), np.asarray(R).shape[0])
    return em_e_step(R, PartialSnapshots((values,), pattern), backend)


def em_m_step(phi):
    return hermitian(np.array(phi, dtype=np.complex128))


def shrinkage_update(phi, rho):
    """``(1 - rho) Phi + rho I``."""
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"shrinkage coefficient must lie in [0, 1), got {rho}")
    phi = np.asarray(phi)
    return (1.0 - rho) * phi + rho * np.eye(phi.shape[0])


def observed_loglik(R, data: PartialSnapshots):
    """Log-likelihood of the observed entries under ``CN(0, R)``."""
    R = np.asarray(R, dtype=np.complex128)
    total = 0.0
    groups = {}
    for n, s in enumerate(data.pattern.selections):
        groups.setdefault(s.size, []).append(n)
    for p, members in groups.items():
        if p == 0:
            continue
        obs = np.stack([data.pattern.selections[n] for n in members])
        vals = np.stack([data.values[n] for n in members])
        r_oo = R[obs[:, :, None], obs[:, None, :]]
        try:
            L = np.linalg.cholesky(r_oo)
        except np.linalg.LinAlgError as exc:
            raise NumericError("observed covariance block is not positive definite") from exc
        logdet = 2.0 * np.log(np.abs(np.diagonal(L, axis1=1, axis2=2))).sum(axis=1)
        w = np.linalg.solve(L, vals[:, :, None])[:, :, 0]
        quad = np.sum(np.abs(w) ** 2, axis=1)
        total += float(np.sum(-p * np.log(np.pi) - logdet - quad))
    return total


def init_diag(data: PartialSnapshots, noise_power=1.0):
    """Per-antenna sample variance over the observed entries, floored at ``sigma^2/10``.

    Antennas never observed take the mean of the observed variances.
    """
    power = np.zeros(data.dim)
    count = np.zeros(data.dim)
    np.add.at(power, data.flat_idx, np.abs(data.flat_values) ** 2)
    np.add.at(count, data.flat_idx, 1.0)
    seen = count > 0
    var = np.empty(data.dim)
    var[seen] = power[seen] / count[seen]
    var[~seen] = var[seen].mean() if seen.any() else noise_power
    return np.diag(np.maximum(var, noise_power / 10.0)).astype(np.complex128)


def _rel_change(new, old):
    den = np.linalg.norm(old)
    return np.linalg.norm(new - old) / (den if den > 0 else 1.0)


def em_run(data: PartialSnapshots, init=None, max_iters=50, tol=1e-6, rho=None,
           noise_power=1.0, track_loglik=True, backend=None) -> EmResult:
    """Iterate E/M steps, with identity shrinkage when ``rho`` is given.

    ``rho`` may be a scalar or a per-iteration sequence.  Stops when the
    relative Frobenius change falls below ``tol``.
    """
    if max_iters < 1:
        raise DomainError("max_iters must be >= 1")
    R = init_diag(data, noise_power) if init is None else np.asarray(init, dtype=np.complex128)
    if np.min(np.linalg.eigvalsh(hermitian(R))) <= 0:
        raise DomainError("initial estimate must be positive definite")
    state = EmState(R, 0, observed_loglik(R, data) if track_loglik else float("nan"))
    result = EmResult(state, [R], [state.loglik])
    for t in range(max_iters):
        phi = em_e_step(R, data, backend)
        R_new = em_m_step(phi)
        if rho is not None:
            r = rho if np.ndim(rho) == 0 else rho[min(t, len(rho) - 1)]
            R_new = shrinkage_update(R_new, r)
        change = _rel_change(R_new, R)
        R = R_new
        ll = observed_loglik(R, data) if track_loglik else float("nan")
        result.iterates.append(R)
        result.loglik_trace.append(ll)
        result.state = EmState(R, t + 1, ll)
        if change < tol:
            result.converged = True
            break
    return result


def matrix_to_csv(M, fh=None):
    """Flat dump: row, col, re, im."""
    own = fh is None
    fh = fh or io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["row", "col", "re", "im"])
    M = np.asarray(M)
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            w.writerow([i, j, repr(float(M[i, j].real)), repr(float(M[i, j].imag))])
    return fh.getvalue() if own else None


def matrix_from_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    n = max(int(r["row"]) for r in rows) + 1
    m = max(int(r["col"]) for r in rows) + 1
    M = np.zeros((n, m), dtype=np.complex128)
    for r in rows:
        M[int(r["row"]), int(r["col"])] = complex(float(r["re"]), float(r["im"]))
    return M
