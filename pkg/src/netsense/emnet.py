"""Unfolded EM network: T EM layers with learnable shrinkage and memory.

Layer ``t`` maps the running estimate ``R_t`` to

    Phi_t   = E-step(R_t)
    Theta   = (1 - rho_t) Phi_t + rho_t I
    R_{t+1} = (1 - xi_t) Theta + xi_t R_t

With every ``rho_t = xi_t = 0`` the network reproduces plain EM.  Training
minimizes the reciprocal of the SCNR loss averaged over layers and batch,
using central finite differences on logistic-reparameterized parameters.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from . import estimation
from .errors import DomainError, NumericError, TrainingFailure

PARAM_CEIL = 0.99


@dataclass(frozen=True)
class LayerParams:
    rho: float
    xi: float

    def __post_init__(self):
        for name in ("rho", "xi"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise DomainError(f"layer parameter {name} must lie in [0, 1), got {v}")


def _squash(u):
    return PARAM_CEIL / (1.0 + np.exp(-np.asarray(u, dtype=float)))


def _unsquash(p):
    p = np.asarray(p, dtype=float) / PARAM_CEIL
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return np.log(p) - np.log1p(-p)


@dataclass
class EMNetModel:
    layers: list
    dim: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.layers) < 1:
            raise DomainError("the network needs at least one layer")
        self.layers = [l if isinstance(l, LayerParams) else LayerParams(*l) for l in self.layers]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @classmethod
    def constant(cls, n_layers, dim, rho=0.1, xi=0.1):
        return cls([LayerParams(rho, xi) for _ in range(n_layers)], dim)

    @classmethod
    def plain_em(cls, n_layers, dim):
        return cls.constant(n_layers, dim, 0.0, 0.0)

    def params(self):
        """Parameters as a ``(T, 2)`` array of ``(rho, xi)`` rows."""
        return np.array([[l.rho, l.xi] for l in self.layers])

    def unconstrained(self):
        return _unsquash(self.params()).ravel()

    @classmethod
    def from_unconstrained(cls, u, dim, meta=None):
        p = _squash(np.asarray(u).reshape(-1, 2))
        return cls([LayerParams(float(r), float(x)) for r, x in p], dim, dict(meta or {}))

    def to_text(self) -> str:
        lines = [f"# {k} = {v}" for k, v in self.meta.items()]
        lines.append(f"dim {self.dim}")
        lines.append(f"layers {self.n_layers}")
        lines += [f"{l.rho!r} {l.xi!r}" for l in self.layers]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        meta, layers, dim, count = {}, [], None, None
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
                continue
            head, *rest = line.split()
            if head == "dim":
                dim = int(rest[0])
            elif head == "layers":
                count = int(rest[0])
            else:
                layers.append(LayerParams(float(head), float(rest[0])))
        if dim is None or count is None or count != len(layers):
            raise DomainError("model file must list 'dim', 'layers T' and T parameter rows")
        return cls(layers, dim, meta)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass
class TrainingConfig:
    n_layers: int = 10
    n_batches: int = 1500
    step_size: float = 0.05
    decay: float = 0.5
    decay_every: int = 500
    seed: int = 0
    fd_step: float = 1e-3
    init_rho: float = 0.1
    init_xi: float = 0.1
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.n_layers < 1 or self.n_batches < 0:
            raise DomainError("n_layers must be >= 1 and n_batches >= 0")
        if self.step_size < 0 or self.fd_step <= 0:
            raise DomainError("step_size must be >= 0 and fd_step > 0")

    def describe(self):
        return {k: v for k, v in asdict(self).items()}


@dataclass
class TrainingSample:
    data: estimation.PartialSnapshots
    R_true: np.ndarray
    a_t: np.ndarray
    init: np.ndarray | None = None


@dataclass
class TrainResult:
    model: EMNetModel
    loss_trace: list
    param_trace: list


def forward(model: EMNetModel, data, init=None, backend=None, first_phi=None):
    """Per-layer estimates ``[R_1, ..., R_T]``.

    ``first_phi`` lets callers reuse the first E-step, which does not depend
    on the parameters.
    """
    R = estimation.init_diag(data) if init is None else np.asarray(init, dtype=np.complex128)
    out = []
    eye = np.eye(R.shape[0])
    for t, lp in enumerate(model.layers):
        if t == 0 and first_phi is not None:
            phi = first_phi
        else:
            phi = estimation.em_e_step(R, data, backend)
        theta = (1.0 - lp.rho) * phi + lp.rho * eye
        R = (1.0 - lp.xi) * theta + lp.xi * R
        out.append(R)
    return out


def _filter(R, a):
    try:
        cho = linalg.cho_factor(R, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericError("covariance is not positive definite") from exc
    return linalg.cho_solve(cho, a, check_finite=False)


def scnr_loss(R_true, R_hat, a_t):
    """Output SCNR with the plug-in filter ``R_hat^-1 a`` relative to the optimum."""
    w = _filter(R_hat, a_t)
    w_opt = _filter(R_true, a_t)
    num = abs(np.vdot(a_t, w)) ** 2
    den = np.real(np.vdot(a_t, w_opt)) * np.real(np.vdot(w, R_true @ w))
    if not den > 0:
        raise NumericError("degenerate SCNR denominator")
    return float(min(num / den, 1.0))


def mean_scnr(model, batch, backend=None, first_phis=None):
    vals = []
    for k, s in enumerate(batch):
        fp = None if first_phis is None else first_phis[k]
        for R_hat in forward(model, s.data, s.init, backend, fp):
            vals.append(scnr_loss(s.R_true, R_hat, s.a_t))
    return float(np.mean(vals))


def training_loss(model, batch, backend=None, first_phis=None):
    """Reciprocal of the SCNR loss averaged over every layer and sample."""
    if not batch:
        raise DomainError("training batch is empty")
    return 1.0 / mean_scnr(model, batch, backend, first_phis)


def _prepare(batch):
    for s in batch:
        if s.init is None:
            s.init = estimation.init_diag(s.data)
    return [estimation.em_e_step(s.init, s.data) for s in batch]


def fd_gradient(u, dim, batch, h, backend=None, first_phis=None):
    """Central-difference gradient of the training loss in the unconstrained parameters."""
    g = np.zeros_like(u)
    for i in range(u.size):
        up, dn = u.copy(), u.copy()
        up[i] += h
        dn[i] -= h
        f_up = training_loss(EMNetModel.from_unconstrained(up, dim), batch, backend, first_phis)
        f_dn = training_loss(EMNetModel.from_unconstrained(dn, dim), batch, backend, first_phis)
        g[i] = (f_up - f_dn) / (2.0 * h)
    return g


def train(config: TrainingConfig, sampler: Callable, dim: int, backend=None,
          progress: Callable | None = None) -> TrainResult:
    """Stochastic gradient descent over batches drawn by ``sampler(rng, batch_index)``."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x454D]))
    model = EMNetModel.constant(config.n_layers, dim, config.init_rho, config.init_xi)
    u = model.unconstrained()
    losses, params = [], [model.params()]
    first = None
    for b in range(config.n_batches):
        batch = sampler(rng, b)
        phis = _prepare(batch)
        current = EMNetModel.from_unconstrained(u, dim)
        loss = training_loss(current, batch, backend, phis)
        if not math.isfinite(loss):
            raise TrainingFailure(f"non-finite loss at batch {b}", losses)
        first = loss if first is None else first
        losses.append(loss)
        if loss > config.divergence_factor * first:
            raise TrainingFailure(f"loss diverged at batch {b}: {loss:.4g}", losses)
        step = config.step_size * config.decay ** (b // config.decay_every)
        if step > 0:
            g = fd_gradient(u, dim, batch, config.fd_step, backend, phis)
            u = u - step * g
        params.append(_squash(u.reshape(-1, 2)))
        if progress is not None:
            progress(b, loss)
    meta = {f"train.{k}": v for k, v in config.describe().items()}
    return TrainResult(EMNetModel.from_unconstrained(u, dim, meta), losses, params)
