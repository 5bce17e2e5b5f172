"""TMT contribution scores and greedy selection by the positive-contribution test."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import channel, detector, specfun
from .errors import DomainError
from .scenario import ScenarioConfig, snr_from_range, solve_geometry

MODES = ("exact", "highcnr", "sinc")


@dataclass
class SelectionState:
    pfa: float
    selected: list = field(default_factory=list)
    remaining: set = field(default_factory=set)
    zeta: float = 0.0
    gamma: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def order(self) -> int:
        return len(self.selected)

    def add(self, idx, mu2):
        self.remaining.discard(idx)
        self.selected.append(idx)
        self.zeta += mu2
        self.gamma = specfun.threshold_approx(self.pfa, len(self.selected))

    def trace_csv(self, fh=None):
        own = fh is None
        fh = fh or io.StringIO()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "index", "mu2", "zeta", "gamma", "margin", "accepted"])
        for row in self.trace:
            w.writerow([row["step"], row["index"]]
                       + [repr(float(row[k])) for k in ("mu2", "zeta", "gamma", "margin")]
                       + [int(row["accepted"])])
        return fh.getvalue() if own else None


def contribution(l, cfg: ScenarioConfig, mode="exact", geo=None, precoder=None):
    """Expected noncentrality ``mu_l^2`` of TMT ``l`` with ``E|c|^2 = SNR_l sigma^2``."""
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    geo = geo or solve_geometry(cfg)
    snr = snr_from_range(cfg, l, geo)
    if snr == 0.0:
        return 0.0
    a_t = channel.tmt_steering(cfg, [geo.aoa_target[l]])[:, 0]
    F = precoder.matrix if precoder is not None else channel.comm_precoder(cfg, geo)
    R = channel.clutter_covariance(cfg, geo, l, F)
    if mode == "exact":
        return detector.noncentral_exact(math.sqrt(snr * cfg.noise_power), a_t, R)
    sub = detector.clutter_subspace(R, cfg.noise_power)
    if mode == "highcnr":
        return detector.noncentral_highcnr(sub, a_t, snr)
    A = channel.tmt_steering(cfg, geo.aoa_clutter[l])
    return detector.sinc_predictor(sub, a_t, A, geo.aoa_target[l], geo.aoa_clutter[l],
                                   cfg.n_rx, snr, cfg.spacing_ratio)


def contributions(cfg: ScenarioConfig, mode="exact", geo=None, precoder=None):
    geo = geo or solve_geometry(cfg)
    return np.array([contribution(l, cfg, mode, geo, precoder) for l in range(cfg.n_tmt)])


def condition_increment(pfa, L):
    """Threshold growth when an (L+1)-th TMT joins."""
    return specfun.threshold_increment(pfa, L)


def condition_margin(mu2, pfa, L):
    return float(mu2 - condition_increment(pfa, L))


def check_positive_contribution(state: SelectionState, mu2) -> bool:
    if state.order < 1:
        raise DomainError("the positive-contribution test needs at least one selected TMT")
    return bool(state.zeta > state.gamma
                and mu2 >= condition_increment(state.pfa, state.order))


def select_from_scores(mu2, pfa) -> SelectionState:
    """Greedy selection over precomputed scores, highest first."""
    mu2 = np.asarray(mu2, dtype=float)
    if mu2.size < 1:
        raise DomainError("at least one candidate TMT is required")
    state = SelectionState(pfa=pfa, remaining=set(range(mu2.size)))
    specfun.threshold_approx(pfa, 1)   # validate pfa before touching state
    ranked = sorted(range(mu2.size), key=lambda i: (-mu2[i], i))
    for step, idx in enumerate(ranked):
        if step == 0:
            accept = True
            margin = math.nan
        else:
            margin = condition_margin(mu2[idx], pfa, state.order)
            accept = check_positive_contribution(state, mu2[idx])
        if accept:
            state.add(idx, float(mu2[idx]))
        state.trace.append(dict(step=step, index=idx, mu2=float(mu2[idx]), zeta=state.zeta,
                                gamma=state.gamma, margin=margin, accepted=accept))
        if not accept:
            break
    return state


def select_tmts(cfg: ScenarioConfig, pfa, mode="exact", geo=None, precoder=None):
    return select_from_scores(contributions(cfg, mode, geo, precoder), pfa)


def pd_versus_order(mu2_sorted, pfa):
    """Theoretical ``P_d`` when fusing the first ``L`` scores, for every ``L``."""
    zeta = np.cumsum(np.asarray(mu2_sorted, dtype=float))
    out = np.empty(zeta.size)
    for k, z in enumerate(zeta):
        L = k + 1
        out[k] = specfun.pd_theoretical(z, specfun.threshold_approx(pfa, L), L)
    return out


def miss_versus_order(mu2_sorted, pfa):
    """``1 - P_d`` for every ``L``, computed without cancellation near ``P_d = 1``."""
    zeta = np.cumsum(np.asarray(mu2_sorted, dtype=float))
    out = np.empty(zeta.size)
    for k, z in enumerate(zeta):
        L = k + 1
        gamma = specfun.threshold_approx(pfa, L)
        out[k] = specfun.marcum_qc(L, math.sqrt(z), math.sqrt(gamma))
    return out


def best_order(mu2_sorted, pfa):
    """Fusion size maximizing ``P_d``, ranked by the accurate miss probability."""
    return int(np.argmin(miss_versus_order(mu2_sorted, pfa))) + 1


def margins_versus_order(mu2_sorted, pfa):
    """``mu^2_{L+1} - (gamma_{L+1} - gamma_L)`` for ``L = 1 .. len-1``."""
    mu2_sorted = np.asarray(mu2_sorted, dtype=float)
    return np.array([condition_margin(mu2_sorted[L], pfa, L)
                     for L in range(1, mu2_sorted.size)])
