"""Monte-Carlo engine and experiment runners.

Random numbers come from Philox streams keyed by ``(seed, block, purpose)``.
Trials are drawn in fixed-size blocks, so raising the trial count appends
blocks without disturbing the trials already drawn.
"""
from __future__ import annotations

import csv
import io
import math
import os
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import channel, detector, emnet, estimation, scenario, selection, specfun
from .errors import DomainError

BLOCK = 1000
DEFAULT_TRIALS = 10_000
OUTPUT_ENV = "NETSENSE_OUTPUT_DIR"


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    k = int(k)
    if k < 0:
        raise DomainError("stream keys must be nonnegative")
    return k


def stream(seed, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; string keys are hashed."""
    ss = np.random.SeedSequence([_key(seed)] + [_key(k) for k in keys])
    return np.random.Generator(np.random.Philox(ss))


def blocked(seed, purpose, n_trials, draw):
    """Concatenate ``draw(rng, BLOCK, first_trial)`` over blocks, truncated to ``n_trials``."""
    if n_trials < 1:
        raise DomainError("trials must be >= 1")
    parts = []
    for b in range(math.ceil(n_trials / BLOCK)):
        parts.append(draw(stream(seed, purpose, b), BLOCK, b * BLOCK))
    out = np.concatenate(parts, axis=0)
    return out[:n_trials]


def binomial_ci(k, n, level=0.95):
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    if n < 1:
        raise DomainError("binomial CI needs n >= 1")
    res = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(res.low), float(res.high)


def quantile_ci(samples, q, level=0.95):
    """Distribution-free CI for the ``q`` quantile from order statistics."""
    x = np.sort(np.asarray(samples))
    n = x.size
    alpha = 1.0 - level
    lo = int(stats.binom.ppf(alpha / 2, n, q))
    hi = int(stats.binom.ppf(1 - alpha / 2, n, q))
    return float(x[max(lo - 1, 0)]), float(x[min(hi, n - 1)])


@dataclass
class ExperimentSpec:
    name: str
    scenario: scenario.ScenarioConfig | None = None
    trials: int = DEFAULT_TRIALS
    pfa: float = 0.01
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError("field 'trials': must be >= 1")
        if not 0.0 < self.pfa < 1.0:
            raise DomainError("field 'pfa': must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("field 'seed': must be an unsigned 64-bit integer")


@dataclass
class TrialSummary:
    point: dict
    rate: float
    ci_low: float
    ci_high: float
    theory: float = float("nan")

    @property
    def half_width(self):
        return 0.5 * (self.ci_high - self.ci_low)


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row length does not match the column count")
        self.rows.append(list(values))

    def column(self, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self):
        fh = io.StringIO()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return fh.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def default_output(name):
    base = os.environ.get(OUTPUT_ENV)
    return os.path.join(base, f"{name}.csv") if base else None


# -- detection experiments ---------------------------------------------------

def _tmt_models(cfg, geo, precoder):
    """Per-TMT ``(R, a_t)`` in noise-normalized units."""
    out = []
    for l in range(cfg.n_tmt):
        R = channel.clutter_covariance(cfg, geo, l, precoder.matrix) / cfg.noise_power
        a_t = channel.tmt_steering(cfg, [geo.aoa_target[l]])[:, 0]
        out.append((R, a_t))
    return out


def _h0_statistics(cfg, geo, precoder, L, n_trials, seed, purpose, model="gaussian"):
    """``(n_trials, L)`` per-TMT statistics with target absent and known covariance.

    Orders above the TMT count reuse TMTs cyclically with independent draws.
    """
    models = _tmt_models(cfg, geo, precoder)
    scale = 1.0 / math.sqrt(cfg.noise_power)

    def draw(rng, m, _first):
        cols = []
        for k in range(L):
            l = k % cfg.n_tmt
            R, a_t = models[l]
            batch = channel.simulate_ts(cfg, geo, l, precoder, False, m, rng, model=model)
            y = batch.snapshots * scale
            cols.append(detector.glrt_statistic(detector.TmtObservation(y, a_t, R)))
        return np.stack(cols, axis=1)

    return blocked(seed, purpose, n_trials, draw)


def run_threshold_accuracy(spec: ExperimentSpec, L_grid=range(1, 11), model="gaussian"):
    """Closed-form, exact and Monte-Carlo calibrated thresholds versus ``L``."""
    cfg = spec.scenario or scenario.paper_scenario_fig4()
    geo = scenario.solve_geometry(cfg)
    precoder = channel.default_precoder(cfg, geo)
    approx0 = specfun.threshold_approx(spec.pfa, 1)  # surface domain errors early
    del approx0
    L_grid = list(L_grid)
    stats_all = _h0_statistics(cfg, geo, precoder, max(L_grid), spec.trials, spec.seed,
                               "fig5a", model)
    table = Table(["L", "pfa", "trials", "threshold_approx", "threshold_exact",
                   "threshold_empirical", "empirical_ci_low", "empirical_ci_high",
                   "pfa_at_approx", "pfa_at_exact"])
    for L in L_grid:
        total = stats_all[:, :L].sum(axis=1)
        emp = float(np.quantile(total, 1.0 - spec.pfa))
        lo, hi = quantile_ci(total, 1.0 - spec.pfa)
        ga, ge = specfun.threshold_approx(spec.pfa, L), specfun.threshold_exact(spec.pfa, L)
        table.add(L, spec.pfa, spec.trials, ga, ge, emp, lo, hi,
                  float(np.mean(total > ga)), float(np.mean(total > ge)))
    return table


def run_pfa_calibration(cfg, L, pfa, n_trials, seed, threshold="exact", model="gaussian"):
    """Empirical false-alarm rate of the fused detector with known covariance."""
    geo = scenario.solve_geometry(cfg)
    precoder = channel.default_precoder(cfg, geo)
    total = _h0_statistics(cfg, geo, precoder, L, n_trials, seed, f"pfa-L{L}", model).sum(axis=1)
    gamma = detector.detection_threshold(pfa, L, threshold)
    k = int(np.sum(total > gamma))
    lo, hi = binomial_ci(k, n_trials)
    return TrialSummary({"L": L, "pfa": pfa, "threshold": threshold}, k / n_trials, lo, hi,
                        specfun.pfa_closed_form(gamma, L))


def run_pd_accuracy(spec: ExperimentSpec, snr_db=None, model="gaussian", mode="fixed",
                    threshold="approx", tolerance=0.02):
    """Empirical versus theoretical ``P_d`` with fixed target amplitudes.

    Every TMT sees the swept SNR, ``|c_l|^2 = SNR sigma^2``.
    """
    cfg = spec.scenario or scenario.paper_scenario_fig4()
    if mode != "fixed":
        raise DomainError("P_d accuracy needs the fixed-amplitude target mode")
    geo = scenario.solve_geometry(cfg)
    precoder = channel.default_precoder(cfg, geo)
    models = _tmt_models(cfg, geo, precoder)
    L = cfg.n_tmt
    snr_db = np.arange(-10.0, 12.5, 2.5) if snr_db is None else np.asarray(snr_db, float)
    gamma = detector.detection_threshold(spec.pfa, L, threshold)
    scale = 1.0 / math.sqrt(cfg.noise_power)
    whiten = [detector._whiten(a_t, R) for R, a_t in models]

    def draw(rng, m, _first):
        # matched-filter outputs of clutter plus noise, one column per TMT
        cols = []
        for l, (R, a_t) in enumerate(models):
            y = channel.simulate_ts(cfg, geo, l, precoder, False, m, rng,
                                    model=model).snapshots * scale
            w, q = whiten[l]
            cols.append(y @ w.conj())
        return np.stack(cols, axis=1)

    mf = blocked(spec.seed, "fig5b", spec.trials, draw)
    qs = np.array([q for _, q in whiten])
    table = Table(["snr_db", "trials", "zeta", "gamma", "pd_theory", "pd_empirical",
                   "ci_low", "ci_high", "gap", "flag"])
    for s in snr_db:
        c = math.sqrt(10.0 ** (s / 10.0))   # normalized units: sigma = 1
        stat = 2.0 * np.abs(mf + c * qs[None, :]) ** 2 / qs[None, :]
        k = int(np.sum(stat.sum(axis=1) > gamma))
        zeta = float(np.sum(2.0 * c ** 2 * qs))
        pd_t = specfun.pd_theoretical(zeta, gamma, L)
        lo, hi = binomial_ci(k, spec.trials)
        gap = k / spec.trials - pd_t
        table.add(float(s), spec.trials, zeta, gamma, pd_t, k / spec.trials, lo, hi, gap,
                  abs(gap) > tolerance)
    return table


def run_array_gain(spec: ExperimentSpec, n_rx_grid=(4, 8, 16, 32, 64)):
    """Per-TMT SNR and clutter-free beam fraction versus receive antenna count."""
    base = spec.scenario or scenario.paper_scenario_fig4()
    table = Table(["n_rx", "tmt", "snr", "cos2_perp", "mu2_exact", "mu2_highcnr"])
    for n in n_rx_grid:
        cfg = _replace(base, n_rx=int(n))
        geo = scenario.solve_geometry(cfg)
        F = channel.comm_precoder(cfg, geo)
        for l in range(cfg.n_tmt):
            R = channel.clutter_covariance(cfg, geo, l, F)
            a_t = channel.tmt_steering(cfg, [geo.aoa_target[l]])[:, 0]
            snr = scenario.snr_from_range(cfg, l, geo)
            sub = detector.clutter_subspace(R, cfg.noise_power)
            table.add(int(n), l, snr, detector.projection_cos2(sub, a_t),
                      detector.noncentral_exact(math.sqrt(snr * cfg.noise_power), a_t, R),
                      detector.noncentral_highcnr(sub, a_t, snr))
    return table


def _replace(cfg, **kw):
    from dataclasses import replace
    return replace(cfg, **kw)


@dataclass
class MacroResult:
    table: Table
    pd: dict       # Q -> target-averaged P_d versus L
    mu2: dict      # Q -> target-averaged ordered contributions
    stop: dict     # Q -> Algorithm 1 stop on the averaged contributions
    best: dict     # Q -> argmax of the averaged P_d
    per_target: list


def run_macro_diversity(spec: ExperimentSpec, q_values=(6, 9, 12), gain_const=None):
    """``P_d`` versus the number of fused TMTs, averaged over random targets in the circle.

    ``spec.trials`` is the number of target draws.  For each draw the TMTs are
    ranked by expected noncentrality; ``P_d`` uses the fused order ``L`` and
    the approximate CFAR threshold.
    """
    gain_const = scenario.MACRO_GAIN_CONST if gain_const is None else gain_const
    targets = [scenario.random_target_in_circle(stream(spec.seed, "target", i))
               for i in range(spec.trials)]
    res = MacroResult(Table(["Q", "L", "targets", "pd", "miss", "margin", "stop", "best"]),
                      {}, {}, {}, {}, [])
    for q in q_values:
        pds, misses, mus = [], [], []
        for i, t in enumerate(targets):
            cfg = scenario.macro_scenario(q, target=t, gain_const=gain_const)
            mu = np.sort(selection.contributions(cfg))[::-1]
            pds.append(selection.pd_versus_order(mu, spec.pfa))
            misses.append(selection.miss_versus_order(mu, spec.pfa))
            mus.append(mu)
            res.per_target.append(dict(Q=q, target=i, mu2=mu,
                                       stop=selection.select_from_scores(mu, spec.pfa).order,
                                       best=selection.best_order(mu, spec.pfa)))
        pd = np.mean(pds, axis=0)
        miss = np.mean(misses, axis=0)
        mu = np.mean(mus, axis=0)
        margin = np.append(selection.margins_versus_order(mu, spec.pfa), np.nan)
        stop = selection.select_from_scores(mu, spec.pfa).order
        best = int(np.argmin(miss)) + 1
        res.pd[q], res.mu2[q], res.stop[q], res.best[q] = pd, mu, stop, best
        for L in range(1, q + 1):
            res.table.add(q, L, spec.trials, pd[L - 1], miss[L - 1], margin[L - 1], stop, best)
    return res


# -- covariance estimation experiments -----------------------------------------

@dataclass
class EstimationSetup:
    cfg: scenario.ScenarioConfig
    geo: scenario.GeometrySolution
    F: np.ndarray
    precoder: channel.Precoder
    R_true: list
    n_snapshots: int = 50
    iota: float = 0.5
    model: str = "waveform"

    @classmethod
    def default(cls, n_snapshots=50, iota=0.5, model="waveform", cfg=None):
        cfg = cfg or scenario.paper_scenario_fig4()
        geo = scenario.solve_geometry(cfg)
        precoder = channel.default_precoder(cfg, geo)
        R = [channel.clutter_covariance(cfg, geo, l, precoder.base) / cfg.noise_power
             for l in range(cfg.n_tmt)]
        return cls(cfg, geo, precoder.base, precoder, R, n_snapshots, iota, model)

    def avoid(self):
        return [c.position for c in self.cfg.clutter] + [t.position for t in self.cfg.tmts]

    def draw_target(self, rng):
        t = scenario.random_target_in_circle(rng, avoid=self.avoid())
        return scenario.solve_geometry(scenario.with_target(self.cfg, t))

    def ee_snapshots(self, l, rng, n=None):
        n = n or self.n_snapshots
        y = channel.simulate_ee(self.cfg, self.geo, l, self.F, n, rng, model=self.model)
        return y.snapshots / math.sqrt(self.cfg.noise_power)

    def sample(self, rng, iota=None, n=None):
        """One training batch: a fresh target and partial EE data at every TMT."""
        geo_t = self.draw_target(rng)
        out = []
        for l in range(self.cfg.n_tmt):
            Y = self.ee_snapshots(l, rng, n)
            pat = estimation.make_pattern(Y.shape[0], self.cfg.n_rx, iota or self.iota, rng)
            data = estimation.PartialSnapshots.from_full(Y, pat)
            a_t = channel.tmt_steering(self.cfg, [geo_t.aoa_target[l]])[:, 0]
            out.append(emnet.TrainingSample(data, self.R_true[l], a_t))
        return out

    def sampler(self, seed):
        def draw(_rng, b):
            return self.sample(stream(seed, "train", b))
        return draw


def train_emnet(config: emnet.TrainingConfig, setup: EstimationSetup, progress=None):
    return emnet.train(config, setup.sampler(config.seed), setup.cfg.n_rx, progress=progress)


METHODS = ("optimal", "scm", "em", "emnet")


def _estimates(sample_full, data, R_true, model, n_layers):
    init = estimation.init_diag(data)
    em = emnet.forward(emnet.EMNetModel.plain_em(n_layers, data.dim), data, init)
    net = emnet.forward(model, data, init)
    return {"optimal": R_true, "scm": estimation.scm(sample_full), "em": em[-1],
            "emnet": net[-1]}, em, net


def evaluate_methods(setup: EstimationSetup, model: emnet.EMNetModel, snr_db, n_trials,
                     seed, pfa=0.01, iota=None, n_snapshots=None, em_layers=None):
    """Plug-in detection and SCNR loss for every estimator on common random numbers.

    Each trial draws a target in the circle, EE data at every TMT and one TS
    snapshot of clutter plus noise; the target echo ``c a_t`` with
    ``|c|^2 = SNR`` and random phase is added for each swept SNR.  The
    ``pfa`` column is the empirical false-alarm rate of the same plug-in
    detector on the target-free snapshots; a mismatched estimate is not CFAR.
    """
    iota = iota or setup.iota
    n = n_snapshots or setup.n_snapshots
    em_layers = em_layers or model.n_layers
    cfg = setup.cfg
    L = cfg.n_tmt
    gamma = specfun.threshold_approx(pfa, L)
    snr_db = np.atleast_1d(np.asarray(snr_db, dtype=float))
    amp = np.sqrt(10.0 ** (snr_db / 10.0))
    hits = {m: np.zeros(snr_db.size, dtype=int) for m in METHODS}
    alarms = {m: 0 for m in METHODS}
    sl = {m: [] for m in METHODS}
    for trial in range(n_trials):
        rng = stream(seed, "eval", trial)
        geo_t = setup.draw_target(rng)
        total = {m: np.zeros(snr_db.size) for m in METHODS}
        null = {m: 0.0 for m in METHODS}
        for l in range(L):
            Y = setup.ee_snapshots(l, rng, n)
            pat = estimation.make_pattern(n, cfg.n_rx, iota, rng)
            data = estimation.PartialSnapshots.from_full(Y, pat)
            a_t = channel.tmt_steering(cfg, [geo_t.aoa_target[l]])[:, 0]
            est, _, _ = _estimates(Y, data, setup.R_true[l], model, em_layers)
            ts = channel.simulate_ts(cfg, setup.geo, l, setup.precoder, False, 1, rng,
                                     model=setup.model).snapshots[0]
            ts = ts / math.sqrt(cfg.noise_power)
            phase = np.exp(2j * np.pi * rng.random())
            for m, R_hat in est.items():
                w, q = detector._whiten(a_t, R_hat)
                base = np.vdot(w, ts)
                sig = phase * amp * np.vdot(w, a_t)
                total[m] += 2.0 * np.abs(base + sig) ** 2 / q
                null[m] += 2.0 * abs(base) ** 2 / q
                sl[m].append(emnet.scnr_loss(setup.R_true[l], R_hat, a_t))
        for m in METHODS:
            hits[m] += total[m] > gamma
            alarms[m] += null[m] > gamma
    table = Table(["snr_db", "trials", "iota", "n_snapshots", "method", "pd", "ci_low",
                   "ci_high", "median_scnr_loss", "pfa"])
    for i, s in enumerate(snr_db):
        for m in METHODS:
            lo, hi = binomial_ci(hits[m][i], n_trials)
            table.add(float(s), n_trials, iota, n, m, hits[m][i] / n_trials, lo, hi,
                      float(np.median(sl[m])), alarms[m] / n_trials)
    return table


def layer_losses(setup: EstimationSetup, model: emnet.EMNetModel, n_samples, seed, iota=None):
    """Training-loss value of EM and EM-Net after each layer on held-out batches."""
    T = model.n_layers
    em_sl = np.zeros(T)
    net_sl = np.zeros(T)
    count = 0
    for i in range(n_samples):
        for s in setup.sample(stream(seed, "heldout", i), iota=iota):
            init = estimation.init_diag(s.data)
            em = emnet.forward(emnet.EMNetModel.plain_em(T, s.data.dim), s.data, init)
            net = emnet.forward(model, s.data, init)
            em_sl += [emnet.scnr_loss(s.R_true, R, s.a_t) for R in em]
            net_sl += [emnet.scnr_loss(s.R_true, R, s.a_t) for R in net]
            count += 1
    table = Table(["layer", "samples", "em_loss", "emnet_loss", "em_mean_sl", "emnet_mean_sl"])
    for t in range(T):
        # loss of a network truncated after layer t: reciprocal of the running mean
        em_run = em_sl[:t + 1].sum() / ((t + 1) * count)
        net_run = net_sl[:t + 1].sum() / ((t + 1) * count)
        table.add(t + 1, count, 1.0 / em_run, 1.0 / net_run, em_sl[t] / count, net_sl[t] / count)
    return table


def run_estimation_suite(spec: ExperimentSpec, model=None, training=None,
                         snr_db=(-5.0, 0.0, 5.0, 10.0, 15.0), n_grid=(20, 30, 50, 100, 200),
                         iota_grid=(0.2, 0.5), progress=None):
    """Train (unless ``model`` is given) and sweep sample size and sparsity.

    Returns a dict of tables: ``fig9`` (P_d versus N at 10 dB) and ``fig10``
    (P_d versus SNR for each sparsity).
    """
    setup = EstimationSetup.default()
    if model is None:
        training = training or emnet.TrainingConfig(seed=spec.seed)
        model = train_emnet(training, setup, progress).model
    fig9 = None
    for n in n_grid:
        t = evaluate_methods(setup, model, [10.0], spec.trials, spec.seed, spec.pfa,
                             n_snapshots=n)
        fig9 = t if fig9 is None else Table(fig9.columns, fig9.rows + t.rows)
    fig10 = None
    for iota in iota_grid:
        t = evaluate_methods(setup, model, snr_db, spec.trials, spec.seed, spec.pfa, iota=iota)
        fig10 = t if fig10 is None else Table(fig10.columns, fig10.rows + t.rows)
    return {"model": model, "fig9": fig9, "fig10": fig10}
