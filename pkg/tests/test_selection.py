import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsense import scenario, selection, specfun
from netsense.errors import DomainError

# Frozen from an independent evaluation of 2 SNR sigma^2 a^H R^-1 a with explicit inverses
FIG4_MU2 = [0.6255374773394754, 0.3364903011513133, 0.09522045211109735]

scores = st.lists(st.floats(0.0, 60.0), min_size=1, max_size=12)
pfas = st.sampled_from([1e-4, 1e-3, 1e-2, 0.05])


def explicit_mu2(cfg, l):
    from netsense import channel
    geo = scenario.solve_geometry(cfg)
    pre = channel.default_precoder(cfg, geo)
    a = channel.tmt_steering(cfg, [geo.aoa_target[l]])[:, 0]
    R = channel.clutter_covariance(cfg, geo, l, pre.matrix)
    snr = scenario.snr_from_range(cfg, l, geo)
    return 2 * snr * cfg.noise_power * np.real(a.conj() @ np.linalg.inv(R) @ a)


def test_fig4_contributions(fig4):
    cfg, geo, pre = fig4
    mu2 = selection.contributions(cfg, "exact", geo, pre)
    assert mu2 == pytest.approx(FIG4_MU2, rel=1e-9)
    assert mu2 == pytest.approx([explicit_mu2(cfg, l) for l in range(3)], rel=1e-9)
    for mode in ("highcnr", "sinc"):
        assert selection.contributions(cfg, mode, geo, pre) == pytest.approx(mu2, rel=1e-4)
    with pytest.raises(DomainError):
        selection.contribution(0, cfg, "bogus")


def test_fig4_selection_trace(fig4):
    cfg, geo, pre = fig4
    state = selection.select_tmts(cfg, 0.01, geo=geo, precoder=pre)
    assert state.selected == [0]
    rows = state.trace_csv().splitlines()
    assert rows[0] == "step,index,mu2,zeta,gamma,margin,accepted"
    assert rows[1].endswith(",nan,1")
    assert rows[2].startswith("1,1,") and rows[2].endswith(",0")
    assert "np." not in state.trace_csv()


def test_condition_needs_selection():
    state = selection.SelectionState(pfa=0.01)
    with pytest.raises(DomainError):
        selection.check_positive_contribution(state, 5.0)
    with pytest.raises(DomainError):
        selection.select_from_scores([], 0.01)
    with pytest.raises(DomainError):
        selection.select_from_scores([1.0], 1.5)


@given(scores, pfas)
@settings(max_examples=200)
def test_selection_is_ranked_prefix(mu2, pfa):
    state = selection.select_from_scores(mu2, pfa)
    ranked = sorted(range(len(mu2)), key=lambda i: (-mu2[i], i))
    assert state.selected == ranked[:state.order]
    assert state.order >= 1
    assert state.zeta == pytest.approx(sum(mu2[i] for i in state.selected))
    assert state.gamma == specfun.threshold_approx(pfa, state.order)
    assert state.remaining == set(ranked[state.order:])
    # every accepted step past the first passed the test, and the stop failed it
    for row in state.trace[1:]:
        passed = row["margin"] >= 0
        assert row["accepted"] == (passed and row["accepted"])
    if state.order < len(mu2):
        last = state.trace[-1]
        assert not last["accepted"]


@given(scores, pfas)
@settings(max_examples=100)
def test_miss_and_pd_agree(mu2, pfa):
    s = np.sort(mu2)[::-1]
    pd = selection.pd_versus_order(s, pfa)
    miss = selection.miss_versus_order(s, pfa)
    assert pd + miss == pytest.approx(np.ones(len(s)), abs=1e-12)
    assert 1 <= selection.best_order(s, pfa) <= len(s)
    assert selection.margins_versus_order(s, pfa).shape == (len(s) - 1,)


@given(st.floats(0.0, 40.0), st.integers(1, 10), pfas)
def test_zero_contribution_never_helps(zeta, L, pfa):
    # with exact CFAR thresholds, fusing a TMT that adds nothing only adds noise
    g0, g1 = specfun.threshold_exact(pfa, L), specfun.threshold_exact(pfa, L + 1)
    assert specfun.pd_theoretical(zeta, g1, L + 1) <= \
        specfun.pd_theoretical(zeta, g0, L) * (1 + 1e-9) + 1e-15


def test_positive_contribution_can_overshoot():
    # Passing the test does not guarantee a lower miss probability: at this
    # target the 8th TMT passes yet the fused miss probability rises.
    cfg = scenario.macro_scenario(9, scenario.Position(10.638162246808694, 1.15274573687206))
    mu2 = np.sort(selection.contributions(cfg))[::-1]
    state = selection.select_from_scores(mu2, 0.01)
    assert state.order == 8
    assert mu2[7] >= selection.condition_increment(0.01, 7)
    miss = selection.miss_versus_order(mu2, 0.01)
    assert miss[7] > miss[6] * 1.05
    assert selection.best_order(mu2, 0.01) == 7


def test_accepted_tmts_increase_pd():
    # Stated invariant: every TMT accepted by the positive-contribution test
    # strictly raises the theoretical P_d.  Checked on the macro layout over
    # random targets; known to fail at a handful of them (see the overshoot
    # test above), so this stays red.
    from netsense import harness
    failures = []
    for q in (6, 9, 12):
        for i in range(200):
            t = scenario.random_target_in_circle(harness.stream(0, "target", i))
            mu2 = np.sort(selection.contributions(scenario.macro_scenario(q, t)))[::-1]
            stop = selection.select_from_scores(mu2, 0.01).order
            miss = selection.miss_versus_order(mu2, 0.01)
            failures += [(q, i, L + 1) for L in range(stop - 1) if not miss[L + 1] < miss[L]]
    assert failures == []


def test_stop_is_conservative_per_scenario():
    # Stated property: L_stop <= argmax_L P_d on every tested scenario.  The
    # targets that break the monotone phase above also break this; stays red.
    from netsense import harness
    res = harness.run_macro_diversity(harness.ExperimentSpec("fig7", None, 200, 0.01, seed=0))
    over = [(r["Q"], r["target"], r["stop"], r["best"]) for r in res.per_target
            if r["stop"] > r["best"]]
    assert all(res.stop[q] <= res.best[q] for q in res.stop)
    assert over == []
