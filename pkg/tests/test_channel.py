import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsense import channel, scenario
from netsense.errors import DegenerateGeometryError, DomainError, UnsensableTargetError


@given(st.floats(0, np.pi), st.integers(1, 64))
def test_steering_unit_norm(theta, n):
    a = channel.steering(theta, n)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert channel.steering_matrix([theta], n)[:, 0] == pytest.approx(a)


def test_steering_explicit():
    a = channel.steering(np.pi / 3, 4)
    expect = np.array([np.exp(1j * np.pi * m * 0.5) for m in range(4)]) / 2.0
    assert a == pytest.approx(expect)
    with pytest.raises(DomainError):
        channel.steering(0.0, 0)


def test_complex_normal_moments(rng):
    z = channel.complex_normal(rng, 200_000, 3.0)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(3.0, rel=0.02)
    assert abs(np.mean(z * z)) < 0.05


def test_null_space_beam(fig4):
    cfg, geo, pre = fig4
    f = pre.isac_extension
    A = channel.bs_steering(cfg, geo.aod_clutter)
    a = channel.bs_steering(cfg, [geo.aod_target])[:, 0]
    assert np.abs(A.conj().T @ f).max() < 1e-12
    assert np.vdot(a, f) == pytest.approx(1.0)


def test_null_space_rank_deficient():
    cfg = scenario.paper_scenario_fig4(n_tx=2)
    with pytest.raises(DegenerateGeometryError):
        channel.null_space_beam(cfg)


def test_null_space_unsensable():
    # one clutter patch along the target departure direction seen from the BS
    cfg = scenario.paper_scenario_fig4()
    geo = scenario.solve_geometry(cfg)
    geo2 = scenario.GeometrySolution(geo.aod_target, np.array([geo.aod_target + 1e-15]),
                                     geo.aoa_target, geo.aoa_clutter[:, :1], geo.link_length)
    one = scenario.replace(cfg, clutter=cfg.clutter[:1], ue_indices=(0,))
    with pytest.raises((UnsensableTargetError, DegenerateGeometryError)):
        channel.null_space_beam(one, geo2)


def test_isac_precoder_shapes(fig4):
    cfg, geo, pre = fig4
    assert pre.matrix.shape == (cfg.n_tx, cfg.n_ue)
    with pytest.raises(DomainError):
        channel.isac_precoder(pre.base, pre.isac_extension, np.ones(3))


def test_comm_precoder_power(fig4):
    cfg, geo, pre = fig4
    assert np.sum(np.abs(pre.base) ** 2) == pytest.approx(cfg.tx_power)


def test_power_scale_names(fig4):
    cfg = fig4[0]
    assert channel.power_constant(cfg) == cfg.n_rx * cfg.n_tx
    assert channel.power_constant(cfg, "literal") == pytest.approx(np.sqrt(cfg.n_rx * cfg.n_tx))
    with pytest.raises(DomainError):
        channel.power_constant(cfg, "other")


def test_covariance_is_hermitian_pd(fig4):
    cfg, geo, pre = fig4
    for l in range(cfg.n_tmt):
        R = channel.clutter_covariance(cfg, geo, l, pre.matrix)
        assert np.allclose(R, R.conj().T)
        assert np.linalg.eigvalsh(R).min() >= cfg.noise_power * (1 - 1e-9)


@pytest.mark.parametrize("model", ["waveform", "gaussian"])
def test_snapshot_covariance_matches(fig4, model):
    cfg, geo, pre = fig4
    rng = np.random.default_rng(7)
    n = 40_000
    Y = channel.simulate_ee(cfg, geo, 1, pre, n, rng, model=model).snapshots
    S = Y.T @ Y.conj() / n
    R = channel.clutter_covariance(cfg, geo, 1, pre.matrix)
    assert np.linalg.norm(S - R) / np.linalg.norm(R) < 0.05


def test_channel_matrix_second_moment(fig4):
    cfg, geo, pre = fig4
    rng = np.random.default_rng(8)
    H = channel.clutter_channel(cfg, geo, 0, rng, n_draws=20_000)
    assert H.shape == (20_000, cfg.n_rx, cfg.n_tx)
    s = channel.complex_normal(rng, (20_000, cfg.n_ue))
    y = np.einsum("nrt,tk,nk->nr", H, pre.matrix, s)
    S = y.T @ y.conj() / y.shape[0]
    R = channel.clutter_covariance(cfg, geo, 0, pre.matrix) - cfg.noise_power * np.eye(cfg.n_rx)
    assert np.linalg.norm(S - R) / np.linalg.norm(R) < 0.05
    assert channel.clutter_channel(cfg, geo, 0, rng).shape == (cfg.n_rx, cfg.n_tx)


def test_target_amplitude_power(fig4):
    cfg, geo, pre = fig4
    rng = np.random.default_rng(9)
    b = channel.simulate_ts(cfg, geo, 0, pre, True, 50_000, rng)
    snr = scenario.snr_from_range(cfg, 0, geo)
    assert np.mean(np.abs(b.target_amplitude) ** 2) == pytest.approx(snr * cfg.noise_power,
                                                                     rel=0.03)
    b0 = channel.simulate_ts(cfg, geo, 0, pre, False, 10, rng)
    assert np.all(b0.target_amplitude == 0)


def test_ts_needs_isac(fig4):
    cfg, geo, pre = fig4
    with pytest.raises(DomainError):
        channel.simulate_ts(cfg, geo, 0, channel.Precoder(pre.base, pre.base), True, 3,
                            np.random.default_rng(0))


def test_fixed_amplitudes_and_csv(fig4):
    cfg, geo, pre = fig4
    b = channel.simulate_ts(cfg, geo, 0, pre, True, 2, np.random.default_rng(0),
                            amplitudes=1e-6)
    assert np.allclose(b.target_amplitude, 1e-6)
    lines = b.to_csv().splitlines()
    assert lines[0] == "subframe,antenna,re,im"
    assert len(lines) == 1 + 2 * cfg.n_rx


def test_unknown_models(fig4):
    cfg, geo, pre = fig4
    rng = np.random.default_rng(0)
    with pytest.raises(DomainError):
        channel.simulate_ee(cfg, geo, 0, pre, 2, rng, model="other")
    with pytest.raises(DomainError):
        channel.simulate_ee(cfg, geo, 0, pre, 0, rng)
    with pytest.raises(DomainError):
        channel.simulate_ts(cfg, geo, 0, pre, True, 2, rng, mode="other")


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30)
def test_isac_leaves_clutter_response_unchanged(seed):
    cfg = scenario.paper_scenario_fig4()
    geo = scenario.solve_geometry(cfg)
    pre = channel.default_precoder(cfg, geo)
    s = channel.complex_normal(np.random.default_rng(seed), cfg.n_ue)
    A = channel.bs_steering(cfg, geo.aod_clutter)
    assert np.abs(A.conj().T @ pre.matrix @ s) == pytest.approx(np.abs(A.conj().T @ pre.base @ s),
                                                               rel=1e-10, abs=1e-14)


def test_ee_and_ts_clutter_share_covariance(fig4):
    cfg, geo, pre = fig4
    rng = np.random.default_rng(12)
    n = 40_000
    ee = channel.simulate_ee(cfg, geo, 2, pre.base, n, rng).snapshots
    ts = channel.simulate_ts(cfg, geo, 2, pre, False, n, rng).snapshots
    S_ee, S_ts = ee.T @ ee.conj() / n, ts.T @ ts.conj() / n
    assert np.linalg.norm(S_ee - S_ts) / np.linalg.norm(S_ee) < 0.05
