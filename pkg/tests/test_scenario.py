import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsense import scenario
from netsense.errors import DegenerateGeometryError, DomainError
from netsense.scenario import ClutterPatch, Position, ScenarioConfig, TmtConfig


def small_cfg(**kw):
    base = dict(bs=Position(0, 0), target=Position(15, 8),
                clutter=[ClutterPatch(Position(25, 8), (1e-9,)),
                         ClutterPatch(Position(15, -8), (1e-9,))],
                tmts=[TmtConfig(Position(20, 10))], ue_indices=(0,))
    base.update(kw)
    return ScenarioConfig(**base)


def test_dbm_round_trip():
    assert scenario.dbm_to_watts(-90.0) == pytest.approx(1e-12)
    assert scenario.dbm_to_watts(30.0) == pytest.approx(1.0)
    x = np.array([-120.0, -64.77, 0.0, 46.0])
    assert np.allclose(scenario.watts_to_dbm(scenario.dbm_to_watts(x)), x)


def test_fig4_geometry_by_hand():
    cfg = scenario.paper_scenario_fig4()
    geo = scenario.solve_geometry(cfg)
    # BS axis along +y, so the departure cosine is y / r
    assert geo.aod_target == pytest.approx(math.acos(8.0 / 17.0))
    assert geo.aod_clutter == pytest.approx(
        [math.acos(8 / math.hypot(25, 8)), math.acos(-8 / 17.0), math.acos(-8 / math.hypot(25, 8))])
    # TMT axes along +x
    assert geo.aoa_target[0] == pytest.approx(math.acos(-5 / math.hypot(5, 2)))
    assert geo.bs_target_range == pytest.approx(17.0)
    expect = [17.0 + math.hypot(5, 2),
              17.0 + math.hypot(15 - (20 - 5 * math.sqrt(3)), 13),
              17.0 + math.hypot(15 - (20 + 5 * math.sqrt(3)), 13)]
    assert geo.link_length == pytest.approx(expect)
    snr = scenario.snr_all(cfg, geo)
    assert snr == pytest.approx([10 * 16 / r ** 2 for r in expect])


def test_fig4_clutter_budget():
    cfg = scenario.paper_scenario_fig4(cnr_db=30.0)
    P = cfg.clutter_powers()
    assert P.shape == (3, 3)
    assert P.sum(axis=1) == pytest.approx(np.full(3, 1e3 * cfg.noise_power))


def test_random_split_sums_to_budget():
    rng = np.random.default_rng(1)
    P = scenario.clutter_power_matrix(4, 3, 1e-12, 20.0, "random", rng)
    assert P.sum(axis=1) == pytest.approx(np.full(4, 1e-10))
    with pytest.raises(DomainError):
        scenario.clutter_power_matrix(4, 3, 1e-12, 20.0, "random")
    with pytest.raises(DomainError):
        scenario.clutter_power_matrix(4, 3, 1e-12, 20.0, "bogus")


@pytest.mark.parametrize("field,kw", [
    ("n_rx", dict(n_rx=0)), ("noise_power", dict(noise_power=0.0)),
    ("pathloss_exp", dict(pathloss_exp=-1.0)), ("tmts", dict(tmts=[])),
    ("ue_indices", dict(ue_indices=(5,))), ("ue_indices", dict(ue_indices=(0, 0))),
])
def test_validation_names_field(field, kw):
    with pytest.raises(DomainError, match=field):
        small_cfg(**kw)


def test_power_entries_per_tmt():
    with pytest.raises(DomainError, match=r"clutter\[0\]\.power"):
        small_cfg(clutter=[ClutterPatch(Position(25, 8), (1e-9, 1e-9))], ue_indices=())


def test_target_sharing_departure_angle():
    with pytest.raises(DomainError, match="target"):
        small_cfg(clutter=[ClutterPatch(Position(30, 16), (1e-9,))], ue_indices=())


def test_coincident_points():
    with pytest.raises(DegenerateGeometryError):
        small_cfg(target=Position(0, 0))
    cfg = small_cfg(tmts=[TmtConfig(Position(15, 8))])
    with pytest.raises(DegenerateGeometryError):
        scenario.solve_geometry(cfg)


def test_nonfinite_position():
    with pytest.raises(DomainError):
        Position(float("nan"), 0.0)


def test_circle_placement():
    pts = scenario.tmt_circle_placement(4, Position(20, 0), 10.0)
    got = np.array([p.as_array() for p in pts])
    assert got == pytest.approx(np.array([[20, 10], [30, 0], [20, -10], [10, 0]]), abs=1e-12)
    with pytest.raises(DomainError):
        scenario.tmt_circle_placement(0, Position(0, 0), 1.0)


@given(st.integers(1, 12))
def test_circle_points_on_circle(q):
    c = scenario.CIRCLE_CENTER
    for p in scenario.tmt_circle_placement(q, c, scenario.CIRCLE_RADIUS):
        assert p.distance(c) == pytest.approx(scenario.CIRCLE_RADIUS)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50)
def test_random_target_inside_and_clear(seed):
    rng = np.random.default_rng(seed)
    avoid = [Position(25, 8), Position(15, -8)]
    p = scenario.random_target_in_circle(rng, avoid=avoid, min_gap=1.0)
    assert p.distance(scenario.CIRCLE_CENTER) <= scenario.CIRCLE_RADIUS
    assert all(p.distance(a) >= 1.0 for a in avoid)


@given(st.floats(0.1, 60.0), st.floats(1.0, 4.0))
def test_snr_decreases_with_range(extra, beta):
    cfg = scenario.paper_scenario_fig4(pathloss_exp=beta)
    far = scenario.with_target(cfg, Position(15.0, 8.0 + extra))
    assert scenario.snr_from_range(far, 0) < scenario.snr_from_range(cfg, 0)


def test_macro_scenario_defaults():
    cfg = scenario.macro_scenario(6)
    assert cfg.n_tmt == 6
    assert cfg.gain_const == scenario.MACRO_GAIN_CONST
    assert cfg.tx_power == 0.5


def test_mirror_symmetry():
    cfg = scenario.paper_scenario_fig4()
    flip = lambda p: Position(p.x, -p.y)
    mirrored = ScenarioConfig(
        bs=cfg.bs, target=flip(cfg.target),
        clutter=[ClutterPatch(flip(c.position), c.power) for c in cfg.clutter],
        tmts=[TmtConfig(flip(t.position), t.axis) for t in cfg.tmts], ue_indices=cfg.ue_indices,
        noise_power=cfg.noise_power)
    g, m = scenario.solve_geometry(cfg), scenario.solve_geometry(mirrored)
    # x-axis TMT arrays see the same cosines; the y-axis BS array sees negated ones
    assert m.aoa_target == pytest.approx(g.aoa_target)
    assert m.aoa_clutter == pytest.approx(g.aoa_clutter)
    assert m.aod_target == pytest.approx(math.pi - g.aod_target)
    assert m.aod_clutter == pytest.approx(math.pi - g.aod_clutter)
    assert m.link_length == pytest.approx(g.link_length)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-np.pi, np.pi))
@settings(max_examples=50)
def test_rigid_motion_covariance(dx, dy, phi):
    cfg = scenario.paper_scenario_fig4()
    c, s = math.cos(phi), math.sin(phi)
    move = lambda p: Position(c * p.x - s * p.y + dx, s * p.x + c * p.y + dy)
    moved = ScenarioConfig(
        bs=move(cfg.bs), target=move(cfg.target),
        clutter=[ClutterPatch(move(p.position), p.power) for p in cfg.clutter],
        tmts=[TmtConfig(move(t.position), t.axis + phi) for t in cfg.tmts],
        ue_indices=cfg.ue_indices, noise_power=cfg.noise_power, bs_axis=cfg.bs_axis + phi)
    g, m = scenario.solve_geometry(cfg), scenario.solve_geometry(moved)
    assert m.link_length == pytest.approx(g.link_length)
    diff = lambda geo: geo.aoa_target[:, None] - geo.aoa_clutter
    assert diff(m) == pytest.approx(diff(g), abs=1e-7)
