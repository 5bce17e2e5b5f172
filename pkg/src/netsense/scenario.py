"""Scenario geometry, link budget and the canonical layouts.

Angles follow the uniform-linear-array convention: an angle is measured from
the array axis, so only its cosine enters a steering vector.  Every node
carries its own axis orientation (radians from the global +x direction).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DegenerateGeometryError, DomainError

_COINCIDENT = 1e-9


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError(f"position must be finite, got ({self.x}, {self.y})")

    def as_array(self):
        return np.array([self.x, self.y], dtype=float)

    def distance(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class ClutterPatch:
    position: Position
    power: tuple  # reflecting variance seen by each TMT, watts

    def __post_init__(self):
        object.__setattr__(self, "power", tuple(float(p) for p in self.power))


@dataclass(frozen=True)
class TmtConfig:
    position: Position
    axis: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    bs: Position
    target: Position
    clutter: tuple
    tmts: tuple
    n_tx: int = 32
    n_rx: int = 16
    spacing_ratio: float = 0.5
    tx_power: float = 1.0
    gain_const: float = 10.0
    pathloss_exp: float = 2.0
    noise_power: float = 1e-12
    ue_indices: tuple = (0, 2)
    bs_axis: float = math.pi / 2
    sensing_power: float = 1.0
    carrier_hz: float = 28e9  # informational only
    clutter_split: str = "equal"

    def __post_init__(self):
        object.__setattr__(self, "clutter", tuple(self.clutter))
        object.__setattr__(self, "tmts", tuple(self.tmts))
        object.__setattr__(self, "ue_indices", tuple(int(i) for i in self.ue_indices))
        self.validate()

    @property
    def n_ue(self) -> int:
        return len(self.ue_indices)

    @property
    def n_clutter(self) -> int:
        return len(self.clutter)

    @property
    def n_tmt(self) -> int:
        return len(self.tmts)

    def clutter_powers(self) -> np.ndarray:
        """Matrix of reflecting variances, shape ``(n_tmt, n_clutter)``."""
        if not self.clutter:
            return np.zeros((self.n_tmt, 0))
        return np.array([c.power for c in self.clutter], dtype=float).T

    def validate(self):
        """Raise :class:`DomainError` naming the first violated field."""
        checks = [
            ("n_tx", self.n_tx >= 1, "must be >= 1"),
            ("n_rx", self.n_rx >= 1, "must be >= 1"),
            ("pathloss_exp", self.pathloss_exp > 0, "must be > 0"),
            ("noise_power", self.noise_power > 0, "must be > 0"),
            ("spacing_ratio", self.spacing_ratio > 0, "must be > 0"),
            ("tx_power", self.tx_power > 0, "must be > 0"),
            ("gain_const", self.gain_const >= 0, "must be >= 0"),
            ("sensing_power", self.sensing_power >= 0, "must be >= 0"),
            ("tmts", len(self.tmts) >= 1, "at least one TMT required"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise DomainError(f"field '{name}': {msg}")
        for i, patch in enumerate(self.clutter):
            if len(patch.power) != self.n_tmt:
                raise DomainError(
                    f"field 'clutter[{i}].power': expected {self.n_tmt} entries "
                    f"(one per TMT), got {len(patch.power)}")
            if any(not (p > 0) for p in patch.power):
                raise DomainError(f"field 'clutter[{i}].power': entries must be > 0")
        for k in self.ue_indices:
            if not 0 <= k < self.n_clutter:
                raise DomainError(
                    f"field 'ue_indices': index {k} is not a clutter patch index")
        if len(set(self.ue_indices)) != len(self.ue_indices):
            raise DomainError("field 'ue_indices': duplicate entries")
        cos_t = _direction_cosine(self.bs, self.target, self.bs_axis, "target")
        for i, patch in enumerate(self.clutter):
            cos_i = _direction_cosine(self.bs, patch.position, self.bs_axis, f"clutter[{i}]")
            if abs(cos_t - cos_i) < 1e-9:
                raise DomainError(
                    f"field 'target': departure angle coincides with clutter[{i}]")


@dataclass(frozen=True)
class GeometrySolution:
    aod_target: float
    aod_clutter: np.ndarray
    aoa_target: np.ndarray
    aoa_clutter: np.ndarray  # (n_tmt, n_clutter)
    link_length: np.ndarray
    bs_target_range: float = field(default=0.0)


def _direction_cosine(src: Position, dst: Position, axis: float, what: str) -> float:
    dx, dy = dst.x - src.x, dst.y - src.y
    dist = math.hypot(dx, dy)
    if dist < _COINCIDENT:
        raise DegenerateGeometryError(f"{what} coincides with the observing node")
    c = (dx * math.cos(axis) + dy * math.sin(axis)) / dist
    return min(1.0, max(-1.0, c))


def array_angle(src: Position, dst: Position, axis: float = 0.0, what: str = "point") -> float:
    """Angle between the array axis at ``src`` and the direction to ``dst``."""
    return math.acos(_direction_cosine(src, dst, axis, what))


def solve_geometry(cfg: ScenarioConfig) -> GeometrySolution:
    """Departure/arrival angles and bistatic link lengths for ``cfg``."""
    aod_t = array_angle(cfg.bs, cfg.target, cfg.bs_axis, "target")
    aod_c = np.array([array_angle(cfg.bs, c.position, cfg.bs_axis, f"clutter[{i}]")
                      for i, c in enumerate(cfg.clutter)])
    aoa_t = np.empty(cfg.n_tmt)
    aoa_c = np.empty((cfg.n_tmt, cfg.n_clutter))
    links = np.empty(cfg.n_tmt)
    r_bt = cfg.bs.distance(cfg.target)
    if r_bt < _COINCIDENT:
        raise DegenerateGeometryError("target coincides with the BS")
    for l, tmt in enumerate(cfg.tmts):
        aoa_t[l] = array_angle(tmt.position, cfg.target, tmt.axis, f"target (TMT {l})")
        for i, c in enumerate(cfg.clutter):
            aoa_c[l, i] = array_angle(tmt.position, c.position, tmt.axis,
                                      f"clutter[{i}] (TMT {l})")
        links[l] = r_bt + cfg.target.distance(tmt.position)
    return GeometrySolution(aod_t, aod_c, aoa_t, aoa_c, links, r_bt)


def snr_from_range(cfg: ScenarioConfig, l: int, geometry: GeometrySolution | None = None) -> float:
    """Per-TMT SNR ``C_g * N_R * P_T / r_l**beta`` (dimensionless)."""
    geometry = geometry or solve_geometry(cfg)
    r = geometry.link_length[l]
    if not r > 0:
        raise DegenerateGeometryError(f"link length of TMT {l} must be positive")
    return cfg.gain_const * cfg.n_rx * cfg.tx_power / r ** cfg.pathloss_exp


def snr_all(cfg: ScenarioConfig, geometry: GeometrySolution | None = None) -> np.ndarray:
    geometry = geometry or solve_geometry(cfg)
    return np.array([snr_from_range(cfg, l, geometry) for l in range(cfg.n_tmt)])


def clutter_power_matrix(n_tmt, n_clutter, noise_power, cnr_db=30.0,
                         split="equal", rng=None):
    """Reflecting variances whose per-TMT sum averages ``cnr_db`` above noise.

    ``split="equal"`` divides the budget evenly across patches; ``"random"``
    draws a flat Dirichlet split per TMT from ``rng``.
    """
    total = noise_power * 10.0 ** (cnr_db / 10.0)
    if split == "equal":
        return np.full((n_tmt, n_clutter), total / n_clutter)
    if split == "random":
        if rng is None:
            raise DomainError("random clutter split needs a random generator")
        return total * rng.dirichlet(np.ones(n_clutter), size=n_tmt)
    raise DomainError(f"unknown clutter split {split!r}")


def with_clutter_powers(cfg: ScenarioConfig, powers: np.ndarray, split: str | None = None):
    """Copy of ``cfg`` with the ``(n_tmt, n_clutter)`` power matrix replaced."""
    powers = np.asarray(powers, dtype=float)
    clutter = tuple(ClutterPatch(c.position, tuple(powers[:, i]))
                    for i, c in enumerate(cfg.clutter))
    return replace(cfg, clutter=clutter, clutter_split=split or cfg.clutter_split)


def with_cnr(cfg: ScenarioConfig, cnr_db: float, split="equal", rng=None):
    powers = clutter_power_matrix(cfg.n_tmt, cfg.n_clutter, cfg.noise_power,
                                  cnr_db, split, rng)
    return with_clutter_powers(cfg, powers, split)


def tmt_circle_placement(q: int, center: Position, radius: float) -> list:
    """``q`` points evenly spaced on a circle, the first due +y of ``center``."""
    if q < 1:
        raise DomainError("q must be >= 1")
    if not radius > 0:
        raise DomainError("radius must be > 0")
    ang = 2.0 * np.pi * np.arange(q) / q
    return [Position(center.x + radius * math.sin(t), center.y + radius * math.cos(t))
            for t in ang]


FIG4_CLUTTER = ((25.0, 8.0), (15.0, -8.0), (25.0, -8.0))
FIG4_TMTS = ((20.0, 10.0), (20.0 - 5.0 * math.sqrt(3.0), -5.0), (20.0 + 5.0 * math.sqrt(3.0), -5.0))
CIRCLE_CENTER = Position(20.0, 0.0)
CIRCLE_RADIUS = 10.0


def _build(target, tmt_positions, cnr_db, **kwargs):
    noise = kwargs.pop("noise_power", float(dbm_to_watts(-90.0)))
    powers = clutter_power_matrix(len(tmt_positions), len(FIG4_CLUTTER), noise, cnr_db)
    clutter = tuple(ClutterPatch(Position(*xy), tuple(powers[:, i]))
                    for i, xy in enumerate(FIG4_CLUTTER))
    tmts = tuple(TmtConfig(p if isinstance(p, Position) else Position(*p)) for p in tmt_positions)
    return ScenarioConfig(bs=Position(0.0, 0.0), target=target, clutter=clutter,
                          tmts=tmts, noise_power=noise, **kwargs)


def paper_scenario_fig4(n_rx=16, cnr_db=30.0, **kwargs) -> ScenarioConfig:
    """One BS, one target, three clutter patches and three TMTs."""
    kwargs.setdefault("tx_power", 1.0)
    kwargs.setdefault("gain_const", 10.0)
    return _build(Position(15.0, 8.0), FIG4_TMTS, cnr_db, n_rx=n_rx, **kwargs)


# Gain constant for the macro-diversity layout.  With C_g = 10 the per-TMT
# SNR at r ~ 25 m is ~0.1 and every TMT count gives P_d ~ P_fa.
MACRO_GAIN_CONST = 400.0


def macro_scenario(q: int, target: Position | None = None, n_rx=16, cnr_db=30.0,
                   **kwargs) -> ScenarioConfig:
    """``q`` TMTs on the 10 m circle around (20, 0) with the standard three clutter patches."""
    kwargs.setdefault("tx_power", 0.5)
    kwargs.setdefault("gain_const", MACRO_GAIN_CONST)
    target = target or Position(15.0, 8.0)
    tmts = tmt_circle_placement(q, CIRCLE_CENTER, CIRCLE_RADIUS)
    return _build(target, tmts, cnr_db, n_rx=n_rx, **kwargs)


def random_target_in_circle(rng, center=CIRCLE_CENTER, radius=CIRCLE_RADIUS,
                            avoid: Sequence[Position] = (), min_gap=0.5) -> Position:
    """Uniform point in the disc, at least ``min_gap`` from every ``avoid`` point."""
    while True:
        r = radius * math.sqrt(rng.random())
        t = 2.0 * math.pi * rng.random()
        p = Position(center.x + r * math.cos(t), center.y + r * math.sin(t))
        if all(p.distance(a) >= min_gap for a in avoid):
            return p


def with_target(cfg: ScenarioConfig, target: Position) -> ScenarioConfig:
    return replace(cfg, target=target)
