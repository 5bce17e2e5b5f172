"""Scenario configuration files.

YAML document mirroring :class:`ScenarioConfig`.  Positions are ``[x, y]``
pairs in meters and powers are in dBm.  Example::

    bs: [0, 0]
    target: [15, 8]
    noise_power_dbm: -90
    clutter:
      - position: [25, 8]
        power_dbm: [-64.77, -64.77, -64.77]   # one entry per TMT, or a scalar
    tmts:
      - position: [20, 10]
        axis: 0
"""
from __future__ import annotations

import math

import numpy as np
import yaml

from .errors import DomainError
from .scenario import ClutterPatch, Position, ScenarioConfig, TmtConfig, dbm_to_watts, watts_to_dbm

_SCALARS = {
    "n_tx": int, "n_rx": int, "spacing_ratio": float, "gain_const": float,
    "pathloss_exp": float, "bs_axis": float, "carrier_hz": float, "clutter_split": str,
}
_DBM = {"tx_power_dbm": "tx_power", "noise_power_dbm": "noise_power",
        "sensing_power_dbm": "sensing_power"}
_KNOWN = set(_SCALARS) | set(_DBM) | {"bs", "target", "clutter", "tmts", "ue_indices"}


def _position(value, field):
    try:
        x, y = value
        return Position(float(x), float(y))
    except (TypeError, ValueError) as exc:
        raise DomainError(f"field '{field}': expected an [x, y] pair, got {value!r}") from exc


def _number(value, field, kind=float):
    try:
        out = kind(value)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"field '{field}': expected a number, got {value!r}") from exc
    if kind is float and not math.isfinite(out):
        raise DomainError(f"field '{field}': must be finite")
    return out


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise DomainError("config root must be a mapping")
    for key in doc:
        if key not in _KNOWN:
            raise DomainError(f"field '{key}': unknown field")
    for key in ("bs", "target", "tmts"):
        if key not in doc:
            raise DomainError(f"field '{key}': missing")
    kw = {}
    for key, kind in _SCALARS.items():
        if key in doc:
            kw[key] = doc[key] if kind is str else _number(doc[key], key, kind)
    for key, target in _DBM.items():
        if key in doc:
            kw[target] = float(dbm_to_watts(_number(doc[key], key)))
    tmts = []
    for i, t in enumerate(doc["tmts"] or []):
        if not isinstance(t, dict) or "position" not in t:
            raise DomainError(f"field 'tmts[{i}].position': missing")
        tmts.append(TmtConfig(_position(t["position"], f"tmts[{i}].position"),
                              _number(t.get("axis", 0.0), f"tmts[{i}].axis")))
    clutter = []
    for i, c in enumerate(doc.get("clutter") or []):
        if not isinstance(c, dict) or "position" not in c:
            raise DomainError(f"field 'clutter[{i}].position': missing")
        if "power_dbm" not in c:
            raise DomainError(f"field 'clutter[{i}].power_dbm': missing")
        p = c["power_dbm"]
        p = [p] * len(tmts) if np.ndim(p) == 0 else list(p)
        watts = tuple(float(dbm_to_watts(_number(v, f"clutter[{i}].power_dbm"))) for v in p)
        clutter.append(ClutterPatch(_position(c["position"], f"clutter[{i}].position"), watts))
    if "ue_indices" in doc:
        kw["ue_indices"] = tuple(_number(k, "ue_indices", int) for k in doc["ue_indices"])
    return ScenarioConfig(bs=_position(doc["bs"], "bs"), target=_position(doc["target"], "target"),
                          clutter=tuple(clutter), tmts=tuple(tmts), **kw)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    doc = {"bs": [cfg.bs.x, cfg.bs.y], "target": [cfg.target.x, cfg.target.y]}
    for key in _SCALARS:
        doc[key] = getattr(cfg, key)
    for key, attr in _DBM.items():
        val = getattr(cfg, attr)
        doc[key] = float(watts_to_dbm(val)) if val > 0 else float("-inf")
    doc["ue_indices"] = list(cfg.ue_indices)
    doc["clutter"] = [{"position": [c.position.x, c.position.y],
                       "power_dbm": [float(watts_to_dbm(p)) for p in c.power]}
                      for c in cfg.clutter]
    doc["tmts"] = [{"position": [t.position.x, t.position.y], "axis": t.axis} for t in cfg.tmts]
    return doc


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a config file; ``OSError`` propagates for missing paths."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise DomainError(f"{path}: not valid YAML ({exc})") from exc
    return scenario_from_dict(doc)


def bundled(name="fig4") -> ScenarioConfig:
    """Load one of the configs shipped in ``netsense/data``."""
    from importlib import resources
    text = resources.files("netsense").joinpath("data", f"{name}.yaml").read_text()
    return scenario_from_dict(yaml.safe_load(text))


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False)
