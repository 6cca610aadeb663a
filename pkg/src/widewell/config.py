"""Scenario configuration: versioned JSON document, validation, canonical hash.

One JSON object describes a full scenario (potential, launch point,
frequency ratio, noise amplitudes, stepping, grids, schedule tuning).  The
document round-trips losslessly through :func:`config_to_dict` /
:func:`config_from_dict`, and :func:`config_hash` digests the canonical
serialization so artifacts can embed a stable fingerprint of the scenario
that produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Mapping

from .errors import ConfigError

__all__ = [
    "SCHEMA_VERSION", "GridSpec", "ScenarioConfig", "config_from_dict",
    "config_to_dict", "config_hash", "load_config", "save_config",
]

SCHEMA_VERSION = 1

_POTENTIALS = ("double_well", "harmonic")


@dataclass(frozen=True)
class GridSpec:
    """Explicit solver grid; absent means size-from-scenario."""

    x_min: float
    x_max: float
    n_points: int


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario description (flat view of the JSON document)."""

    potential: str
    x_s: float
    freq_ratio: float
    d: float | None = None
    p0: float = 0.0
    nbar: float = 0.0
    gamma_loc: float = 0.0
    S1: float = 0.0
    S2: float = 0.0
    tau_end: float | None = None      # None: 2 tau_max (double well only)
    dtau: float = 1e-3
    seed: int = 0
    n_traj: int = 1
    delta: float | None = None        # None: natural second-segment angle
    grid: GridSpec | None = None
    snapshots: tuple[float, ...] | None = None   # None: landmark times
    out: str | None = None


def _require(data: Mapping, key: str, path: str = "config"):
    if key not in data:
        raise ConfigError(f"{path}['{key}'] is required")
    return data[key]


def _number(value, path: str, *, minimum=None, strict_min=None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    v = float(value)
    if strict_min is not None and not v > strict_min:
        raise ConfigError(f"{path} must be > {strict_min}, got {v}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path} must be >= {minimum}, got {v}")
    return v


_TOP_KEYS = frozenset({
    "schema", "potential", "d", "x_s", "freq_ratio", "p0", "nbar",
    "decoherence", "tau_end", "dtau", "seed", "n_traj", "delta", "grid",
    "snapshots", "out",
})


def config_from_dict(data: Mapping) -> ScenarioConfig:
    """Validate a parsed JSON document; errors name the offending key path."""
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    schema = _require(data, "schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(
            f"config['schema'] must be {SCHEMA_VERSION}, got {schema!r}")
    kind = _require(data, "potential")
    if kind not in _POTENTIALS:
        raise ConfigError(
            f"config['potential'] must be one of {_POTENTIALS}, got {kind!r}")
    x_s = _number(_require(data, "x_s"), "config['x_s']")
    wr = _number(_require(data, "freq_ratio"), "config['freq_ratio']",
                 strict_min=0.0)

    d = None
    if kind == "double_well":
        d = _number(_require(data, "d"), "config['d']", strict_min=0.0)
        if not d > x_s > 0.0:
            raise ConfigError(
                f"double well requires d > x_s > 0, got d={d}, x_s={x_s}")
    elif "d" in data and data["d"] is not None:
        raise ConfigError("config['d'] only applies to the double well")

    deco = data.get("decoherence") or {}
    if not isinstance(deco, Mapping):
        raise ConfigError("config['decoherence'] must be an object")
    extra = set(deco) - {"gamma_loc", "S1", "S2"}
    if extra:
        raise ConfigError(
            f"unknown config['decoherence'] keys: {sorted(extra)}")
    gamma_loc = _number(deco.get("gamma_loc", 0.0),
                        "config['decoherence']['gamma_loc']", minimum=0.0)
    S1 = _number(deco.get("S1", 0.0), "config['decoherence']['S1']",
                 minimum=0.0)
    S2 = _number(deco.get("S2", 0.0), "config['decoherence']['S2']",
                 minimum=0.0)

    tau_end = data.get("tau_end")
    if tau_end is not None:
        tau_end = _number(tau_end, "config['tau_end']", strict_min=0.0)
    elif kind == "harmonic":
        raise ConfigError("config['tau_end'] is required for the harmonic"
                          " potential (no landmark times to default to)")

    grid = data.get("grid")
    if grid is not None:
        if not isinstance(grid, Mapping):
            raise ConfigError("config['grid'] must be an object")
        bad = set(grid) - {"x_min", "x_max", "n_points"}
        if bad:
            raise ConfigError(f"unknown config['grid'] keys: {sorted(bad)}")
        x_min = _number(_require(grid, "x_min", "config['grid']"),
                        "config['grid']['x_min']")
        x_max = _number(_require(grid, "x_max", "config['grid']"),
                        "config['grid']['x_max']")
        if not x_max > x_min:
            raise ConfigError("config['grid']['x_max'] must exceed"
                              " config['grid']['x_min']")
        n_points = _require(grid, "n_points", "config['grid']")
        if isinstance(n_points, bool) or not isinstance(n_points, int) \
                or n_points < 8:
            raise ConfigError(
                f"config['grid']['n_points'] must be an integer >= 8,"
                f" got {n_points!r}")
        grid = GridSpec(x_min, x_max, n_points)

    snapshots = data.get("snapshots")
    if snapshots is not None:
        if not isinstance(snapshots, (list, tuple)) or not snapshots:
            raise ConfigError("config['snapshots'] must be a non-empty list")
        snapshots = tuple(
            _number(t, f"config['snapshots'][{i}]", minimum=0.0)
            for i, t in enumerate(snapshots))
        if any(b <= a for a, b in zip(snapshots, snapshots[1:])):
            raise ConfigError("config['snapshots'] must increase strictly")

    delta = data.get("delta")
    if delta is not None:
        delta = _number(delta, "config['delta']")
        if not abs(delta) < 0.1:
            raise ConfigError(
                f"config['delta'] must satisfy |delta| < 0.1, got {delta}")

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"config['seed'] must be a non-negative integer,"
                          f" got {seed!r}")
    n_traj = data.get("n_traj", 1)
    if isinstance(n_traj, bool) or not isinstance(n_traj, int) or n_traj < 1:
        raise ConfigError(f"config['n_traj'] must be a positive integer,"
                          f" got {n_traj!r}")
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError(f"config['out'] must be a string, got {out!r}")

    return ScenarioConfig(
        potential=kind, x_s=x_s, freq_ratio=wr, d=d,
        p0=_number(data.get("p0", 0.0), "config['p0']"),
        nbar=_number(data.get("nbar", 0.0), "config['nbar']", minimum=0.0),
        gamma_loc=gamma_loc, S1=S1, S2=S2, tau_end=tau_end,
        dtau=_number(data.get("dtau", 1e-3), "config['dtau']",
                     strict_min=0.0),
        seed=seed, n_traj=n_traj, delta=delta, grid=grid,
        snapshots=snapshots, out=out)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Canonical document for cfg; config_from_dict inverts it exactly."""
    return {
        "schema": SCHEMA_VERSION,
        "potential": cfg.potential,
        "d": cfg.d,
        "x_s": cfg.x_s,
        "freq_ratio": cfg.freq_ratio,
        "p0": cfg.p0,
        "nbar": cfg.nbar,
        "decoherence": {"gamma_loc": cfg.gamma_loc, "S1": cfg.S1,
                        "S2": cfg.S2},
        "tau_end": cfg.tau_end,
        "dtau": cfg.dtau,
        "seed": cfg.seed,
        "n_traj": cfg.n_traj,
        "delta": cfg.delta,
        "grid": None if cfg.grid is None else {
            "x_min": cfg.grid.x_min, "x_max": cfg.grid.x_max,
            "n_points": cfg.grid.n_points},
        "snapshots": None if cfg.snapshots is None else list(cfg.snapshots),
        "out": cfg.out,
    }


def config_hash(cfg: ScenarioConfig) -> str:
    """Hex digest of the canonical JSON serialization (order-independent)."""
    text = json.dumps(config_to_dict(cfg), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(data)


def save_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
