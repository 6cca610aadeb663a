"""Artifact I/O: binary Wigner grids with JSON sidecars, hashed CSV tables.

Grids are flat little-endian float64, row-major over (x, p), beside a JSON
sidecar {nx, np, x_min, x_max, p_min, p_max, tau, frame_tag} plus the
producing scenario's config hash.  CSV tables carry the hash on a leading
comment line.  All writers format numbers with shortest-exact repr, so a
rerun with the same inputs produces byte-identical files.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import ComparisonMismatch, ConfigError
from .wigner import WignerGrid

__all__ = [
    "write_wigner_grid", "read_wigner_grid", "write_csv", "read_csv",
    "write_manifest", "read_manifest", "require_same_hash",
]


def write_wigner_grid(base_path, grid: WignerGrid, config_hash: str
                      ) -> tuple[str, str]:
    """Write ``base_path``.f64 + .json for a grid; returns both paths."""
    base = os.fspath(base_path)
    bin_path = base + ".f64"
    meta_path = base + ".json"
    values = np.ascontiguousarray(grid.values, dtype="<f8")
    with open(bin_path, "wb") as fh:
        fh.write(values.tobytes())
    meta = {
        "nx": int(grid.x_axis.size),
        "np": int(grid.p_axis.size),
        "x_min": float(grid.x_axis[0]),
        "x_max": float(grid.x_axis[-1]),
        "p_min": float(grid.p_axis[0]),
        "p_max": float(grid.p_axis[-1]),
        "tau": float(grid.tau),
        "frame_tag": grid.frame_tag,
        "config_hash": config_hash,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return bin_path, meta_path


def read_wigner_grid(base_path) -> tuple[WignerGrid, str]:
    """Read a grid written by :func:`write_wigner_grid`."""
    base = os.fspath(base_path)
    try:
        with open(base + ".json") as fh:
            meta = json.load(fh)
        raw = np.fromfile(base + ".f64", dtype="<f8")
    except OSError as exc:
        raise ConfigError(f"cannot read grid {base}: {exc}") from None
    nx, np_ = int(meta["nx"]), int(meta["np"])
    if raw.size != nx * np_:
        raise ConfigError(
            f"grid {base}: payload holds {raw.size} values, sidecar"
            f" declares {nx} x {np_}")
    grid = WignerGrid(
        x_axis=np.linspace(meta["x_min"], meta["x_max"], nx),
        p_axis=np.linspace(meta["p_min"], meta["p_max"], np_),
        values=raw.reshape(nx, np_), tau=float(meta["tau"]),
        frame_tag=str(meta["frame_tag"]))
    return grid, str(meta.get("config_hash", ""))


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, columns, rows, config_hash: str) -> str:
    """CSV with a `# config_hash=` comment line; deterministic formatting."""
    path = os.fspath(path)
    with open(path, "w") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path) -> tuple[str, list[str], np.ndarray]:
    """Inverse of :func:`write_csv`: (config_hash, columns, data)."""
    path = os.fspath(path)
    try:
        with open(path) as fh:
            first = fh.readline().strip()
            if not first.startswith("# config_hash="):
                raise ConfigError(f"{path}: missing config-hash header line")
            config_hash = first.split("=", 1)[1]
            columns = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read table {path}: {exc}") from None
    if data.size and data.shape[1] != len(columns):
        raise ConfigError(
            f"{path}: {data.shape[1]} data columns vs {len(columns)} headers")
    return config_hash, columns, data


def write_manifest(out_dir, config_doc: dict, config_hash: str,
                   artifacts: dict) -> str:
    """Write ``manifest.json`` listing a command's artifacts."""
    path = os.path.join(os.fspath(out_dir), "manifest.json")
    doc = {
        "config": config_doc,
        "config_hash": config_hash,
        "artifacts": artifacts,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(out_dir) -> dict:
    path = os.path.join(os.fspath(out_dir), "manifest.json")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None


def require_same_hash(*hashes: str) -> str:
    """All artifacts entering a comparison must share one scenario hash."""
    first = hashes[0]
    for h in hashes[1:]:
        if h != first:
            raise ComparisonMismatch(
                f"artifacts come from different scenarios:"
                f" {first} vs {h}")
    return first
