"""Flat binary persistence for path ensembles and solutions, CSV and JSON out.

Binary layout (little endian): magic "VLTB", u32 version, u8 kind
(0 = noise ensemble, 1 = solution), u64 n_paths, u64 n_steps, u64 dim,
i64 seed, u8 scheme (0 exact / 1 kernel-discretized), u8 has_wiener,
f64 T, then the value array and, if present, the Wiener increments, both
row-major float64.  A JSON sidecar carries the generating parameters.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .kernels import KernelSpec
from .paths import PathEnsemble, TimeGrid

_MAGIC = b"VLTB"
_VERSION = 1
_HEADER = struct.Struct("<4sIBQQQqBBd")
_MAX_BYTES = 2 << 30

_SCHEMES = {"exact": 0, "kernel_discretized": 1}
_SCHEMES_BACK = {v: k for k, v in _SCHEMES.items()}


def dump_json(obj, path) -> None:
    """UTF-8 JSON with stable key order and a trailing newline."""
    text = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_csv(path, header, rows) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
            n += 1
    return n


def _spec_sidecar(spec: KernelSpec) -> dict:
    return {"family": spec.family, "hurst": spec.hurst, "decay": spec.decay,
            "T": spec.T}


def save_ensemble(ensemble: PathEnsemble, base_path, spec: KernelSpec,
                  extra_sidecar: dict | None = None) -> dict:
    """Write <base>.vlt and <base>.json; returns the sidecar dict."""
    base = Path(base_path)
    values = np.ascontiguousarray(ensemble.values, dtype=np.float64)
    wiener = ensemble.wiener_increments
    total = values.nbytes + (wiener.nbytes if wiener is not None else 0)
    if total > _MAX_BYTES:
        raise DomainError(f"ensemble of {total} bytes exceeds the 2 GB file cap")
    header = _HEADER.pack(
        _MAGIC, _VERSION, 0, ensemble.n_paths, ensemble.grid.n_steps,
        ensemble.dim, ensemble.seed, _SCHEMES[ensemble.scheme],
        int(wiener is not None), ensemble.grid.T)
    with open(base.with_suffix(".vlt"), "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes())
        if wiener is not None:
            fh.write(np.ascontiguousarray(wiener, dtype=np.float64).tobytes())
    sidecar = {
        "kind": "path_ensemble",
        "kernel": _spec_sidecar(spec),
        "grid": {"T": ensemble.grid.T, "n_steps": ensemble.grid.n_steps},
        "dim": ensemble.dim,
        "n_paths": ensemble.n_paths,
        "seed": ensemble.seed,
        "scheme": ensemble.scheme,
        "path_offset": ensemble.path_offset,
    }
    if extra_sidecar:
        sidecar.update(extra_sidecar)
    dump_json(sidecar, base.with_suffix(".json"))
    return sidecar


def load_ensemble(base_path):
    """Read <base>.vlt (+ sidecar); returns (PathEnsemble, KernelSpec)."""
    base = Path(base_path)
    raw = base.with_suffix(".vlt").read_bytes()
    (magic, version, kind, n_paths, n_steps, dim, seed, scheme_code,
     has_wiener, T) = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ConfigError(str(base), "not a volterra-lab binary file")
    if version != _VERSION:
        raise ConfigError(str(base), f"unsupported format version {version}")
    if kind != 0:
        raise ConfigError(str(base), "file does not hold a path ensemble")
    off = _HEADER.size
    n_vals = n_paths * (n_steps + 1) * dim
    values = np.frombuffer(raw, dtype="<f8", count=n_vals, offset=off)
    values = values.reshape(n_paths, n_steps + 1, dim).copy()
    wiener = None
    if has_wiener:
        off += n_vals * 8
        wiener = np.frombuffer(raw, dtype="<f8", count=n_paths * n_steps * dim,
                               offset=off).reshape(n_paths, n_steps, dim).copy()
    sidecar = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    spec = KernelSpec(**sidecar["kernel"])
    grid = TimeGrid(T, n_steps)
    ensemble = PathEnsemble(grid, dim, n_paths, values, seed,
                            _SCHEMES_BACK[scheme_code], wiener_increments=wiener,
                            path_offset=sidecar.get("path_offset", 0))
    return ensemble, spec


def save_solution(solution, base_path, spec: KernelSpec,
                  drift_config: dict | None = None) -> dict:
    """Write solution values in the shared binary layout (kind byte 1).

    The sidecar records the drift parameters; solutions with config-expressible
    drifts can be reconstructed by re-running the solver on the reloaded noise.
    """
    base = Path(base_path)
    values = np.ascontiguousarray(solution.values, dtype=np.float64)
    if values.nbytes > _MAX_BYTES:
        raise DomainError("solution exceeds the 2 GB file cap")
    noise = solution.noise
    header = _HEADER.pack(
        _MAGIC, _VERSION, 1, noise.n_paths, noise.grid.n_steps, noise.dim,
        noise.seed, _SCHEMES[noise.scheme], 0, noise.grid.T)
    with open(base.with_suffix(".vlt"), "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes())
    sidecar = {
        "kind": "solution_ensemble",
        "kernel": _spec_sidecar(spec),
        "grid": {"T": noise.grid.T, "n_steps": noise.grid.n_steps},
        "dim": noise.dim,
        "n_paths": noise.n_paths,
        "seed": noise.seed,
        "scheme": noise.scheme,
        "x0": np.asarray(solution.x0).tolist(),
        "drift": drift_config,
    }
    dump_json(sidecar, base.with_suffix(".json"))
    return sidecar


def load_solution_values(base_path):
    """Read a solution file; returns (values, sidecar dict)."""
    base = Path(base_path)
    raw = base.with_suffix(".vlt").read_bytes()
    (magic, version, kind, n_paths, n_steps, dim, _seed, _scheme,
     _hw, _T) = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC or version != _VERSION:
        raise ConfigError(str(base), "not a readable volterra-lab binary file")
    if kind != 1:
        raise ConfigError(str(base), "file does not hold a solution ensemble")
    values = np.frombuffer(raw, dtype="<f8", count=n_paths * (n_steps + 1) * dim,
                           offset=_HEADER.size).reshape(n_paths, n_steps + 1, dim)
    sidecar = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    return values.copy(), sidecar


def export_paths_csv(ensemble: PathEnsemble, path, path_indices=None,
                     component: int = 0) -> int:
    """Selected paths as CSV columns (t, path_<i>, ...); returns row count."""
    if path_indices is None:
        path_indices = range(min(ensemble.n_paths, 8))
    idx = list(path_indices)
    nodes = ensemble.grid.nodes()
    header = ["t"] + [f"path_{i}" for i in idx]
    rows = ([f"{t:.12g}"] + [f"{ensemble.values[i, k, component]:.12g}" for i in idx]
            for k, t in enumerate(nodes))
    return write_csv(path, header, rows)
