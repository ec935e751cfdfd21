"""Experiment configuration: JSON parsing, validation, object construction.

All randomness flows from the single required top-level seed; no subcommand
ever touches system entropy.  Validation errors name the offending field by
its dotted path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kernels import KernelSpec
from .paths import TimeGrid
from .sde import (DriftSpec, PathDriftSpec, VProcessSpec, constant_drift,
                  holder_power_drift, lacunary_cosine_drift,
                  lacunary_cosine_path_drift, time_modulated_drift,
                  v_process_spec, zero_drift)
from .smoothing import (TestFunctionSpec, constant_test_function,
                        cosine_test_function, holder_bump_test_function)

EXPERIMENTS = ("check_conditions", "simulate", "solve", "pe_ae_sweep",
               "density_verify")


def _get(d: dict, key: str, path: str, required: bool = True, default=None):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    return d[key]


def _number(val, path, lo=None, hi=None, strict_lo=False, strict_hi=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(path, f"expected a number, got {val!r}")
    v = float(val)
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise ConfigError(path, f"must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None and (v >= hi if strict_hi else v > hi):
        raise ConfigError(path, f"must be {'<' if strict_hi else '<='} {hi}")
    return v


def _integer(val, path, lo=None, hi=None):
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(path, f"expected an integer, got {val!r}")
    if lo is not None and val < lo:
        raise ConfigError(path, f"must be >= {lo}")
    if hi is not None and val > hi:
        raise ConfigError(path, f"must be <= {hi}")
    return val


def _grid_values(node, path, n_default=8):
    """A sweep grid: explicit list, or {min, max, count} geometric."""
    if isinstance(node, list):
        vals = [_number(v, f"{path}[{i}]", lo=0.0, strict_lo=True)
                for i, v in enumerate(node)]
        if sorted(vals) != vals:
            raise ConfigError(path, "grid must be increasing")
        return vals
    if isinstance(node, dict):
        lo = _number(_get(node, "min", path), f"{path}.min", lo=0.0, strict_lo=True)
        hi = _number(_get(node, "max", path), f"{path}.max", lo=lo, strict_lo=True)
        count = _integer(node.get("count", n_default), f"{path}.count", lo=2)
        return np.geomspace(lo, hi, count).tolist()
    raise ConfigError(path, "expected a list or {min, max, count}")


def build_grid(cfg: dict, path: str = "grid") -> TimeGrid:
    T = _number(_get(cfg, "T", path), f"{path}.T", lo=0.0, strict_lo=True)
    n = _integer(_get(cfg, "n_steps", path), f"{path}.n_steps", lo=1)
    return TimeGrid(T, n)


def build_kernel_spec(cfg: dict, T: float, path: str = "kernel") -> KernelSpec:
    family = _get(cfg, "family", path)
    if not isinstance(family, str):
        raise ConfigError(f"{path}.family", "expected a string")
    hurst = _number(cfg.get("hurst", 0.5), f"{path}.hurst", lo=0.0, hi=1.0,
                    strict_lo=True, strict_hi=True)
    decay = _number(cfg.get("decay", 1.0), f"{path}.decay", lo=0.0, strict_lo=True)
    try:
        return KernelSpec(family, hurst=hurst, decay=decay, T=T)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def build_drift(cfg: dict, dim: int, horizon: float,
                path: str = "drift") -> DriftSpec:
    kind = _get(cfg, "kind", path)
    if kind == "zero":
        return zero_drift(dim)
    if kind == "constant":
        value = _get(cfg, "value", path)
        vec = np.broadcast_to(np.asarray(value, dtype=float), (dim,))
        return constant_drift(vec, dim)
    beta = _number(_get(cfg, "beta", path), f"{path}.beta", lo=0.0, hi=1.0,
                   strict_lo=True)
    bound = _number(_get(cfg, "bound", path), f"{path}.bound", lo=0.0, strict_lo=True)
    if kind == "holder_power":
        amp = _number(cfg.get("amplitude", 1.0), f"{path}.amplitude", lo=0.0,
                      strict_lo=True)
        center = np.broadcast_to(np.asarray(cfg.get("center", 0.0), dtype=float),
                                 (dim,))
        return holder_power_drift(beta, amp, bound, center, dim)
    if kind == "time_modulated":
        amp = _number(cfg.get("amplitude", 1.0), f"{path}.amplitude", lo=0.0,
                      strict_lo=True)
        gamma = _number(_get(cfg, "gamma", path), f"{path}.gamma", lo=0.0, hi=1.0,
                        strict_lo=True)
        center = np.broadcast_to(np.asarray(cfg.get("center", 0.0), dtype=float),
                                 (dim,))
        return time_modulated_drift(beta, amp, bound, gamma, horizon, center, dim)
    if kind == "lacunary_cosine":
        return lacunary_cosine_drift(beta, bound, dim=dim)
    raise ConfigError(f"{path}.kind", f"unknown drift kind {kind!r}")


def build_path_drift(cfg: dict, dim: int, path: str = "drift") -> PathDriftSpec:
    kind = _get(cfg, "kind", path)
    beta = _number(_get(cfg, "beta", path), f"{path}.beta", lo=0.0, hi=1.0,
                   strict_lo=True)
    bound = _number(_get(cfg, "bound", path), f"{path}.bound", lo=0.0, strict_lo=True)
    if kind == "lacunary_cosine_v":
        return lacunary_cosine_path_drift(beta, bound, dim=dim)
    raise ConfigError(f"{path}.kind", f"unknown path-dependent drift kind {kind!r}")


def build_v_process(cfg: dict, beta: float, hurst: float | None,
                    path: str = "v_process") -> VProcessSpec:
    kind = _get(cfg, "kind", path)
    try:
        return v_process_spec(kind, beta, hurst)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def build_test_function(cfg: dict, path: str = "test_function") -> TestFunctionSpec:
    kind = _get(cfg, "kind", path)
    if kind == "constant":
        return constant_test_function(_number(_get(cfg, "value", path),
                                              f"{path}.value"))
    alpha = _number(_get(cfg, "alpha", path), f"{path}.alpha", lo=0.0, hi=1.0,
                    strict_lo=True, strict_hi=True)
    amp = _number(cfg.get("amplitude", 1.0), f"{path}.amplitude", lo=0.0,
                  strict_lo=True)
    if kind == "cosine":
        freq = _number(cfg.get("frequency", 1.0), f"{path}.frequency", lo=0.0,
                       strict_lo=True)
        phase = _number(cfg.get("phase", 0.0), f"{path}.phase")
        return cosine_test_function(alpha, amp, freq, phase)
    if kind == "holder_bump":
        center = _number(cfg.get("center", 0.0), f"{path}.center")
        return holder_bump_test_function(alpha, amp, center)
    raise ConfigError(f"{path}.kind", f"unknown test function kind {kind!r}")


@dataclass
class ExperimentConfig:
    """Validated experiment description; `raw` echoes the original dict."""

    raw: dict
    experiment: str
    seed: int
    grid: TimeGrid
    kernel: KernelSpec
    dim: int
    x0: np.ndarray
    n_paths: int
    scheme: str
    t_eval: float
    output_dir: str
    emit_csv: bool
    emit_json: bool
    threads: int
    drift_cfg: dict | None = None
    v_process_cfg: dict | None = None
    test_function_cfg: dict | None = None
    sweep: dict = field(default_factory=dict)
    density: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        experiment = _get(data, "experiment", "")
        if experiment not in EXPERIMENTS:
            raise ConfigError("experiment",
                              f"must be one of {', '.join(EXPERIMENTS)}")
        seed = _integer(_get(data, "seed", ""), "seed", lo=0)
        grid = build_grid(_get(data, "grid", ""))
        kernel = build_kernel_spec(_get(data, "kernel", ""), grid.T)
        dim = _integer(data.get("dim", 1), "dim", lo=1)
        x0 = np.broadcast_to(np.asarray(data.get("x0", 0.0), dtype=float),
                             (dim,)).astype(float)
        n_paths = _integer(data.get("n_paths", 0), "n_paths", lo=0)
        scheme = data.get("scheme", "exact")
        if scheme not in ("exact", "kernel_discretized"):
            raise ConfigError("scheme", "must be exact or kernel_discretized")
        t_eval = _number(data.get("t", grid.T), "t", lo=0.0, strict_lo=True,
                         hi=grid.T)
        emit = data.get("emit", {})
        threads = _integer(data.get("threads", 1), "threads", lo=1)
        cfg = cls(
            raw=data,
            experiment=experiment,
            seed=seed,
            grid=grid,
            kernel=kernel,
            dim=dim,
            x0=x0,
            n_paths=n_paths,
            scheme=scheme,
            t_eval=t_eval,
            output_dir=str(data.get("output_dir", "out")),
            emit_csv=bool(emit.get("csv", True)),
            emit_json=bool(emit.get("json", True)),
            threads=threads,
            drift_cfg=data.get("drift"),
            v_process_cfg=data.get("v_process"),
            test_function_cfg=data.get("test_function"),
            sweep=data.get("sweep", {}),
            density=data.get("density", {}),
        )
        cfg.validate_for_experiment()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path),
                              f"JSON parse error at line {exc.lineno}, "
                              f"column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data)

    def validate_for_experiment(self) -> None:
        need_paths = self.experiment in ("simulate", "solve", "pe_ae_sweep",
                                         "density_verify")
        if need_paths and self.n_paths < 1:
            raise ConfigError("n_paths", "must be positive for this experiment")
        if self.experiment in ("solve", "pe_ae_sweep", "density_verify"):
            if self.drift_cfg is None:
                raise ConfigError("drift", "missing required field")
            self.drift()
        if self.experiment == "pe_ae_sweep":
            if self.test_function_cfg is None:
                raise ConfigError("test_function", "missing required field")
            self.test_function()
            self.sweep_grids()
        if self.experiment == "density_verify" and self.dim != 1:
            raise ConfigError("dim", "density verification is one-dimensional")
        if self.v_process_cfg is not None:
            self.v_process()

    # -- lazily built objects ------------------------------------------------

    def drift(self):
        if self.v_process_cfg is not None:
            return build_path_drift(self.drift_cfg, self.dim)
        return build_drift(self.drift_cfg, self.dim, self.grid.T)

    def v_process(self) -> VProcessSpec | None:
        if self.v_process_cfg is None:
            return None
        beta = _number(_get(self.drift_cfg, "beta", "drift"), "drift.beta",
                       lo=0.0, hi=1.0, strict_lo=True)
        hurst = self.kernel.hurst
        return build_v_process(self.v_process_cfg, beta, hurst)

    def test_function(self) -> TestFunctionSpec:
        return build_test_function(self.test_function_cfg)

    def sweep_grids(self) -> dict:
        path = "sweep"
        m_values = self.sweep.get("m_values", [1])
        if not isinstance(m_values, list) or not m_values:
            raise ConfigError(f"{path}.m_values", "expected a nonempty list")
        m_values = [_integer(m, f"{path}.m_values[{i}]", lo=1)
                    for i, m in enumerate(m_values)]
        h_grid = _grid_values(_get(self.sweep, "h_grid", path), f"{path}.h_grid")
        eps_grid = _grid_values(_get(self.sweep, "eps_grid", path),
                                f"{path}.eps_grid")
        eps_for_pe = _number(self.sweep.get("eps_for_pe", eps_grid[-1]),
                             f"{path}.eps_for_pe", lo=0.0, strict_lo=True)
        h_for_ae = _number(self.sweep.get("h_for_ae", h_grid[-1]),
                           f"{path}.h_for_ae", lo=0.0, strict_lo=True)
        alpha = _number(self.sweep.get("alpha", 0.9), f"{path}.alpha", lo=0.0,
                        hi=1.0, strict_lo=True, strict_hi=True)
        return {"m_values": m_values, "h_grid": h_grid, "eps_grid": eps_grid,
                "eps_for_pe": eps_for_pe, "h_for_ae": h_for_ae, "alpha": alpha}
