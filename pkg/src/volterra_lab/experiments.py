"""Experiment orchestration: wiring kernels, paths, solver, and analyses.

Each runner takes a validated ExperimentConfig and returns a JSON-ready dict;
the CLI adds timing and version metadata around it.  All Monte Carlo work
streams over fixed-size path blocks keyed by (seed, path index, component),
so results are identical for any worker count and any chunking.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import besov as bz
from . import io as vio
from . import kernels as kn
from . import paths as pt
from . import sde
from . import smoothing as sm
from .config import ExperimentConfig
from .errors import DomainError

DENSITY_CHUNK = 32768


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return str(obj)
    return obj


def _fit_dict(fit: kn.ConditionFit) -> dict:
    return {"exponent_estimate": fit.exponent_estimate, "slope": fit.slope,
            "intercept": fit.intercept, "r_squared": fit.r_squared,
            "grid": fit.grid}


def _slope_dict(fit: sm.SlopeFit) -> dict:
    return {"slope": fit.slope, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "slope_ci": list(fit.slope_ci),
            "n_used": fit.n_used,
            "excluded": [[x, v, s] for x, v, s in fit.excluded]}


def build_noise(cfg: ExperimentConfig, n_paths: int | None = None,
                path_offset: int = 0) -> pt.PathEnsemble:
    n = cfg.n_paths if n_paths is None else n_paths
    sampler = (pt.exact_sample if cfg.scheme == "exact"
               else pt.kernel_discretized_sample)
    return sampler(cfg.kernel, cfg.grid, cfg.dim, n, cfg.seed,
                   n_workers=cfg.threads, path_offset=path_offset)


def solve_paths(cfg: ExperimentConfig, noise: pt.PathEnsemble) -> sde.SolutionEnsemble:
    drift = cfg.drift()
    vspec = cfg.v_process()
    if vspec is not None:
        return sde.path_dependent_solve(drift, vspec, noise, cfg.x0)
    return sde.euler_solve(drift, noise, cfg.x0)


# ---------------------------------------------------------------------------
# check-conditions
# ---------------------------------------------------------------------------

def _default_cc1_grid(spec: kn.KernelSpec, t: float):
    if spec.family == "ornstein_uhlenbeck":
        return np.geomspace(1e-5, 1e-3, 12)
    return np.geomspace(1e-4 * t, 1e-2 * t, 12)


def run_check_conditions(cfg: ExperimentConfig) -> dict:
    spec = cfg.kernel
    t = cfg.t_eval
    conditions = cfg.raw.get("conditions", {})
    eps_grid = np.asarray(conditions.get("cc1_eps_grid",
                                         _default_cc1_grid(spec, t)), dtype=float)
    cc1 = kn.fit_condition_cc1(spec, t, eps_grid)
    base = conditions.get("cc2_base_time", t / 2.0)
    gaps = np.asarray(conditions.get("cc2_gaps",
                                     np.geomspace(1e-4 * spec.T, 1e-2 * spec.T, 12)),
                      dtype=float)
    pairs = [(base, base + g) for g in gaps]
    cc2 = kn.fit_condition_cc2(spec, pairs)
    out = {
        "cc1": _fit_dict(cc1),
        "cc2": _fit_dict(cc2),
        "expected_A": kn.theoretical_cc1_exponent(spec),
        "expected_H": kn.theoretical_cc2_exponent(spec),
    }
    if cfg.n_paths >= 2:
        ens = build_noise(cfg)
        n = cfg.grid.n_steps
        ks = np.unique(np.round(np.geomspace(1, n // 2, 10)).astype(int))
        pairs_idx = [(n // 2, n // 2 + k) for k in ks]
        out["cc2_monte_carlo"] = _fit_dict(pt.mc_increment_fit(ens, pairs_idx))
    return out


# ---------------------------------------------------------------------------
# simulate / solve
# ---------------------------------------------------------------------------

def _terminal_summary(values: np.ndarray) -> dict:
    terminal = values[:, -1, :]
    return {"terminal_mean": float(terminal.mean()),
            "terminal_variance": float(terminal.var(ddof=1)) if terminal.size > 1 else 0.0}


def run_simulate(cfg: ExperimentConfig, out_dir: Path) -> dict:
    ens = build_noise(cfg)
    result = {"n_paths": ens.n_paths, "scheme": ens.scheme}
    result.update(_terminal_summary(ens.values))
    if cfg.emit_json:
        vio.save_ensemble(ens, out_dir / "ensemble", cfg.kernel)
        result["ensemble_file"] = str(out_dir / "ensemble.vlt")
    if cfg.emit_csv:
        vio.export_paths_csv(ens, out_dir / "paths.csv")
        result["paths_csv"] = str(out_dir / "paths.csv")
    return result


def run_solve(cfg: ExperimentConfig, out_dir: Path) -> dict:
    noise = build_noise(cfg)
    solution = solve_paths(cfg, noise)
    result = {"n_paths": noise.n_paths, "x0": cfg.x0.tolist()}
    result.update(_terminal_summary(solution.values))
    if cfg.emit_json:
        vio.save_solution(solution, out_dir / "solution", cfg.kernel,
                          cfg.drift_cfg)
        result["solution_file"] = str(out_dir / "solution.vlt")
    return result


# ---------------------------------------------------------------------------
# pe-ae-sweep
# ---------------------------------------------------------------------------

def run_pe_ae_sweep(cfg: ExperimentConfig, out_dir: Path | None = None) -> dict:
    grids = cfg.sweep_grids()
    phi = cfg.test_function()
    drift = cfg.drift()
    vspec = cfg.v_process()
    noise = build_noise(cfg)
    if vspec is not None:
        solution = sde.path_dependent_solve(drift, vspec, noise, cfg.x0)
    else:
        solution = sde.euler_solve(drift, noise, cfg.x0)
    t = cfg.t_eval
    A = kn.theoretical_cc1_exponent(cfg.kernel)
    H = kn.theoretical_cc2_exponent(cfg.kernel)
    beta = drift.beta
    alpha = grids["alpha"]
    delta = vspec.delta if vspec is not None else None
    mu = min(beta * H, delta) if delta is not None else beta * H
    ae_exponent = (mu + 1.0) * alpha

    def snap(eps):
        k = min(max(int(round(eps / cfg.grid.dt)), 1), cfg.grid.node_index(t))
        return k * cfg.grid.dt

    reports = []
    for m in grids["m_values"]:
        pe_rows, pe_fit = sm.pe_h_sweep(solution, t, snap(grids["eps_for_pe"]),
                                        phi, grids["h_grid"], m, A)
        ae_rows, ae_fit = sm.ae_eps_sweep(solution, t,
                                          [snap(e) for e in grids["eps_grid"]],
                                          phi, grids["h_for_ae"], m,
                                          exponent_bound=ae_exponent)
        exps = sm.theorem_exponents(A, beta, H, delta=delta, m=m, alpha=alpha)
        comb_rows, comb_fit, rule = sm.combined_rule_sweep(
            solution, t, phi, grids["h_grid"], m, exps)
        report = sm.SmoothingReport(
            m=m, h_grid=grids["h_grid"], eps_grid=grids["eps_grid"],
            pe_rows=pe_rows, ae_rows=ae_rows, pe_slope_in_h=pe_fit,
            ae_slope_in_eps=ae_fit, combined_rows=comb_rows,
            combined_slope=comb_fit, chosen_eps_rule=rule)
        reports.append(report)

    result = {
        "reports": [r.to_dict() for r in reports],
        "theoretical": {
            "A": A, "H": H, "beta": beta, "alpha": alpha, "delta": delta,
            "pe_h_exponent": {str(m): float(m) for m in grids["m_values"]},
            "ae_eps_exponent": ae_exponent,
        },
    }
    if out_dir is not None and cfg.emit_csv:
        rows = []
        for r in reports:
            rows.extend(r.csv_rows())
        vio.write_csv(out_dir / "sweep.csv",
                      ["h", "eps", "m", "estimate", "std_error", "bound_value"],
                      rows)
        result["sweep_csv"] = str(out_dir / "sweep.csv")
    return result


# ---------------------------------------------------------------------------
# density-verify
# ---------------------------------------------------------------------------

def terminal_samples(cfg: ExperimentConfig) -> np.ndarray:
    """X_t samples at the evaluation node, streamed over path chunks."""
    if cfg.dim != 1:
        raise DomainError("density verification is one-dimensional")
    it = cfg.grid.node_index(cfg.t_eval)
    out = np.empty(cfg.n_paths)
    for start in range(0, cfg.n_paths, DENSITY_CHUNK):
        stop = min(start + DENSITY_CHUNK, cfg.n_paths)
        noise = build_noise(cfg, n_paths=stop - start, path_offset=start)
        solution = solve_paths(cfg, noise)
        out[start:stop] = solution.values[:, it, 0]
    return out


def run_density_verify(cfg: ExperimentConfig, out_dir: Path | None = None) -> dict:
    samples = terminal_samples(cfg)
    dcfg = cfg.density
    m = int(dcfg.get("diff_order", 2))
    spread = float(samples.max() - samples.min())
    std = float(samples.std())
    bins = int(dcfg.get("bins", np.clip(round(spread / (0.08 * std)), 24, 400)))
    estimate = bz.estimate_density(samples, "histogram", bins)
    drift = cfg.drift()
    A = kn.theoretical_cc1_exponent(cfg.kernel)
    H = kn.theoretical_cc2_exponent(cfg.kernel)
    vspec = cfg.v_process()
    delta = vspec.delta if vspec is not None else None
    exps = sm.theorem_exponents(A, drift.beta, H, delta=delta)
    eta = exps.eta_t2 if delta is not None else exps.eta_t1
    exponent_fit = bz.besov_exponent_from_samples(samples, m)
    lag_grid = bz.default_lag_grid(estimate)
    report = bz.make_besov_report(estimate, m, lag_grid, eta=eta,
                                  exponent_fit=exponent_fit)
    verdict = bz.compare_to_theorem(report, A, drift.beta, H, delta=delta)
    result = {
        "n_samples": int(samples.size),
        "bins": bins,
        "besov_report": report.to_dict(),
        "verdict": {
            "consistent": verdict.consistent,
            "s_hat": verdict.s_hat,
            "eta": verdict.eta,
            "saturated": verdict.saturated,
            "tolerance": verdict.tolerance,
            "detail": verdict.detail,
        },
        "theoretical": {"A": A, "H": H, "beta": drift.beta, "delta": delta,
                        "eta": eta},
    }
    if out_dir is not None and cfg.emit_csv:
        vio.write_csv(out_dir / "lag_profile.csv",
                      ["h", "diff_l1", "h_pow_minus_s_diff_l1"],
                      report.csv_rows())
        result["lag_profile_csv"] = str(out_dir / "lag_profile.csv")
    return result


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir: Path) -> dict:
    if cfg.experiment == "check_conditions":
        return _jsonable(run_check_conditions(cfg))
    if cfg.experiment == "simulate":
        return _jsonable(run_simulate(cfg, out_dir))
    if cfg.experiment == "solve":
        return _jsonable(run_solve(cfg, out_dir))
    if cfg.experiment == "pe_ae_sweep":
        return _jsonable(run_pe_ae_sweep(cfg, out_dir))
    if cfg.experiment == "density_verify":
        return _jsonable(run_density_verify(cfg, out_dir))
    raise DomainError(f"unknown experiment {cfg.experiment!r}")
