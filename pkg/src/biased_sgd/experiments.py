"""Experiment execution behind the CLI: run, sweep, tune, verify, budget."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import estimators, theory
from .compressors import (Compressor, UnsupportedCompositionError,
                          compressed_oracle, rand_k_compressor,
                          rand_k_unbiased_compressor, scale_compressor,
                          top_k_compressor)
from .config import ConfigError, ExperimentConfig, parse_config
from .oracles import (BiasedOracle, additive_bias_oracle, exact_oracle,
                      gaussian_noise_oracle, gaussian_smoothing_oracle,
                      huber_shifted_oracle, inexact_oracle, tightness_oracle,
                      uniform_direction)
from .optimizer import RepeatedRuns, StepSchedule, sgd_run_repeated
from .problems import Problem, make_huber_problem, make_nesterov_worst, scaled_x0
from .svgplot import line_plot, panel_grid
from .tuning import TuneResult, default_gamma_grid, tune_stepsize

CSV_HEADER = "t,mean_f_gap,se_f_gap,mean_grad_norm_sq,se_grad_norm_sq"


def build_problem(cfg: ExperimentConfig) -> Problem:
    if cfg.problem.kind == "huber":
        return make_huber_problem()
    return make_nesterov_worst(cfg.problem.dim)


def _build_compressor(cfg: ExperimentConfig, dim: int) -> Optional[Compressor]:
    o = cfg.oracle
    if o.compressor == "none":
        return None
    if o.compressor == "top_k":
        return top_k_compressor(o.k, dim)
    if o.compressor == "rand_k":
        return rand_k_compressor(o.k, dim)
    if o.compressor == "rand_k_unbiased":
        return rand_k_unbiased_compressor(o.k, dim)
    return scale_compressor(o.delta, dim)


def build_oracle(cfg: ExperimentConfig, p: Problem,
                 estimate_missing_bounds: bool = True) -> tuple:
    """Construct the configured oracle chain: base -> +noise -> +bias -> compress.

    Returns (oracle, bounds_source) where bounds_source is "derived",
    "estimated" (compressor composition fitted empirically), or "unavailable".
    """
    spec = cfg.oracle
    if spec.kind == "huber_shifted":
        _, base = huber_shifted_oracle()
    elif spec.kind == "gaussian_smoothing":
        base = gaussian_smoothing_oracle(p, spec.tau)
    elif spec.kind == "tightness":
        b = np.sqrt(spec.zeta_sq) * uniform_direction(p.dim)
        base = tightness_oracle(p, spec.m, spec.zeta_sq, b)
    elif spec.kind == "inexact":
        base = inexact_oracle(p, spec.delta, noise_sigma_sq=spec.noise_sigma_sq)
    else:
        base = exact_oracle(p)

    o = base
    if spec.kind not in ("inexact",) and spec.noise_sigma_sq > 0:
        o = gaussian_noise_oracle(p, spec.noise_sigma_sq, inner=o)
    if spec.bias_zeta != 0.0:
        o = additive_bias_oracle(o, spec.bias_zeta, uniform_direction(p.dim))

    comp = _build_compressor(cfg, p.dim)
    if comp is None:
        return o, "derived"
    try:
        return compressed_oracle(comp, o, p, bounds_mode="derived"), "derived"
    except UnsupportedCompositionError:
        if not estimate_missing_bounds:
            # query stream only (tuning); the placeholder bounds are not used
            return compressed_oracle(comp, o, p, bounds_mode="query_only"), \
                "unavailable"
        return compressed_oracle(comp, o, p, bounds_mode="estimated",
                                 estimate_seed=cfg.run.seed), "estimated"


def _x0(cfg: ExperimentConfig, p: Problem) -> np.ndarray:
    if cfg.problem.kind == "huber":
        return p.default_x0
    return scaled_x0(p, cfg.run.x0_gap)


def _resolved_stepsize(cfg: ExperimentConfig, p: Problem,
                       o: BiasedOracle) -> float:
    r = cfg.run
    if r.stepsize_policy == "fixed":
        return r.stepsize
    if r.stepsize_policy == "theory_smooth":
        return theory.smooth_stepsize(r.policy_eps, p.smoothness_L, o.bounds)
    if p.pl_mu is None:
        raise ConfigError("stepsize_policy=theory_pl needs a problem with a PL constant")
    return theory.pl_stepsize(r.policy_eps, p.smoothness_L, p.pl_mu, o.bounds)


def write_trace_csv(path: str, agg: RepeatedRuns) -> None:
    lines = [CSV_HEADER]
    for i in range(len(agg.t)):
        lines.append(f"{int(agg.t[i])},{float(agg.mean_f_gap[i])!r},"
                     f"{float(agg.se_f_gap[i])!r},"
                     f"{float(agg.mean_grad_norm_sq[i])!r},"
                     f"{float(agg.se_grad_norm_sq[i])!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_kv(path: str, pairs: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, val in pairs.items():
            fh.write(f"{key} = {val}\n")


@dataclass
class RunOutput:
    config: ExperimentConfig
    agg: RepeatedRuns
    summary: dict


def run_experiment(cfg: ExperimentConfig,
                   out_dir: Optional[str] = None) -> RunOutput:
    """Execute one repeated run; optionally write trace.csv and summary.txt."""
    p = build_problem(cfg)
    o, bounds_source = build_oracle(cfg, p)
    gamma = _resolved_stepsize(cfg, p, o)
    sched = StepSchedule.constant(gamma)
    agg = sgd_run_repeated(p, o, sched, cfg.run.T, cfg.run.reps, cfg.run.seed,
                           x0=_x0(cfg, p))

    b = o.bounds
    cap = theory.stepsize_cap(p.smoothness_L, b)
    floor = ""
    if p.pl_mu is not None and bounds_source != "unavailable" and gamma <= cap * (1 + 1e-9):
        floor = repr(theory.error_floor(gamma, p.smoothness_L, p.pl_mu, b))
    psi = float(np.mean(agg.mean_grad_norm_sq[:-1])) \
        if len(agg.t) > 1 else float(agg.mean_grad_norm_sq[0])

    summary = {
        "fingerprint": cfg.fingerprint(),
        "problem": p.name,
        "oracle": o.name,
        "bounds_source": bounds_source,
        "bounds_m": repr(b.m), "bounds_zeta_sq": repr(b.zeta_sq),
        "bounds_M": repr(b.M), "bounds_sigma_sq": repr(b.sigma_sq),
        "stepsize": repr(gamma),
        "T": cfg.run.T, "reps": cfg.run.reps, "seed": cfg.run.seed,
        "final_mean_f_gap": repr(float(agg.mean_f_gap[-1])),
        "final_se_f_gap": repr(float(agg.se_f_gap[-1])),
        "tail_mean_f_gap": repr(agg.tail_mean_f_gap()),
        "psi": repr(psi),
        "predicted_floor": floor if floor else "-",
        "diverged": "true" if agg.any_diverged else "false",
        "diverged_reps": len(agg.diverged_reps),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_trace_csv(os.path.join(out_dir, "trace.csv"), agg)
        write_kv(os.path.join(out_dir, "summary.txt"), summary)
        with open(os.path.join(out_dir, "config.cfg"), "w", encoding="utf-8") as fh:
            fh.write(cfg.canonical())
    return RunOutput(config=cfg, agg=agg, summary=summary)


def expand_cells(cfg: ExperimentConfig) -> list:
    """Cartesian product of the sweep axes as (label, overrides) pairs."""
    if cfg.sweep is None or not cfg.sweep.axes:
        raise ConfigError("sweep requires a [sweep] section with at least one axis")
    keys = [k for k, _ in cfg.sweep.axes]
    values = [v for _, v in cfg.sweep.axes]
    cells = []
    for combo in itertools.product(*values):
        overrides = dict(zip(keys, combo))
        label = "_".join(f"{k}={_label_value(v)}" for k, v in overrides.items())
        cells.append((label, overrides))
    return cells


def _label_value(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _cell_config(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    sub = replace(cfg, sweep=None, tune=None)
    ov = dict(overrides)
    if "stepsize" in ov:
        sub = sub.with_overrides(stepsize=ov.pop("stepsize"))
    return sub.with_overrides(**ov)


def _run_cell(args) -> tuple:
    text, overrides, cell_dir = args
    cfg = _cell_config(parse_config(text), overrides)
    out = run_experiment(cfg, out_dir=cell_dir)
    return overrides, out.summary, out.agg.t, out.agg.mean_f_gap


@dataclass
class SweepOutput:
    cells: list  # dicts: label, overrides, summary, curve (t, mean_f_gap)
    panels: list  # (panel_title, [series labels])
    out_dir: str


def _panel_keys(cfg: ExperimentConfig) -> tuple:
    s = cfg.sweep
    panel = [k.strip() for k in s.panel_by.split(",") if k.strip()] if s.panel_by else []
    series = s.series_by.strip() if s.series_by else ""
    return panel, series


def _series_label(series_key: str, overrides: dict, label: str) -> str:
    if series_key and series_key in overrides:
        return f"{series_key}={_label_value(overrides[series_key])}"
    return label


def _panel_title(panel_keys: list, overrides: dict) -> str:
    if not panel_keys:
        return "sweep"
    return ", ".join(f"{k}={_label_value(overrides[k])}"
                     for k in panel_keys if k in overrides)


def sweep_experiment(cfg: ExperimentConfig, out_dir: str,
                     workers: int = 1) -> SweepOutput:
    """Run every sweep cell, then write per-cell CSVs, figure.svg, manifest.txt.

    A failing cell is recorded in the manifest and does not abort the sweep.
    """
    cells = expand_cells(cfg)
    os.makedirs(out_dir, exist_ok=True)
    text = cfg.canonical()
    tasks = [(text, ov, os.path.join(out_dir, "cells", label))
             for label, ov in cells]

    results = {}
    failures = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (label, _), res in zip(cells, pool.map(_run_cell, tasks)):
                results[label] = res
    else:
        for (label, _), task in zip(cells, tasks):
            try:
                results[label] = _run_cell(task)
            except Exception as exc:  # cell failures are data, not fatal
                failures[label] = str(exc)

    panel_keys, series_key = _panel_keys(cfg)
    panels: dict = {}
    records = []
    target = cfg.tune.target_eps if cfg.tune is not None else None
    for label, overrides in cells:
        if label in failures:
            records.append({"label": label, "error": failures[label]})
            continue
        _, summary, t, gap = results[label]
        title = _panel_title(panel_keys, overrides)
        series = _series_label(series_key, overrides, label)
        panels.setdefault(title, []).append((series, t, gap))
        reach = "-"
        if target is not None:
            hit = np.nonzero(gap <= target)[0]
            reach = str(int(t[hit[0]])) if hit.size else "did-not-reach"
        records.append({"label": label, "overrides": overrides,
                        "summary": summary, "panel": title, "series": series,
                        "reach_t": reach})

    panel_list = [(title, series) for title, series in panels.items()]
    svg = panel_grid(panel_list, columns=min(2, max(1, len(panel_list))),
                     xlabel="iteration t", ylabel="f(x_t) - f*")
    with open(os.path.join(out_dir, "figure.svg"), "w", encoding="utf-8") as fh:
        fh.write(svg)

    lines = [f"# sweep manifest  fingerprint={cfg.fingerprint()}"]
    for rec in records:
        if "error" in rec:
            lines.append(f"cell={rec['label']} status=failed error={rec['error']}")
            continue
        s = rec["summary"]
        lines.append(
            f"cell={rec['label']} panel={rec['panel']!r} series={rec['series']!r} "
            f"csv=cells/{rec['label']}/trace.csv fingerprint={s['fingerprint']} "
            f"floor_estimate={s['tail_mean_f_gap']} predicted_floor={s['predicted_floor']} "
            f"iterations_to_target={rec['reach_t']} diverged={s['diverged']}")
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    write_kv(os.path.join(out_dir, "sweep_summary.txt"),
             {"fingerprint": cfg.fingerprint(), "cells": len(cells),
              "failed": len(failures)})
    return SweepOutput(cells=records,
                       panels=[(t, [s[0] for s in ss]) for t, ss in panels.items()],
                       out_dir=out_dir)


def _tune_cell(args) -> tuple:
    text, overrides = args
    full = parse_config(text)
    tune = full.tune
    cfg = _cell_config(full, overrides)
    p = build_problem(cfg)
    o, _ = build_oracle(cfg, p, estimate_missing_bounds=False)
    grid = list(tune.grid) if tune.grid else default_gamma_grid(p.smoothness_L)
    res = tune_stepsize(p, o, tune.target_eps, grid=grid, reps=tune.reps,
                        max_T=tune.max_T, seed=cfg.run.seed, x0=_x0(cfg, p))
    return overrides, res


@dataclass
class TuneOutput:
    cells: list  # dicts: label, overrides, result (TuneResult)
    out_dir: str

    def result_for(self, **match) -> Optional[TuneResult]:
        for rec in self.cells:
            if all(rec["overrides"].get(k) == v for k, v in match.items()):
                return rec["result"]
        return None


def tune_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None,
                    workers: int = 1, race_plot: bool = True) -> TuneOutput:
    """Grid-tune the stepsize for each sweep cell (or the single configuration).

    Writes tune.csv (one row per cell and grid stepsize), tune_summary.txt
    (best stepsize and iterations-to-target per cell), and a race figure
    re-run at each cell's best stepsize.
    """
    if cfg.tune is None:
        raise ConfigError("tune requires a [tune] section")
    base_cells = expand_cells(cfg) if cfg.sweep is not None else [("all", {})]
    text = cfg.canonical()
    tasks = [(text, ov) for _, ov in base_cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_tune_cell, tasks))
    else:
        outs = [_tune_cell(t) for t in tasks]

    cells = [{"label": label, "overrides": ov, "result": res}
             for (label, ov), (_, res) in zip(base_cells, outs)]
    if out_dir is None:
        return TuneOutput(cells=cells, out_dir="")

    os.makedirs(out_dir, exist_ok=True)
    rows = ["cell,gamma,reached,iterations,best_gap,diverged,censored_at"]
    summary_lines = [f"# tune summary  fingerprint={cfg.fingerprint()} "
                     f"target_eps={cfg.tune.target_eps!r} max_T={cfg.tune.max_T}"]
    for rec in cells:
        res: TuneResult = rec["result"]
        for e in res.entries:
            rows.append(f"{rec['label']},{e.gamma!r},{int(e.reached)},"
                        f"{e.iterations if e.reached else ''},{e.best_gap!r},"
                        f"{int(e.diverged)},"
                        f"{e.censored_at if e.censored_at is not None else ''}")
        best = res.best
        if best is not None:
            summary_lines.append(f"cell={rec['label']} best_gamma={best.gamma!r} "
                                 f"iterations={best.iterations}")
        else:
            summary_lines.append(f"cell={rec['label']} best_gamma=did-not-reach "
                                 f"best_gap={res.best_gap!r}")
    with open(os.path.join(out_dir, "tune.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
    with open(os.path.join(out_dir, "tune_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary_lines) + "\n")

    if race_plot:
        _write_race_plot(cfg, cells, out_dir)
    return TuneOutput(cells=cells, out_dir=out_dir)


def _write_race_plot(cfg: ExperimentConfig, cells: list, out_dir: str) -> None:
    panel_keys, series_key = _panel_keys(cfg)
    panels: dict = {}
    for rec in cells:
        res: TuneResult = rec["result"]
        best = res.best
        if best is not None:
            gamma, T = best.gamma, max(best.iterations, 10)
        else:
            viable = [e for e in res.entries if not e.diverged]
            if not viable:
                continue
            gamma = min(viable, key=lambda e: e.best_gap).gamma
            T = min(res.max_T, 200_000)
        sub = _cell_config(cfg, rec["overrides"]).with_overrides(
            stepsize=gamma, T=int(T), reps=min(cfg.tune.reps, 5))
        out = run_experiment(sub)
        title = _panel_title(panel_keys, rec["overrides"])
        series = _series_label(series_key, rec["overrides"], rec["label"])
        panels.setdefault(title, []).append(
            (f"{series} (g={gamma:g})", out.agg.t, out.agg.mean_f_gap))
    if panels:
        svg = panel_grid(list(panels.items()), columns=min(2, len(panels)),
                         xlabel="iteration t", ylabel="f(x_t) - f*")
        with open(os.path.join(out_dir, "race.svg"), "w", encoding="utf-8") as fh:
            fh.write(svg)


TABLE1_SPECS = (
    ("top_k", dict(compressor="top_k", k=1)),
    ("rand_k", dict(compressor="rand_k", k=1)),
    ("rand_k_stochastic", dict(compressor="rand_k", k=1, noise_sigma_sq=1.0)),
    ("gaussian_smoothing_d2_tau0.1", dict(kind="gaussian_smoothing", tau=0.1), 2),
    ("gaussian_smoothing_d2_tau0.01", dict(kind="gaussian_smoothing", tau=0.01), 2),
    ("gaussian_smoothing_d5_tau0.1", dict(kind="gaussian_smoothing", tau=0.1), 5),
    ("gaussian_smoothing_d5_tau0.01", dict(kind="gaussian_smoothing", tau=0.01), 5),
    ("inexact_oracle", dict(kind="inexact", delta=0.1)),
    ("stochastic_inexact_oracle", dict(kind="inexact", delta=0.1, noise_sigma_sq=1.0)),
    ("delta_compressor", dict(compressor="scale", delta=0.36)),
)


def table1_oracles(dim: int = 10) -> list:
    """(row name, problem, oracle) for every implemented special-case row."""
    rows = []
    for spec in TABLE1_SPECS:
        name, overrides = spec[0], dict(spec[1])
        d = spec[2] if len(spec) > 2 else dim
        cfg = ExperimentConfig().with_overrides(**overrides)
        cfg = replace(cfg, problem=replace(cfg.problem, dim=d))
        p = build_problem(cfg)
        o, _ = build_oracle(cfg, p)
        rows.append((name, p, o))
    return rows


def verify_experiment(cfg: Optional[ExperimentConfig], out_dir: Optional[str],
                      samples: int = 100_000, n_points: int = 20,
                      seed: int = 0) -> list:
    """verify_declared for the configured oracle, or all special-case rows.

    Returns the reports and writes a markdown table mirroring the declared
    vs fitted parameters.
    """
    if cfg is not None:
        p = build_problem(cfg)
        o, _ = build_oracle(cfg, p)
        rows = [(o.name, p, o)]
        seed = cfg.run.seed
    else:
        rows = table1_oracles()

    reports = []
    for name, p, o in rows:
        rep = estimators.verify_declared(o, p, n_points=n_points,
                                         samples=samples, seed=seed)
        reports.append((name, rep))

    lines = ["| oracle | m | zeta^2 | M | sigma^2 | m_hat | zeta^2_hat | M_hat "
             "| sigma^2_hat | bias | noise |",
             "|---|---|---|---|---|---|---|---|---|---|---|"]
    for name, rep in reports:
        d, f = rep.declared, rep.fitted
        fb = f.bounds
        def v(verdict):
            return verdict.verdict if verdict.ok else \
                f"violated(margin={verdict.margin:.3g})"
        lines.append(
            f"| {name} | {d.m:g} | {d.zeta_sq:.6g} | {d.M:g} | {d.sigma_sq:.6g} "
            f"| {fb.m:.4g} | {fb.zeta_sq:.4g} | {fb.M:.4g} | {fb.sigma_sq:.4g} "
            f"| {v(rep.bias)} | {v(rep.noise)} |")
    table = "\n".join(lines) + "\n"
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "verify.md"), "w", encoding="utf-8") as fh:
            fh.write(table)
    return reports, table


def budget_report(cfg: ExperimentConfig, eps: float) -> str:
    """Printed stepsize / iteration / floor predictions for both regimes."""
    p = build_problem(cfg)
    o, source = build_oracle(cfg, p)
    b = o.bounds
    F0 = cfg.run.x0_gap if cfg.problem.kind != "huber" else p.gap(p.default_x0)
    lines = [f"problem: {p.name} (L={p.smoothness_L:.6g}"
             + (f", mu={p.pl_mu:.6g}" if p.pl_mu else "") + ")",
             f"oracle: {o.name} [{source}] bounds: m={b.m:g} zeta_sq={b.zeta_sq:.6g} "
             f"M={b.M:g} sigma_sq={b.sigma_sq:.6g}",
             f"target eps: {eps:g}, F0: {F0:g}", ""]
    sp = theory.smooth_prediction(eps, p.smoothness_L, F0, b)
    lines += ["smooth regime (measure: avg ||grad f||^2):",
              f"  stepsize = {sp.stepsize:.6g} (headline variant "
              f"{theory.smooth_stepsize(eps, p.smoothness_L, b):.6g})",
              f"  iterations = {sp.iterations}",
              f"  floor = {sp.floor:.6g}"]
    if p.pl_mu is not None:
        pp = theory.pl_prediction(eps, p.smoothness_L, p.pl_mu, F0, b)
        lines += ["PL regime (measure: final f-gap):",
                  f"  stepsize = {pp.stepsize:.6g} (headline variant "
                  f"{theory.pl_stepsize(eps, p.smoothness_L, p.pl_mu, b):.6g})",
                  f"  iterations = {pp.iterations}",
                  f"  floor = {pp.floor:.6g}"]
    else:
        lines += ["PL regime: not applicable (no PL constant)"]
    return "\n".join(lines) + "\n"
