"""Preset sweep/tune configurations for the synthetic experiment figures."""

from __future__ import annotations

from dataclasses import replace

from .config import ExperimentConfig, SweepSpec, TuneSpec

FIGURE_NAMES = ("fig1", "fig2", "fig3", "fig5", "fig6")


def preset(name: str) -> ExperimentConfig:
    """Desk-scale preset: d=10 quadratic, gamma=0.01, T=1e4, 20 repetitions."""
    base = ExperimentConfig()
    if name == "fig1":
        # additive bias zeta x Gaussian noise sigma^2 at fixed stepsize
        return replace(base, sweep=SweepSpec(
            axes=(("noise_sigma_sq", (0.0, 1.0)),
                  ("bias_zeta", (0.0, 0.001, 0.1))),
            panel_by="noise_sigma_sq", series_by="bias_zeta"))
    if name == "fig2":
        return replace(base.with_overrides(compressor="rand_k"),
                       sweep=SweepSpec(
                           axes=(("noise_sigma_sq", (0.0, 1.0, 100.0)),
                                 ("k", (1, 10))),
                           panel_by="noise_sigma_sq", series_by="k"))
    if name == "fig3":
        return replace(base.with_overrides(compressor="top_k"),
                       sweep=SweepSpec(
                           axes=(("noise_sigma_sq", (0.0, 1.0, 100.0)),
                                 ("k", (1, 10))),
                           panel_by="noise_sigma_sq", series_by="k"))
    if name == "fig5":
        return replace(base.with_overrides(kind="gaussian_smoothing"),
                       sweep=SweepSpec(axes=(("tau", (0.1, 0.01)),),
                                       series_by="tau"))
    if name == "fig6":
        # tuned-stepsize race: compression method x noise level x k
        return replace(base,
                       sweep=SweepSpec(
                           axes=(("noise_sigma_sq", (0.0, 1.0, 100.0)),
                                 ("k", (1, 10)),
                                 ("compressor", ("none", "top_k", "rand_k"))),
                           panel_by="noise_sigma_sq,k", series_by="compressor"),
                       tune=TuneSpec(target_eps=5e-4, max_T=1_000_000, reps=3))
    raise ValueError(f"unknown figure {name!r}; choose from {FIGURE_NAMES}")
