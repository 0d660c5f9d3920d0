"""Command-line harness for seeded, reproducible experiments.

Subcommands map to experiment kinds; every run reads one configuration
file, optionally overridden by flags, writes tabular/JSON outputs into the
output directory, and seals a manifest with checksums of everything it
wrote.

Exit codes: 2 configuration errors, 3 simulation errors, 4 I/O errors.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import (
    build_or_load_table,
    calibration_experiment,
    density_experiment,
    moments_experiment,
    response_experiment_from_config,
)
from .micro import ParameterEscapeError
from .params import ConfigurationError, save_params_csv
from .reduction import FactorizationError, GridCoverageError
from .response import InsufficientDataError
from .runio import ManifestWriter, write_csv, write_json

_SIM_ERRORS = (ParameterEscapeError, FactorizationError, GridCoverageError,
               InsufficientDataError, ConfigurationError, ValueError)


def _load(config_path, expected_kinds, seed, out, threads) -> ExperimentConfig:
    cfg = load_config(config_path)
    if cfg.kind not in expected_kinds:
        raise ConfigError(
            f"config kind {cfg.kind!r} does not match this subcommand "
            f"(expected one of {expected_kinds})")
    if seed is not None:
        cfg.seed = seed
        cfg.echo.setdefault("experiment", {})["seed"] = str(seed)
    if out is not None:
        cfg.out_dir = out
        cfg.echo.setdefault("experiment", {})["out_dir"] = out
    if threads is not None:
        cfg.threads = threads
    return cfg


def _run(cfg: ExperimentConfig, body) -> None:
    """Shared harness: make the output directory, run, seal the manifest."""
    try:
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = ManifestWriter(out_dir, cfg.kind, cfg.seed, cfg.echo, __version__)
        body(out_dir, manifest)
        manifest.seal()
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    except _SIM_ERRORS as exc:
        click.echo(f"simulation error: {exc}", err=True)
        sys.exit(3)
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(4)


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="experiment configuration file")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="override the master seed")(fn)
    fn = click.option("--out", type=click.Path(), default=None,
                      help="override the output directory")(fn)
    fn = click.option("--threads", type=int, default=None,
                      help="worker threads for ensemble simulations")(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="chaosbath")
def main():
    """Seeded experiments on weakly coupled chaotic ensembles."""


@main.command()
@_common_options
def reduce(config_path, seed, out, threads):
    """Build (or verify) the reduction-table cache."""
    try:
        cfg = _load(config_path, ("reduction_build",), seed, out, threads)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)

    def body(out_dir, manifest):
        def progress(done, total):
            click.echo(f"  tabulated {done}/{total} chaotic parameters", err=True)
        tab, state = build_or_load_table(cfg, progress=progress)
        manifest.cache_state = state
        summary = {
            "grid_points": int(tab.alphas.size),
            "grid_min": float(tab.alphas[0]),
            "grid_max": float(tab.alphas[-1]),
            "n_lags": int(tab.n_lags),
            "regular_parameters": int((tab.period > 0).sum()),
            "cache": state,
            "cache_dir": str(cfg.table_cache),
        }
        manifest.add(write_json(out_dir / "reduction_summary.json", summary))
        click.echo(f"reduction cache {state}: {cfg.table_cache}")

    _run(cfg, body)


@main.command()
@_common_options
def density(config_path, seed, out, threads):
    """Empirical invariant density of the macroscopic state."""
    try:
        cfg = _load(config_path, ("density",), seed, out, threads)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)

    def body(out_dir, manifest):
        table = None
        sim = cfg.section("simulation")
        if sim["model"] != "full":
            table, manifest.cache_state = build_or_load_table(cfg)
        centers, dens, macro, drive, params = density_experiment(cfg, table)
        manifest.add(write_csv(out_dir / "density.csv",
                               ["bin_center", "density"], [centers, dens]))
        if sim["save_trajectory"]:
            if drive is None:
                drive = np.full(macro.size, np.nan)
            manifest.add(write_csv(out_dir / "trajectory.csv", ["n", "Q", "Z"],
                                   [np.arange(macro.size), macro, drive]))
        if sim["save_params"] and params is not None:
            path = out_dir / "params.csv"
            save_params_csv(path, params[:, 0])
            manifest.add(path)
        click.echo(f"density written to {out_dir / 'density.csv'}")

    _run(cfg, body)


@main.command()
@_common_options
def moments(config_path, seed, out, threads):
    """Centred ensemble moments at a fixed time versus the stochastic limit."""
    try:
        cfg = _load(config_path, ("moments",), seed, out, threads)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)

    def body(out_dir, manifest):
        table, manifest.cache_state = build_or_load_table(cfg)
        rows, mu_limit = moments_experiment(cfg, table)
        cols = list(zip(*[
            (m, *mu, *ratio) for m, mu, ratio in rows]))
        header = (["n_units"] + [f"mu{k}" for k in range(1, 5)]
                  + [f"ratio{k}" for k in range(1, 5)])
        manifest.add(write_csv(out_dir / "moments.csv", header, cols))
        manifest.add(write_json(out_dir / "limit_moments.json",
                                {f"mu{k}": float(mu_limit[k - 1]) for k in range(1, 5)}))
        click.echo(f"moments written to {out_dir / 'moments.csv'}")

    _run(cfg, body)


@main.command()
@_common_options
@click.option("--order", type=int, default=None,
              help="polynomial response order (overrides the config)")
def respond(config_path, seed, out, threads, order):
    """Test polynomial response of the macroscopic time average."""
    try:
        cfg = _load(config_path, ("response", "cubic_response"), seed, out, threads)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)

    def body(out_dir, manifest):
        table = None
        if cfg.section("response")["model"] != "full":
            table, manifest.cache_state = build_or_load_table(cfg)
        exp, result = response_experiment_from_config(cfg, table, order)
        manifest.add(write_csv(
            out_dir / "response.csv",
            ["epsilon", "mean", "stderr", "sigma_ref"],
            [result.dataset.epsilons, result.dataset.means, result.stderrs,
             result.dataset.sigmas]))
        payload = {
            "model": exp.model,
            "chi2": result.test.chi2,
            "dof": result.test.dof,
            "p_value": result.test.p_value,
            "q_hat": result.test.q_hat,
            "coefficients": [float(c) for c in result.fit.coefficients],
            "order": exp.order,
            "n_steps": exp.n_steps,
            "realizations": result.test.realizations,
            "diagnostics": {
                "per_realization_p": [float(p) for p in result.per_realization_p],
                "per_realization_chi2": [float(c) for c in result.per_realization_chi2],
            },
        }
        manifest.add(write_json(out_dir / "test.json", payload))
        click.echo(f"order-{exp.order} response of model {exp.model!r}: "
                   f"p={result.test.p_value:.4g}, q_hat={result.test.q_hat:.4g}")

    _run(cfg, body)


@main.command()
@_common_options
def calibrate(config_path, seed, out, threads):
    """Null calibration of the chi-squared response test."""
    try:
        cfg = _load(config_path, ("null_calibration",), seed, out, threads)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)

    def body(out_dir, manifest):
        got = calibration_experiment(cfg)
        manifest.add(write_json(out_dir / "calibration.json", got))
        click.echo(f"null calibration: ks_p={got['ks_p']:.4g}, "
                   f"type1_rate={got['type1_rate']:.4g}")

    _run(cfg, body)


if __name__ == "__main__":
    main()
