"""Experiment recipes behind the command-line harness.

Each function turns a parsed configuration into simulation calls and
returns plain arrays ready for the output writers.  All randomness is
derived from the experiment seed through the package's stream discipline,
so a configuration fully determines every output byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .config import ConfigError, ExperimentConfig
from .micro import (
    ObservableKind,
    SystemSpec,
    centred_moments,
    draw_params,
    empirical_density,
    simulate,
)
from .params import RaisedCosineLaw
from .reduction import (
    lag_covariance,
    mean_over_law,
    sample_eta,
    simulate_deterministic_limit,
    simulate_finite_size,
    simulate_stochastic_limit,
    spectral_factorize,
)
from .response import ResponseExperiment, null_calibration, run_response_experiment
from .rng import TAG_ETA, TAG_MOMENTS, TAG_PARAMS, TAG_TRAJECTORY, stream
from .table import ReductionTable, build_reduction_table, load_table, save_table

_TABLE_OBSERVABLES = (ObservableKind.MEAN_ZERO_QUADRATIC, ObservableKind.SQUARE)


def law_from(cfg: ExperimentConfig) -> RaisedCosineLaw:
    sec = cfg.section("law")
    return RaisedCosineLaw(center=sec["center"], half_width=sec["half_width"])


def system_from(cfg: ExperimentConfig) -> SystemSpec:
    sec = cfg.require("system", "base_param", "coupling_gain", "gamma",
                      "observable", "n_units")
    return SystemSpec(base_param=sec["base_param"],
                      coupling_gain=sec["coupling_gain"],
                      gamma=sec["gamma"],
                      observable=ObservableKind(sec["observable"]),
                      n_units=sec["n_units"])


def build_or_load_table(cfg: ExperimentConfig, progress=None):
    """Load the reduction cache, building and persisting it on a miss.

    A freshly built table is re-read from disk, so downstream numbers are
    identical whether a run hit or created the cache.  Returns
    (table, "hit" | "built").
    """
    if cfg.table_cache is None:
        raise ConfigError("this experiment needs [experiment] table_cache")
    cache = Path(cfg.table_cache)
    red = cfg.section("reduction")
    expected = np.linspace(red["grid_min"], red["grid_max"], red["grid_points"])
    try:
        tab = load_table(cache, observables=_TABLE_OBSERVABLES)
        state = "hit"
    except FileNotFoundError:
        tab = build_reduction_table(
            alphas=expected, observables=_TABLE_OBSERVABLES,
            n_lags=red["n_lags"], n_init=red["mc_inits"],
            n_steps=red["mc_steps"], burn_in=red["mc_burn_in"],
            seed=cfg.seed, progress=progress)
        save_table(tab, cache)
        tab = load_table(cache, observables=_TABLE_OBSERVABLES)
        state = "built"
    if tab.alphas.size != expected.size or \
            abs(tab.alphas[0] - expected[0]) > 1e-12 or \
            abs(tab.alphas[-1] - expected[-1]) > 1e-12:
        raise ConfigError(
            f"cache at {cache} tabulates a different grid than the "
            "[reduction] section; point table_cache at a fresh directory")
    if tab.n_lags < red["n_lags"]:
        raise ConfigError(
            f"cache at {cache} holds {tab.n_lags} lags but the configuration "
            f"asks for {red['n_lags']}")
    return tab, state


def _macro_series(cfg: ExperimentConfig, table: ReductionTable | None):
    """One trajectory of the configured model (density experiments).

    Returns (macro, drive, params): the drive series and the parameter draw
    are only available for the coupled model, None otherwise.
    """
    sim = cfg.require("simulation", "n_steps")
    system = system_from(cfg)
    law = law_from(cfg)
    model = sim["model"]
    eps = sim["epsilon"]
    common = dict(burn_in=sim["burn_in"], macro_init=sim["macro_init"],
                  escape=sim["escape"])
    if model == "full":
        params = draw_params(law, system.n_units, stream(cfg.seed, TAG_PARAMS))
        traj = simulate(system, params, eps, sim["n_steps"], sim["burn_in"],
                        stream(cfg.seed, TAG_TRAJECTORY),
                        macro_init=sim["macro_init"], escape=sim["escape"])
        return traj.macro, traj.drive, params
    if table is None:
        raise ConfigError(f"model {model!r} needs a reduction table")
    obs = system.observable
    red = cfg.section("reduction")
    if model == "stochastic_limit":
        ma = spectral_factorize(lag_covariance(table, law, eps, red["m_max"], obs),
                                red["spectral_grid"])
        macro = simulate_stochastic_limit(system.base_param, system.coupling_gain,
                                          ma, sim["n_steps"],
                                          stream(cfg.seed, TAG_TRAJECTORY), **common)
        return macro, None, None
    drive_const = mean_over_law(table, law, obs, eps)
    if model == "deterministic_limit":
        macro = simulate_deterministic_limit(system.base_param, system.coupling_gain,
                                             drive_const, sim["n_steps"],
                                             burn_in=sim["burn_in"],
                                             macro_init=sim["macro_init"],
                                             seed=stream(cfg.seed, TAG_TRAJECTORY))
        return macro, None, None
    ma = spectral_factorize(lag_covariance(table, law, eps, red["m_max"], obs),
                            red["spectral_grid"])
    eta = sample_eta(table, law, [eps], system.n_units,
                     stream(cfg.seed, TAG_ETA), observable=obs).eta[0]
    macro = simulate_finite_size(system.base_param, system.coupling_gain,
                                 drive_const, eta, ma, system.n_units,
                                 sim["n_steps"], stream(cfg.seed, TAG_TRAJECTORY),
                                 **common)
    return macro, None, None


def density_experiment(cfg: ExperimentConfig, table: ReductionTable | None):
    """Returns (bin_centers, densities, drive, params) for the output
    writers; drive and params are None for the reduced models."""
    sim = cfg.require("simulation", "n_steps")
    macro, drive, params = _macro_series(cfg, table)
    centers, dens = empirical_density(macro, bins=sim["bins"])
    return centers, dens, macro, drive, params


def _limit_ensemble_at_fixed_time(base, gain, ma, n_ens, fixed_time,
                                  macro_init, rng) -> np.ndarray:
    """Ensemble of stochastic-limit states after fixed_time steps,
    vectorized over realizations; the drive parameter is clamped at the
    map's domain boundary exactly as in the coupled simulations."""
    warm = ma.beta.size
    innov = rng.standard_normal((n_ens, warm + fixed_time))
    zeta = lfilter(ma.beta, [1.0], innov, axis=1)[:, warm:]
    macro = np.full(n_ens, float(macro_init))
    for t in range(fixed_time):
        A = np.minimum(base + gain * zeta[:, t], 4.0)
        if np.any(A <= 0.0):
            raise ValueError("drive pushed the map parameter below zero")
        macro = A * macro * (1.0 - macro)
    return macro


def moments_experiment(cfg: ExperimentConfig, table: ReductionTable):
    """Centred ensemble moments of the macro state at a fixed early time,
    for each microscopic size, scaled by the stochastic-limit moments."""
    mom = cfg.require("moments", "m_values")
    system = system_from(cfg)
    law = law_from(cfg)
    sim = cfg.section("simulation")
    eps = sim["epsilon"]
    fixed_time = mom["fixed_time"]
    macro_init = mom["macro_init"]

    red = cfg.section("reduction")
    ma = spectral_factorize(lag_covariance(table, law, eps, red["m_max"],
                                           system.observable),
                            red["spectral_grid"])
    limit_states = _limit_ensemble_at_fixed_time(
        system.base_param, system.coupling_gain, ma, mom["limit_ensemble"],
        fixed_time, macro_init, stream(cfg.seed, TAG_MOMENTS, 0))
    mu_limit = centred_moments(limit_states, 4)

    rows = []
    for m_units in mom["m_values"]:
        spec = SystemSpec(base_param=system.base_param,
                          coupling_gain=system.coupling_gain,
                          gamma=system.gamma, observable=system.observable,
                          n_units=m_units)
        states = np.empty(mom["ensemble"])
        for k in range(mom["ensemble"]):
            params = draw_params(law, m_units, stream(cfg.seed, TAG_PARAMS, m_units, k))
            traj = simulate(spec, params, eps, fixed_time + 1, mom["micro_burn_in"],
                            stream(cfg.seed, TAG_TRAJECTORY, m_units, k),
                            macro_init_after_burn=macro_init, escape=sim["escape"])
            states[k] = traj.macro[fixed_time]
        mu = centred_moments(states, 4)
        rows.append((m_units, mu, mu / mu_limit))
    return rows, mu_limit


def response_experiment_from_config(cfg: ExperimentConfig,
                                    table: ReductionTable | None,
                                    order_override: int | None = None):
    resp = cfg.require("response", "n_steps", "realizations")
    system = system_from(cfg)
    order = order_override if order_override is not None else resp["order"]
    if order is None:
        order = 3 if cfg.kind == "cubic_response" else 1
    eps = np.linspace(resp["eps_min"], resp["eps_max"], resp["eps_count"])
    exp = ResponseExperiment(
        model=resp["model"], system=system, law=law_from(cfg), epsilons=eps,
        n_steps=resp["n_steps"], realizations=resp["realizations"], order=order,
        burn_in=resp["burn_in"], sigma_length=resp["sigma_length"],
        escape=resp["escape"], m_max=cfg.section("reduction")["m_max"],
        spectral_grid=cfg.section("reduction")["spectral_grid"],
        gk_cap=resp["gk_cap"], gk_lag_cutoff=resp["gk_lag_cutoff"])
    result = run_response_experiment(exp, seed=cfg.seed, table=table,
                                     threads=cfg.threads)
    return exp, result


def calibration_experiment(cfg: ExperimentConfig) -> dict:
    cal = cfg.require("calibration", "trials")
    eps = np.linspace(cal["eps_min"], cal["eps_max"], cal["eps_count"])
    sigmas = np.linspace(cal["sigma_min"], cal["sigma_max"], cal["eps_count"])
    got = null_calibration(cal["trials"], eps, sigmas, cal["n_steps"],
                           seed=cfg.seed, order=cal["order"],
                           alpha_level=cal["alpha_level"])
    got.pop("chi2_samples")
    got.pop("p_samples")
    return got
