"""Exact forward simulation of the coupled system and empirical statistics.

A single macroscopic logistic coordinate is driven by an ensemble of M
microscopic units.  Each unit couples a logistic map in q to a doubling map
in r: when r < 1/2 the unit idles, otherwise q advances one logistic step.
This keeps every unit mixing while preserving the plain logistic marginal
law of q.  The ensemble feeds back through the scaled observable sum

    drive = M**(-gamma) * sum_j phi(q_j; a_j)

which modulates the macroscopic map parameter A = base + gain * drive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .rng import TAG_TRAJECTORY, stream

REFRESH_INTERVAL = 50       # r re-drawn every 50 steps (mantissa budget)
_CHUNK_PERIODS = 40         # refresh periods advanced per kernel call


class ParameterEscapeError(RuntimeError):
    """The macroscopic map parameter left (0, 4]."""

    def __init__(self, step: int, value: float):
        super().__init__(
            f"macro parameter A={value:.6f} left (0, 4] at step {step}; "
            "the orbit could escape [0, 1]"
        )
        self.step = step
        self.value = value


class ObservableKind(enum.Enum):
    """Observable evaluated on each microscopic unit."""

    MEAN_ZERO_QUADRATIC = "mean_zero_quadratic"
    SQUARE = "square"

    @property
    def code(self) -> int:
        if self is ObservableKind.MEAN_ZERO_QUADRATIC:
            return _kernels.OBS_MEAN_ZERO_QUADRATIC
        return _kernels.OBS_SQUARE

    def evaluate(self, q, a):
        return eval_observable(self, q, a)


@dataclass(frozen=True)
class MicroUnit:
    """State of one modified logistic map."""

    q: float
    r: float
    a: float


@dataclass(frozen=True)
class MicroEnsemble:
    units: Sequence[MicroUnit]
    observable: ObservableKind
    gamma: float

    def __post_init__(self):
        if len(self.units) < 1:
            raise ValueError("ensemble must contain at least one unit")


@dataclass(frozen=True)
class SystemSpec:
    """Macroscopic map parameters and the coupling configuration."""

    base_param: float          # A with no drive
    coupling_gain: float       # prefactor of the drive term
    gamma: float               # coupling exponent, 1/2 or 1
    observable: ObservableKind
    n_units: int

    def __post_init__(self):
        if self.gamma not in (0.5, 1.0):
            raise ValueError("coupling exponent must be 1/2 or 1")
        if self.n_units < 1:
            raise ValueError("n_units must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """Recorded (macro, drive) series; row n holds the state at time n."""

    macro: np.ndarray
    drive: np.ndarray


def step_micro_unit(u: MicroUnit) -> MicroUnit:
    """One step of the modified logistic map (pure reference version)."""
    if u.r < 0.5:
        return MicroUnit(u.q, 2.0 * u.r, u.a)
    return MicroUnit(u.a * u.q * (1.0 - u.q), 2.0 * u.r - 1.0, u.a)


def eval_observable(kind: ObservableKind, q, a):
    """phi(q; a) for the requested observable kind."""
    q = np.asarray(q, dtype=float)
    if kind is ObservableKind.MEAN_ZERO_QUADRATIC:
        g = np.asarray(a, dtype=float) * q * (1.0 - q)
        out = (q - g) * (q + g)
    else:
        out = q * q
    if out.ndim == 0:
        return float(out)
    return out


def coupling_term(e: MicroEnsemble) -> float:
    """Scaled observable sum M**(-gamma) * sum_j phi(q_j; a_j)."""
    qs = np.array([u.q for u in e.units])
    av = np.array([u.a for u in e.units])
    phi = eval_observable(e.observable, qs, av)
    return float(np.sum(phi) * len(e.units) ** (-e.gamma))


def step_macro(macro: float, spec: SystemSpec, drive: float, *,
               escape: str = "error") -> float:
    """One macroscopic step Q -> (base + gain*drive) * Q * (1 - Q)."""
    A = spec.base_param + spec.coupling_gain * drive
    if A > 4.0:
        if escape == "clamp":
            A = 4.0
        else:
            raise ParameterEscapeError(0, A)
    if A <= 0.0:
        raise ParameterEscapeError(0, A)
    return A * macro * (1.0 - macro)


def draw_params(law, n_units: int, rng: np.random.Generator,
                a1: float = 1.0) -> np.ndarray:
    """Sample (a0, a1) rows for a fresh realization of the ensemble."""
    out = np.empty((n_units, 2))
    out[:, 0] = law.sample(rng, n_units)
    out[:, 1] = a1
    return out


def _refresh_count(step0: int, n_steps: int, every: int) -> int:
    if n_steps <= 0:
        return 0
    first = -(-step0 // every) * every     # first multiple of every >= step0
    if first >= step0 + n_steps:
        return 0
    return (step0 + n_steps - 1 - first) // every + 1


def simulate(spec: SystemSpec, params, epsilon: float, n_steps: int,
             burn_in: int, seed, *, macro_init: float | None = None,
             macro_init_after_burn: float | None = None,
             escape: str = "error") -> Trajectory:
    """Run the coupled system and record n_steps beyond the burn-in.

    params holds one (a0, a1) row per unit; the effective logistic
    parameters are a0 + epsilon*a1.  Initial q and all r refreshes are drawn
    from the stream identified by seed (an int or a Generator), so identical
    inputs give bit-identical trajectories.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if escape not in ("error", "clamp"):
        raise ValueError("escape must be 'error' or 'clamp'")
    params = np.asarray(params, dtype=float)
    if params.ndim != 2 or params.shape[1] != 2 or params.shape[0] != spec.n_units:
        raise ValueError("params must have shape (n_units, 2)")
    a_eff = params[:, 0] + epsilon * params[:, 1]
    if np.any(a_eff <= 0.0) or np.any(a_eff > 4.0):
        raise ValueError("effective unit parameters must lie in (0, 4]")

    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, TAG_TRAJECTORY)
    M = spec.n_units
    q = rng.random(M)
    macro = float(rng.random()) if macro_init is None else float(macro_init)
    r = np.zeros(M)            # replaced by the step-0 refresh row

    kernel = (_kernels.advance_ensemble_mz
              if spec.observable is ObservableKind.MEAN_ZERO_QUADRATIC
              else _kernels.advance_ensemble_sq)
    inv_scale = float(M) ** (-spec.gamma)
    clamp = escape == "clamp"

    total = burn_in + n_steps
    out_macro = np.empty(total)
    out_drive = np.empty(total)

    def run_phase(step0, n, macro):
        chunk = _CHUNK_PERIODS * REFRESH_INTERVAL
        done = 0
        while done < n:
            take = min(chunk, n - done)
            n_ref = _refresh_count(step0 + done, take, REFRESH_INTERVAL)
            block = rng.random((n_ref, M))
            status, macro = kernel(q, r, a_eff, block, REFRESH_INTERVAL,
                                   step0 + done, take, inv_scale,
                                   spec.base_param, spec.coupling_gain,
                                   macro, clamp, out_macro, out_drive,
                                   step0 + done)
            if status >= 0:
                raise ParameterEscapeError(
                    status, spec.base_param + spec.coupling_gain * out_drive[status])
            done += take
        return macro

    macro = run_phase(0, burn_in, macro)
    if macro_init_after_burn is not None:
        macro = float(macro_init_after_burn)
    run_phase(burn_in, n_steps, macro)
    return Trajectory(macro=out_macro[burn_in:], drive=out_drive[burn_in:])


def cocycle_trajectory(a: float, n_steps: int, burn_in: int, seed) -> np.ndarray:
    """q series of a single modified logistic unit (no macro coupling)."""
    if not 0.0 < a <= 4.0:
        raise ValueError("unit parameter must lie in (0, 4]")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, TAG_TRAJECTORY)
    q = float(rng.random())
    r = 0.0
    total = burn_in + n_steps
    out = np.empty(total)
    chunk = _CHUNK_PERIODS * REFRESH_INTERVAL
    done = 0
    while done < total:
        take = min(chunk, total - done)
        n_ref = _refresh_count(done, take, REFRESH_INTERVAL)
        block = rng.random(n_ref)
        q, r = _kernels.cocycle_block(q, r, a, block, REFRESH_INTERVAL,
                                      done, take, out, done)
        done += take
    return out[burn_in:]


def empirical_density(samples, bins: int = 1000):
    """Density-normalized histogram of samples over [0, 1].

    Returns (bin_centers, densities); the densities integrate to one.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("cannot build a histogram from an empty sample set")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if samples.min() < 0.0 or samples.max() > 1.0:
        raise ValueError("samples must lie in [0, 1]")
    dens, edges = np.histogram(samples, bins=bins, range=(0.0, 1.0), density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, dens


def centred_moments(samples, kmax: int) -> np.ndarray:
    """Sample mean followed by central moments of order 2..kmax."""
    samples = np.asarray(samples, dtype=float)
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    if samples.size == 0 or (kmax >= 2 and samples.size < 2):
        raise ValueError("not enough samples for the requested moments")
    mu = np.empty(kmax)
    mean = samples.mean()
    mu[0] = mean
    if kmax >= 2:
        dev = samples - mean
        for k in range(2, kmax + 1):
            mu[k - 1] = np.mean(dev ** k)
    return mu
