"""Statistical test for polynomial response of time-averaged observables.

Time averages of a macroscopic observable at several perturbation sizes
obey a central limit theorem with Green-Kubo variances.  Under the null
hypothesis of order-ell response the scaled averages follow a linear model
in the perturbation powers; a weighted least-squares fit and a Pearson
chi-squared statistic then quantify the mismatch.  The breakdown parameter
(chi2 - dof)/N estimates the squared distance between the true response
curve and the fitted polynomial, independent of the data length.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft
from scipy.special import chdtri, gammaincc

from .micro import SystemSpec, Trajectory, draw_params, simulate
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
from .rng import TAG_CALIBRATION, TAG_ETA, TAG_PARAMS, TAG_SIGMA, TAG_TRAJECTORY, stream
from .table import ReductionTable

GK_LAG_CAP = 200
MODELS = ("full", "stochastic_limit", "deterministic_limit", "finite_size")


class InsufficientDataError(ValueError):
    """The series is too short for the requested correlation cutoff."""


@dataclass(frozen=True)
class ResponseDataset:
    """Per-perturbation sample means with their asymptotic deviations."""

    epsilons: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray
    n_steps: int
    psi_name: str = "identity"

    def __post_init__(self):
        if self.epsilons.size <= 2:
            raise ValueError("need more than two perturbation values")
        if np.unique(self.epsilons).size != self.epsilons.size:
            raise ValueError("perturbation values must be pairwise distinct")
        if np.any(self.sigmas <= 0.0):
            raise ValueError("all sigmas must be positive")


@dataclass(frozen=True)
class FitResult:
    order: int
    coefficients: np.ndarray
    hat_matrix_rank: int
    hat_matrix: np.ndarray


@dataclass(frozen=True)
class TestResult:
    chi2: float
    dof: int
    p_value: float
    q_hat: float
    realizations: int


@dataclass(frozen=True)
class ResponseExperiment:
    """Configuration of one response experiment against one model kind."""

    model: str
    system: SystemSpec
    law: RaisedCosineLaw
    epsilons: np.ndarray
    n_steps: int
    realizations: int
    order: int = 1
    burn_in: int = 10_000
    sigma_length: int = 40_000_000
    escape: str = "error"
    perturbation_a1: float = 1.0
    m_max: int = 256
    spectral_grid: int = 4096
    gk_cap: int = GK_LAG_CAP
    gk_lag_cutoff: int | None = None     # explicit window overrides the heuristic

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if len(self.epsilons) <= self.order + 1:
            raise ValueError("need more perturbation values than fit parameters")


@dataclass(frozen=True)
class ResponseResult:
    test: TestResult
    fit: FitResult
    dataset: ResponseDataset         # realization-averaged means
    stderrs: np.ndarray              # ensemble standard errors per epsilon
    per_realization_chi2: np.ndarray
    per_realization_p: np.ndarray
    means_by_realization: np.ndarray = field(repr=False)


def sample_mean(trajectory, psi=None) -> float:
    """Arithmetic mean of the observable along a trajectory."""
    x = trajectory.macro if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    if x.size == 0:
        raise ValueError("empty trajectory")
    if psi is not None:
        x = psi(x)
    return float(np.mean(x))


def _centered_lag_correlations(x: np.ndarray, n_lags: int) -> np.ndarray:
    n = x.size
    dev = x - x.mean()
    nfast = _fft.next_fast_len(n + n_lags + 1)
    spec = _fft.rfft(dev, nfast)
    acf = _fft.irfft((spec * spec.conj()).real, nfast)[: n_lags + 1]
    return acf / (n - np.arange(n_lags + 1))


def green_kubo_variance(trajectory, psi=None, lag_cutoff: int | None = None,
                        cap: int = GK_LAG_CAP) -> float:
    """Asymptotic variance of the time average: C0 + 2 sum_j Cj.

    When no cutoff is given, the sum stops at the first lag where |Cj| has
    fallen below C0/e for five consecutive lags (an e-folding-time
    heuristic), capped at ``cap``.
    """
    x = trajectory.macro if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    if psi is not None:
        x = psi(x)
    n = x.size
    if lag_cutoff is not None and lag_cutoff > n // 10:
        raise InsufficientDataError(
            f"lag cutoff {lag_cutoff} exceeds a tenth of the series length {n}")
    max_needed = cap + 5 if lag_cutoff is None else lag_cutoff
    corr = _centered_lag_correlations(x, max_needed)
    c0 = corr[0]
    if c0 <= 0.0:
        raise ValueError("series has no variance")
    if lag_cutoff is None:
        thresh = c0 / np.e
        below = np.abs(corr[1:]) < thresh
        cutoff = cap
        run = 0
        for j in range(below.size):
            run = run + 1 if below[j] else 0
            if run == 5:
                cutoff = j - 3        # first lag of the run of five
                break
        cutoff = min(cutoff, cap)
        if cutoff > n // 10:
            raise InsufficientDataError(
                f"automatic cutoff {cutoff} exceeds a tenth of the series length {n}")
    else:
        cutoff = lag_cutoff
    var = c0 + 2.0 * np.sum(corr[1: cutoff + 1])
    if var <= 0.0:
        raise ValueError(
            f"Green-Kubo variance {var:.3e} is not positive at cutoff {cutoff}; "
            "the correlations do not decay on this window")
    return float(var)


def batch_means_variance(trajectory, psi=None, n_batches: int = 64) -> float:
    """Asymptotic variance of the time average from disjoint batch means.

    Robust companion to the Green-Kubo sum: slower to converge, but its
    estimate is nonnegative by construction even under the strong
    anticancellation (or outright periodicity) that can drive a truncated
    correlation sum negative.
    """
    x = trajectory.macro if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    if psi is not None:
        x = psi(x)
    length = x.size // n_batches
    if length < 2:
        raise InsufficientDataError("series too short for batch means")
    bm = x[: n_batches * length].reshape(n_batches, length).mean(axis=1)
    var = length * bm.var(ddof=1)
    if var <= 0.0:
        raise ValueError("batch means are degenerate; series has no variance")
    return float(var)


def build_design(epsilons, sigmas, order: int) -> np.ndarray:
    """Design matrix with row i = (1, de_i, ..., de_i**order) / sigma_i,
    where de is the offset from the first (reference) perturbation."""
    epsilons = np.asarray(epsilons, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if epsilons.size <= order + 1:
        raise ValueError("need more perturbation values than fit parameters")
    if np.unique(epsilons).size != epsilons.size:
        raise ValueError("duplicate perturbation values make the design rank deficient")
    de = epsilons - epsilons[0]
    D = np.vander(de, order + 1, increasing=True) / sigmas[:, None]
    return D


def wls_fit(dataset: ResponseDataset, order: int) -> FitResult:
    """Weighted least-squares polynomial fit of the scaled means.

    Solved through a QR factorization of the design, which keeps the hat
    matrix exactly symmetric-idempotent even for the raw-power designs of
    higher-order fits over narrow perturbation ranges.
    """
    D = build_design(dataset.epsilons, dataset.sigmas, order)
    cond = np.linalg.cond(D)
    if cond > 1e12:
        raise ValueError(f"design is ill-conditioned (cond={cond:.2e})")
    Q, R = np.linalg.qr(D)
    Y = dataset.means / dataset.sigmas
    coef = np.linalg.solve(R, Q.T @ Y)
    H = Q @ Q.T
    return FitResult(order=order, coefficients=coef,
                     hat_matrix_rank=int(np.linalg.matrix_rank(D)),
                     hat_matrix=H)


def chi2_statistic(dataset: ResponseDataset, fit: FitResult) -> float:
    """N * || (I - H) Y ||^2 for the scaled observations Y_i = mean_i / sigma_i."""
    Y = dataset.means / dataset.sigmas
    resid = Y - fit.hat_matrix @ Y
    return float(dataset.n_steps * resid @ resid)


def breakdown_parameter(chi2_values, k_eps: int, n_steps: int, order: int = 1) -> float:
    """Average of (chi2_j - dof) / N over realizations."""
    chi2_values = np.atleast_1d(np.asarray(chi2_values, dtype=float))
    if chi2_values.size == 0:
        raise ValueError("need at least one realization")
    dof = k_eps - (order + 1)
    return float(np.mean((chi2_values - dof) / n_steps))


def p_value(chi2: float, dof: int) -> float:
    """Upper-tail probability of the chi-squared distribution."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    return float(gammaincc(dof / 2.0, max(chi2, 0.0) / 2.0))


def threshold(alpha: float, k_eps: int, order: int, n_steps: int) -> float:
    """Rejection threshold for the breakdown parameter at level alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    dof = k_eps - (order + 1)
    return float((chdtri(dof, alpha) - dof) / n_steps)


def make_null_dataset(epsilons, sigmas, n_steps: int, rng: np.random.Generator,
                      intercept: float = 0.3, slope: float = 0.8) -> ResponseDataset:
    """Synthetic dataset drawn exactly from the order-1 null model."""
    epsilons = np.asarray(epsilons, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    de = epsilons - epsilons[0]
    means = intercept + slope * de + sigmas * rng.standard_normal(epsilons.size) / np.sqrt(n_steps)
    return ResponseDataset(epsilons=epsilons, means=means, sigmas=sigmas,
                           n_steps=n_steps, psi_name="synthetic")


def null_calibration(trials: int, epsilons, sigmas, n_steps: int, seed: int,
                     order: int = 1, alpha_level: float = 0.05) -> dict:
    """Chi-squared and type-I calibration on synthetic null datasets."""
    from scipy.stats import chi2 as chi2_dist
    from scipy.stats import kstest

    epsilons = np.asarray(epsilons, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    dof = epsilons.size - (order + 1)
    chi2_samples = np.empty(trials)
    p_samples = np.empty(trials)
    for t in range(trials):
        rng = stream(seed, TAG_CALIBRATION, t)
        ds = make_null_dataset(epsilons, sigmas, n_steps, rng)
        fit = wls_fit(ds, order)
        chi2_samples[t] = chi2_statistic(ds, fit)
        p_samples[t] = p_value(chi2_samples[t], dof)
    ks_stat, ks_p = kstest(chi2_samples, chi2_dist(dof).cdf)
    return {
        "trials": trials,
        "dof": dof,
        "ks_stat": float(ks_stat),
        "ks_p": float(ks_p),
        "type1_rate": float(np.mean(p_samples < alpha_level)),
        "alpha_level": alpha_level,
        "chi2_samples": chi2_samples,
        "p_samples": p_samples,
    }


class _ModelRunner:
    """Prepares per-epsilon ingredients and simulates one (realization,
    epsilon) trajectory of the configured model."""

    def __init__(self, exp: ResponseExperiment, seed: int,
                 table: ReductionTable | None):
        self.exp = exp
        self.seed = seed
        self.table = table
        self.obs = exp.system.observable
        if exp.model != "full":
            if table is None:
                raise ValueError(f"model {exp.model!r} requires a reduction table")
            self.drive_const = np.array([
                mean_over_law(table, exp.law, self.obs, eps) for eps in exp.epsilons])
        if exp.model in ("stochastic_limit", "finite_size"):
            self.ma = [spectral_factorize(
                lag_covariance(table, exp.law, eps, exp.m_max, self.obs),
                exp.spectral_grid) for eps in exp.epsilons]

    def _eta_vector(self, *path) -> np.ndarray:
        return sample_eta(self.table, self.exp.law, self.exp.epsilons,
                          self.exp.system.n_units, stream(self.seed, TAG_ETA, *path),
                          observable=self.obs).eta

    def realization_context(self, j: int):
        """Per-realization frozen randomness (parameter draw or its
        reduced-model surrogate)."""
        exp = self.exp
        if exp.model == "full":
            rng = stream(self.seed, TAG_PARAMS, j)
            return draw_params(exp.law, exp.system.n_units, rng, exp.perturbation_a1)
        if exp.model == "finite_size":
            return self._eta_vector(j)
        return None

    def sigma_context(self, i: int):
        exp = self.exp
        if exp.model == "full":
            rng = stream(self.seed, TAG_SIGMA, i, TAG_PARAMS)
            return draw_params(exp.law, exp.system.n_units, rng, exp.perturbation_a1)
        if exp.model == "finite_size":
            return self._eta_vector(TAG_SIGMA, i)
        return None

    def trajectory(self, i: int, context, rng, n_steps: int) -> np.ndarray:
        exp = self.exp
        eps = float(exp.epsilons[i])
        if exp.model == "full":
            traj = simulate(exp.system, context, eps, n_steps, exp.burn_in,
                            rng, escape=exp.escape)
            return traj.macro
        if exp.model == "stochastic_limit":
            return simulate_stochastic_limit(
                exp.system.base_param, exp.system.coupling_gain, self.ma[i],
                n_steps, rng, burn_in=exp.burn_in, escape=exp.escape)
        if exp.model == "deterministic_limit":
            return simulate_deterministic_limit(
                exp.system.base_param, exp.system.coupling_gain,
                float(self.drive_const[i]), n_steps, burn_in=exp.burn_in, seed=rng)
        return simulate_finite_size(
            exp.system.base_param, exp.system.coupling_gain,
            float(self.drive_const[i]), float(context[i]), self.ma[i],
            exp.system.n_units, n_steps, rng, burn_in=exp.burn_in,
            escape=exp.escape)


def run_response_experiment(exp: ResponseExperiment, seed: int,
                            table: ReductionTable | None = None,
                            threads: int = 1, psi=None) -> ResponseResult:
    """Simulate the response dataset and test order-ell response.

    Reference variances are estimated once per perturbation size from a
    dedicated long run and treated as known constants; every realization
    then contributes one chi-squared value, and the aggregate test uses the
    realization-averaged breakdown parameter.
    """
    runner = _ModelRunner(exp, seed, table)
    K = len(exp.epsilons)
    R = exp.realizations
    epsilons = np.asarray(exp.epsilons, dtype=float)

    sigmas = np.empty(K)
    for i in range(K):
        ctx = runner.sigma_context(i)
        traj = runner.trajectory(i, ctx, stream(seed, TAG_SIGMA, i, TAG_TRAJECTORY),
                                 exp.sigma_length)
        try:
            var = green_kubo_variance(traj, psi=psi, cap=exp.gk_cap,
                                      lag_cutoff=exp.gk_lag_cutoff)
        except ValueError:
            # near-cancelling or non-decaying correlations: fall back to
            # the nonnegative batch-means estimator of the same quantity
            var = batch_means_variance(traj, psi=psi)
        sigmas[i] = np.sqrt(var)

    contexts = [runner.realization_context(j) for j in range(R)]
    means = np.empty((R, K))

    def one(task):
        j, i = task
        traj = runner.trajectory(i, contexts[j], stream(seed, TAG_TRAJECTORY, j, i),
                                 exp.n_steps)
        means[j, i] = sample_mean(traj, psi=psi)

    tasks = [(j, i) for j in range(R) for i in range(K)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, tasks))
    else:
        for task in tasks:
            one(task)

    dof = K - (exp.order + 1)
    chi2_values = np.empty(R)
    p_values = np.empty(R)
    for j in range(R):
        ds = ResponseDataset(epsilons=epsilons, means=means[j], sigmas=sigmas,
                             n_steps=exp.n_steps)
        fit_j = wls_fit(ds, exp.order)
        chi2_values[j] = chi2_statistic(ds, fit_j)
        p_values[j] = p_value(chi2_values[j], dof)

    q_hat = breakdown_parameter(chi2_values, K, exp.n_steps, exp.order)
    chi2_agg = dof + exp.n_steps * q_hat
    agg_dataset = ResponseDataset(epsilons=epsilons, means=means.mean(axis=0),
                                  sigmas=sigmas, n_steps=exp.n_steps)
    fit = wls_fit(agg_dataset, exp.order)
    test = TestResult(chi2=float(chi2_agg), dof=dof,
                      p_value=p_value(chi2_agg, dof), q_hat=q_hat,
                      realizations=R)
    stderrs = means.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(K)
    return ResponseResult(test=test, fit=fit, dataset=agg_dataset,
                          stderrs=stderrs, per_realization_chi2=chi2_values,
                          per_realization_p=p_values,
                          means_by_realization=means)
