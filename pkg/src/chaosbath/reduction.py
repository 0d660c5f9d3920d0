"""Model reduction: from per-parameter statistics to effective dynamics.

Pipeline for the thermodynamic-limit descriptions of the coupled system:

* averages of tabulated statistics against the (shifted) parameter law by
  trapezoid quadrature;
* transfer of plain-logistic lag moments to the mixing cocycle through a
  binomial weighting (the unit advances with probability 1/2 per step, so
  the number of effective logistic steps in m steps is Binomial(m, 1/2));
* the stationary-driver lag covariance R(m) and its minimum-phase
  moving-average factorization via the cepstrum of the spectral density;
* samplers for the Gaussian driver process and for the per-realization
  parameter-sampling fluctuation, plus the three reduced simulators
  (stochastic limit, deterministic limit, finite-size driver).

The quadrature tables are computed once per parameter grid and reused for
every perturbation size: only the law weights move with epsilon, which is
what keeps the cross-epsilon covariance of the sampling fluctuation exactly
consistent between quadrature and Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.special import gammaln

from . import _kernels
from .micro import ObservableKind, ParameterEscapeError
from .params import RaisedCosineLaw
from .rng import TAG_TRAJECTORY, stream
from .table import LogisticStats, ReductionTable

BINOMIAL_WEIGHT_FLOOR = 1e-15
SPECTRAL_GRID = 4096
SPECTRAL_FLOOR = 1e-10      # relative to R(0)


class GridCoverageError(ValueError):
    """The shifted law's support escapes the tabulated parameter grid."""


class FactorizationError(RuntimeError):
    """The spectral density is not strictly positive on the grid."""


@dataclass(frozen=True)
class LagCovariance:
    """Driver lag covariance R(m), m = 0..m_max, at one perturbation size."""

    values: np.ndarray
    epsilon: float

    def __post_init__(self):
        if self.values[0] <= 0.0:
            raise ValueError("R(0) must be positive")

    @property
    def m_max(self) -> int:
        return self.values.size - 1


@dataclass(frozen=True)
class MACoefficients:
    """Minimum-phase moving-average coefficients of the driver process."""

    beta: np.ndarray


@dataclass(frozen=True)
class EtaRealization:
    """One parameter draw's sampling fluctuation, per perturbation size."""

    epsilons: np.ndarray
    eta: np.ndarray
    n_units: int
    param_values: np.ndarray


def _law_weights(alphas: np.ndarray, law: RaisedCosineLaw, epsilon: float) -> np.ndarray:
    lo, hi = law.support
    if lo + epsilon < alphas[0] or hi + epsilon > alphas[-1]:
        raise GridCoverageError(
            f"law support [{lo + epsilon:.6f}, {hi + epsilon:.6f}] shifted by "
            f"epsilon={epsilon} escapes the grid [{alphas[0]}, {alphas[-1]}]")
    h = alphas[1] - alphas[0]
    w = law.pdf(alphas - epsilon) * h
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def average_over_law(alphas: np.ndarray, values: np.ndarray,
                     law: RaisedCosineLaw, epsilon: float) -> float:
    """Trapezoid quadrature of a per-parameter quantity against the shifted law."""
    alphas = np.asarray(alphas, dtype=float)
    values = np.asarray(values, dtype=float)
    return float(_law_weights(alphas, law, epsilon) @ values)


def mean_over_law(tab: ReductionTable, law: RaisedCosineLaw,
                  observable: ObservableKind, epsilon: float) -> float:
    """Law-averaged invariant mean of the observable (the drive constant)."""
    return average_over_law(tab.alphas, tab.means[observable], law, epsilon)


def binomial_transfer_weights(m_max: int, n_lags: int) -> np.ndarray:
    """Rows of Binomial(m, 1/2) mass over lags 0..n_lags, m = 0..m_max.

    Computed in log space; masses below the floor are dropped, which only
    touches weights far inside the binomial tail for large m.
    """
    if n_lags < m_max:
        raise ValueError("need tabulated lags up to at least m_max")
    W = np.zeros((m_max + 1, n_lags + 1))
    log2 = np.log(2.0)
    for m in range(m_max + 1):
        i = np.arange(m + 1)
        logw = gammaln(m + 1) - gammaln(i + 1) - gammaln(m - i + 1) - m * log2
        w = np.exp(logw)
        w[w < BINOMIAL_WEIGHT_FLOOR] = 0.0
        W[m, : m + 1] = w
    return W


def cocycle_lag_from_logistic(stats: LogisticStats, m: int) -> float:
    """Lag-m raw moment of the mixing cocycle from plain-logistic moments."""
    if m > stats.lag_corr.size - 1:
        raise ValueError("stats do not tabulate enough lags")
    w = binomial_transfer_weights(m, m)[m]
    return float(w @ stats.lag_corr[: m + 1])


def lag_covariance(tab: ReductionTable, law: RaisedCosineLaw, epsilon: float,
                   m_max: int, observable: ObservableKind) -> LagCovariance:
    """Driver covariance R(m) = <E[phi_0 phi_m] - E[phi]^2> over the law.

    The centering is per parameter: the driver process describes dynamical
    fluctuation of each unit around its own invariant mean, while the
    across-parameter spread of the means belongs to the sampling
    fluctuation.
    """
    lags = tab.lags[observable]
    if lags.shape[1] - 1 < m_max:
        raise ValueError("table does not tabulate enough lags for m_max")
    W = binomial_transfer_weights(m_max, lags.shape[1] - 1)
    transferred = lags @ W.T                       # (n_alpha, m_max+1)
    centered = transferred - (tab.means[observable] ** 2)[:, None]
    w = _law_weights(tab.alphas, law, epsilon)
    return LagCovariance(values=w @ centered, epsilon=epsilon)


def spectral_factorize(cov, n_grid: int = SPECTRAL_GRID) -> MACoefficients:
    """Minimum-phase moving-average factorization of a lag covariance.

    The spectral density S(theta) = R(0) + 2 sum R(m) cos(m theta) is
    sampled on n_grid points; its log-cepstrum gives the coefficients of
    log B(z), and exponentiating the causal part recovers the minimum-phase
    B whose Fourier coefficients are the moving-average weights.
    """
    R = cov.values if isinstance(cov, LagCovariance) else np.asarray(cov, dtype=float)
    m_max = R.size - 1
    if n_grid % 2:
        raise ValueError("n_grid must be even (Nyquist term handling)")
    if n_grid < 2 * (m_max + 1):
        raise ValueError("n_grid must exceed twice the covariance length")
    padded = np.zeros(n_grid)
    padded[0] = R[0]
    if m_max >= 1:
        padded[1: m_max + 1] = R[1:]
        padded[n_grid - m_max:] = R[1:][::-1]
    S = np.fft.rfft(padded).real
    floor = SPECTRAL_FLOOR * R[0]
    if S.min() <= floor:
        k = int(S.argmin())
        theta = 2.0 * np.pi * k / n_grid
        raise FactorizationError(
            f"spectral density {S.min():.3e} at theta={theta:.4f} is not "
            f"positive (floor {floor:.3e}); the covariance is not a valid "
            "summable moving-average spectrum")
    cepstrum = np.fft.irfft(0.5 * np.log(S), n_grid)
    causal = np.zeros(n_grid)
    causal[0] = cepstrum[0]
    causal[1: n_grid // 2] = 2.0 * cepstrum[1: n_grid // 2]
    causal[n_grid // 2] = cepstrum[n_grid // 2]
    B = np.exp(np.fft.fft(causal))
    beta = np.fft.ifft(B).real[: m_max + 1]
    return MACoefficients(beta=beta)


def reconstruct_covariance(ma: MACoefficients, m_max: int | None = None) -> np.ndarray:
    """R(m) = sum_k beta_k beta_{m+k} implied by the coefficients."""
    beta = ma.beta
    m_max = beta.size - 1 if m_max is None else m_max
    return np.array([np.dot(beta[: beta.size - m], beta[m:]) for m in range(m_max + 1)])


def save_ma_csv(ma: MACoefficients, path) -> None:
    """Export the moving-average coefficients as a one-column CSV."""
    with open(path, "w") as f:
        f.write("beta\n")
        for b in ma.beta:
            f.write(f"{b:.17g}\n")


def sample_zeta(ma: MACoefficients, n_steps: int, seed) -> np.ndarray:
    """Stationary Gaussian driver samples from the moving-average form."""
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, TAG_TRAJECTORY)
    warm = ma.beta.size
    innovations = rng.standard_normal(n_steps + warm)
    return lfilter(ma.beta, [1.0], innovations)[warm:]


def _base_weights_normalized(tab: ReductionTable, law: RaisedCosineLaw) -> np.ndarray:
    w = _law_weights(tab.alphas, law, 0.0)
    return w / w.sum()


def _shift_index(tab: ReductionTable, epsilon: float) -> int:
    k = epsilon / tab.spacing
    k_round = int(round(k))
    if abs(k - k_round) > 1e-6:
        raise ValueError(
            f"epsilon={epsilon} is not a multiple of the grid spacing "
            f"{tab.spacing}; sampling consistency with the quadrature "
            "requires on-grid shifts")
    return k_round


def sample_eta(tab: ReductionTable, law: RaisedCosineLaw, eps_list,
               n_units: int, seed,
               observable: ObservableKind = ObservableKind.SQUARE) -> EtaRealization:
    """One parameter draw's scaled mean fluctuation, jointly over epsilons.

    Draws n_units parameters from the law discretized to the table grid and
    returns sqrt(M) * (sample mean of E^{a+eps}[phi] - law average) for each
    epsilon; using the same tabulated means for sampling and quadrature
    realizes the exact finite-size law including its cross-epsilon
    covariance.
    """
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, TAG_TRAJECTORY)
    eps_list = np.atleast_1d(np.asarray(eps_list, dtype=float))
    p = _base_weights_normalized(tab, law)
    support = np.flatnonzero(p > 0)
    idx = rng.choice(tab.alphas.size, size=n_units, p=p)
    means = tab.means[observable]
    eta = np.empty(eps_list.size)
    for i, eps in enumerate(eps_list):
        k = _shift_index(tab, eps)
        if support[-1] + k >= tab.alphas.size or support[0] + k < 0:
            raise GridCoverageError(f"epsilon={eps} shifts the law support off the grid")
        # center with the same discretized measure the draw came from, so
        # the fluctuation has exactly zero mean; on a fine grid this agrees
        # with the plain trapezoid average to the quadrature's own accuracy
        center = float(np.dot(p, np.roll(means, -k))) if k else float(np.dot(p, means))
        eta[i] = np.sqrt(n_units) * (means[idx + k].mean() - center)
    return EtaRealization(epsilons=eps_list, eta=eta, n_units=n_units,
                          param_values=tab.alphas[idx].copy())


def eta_covariance_quadrature(tab: ReductionTable, law: RaisedCosineLaw,
                              eps_list, observable: ObservableKind = ObservableKind.SQUARE
                              ) -> np.ndarray:
    """Cross-epsilon covariance of the sampling fluctuation by quadrature.

    Uses the same normalized grid measure as the sampler, so the matrix is
    exactly the covariance of one draw's contribution (and in particular
    positive semidefinite).
    """
    eps_list = np.atleast_1d(np.asarray(eps_list, dtype=float))
    p = _base_weights_normalized(tab, law)
    support = np.flatnonzero(p > 0)
    means = tab.means[observable]
    n = tab.alphas.size
    K = eps_list.size
    shifts = [_shift_index(tab, eps) for eps in eps_list]
    for eps, k in zip(eps_list, shifts):
        if support[0] + k < 0 or support[-1] + k >= n:
            raise GridCoverageError(f"epsilon={eps} shifts the support off the grid")
    shifted = [np.roll(means, -k) for k in shifts]
    first = np.array([float(p @ s) for s in shifted])
    cov = np.empty((K, K))
    for i in range(K):
        for j in range(K):
            cov[i, j] = float(p @ (shifted[i] * shifted[j])) - first[i] * first[j]
    return cov


def _run_driven(drive: np.ndarray, base: float, gain: float, macro0: float,
                escape: str, burn_in: int) -> np.ndarray:
    out = np.empty(drive.size)
    status, _ = _kernels.driven_logistic(drive, base, gain, macro0,
                                         escape == "clamp", out)
    if status >= 0:
        raise ParameterEscapeError(status, base + gain * drive[status])
    return out[burn_in:]


def simulate_stochastic_limit(base: float, gain: float, ma: MACoefficients,
                              n_steps: int, seed, *, burn_in: int = 10_000,
                              macro_init: float | None = None,
                              escape: str = "error") -> np.ndarray:
    """Macro map driven by the stationary Gaussian process (diffusive limit)."""
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, TAG_TRAJECTORY)
    macro0 = float(rng.random()) if macro_init is None else float(macro_init)
    zeta = sample_zeta(ma, burn_in + n_steps, rng)
    return _run_driven(zeta, base, gain, macro0, escape, burn_in)


def simulate_deterministic_limit(base: float, gain: float, drive_const: float,
                                 n_steps: int, *, burn_in: int = 10_000,
                                 macro_init: float | None = None,
                                 seed=None) -> np.ndarray:
    """Plain logistic map at the law-averaged drive (deterministic limit)."""
    A = base + gain * drive_const
    if not 0.0 < A <= 4.0:
        raise ParameterEscapeError(0, A)
    if macro_init is None:
        if seed is None:
            raise ValueError("provide macro_init or a seed to draw it")
        rng = seed if isinstance(seed, np.random.Generator) else stream(seed, TAG_TRAJECTORY)
        macro_init = float(rng.random())
    out = np.empty(burn_in + n_steps)
    _kernels.const_logistic(A, float(macro_init), burn_in + n_steps, out)
    return out[burn_in:]


def simulate_finite_size(base: float, gain: float, drive_const: float,
                         eta: float, ma: MACoefficients, n_units: int,
                         n_steps: int, seed, *, burn_in: int = 10_000,
                         macro_init: float | None = None,
                         escape: str = "error") -> np.ndarray:
    """Macro map under the finite-size driver: the law-averaged constant
    plus the frozen sampling fluctuation and the Gaussian process, both
    scaled by 1/sqrt(M)."""
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, TAG_TRAJECTORY)
    macro0 = float(rng.random()) if macro_init is None else float(macro_init)
    scale = 1.0 / np.sqrt(n_units)
    drive = drive_const + scale * (eta + sample_zeta(ma, burn_in + n_steps, rng))
    return _run_driven(drive, base, gain, macro0, escape, burn_in)
