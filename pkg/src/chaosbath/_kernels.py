"""Compiled inner loops (numba).

All kernels are deterministic pure functions of their inputs: random numbers
(initial conditions, mixing-coordinate refreshes) are drawn by the callers
and passed in as arrays, so bit reproducibility is controlled entirely by
the stream discipline in :mod:`chaosbath.rng`.

The mixing coordinate r of each unit follows the doubling map, which sheds
one mantissa bit per step in 64-bit floats; callers therefore pass refresh
rows that re-draw r periodically (every 50 steps, below the 52-bit budget).
Kernels consume one refresh row whenever the global step index is a
multiple of ``refresh_every``, independent of how the run is chunked.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# observable codes shared with micro.ObservableKind
OBS_MEAN_ZERO_QUADRATIC = 0
OBS_SQUARE = 1


@njit(cache=True, fastmath=True, nogil=True)
def advance_ensemble_mz(q, r, a, refresh, refresh_every, step0, n_steps,
                        inv_scale, base, gain, macro, clamp,
                        out_macro, out_drive, out0):
    """Coupled step with the mean-zero quadratic observable.

    Records (macro, drive) at the *current* time before updating, i.e. row t
    holds (Q_t, Z_t).  Returns (status, macro): status is -1 on success or
    the offending global step on parameter escape.
    """
    M = q.shape[0]
    k = 0
    for t in range(n_steps):
        step = step0 + t
        if step % refresh_every == 0:
            row = refresh[k]
            for j in range(M):
                r[j] = row[j]
            k += 1
        s = 0.0
        for j in range(M):
            qj = q[j]
            fq = a[j] * qj * (1.0 - qj)
            s += (qj - fq) * (qj + fq)
            r2 = r[j] + r[j]
            adv = r2 >= 1.0
            q[j] = fq if adv else qj
            r[j] = r2 - 1.0 if adv else r2
        drive = s * inv_scale
        out_macro[out0 + t] = macro
        out_drive[out0 + t] = drive
        A = base + gain * drive
        if A > 4.0:
            if clamp:
                A = 4.0
            else:
                return step, macro
        if A <= 0.0:
            return step, macro
        macro = A * macro * (1.0 - macro)
    return -1, macro


@njit(cache=True, fastmath=True, nogil=True)
def advance_ensemble_sq(q, r, a, refresh, refresh_every, step0, n_steps,
                        inv_scale, base, gain, macro, clamp,
                        out_macro, out_drive, out0):
    """Coupled step with the square observable (same contract as the
    mean-zero kernel)."""
    M = q.shape[0]
    k = 0
    for t in range(n_steps):
        step = step0 + t
        if step % refresh_every == 0:
            row = refresh[k]
            for j in range(M):
                r[j] = row[j]
            k += 1
        s = 0.0
        for j in range(M):
            qj = q[j]
            s += qj * qj
            fq = a[j] * qj * (1.0 - qj)
            r2 = r[j] + r[j]
            adv = r2 >= 1.0
            q[j] = fq if adv else qj
            r[j] = r2 - 1.0 if adv else r2
        drive = s * inv_scale
        out_macro[out0 + t] = macro
        out_drive[out0 + t] = drive
        A = base + gain * drive
        if A > 4.0:
            if clamp:
                A = 4.0
            else:
                return step, macro
        if A <= 0.0:
            return step, macro
        macro = A * macro * (1.0 - macro)
    return -1, macro


@njit(cache=True, fastmath=True, nogil=True)
def cocycle_block(q, r, a, refresh, refresh_every, step0, n_steps, out, out0):
    """Single-unit cocycle trajectory; records q at the current time."""
    k = 0
    for t in range(n_steps):
        step = step0 + t
        if step % refresh_every == 0:
            r = refresh[k]
            k += 1
        out[out0 + t] = q
        r2 = r + r
        if r2 >= 1.0:
            q = a * q * (1.0 - q)
            r = r2 - 1.0
        else:
            r = r2
    return q, r


@njit(cache=True, fastmath=True, nogil=True)
def logistic_warm(alphas, x, n_steps):
    B = alphas.shape[0]
    for _ in range(n_steps):
        for b in range(B):
            x[b] = alphas[b] * x[b] * (1.0 - x[b])


@njit(cache=True, fastmath=True, nogil=True)
def logistic_batch(alphas, x, n_steps, out):
    """Advance a batch of plain logistic maps, recording into out (n, B)."""
    B = alphas.shape[0]
    for t in range(n_steps):
        for b in range(B):
            xb = alphas[b] * x[b] * (1.0 - x[b])
            x[b] = xb
            out[t, b] = xb


@njit(cache=True, fastmath=True, nogil=True)
def detect_cycles(alphas, x_end, p_max, tol):
    """Smallest stable cycle through each converged point, if any.

    x_end holds iterates after a long transient from the critical point,
    which is attracted by any stable periodic orbit.  A parameter is called
    regular when the orbit returns within tol in at most p_max steps and the
    derivative product along the cycle is strictly contracting.

    Returns (period, orbit): period 0 marks a chaotic parameter.
    """
    B = alphas.shape[0]
    period = np.zeros(B, dtype=np.int64)
    orbit = np.zeros((B, p_max), dtype=np.float64)
    for b in range(B):
        a = alphas[b]
        y0 = x_end[b]
        y = y0
        for p in range(1, p_max + 1):
            y = a * y * (1.0 - y)
            if abs(y - y0) < tol:
                lam = 1.0
                z = y0
                for _ in range(p):
                    lam *= abs(a * (1.0 - 2.0 * z))
                    z = a * z * (1.0 - z)
                if lam < 1.0:
                    period[b] = p
                    w = y0
                    for i in range(p):
                        orbit[b, i] = w
                        w = a * w * (1.0 - w)
                break
    return period, orbit


@njit(cache=True, fastmath=True, nogil=True)
def driven_logistic(drive, base, gain, macro0, clamp, out):
    """Macro map iterated under a prescribed per-step drive sequence."""
    macro = macro0
    n = drive.shape[0]
    for t in range(n):
        A = base + gain * drive[t]
        if A > 4.0:
            if clamp:
                A = 4.0
            else:
                return t, macro
        if A <= 0.0:
            return t, macro
        out[t] = macro
        macro = A * macro * (1.0 - macro)
    return -1, macro


@njit(cache=True, fastmath=True, nogil=True)
def const_logistic(A, macro0, n_steps, out):
    macro = macro0
    for t in range(n_steps):
        out[t] = macro
        macro = A * macro * (1.0 - macro)
    return macro


@njit(cache=True, fastmath=True, nogil=True)
def lag_products(x, n_lags):
    """Raw lag sums sum_t x_t x_{t+m} / (n - m) for m = 0..n_lags."""
    n = x.shape[0]
    out = np.empty(n_lags + 1)
    for m in range(n_lags + 1):
        s = 0.0
        for t in range(n - m):
            s += x[t] * x[t + m]
        out[m] = s / (n - m)
    return out
