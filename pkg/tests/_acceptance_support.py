"""Shared constants and the cached reduction table for the acceptance suite.

The table covers the full parameter grid at desk-scale Monte Carlo cost
(one initialization of 49896 steps per chaotic parameter instead of the
reference ten of 399168): quadrature against the smooth parameter law
averages the per-parameter noise far below every tolerance used here.
The build lands in a repo-local cache directory so repeat runs only pay
the load time.
"""

from pathlib import Path

import numpy as np

from chaosbath.micro import ObservableKind
from chaosbath.table import build_reduction_table, load_table, save_table

CACHE_DIR = Path(__file__).resolve().parent.parent / ".cache" / "acceptance_table"

TABLE_SEED = 20260808
TABLE_N_LAGS = 256
TABLE_MC_STEPS = 49_896          # 399168 / 8, keeping the prime-factor-rich form
TABLE_MC_INITS = 1
TABLE_MC_BURN = 10_000

EPS_GRID = np.linspace(0.0, 0.06, 9)

OBSERVABLES = (ObservableKind.MEAN_ZERO_QUADRATIC, ObservableKind.SQUARE)


def acceptance_table():
    try:
        return load_table(CACHE_DIR, observables=OBSERVABLES)
    except FileNotFoundError:
        tab = build_reduction_table(
            observables=OBSERVABLES, n_lags=TABLE_N_LAGS,
            n_init=TABLE_MC_INITS, n_steps=TABLE_MC_STEPS,
            burn_in=TABLE_MC_BURN, seed=TABLE_SEED)
        save_table(tab, CACHE_DIR)
        return load_table(CACHE_DIR, observables=OBSERVABLES)
