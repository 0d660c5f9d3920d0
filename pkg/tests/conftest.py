import numpy as np
import pytest

from chaosbath.micro import ObservableKind
from chaosbath.table import build_reduction_table


@pytest.fixture(scope="session")
def mini_table():
    """Coarse reduction table over a span wide enough for small shifts.

    Spacing 1e-3 keeps the build cheap; epsilon values used against this
    table must be multiples of the spacing.
    """
    alphas = np.linspace(3.79, 3.97, 181)
    return build_reduction_table(
        alphas=alphas,
        observables=(ObservableKind.MEAN_ZERO_QUADRATIC, ObservableKind.SQUARE),
        n_lags=64, n_init=1, n_steps=30_000, burn_in=2_000, seed=99)
