import numpy as np
import pytest

from quadsub.errors import DegenerateFit, NotConvergedError
from quadsub.slope_fit import fit_power_law, log_grid


def test_log_grid():
    t = log_grid(1e-3, 1e-1, 5)
    np.testing.assert_allclose(t, [1e-3, 10 ** -2.5, 1e-2, 10 ** -1.5, 1e-1])
    with pytest.raises(ValueError):
        log_grid(1e-2, 1e-3, 5)
    with pytest.raises(ValueError):
        log_grid(1e-3, 1e-2, 1)


def test_power_law_is_recovered():
    t = log_grid(1e-3, 1e-1, 9)
    report = fit_power_law(t, 2.0 * t ** 3, exponent=3, bound="lower")
    assert report.slope == pytest.approx(3.0, abs=1e-10)
    assert report.r_squared == pytest.approx(1.0)
    assert report.prefactor == pytest.approx(0.5)
    upper = fit_power_law(t, 2.0 * t ** 3, exponent=3, bound="upper")
    assert upper.prefactor == pytest.approx(2.0)
    assert report.to_dict()["prefactor"] == report.prefactor


@pytest.mark.parametrize("values", [[1.0, 0.0, 2.0], [1.0, -1e-18, 2.0], [1.0, float("nan"), 2.0]])
def test_non_positive_values_are_degenerate_fits(values):
    with pytest.raises(DegenerateFit) as info:
        fit_power_law([1e-3, 2e-3, 3e-3], values)
    assert isinstance(info.value, NotConvergedError)
    assert info.value.exit_code == 4
    assert info.value.report["t_grid"] == [1e-3, 2e-3, 3e-3]


@pytest.mark.parametrize(
    "t, values",
    [([1e-3, 2e-3], [1.0, 2.0, 3.0]), ([2e-3, 1e-3], [1.0, 2.0]), ([0.0, 1e-3], [1.0, 2.0])],
)
def test_bad_grids_are_input_errors(t, values):
    with pytest.raises(ValueError):
        fit_power_law(t, values)
