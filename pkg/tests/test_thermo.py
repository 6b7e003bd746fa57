import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tlsszilard.dynamics import heat_extraction_curve
from tlsszilard.model import SystemParams
from tlsszilard.thermo import (
    carnot_cop,
    cop,
    cycle_summary,
    entropy_split,
    excited_population,
    internal_energy,
    irr_rev_ratio,
    measurement_entropy_reduction,
)

# frozen from scripts/oracles.py
BETA_U_012 = 0.23909161976282475
S_012 = 0.3669249912727096
BE_012 = math.log(1 / 0.12 - 1)


def shannon(d, be):
    w = np.array([1.0] + [math.exp(-be)] * d)
    p = w / w.sum()
    return float(-(p * np.log(p)).sum())


def test_energy_limits():
    assert internal_energy(1, 800.0) == 0.0
    assert internal_energy(1, 0.0) == 0.5


def test_values_at_twelve_percent():
    assert excited_population(1, BE_012) == pytest.approx(0.12, rel=1e-12)
    assert BE_012 * internal_energy(1, BE_012) == pytest.approx(BETA_U_012, rel=1e-12)
    assert entropy_split(1, BE_012)[2] == pytest.approx(S_012, rel=1e-12)
    assert measurement_entropy_reduction(1, BE_012) == pytest.approx(S_012, rel=1e-12)


def test_entropy_maximum_for_two_levels():
    assert entropy_split(1, 0.0)[2] == pytest.approx(math.log(2))


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("be", np.linspace(-5, 20, 26))
def test_entropy_matches_shannon(d, be):
    assert entropy_split(d, be)[2] == pytest.approx(shannon(d, be), abs=1e-10)


def test_entropy_split_vectorises():
    be = np.linspace(0.1, 5, 7)
    s_rev, s_irr, s = entropy_split(2, be)
    assert s.shape == (7,)
    np.testing.assert_allclose(s, s_rev + s_irr)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
def test_measurement_entropy_peaks_at_log_d(d):
    grid = np.linspace(-3, 6, 9001)
    ds = measurement_entropy_reduction(d, grid)
    assert grid[np.argmax(ds)] == pytest.approx(math.log(d), abs=2e-3)
    assert ds.max() == pytest.approx(math.log(2), abs=1e-6)


def test_measurement_entropy_vanishes_when_cold():
    assert measurement_entropy_reduction(1, 60.0) < 1e-20


def test_cop_values():
    assert cop(2.0, 1.0, 0.0) == 1.0
    assert carnot_cop(3.0, 1.0) == 0.5
    with pytest.raises(ValueError):
        cop(1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        cop(2.0, 1.0, -0.1)


@given(t_r=st.floats(1e-3, 1.0), dt=st.floats(1e-4, 1.0), ratio=st.floats(1e-9, 10))
def test_cop_below_carnot(t_r, dt, ratio):
    assert cop(t_r + dt, t_r, ratio) < carnot_cop(t_r + dt, t_r)


def test_irreversible_fraction_vanishes_slower_than_energy():
    # the ratio falls off like 1/(beta eps) while U is exponentially small
    assert irr_rev_ratio(1, 30.0) == pytest.approx(1 / 30, rel=0.02)
    assert irr_rev_ratio(1, 300.0) == pytest.approx(1 / 300, rel=1e-3)
    assert internal_energy(1, 30.0) < math.exp(-29)
    be = 4.0
    closed = (1 + math.exp(be)) * (math.log(1 + math.exp(be)) / be - 1)
    assert irr_rev_ratio(1, be) == pytest.approx(closed, rel=1e-12)


def test_degeneracy_validation():
    with pytest.raises(ValueError):
        internal_energy(0, 1.0)
    with pytest.raises(ValueError):
        entropy_split(1.5, 1.0)


def test_first_cycle_bookkeeping():
    params = SystemParams()
    c = cycle_summary(params, 50e-3, 28.3e-3)
    assert c.delta_u == pytest.approx(0.2352, abs=1e-4)
    assert c.delta_s == pytest.approx(0.358, abs=1e-3)
    assert c.w_q == -c.delta_u
    assert c.w_m == pytest.approx(50 / 28.3 * c.delta_s)
    assert 0 < c.cop < carnot_cop(50e-3, 28.3e-3)
    assert cycle_summary(params, 28.3e-3, 28.3e-3).cop is None


def test_reservoir_heat_is_about_half_the_energy():
    params = SystemParams()
    c = cycle_summary(params, 50e-3, 28.3e-3)
    hc = heat_extraction_curve(params, 28.3e-3)
    assert hc.peak / c.delta_u == pytest.approx(0.5, rel=0.2)
