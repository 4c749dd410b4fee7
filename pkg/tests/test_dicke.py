import math

import numpy as np
import pytest
from scipy.integrate import simpson

from oracles import DenseSuperradiance
from superburst.core import NonPositive, TimeGrid
from superburst.dicke import equal_time_g2, evolve, generator, ladder, two_time_g2

GAMMA = 1 / 30.5


def test_ladder_values():
    np.testing.assert_allclose(ladder(3) ** 2, [0, 3, 4, 3])
    with pytest.raises(NonPositive):
        ladder(0)


def test_generator_columns_sum_to_zero():
    a = generator(7)
    np.testing.assert_allclose(a.sum(axis=0), 0.0, atol=1e-12)


def test_single_atom_is_exponential():
    grid = TimeGrid(0.0, 150.0, 300)
    sol = evolve(1, GAMMA, grid)
    np.testing.assert_allclose(sol.flux, GAMMA * np.exp(-GAMMA * grid.times), rtol=0, atol=1e-9 * GAMMA)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_populations_and_G2_match_dense_oracle(n):
    oracle = DenseSuperradiance(n, GAMMA)
    grid = TimeGrid(0.0, 60.0, 6)
    sol = evolve(n, GAMMA, grid)
    for i, t in enumerate(grid.times):
        ref = oracle.dicke_populations(oracle.propagate(oracle.excited(), t))
        np.testing.assert_allclose(sol.rho[i], ref, atol=1e-8)

    g = two_time_g2(n, GAMMA, grid)
    for i, t1 in enumerate(grid.times):
        for j, t2 in enumerate(grid.times):
            lo, hi = sorted((t1, t2))
            assert g.G2[i, j] == pytest.approx(oracle.G2(lo, hi), abs=1e-8)


def test_trace_and_positivity():
    sol = evolve(20, GAMMA, TimeGrid(0, 300, 200))
    assert np.max(np.abs(sol.rho.sum(axis=1) - 1)) < 1e-9
    assert sol.rho.min() > -1e-10


@pytest.mark.parametrize("n", [1, 5, 12, 20])
def test_photon_number_conservation(n):
    # 30 lifetimes; emitted photons = N
    grid = TimeGrid(0.0, 30.0, 30000)
    sol = evolve(n, 1.0, grid)
    total = simpson(sol.flux_over_gamma, x=grid.times)
    assert abs(total - n) < 1e-4


def test_dicke_initial_g2():
    grid = TimeGrid(0, 1, 1)
    for n in (2, 9, 50):
        assert equal_time_g2(n, GAMMA, grid)[0] == pytest.approx(2 * (1 - 1 / n), rel=1e-13)


def test_two_time_symmetric_bitwise():
    g = two_time_g2(9, GAMMA, TimeGrid(0, 60, 40))
    assert np.array_equal(g.G2, g.G2.T)
    assert np.array_equal(np.nan_to_num(g.g2), np.nan_to_num(g.g2.T))


def test_equal_time_matches_two_time_diagonal():
    grid = TimeGrid(0, 40, 20)
    np.testing.assert_allclose(two_time_g2(6, GAMMA, grid).diagonal(), equal_time_g2(6, GAMMA, grid), rtol=1e-12)


def test_anticorrelation_for_n9():
    # cut at t1 = 0.13/gamma
    t1 = TimeGrid(0.13 / GAMMA, 0.13 / GAMMA + 0.1, 1)
    t2 = TimeGrid(0.0, 6 / GAMMA, 300)
    cut = two_time_g2(9, GAMMA, t1, t2).g2[0]
    assert np.nanmin(cut) < 0.95


def test_burst_peak_scales_quadratically():
    peaks = {}
    for n in (100, 200):
        grid = TimeGrid(0, 0.2, 4000)
        peaks[n] = evolve(n, 1.0, grid).flux_over_gamma.max()
    assert 3.6 <= peaks[200] / peaks[100] <= 4.4


def test_delay_shrinks_with_n():
    grid = TimeGrid(0, 2, 4000)
    t_peak = [grid.times[np.argmax(evolve(n, 1.0, grid).flux_over_gamma)] for n in (5, 20, 80)]
    assert t_peak[0] > t_peak[1] > t_peak[2]


def test_negative_times_rejected():
    with pytest.raises(ValueError):
        evolve(3, GAMMA, TimeGrid(-1.0, 1.0, 2))


def test_custom_initial_state():
    rho0 = np.zeros(4)
    rho0[1] = 1.0  # one excitation
    sol = evolve(3, 1.0, TimeGrid(0, 1, 1), initial=rho0)
    assert sol.flux_over_gamma[0] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        evolve(3, 1.0, TimeGrid(0, 1, 1), initial=np.ones(4))


def test_late_time_cells_missing_not_nan_propagating():
    g = two_time_g2(2, 1.0, TimeGrid(0, 2000, 4))
    assert g.missing.any()
    assert math.isfinite(g.mean_g2())
