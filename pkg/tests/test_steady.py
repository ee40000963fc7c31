import json

import numpy as np
import pytest
from oracles import shooting_sigma1
from scipy.optimize import brentq

from riverstab.discretization import Grid
from riverstab.eigensolver import sigma1
from riverstab.profiles import parse_profile
from riverstab.scenario import P4
from riverstab.steady import (NoSteadyState, SteadyError, ThetaBranch, find_qstar,
                              flux_identity_gap, solve_eta, solve_theta)


def test_homogeneous_eta(grid):
    eta = solve_eta(1.0, 1.0, 2.0, grid)
    np.testing.assert_allclose(eta.field, 2.0, atol=1e-12)


def test_homogeneous_theta_at_zero_flow(grid):
    th = solve_theta(1.0, 0.0, 1.0, 2.0, grid)
    np.testing.assert_allclose(th.field, 2.0, atol=1e-12)


def test_eta_small_diffusion_limit(grid, p2):
    r, K = p2
    assert np.max(np.abs(solve_eta(1e-3, r, K, grid).field - K(grid.nodes))) <= 0.05


def test_eta_large_diffusion_limit(grid, p2):
    r, K = p2
    rv, Kv = r(grid.nodes), K(grid.nodes)
    target = grid.integrate(rv) / grid.integrate(rv / Kv)
    assert np.max(np.abs(solve_eta(1e4, r, K, grid).field - target)) <= 0.01


@pytest.mark.parametrize("mu", [0.01, 0.1, 1.0, 10.0, 100.0])
def test_eta_bounds_and_residual(grid, p2, mu):
    r, K = p2
    eta = solve_eta(mu, r, K, grid)
    assert np.all(eta.field > 1.5) and np.all(eta.field < 2.5)
    assert eta.residual <= 1e-10 * eta.max


def test_max_eta_decreasing_in_mu(grid, p2):
    maxes = [solve_eta(mu, *p2, grid).max for mu in (0.01, 0.1, 1.0, 10.0, 100.0)]
    assert all(a > b for a, b in zip(maxes, maxes[1:]))


@pytest.mark.parametrize("mu", [0.01, 0.1, 1.0, 10.0])
def test_integral_gain_under_proportional_profiles(grid, p1, mu):
    r, K = p1
    assert solve_eta(mu, r, K, grid).integral() > grid.integrate(K(grid.nodes))


def test_theta_at_zero_flow_is_eta(grid, p1):
    eta = solve_eta(1.0, *p1, grid)
    th = solve_theta(1.0, 0.0, *p1, grid)
    assert np.max(np.abs(th.field - eta.field)) <= 1e-10


def test_theta_large_diffusion_limit(grid, p1):
    # (int r - q) / int(r/K) = (1.25 - 0.3) / (2/3) = 1.425 since r/K = 2/3
    th = solve_theta(1e4, 0.3, *p1, grid)
    assert np.max(np.abs(th.field - 1.425)) <= 0.01


@pytest.mark.parametrize("mu", [0.1, 1.0, 10.0])
def test_theta_decreasing_in_q_and_increasing_in_x(grid, p1, mu):
    br = ThetaBranch(mu, *p1, grid)
    prev = br.eta.field
    for q in br.qstar * np.linspace(0.05, 0.95, 8):
        th = br.solve(q)
        assert np.all(th.field > 0) and np.all(th.field < 2.25)
        assert np.all(th.field < prev)
        assert np.all(np.diff(th.field) > 0)
        assert th.residual <= 1e-10 * th.max
        prev = th.field


def test_theta_small_q_close_to_eta(grid, p1):
    br = ThetaBranch(1.0, *p1, grid)
    assert np.max(np.abs(br.solve(1e-6).field - br.eta.field)) <= 1e-4


@pytest.mark.parametrize("mu", [0.1, 1.0, 10.0])
def test_flux_identity(grid, p1, mu):
    br = ThetaBranch(mu, *p1, grid)
    th = br.solve(0.5 * br.qstar)
    assert flux_identity_gap(th, *p1) <= 1e-8


def test_theta_branch_cache_consistent(grid, p1):
    a = ThetaBranch(1.0, *p1, grid)
    b = ThetaBranch(1.0, *p1, grid)
    q = 0.37 * a.qstar
    a.solve(0.8 * a.qstar)
    np.testing.assert_allclose(a.solve(q).field, b.solve(q).field, atol=1e-10)


def test_no_steady_state_above_qstar(grid, p1):
    with pytest.raises(NoSteadyState, match=r"no positive steady state \(q ≥ q\*\)"):
        solve_theta(1.0, 10.0, *p1, grid)


def test_qstar_uniform_growth(grid):
    w = find_qstar(1.0, 1.0, grid)
    assert abs(sigma1(1.0, w.qstar, 1.0, grid)) <= 1e-8
    assert sigma1(1.0, w.qstar - 1e-4, 1.0, grid) > 0 > sigma1(1.0, w.qstar + 1e-4, 1.0, grid)
    assert w.bracket_width <= 1e-10


def test_qstar_against_continuous_oracle(grid):
    # q* is the root of q -> sigma_1(1, q, 1) for the continuous problem
    exact = brentq(lambda q: shooting_sigma1(1.0, q, lambda x: 1.0, -4.0, 1.5), 0.5, 3.0,
                   xtol=1e-10)
    assert find_qstar(1.0, 1.0, grid).qstar == pytest.approx(exact, abs=1e-4)


def test_qstar_grows_with_growth_rate(grid, p2):
    r = p2[0]
    assert find_qstar(1.0, r.scaled(2.0), grid).qstar > find_qstar(1.0, r, grid).qstar


def test_qstar_small_diffusion(grid, p2):
    assert find_qstar(1e-4, p2[0], grid).qstar <= 0.5


def test_qstar_needs_positive_growth(grid):
    with pytest.raises(SteadyError):
        find_qstar(1.0, -1.0, grid)


@pytest.mark.parametrize("mu", [0.01, 0.1, 1.0, 10.0])
def test_steep_profiles_two_starts_agree(grid, mu):
    r, K = parse_profile(P4[0]), parse_profile(P4[1])
    eta = solve_eta(mu, r, K, grid, check_unique=True)
    assert np.all(eta.field > 1.0) and np.all(eta.field < 4.0)


def test_bad_mu(grid, p1):
    with pytest.raises(ValueError):
        solve_eta(0.0, *p1, grid)


def test_steady_export(tmp_path, grid, p1):
    eta = solve_eta(1.0, *p1, grid)
    eta.write(tmp_path / "s.csv", tmp_path / "s.json")
    meta = json.loads((tmp_path / "s.json").read_text())
    assert meta["schema"] == 1 and meta["q"] == 0.0 and meta["n"] == grid.n
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "x,value" and len(rows) == grid.n + 1


def test_coarse_grid_works():
    g = Grid(16)
    r, K = parse_profile("1 + x"), parse_profile("2 + x")
    assert solve_eta(1.0, r, K, g).residual <= 1e-10 * 3
