"""Independent continuous-problem oracles based on ODE shooting."""
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def _end_slope(d, q, h, sigma):
    # d phi'' - q phi' + (h - sigma) phi = 0, d phi'(0) = q phi(0)
    def rhs(x, y):
        return [y[1], (q * y[1] - (h(x) - sigma) * y[0]) / d]

    sol = solve_ivp(rhs, (0.0, 1.0), [1.0, q / d], rtol=1e-12, atol=1e-14, method="DOP853")
    return sol.y[1, -1]


def shooting_sigma1(d, q, h, lo, hi, samples=400):
    """Largest sigma in [lo, hi] with phi'(1) = 0 (scan downward from hi)."""
    grid = np.linspace(hi, lo, samples)
    vals = [_end_slope(d, q, h, s) for s in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if np.sign(fa) != np.sign(fb):
            return brentq(lambda s: _end_slope(d, q, h, s), b, a, xtol=1e-14)
    raise ValueError("no eigenvalue in range")


def shooting_lambda_star(m, lo, hi, samples=400):
    """Smallest positive lam with psi'' + lam m psi = 0 and Neumann ends."""
    def slope(lam):
        sol = solve_ivp(lambda x, y: [y[1], -lam * m(x) * y[0]], (0.0, 1.0), [1.0, 0.0],
                        rtol=1e-12, atol=1e-14, method="DOP853")
        return sol.y[1, -1]

    grid = np.linspace(lo, hi, samples)
    vals = [slope(v) for v in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if np.sign(fa) != np.sign(fb):
            return brentq(slope, a, b, xtol=1e-13)
    raise ValueError("no eigenvalue in range")
