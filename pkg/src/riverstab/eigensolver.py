"""Principal eigenvalue of the advection-diffusion operator and related quantities.

The finite-volume matrix A is tridiagonal with positive off-diagonals, hence
similar (by a positive diagonal scaling W^{1/2}) to a symmetric matrix S.
Inverse iteration runs on S; the shift starts at the Gershgorin bound plus
one and afterwards follows the Collatz-Wielandt upper bound
``max_i (S y)_i / y_i``, which never falls below the principal eigenvalue, so
every iterate stays positive.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .discretization import DiscreteOperator, Grid, assemble

MAX_ITER = 500
STEP_TOL = 1e-12
RESIDUAL_TOL = 1e-10
DENSE_LIMIT = 256

# cross-check every principal_eigen call against a dense solve (n <= DENSE_LIMIT)
CROSS_CHECK = True


class EigenError(RuntimeError):
    pass


@dataclass
class EigenPair:
    sigma1: float
    phi1: np.ndarray = field(repr=False)
    residual: float
    method: str
    iterations: int = 0
    dense_sigma1: float | None = None

    def to_metadata(self) -> dict:
        return {"schema": 1, "sigma1": self.sigma1, "residual": self.residual,
                "method": self.method, "iterations": self.iterations,
                "dense_sigma1": self.dense_sigma1}

    def write(self, grid: Grid, csv_path, json_path) -> None:
        with open(csv_path, "w") as fh:
            fh.write("x,phi1\n")
            for x, v in zip(grid.nodes, self.phi1):
                fh.write(f"{x!r},{float(v)!r}\n")
        with open(json_path, "w") as fh:
            json.dump(self.to_metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _refined_quotient(diag, off, y) -> float:
    """Rayleigh quotient of the symmetrized matrix in extended precision.

    A double-precision eigenvalue carries an absolute error of order
    eps * |A|, which for large d / dx^2 dominates sigma_1 itself; the
    quotient of an accurate eigenvector does not.
    """
    D, O = np.asarray(diag, np.longdouble), np.asarray(off, np.longdouble)
    Y = np.asarray(y, np.longdouble)
    SY = D * Y
    SY[:-1] += O * Y[1:]
    SY[1:] += O * Y[:-1]
    return float(np.dot(Y, SY) / np.dot(Y, Y))


def _dense_sigma1(op: DiscreteOperator) -> float:
    diag, off = op.symmetrized()
    S = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return float(sla.eigvalsh(S)[-1])


def principal_eigen(op: DiscreteOperator, start: np.ndarray | None = None,
                    cross_check: bool | None = None) -> EigenPair:
    """Principal eigenvalue and positive eigenvector (max = 1) of ``op``.

    ``start`` is an optional positive guess for the eigenvector of A (e.g. a
    neighbouring solve). ``cross_check`` compares against a dense symmetric
    eigensolve when ``n <= DENSE_LIMIT``; ``None`` uses :data:`CROSS_CHECK`.
    """
    diag, off = op.symmetrized()
    if np.any(off <= 0) or not np.all(np.isfinite(off)):
        raise EigenError("operator is not symmetrizable (non-positive off-diagonal)")
    logw = op.log_weights()
    half = 0.5 * (logw - logw.max())
    ab = np.zeros((3, op.n))

    def smul(v):
        out = diag * v
        out[:-1] += off * v[1:]
        out[1:] += off * v[:-1]
        return out

    if start is None:
        y = np.ones(op.n)
    else:
        # y = W^{1/2} phi, computed in logs
        ly = np.log(np.maximum(start, 1e-300)) + half
        y = np.exp(ly - ly.max())
    s = op.gershgorin_upper() + 1.0
    scale = max(1.0, op.norm_inf())
    ab[0, 1:] = -off
    ab[2, :-1] = -off
    converged = False
    for it in range(1, MAX_ITER + 1):
        ab[1] = s - diag
        z = sla.solve_banded((1, 1), ab, y, check_finite=False)
        if not np.all(z > 0):
            z = np.abs(z)
        z /= z.max()
        step = float(np.max(np.abs(z - y)))
        y = z
        if step <= STEP_TOL:
            converged = True
            break
        sy = smul(y)
        ok = y > 1e-200
        ratios = sy[ok] / y[ok]
        lo, hi = float(ratios.min()), float(ratios.max())
        s = min(s, hi + max(hi - lo, 1e-13 * scale))
    if not converged:
        raise EigenError(f"inverse iteration did not converge in {MAX_ITER} steps "
                         f"(n={op.n}, d={op.d:g}, q={op.q:g}); refine the grid")
    sigma = _refined_quotient(diag, off, y)
    with np.errstate(under="ignore", divide="ignore"):
        lphi = np.log(y) - half
    phi = np.exp(lphi - lphi.max())
    residual = float(np.max(np.abs(op.matvec(phi) - sigma * phi)))
    if residual > RESIDUAL_TOL * (abs(sigma) + op.norm_inf()):
        raise EigenError(f"eigen residual {residual:.3e} too large")
    pair = EigenPair(sigma, phi, residual, "inverse-iteration", it)
    if cross_check is None:
        cross_check = CROSS_CHECK
    if cross_check and op.n <= DENSE_LIMIT:
        dense = _dense_sigma1(op)
        pair.dense_sigma1 = dense
        if abs(dense - sigma) > 1e-9 * max(1.0, abs(sigma)) + 1e-13 * op.norm_inf():
            raise EigenError(f"inverse iteration {sigma!r} disagrees with dense solve {dense!r}")
    return pair


def dense_eigen(op: DiscreteOperator) -> EigenPair:
    """Principal pair from a dense symmetric eigensolve of the scaled matrix."""
    diag, off = op.symmetrized()
    S = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    w, v = sla.eigh(S)
    y = np.abs(v[:, -1])
    logw = op.log_weights()
    with np.errstate(divide="ignore"):
        lphi = np.log(y) - 0.5 * (logw - logw.max())
    phi = np.exp(lphi - lphi.max())
    sigma = _refined_quotient(diag, off, y)
    residual = float(np.max(np.abs(op.matvec(phi) - sigma * phi)))
    return EigenPair(sigma, phi, residual, "dense", 0, sigma)


MAX_REFINED_CELLS = 1 << 16


def sigma1(d: float, q: float, h, grid: Grid, refine: bool = True, **kw) -> float:
    """sigma_1(d, q, h) on ``grid``.

    When inverse iteration stalls (typically an unresolved boundary layer,
    d << q dx) and ``refine`` is set, the grid is doubled and the solve
    retried; nodal arrays are linearly interpolated onto the finer grid.
    """
    while True:
        try:
            return principal_eigen(assemble(d, q, h, grid), **kw).sigma1
        except EigenError:
            if not refine or 2 * grid.n > MAX_REFINED_CELLS:
                raise
        fine = Grid(2 * grid.n)
        if isinstance(h, np.ndarray) and h.ndim == 1:
            h = np.interp(fine.nodes, grid.nodes, h)
        grid = fine


def rayleigh_quotient(omega, op: DiscreteOperator) -> float:
    """Weighted quotient whose supremum over ``omega`` is the principal eigenvalue.

    Discrete form of

        [int w(-d omega_x^2 + h omega^2) dx - q omega(0)^2] / int w omega^2 dx,

    with w the operator's own exponential weight (``log_weights``), gradients
    taken across cell faces and omega(0) the first cell value. Because the
    weights are those that symmetrize A, the quotient of the computed
    eigenvector reproduces sigma_1 and no trial function exceeds it.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (op.n,):
        raise ValueError("trial function does not match the operator grid")
    logw = op.log_weights()
    w = np.exp(logw - logw.max())
    den = float(np.sum(w * omega**2))
    if den == 0.0:
        raise ZeroDivisionError("trial function is zero on the weighted grid")
    dx = op.grid.dx
    # exact row sums: h, plus the inflow loss -q/dx in the first cell
    rowsum = op.h.copy()
    rowsum[0] -= op.q / dx
    grad = np.diff(omega) / dx
    # -d w omega_x^2 term, face coefficient w_i * upper_i * dx^2 ~ d exp(-q x/d)
    flux_part = -np.sum(w[:-1] * op.upper * dx**2 * grad**2)
    # rowsum = h except in the first cell, where it also carries -q/dx
    mass_part = float(np.sum(w * rowsum * omega**2))
    return (flux_part + mass_part) / den


# -- indefinite weight problem -------------------------------------------------

class LambdaStarError(RuntimeError):
    pass


@dataclass
class LambdaStar:
    mu: float
    value: float
    defined: bool
    psi: np.ndarray | None = field(default=None, repr=False)
    value_pencil: float | None = None
    value_bisection: float | None = None
    residual: float | None = None
    weight_integral: float = float("nan")

    def to_dict(self) -> dict:
        return {"mu": self.mu, "value": self.value, "defined": self.defined,
                "value_pencil": self.value_pencil, "value_bisection": self.value_bisection,
                "residual": self.residual, "weight_integral": self.weight_integral}


INTEGRAL_TOL = 1e-9
AGREEMENT_TOL = 1e-6


def _stiffness(grid: Grid) -> DiscreteOperator:
    return assemble(1.0, 0.0, 0.0, grid)


def lambda_star_pencil(m: np.ndarray, grid: Grid) -> tuple[float, np.ndarray]:
    """Smallest positive eigenvalue of -psi'' = lam m psi from a definite pencil.

    With K the Neumann stiffness and M = diag(m), K - c M is positive definite
    for 0 < c < lam*, and then ``M v = tau (K - c M) v`` is a symmetric-definite
    problem whose largest tau gives ``lam* = c + 1/tau``.
    """
    A0 = _stiffness(grid)
    Kb = np.zeros((2, grid.n))  # upper banded storage for cholesky_banded
    Kb[0, 1:] = -A0.upper
    Kb[1] = -A0.diag
    c = 1.0
    for _ in range(200):
        B = Kb.copy()
        B[1] -= c * m
        try:
            sla.cholesky_banded(B, lower=False)
            break
        except sla.LinAlgError:
            c *= 0.5
    else:
        raise LambdaStarError("could not find a definite shift for the weight pencil")
    Bd = np.diag(B[1]) + np.diag(B[0, 1:], 1) + np.diag(B[0, 1:], -1)
    tau, vec = sla.eigh(np.diag(m), Bd)
    if tau[-1] <= 0:
        raise LambdaStarError("weight pencil has no positive eigenvalue")
    psi = vec[:, -1]
    psi = psi / psi[np.argmax(np.abs(psi))]
    return c + 1.0 / float(tau[-1]), psi


def sigma1_tridiagonal(op: DiscreteOperator) -> float:
    """Largest eigenvalue of the symmetrized matrix by LAPACK bisection (stebz)."""
    diag, off = op.symmetrized()
    n = op.n
    return float(sla.eigvalsh_tridiagonal(diag, off, select="i",
                                          select_range=(n - 1, n - 1))[0])


def lambda_star_bisection(m: np.ndarray, grid: Grid, rtol: float = 1e-11) -> float:
    """``1/nu`` at the root of ``nu -> sigma_1(nu, 0, m)`` (bisection in log nu).

    sigma_1 is decreasing in nu, tends to max m > 0 as nu -> 0 and to int m < 0
    as nu -> infinity. The initial bracket [1e-4, 1e6] is widened by decades
    when needed.
    """
    def s(nu):
        return sigma1_tridiagonal(assemble(nu, 0.0, m, grid))

    lo, hi = 1e-4, 1e6
    while s(lo) <= 0:
        lo *= 0.1
        if lo < 1e-16:
            raise LambdaStarError("sigma_1(nu, 0, m) stays non-positive as nu -> 0")
    while s(hi) >= 0:
        hi *= 10.0
        if hi > 1e14:
            raise LambdaStarError("sigma_1(nu, 0, m) stays non-negative as nu -> infinity")
    llo, lhi = math.log(lo), math.log(hi)
    while lhi - llo > rtol:
        mid = 0.5 * (llo + lhi)
        if s(math.exp(mid)) > 0:
            llo = mid
        else:
            lhi = mid
    return 1.0 / math.exp(0.5 * (llo + lhi))


def lambda_star_weight(m, grid: Grid, mu: float = float("nan")) -> LambdaStar:
    """lambda* for an arbitrary nodal weight ``m`` (Neumann conditions)."""
    m = np.asarray(m, dtype=float)
    integral = grid.integrate(m)
    if not np.max(m) > 0:
        return LambdaStar(mu, float("nan"), False, weight_integral=integral)
    if integral >= -INTEGRAL_TOL:
        return LambdaStar(mu, 0.0, True, np.ones(grid.n), weight_integral=integral)
    lam_a, psi = lambda_star_pencil(m, grid)
    lam_b = lambda_star_bisection(m, grid)
    if abs(lam_a - lam_b) > AGREEMENT_TOL * max(lam_a, lam_b):
        raise LambdaStarError(f"lambda* methods disagree: pencil {lam_a!r}, bisection {lam_b!r}")
    A0 = _stiffness(grid)
    res = np.max(np.abs(A0.matvec(psi) + lam_a * m * psi))
    res /= A0.norm_inf() + lam_a * np.max(np.abs(m))
    return LambdaStar(mu, lam_a, True, psi, lam_a, lam_b, float(res), integral)


def lambda_star(mu: float, b: float, gamma: float, eta) -> LambdaStar:
    """lambda*(mu) for the weight b*eta - gamma, ``eta`` a SteadyState at q = 0."""
    if not (b > 0 and gamma > 0):
        raise ValueError("b and gamma must be positive")
    return lambda_star_weight(b * eta.field - gamma, eta.grid, mu)
