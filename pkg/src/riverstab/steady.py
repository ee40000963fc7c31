"""Positive steady states of the single-species logistic model.

``eta`` solves  mu eta'' + r eta (1 - eta/K) = 0  with Neumann conditions and
``theta`` solves  mu theta'' - q theta' + r theta (1 - theta/K) = 0  with the
upstream zero-flux / downstream Neumann conditions.  Both are computed by
Newton's method on the finite-volume residual; theta is continued in q from
eta.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import solve_banded

from .discretization import DiscreteOperator, Grid, assemble
from .eigensolver import EigenError, principal_eigen, sigma1
from .profiles import Profile

NEWTON_MAX = 100
RESIDUAL_TOL = 1e-10
QSTAR_WIDTH = 1e-10
CONTINUATION_STEPS = 40
PTC_MAX = 400


class SteadyError(RuntimeError):
    pass


class NoSteadyState(SteadyError):
    """q >= q*: the only non-negative steady state is zero."""


@dataclass
class SteadyState:
    field: np.ndarray = dc_field(repr=False)
    mu: float
    q: float
    residual: float
    newton_iters: int
    grid: Grid = dc_field(repr=False)

    def integral(self) -> float:
        return self.grid.integrate(self.field)

    @property
    def max(self) -> float:
        return float(self.field.max())

    def to_metadata(self) -> dict:
        return {"schema": 1, "mu": self.mu, "q": self.q, "residual": self.residual,
                "iterations": self.newton_iters, "n": self.grid.n,
                "integral": self.integral(), "max": self.max, "min": float(self.field.min())}

    def write(self, csv_path, json_path) -> None:
        with open(csv_path, "w") as fh:
            fh.write("x,value\n")
            for x, v in zip(self.grid.nodes, self.field):
                fh.write(f"{x!r},{float(v)!r}\n")
        with open(json_path, "w") as fh:
            json.dump(self.to_metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class WashoutThreshold:
    mu: float
    qstar: float
    bracket_width: float
    sigma_at_qstar: float = float("nan")

    def to_dict(self) -> dict:
        return {"mu": self.mu, "qstar": self.qstar, "bracket_width": self.bracket_width,
                "sigma_at_qstar": self.sigma_at_qstar}


def _values(p, grid: Grid) -> np.ndarray:
    if isinstance(p, Profile):
        return p(grid.nodes)
    return np.broadcast_to(np.asarray(p, dtype=float), (grid.n,)).copy()


def _relative_residual(F: np.ndarray, op: DiscreteOperator, r: np.ndarray) -> float:
    # backward-error scaling: roundoff in A u grows like eps * mu / dx^2
    return float(np.max(np.abs(F))) / (op.norm_inf() + float(np.max(np.abs(r))))


def _imex_smooth(op: DiscreteOperator, r, K, u, steps=20, dt=None):
    slope = np.max(np.abs(r)) * 2.0
    dt = min(0.1, 0.5 / slope) if dt is None else dt
    ab = -dt * op.banded()
    ab[1] += 1.0
    for _ in range(steps):
        u = solve_banded((1, 1), ab, u + dt * r * u * (1.0 - u / K))
        u = np.maximum(u, 0.0)
    return u


def _residual(op, r, K, u):
    return op.matvec(u) + r * u * (1.0 - u / K)


def newton_steady(op: DiscreteOperator, r: np.ndarray, K: np.ndarray, u0: np.ndarray,
                  smooth: bool = True, transient: bool = False) -> tuple[np.ndarray, float, int]:
    """Solve ``A u + r u (1 - u/K) = 0`` from ``u0``; ``op`` has zero potential.

    Returns the solution, its relative residual ``|F|_inf / (|A|_inf + |r|_inf)``
    and the iteration count.  If the residual fails to halve over five
    iterations, 20 IMEX time steps are taken once before Newton resumes; a
    second stall switches to pseudo-transient continuation, whose pseudo time
    step grows as the residual falls until plain Newton is recovered.
    ``transient=True`` uses pseudo-transient continuation from the start, which
    follows the dynamics away from the trivial state for starts below K/2.
    """
    u = np.array(u0, dtype=float)
    ab = op.banded()
    history = []
    smoothed = False
    inv_tau = float(np.max(np.abs(r))) if transient else 0.0
    budget = NEWTON_MAX + (PTC_MAX if transient else 0)
    it = 0
    while it < budget:
        F = _residual(op, r, K, u)
        res = _relative_residual(F, op, r)
        fnorm = float(np.max(np.abs(F)))
        history.append(res)
        scale = max(1.0, float(u.max()))
        if res <= 1e-14 * scale:
            return u, res, it
        stalled = (len(history) > 5 and history[-1] > 0.5 * history[-6]
                   and res > RESIDUAL_TOL * scale)
        if smooth and stalled and inv_tau == 0.0:
            history = []
            if not smoothed:
                u = _imex_smooth(op, r, K, u)
                smoothed = True
            else:
                inv_tau = float(np.max(np.abs(r)))
                budget = it + PTC_MAX
            continue
        J = ab.copy()
        J[1] += r * (1.0 - 2.0 * u / K) - inv_tau
        du = solve_banded((1, 1), J, -F, check_finite=False)
        t = 1.0
        # fraction-to-boundary damping keeps iterates away from the trivial state
        while np.any(u + t * du < 0.5 * u) and t > 1e-4:
            t *= 0.5
        if inv_tau == 0.0:
            # backtrack until the residual decreases
            while t > 1e-4 and np.max(np.abs(_residual(op, r, K, u + t * du))) >= fnorm:
                t *= 0.5
        u = u + t * du
        it += 1
        if inv_tau:
            # switched evolution relaxation
            new = float(np.max(np.abs(_residual(op, r, K, u))))
            inv_tau *= new / fnorm
            if inv_tau < 1e-12:
                inv_tau = 0.0
            continue
        if t == 1.0 and np.max(np.abs(du)) <= 1e-13 * scale and res <= RESIDUAL_TOL * scale:
            return u, _relative_residual(_residual(op, r, K, u), op, r), it
    raise SteadyError(f"Newton did not converge (mu={op.d:g}, q={op.q:g}, residual {res:.3e})")


def _check_positive(u, what):
    if u.max() < 1e-8:
        raise SteadyError(f"{what}: Newton converged to the trivial state")
    if not np.all(u > 0):
        raise SteadyError(f"{what}: Newton converged to a sign-changing or zero solution")


def solve_eta(mu: float, r, K, grid: Grid, check_unique: bool = True) -> SteadyState:
    """Neumann steady state eta(mu), started from K (and from min K as a tripwire)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    rv, Kv = _values(r, grid), _values(K, grid)
    op = assemble(mu, 0.0, 0.0, grid)
    u, res, its = newton_steady(op, rv, Kv, Kv)
    _check_positive(u, "eta")
    if check_unique:
        u2, _, _ = newton_steady(op, rv, Kv, np.full(grid.n, Kv.min()), transient=True)
        # the Jacobian's conditioning grows like mu / dx^2
        tol = (1e-8 + 100 * np.finfo(float).eps * op.norm_inf()) * u.max()
        if np.max(np.abs(u2 - u)) > tol:
            raise SteadyError("eta: two Newton starts reached different solutions")
    return SteadyState(u, float(mu), 0.0, res, its, grid)


def find_qstar(mu: float, r, grid: Grid, width: float = QSTAR_WIDTH) -> WashoutThreshold:
    """Washout advection q*(mu): the sign change of q -> sigma_1(mu, q, r)."""
    rv = _values(r, grid)
    cache = {}

    def s(q):
        try:
            p = principal_eigen(assemble(mu, q, rv, grid), start=cache.get("phi"))
        except EigenError:
            # unresolved boundary layer far above q*; only the sign is needed here
            return sigma1(mu, q, rv, grid)
        cache["phi"] = p.phi1
        return p.sigma1

    if s(0.0) <= 0:
        raise SteadyError(f"sigma_1(mu, 0, r) <= 0 at mu={mu:g}: no washout threshold")
    lo, hi = 0.0, 1.0
    while s(hi) >= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e8:
            raise SteadyError("q* bracket search diverged")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if s(mid) > 0:
            lo = mid
        else:
            hi = mid
    qstar = 0.5 * (lo + hi)
    return WashoutThreshold(float(mu), qstar, hi - lo, s(qstar))


class ThetaBranch:
    """theta(mu, .) continued in q from eta, with solved points cached.

    ``solve(q)`` starts Newton from the cached solution at the nearest smaller q
    and inserts intermediate continuation steps of at most q*/40, halving them
    when Newton fails.
    """

    def __init__(self, mu: float, r, K, grid: Grid, qstar: float | None = None,
                 eta: SteadyState | None = None):
        self.mu, self.grid = float(mu), grid
        self.r, self.K = _values(r, grid), _values(K, grid)
        if qstar is None:
            qstar = find_qstar(mu, self.r, grid).qstar
        self.qstar = float(qstar)
        if eta is None:
            eta = solve_eta(mu, self.r, self.K, grid)
        self.eta = eta
        self._qs = [0.0]
        self._fields = [eta.field]
        self._meta = {0.0: (eta.residual, eta.newton_iters)}

    def _newton(self, q, start):
        op = assemble(self.mu, q, 0.0, self.grid)
        u, res, its = newton_steady(op, self.r, self.K, start)
        _check_positive(u, "theta")
        return u, res, its

    def _insert(self, q, u, res, its):
        i = int(np.searchsorted(self._qs, q))
        self._qs.insert(i, q)
        self._fields.insert(i, u)
        self._meta[q] = (res, its)

    def solve(self, q: float) -> SteadyState:
        q = float(q)
        if q < 0:
            raise ValueError("q must be non-negative")
        if q >= self.qstar:
            raise NoSteadyState(f"no positive steady state (q ≥ q*): q={q:g}, q*={self.qstar:.10g}")
        if q in self._meta:
            i = self._qs.index(q)
            res, its = self._meta[q]
            return SteadyState(self._fields[i].copy(), self.mu, q, res, its, self.grid)
        i = int(np.searchsorted(self._qs, q)) - 1
        q0, u = self._qs[i], self._fields[i]
        step = self.qstar / CONTINUATION_STEPS
        total = 0
        while q0 < q:
            q1 = min(q, q0 + step)
            try:
                u1, res, its = self._newton(q1, u)
            except SteadyError:
                step *= 0.5
                if step < 1e-12 * self.qstar:
                    raise
                continue
            total += its
            q0, u = q1, u1
            self._insert(q0, u, res, its)
        res, _ = self._meta[q]
        return SteadyState(u.copy(), self.mu, q, res, total, self.grid)


def solve_theta(mu: float, q: float, r, K, grid: Grid, qstar: float | None = None,
                eta: SteadyState | None = None) -> SteadyState:
    """Positive steady state theta(mu, q) for 0 <= q < q*(mu)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    if q == 0:
        return eta if eta is not None else solve_eta(mu, r, K, grid)
    if qstar is None:
        qstar = find_qstar(mu, r, grid).qstar
    if q >= qstar:
        raise NoSteadyState(f"no positive steady state (q ≥ q*): q={q:g}, q*={qstar:.10g}")
    return ThetaBranch(mu, r, K, grid, qstar, eta).solve(q)


def flux_identity_gap(theta: SteadyState, r, K) -> float:
    """|q theta(1) - int r theta (1 - theta/K)| with theta(1) the last cell value."""
    rv, Kv = _values(r, theta.grid), _values(K, theta.grid)
    u = theta.field
    return abs(theta.q * u[-1] - theta.grid.integrate(rv * u * (1.0 - u / Kv)))
