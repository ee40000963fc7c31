"""Time integration of the prey-only and predator-prey river models.

    u_t = mu u_xx - q u_x + u (r (1 - u/K) - v)
    v_t = nu v_xx - q v_x + v (b u - gamma)

The semi-implicit (IMEX) step solves the transport part implicitly and takes
the reaction explicitly.  I - dt A is an M-matrix, so the implicit solve
preserves non-negativity whenever the explicit reaction update does.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .discretization import DiscreteOperator, Grid, assemble
from .scenario import Scenario
from .stability import Column, predator_sigma
from .steady import SteadyError

MAX_SAMPLES = 200
BLOWUP_FACTOR = 10.0
POSITIVITY_TOL = -1e-12
INVASION_DT = 0.02
WINDOW = 100.0
CERTIFICATE_TOL = 0.02


class DynamicsError(RuntimeError):
    pass


@dataclass
class Trajectory:
    times: np.ndarray
    u_fields: np.ndarray
    v_fields: np.ndarray | None
    masses: np.ndarray
    dt_used: float
    grid: Grid = field(repr=False)
    # int v after every step, used for growth-rate fits
    step_times: np.ndarray = field(default=None, repr=False)
    step_masses: np.ndarray = field(default=None, repr=False)

    @property
    def final_u(self) -> np.ndarray:
        return self.u_fields[-1]

    @property
    def final_v(self) -> np.ndarray | None:
        return None if self.v_fields is None else self.v_fields[-1]

    def to_metadata(self) -> dict:
        return {"schema": 1, "dt": self.dt_used, "n": self.grid.n,
                "samples": len(self.times), "t_final": float(self.times[-1]),
                "mass_u_final": float(self.masses[-1, 0]),
                "mass_v_final": None if self.v_fields is None else float(self.masses[-1, 1]),
                "max_u_final": float(self.final_u.max())}

    def write(self, csv_path, json_path, extra: dict | None = None) -> None:
        with open(csv_path, "w") as fh:
            fh.write("t,x,u,v\n")
            for k, t in enumerate(self.times):
                v = self.v_fields[k] if self.v_fields is not None else None
                for i, x in enumerate(self.grid.nodes):
                    vv = "" if v is None else repr(float(v[i]))
                    fh.write(f"{float(t)!r},{x!r},{float(self.u_fields[k][i])!r},{vv}\n")
        meta = self.to_metadata()
        if extra:
            meta.update(extra)
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _implicit_solver(op: DiscreteOperator, dt: float):
    n = op.n
    M = sp.diags([-dt * op.lower, 1.0 - dt * op.diag, -dt * op.upper], [-1, 0, 1],
                 shape=(n, n), format="csc")
    return splu(M).solve


def default_dt(r, K, u0, v0=None, b: float = 0.0, gamma: float = 0.0) -> float:
    """min(0.1, 0.5 / max |reaction slope|) over the expected range of u and v."""
    U = max(float(np.max(K)), float(np.max(u0)))
    V = 0.0 if v0 is None else float(np.max(v0))
    slope = float(np.max(np.asarray(r) * (1.0 + 2.0 * U / np.asarray(K)))) + V
    if v0 is not None:
        slope = max(slope, abs(b * U - gamma) + b * U, gamma)
    return min(0.1, 0.5 / slope)


def _check(u, what, limit, t):
    if not np.all(np.isfinite(u)):
        raise DynamicsError(f"{what}: non-finite values at t={t:g}")
    if u.min() < POSITIVITY_TOL:
        raise DynamicsError(f"{what}: positivity violated ({u.min():.3e}) at t={t:g}")
    if limit is not None and u.max() > limit:
        raise DynamicsError(f"{what}: blow-up (max {u.max():.3e} > {limit:.3e}) at t={t:g}")


def _sample_every(nsteps: int) -> int:
    return max(1, math.ceil(nsteps / (MAX_SAMPLES - 1)))


def _validate_initial(u0, name):
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 < 0) or not np.any(u0 > 0):
        raise ValueError(f"{name} must be non-negative and not identically zero")
    return u0


def integrate_single(mu: float, q: float, sc: Scenario, u0, T: float,
                     dt: float | None = None) -> Trajectory:
    """Prey-only model from ``u0`` up to time ``T``."""
    grid = sc.grid
    r, K = sc.r(grid.nodes), sc.K(grid.nodes)
    u = _validate_initial(np.broadcast_to(u0, (grid.n,)), "u0").copy()
    dt = default_dt(r, K, u) if dt is None else float(dt)
    nsteps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / nsteps
    solve = _implicit_solver(assemble(mu, q, 0.0, grid), dt)
    every = _sample_every(nsteps)
    limit = BLOWUP_FACTOR * float(K.max())
    times, fields = [0.0], [u.copy()]
    for k in range(1, nsteps + 1):
        u = solve(u + dt * r * u * (1.0 - u / K))
        _check(u, "u", limit, k * dt)
        if k % every == 0 or k == nsteps:
            times.append(k * dt)
            fields.append(u.copy())
    fields = np.array(fields)
    masses = np.array([[grid.integrate(f), 0.0] for f in fields])
    return Trajectory(np.array(times), fields, None, masses, dt, grid)


def integrate_system(mu: float, nu: float, q: float, b: float, gamma: float, sc: Scenario,
                     u0, v0, T: float, dt: float | None = None, stop=None) -> Trajectory:
    """Predator-prey model; ``stop(t, int v)`` may end the run early."""
    grid = sc.grid
    r, K = sc.r(grid.nodes), sc.K(grid.nodes)
    u = _validate_initial(np.broadcast_to(u0, (grid.n,)), "u0").copy()
    v = _validate_initial(np.broadcast_to(v0, (grid.n,)), "v0").copy()
    dt = default_dt(r, K, u, v, b, gamma) if dt is None else float(dt)
    nsteps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / nsteps
    solve_u = _implicit_solver(assemble(mu, q, 0.0, grid), dt)
    solve_v = _implicit_solver(assemble(nu, q, 0.0, grid), dt)
    every = _sample_every(nsteps)
    limit = BLOWUP_FACTOR * float(K.max())
    times, us, vs = [0.0], [u.copy()], [v.copy()]
    step_t = np.empty(nsteps + 1)
    step_m = np.empty(nsteps + 1)
    step_t[0], step_m[0] = 0.0, grid.integrate(v)
    last = nsteps
    for k in range(1, nsteps + 1):
        u, v = (solve_u(u + dt * u * (r * (1.0 - u / K) - v)),
                solve_v(v + dt * v * (b * u - gamma)))
        t = k * dt
        _check(u, "u", limit, t)
        _check(v, "v", None, t)
        step_t[k], step_m[k] = t, grid.integrate(v)
        done = stop is not None and stop(t, step_m[k])
        if k % every == 0 or k == nsteps or done:
            times.append(t)
            us.append(u.copy())
            vs.append(v.copy())
        if done:
            last = k
            break
    us, vs = np.array(us), np.array(vs)
    masses = np.array([[grid.integrate(a), grid.integrate(c)] for a, c in zip(us, vs)])
    return Trajectory(np.array(times), us, vs, masses, dt, grid,
                      step_t[:last + 1].copy(), step_m[:last + 1].copy())


# -- invasion when rare --------------------------------------------------------

@dataclass
class InvasionResult:
    rate: float
    rate_half_eps: float
    certificate: float
    eps: float
    window: tuple[float, float]
    points: int
    sigma: float
    trajectory: Trajectory = field(repr=False)

    @property
    def relative_error(self) -> float:
        return abs(self.rate - self.sigma) / abs(self.sigma)

    @property
    def sign_agrees(self) -> bool:
        return np.sign(self.rate) == np.sign(self.sigma)

    def to_dict(self) -> dict:
        return {"rate": self.rate, "rate_half_eps": self.rate_half_eps,
                "certificate": self.certificate, "eps": self.eps,
                "window": list(self.window), "points": self.points, "sigma": self.sigma,
                "relative_error": self.relative_error}


def _fit_rate(traj: Trajectory, eps: float) -> tuple[float, tuple[float, float], int]:
    """Least-squares slope of log int v over the latter half of the linear window."""
    t, m = traj.step_times, traj.step_masses
    inside = (m >= eps / WINDOW) & (m <= WINDOW * eps)
    # the window ends at the first exit
    end = len(m) if inside.all() else int(np.argmin(inside))
    t, m = t[:end], m[:end]
    half = len(t) // 2
    t, m = t[half:], m[half:]
    if len(t) < 10:
        raise DynamicsError("predator mass leaves the linear window too fast")
    slope = np.polyfit(t, np.log(m), 1)[0]
    return float(slope), (float(t[0]), float(t[-1])), len(t)


def _run_invasion(mu, nu, q, b, gamma, sc, theta, eps, T, dt):
    lo, hi = eps / WINDOW, WINDOW * eps
    traj = integrate_system(mu, nu, q, b, gamma, sc, theta, eps, T, dt,
                            stop=lambda t, m: m < lo or m > hi)
    return traj, _fit_rate(traj, eps)


def invasion_test(mu: float, nu: float, q: float, b: float, gamma: float, sc: Scenario,
                  eps: float = 1e-6, T: float = 2000.0, dt: float = INVASION_DT,
                  column: Column | None = None) -> InvasionResult:
    """Fitted exponential rate of a rare predator (v0 = eps) at u0 = theta(mu, q).

    The run is repeated with eps/2 as a linear-regime certificate; if the two
    fits differ by more than 2%, or the window is crossed too quickly, eps is
    reduced tenfold once before giving up.
    """
    if not eps <= 1e-4:
        raise ValueError("eps must be at most 1e-4")
    column = column or Column(mu, sc)
    theta = column.branch.solve(q).field
    sigma = predator_sigma(nu, q, b, gamma, theta, sc.grid, cross_check=False).sigma1
    for attempt in range(2):
        try:
            traj, (rate, window, pts) = _run_invasion(mu, nu, q, b, gamma, sc, theta, eps, T, dt)
            _, (rate2, _, _) = _run_invasion(mu, nu, q, b, gamma, sc, theta, eps / 2, T, dt)
        except (DynamicsError, SteadyError):
            if attempt:
                raise
            eps /= 10
            continue
        cert = abs(rate - rate2) / max(abs(rate), 1e-300)
        if cert < CERTIFICATE_TOL or attempt:
            return InvasionResult(rate, rate2, cert, eps, window, pts, sigma, traj)
        eps /= 10
    raise DynamicsError("invasion test failed")  # pragma: no cover
