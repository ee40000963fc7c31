"""Linear stability of the prey-only state (theta, 0).

(theta, 0) is unstable when sigma_1(nu, q, b theta - gamma) > 0 and stable when
it is negative.  Along q the principal eigenvalue decreases and tends to
sigma_1(nu, q*, -gamma) < 0 at washout, so each mu column has at most one
transition, located by bisection.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .discretization import assemble
from .eigensolver import principal_eigen
from .scenario import Scenario
from .steady import NoSteadyState, SteadyError, ThetaBranch, find_qstar, solve_eta
from .thresholds import bisect_log

MARGINAL_TOL = 1e-8
CRITICAL_Q_WIDTH = 1e-8
Q_FRACTIONS = (0.02, 0.98)
CROSS_CHECK_EVERY = 50

STABLE, UNSTABLE, MARGINAL = "Stable", "Unstable", "Marginal"


@dataclass
class StabilityVerdict:
    sigma: float
    verdict: str
    margin: float

    @classmethod
    def from_sigma(cls, sigma: float) -> "StabilityVerdict":
        if sigma > MARGINAL_TOL:
            v = UNSTABLE
        elif sigma < -MARGINAL_TOL:
            v = STABLE
        else:
            v = MARGINAL
        return cls(float(sigma), v, abs(sigma) / MARGINAL_TOL)


def predator_sigma(nu: float, q: float, b: float, gamma: float, prey, grid,
                   cross_check: bool | None = None, start=None):
    """Principal pair of nu psi'' - q psi' + (b prey - gamma) psi."""
    op = assemble(nu, q, b * np.asarray(prey) - gamma, grid)
    return principal_eigen(op, start=start, cross_check=cross_check)


class Column:
    """All state needed for one mu: q*, the theta branch and eta."""

    def __init__(self, mu: float, sc: Scenario, cross_check: bool | None = None):
        self.mu, self.sc = float(mu), sc
        grid = sc.grid
        self.rv, self.Kv = sc.r(grid.nodes), sc.K(grid.nodes)
        self.eta = solve_eta(mu, self.rv, self.Kv, grid)
        self.qstar = find_qstar(mu, self.rv, grid).qstar
        self.branch = ThetaBranch(mu, self.rv, self.Kv, grid, self.qstar, self.eta)
        self.cross_check = cross_check

    def sigma(self, nu, q, b, gamma, cross_check=None) -> float:
        if q >= self.qstar:
            raise NoSteadyState(f"no positive steady state (q ≥ q*): q={q:g}, q*={self.qstar:.10g}")
        theta = self.branch.solve(q)
        cc = self.cross_check if cross_check is None else cross_check
        return predator_sigma(nu, q, b, gamma, theta.field, self.sc.grid, cc).sigma1


def classify(mu: float, nu: float, q: float, b: float, gamma: float, sc: Scenario,
             column: Column | None = None) -> StabilityVerdict:
    """Verdict for (theta(mu, q), 0) against a predator with diffusion nu."""
    for name, v in (("mu", mu), ("nu", nu), ("b", b), ("gamma", gamma)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if not q >= 0:
        raise ValueError("q must be non-negative")
    column = column or Column(mu, sc)
    return StabilityVerdict.from_sigma(column.sigma(nu, q, b, gamma))


@dataclass
class CriticalQ:
    mu: float
    nu: float
    value: float | None
    bracket: tuple[float, float] | None
    qstar: float
    sigma_at_zero: float

    def to_dict(self) -> dict:
        return {"mu": self.mu, "nu": self.nu, "critical_q": self.value,
                "bracket": None if self.bracket is None else list(self.bracket),
                "qstar": self.qstar, "sigma_at_zero": self.sigma_at_zero}


def critical_q(mu: float, nu: float, b: float, gamma: float, sc: Scenario,
               column: Column | None = None, width: float = CRITICAL_Q_WIDTH) -> CriticalQ:
    """Transition advection q~ in (0, q*), or ``value=None`` if stable for all q."""
    column = column or Column(mu, sc)
    s0 = column.sigma(nu, 0.0, b, gamma)
    if s0 <= 0:
        return CriticalQ(float(mu), float(nu), None, None, column.qstar, s0)
    lo, hi = 0.0, column.qstar
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        try:
            s = column.sigma(nu, mid, b, gamma)
        except SteadyError:
            # theta is too close to zero to resolve; the limit there is -gamma
            hi = mid
            continue
        if s > 0:
            lo = mid
        else:
            hi = mid
    return CriticalQ(float(mu), float(nu), 0.5 * (lo + hi), (lo, hi), column.qstar, s0)


# -- region sweeps -----------------------------------------------------------

@dataclass
class ColumnResult:
    mu: float
    qstar: float
    q: np.ndarray
    sigma: np.ndarray
    verdicts: list[str]
    critical_q: float | None
    errors: list[str] = field(default_factory=list)


@dataclass
class RegionMap:
    nu: float
    b: float
    gamma: float
    columns: list[ColumnResult]
    regime: str = ""

    @property
    def mu_samples(self) -> np.ndarray:
        return np.array([c.mu for c in self.columns])

    @property
    def qstar_curve(self) -> np.ndarray:
        return np.array([c.qstar for c in self.columns])

    def verdict_grid(self) -> list[list[str]]:
        return [c.verdicts for c in self.columns]

    def transitions(self, column: ColumnResult) -> int:
        vs = [v for v in column.verdicts if v != MARGINAL]
        return sum(1 for a, b in zip(vs, vs[1:]) if a != b)

    def is_monotone(self) -> bool:
        """No Unstable cell above a Stable one in any column."""
        for c in self.columns:
            seen_stable = False
            for v in c.verdicts:
                if v == STABLE:
                    seen_stable = True
                elif v == UNSTABLE and seen_stable:
                    return False
        return True

    def errors(self) -> list[str]:
        return [e for c in self.columns for e in c.errors]

    def write_csv(self, path, layout: str = "long") -> None:
        with open(path, "w") as fh:
            fh.write("mu,q,sigma,verdict\n")
            for k, c in enumerate(self.columns):
                if layout == "gnuplot" and k:
                    fh.write("\n")
                for q, s, v in zip(c.q, c.sigma, c.verdicts):
                    fh.write(f"{c.mu!r},{float(q)!r},{float(s)!r},{v}\n")

    def summary(self) -> dict:
        return {
            "schema": 1, "nu": self.nu, "b": self.b, "gamma": self.gamma,
            "regime": self.regime,
            "mu": [c.mu for c in self.columns],
            "qstar": [c.qstar for c in self.columns],
            "boundary": [{"mu": c.mu, "critical_q": c.critical_q} for c in self.columns],
            "transitions": [self.transitions(c) for c in self.columns],
            "monotone": self.is_monotone(),
            "errors": self.errors(),
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def sweep_column(mu: float, q_resolution: int, nu: float, b: float, gamma: float,
                 sc: Scenario, index: int = 0) -> ColumnResult:
    """One fixed-mu column on q = q* * linspace(0.02, 0.98, q_resolution)."""
    try:
        col = Column(mu, sc, cross_check=False)
    except (SteadyError, RuntimeError) as exc:
        return ColumnResult(float(mu), float("nan"), np.array([]), np.array([]), [], None,
                            [f"mu={mu!r}: {exc}"])
    qs = col.qstar * np.linspace(*Q_FRACTIONS, q_resolution)
    sig = np.full(q_resolution, np.nan)
    verdicts = []
    errors = []
    for j, q in enumerate(qs):
        try:
            # sampled dense cross-check, deterministic in the cell index
            cc = (index * q_resolution + j) % CROSS_CHECK_EVERY == 0
            sig[j] = col.sigma(nu, float(q), b, gamma, cross_check=cc)
            verdicts.append(StabilityVerdict.from_sigma(sig[j]).verdict)
        except (SteadyError, RuntimeError) as exc:
            verdicts.append("Error")
            errors.append(f"mu={mu!r} q={q!r}: {exc}")
    try:
        cq = critical_q(mu, nu, b, gamma, sc, column=col).value
    except (SteadyError, RuntimeError) as exc:
        cq = None
        errors.append(f"mu={mu!r} critical_q: {exc}")
    return ColumnResult(float(mu), col.qstar, qs, sig, verdicts, cq, errors)


def _column_task(args):
    return sweep_column(*args)


def sweep_region(mu_range, q_resolution: int, nu: float, b: float, gamma: float,
                 sc: Scenario, jobs: int = 1) -> RegionMap:
    """Stability verdicts over a (mu, q) rectangle; columns may run in parallel.

    Results are ordered by column regardless of completion order.
    """
    mus = [float(m) for m in mu_range]
    if len(mus) < 1 or q_resolution < 2:
        raise ValueError("empty sweep range")
    tasks = [(m, q_resolution, nu, b, gamma, sc, i) for i, m in enumerate(mus)]
    if jobs <= 1:
        cols = [_column_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            cols = list(ex.map(_column_task, tasks))
    return RegionMap(float(nu), float(b), float(gamma), cols)


# -- sign changes of sigma_1(nu, 0, b eta - gamma) in mu -----------------------

@dataclass
class SignChanges:
    count: int
    locations: list[float]
    mus: np.ndarray = field(repr=False)
    sigmas: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"count": self.count, "locations": self.locations,
                "mu": [float(m) for m in self.mus], "sigma": [float(s) for s in self.sigmas]}


def sigma_at_zero_q(mu, nu, b, gamma, sc: Scenario) -> float:
    eta = solve_eta(mu, sc.r, sc.K, sc.grid, check_unique=False)
    return predator_sigma(nu, 0.0, b, gamma, eta.field, sc.grid, cross_check=False).sigma1


def sign_changes_in_mu(nu: float, b: float, gamma: float, sc: Scenario, mu_range) -> SignChanges:
    """Count and locate sign changes of mu -> sigma_1(nu, 0, b eta(mu) - gamma)."""
    mus = np.asarray(mu_range, dtype=float)
    f = lambda m: sigma_at_zero_q(m, nu, b, gamma, sc)  # noqa: E731
    sig = np.array([f(m) for m in mus])
    locs = []
    s = np.sign(sig)
    for i in range(len(mus) - 1):
        if s[i] != 0 and s[i + 1] != 0 and s[i] != s[i + 1]:
            locs.append(bisect_log(f, mus[i], mus[i + 1], width=1e-6 * mus[i]).value)
    return SignChanges(len(locs), locs, mus, sig)


def column_is_invaded(col: ColumnResult) -> bool:
    return bool(col.verdicts) and col.verdicts[0] == UNSTABLE


def log_range(lo: float, hi: float, count: int) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), count)
