"""Predator-mortality thresholds gamma_1..gamma_4 and the roots organising them.

    gamma_1 = b int K,   gamma_2 = b int r / int (r/K),
    gamma_3 = b sup_mu int eta,   gamma_4 = b max K.

Integrals use the grid's midpoint rule so that they are consistent with the
discrete steady states; max K is taken on a fine mesh including both ends.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .discretization import Grid
from .eigensolver import lambda_star
from .steady import SteadyState, solve_eta

MU_MIN, MU_MAX, MU_POINTS = 1e-3, 1e4, 40
BOUNDARY_TOL = 1e-9
ROOT_WIDTH = 1e-6
HAT_CAP = 1e-3


def default_mu_range(points: int = MU_POINTS) -> np.ndarray:
    return np.logspace(math.log10(MU_MIN), math.log10(MU_MAX), points)


class EtaTable:
    """Memoised eta(mu) solves for one (r, K, grid)."""

    def __init__(self, r, K, grid: Grid):
        self.r, self.K, self.grid = r, K, grid
        self._cache: dict[float, SteadyState] = {}

    def __call__(self, mu: float) -> SteadyState:
        mu = float(mu)
        if mu not in self._cache:
            self._cache[mu] = solve_eta(mu, self.r, self.K, self.grid, check_unique=False)
        return self._cache[mu]

    def integral(self, mu):
        return self(mu).integral()

    def maximum(self, mu):
        return self(mu).max


@dataclass
class GammaThresholds:
    gamma1: float
    gamma2: float
    gamma3: float
    gamma4: float
    b: float
    mu_grid_used: np.ndarray = field(repr=False)
    eta_integrals: np.ndarray = field(repr=False)
    mu_argmax: float = float("nan")
    endpoint_integrals: tuple[float, float] = (float("nan"), float("nan"))

    @property
    def values(self) -> tuple[float, float, float, float]:
        return self.gamma1, self.gamma2, self.gamma3, self.gamma4

    def empty_regimes(self) -> list[str]:
        out = []
        if self.gamma2 <= self.gamma1 + BOUNDARY_TOL:
            out.append("II")
        if self.gamma3 <= max(self.gamma1, self.gamma2) + BOUNDARY_TOL:
            out.append("III")
        return out

    def to_dict(self) -> dict:
        return {"gamma1": self.gamma1, "gamma2": self.gamma2, "gamma3": self.gamma3,
                "gamma4": self.gamma4, "b": self.b, "mu_argmax": self.mu_argmax,
                "eta_integral_endpoints": list(self.endpoint_integrals),
                "empty_regimes": self.empty_regimes()}


def _refine_max(f, logs: np.ndarray, vals: np.ndarray, sign: float = 1.0):
    """Golden-section refinement (in log mu) around the extreme sample."""
    k = int(np.argmax(sign * vals))
    if k == 0 or k == len(vals) - 1:
        return float(np.exp(logs[k])), float(vals[k])
    res = minimize_scalar(lambda s: -sign * f(math.exp(s)), method="golden",
                          bracket=(logs[k - 1], logs[k], logs[k + 1]),
                          options={"xtol": 1e-4})
    best = float(-sign * res.fun)
    if sign * best < sign * vals[k]:
        return float(np.exp(logs[k])), float(vals[k])
    return float(math.exp(res.x)), best


def gamma_thresholds(b: float, r, K, grid: Grid, mu_range=None,
                     table: EtaTable | None = None) -> GammaThresholds:
    if not b > 0:
        raise ValueError("b must be positive")
    mus = default_mu_range() if mu_range is None else np.asarray(mu_range, dtype=float)
    table = table or EtaTable(r, K, grid)
    rv, Kv = r(grid.nodes), K(grid.nodes)
    int_K = grid.integrate(Kv)
    harmonic = grid.integrate(rv) / grid.integrate(rv / Kv)
    max_K = float(np.max(K(np.linspace(0.0, 1.0, 16 * grid.n + 1))))
    ints = np.array([table.integral(m) for m in mus])
    mu_arg, sup = _refine_max(table.integral, np.log(mus), ints)
    # the two mu-limits of int eta bound the supremum from below
    sup = max(sup, int_K, harmonic)
    return GammaThresholds(b * int_K, b * harmonic, b * sup, b * max_K, float(b), mus, ints,
                           mu_arg, (float(ints[0]), float(ints[-1])))


def gamma_regime(gamma: float, th: GammaThresholds) -> str:
    """Regime tag I-V, or BOUNDARY when gamma sits on gamma_2 or gamma_3."""
    g1, g2, g3, g4 = th.values
    if gamma <= g1 + BOUNDARY_TOL:
        return "I"
    if gamma >= g4 - BOUNDARY_TOL:
        return "V"
    for g in (g2, g3):
        if abs(gamma - g) <= BOUNDARY_TOL:
            return "BOUNDARY"
    if gamma < g2:
        return "II"
    if gamma < g3:
        return "III"
    return "IV"


# -- roots in mu -------------------------------------------------------------

@dataclass
class Root:
    value: float
    bracket: tuple[float, float]
    signs: tuple[float, float]

    def to_dict(self) -> dict:
        return {"value": self.value, "bracket": list(self.bracket), "signs": list(self.signs)}


def bisect_log(f, a: float, b: float, width: float = ROOT_WIDTH) -> Root:
    """Bisection in log mu on a sign change of ``f`` over [a, b]."""
    fa, fb = f(a), f(b)
    if np.sign(fa) == np.sign(fb):
        raise ValueError("no sign change in bracket")
    while b - a > width:
        m = math.sqrt(a * b)
        if m <= a or m >= b:
            break
        fm = f(m)
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return Root(0.5 * (a + b), (a, b), (float(fa), float(fb)))


def sign_change_roots(f, mus, values, width: float = ROOT_WIDTH) -> list[Root]:
    out = []
    s = np.sign(values)
    for i in range(len(mus) - 1):
        if s[i] != 0 and s[i + 1] != 0 and s[i] != s[i + 1]:
            out.append(bisect_log(f, mus[i], mus[i + 1], width))
    return out


@dataclass
class StructuralRoots:
    gamma: float
    b: float
    regime: str
    mu_star_small: Root | None = None
    mu_star: Root | None = None
    mu_hat: Root | None = None
    nu_star: float | None = None
    nu_hat: float | None = None
    int_sign_changes: int = 0
    notes: dict = field(default_factory=dict)
    table: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def r(x):
            return None if x is None else x.to_dict()
        return {"gamma": self.gamma, "b": self.b, "regime": self.regime,
                "mu_star_small": r(self.mu_star_small), "mu_star": r(self.mu_star),
                "mu_hat": r(self.mu_hat), "nu_star": self.nu_star, "nu_hat": self.nu_hat,
                "int_sign_changes": self.int_sign_changes, "notes": self.notes}


NOT_APPLICABLE = "not applicable"


def lambda_star_curve(b, gamma, table: EtaTable, mus):
    out = []
    for m in mus:
        out.append(lambda_star(float(m), b, gamma, table(m)))
    return out


def structural_roots(b: float, gamma: float, r, K, grid: Grid, mu_range=None,
                     thresholds: GammaThresholds | None = None,
                     table: EtaTable | None = None) -> StructuralRoots:
    """mu_*, mu^* (roots of b int eta = gamma), mu_hat (b max eta = gamma), nu_*, nu_hat.

    Quantities that do not exist for the regime are left ``None`` with a
    reason in ``notes``.
    """
    mus = default_mu_range() if mu_range is None else np.asarray(mu_range, dtype=float)
    table = table or EtaTable(r, K, grid)
    thresholds = thresholds or gamma_thresholds(b, r, K, grid, mus, table)
    regime = gamma_regime(gamma, thresholds)
    out = StructuralRoots(float(gamma), float(b), regime)

    def f_int(m):
        return b * table.integral(m) - gamma

    def f_max(m):
        return b * table.maximum(m) - gamma

    vi = np.array([f_int(m) for m in mus])
    vm = np.array([f_max(m) for m in mus])
    roots = sign_change_roots(f_int, mus, vi)
    out.int_sign_changes = len(roots)
    if roots:
        out.mu_star_small, out.mu_star = roots[0], roots[-1]
    else:
        out.notes["mu_star"] = NOT_APPLICABLE + ": b int eta - gamma has no sign change"
    hats = sign_change_roots(f_max, mus, vm)
    if hats:
        out.mu_hat = hats[0]
        if len(hats) > 1:
            out.notes["mu_hat"] = f"{len(hats)} sign changes of b max eta - gamma"
    else:
        out.notes["mu_hat"] = NOT_APPLICABLE + ": b max eta - gamma has no sign change"

    cap = None if out.mu_hat is None else out.mu_hat.bracket[0] - HAT_CAP
    lam_mus = [m for m in mus if cap is None or m < cap]
    lams = lambda_star_curve(b, gamma, table, lam_mus)
    out.table = [(float(m), table.integral(m), table.maximum(m), l.value if l.defined else None)
                 for m, l in zip(lam_mus, lams)]
    defined = [(m, l.value) for m, l in zip(lam_mus, lams) if l.defined]

    def lam(m):
        v = lambda_star(m, b, gamma, table(m))
        return v.value if v.defined else float("nan")

    if regime in ("II", "III") and defined:
        upto = math.inf if regime == "II" or out.mu_star is None else out.mu_star.value
        pts = [(m, v) for m, v in defined if m <= upto]
        if pts:
            ms, vs = np.array([p[0] for p in pts]), np.array([p[1] for p in pts])
            _, sup = _refine_max(lam, np.log(ms), vs)
            out.nu_star = 1.0 / sup if sup > 0 else math.inf
    else:
        out.notes["nu_star"] = NOT_APPLICABLE + f" in regime {regime}"
    if regime == "IV" and out.mu_hat is not None and defined:
        ms = np.array([m for m, _ in defined])
        vs = np.array([v for _, v in defined])
        _, inf = _refine_max(lam, np.log(ms), vs, sign=-1.0)
        out.nu_hat = 1.0 / inf
    else:
        out.notes["nu_hat"] = NOT_APPLICABLE + f" in regime {regime}"
    return out
