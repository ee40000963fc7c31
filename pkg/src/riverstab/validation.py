"""Acceptance suite: numbered property checks shared by ``validate`` and the tests.

Each check returns a :class:`Criterion` with a pass flag and a short detail
string; ``quick`` runs use coarser grids.
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .discretization import Grid, assemble
from .dynamics import invasion_test
from .eigensolver import (dense_eigen, lambda_star, lambda_star_weight, principal_eigen,
                          rayleigh_quotient, sigma1)
from .profiles import parse_profile
from .scenario import CANONICAL, P1, P2, Scenario
from .stability import (STABLE, UNSTABLE, Column, classify, critical_q, sign_changes_in_mu,
                        sweep_region)
from .steady import ThetaBranch, find_qstar, solve_eta
from .thresholds import EtaTable, gamma_thresholds, structural_roots

FULL_CELLS, QUICK_CELLS = 256, 128


@dataclass
class Criterion:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.title}: {self.detail}"

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "detail": self.detail}


def _profile(text):
    return parse_profile(text)


def _h_samples(rng, grid):
    """Random smooth potential a + b x + c cos(k pi x)."""
    a, b, c = rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1)
    k = int(rng.integers(1, 4))
    return a + b * grid.nodes + c * np.cos(k * math.pi * grid.nodes)


# -- 1 -------------------------------------------------------------------------

def check_eigen_oracle(n: int) -> Criterion:
    grid = Grid(n)
    rng = np.random.default_rng(20240611)
    worst_rel = worst_rq = 0.0
    for _ in range(50):
        d = 10 ** rng.uniform(-1, 2)
        q = rng.uniform(0, 3)
        op = assemble(d, q, _h_samples(rng, grid), grid)
        it = principal_eigen(op, cross_check=False)
        de = dense_eigen(op)
        worst_rel = max(worst_rel, abs(it.sigma1 - de.sigma1) / max(abs(de.sigma1), 1.0))
        worst_rq = max(worst_rq, abs(rayleigh_quotient(it.phi1, op) - it.sigma1))
    ok = worst_rel <= 1e-10 and worst_rq <= 1e-6
    return Criterion(1, "eigensolver oracle equivalence", ok,
                     f"max rel |inverse - dense| = {worst_rel:.2e}, max |RQ - sigma1| = {worst_rq:.2e}")


# -- 2 -------------------------------------------------------------------------

def check_sigma_properties(n: int) -> Criterion:
    grid = Grid(n)
    rng = np.random.default_rng(7)
    bad = []
    # (iii) monotone in h
    for i in range(20):
        d, q = 10 ** rng.uniform(-1, 1), rng.uniform(0, 2)
        h2 = _h_samples(rng, grid)
        bump = rng.uniform(0.05, 1) * np.exp(-((grid.nodes - rng.uniform()) / 0.2) ** 2)
        if not sigma1(d, q, h2 + bump, grid) > sigma1(d, q, h2, grid):
            bad.append(f"(iii) pair {i}")
    # (iv) strictly decreasing in q
    for i in range(10):
        d = 10 ** rng.uniform(-1, 1)
        h = _h_samples(rng, grid)
        s = [sigma1(d, q, h, grid) for q in np.linspace(0, 2, 5)]
        if not all(a > b for a, b in zip(s, s[1:])):
            bad.append(f"(iv) ladder {i}")
    # (v) limits in d
    r2 = _profile(P2[0])
    worst = 0.0
    for hp in (P1[0], P2[0], P2[1], "x*x"):
        hv = _profile(hp)(grid.nodes)
        for q in (0.0, 0.5, 1.0):
            err = abs(sigma1(1e5, q, hv, grid) - (grid.integrate(hv) - q))
            worst = max(worst, err)
    if worst > 1e-2:
        bad.append(f"(v) large d error {worst:.2e}")
    small = sigma1(1e-4, 1.0, r2(grid.nodes), grid)
    if not small < -100:
        bad.append(f"(v) sigma1(1e-4, 1, r) = {small:.3g}")
    # (vi) increasing eigenfunction for increasing h
    for hp in ("1 + x", "x*x", "exp(x)", "2*x - 1", "sin(1.5*x)"):
        for q in (0.0, 0.5):
            phi = principal_eigen(assemble(1.0, q, _profile(hp), grid)).phi1
            if not np.all(np.diff(phi) > 0):
                bad.append(f"(vi) {hp} q={q}")
    return Criterion(2, "principal eigenvalue properties", not bad,
                     f"{len(bad)} violations; large-d error {worst:.2e}; "
                     f"sigma1(1e-4,1,r) = {small:.4g}" + (f"; {bad[:3]}" if bad else ""))


# -- 3 -------------------------------------------------------------------------

def check_eta_properties(n: int) -> Criterion:
    grid = Grid(n)
    r, K = _profile(P2[0]), _profile(P2[1])
    rv, Kv = r(grid.nodes), K(grid.nodes)
    kmin, kmax = 1.5, 2.5
    bad = []
    maxes = []
    for mu in (0.01, 0.1, 1.0, 10.0, 100.0):
        eta = solve_eta(mu, rv, Kv, grid)
        if not (np.all(eta.field > kmin) and np.all(eta.field < kmax)):
            bad.append(f"bounds at mu={mu}")
        maxes.append(eta.max)
    if not all(a > b for a, b in zip(maxes, maxes[1:])):
        bad.append("max eta not decreasing")
    e0 = float(np.max(np.abs(solve_eta(1e-3, rv, Kv, grid).field - Kv)))
    harmonic = grid.integrate(rv) / grid.integrate(rv / Kv)
    e1 = float(np.max(np.abs(solve_eta(1e4, rv, Kv, grid).field - harmonic)))
    if e0 > 0.05:
        bad.append(f"small-mu limit {e0:.3g}")
    if e1 > 0.01:
        bad.append(f"large-mu limit {e1:.3g}")
    return Criterion(3, "prey steady state without flow", not bad,
                     f"|eta(1e-3)-K| = {e0:.2e}, |eta(1e4)-harmonic| = {e1:.2e}, "
                     f"max eta = {[round(m, 6) for m in maxes]}" + (f"; {bad}" if bad else ""))


# -- 4 -------------------------------------------------------------------------

def check_theta_properties(n: int) -> Criterion:
    grid = Grid(n)
    r, K = _profile(P1[0]), _profile(P1[1])
    rv, Kv = r(grid.nodes), K(grid.nodes)
    kmax = 2.25
    bad = []
    int_r, int_rk = grid.integrate(rv), grid.integrate(rv / Kv)
    big = ThetaBranch(1e4, rv, Kv, grid)
    worst_lim = 0.0
    for q in (0.1, 0.3, 0.6):
        th = big.solve(q).field
        worst_lim = max(worst_lim, float(np.max(np.abs(th - (int_r - q) / int_rk))))
    if worst_lim > 0.01:
        bad.append(f"large-mu limit {worst_lim:.3g}")
    worst_eta = worst_flux = 0.0
    for mu in (0.1, 1.0, 10.0):
        br = ThetaBranch(mu, rv, Kv, grid)
        qs = br.qstar * np.linspace(0.05, 0.9, 6)
        prev = br.eta.field
        for q in qs:
            th = br.solve(q)
            # theta -> 0 as q -> q*, so only positivity holds from below
            if not np.all(th.field > 0):
                bad.append("positivity")
            if not np.all(th.field < kmax):
                bad.append(f"upper bound mu={mu} q={q:.3g}")
            if not np.all(th.field < prev):
                bad.append(f"not decreasing in q at mu={mu} q={q:.3g}")
            prev = th.field
        tiny = br.solve(1e-6).field
        worst_eta = max(worst_eta, float(np.max(np.abs(tiny - br.eta.field))))
        th = br.solve(0.5 * br.qstar)
        gap = abs(th.q * th.field[-1] - grid.integrate(rv * th.field * (1 - th.field / Kv)))
        worst_flux = max(worst_flux, gap)
    if worst_eta > 1e-4:
        bad.append(f"q->0 limit {worst_eta:.3g}")
    if worst_flux > 1e-8:
        bad.append(f"flux identity {worst_flux:.3g}")
    return Criterion(4, "prey steady state with flow", not bad,
                     f"large-mu limit err {worst_lim:.2e}, |theta(q=1e-6)-eta| = {worst_eta:.2e}, "
                     f"flux identity gap {worst_flux:.2e}" + (f"; {bad[:3]}" if bad else ""))


# -- 5 -------------------------------------------------------------------------

def check_integral_gain(n: int) -> Criterion:
    grid = Grid(n)
    rv, Kv = _profile(P1[0])(grid.nodes), _profile(P1[1])(grid.nodes)
    int_K = grid.integrate(Kv)
    margins = [solve_eta(mu, rv, Kv, grid).integral() - int_K for mu in (0.01, 0.1, 1.0, 10.0)]
    return Criterion(5, "integral of eta exceeds integral of K", all(m > 0 for m in margins),
                     "margins " + ", ".join(f"{m:.3e}" for m in margins))


# -- 6 -------------------------------------------------------------------------

def check_lambda_star(n: int) -> Criterion:
    grid = Grid(n)
    sc = CANONICAL["regime-III"].with_(grid_n=n)
    b, gamma = sc.b, sc.gamma
    table = EtaTable(sc.r, sc.K, grid)
    bad = []
    worst_agree = 0.0
    zero_checks = 0
    for mu in np.logspace(-3, 1, 25):
        eta = table(mu)
        lam = lambda_star(mu, b, gamma, eta)
        if not lam.defined:
            continue
        integral_ok = b * eta.integral() - gamma >= -1e-9
        if integral_ok != (lam.value == 0.0):
            bad.append(f"zero test mu={mu:.3g}")
        zero_checks += 1
        if lam.value > 0:
            worst_agree = max(worst_agree, abs(lam.value_pencil - lam.value_bisection) / lam.value)
    # sign equivalence on a 10 x 10 grid where lambda* > 0
    sc4 = CANONICAL["regime-IV"].with_(grid_n=n)
    t4 = EtaTable(sc4.r, sc4.K, grid)
    agree = total = 0
    for mu in np.logspace(-3, math.log10(0.15), 10):
        eta = t4(mu)
        lam = lambda_star(mu, sc4.b, sc4.gamma, eta)
        for nu in np.logspace(-3, 1, 10):
            s = sigma1(nu, 0.0, sc4.b * eta.field - sc4.gamma, grid)
            if abs(nu * lam.value - 1) < 1e-6:
                continue
            total += 1
            if (s > 0) == (nu * lam.value < 1):
                agree += 1
    if worst_agree > 1e-6:
        bad.append(f"method agreement {worst_agree:.2e}")
    if agree != total:
        bad.append(f"sign equivalence {agree}/{total}")
    return Criterion(6, "indefinite-weight eigenvalue", not bad,
                     f"{zero_checks} zero tests, two-method agreement {worst_agree:.2e}, "
                     f"sign equivalence {agree}/{total}" + (f"; {bad}" if bad else ""))


# -- 7 -------------------------------------------------------------------------

def _sweep_mus(count=20):
    return np.logspace(-2, 2, count)


def check_regimes(n: int, jobs: int = 1) -> Criterion:
    bad = []
    notes = []
    grid = Grid(n)
    # (i) exactly one transition per column and certified q0
    sc = CANONICAL["regime-I"].with_(grid_n=n)
    m = sweep_region(_sweep_mus(), 20, 1.0, sc.b, sc.gamma, sc, jobs=jobs)
    if any(m.transitions(c) != 1 for c in m.columns) or not m.is_monotone() or m.errors():
        bad.append("(i) transitions")
    if any(c.verdicts[0] != UNSTABLE or c.verdicts[-1] != STABLE for c in m.columns):
        bad.append("(i) column ends")
    for mu, nu in ((0.05, 0.2), (1.0, 1.0), (20.0, 5.0)):
        col = Column(mu, sc)
        cq = critical_q(mu, nu, sc.b, sc.gamma, sc, column=col)
        if cq.value is None:
            bad.append(f"(i) no q0 at mu={mu}")
            continue
        lo = classify(mu, nu, cq.value - 1e-4, sc.b, sc.gamma, sc, column=col).verdict
        hi = classify(mu, nu, cq.value + 1e-4, sc.b, sc.gamma, sc, column=col).verdict
        if (lo, hi) != (UNSTABLE, STABLE):
            bad.append(f"(i) certificate at mu={mu}")
    # (v) all stable
    sc5 = CANONICAL["regime-V"].with_(grid_n=n)
    m5 = sweep_region(_sweep_mus(), 20, 1.0, sc5.b, sc5.gamma, sc5, jobs=jobs)
    if any(v != STABLE for c in m5.columns for v in c.verdicts):
        bad.append("(v) not all stable")
    # (iv)(a) all stable above nu_hat
    sc4 = CANONICAL["regime-IV"].with_(grid_n=n)
    roots4 = structural_roots(sc4.b, sc4.gamma, sc4.r, sc4.K, grid)
    if roots4.regime != "IV" or roots4.nu_hat is None:
        bad.append("(iv) regime/nu_hat")
    else:
        nu = 2.0 * roots4.nu_hat
        m4 = sweep_region(_sweep_mus(), 20, nu, sc4.b, sc4.gamma, sc4, jobs=jobs)
        if any(v != STABLE for c in m4.columns for v in c.verdicts):
            bad.append("(iv) not all stable")
        notes.append(f"nu_hat={roots4.nu_hat:.4g}")
    # (ii) at least one sign change on (0, mu*)
    sc2 = CANONICAL["regime-II"].with_(grid_n=n)
    roots2 = structural_roots(sc2.b, sc2.gamma, sc2.r, sc2.K, grid)
    if roots2.regime != "II" or roots2.nu_star is None or roots2.mu_star is None:
        bad.append("(ii) regime/nu_star")
    else:
        mus = np.logspace(-3, math.log10(roots2.mu_star.value), 30)
        ch = sign_changes_in_mu(2.0 * roots2.nu_star, sc2.b, sc2.gamma, sc2, mus)
        if ch.count < 1:
            bad.append("(ii) no sign change")
        notes.append(f"II changes={ch.count}")
    # (iii) at least two sign changes on (0, mu_hat)
    sc3 = CANONICAL["regime-III"].with_(grid_n=n)
    roots3 = structural_roots(sc3.b, sc3.gamma, sc3.r, sc3.K, grid)
    if roots3.regime != "III" or roots3.nu_star is None or roots3.mu_hat is None:
        bad.append("(iii) regime/nu_star")
    else:
        mus = np.logspace(-3, math.log10(roots3.mu_hat.bracket[0]), 40)
        ch = sign_changes_in_mu(1.5 * roots3.nu_star, sc3.b, sc3.gamma, sc3, mus)
        if ch.count < 2:
            bad.append(f"(iii) {ch.count} sign changes")
        notes.append(f"III changes={ch.count}")
    return Criterion(7, "regime reproduction", not bad,
                     "; ".join(notes) + (f"; {bad}" if bad else ""))


# -- 8 -------------------------------------------------------------------------

def check_blowup(n: int) -> Criterion:
    grid = Grid(n)
    sc = CANONICAL["regime-IV"].with_(grid_n=n)
    table = EtaTable(sc.r, sc.K, grid)
    roots = structural_roots(sc.b, sc.gamma, sc.r, sc.K, grid, table=table)
    if roots.mu_hat is None:
        return Criterion(8, "blow-up near mu_hat", False, "mu_hat not found")
    mh = roots.mu_hat.value
    vals = [lambda_star(mh - d, sc.b, sc.gamma, table(mh - d)).value for d in (1e-1, 1e-2, 1e-3)]
    ok = vals[0] < vals[1] < vals[2] and vals[2] > 1e3
    return Criterion(8, "blow-up near mu_hat", ok,
                     f"mu_hat = {mh:.6g}, lambda* = " + ", ".join(f"{v:.4g}" for v in vals))


# -- 9 -------------------------------------------------------------------------

# (scenario, mu, nu, q as a fraction of q*)
VALIDATION_POINTS = (
    ("regime-I", 1.0, 1.0, 0.05), ("regime-I", 1.0, 1.0, 0.5),
    ("regime-I", 0.1, 1.0, 0.1), ("regime-I", 10.0, 0.3, 0.2),
    ("regime-II", 0.01, 0.05, 0.05), ("regime-II", 1.0, 1.0, 0.1),
    ("regime-III", 0.3, 1.0, 0.05), ("regime-III", 0.005, 5.0, 0.1),
    ("regime-IV", 0.05, 0.01, 0.05), ("regime-IV", 1.0, 1.0, 0.2),
    ("regime-V", 1.0, 1.0, 0.3), ("regime-V", 0.05, 0.5, 0.5),
)


def check_invasion(n: int) -> Criterion:
    worst = 0.0
    signs = used = 0
    for name, mu, nu, frac in VALIDATION_POINTS:
        sc = CANONICAL[name].with_(grid_n=n)
        col = Column(mu, sc)
        res = invasion_test(mu, nu, frac * col.qstar, sc.b, sc.gamma, sc, column=col)
        if abs(res.sigma) < 1e-3:
            continue
        used += 1
        worst = max(worst, res.relative_error)
        signs += bool(res.sign_agrees)
    ok = used == 12 and signs == used and worst <= 0.10
    return Criterion(9, "linear vs nonlinear invasion", ok,
                     f"{used} points, sign agreement {signs}/{used}, max rel rate error {worst:.2%}")


# -- 10 ------------------------------------------------------------------------

def observed_orders(values) -> list[float]:
    v = list(values)
    out = []
    for a, b, c in zip(v, v[1:], v[2:]):
        out.append(math.log2(abs(a - b) / abs(b - c)))
    return out


def convergence_study(sc: Scenario, mu, nu, frac, cells=(64, 128, 256, 512)):
    sig, tmax = [], []
    qstar = find_qstar(mu, sc.r, Grid(max(cells))).qstar
    q = frac * qstar
    for n in cells:
        grid = Grid(n)
        br = ThetaBranch(mu, sc.r, sc.K, grid)
        th = br.solve(q).field
        tmax.append(float(th.max()))
        sig.append(sigma1(nu, q, sc.b * th - sc.gamma, grid))
    return sig, tmax


def check_convergence(n: int) -> Criterion:
    orders = []
    for name, mu, nu, frac in (("regime-I", 1.0, 1.0, 0.3), ("regime-II", 0.5, 0.5, 0.2)):
        sig, tmax = convergence_study(CANONICAL[name], mu, nu, frac)
        orders += observed_orders(sig) + observed_orders(tmax)
    worst = min(orders)
    return Criterion(10, "grid convergence", worst >= 1.8,
                     "observed orders " + ", ".join(f"{p:.2f}" for p in orders))


# -- 11 ------------------------------------------------------------------------

def check_determinism(n: int) -> Criterion:
    from .cli import main

    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        for jobs in (1, 8):
            out = Path(tmp) / f"jobs{jobs}"
            code = main(["sweep", "--regime", "regime-I", "--grid-n", str(n), "--mu-count", "6",
                         "--q-count", "20", "--jobs", str(jobs), "--out", str(out)])
            if code != 0:
                return Criterion(11, "determinism", False, f"sweep exited with {code}")
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = outputs[0] == outputs[1]
    return Criterion(11, "determinism", same,
                     f"{len(outputs[0])} files byte-identical across --jobs 1 and 8" if same
                     else "outputs differ between --jobs 1 and 8")


CHECKS = {
    1: check_eigen_oracle, 2: check_sigma_properties, 3: check_eta_properties, 4: check_theta_properties,
    5: check_integral_gain, 6: check_lambda_star, 7: check_regimes, 8: check_blowup,
    9: check_invasion, 10: check_convergence, 11: check_determinism,
}


def run_criterion(number: int, quick: bool = False) -> Criterion:
    n = QUICK_CELLS if quick else FULL_CELLS
    t0 = time.perf_counter()
    try:
        c = CHECKS[number](n)
    except Exception as exc:  # a crash is a failed criterion, not a crashed suite
        c = Criterion(number, CHECKS[number].__name__, False, f"error: {exc}")
    c.seconds = time.perf_counter() - t0
    return c


def run_all(quick: bool = False, only=None) -> list[Criterion]:
    numbers = sorted(CHECKS) if not only else sorted(only)
    return [run_criterion(k, quick) for k in numbers]
