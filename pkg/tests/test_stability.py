import json

import numpy as np
import pytest

from riverstab.eigensolver import sigma1
from riverstab.scenario import CANONICAL
from riverstab.stability import (MARGINAL, STABLE, UNSTABLE, Column, StabilityVerdict,
                                 classify, column_is_invaded, critical_q, log_range,
                                 sign_changes_in_mu, sweep_region)
from riverstab.steady import NoSteadyState

N = 128


@pytest.fixture(scope="module")
def regime_one():
    return CANONICAL["regime-I"].with_(grid_n=N)


@pytest.fixture(scope="module")
def column_one(regime_one):
    return Column(1.0, regime_one)


@pytest.mark.parametrize("sigma,verdict", [
    (1e-3, UNSTABLE), (-1e-3, STABLE), (5e-9, MARGINAL), (-5e-9, MARGINAL), (0.0, MARGINAL)])
def test_verdict_from_sigma(sigma, verdict):
    assert StabilityVerdict.from_sigma(sigma).verdict == verdict


@pytest.mark.parametrize("gamma", [2.25, 3.0])
@pytest.mark.parametrize("mu,nu,frac", [(0.01, 0.01, 0.1), (1.0, 1.0, 0.5), (100.0, 0.1, 0.9)])
def test_high_mortality_always_stable(gamma, mu, nu, frac):
    sc = CANONICAL["regime-V"].with_(grid_n=N, gamma=gamma)
    col = Column(mu, sc)
    assert classify(mu, nu, frac * col.qstar, sc.b, sc.gamma, sc, column=col).verdict == STABLE


def test_low_mortality_invaded_at_small_flow(regime_one, column_one):
    v = classify(1.0, 1.0, 0.01, regime_one.b, regime_one.gamma, regime_one, column=column_one)
    assert v.verdict == UNSTABLE and v.sigma > 0


def test_above_washout_is_an_error(regime_one, column_one):
    with pytest.raises(NoSteadyState, match=r"q ≥ q\*"):
        classify(1.0, 1.0, 10.0, regime_one.b, regime_one.gamma, regime_one, column=column_one)


@pytest.mark.parametrize("name,value", [("mu", 0.0), ("nu", -1.0), ("b", 0.0), ("gamma", 0.0)])
def test_classify_rejects_nonpositive(regime_one, name, value):
    args = dict(mu=1.0, nu=1.0, q=0.1, b=1.0, gamma=1.5)
    args[name] = value
    with pytest.raises(ValueError):
        classify(sc=regime_one, **args)


@pytest.mark.parametrize("nu", [0.2, 1.0, 5.0])
def test_critical_q_certificate(regime_one, column_one, nu):
    cq = critical_q(1.0, nu, regime_one.b, regime_one.gamma, regime_one, column=column_one)
    assert 0 < cq.value < cq.qstar
    assert cq.bracket[1] - cq.bracket[0] <= 1e-8
    s = lambda q: column_one.sigma(nu, q, regime_one.b, regime_one.gamma)  # noqa: E731
    assert s(cq.value - 1e-4) > 0 > s(cq.value + 1e-4)


def test_critical_q_absent_in_high_mortality():
    sc = CANONICAL["regime-V"].with_(grid_n=N)
    cq = critical_q(1.0, 1.0, sc.b, sc.gamma, sc)
    assert cq.value is None and cq.sigma_at_zero < 0
    assert cq.to_dict()["critical_q"] is None


@pytest.mark.parametrize("nu", [0.3, 1.0, 3.0])
def test_sigma_decreasing_in_flow(column_one, regime_one, nu):
    qs = column_one.qstar * np.linspace(0.0, 0.95, 12)
    s = [column_one.sigma(nu, q, regime_one.b, regime_one.gamma) for q in qs]
    assert all(a > b for a, b in zip(s, s[1:]))


def test_washout_limit(column_one, regime_one):
    # as theta -> 0 the predator sees only mortality
    nu, gamma = 1.0, regime_one.gamma
    s = column_one.sigma(nu, 0.999 * column_one.qstar, regime_one.b, gamma)
    limit = sigma1(nu, column_one.qstar, 0.0, regime_one.grid) - gamma
    assert abs(s - limit) <= 0.15 * gamma
    assert s < -gamma


def test_sweep_monotone_and_single_transition(regime_one):
    m = sweep_region(log_range(0.05, 20.0, 5), 8, 1.0, regime_one.b, regime_one.gamma, regime_one)
    assert m.is_monotone() and not m.errors()
    assert all(m.transitions(c) == 1 for c in m.columns)
    assert all(column_is_invaded(c) for c in m.columns)
    for c in m.columns:
        k = c.verdicts.index(STABLE)
        assert c.q[k - 1] < c.critical_q < c.q[k]


def test_sweep_parallel_matches_serial(regime_one):
    args = (log_range(0.1, 10.0, 3), 4, 1.0, regime_one.b, regime_one.gamma, regime_one)
    a, b = sweep_region(*args, jobs=1), sweep_region(*args, jobs=3)
    assert a.summary() == b.summary()
    for ca, cb in zip(a.columns, b.columns):
        np.testing.assert_array_equal(ca.sigma, cb.sigma)


def test_sweep_rejects_empty(regime_one):
    with pytest.raises(ValueError):
        sweep_region([], 4, 1.0, 1.0, 1.5, regime_one)


def test_high_mortality_sweep_all_stable():
    sc = CANONICAL["regime-V"].with_(grid_n=N)
    m = sweep_region(log_range(0.01, 100.0, 4), 5, 1.0, sc.b, sc.gamma, sc)
    assert all(v == STABLE for c in m.columns for v in c.verdicts)
    assert all(c.critical_q is None for c in m.columns)


def test_sign_changes_low_mortality_none(regime_one):
    ch = sign_changes_in_mu(1.0, regime_one.b, regime_one.gamma, regime_one,
                            log_range(0.01, 100.0, 6))
    assert ch.count == 0 and np.all(ch.sigmas > 0)


def test_sign_change_below_hat_for_slow_predator():
    # gamma between sup int eta and max K: only a slowly diffusing predator invades
    sc = CANONICAL["regime-IV"].with_(grid_n=N)
    ch = sign_changes_in_mu(1e-3, sc.b, sc.gamma, sc, log_range(1e-3, 10.0, 12))
    assert ch.count == 1
    assert ch.sigmas[0] > 0 > ch.sigmas[-1]


def test_region_outputs(tmp_path, regime_one):
    m = sweep_region(log_range(0.1, 10.0, 2), 3, 1.0, regime_one.b, regime_one.gamma, regime_one)
    m.write_csv(tmp_path / "long.csv")
    m.write_csv(tmp_path / "gp.csv", layout="gnuplot")
    m.write_json(tmp_path / "m.json")
    long_rows = (tmp_path / "long.csv").read_text().splitlines()
    assert long_rows[0] == "mu,q,sigma,verdict" and len(long_rows) == 7
    assert (tmp_path / "gp.csv").read_text().splitlines().count("") == 1
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["schema"] == 1 and data["monotone"] is True
    assert len(data["boundary"]) == 2 and data["transitions"] == [1, 1]
