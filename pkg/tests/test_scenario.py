import pickle
from pathlib import Path

import numpy as np
import pytest

from riverstab.scenario import CANONICAL, Scenario, ScenarioError, load_scenario
from riverstab.thresholds import gamma_regime, gamma_thresholds

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write(tmp_path, text, name="s.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_file(tmp_path):
    sc = load_scenario(write(tmp_path, "[profiles]\nr = 1\nK = 2\n"))
    assert sc.name == "s" and sc.grid_n == 256 and sc.b == 1.0
    np.testing.assert_allclose(sc.K(sc.grid.nodes), 2.0)


def test_full_file(tmp_path):
    sc = load_scenario(write(tmp_path, """
[profiles]
r = 1 + x   # inline comment
K = 2
[rates]
b = 2
gamma = 3
nu = 0.5
q = 0.25
[ranges]
mu_min = 0.1
mu_max = 10
mu_count = 5
q_count = 7
[grid]
n = 64
"""))
    assert (sc.b, sc.gamma, sc.nu, sc.q, sc.grid_n, sc.q_count) == (2, 3, 0.5, 0.25, 64, 7)
    np.testing.assert_allclose(sc.mu_samples(), np.logspace(-1, 1, 5))


def test_csv_profile_relative_to_file(tmp_path):
    (tmp_path / "r.csv").write_text("x,value\n0,1\n1,3\n")
    sc = load_scenario(write(tmp_path, "[profiles]\nr = r.csv\nK = 2\n"))
    assert sc.r(np.array([0.5]))[0] == pytest.approx(2.0)


@pytest.mark.parametrize("text,match", [
    ("[rates]\nb = 1\n", "missing \\[profiles\\]"),
    ("[profiles]\nr = 1\n", "K"),
    ("[profiles]\nr = 1\nK = 2\n[rates]\nb = one\n", "bad value"),
    ("[profiles]\nr = 1\nK = 2\n[rates]\ndelta = 1\n", "unknown key"),
    ("[profiles]\nr = 1\nK = 2\n[extra]\n", "unknown section"),
    ("[profiles]\nr = 1\nK = 2\n[rates]\ngamma = 0\n", "gamma must be positive"),
    ("[profiles]\nr = 1\nK = 2\n[rates]\nq = -1\n", "q must be non-negative"),
    ("[profiles]\nr = 1\nK = 2\n[ranges]\nmu_min = 10\nmu_max = 1\n", "mu range"),
    ("[profiles]\nr = 1\nK = 2\n[grid]\nn = 2\n", "grid n"),
    ("[profiles]\nr = x - 0.5\nK = 2\n", "not positive"),
    ("[profiles\n", "cannot read"),
])
def test_bad_files(tmp_path, text, match):
    with pytest.raises(ScenarioError, match=match):
        load_scenario(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "absent.ini")


def test_pickle_round_trip():
    sc = CANONICAL["regime-II"]
    sc.r  # populate the cache before pickling
    back = pickle.loads(pickle.dumps(sc))
    assert back == sc
    np.testing.assert_array_equal(back.r(back.grid.nodes), sc.r(sc.grid.nodes))


def test_with_overrides():
    sc = CANONICAL["regime-I"].with_(gamma=1.7, grid_n=64)
    assert sc.gamma == 1.7 and sc.grid.n == 64 and sc.r_spec == CANONICAL["regime-I"].r_spec


def test_dict_view():
    d = CANONICAL["regime-IV"].to_dict()
    assert d["gamma"] == 2.0 and d["name"] == "regime-IV"


@pytest.mark.parametrize("path,regime", [
    ("p1_regime_I.ini", "I"), ("p1_regime_III.ini", "III"), ("p1_regime_IV.ini", "IV"),
    ("p1_regime_V.ini", "V"), ("r_squared_regime_II.ini", "II"), ("p2_general.ini", "I")])
def test_shipped_scenarios(path, regime):
    sc = load_scenario(SCENARIOS / path).with_(grid_n=128)
    th = gamma_thresholds(sc.b, sc.r, sc.K, sc.grid, np.logspace(-3, 4, 16))
    assert gamma_regime(sc.gamma, th) == regime


@pytest.mark.parametrize("name", sorted(CANONICAL))
def test_canonical_regimes(name):
    sc = CANONICAL[name].with_(grid_n=128)
    th = gamma_thresholds(sc.b, sc.r, sc.K, sc.grid, np.logspace(-3, 4, 16))
    assert gamma_regime(sc.gamma, th) == name.split("-")[1]


def test_direct_construction_validates():
    with pytest.raises(ScenarioError):
        Scenario("1", "1", mu_count=1)
