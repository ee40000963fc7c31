import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riverstab.discretization import Grid
from riverstab.profiles import (ProfileError, check_hypotheses, constant, evaluate,
                                load_profile_csv, parse_profile, profile_from_spec,
                                sampled_profile)


@pytest.mark.parametrize("text, x, expected", [
    ("1 + 0.5*x", 0.0, 1.0),
    ("cos(0)", 0.3, 1.0),
    ("cos(0)", 0.9, 1.0),
    ("2 + cos(3.141592653589793*x)/2", 1.0, 2 + math.cos(3.141592653589793) / 2),
    ("-x + exp(x) * sin(x)", 0.7, -0.7 + math.exp(0.7) * math.sin(0.7)),
    ("(1 + 3*x)*(1 + 3*x)", 0.5, 6.25),
    ("--x", 0.25, 0.25),
])
def test_parse_and_evaluate(text, x, expected):
    assert parse_profile(text)(x)[0] == pytest.approx(expected, rel=0, abs=1e-15)


def test_constant_on_grid():
    g = Grid(32)
    assert np.all(evaluate(parse_profile("3"), g) == 3.0)
    assert np.all(evaluate(constant(2.5), g) == 2.5)


def test_identity_at_uniform_points():
    np.testing.assert_array_equal(parse_profile("x")(np.linspace(0, 1, 5)),
                                  [0, 0.25, 0.5, 0.75, 1])


def test_sampled_round_trip():
    g = Grid(64)
    xs = np.concatenate([[0.0], g.nodes, [1.0]])
    vals = np.cos(xs)
    p = sampled_profile(xs, vals)
    np.testing.assert_array_equal(evaluate(p, g), np.cos(g.nodes))


def test_sampled_interpolates_linearly():
    p = sampled_profile([0, 1], [1, 3])
    np.testing.assert_allclose(p([0.25, 0.5]), [1.5, 2.0])


@pytest.mark.parametrize("text, fragment", [
    ("1 +", "syntax error at position"),
    ("y + 1", "unknown identifier"),
    ("tan(x)", "unknown"),
    ("x ** 2", "unsupported"),
    ("__import__('os')", "unknown"),
    ("[1, 2]", "unsupported syntax at position 1"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ProfileError, match=fragment):
        parse_profile(text)


def test_division_by_zero_detected_on_sampling():
    p = parse_profile("1/(x - 0.5)")
    with pytest.raises(ProfileError, match="not finite"):
        p(np.linspace(0, 1, 5))


def test_csv_profile(tmp_path):
    f = tmp_path / "r.csv"
    f.write_text("x,value\n0,1\n0.5,2\n1,3\n")
    p = load_profile_csv(f)
    assert p(0.25)[0] == pytest.approx(1.5)
    assert profile_from_spec("r.csv", tmp_path)(1.0)[0] == 3.0


@pytest.mark.parametrize("content", ["x,value\n0.1,1\n1,2\n", "0,1\n0.5,2\n0.5,3\n1,1\n", "0,1\n1,nan\n"])
def test_bad_csv(tmp_path, content):
    f = tmp_path / "bad.csv"
    f.write_text(content)
    with pytest.raises(ProfileError):
        load_profile_csv(f)


_atoms = st.one_of(st.just("x"), st.floats(0.1, 5, allow_nan=False).map(lambda v: repr(round(v, 6))))


def _expr(children):
    binop = st.tuples(children, st.sampled_from("+-*"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
    func = st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: f"{t[0]}({t[1]})")
    neg = children.map(lambda c: f"-({c})")
    return st.one_of(binop, func, neg)


expressions = st.recursive(_atoms, _expr, max_leaves=8)


@settings(max_examples=60, deadline=None)
@given(expressions)
def test_unparse_round_trip(text):
    xs = np.linspace(0, 1, 101)
    p = parse_profile(text)
    a = p(xs)
    b = parse_profile(p.unparse())(xs)
    assert np.all(np.abs(a - b) <= 1e-14 * np.maximum(1, np.abs(a)))


def test_p1_passes_all_hypotheses(p1, grid):
    rep = check_hypotheses(*p1, grid)
    assert rep.regime_hypotheses_ok, rep.failures()
    assert rep.integral_gain_ok
    assert rep["K_min_ge_1"].margin == pytest.approx(0.5)
    assert rep["K_max_le_2min"].margin == pytest.approx(0.75)


def test_constant_profiles_fail_nonconstancy(grid):
    rep = check_hypotheses(parse_profile("1"), parse_profile("1"), grid)
    assert not rep["r_nonconstant"].passed
    assert not rep["K_nonconstant"].passed


def test_p2_fails_ratio_monotonicity(p2, grid):
    rep = check_hypotheses(*p2, grid)
    assert not rep["r_over_K_nonincreasing"].passed
    assert rep["r_over_K_nonincreasing"].margin < -0.1


def test_report_is_reproducible(p2, grid):
    assert check_hypotheses(*p2, grid).to_dict() == check_hypotheses(*p2, grid).to_dict()


def test_flags_stable_under_small_scaling(p2, grid):
    r, K = p2
    base = check_hypotheses(r, K, grid)
    pert = check_hypotheses(r, K.scaled(1 + 1e-6), grid)
    for name, flag in base.flags.items():
        if abs(flag.margin) > 1e-3:
            assert pert[name].passed == flag.passed, name
