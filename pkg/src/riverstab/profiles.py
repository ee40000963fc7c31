"""Spatial coefficient profiles r(x), K(x) on [0, 1].

Profiles are written in a tiny expression language (real literals, ``x``,
``+ - * /``, unary minus, parentheses, ``sin``, ``cos``, ``exp``) or loaded
from a two-column CSV of samples.
"""
from __future__ import annotations

import ast
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .discretization import Grid

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}

# hypothesis-check tolerances
SIGN_TOL = 1e-8
CONST_TOL = 1e-10


class ProfileError(ValueError):
    """Raised for malformed or non-evaluable profiles."""


def _validate(node: ast.AST, text: str) -> None:
    where = f"at position {getattr(node, 'col_offset', 0) + 1}"
    if isinstance(node, ast.Expression):
        _validate(node.body, text)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ProfileError(f"unsupported literal {node.value!r} {where} in {text!r}")
    elif isinstance(node, ast.Name):
        if node.id != "x":
            raise ProfileError(f"unknown identifier {node.id!r} {where} in {text!r}")
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ProfileError(f"unsupported operator {where} in {text!r}")
        _validate(node.left, text)
        _validate(node.right, text)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, ast.USub):
            raise ProfileError(f"unsupported unary operator {where} in {text!r}")
        _validate(node.operand, text)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            name = getattr(node.func, "id", "?")
            raise ProfileError(f"unknown identifier {name!r} {where} in {text!r}")
        if len(node.args) != 1 or node.keywords:
            raise ProfileError(f"{node.func.id} takes exactly one argument {where} in {text!r}")
        _validate(node.args[0], text)
    else:
        raise ProfileError(f"unsupported syntax {where} in {text!r}")


def _eval(node: ast.AST, x: np.ndarray) -> np.ndarray:
    if isinstance(node, ast.Constant):
        return np.full_like(x, float(node.value))
    if isinstance(node, ast.Name):
        return x
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, x), _eval(node.right, x))
    if isinstance(node, ast.UnaryOp):
        return -_eval(node.operand, x)
    return FUNCTIONS[node.func.id](_eval(node.args[0], x))


@dataclass(frozen=True)
class Profile:
    """A positive-or-not function on [0, 1], from an expression or from samples.

    Exactly one of ``tree`` (parsed expression) or ``xs``/``values`` (samples)
    is set. Instances are immutable.
    """

    text: str
    tree: ast.Expression | None = field(default=None, repr=False, compare=False)
    xs: np.ndarray | None = field(default=None, repr=False, compare=False)
    values: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def is_sampled(self) -> bool:
        return self.tree is None

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.tree is not None:
            with np.errstate(all="ignore"):
                out = _eval(self.tree.body, x)
        else:
            out = np.interp(x, self.xs, self.values)
        if not np.all(np.isfinite(out)):
            bad = x[~np.isfinite(out)][0]
            raise ProfileError(f"profile {self.text!r} is not finite at x={bad:.17g}")
        return out

    def unparse(self) -> str:
        if self.tree is None:
            return self.text
        return ast.unparse(self.tree)

    def scaled(self, factor: float) -> "Profile":
        if self.tree is None:
            return Profile(f"{factor!r}*({self.text})", xs=self.xs, values=self.values * factor)
        return parse_profile(f"({factor!r})*({self.unparse()})")


def parse_profile(text: str) -> Profile:
    """Parse an expression in ``x`` into a :class:`Profile`.

    >>> parse_profile("1 + 0.5*x")(0.0)[0]
    1.0
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ProfileError(f"syntax error at position {exc.offset} in {text!r}: {exc.msg}") from None
    _validate(tree, text)
    return Profile(text=text.strip(), tree=tree)


def sampled_profile(xs, values, name: str = "<samples>") -> Profile:
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.shape != values.shape or xs.size < 2:
        raise ProfileError("sampled profile needs matching 1-D x and value arrays")
    if np.any(np.diff(xs) <= 0):
        raise ProfileError("sample abscissae must be strictly increasing")
    if xs[0] > 0.0 or xs[-1] < 1.0:
        raise ProfileError("samples must cover [0, 1]")
    if not np.all(np.isfinite(values)):
        raise ProfileError("non-finite sample value")
    return Profile(text=name, xs=xs.copy(), values=values.copy())


def load_profile_csv(path) -> Profile:
    """Read a two-column (x, value) CSV; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ProfileError(f"{path}: malformed row {i + 1}: {row!r}") from None
    if not rows:
        raise ProfileError(f"{path}: no samples")
    xs, vals = zip(*rows)
    return sampled_profile(xs, vals, name=str(path))


def profile_from_spec(spec: str, base_dir: Path | None = None) -> Profile:
    """Expression string, or a path to a CSV file when it ends in ``.csv``."""
    spec = spec.strip()
    if spec.lower().endswith(".csv"):
        path = Path(spec)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_profile_csv(path)
    return parse_profile(spec)


def constant(value: float) -> Profile:
    return parse_profile(repr(float(value)))


def evaluate(p: Profile, grid: "Grid") -> np.ndarray:
    """Samples of ``p`` at the grid's cell centres."""
    return p(grid.nodes)


# -- structural hypotheses ---------------------------------------------------

@dataclass(frozen=True)
class Flag:
    passed: bool
    margin: float


@dataclass(frozen=True)
class HypothesisReport:
    flags: dict[str, Flag]

    REGIME_HYPOTHESES = (
        "r_positive", "K_positive", "r_nonconstant", "K_nonconstant",
        "r_over_K_nonincreasing", "r_nondecreasing", "K_over_r_flat_at_0",
        "K_over_r_flat_at_1", "K_max_le_2min", "K_min_ge_1", "K_over_r_convex",
    )
    INTEGRAL_GAIN = ("K_over_r_flat_at_0", "K_over_r_flat_at_1", "K_min_ge_1", "K_over_r_convex")

    def __getitem__(self, name: str) -> Flag:
        return self.flags[name]

    def all_pass(self, names=None) -> bool:
        names = self.flags if names is None else names
        return all(self.flags[n].passed for n in names)

    @property
    def regime_hypotheses_ok(self) -> bool:
        return self.all_pass(self.REGIME_HYPOTHESES)

    @property
    def integral_gain_ok(self) -> bool:
        return self.all_pass(self.INTEGRAL_GAIN)

    def failures(self) -> list[str]:
        return [k for k, f in self.flags.items() if not f.passed]

    def to_dict(self) -> dict:
        return {k: {"passed": f.passed, "margin": f.margin} for k, f in self.flags.items()}


def check_hypotheses(r: Profile, K: Profile, grid: "Grid") -> HypothesisReport:
    """Check the structural assumptions on (r, K) with finite differences.

    Derivatives are taken on a uniform mesh including both endpoints and four
    times finer than ``grid``. Sign conditions allow a slack of ``SIGN_TOL``;
    a profile is non-constant when its range exceeds ``CONST_TOL * max|p|``.
    """
    x = np.linspace(0.0, 1.0, 4 * grid.n + 1)
    dx = x[1] - x[0]
    rv, Kv = r(x), K(x)
    flags: dict[str, Flag] = {}

    def sign_flag(name, margin):
        flags[name] = Flag(bool(margin >= -SIGN_TOL), float(margin) + 0.0)  # no -0.0

    flags["r_positive"] = Flag(bool(rv.min() > 0), float(rv.min()))
    flags["K_positive"] = Flag(bool(Kv.min() > 0), float(Kv.min()))
    for name, v in (("r", rv), ("K", Kv)):
        slack = float(np.ptp(v) - CONST_TOL * np.abs(v).max())
        flags[f"{name}_nonconstant"] = Flag(slack > 0, slack)

    with np.errstate(all="ignore"):
        rk = rv / Kv
        kr = Kv / rv
    d_rk = np.gradient(rk, dx, edge_order=2)
    d_r = np.gradient(rv, dx, edge_order=2)
    d_kr = np.gradient(kr, dx, edge_order=2)
    dd_kr = np.gradient(d_kr, dx, edge_order=2)

    sign_flag("r_over_K_nonincreasing", -np.max(d_rk))
    sign_flag("r_nondecreasing", np.min(d_r))
    sign_flag("K_over_r_flat_at_0", -abs(d_kr[0]))
    sign_flag("K_over_r_flat_at_1", -abs(d_kr[-1]))
    flags["K_max_le_2min"] = Flag(bool(2 * Kv.min() - Kv.max() >= 0), float(2 * Kv.min() - Kv.max()))
    flags["K_min_ge_1"] = Flag(bool(Kv.min() >= 1.0), float(Kv.min() - 1.0))
    sign_flag("K_over_r_convex", np.min(dd_kr))
    return HypothesisReport(flags)
