"""Scenario description: profiles, rates, parameter ranges and grid size.

Scenario files are INI-style (``configparser``)::

    [profiles]
    r = 1 + 0.5*x
    K = 1.5*(1 + 0.5*x)

    [rates]
    b = 1
    gamma = 1.5
    mu = 1
    nu = 1
    q = 0.1

    [ranges]
    mu_min = 0.01
    mu_max = 100
    mu_count = 20
    q_count = 24

    [grid]
    n = 256

Profile values may also name a two-column CSV file (``r = r.csv``), resolved
relative to the scenario file.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .discretization import DEFAULT_CELLS, MIN_CELLS, Grid
from .profiles import Profile, profile_from_spec


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    r_spec: str
    K_spec: str
    b: float = 1.0
    gamma: float = 1.0
    mu: float = 1.0
    nu: float = 1.0
    q: float = 0.0
    mu_min: float = 1e-2
    mu_max: float = 1e2
    mu_count: int = 20
    q_count: int = 24
    grid_n: int = DEFAULT_CELLS
    name: str = ""
    base_dir: str | None = field(default=None, compare=False)

    def __post_init__(self):
        for key in ("b", "gamma", "mu", "nu"):
            if not getattr(self, key) > 0:
                raise ScenarioError(f"{key} must be positive, got {getattr(self, key)}")
        if not self.q >= 0:
            raise ScenarioError(f"q must be non-negative, got {self.q}")
        if not 0 < self.mu_min < self.mu_max:
            raise ScenarioError("mu range must satisfy 0 < mu_min < mu_max")
        if self.mu_count < 2 or self.q_count < 2:
            raise ScenarioError("ranges need at least two samples")
        if self.grid_n < MIN_CELLS:
            raise ScenarioError(f"grid n must be at least {MIN_CELLS}")

    @cached_property
    def r(self) -> Profile:
        return profile_from_spec(self.r_spec, self._base)

    @cached_property
    def K(self) -> Profile:
        return profile_from_spec(self.K_spec, self._base)

    @property
    def _base(self):
        return Path(self.base_dir) if self.base_dir else None

    @cached_property
    def grid(self) -> Grid:
        return Grid(self.grid_n)

    def mu_samples(self) -> np.ndarray:
        return np.logspace(np.log10(self.mu_min), np.log10(self.mu_max), self.mu_count)

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)

    def check_profiles(self) -> None:
        x = np.linspace(0.0, 1.0, 4 * self.grid_n + 1)
        for name, p in (("r", self.r), ("K", self.K)):
            if not np.all(p(x) > 0):
                raise ScenarioError(f"profile {name} = {p.text!r} is not positive on [0, 1]")

    def to_dict(self) -> dict:
        return {"r": self.r_spec, "K": self.K_spec, "b": self.b, "gamma": self.gamma,
                "mu": self.mu, "nu": self.nu, "q": self.q, "mu_min": self.mu_min,
                "mu_max": self.mu_max, "mu_count": self.mu_count, "q_count": self.q_count,
                "grid_n": self.grid_n, "name": self.name}


_FLOATS = {"b", "gamma", "mu", "nu", "q", "mu_min", "mu_max"}
_INTS = {"mu_count", "q_count", "grid_n", "n"}


def load_scenario(path) -> Scenario:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    if not cp.has_section("profiles"):
        raise ScenarioError(f"{path}: missing [profiles] section")
    kw: dict = {"name": path.stem, "base_dir": str(path.parent)}
    try:
        kw["r_spec"] = cp.get("profiles", "r")
        kw["K_spec"] = cp.get("profiles", "K")
    except configparser.NoOptionError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    for section in ("rates", "ranges", "grid"):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            target = "grid_n" if key == "n" else key
            if key not in _FLOATS and key not in _INTS:
                raise ScenarioError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                kw[target] = float(raw) if key in _FLOATS else int(raw)
            except ValueError:
                raise ScenarioError(f"{path}: bad value for {key}: {raw!r}") from None
    for section in cp.sections():
        if section not in ("profiles", "rates", "ranges", "grid"):
            raise ScenarioError(f"{path}: unknown section [{section}]")
    sc = Scenario(**kw)
    sc.check_profiles()
    return sc


# canonical profile pairs
P1 = ("1 + 0.5*x", "1.5*(1 + 0.5*x)")
P2 = ("1 + x", "2 + cos(3.141592653589793*x)/2")
P3 = ("1 + 0.5*x", "1 + 0.5*x")
# r = K^2: gamma_1 < gamma_2, needed for regime II (breaks (r/K)' <= 0)
P4 = ("(1 + 3*x)*(1 + 3*x)", "1 + 3*x")

CANONICAL = {
    "regime-I": Scenario(*P1, b=1.0, gamma=1.5, name="regime-I"),
    "regime-II": Scenario(*P4, b=1.0, gamma=2.65, name="regime-II"),
    "regime-III": Scenario(*P1, b=1.0, gamma=1.878, name="regime-III"),
    "regime-IV": Scenario(*P1, b=1.0, gamma=2.0, name="regime-IV"),
    "regime-V": Scenario(*P1, b=1.0, gamma=2.25, name="regime-V"),
}
