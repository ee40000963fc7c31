"""Cell-centred finite-volume form of L[d,q,h] = d u'' - q u' + h u on [0, 1].

The operator is written in flux form, ``(F_{i+1/2} - F_{i-1/2}) / dx`` with
``F = d u' - q u``.  The upstream condition ``d u'(0) - q u(0) = 0`` is a zero
flux and is imposed exactly; at ``x = 1`` a mirror ghost cell gives
``u'(1) = 0`` so that the outflow flux is ``-q u_{n-1}``.

Interfaces use the centred flux.  Once the cell Peclet number ``q dx / (2 d)``
reaches 1 the centred off-diagonal goes negative and the matrix stops being
an M-matrix, so the ``"auto"`` scheme switches to the exponentially fitted
(Scharfetter-Gummel) flux, which agrees with the centred one to O(dx^2).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import exprel

from .profiles import Profile

MIN_CELLS = 16
DEFAULT_CELLS = 256


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < MIN_CELLS:
            raise GridError(f"grid needs at least {MIN_CELLS} cells, got {self.n}")
        object.__setattr__(self, "nodes", (np.arange(self.n) + 0.5) / self.n)
        self.nodes.setflags(write=False)

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    def integrate(self, values) -> float:
        """Midpoint rule over the cells."""
        return float(np.sum(values) * self.dx)


def build_grid(n: int = DEFAULT_CELLS) -> Grid:
    return Grid(n)


def _bernoulli(z):
    # B(z) = z / (e^z - 1)
    return 1.0 / exprel(z)


@dataclass(frozen=True)
class DiscreteOperator:
    """Tridiagonal matrix A with ``lower[i] = A[i+1, i]``, ``upper[i] = A[i, i+1]``."""

    d: float
    q: float
    h: np.ndarray = field(repr=False)
    grid: Grid
    diag: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    scheme: str = "centered"

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def peclet(self) -> float:
        return self.q * self.grid.dx / (2.0 * self.d)

    def shifted(self, c: float) -> "DiscreteOperator":
        return DiscreteOperator(self.d, self.q, self.h + c, self.grid, self.diag + c,
                                self.lower, self.upper, self.scheme)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.upper * v[1:]
        out[1:] += self.lower * v[:-1]
        return out

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)

    def banded(self) -> np.ndarray:
        """(3, n) storage for :func:`scipy.linalg.solve_banded` with (1, 1)."""
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.upper
        ab[1] = self.diag
        ab[2, :-1] = self.lower
        return ab

    def solve_shifted(self, s: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(s I - A) x = rhs``."""
        ab = -self.banded()
        ab[1] += s
        return solve_banded((1, 1), ab, rhs)

    def norm_inf(self) -> float:
        row = np.abs(self.diag).copy()
        row[:-1] += np.abs(self.upper)
        row[1:] += np.abs(self.lower)
        return float(row.max())

    def gershgorin_upper(self) -> float:
        row = self.diag.copy()
        row[:-1] += np.abs(self.upper)
        row[1:] += np.abs(self.lower)
        return float(row.max())

    def log_weights(self) -> np.ndarray:
        """Log of the diagonal W with W A symmetric, normalised to W[0] = 1.

        This is the discrete counterpart of the weight exp(-q x / d).
        """
        return np.concatenate([[0.0], np.cumsum(np.log(self.upper) - np.log(self.lower))])

    def symmetrized(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of S = W^{1/2} A W^{-1/2}."""
        return self.diag.copy(), np.sqrt(self.upper * self.lower)

    def to_rows(self):
        for i in range(self.n):
            if i > 0:
                yield i, i - 1, float(self.lower[i - 1])
            yield i, i, float(self.diag[i])
            if i < self.n - 1:
                yield i, i + 1, float(self.upper[i])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "value"])
            for i, j, v in self.to_rows():
                w.writerow([i, j, repr(v)])


def _potential(h, grid: Grid) -> np.ndarray:
    if isinstance(h, Profile):
        return h(grid.nodes)
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        return np.full(grid.n, float(h))
    if h.shape != (grid.n,):
        raise GridError(f"potential has shape {h.shape}, grid has {grid.n} cells")
    return h.astype(float, copy=True)


def assemble(d: float, q: float, h, grid: Grid, scheme: str = "auto") -> DiscreteOperator:
    """Assemble the tridiagonal finite-volume matrix of ``d u'' - q u' + h u``.

    ``h`` is a :class:`Profile`, an array of nodal values or a scalar.
    ``scheme`` is ``"centered"``, ``"fitted"`` or ``"auto"`` (centred unless
    the cell Peclet number is at least 1).
    """
    if not d > 0:
        raise ValueError(f"diffusion rate must be positive, got {d}")
    if not q >= 0:
        raise ValueError(f"advection rate must be non-negative, got {q}")
    hv = _potential(h, grid)
    if not np.all(np.isfinite(hv)):
        raise ValueError("potential has non-finite values")
    n, dx = grid.n, grid.dx
    pe = q * dx / (2.0 * d)
    if scheme == "auto":
        scheme = "fitted" if pe >= 1.0 else "centered"
    if scheme == "centered":
        # F_{i+1/2} = a u_{i+1} - c u_i
        a = d / dx - q / 2.0
        c = d / dx + q / 2.0
    elif scheme == "fitted":
        a = d / dx * _bernoulli(2.0 * pe)
        c = d / dx * _bernoulli(-2.0 * pe)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    # row i: (F_{i+1/2} - F_{i-1/2}) / dx + h_i u_i
    upper = np.full(n - 1, a / dx)
    lower = np.full(n - 1, c / dx)
    diag = np.empty(n)
    diag[:] = -(c + a) / dx
    diag[0] = -c / dx  # F_{-1/2} = 0
    diag[-1] = -q / dx - a / dx  # F_{n-1/2} = -q u_{n-1}
    diag += hv
    return DiscreteOperator(float(d), float(q), hv, grid, diag, lower, upper, scheme)
