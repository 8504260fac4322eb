"""Uniform periodic grids on [0,1)^d and functions sampled on them."""
from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .errors import GridMismatch


@dataclass(frozen=True)
class PeriodicGrid:
    dimension: int
    n: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.n < 4:
            raise ValueError("a periodic grid needs at least 4 nodes per axis")

    @property
    def nodes_per_dim(self):
        return self.n

    @property
    def spacing(self):
        return 1.0 / self.n

    @property
    def shape(self):
        return (self.n,) * self.dimension

    @property
    def size(self):
        return self.n**self.dimension

    @cached_property
    def multi_index(self):
        """(size, d) integer node indices in row-major order."""
        idx = np.indices(self.shape).reshape(self.dimension, -1).T
        return np.ascontiguousarray(idx)

    @cached_property
    def coordinates(self):
        return self.multi_index * self.spacing

    def flat_index(self, multi):
        multi = np.asarray(multi) % self.n
        return np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), self.shape)

    def node_of(self, x):
        """Flat index of the node nearest to the point x (wrapped)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return int(self.flat_index(np.rint(x * self.n).astype(int)))

    @classmethod
    def for_step(cls, tau, dimension=1, c_h=1.0, exponent=2.0, minimum=4):
        """Grid obeying h <= c_h * tau**exponent."""
        n = int(np.ceil(1.0 / (c_h * tau**exponent) - 1e-9))
        return cls(dimension, max(n, minimum))


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise GridMismatch(f"expected {self.grid.size} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid, func):
        x = grid.coordinates
        return cls(grid, func(x[:, 0] if grid.dimension == 1 else x))

    @classmethod
    def constant(cls, grid, c=0.0):
        return cls(grid, np.full(grid.size, float(c)))

    def as_array(self):
        return self.values.reshape(self.grid.shape)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            _check_same(self, other)
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            _check_same(self, other)
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - other)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"GridFunction(d={self.grid.dimension}, n={self.grid.n}, min={self.values.min():.6g}, max={self.values.max():.6g})"


def _check_same(f, g):
    if f.grid != g.grid:
        raise GridMismatch(f"grids differ: {f.grid} vs {g.grid}")


def sup_norm_diff(f: GridFunction, g: GridFunction) -> float:
    _check_same(f, g)
    return float(np.max(np.abs(f.values - g.values)))


def oscillation(f: GridFunction) -> float:
    return float(f.values.max() - f.values.min())


def dist_torus(x, y):
    """Flat-torus distance between points of [0,1)^d (broadcasts)."""
    diff = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    diff = diff - np.floor(diff)
    diff = np.minimum(diff, 1.0 - diff)
    if diff.ndim == 0:
        return float(diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def discrete_lipschitz(f: GridFunction) -> float:
    """Largest difference quotient over axis-adjacent node pairs, wrap included."""
    a = f.as_array()
    h = f.grid.spacing
    best = 0.0
    for axis in range(f.grid.dimension):
        step = np.abs(np.roll(a, -1, axis=axis) - a)
        best = max(best, float(step.max()) / h)
    return best


def normalize_min_zero(f: GridFunction) -> GridFunction:
    return GridFunction(f.grid, f.values - f.values.min())


def interpolate(f: GridFunction, x):
    """Periodic multilinear interpolation of f at points x (shape (..., d) or (...) for d=1)."""
    grid = f.grid
    d = grid.dimension
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    s = (x - np.floor(x)) * grid.n
    base = np.floor(s).astype(np.int64)
    frac = s - base
    out = np.zeros(x.shape[:-1])
    a = f.as_array()
    for corner in product((0, 1), repeat=d):
        c = np.asarray(corner)
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=-1)
        idx = (base + c) % grid.n
        out = out + w * a[tuple(np.moveaxis(idx, -1, 0))]
    return out


def resample(f: GridFunction, grid: PeriodicGrid) -> GridFunction:
    """Transfer f onto another grid; exact injection when the target nodes are a subset."""
    if grid == f.grid:
        return f
    if f.grid.n % grid.n == 0:
        stride = f.grid.n // grid.n
        sl = tuple(slice(None, None, stride) for _ in range(grid.dimension))
        return GridFunction(grid, f.as_array()[sl].ravel())
    x = grid.coordinates
    return GridFunction(grid, interpolate(f, x if grid.dimension > 1 else x[:, 0]))


def to_csv(f: GridFunction, path=None, comment=None):
    """Write ``index_0..,x_0..,value`` rows with 17 significant digits."""
    grid = f.grid
    d = grid.dimension
    header = ",".join([f"index_{k}" for k in range(d)] + [f"x_{k}" for k in range(d)] + ["value"])
    buf = io.StringIO()
    if comment:
        for line in str(comment).splitlines():
            buf.write(f"# {line}\n")
    buf.write(header + "\n")
    idx = grid.multi_index
    xs = grid.coordinates
    for i in range(grid.size):
        row = [str(int(k)) for k in idx[i]] + [f"{c:.17g}" for c in xs[i]] + [f"{f.values[i]:.17g}"]
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def from_csv(source) -> GridFunction:
    """Read a GridFunction written by :func:`to_csv` (path or text)."""
    if "\n" in str(source):
        text = str(source)
    else:
        with open(source) as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    header = lines[0].split(",")
    d = sum(1 for h in header if h.startswith("index_"))
    rows = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]])
    n = int(round(len(rows) ** (1.0 / d)))
    grid = PeriodicGrid(d, n)
    idx = rows[:, :d].astype(int)
    vals = np.empty(grid.size)
    vals[grid.flat_index(idx)] = rows[:, -1]
    return GridFunction(grid, vals)
