"""Uniform rectangular grids and nodal fields with a structural zero boundary.

Only interior nodes are stored. Node ``(i, j)`` sits at ``((i+1)*hx, (j+1)*hy)``
and is stored at flat index ``i*ny + j``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise InvalidArgumentError("grid sizes must be integers")
        if self.nx < 1 or self.ny < 1:
            raise InvalidArgumentError(f"grid sizes must be >= 1, got ({self.nx}, {self.ny})")
        if not (self.lx > 0 and self.ly > 0) or not np.isfinite([self.lx, self.ly]).all():
            raise InvalidArgumentError(f"domain lengths must be positive, got ({self.lx}, {self.ly})")

    @property
    def hx(self) -> float:
        return self.lx / (self.nx + 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny + 1)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        """Quadrature weight attached to every interior node."""
        return self.hx * self.hy

    def index(self, i: int, j: int) -> int:
        return i * self.ny + j

    def coordinates(self):
        """Return ``(X, Y)`` arrays of shape ``(nx, ny)``."""
        x = self.hx * np.arange(1, self.nx + 1)
        y = self.hy * np.arange(1, self.ny + 1)
        return np.meshgrid(x, y, indexing="ij")

    def node(self, i: int, j: int):
        return ((i + 1) * self.hx, (j + 1) * self.hy)


def create_grid(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> Grid:
    return Grid(nx, ny, float(lx), float(ly))


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal scalar on the interior nodes of ``grid``.

    ``values`` is a flat, read-only copy of length ``nx*ny``.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise InvalidArgumentError(
                f"field has {v.size} values, grid needs {self.grid.size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, np.full(grid.size, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        """Sample ``fn(X, Y)`` (vectorized) at the interior nodes."""
        X, Y = grid.coordinates()
        return cls(grid, np.broadcast_to(fn(X, Y), X.shape))

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.nx, self.grid.ny)

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise InvalidArgumentError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __mul__(self, alpha):
        return Field(self.grid, self.values * alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())


def _same_grid(a: Field, b: Field):
    if a.grid != b.grid:
        raise InvalidArgumentError("fields live on different grids")


def lp_power_norm(v: Field, r: float) -> float:
    """Nodal quadrature of ``|v|**r``: ``sum(hx*hy*|v_ij|**r)``.

    This is exact for the quadrature rule; against the continuum integral of a
    smooth function vanishing on the boundary the error is O(h^2).
    """
    if not r >= 1:
        raise InvalidArgumentError(f"exponent must be >= 1, got {r}")
    return float(v.grid.cell_area * np.sum(np.abs(v.values) ** r))


def inner_product(a: Field, b: Field) -> float:
    _same_grid(a, b)
    return float(a.grid.cell_area * np.dot(a.values, b.values))


def l2_norm(v: Field) -> float:
    return float(np.sqrt(v.grid.cell_area) * np.linalg.norm(v.values))


def write_field_csv(v: Field, path) -> None:
    """Write ``x,y,value`` rows, row-major over ``(i, j)``, 17 significant digits."""
    X, Y = v.grid.coordinates()
    with open(path, "w", newline="") as fh:
        fh.write("x,y,value\n")
        for x, y, val in zip(X.ravel(), Y.ravel(), v.values):
            fh.write(f"{x:.17g},{y:.17g},{val:.17g}\n")


def read_field_csv(path, grid: Grid) -> Field:
    """Read a field written by :func:`write_field_csv` back onto ``grid``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y", "value"]:
            raise InvalidArgumentError(f"{path}: expected header 'x,y,value'")
        rows = [row for row in reader if row]
    if len(rows) != grid.size:
        raise InvalidArgumentError(f"{path}: {len(rows)} rows, grid has {grid.size} nodes")
    data = np.array([[float(c) for c in row] for row in rows])
    X, Y = grid.coordinates()
    tol = 1e-9 * max(grid.lx, grid.ly)
    if (np.abs(data[:, 0] - X.ravel()).max() > tol
            or np.abs(data[:, 1] - Y.ravel()).max() > tol):
        raise InvalidArgumentError(f"{path}: node coordinates do not match the grid")
    return Field(grid, data[:, 2])
