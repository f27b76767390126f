"""Uniform periodic grids, sampled fields, discrete calculus and weighted norms."""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass

import numpy as np


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Cell-centred periodic grid on [-L/2, L/2)."""

    length: float
    cells: int

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("grid length must be positive")
        if self.cells < 8:
            raise ValueError("grid needs at least 8 cells")

    @property
    def dx(self) -> float:
        return self.length / self.cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.dx - self.length / 2


class Field:
    """Values sampled at the cell centres of a :class:`Grid`."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=float, copy=True)
        if values.shape != (grid.cells,):
            raise ValueError(f"expected {grid.cells} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = values

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, np.full(grid.cells, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "Field":
        return cls(grid, f(grid.centers))

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise GridMismatch(f"grid mismatch: {self.grid} vs {other.grid}")

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

    def __mul__(self, c):
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __eq__(self, other):
        return (isinstance(other, Field) and other.grid == self.grid
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"Field(L={self.grid.length}, N={self.grid.cells})"

    def copy(self) -> "Field":
        return Field(self.grid, self.values)


# -- discrete calculus and norms ----------------------------------------------

def deriv(f: Field) -> Field:
    v = f.values
    return Field(f.grid, (np.roll(v, -1) - np.roll(v, 1)) / (2 * f.grid.dx))


def mean(f: Field) -> float:
    return float(np.mean(f.values))


def l1_norm(f: Field) -> float:
    return float(f.grid.dx * np.sum(np.abs(f.values)))


def l2_norm(f: Field) -> float:
    return float(math.sqrt(f.grid.dx * np.sum(f.values ** 2)))


def sup_norm(f: Field) -> float:
    return float(np.max(np.abs(f.values)))


@dataclass(frozen=True)
class WeightTag:
    """``kind`` is ``"poly_ell"`` (polynomial weight) or ``"zeta_ell"``
    (stretched-exponential weight)."""

    kind: str
    ell: float

    def __post_init__(self):
        if self.kind not in ("poly_ell", "zeta_ell"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not 0.0 < self.ell < 1.0:
            raise ValueError("ell must lie in (0, 1)")


def bracket(x):
    """Japanese bracket sqrt(4 + x^2)."""
    return np.sqrt(4.0 + np.asarray(x, float) ** 2)


def zeta_weight(x, ell: float):
    return np.exp(2.0 ** (1 - ell) - bracket(x) ** (1 - ell))


def weighted_sup_norm(f: Field, tag) -> float:
    """max_i |f_i| / <x_i>^ell.  ``tag`` may be a WeightTag or a bare ell."""
    if isinstance(tag, WeightTag):
        if tag.kind != "poly_ell":
            raise ValueError("weighted_sup_norm takes a poly_ell weight")
        ell = tag.ell
    else:
        ell = float(tag)
    return float(np.max(np.abs(f.values) / bracket(f.grid.centers) ** ell))


def weighted_l1_zeta(f: Field, ell: float) -> float:
    if not 0.0 < ell < 1.0:
        raise ValueError("ell must lie in (0, 1)")
    return float(f.grid.dx * np.sum(np.abs(f.values) * zeta_weight(f.grid.centers, ell)))


# -- L-periodization -----------------------------------------------------------

def smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 + t * (-15.0 + 6.0 * t))


def cutoff(x, length: float, margin: float):
    """Quintic cutoff: 1 on |x| <= L/2 - margin, 0 on |x| >= L/2 + margin.

    The transition band is symmetric about L/2, so the translates by jL sum
    to one.
    """
    a = np.abs(np.asarray(x, float))
    return 1.0 - smoothstep5((a - (length / 2 - margin)) / (2 * margin))


def periodize(samples, grid: Grid, margin: float) -> Field:
    """Sample sum_j chi(x - jL) v(x - jL) on the grid."""
    L = grid.length
    if not 0.0 < margin < L / 4:
        raise ValueError("margin must lie in (0, L/4)")
    x = grid.centers
    out = np.zeros_like(x)
    for j in (-1, 0, 1):
        y = x - j * L
        w = cutoff(y, L, margin)
        on = w > 0
        if on.any():
            out[on] += w[on] * np.asarray(samples(y[on]), float)
    return Field(grid, out)


# -- serialization --------------------------------------------------------------

def to_csv(f: Field) -> str:
    buf = io.StringIO()
    buf.write("x,value\n")
    for x, v in zip(f.grid.centers, f.values):
        buf.write(f"{float(x)!r},{float(v)!r}\n")
    return buf.getvalue()


def from_csv(text: str, length: float) -> Field:
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    values = [float(r[1]) for r in rows]
    return Field(Grid(length, len(values)), values)


def to_bytes(f: Field) -> bytes:
    """Little-endian record {N: u32, L: f64, values: f64 x N}."""
    return (struct.pack("<Id", f.grid.cells, f.grid.length)
            + np.asarray(f.values, dtype="<f8").tobytes())


def from_bytes(data: bytes) -> Field:
    n, length = struct.unpack_from("<Id", data, 0)
    off = struct.calcsize("<Id")
    if len(data) != off + 8 * n:
        raise ValueError("truncated field record")
    values = np.frombuffer(data, dtype="<f8", count=n, offset=off)
    return Field(Grid(length, n), values)
