"""Working regions (rectangles and disks), their neighbourhoods and cutoffs.

Rectangle neighbourhoods use the max-norm, so ``omega + B_r`` is again an
axis-aligned rectangle and product cutoffs match the masks exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grid_fields import Grid2, ScalarField


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[t >= 1] = 1.0
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out


def _plateau(x, lo, hi, width):
    """1 on [lo, hi], 0 outside (lo - width, hi + width), smooth in between."""
    return smooth_step((x - (lo - width)) / width) * smooth_step(((hi + width) - x) / width)


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise DomainError("rectangle needs x0 < x1 and y0 < y1")

    @property
    def bounds(self):
        return (self.x0, self.x1, self.y0, self.y1)

    def mask(self, grid: Grid2, r=0.0):
        """Boolean mask of ``omega + B_r`` (max-norm ball)."""
        X1, X2 = grid.mesh
        tol = 1e-9 * grid.h
        return ((X1 >= self.x0 - r - tol) & (X1 <= self.x1 + r + tol)
                & (X2 >= self.y0 - r - tol) & (X2 <= self.y1 + r + tol))

    def cutoff(self, grid: Grid2, inner, outer) -> ScalarField:
        """Smooth cutoff equal to 1 on ``omega + B_inner``, 0 off ``omega + B_outer``."""
        if not outer > inner >= 0:
            raise DomainError("cutoff needs 0 <= inner < outer")
        X1, X2 = grid.mesh
        w = outer - inner
        chi = (_plateau(X1, self.x0 - inner, self.x1 + inner, w)
               * _plateau(X2, self.y0 - inner, self.y1 + inner, w))
        return ScalarField(grid, chi)

    def describe(self):
        return {"shape": "rectangle", "x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1}


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("disk radius must be positive")

    @property
    def bounds(self):
        return (self.cx - self.radius, self.cx + self.radius,
                self.cy - self.radius, self.cy + self.radius)

    def _dist(self, grid):
        X1, X2 = grid.mesh
        return np.hypot(X1 - self.cx, X2 - self.cy)

    def mask(self, grid: Grid2, r=0.0):
        return self._dist(grid) <= self.radius + r + 1e-9 * grid.h

    def cutoff(self, grid: Grid2, inner, outer) -> ScalarField:
        if not outer > inner >= 0:
            raise DomainError("cutoff needs 0 <= inner < outer")
        rho = self._dist(grid)
        chi = smooth_step((self.radius + outer - rho) / (outer - inner))
        return ScalarField(grid, chi)

    def describe(self):
        return {"shape": "disk", "cx": self.cx, "cy": self.cy, "radius": self.radius}


def unit_square():
    return Rectangle(0.0, 1.0, 0.0, 1.0)


def extended_grid(domain, margin, n=None, h=None, fd_order=4):
    """Extended grid covering ``domain`` plus ``margin`` on every side."""
    return Grid2.covering(domain.bounds, margin, n=n, h=h, fd_order=fd_order)
