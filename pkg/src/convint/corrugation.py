"""One corrugation step cancelling a rank-one defect ``a^2 e_i (x) e_i``.

With the profiles

    G(t) = 2 sin t,  Gb(t) = cos(2t)/2,  Gbb(t) = -sin(2t)/2,  Gt(t) = 1 - cos(2t)/2

the perturbation

    v~ = v + (a/lam) G(lam x_i) e_j
    w~ = w - (a/lam) G grad v^j + (a/lam^2) Gb grad a + (a^2/lam) Gbb e_i

changes ``(grad v)^T grad v / 2 + sym grad w`` by exactly

    a^2 e_i (x) e_i - (a/lam) G grad^2 v^j + (a/lam^2) Gb grad^2 a
                    + (1/lam^2) Gt grad a (x) grad a.

The phase ``lam x_i`` is measured from the grid origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridMismatchError, ResolutionError
from .grid_fields import (Grid2, ScalarField, SymMatrixField, VectorField, derivative_arrays,
                          quadratic_form, sym_grad)


def profiles(t):
    """Return ``(G, Gb, Gbb, Gt)`` evaluated at ``t``."""
    t = np.asarray(t, dtype=float)
    return (2.0 * np.sin(t), 0.5 * np.cos(2.0 * t), -0.5 * np.sin(2.0 * t),
            1.0 - 0.5 * np.cos(2.0 * t))


def profile_derivatives(t):
    """Closed-form derivatives ``(G', Gb', Gbb', Gt')``."""
    t = np.asarray(t, dtype=float)
    return (2.0 * np.cos(t), -np.sin(2.0 * t), -np.cos(2.0 * t), np.sin(2.0 * t))


@dataclass(frozen=True)
class StepParams:
    """Oscillation axis ``i``, codimension component ``j`` (both 1-based),
    frequency ``lam`` and amplitude field ``a``."""

    i: int
    j: int
    lam: float
    a: ScalarField

    def __post_init__(self):
        if self.i not in (1, 2):
            raise DomainError("oscillation axis i must be 1 or 2")
        if self.j not in (1, 2, 3):
            raise DomainError("codimension component j must be 1, 2 or 3")
        if not self.lam > 0:
            raise DomainError("frequency must be positive")


def check_frequency(grid: Grid2, lam: float, axis: int):
    """Reject frequencies the grid cannot carry.

    Requires ``lam h <= pi`` (Nyquist) and, on periodic grids, a whole
    number of oscillations per period.  Accurate identities need a good
    deal more resolution than this hard limit.
    """
    if lam * grid.h > np.pi * (1 + 1e-12):
        raise ResolutionError(f"frequency {lam:g} too high for spacing {grid.h:g} "
                              f"(need lam*h <= pi)")
    if grid.periodic:
        L = grid.period[axis - 1]
        cycles = lam * L / (2 * np.pi)
        if abs(cycles - round(cycles)) > 1e-9 * max(1.0, cycles):
            raise ResolutionError(f"frequency {lam:g} is not commensurate with period {L:g}")


def phase(grid: Grid2, lam: float, axis: int):
    X = grid.mesh[axis - 1]
    return lam * (X - grid.origin[axis - 1])


def step_perturb(v: VectorField, w: VectorField, p: StepParams):
    """Apply the corrugation; only component ``j`` of ``v`` changes."""
    g = v.grid
    if w.grid != g or p.a.grid != g:
        raise GridMismatchError("v, w and a must share a grid")
    if p.j > v.k:
        raise DomainError(f"v has no component {p.j}")
    check_frequency(g, p.lam, p.i)
    a = p.a.values
    if not np.any(a):
        return v, w
    G, Gb, Gbb, _ = profiles(phase(g, p.lam, p.i))
    vj = v[p.j - 1]
    dv1, dv2 = derivative_arrays(vj, [(1, 0), (0, 1)])
    da1, da2 = derivative_arrays(p.a, [(1, 0), (0, 1)])
    lam = p.lam
    new_vj = ScalarField(g, vj.values + (a / lam) * G, vj.slope)
    v_new = v.replace(p.j - 1, new_vj)
    c1 = -(a / lam) * G
    c2 = (a / lam**2) * Gb
    w1 = c1 * dv1 + c2 * da1
    w2 = c1 * dv2 + c2 * da2
    c3 = (a * a / lam) * Gbb
    if p.i == 1:
        w1 = w1 + c3
    else:
        w2 = w2 + c3
    w_new = w + VectorField(g, np.stack([w1, w2]))
    return v_new, w_new


def step_error_terms(v: VectorField, p: StepParams) -> SymMatrixField:
    """``-(a/lam) G grad^2 v^j + (a/lam^2) Gb grad^2 a + (1/lam^2) Gt grad a (x) grad a``."""
    g = v.grid
    a = p.a.values
    lam = p.lam
    G, Gb, _, Gt = profiles(phase(g, lam, p.i))
    h11, h12, h22 = derivative_arrays(v[p.j - 1], [(2, 0), (1, 1), (0, 2)])
    a1, a2, a11, a12, a22 = derivative_arrays(p.a, [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
    c1 = -(a / lam) * G
    c2 = (a / lam**2) * Gb
    c3 = Gt / lam**2
    return SymMatrixField(g, c1 * h11 + c2 * a11 + c3 * a1 * a1,
                          c1 * h12 + c2 * a12 + c3 * a1 * a2,
                          c1 * h22 + c2 * a22 + c3 * a2 * a2)


def induced_metric(v: VectorField, w: VectorField) -> SymMatrixField:
    """``(grad v)^T grad v / 2 + sym grad w``."""
    return quadratic_form(v) + sym_grad(w)


def step_residual(v: VectorField, w: VectorField, p: StepParams) -> SymMatrixField:
    """Discrete residual of the exact step identity (zero in the continuum)."""
    v_new, w_new = step_perturb(v, w, p)
    change = induced_metric(v_new, w_new) - induced_metric(v, w)
    a2 = p.a.values ** 2
    z = np.zeros(v.grid.shape)
    rank_one = SymMatrixField(v.grid, a2 if p.i == 1 else z, z, a2 if p.i == 2 else z)
    return change - rank_one - step_error_terms(v, p)
