"""Sampled fields on uniform 2D grids and the operators acting on them.

Arrays are indexed ``values[i, j]`` with ``x1 = origin[0] + i*h`` and
``x2 = origin[1] + j*h``, so axis 0 is the first coordinate.

Two boundary modes are supported:

* ``periodic``: the grid samples one period of a torus and derivatives are
  spectral.  Fields may carry an affine part (``slope``) on top of the
  periodic samples; derivatives subtract it before transforming.
* ``extended``: the grid covers the working region plus a margin of width
  ``grid.margin``; derivatives use centered finite differences of order
  ``grid.fd_order`` (one-sided near the edges, which lie in the margin).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, sparse

from .errors import DomainError, GridMismatchError, MarginError

PERIODIC = "periodic"
EXTENDED = "extended"
_MAX_FD_ORDER = 6


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid2:
    """Uniform grid with square cells.

    Parameters
    ----------
    origin : (float, float)
        Coordinates of sample ``[0, 0]``.
    h : float
        Grid spacing, shared by both axes.
    nx, ny : int
        Number of samples along each axis.
    boundary : {"periodic", "extended"}
    margin : float
        Width of the band outside the working region (extended mode only).
    fd_order : int
        Accuracy order of the finite-difference stencils (extended mode).
    """

    origin: tuple
    h: float
    nx: int
    ny: int
    boundary: str = PERIODIC
    margin: float = 0.0
    fd_order: int = 4

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise DomainError(f"grid spacing must be positive, got {self.h}")
        if self.nx < 8 or self.ny < 8:
            raise DomainError(f"grid needs at least 8x8 points, got {self.nx}x{self.ny}")
        if self.boundary not in (PERIODIC, EXTENDED):
            raise DomainError(f"unknown boundary mode {self.boundary!r}")
        if self.fd_order not in (2, 4, 6, 8):
            raise DomainError(f"fd_order must be 2, 4, 6 or 8, got {self.fd_order}")
        if self.margin < 0:
            raise DomainError("margin must be nonnegative")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "margin", float(self.margin))

    @classmethod
    def torus(cls, n=256, length=2 * np.pi, origin=(0.0, 0.0), ny=None):
        """Periodic grid of ``n`` points per period ``length`` (square cells)."""
        ny = n if ny is None else ny
        return cls(origin, length / n, n, ny, PERIODIC)

    @classmethod
    def covering(cls, bounds, margin, n=None, h=None, fd_order=4):
        """Extended grid covering the box ``bounds`` enlarged by ``margin``.

        ``bounds = (x0, x1, y0, y1)``.  Give either the point count ``n``
        along the longer side or the spacing ``h``.
        """
        x0, x1, y0, y1 = map(float, bounds)
        wx, wy = x1 - x0 + 2 * margin, y1 - y0 + 2 * margin
        if h is None:
            if n is None:
                raise DomainError("give n or h")
            h = max(wx, wy) / (n - 1)
        nx = int(math.ceil(wx / h - 1e-9)) + 1
        ny = int(math.ceil(wy / h - 1e-9)) + 1
        # center the sample block on the box
        ox = 0.5 * (x0 + x1) - 0.5 * (nx - 1) * h
        oy = 0.5 * (y0 + y1) - 0.5 * (ny - 1) * h
        return cls((ox, oy), h, nx, ny, EXTENDED, margin, fd_order)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def periodic(self):
        return self.boundary == PERIODIC

    @property
    def period(self):
        return (self.nx * self.h, self.ny * self.h)

    @functools.cached_property
    def x1(self):
        return self.origin[0] + self.h * np.arange(self.nx)

    @functools.cached_property
    def x2(self):
        return self.origin[1] + self.h * np.arange(self.ny)

    @functools.cached_property
    def mesh(self):
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        X1.setflags(write=False)
        X2.setflags(write=False)
        return X1, X2

    def with_boundary(self, boundary, margin=None):
        return Grid2(self.origin, self.h, self.nx, self.ny, boundary,
                     self.margin if margin is None else margin, self.fd_order)

    def refined(self, factor=2):
        """Grid over the same box with ``factor`` times smaller spacing."""
        if self.periodic:
            return Grid2(self.origin, self.h / factor, self.nx * factor, self.ny * factor,
                         PERIODIC, 0.0, self.fd_order)
        return Grid2(self.origin, self.h / factor, (self.nx - 1) * factor + 1,
                     (self.ny - 1) * factor + 1, EXTENDED, self.margin, self.fd_order)

    def describe(self):
        return {"origin_x": self.origin[0], "origin_y": self.origin[1], "h": self.h,
                "nx": self.nx, "ny": self.ny, "boundary": self.boundary,
                "margin": self.margin, "fd_order": self.fd_order}


def _same_grid(*grids):
    g0 = grids[0]
    for g in grids[1:]:
        if g != g0:
            raise GridMismatchError("fields live on different grids")
    return g0


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


def _frozen(a, shape):
    a = np.array(a, dtype=float)
    if a.shape != shape:
        raise GridMismatchError(f"expected samples of shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("field samples must be finite")
    a.setflags(write=False)
    return a


def _other_values(other, kind):
    if isinstance(other, kind):
        return other
    if np.isscalar(other):
        return float(other)
    return NotImplemented


class ScalarField:
    """Real samples of a function on a grid.

    ``slope`` (periodic grids only) is the gradient of an affine part
    included in ``values``; it lets non-periodic affine maps such as the
    identity live on a torus.
    """

    __slots__ = ("grid", "values", "slope")

    def __init__(self, grid: Grid2, values, slope=None):
        self.grid = grid
        self.values = _frozen(values, grid.shape)
        self.slope = None if slope is None else np.array(slope, dtype=float).reshape(2)
        if self.slope is not None and not np.any(self.slope):
            self.slope = None

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid, fn):
        X1, X2 = grid.mesh
        return cls(grid, np.broadcast_to(fn(X1, X2), grid.shape))

    @classmethod
    def affine(cls, grid, c, g1, g2):
        """The map ``c + g1*x1 + g2*x2`` with its slope recorded."""
        X1, X2 = grid.mesh
        slope = (g1, g2) if grid.periodic else None
        return cls(grid, c + g1 * X1 + g2 * X2, slope=slope)

    def periodic_part(self):
        if self.slope is None:
            return self.values
        X1, X2 = self.grid.mesh
        return self.values - self.slope[0] * X1 - self.slope[1] * X2

    def copy_with(self, values, slope="same"):
        return ScalarField(self.grid, values, self.slope if slope == "same" else slope)

    # arithmetic -------------------------------------------------------
    def _binary(self, other, op, slope_rule):
        o = _other_values(other, ScalarField)
        if o is NotImplemented:
            return NotImplemented
        if isinstance(o, ScalarField):
            _same_grid(self.grid, o.grid)
            return ScalarField(self.grid, op(self.values, o.values), slope_rule(self.slope, o.slope))
        return ScalarField(self.grid, op(self.values, o), slope_rule(self.slope, None, o))

    def __add__(self, other):
        return self._binary(other, np.add, _slope_add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract, _slope_sub)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return ScalarField(self.grid, -self.values, None if self.slope is None else -self.slope)

    def __mul__(self, other):
        return self._binary(other, np.multiply, _slope_mul)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not np.isscalar(other):
            return NotImplemented
        return self * (1.0 / other)

    def __repr__(self):
        return f"ScalarField({self.grid.nx}x{self.grid.ny})"


def _slope_add(s1, s2, c=None):
    if s1 is None:
        return s2
    if s2 is None:
        return s1
    return s1 + s2


def _slope_sub(s1, s2, c=None):
    if s2 is None:
        return s1
    return -s2 if s1 is None else s1 - s2


def _slope_mul(s1, s2, c=None):
    if c is not None:  # scalar factor
        return None if s1 is None else s1 * c
    if s1 is None and s2 is None:
        return None
    raise ValueError("product of fields with affine parts is not affine-periodic")


class VectorField:
    """``k`` scalar components on one grid, stored as an array ``(k, nx, ny)``.

    Component ``j`` (1-based, as in ``v^j``) is ``field[j - 1]``.
    """

    __slots__ = ("grid", "values", "slope")

    def __init__(self, grid: Grid2, values, slope=None):
        values = np.array(values, dtype=float)
        if values.ndim != 3:
            raise GridMismatchError("vector samples must have shape (k, nx, ny)")
        self.grid = grid
        self.values = _frozen(values, (values.shape[0],) + grid.shape)
        k = self.k
        self.slope = None if slope is None else np.array(slope, dtype=float).reshape(k, 2)
        if self.slope is not None and not np.any(self.slope):
            self.slope = None

    @property
    def k(self):
        return self.values.shape[0]

    @classmethod
    def zeros(cls, grid, k):
        return cls(grid, np.zeros((k,) + grid.shape))

    @classmethod
    def from_components(cls, comps):
        g = _same_grid(*[c.grid for c in comps])
        slopes = [c.slope for c in comps]
        slope = None
        if any(s is not None for s in slopes):
            slope = np.array([np.zeros(2) if s is None else s for s in slopes])
        return cls(g, np.stack([c.values for c in comps]), slope)

    @classmethod
    def identity_map(cls, grid):
        """The map ``x -> x`` (2 components)."""
        return cls.from_components([ScalarField.affine(grid, 0.0, 1.0, 0.0),
                                    ScalarField.affine(grid, 0.0, 0.0, 1.0)])

    def __getitem__(self, idx) -> ScalarField:
        s = None if self.slope is None else self.slope[idx]
        return ScalarField(self.grid, self.values[idx], s)

    def components(self):
        return [self[i] for i in range(self.k)]

    def replace(self, idx, comp: ScalarField):
        """New field with component ``idx`` (0-based) swapped; others bit-identical."""
        _same_grid(self.grid, comp.grid)
        vals = np.array(self.values)
        vals[idx] = comp.values
        slope = None
        if self.slope is not None or comp.slope is not None:
            slope = np.zeros((self.k, 2)) if self.slope is None else np.array(self.slope)
            slope[idx] = 0.0 if comp.slope is None else comp.slope
        return VectorField(self.grid, vals, slope)

    def _binary(self, other, op, slope_rule):
        o = _other_values(other, VectorField)
        if o is NotImplemented:
            return NotImplemented
        if isinstance(o, VectorField):
            _same_grid(self.grid, o.grid)
            if o.k != self.k:
                raise GridMismatchError("component counts differ")
            return VectorField(self.grid, op(self.values, o.values), slope_rule(self.slope, o.slope))
        return VectorField(self.grid, op(self.values, o), slope_rule(self.slope, None, o))

    def __add__(self, other):
        return self._binary(other, np.add, _slope_add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract, _slope_sub)

    def __neg__(self):
        return VectorField(self.grid, -self.values, None if self.slope is None else -self.slope)

    def __mul__(self, other):
        if not np.isscalar(other):
            return NotImplemented
        return self._binary(other, np.multiply, _slope_mul)

    __rmul__ = __mul__

    def __repr__(self):
        return f"VectorField(k={self.k}, {self.grid.nx}x{self.grid.ny})"


class SymMatrixField:
    """Symmetric 2x2 matrix field stored by its three independent entries."""

    __slots__ = ("grid", "d11", "d12", "d22")

    def __init__(self, grid: Grid2, d11, d12, d22):
        self.grid = grid
        self.d11 = _frozen(_as_values(d11), grid.shape)
        self.d12 = _frozen(_as_values(d12), grid.shape)
        self.d22 = _frozen(_as_values(d22), grid.shape)

    @classmethod
    def zeros(cls, grid):
        z = np.zeros(grid.shape)
        return cls(grid, z, z, z)

    @classmethod
    def identity(cls, grid, c=1.0):
        z = np.zeros(grid.shape)
        return cls(grid, np.full(grid.shape, float(c)), z, np.full(grid.shape, float(c)))

    @classmethod
    def from_constant(cls, grid, m):
        m = np.asarray(m, dtype=float)
        ones = np.ones(grid.shape)
        return cls(grid, m[0, 0] * ones, 0.5 * (m[0, 1] + m[1, 0]) * ones, m[1, 1] * ones)

    @classmethod
    def from_scalar_times(cls, f: ScalarField, m):
        """``f * m`` for a constant symmetric matrix ``m``."""
        m = np.asarray(m, dtype=float)
        return cls(f.grid, m[0, 0] * f.values, m[0, 1] * f.values, m[1, 1] * f.values)

    def entries(self):
        return (self.d11, self.d12, self.d22)

    def stack(self):
        return np.stack(self.entries())

    def entry(self, a, b) -> ScalarField:
        """Entry ``(a, b)`` with 1-based indices."""
        if (a, b) == (1, 1):
            return ScalarField(self.grid, self.d11)
        if (a, b) == (2, 2):
            return ScalarField(self.grid, self.d22)
        return ScalarField(self.grid, self.d12)

    def _binary(self, other, op):
        if isinstance(other, SymMatrixField):
            _same_grid(self.grid, other.grid)
            return SymMatrixField(self.grid, op(self.d11, other.d11), op(self.d12, other.d12),
                                  op(self.d22, other.d22))
        if isinstance(other, ScalarField):
            _same_grid(self.grid, other.grid)
            o = other.values
        elif np.isscalar(other):
            o = float(other)
        else:
            return NotImplemented
        return SymMatrixField(self.grid, op(self.d11, o), op(self.d12, o), op(self.d22, o))

    def __add__(self, other):
        if not isinstance(other, SymMatrixField):
            return NotImplemented
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, SymMatrixField):
            return NotImplemented
        return self._binary(other, np.subtract)

    def __neg__(self):
        return SymMatrixField(self.grid, -self.d11, -self.d12, -self.d22)

    def __mul__(self, other):
        if isinstance(other, SymMatrixField):
            return NotImplemented
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not np.isscalar(other):
            return NotImplemented
        return self * (1.0 / other)

    def __repr__(self):
        return f"SymMatrixField({self.grid.nx}x{self.grid.ny})"


def _as_values(x):
    return x.values if isinstance(x, ScalarField) else x


def field_arrays(f):
    """Component arrays of any field kind (list of 2D arrays)."""
    if isinstance(f, ScalarField):
        return [f.values]
    if isinstance(f, VectorField):
        return list(f.values)
    if isinstance(f, SymMatrixField):
        return list(f.entries())
    raise TypeError(f"not a field: {type(f).__name__}")


def sup_norm(f, region=None):
    """Max absolute entry over the grid (or over the boolean mask ``region``)."""
    m = 0.0
    for a in field_arrays(f):
        if region is not None:
            a = a[region]
        if a.size:
            m = max(m, float(np.max(np.abs(a))))
    return m


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def fd_weights(offsets, deriv):
    """Finite-difference weights for the ``deriv``-th derivative at 0.

    ``offsets`` are integer stencil positions in units of h.  Solves the
    moment (Vandermonde) system; stencils here have at most 11 points.
    """
    s = np.asarray(offsets, dtype=float)
    n = len(s)
    V = np.vander(s, n, increasing=True).T  # V[p, j] = s_j**p
    rhs = np.zeros(n)
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(V, rhs)


def stencil_radius(deriv, order):
    if deriv == 0:
        return 0
    return (deriv + 1) // 2 + order // 2 - 1


@functools.lru_cache(maxsize=128)
def _fd_matrix(n, h, deriv, order):
    """Sparse ``n x n`` differentiation matrix along one axis."""
    r = stencil_radius(deriv, order)
    npts = max(2 * r + 1, deriv + order)
    rows, cols, vals = [], [], []
    central = fd_weights(np.arange(-r, r + 1), deriv)
    for i in range(n):
        if r <= i < n - r:
            offs = np.arange(-r, r + 1)
            w = central
        else:
            start = min(max(i - npts // 2, 0), n - npts)
            offs = np.arange(start, start + npts) - i
            w = fd_weights(offs, deriv)
        rows.extend([i] * len(offs))
        cols.extend((i + offs).tolist())
        vals.extend(w.tolist())
    M = sparse.csr_matrix((np.array(vals) / h**deriv, (rows, cols)), shape=(n, n))
    return M


@functools.lru_cache(maxsize=32)
def _wavenumbers(nx, ny, h):
    kx = 2 * np.pi * np.fft.fftfreq(nx, d=h)
    ky = 2 * np.pi * np.fft.rfftfreq(ny, d=h)
    return kx, ky


def _spectral_multiplier(nx, ny, h, t, s):
    kx, ky = _wavenumbers(nx, ny, h)
    mx = (1j * kx) ** t
    my = (1j * ky) ** s
    # odd derivatives of the unpaired Nyquist mode are not real: drop them
    if t % 2 == 1 and nx % 2 == 0:
        mx = mx.copy()
        mx[nx // 2] = 0.0
    if s % 2 == 1 and ny % 2 == 0:
        my = my.copy()
        my[-1] = 0.0
    return mx[:, None] * my[None, :]


def spectral_derivatives(values, grid: Grid2, indices):
    """Spectral derivatives of periodic samples for several multi-indices."""
    fhat = np.fft.rfft2(values)
    out = []
    for t, s in indices:
        if t == 0 and s == 0:
            out.append(np.array(values, dtype=float))
            continue
        m = _spectral_multiplier(grid.nx, grid.ny, grid.h, t, s)
        out.append(np.fft.irfft2(fhat * m, s=grid.shape))
    return out


def _check_margin(grid, t, s):
    if grid.periodic:
        return
    if t + s > _MAX_FD_ORDER:
        raise MarginError(f"derivative order {t + s} exceeds supported stencils")
    need = (stencil_radius(t, grid.fd_order) + stencil_radius(s, grid.fd_order)) * grid.h
    if grid.margin + 1e-12 < need:
        raise MarginError(f"margin {grid.margin:g} below stencil reach {need:g} "
                          f"for derivative ({t},{s})")


def fd_derivative(values, grid: Grid2, t, s):
    out = values
    if t:
        out = _fd_matrix(grid.nx, grid.h, t, grid.fd_order) @ out
    if s:
        out = (_fd_matrix(grid.ny, grid.h, s, grid.fd_order) @ out.T).T
    return np.array(out, dtype=float)


def derivative_arrays(f: ScalarField, indices):
    """Raw arrays of ``d1^t d2^s f`` for each ``(t, s)`` in ``indices``."""
    grid = f.grid
    for t, s in indices:
        if t < 0 or s < 0:
            raise DomainError("multi-index entries must be nonnegative")
        _check_margin(grid, t, s)
    if grid.periodic:
        outs = spectral_derivatives(f.periodic_part(), grid, indices)
        if f.slope is not None:
            for n, (t, s) in enumerate(indices):
                if (t, s) == (0, 0):
                    outs[n] = np.array(f.values)
                elif (t, s) == (1, 0):
                    outs[n] += f.slope[0]
                elif (t, s) == (0, 1):
                    outs[n] += f.slope[1]
        return outs
    return [fd_derivative(f.values, grid, t, s) for t, s in indices]


def partial_derivative(f: ScalarField, multi_index) -> ScalarField:
    """``d1^t d2^s f`` for ``multi_index = (t, s)``."""
    t, s = multi_index
    return ScalarField(f.grid, derivative_arrays(f, [(t, s)])[0])


def gradient(f: ScalarField) -> VectorField:
    g1, g2 = derivative_arrays(f, [(1, 0), (0, 1)])
    return VectorField(f.grid, np.stack([g1, g2]))


def hessian(f: ScalarField) -> SymMatrixField:
    h11, h12, h22 = derivative_arrays(f, [(2, 0), (1, 1), (0, 2)])
    return SymMatrixField(f.grid, h11, h12, h22)


def jacobian_arrays(v: VectorField):
    """List over components of ``(d1 v^j, d2 v^j)``."""
    return [derivative_arrays(v[j], [(1, 0), (0, 1)]) for j in range(v.k)]


# ---------------------------------------------------------------------------
# algebraic operators
# ---------------------------------------------------------------------------


def sym_grad(phi: VectorField) -> SymMatrixField:
    """``(sym grad phi)_ij = (d_i phi_j + d_j phi_i) / 2`` for a 2-vector field."""
    if phi.k != 2:
        raise DomainError("sym_grad needs a 2-component field")
    (a11, a12), (a21, a22) = jacobian_arrays(phi)
    return SymMatrixField(phi.grid, a11, 0.5 * (a12 + a21), a22)


def quadratic_form(v: VectorField) -> SymMatrixField:
    """``(grad v)^T grad v / 2``."""
    jac = jacobian_arrays(v)
    q11 = 0.5 * sum(g1 * g1 for g1, _ in jac)
    q12 = 0.5 * sum(g1 * g2 for g1, g2 in jac)
    q22 = 0.5 * sum(g2 * g2 for _, g2 in jac)
    return SymMatrixField(v.grid, q11, q12, q22)


def defect(v: VectorField, w: VectorField, A: SymMatrixField) -> SymMatrixField:
    """``A - ((grad v)^T grad v / 2 + sym grad w)``."""
    _same_grid(v.grid, w.grid, A.grid)
    return A - (quadratic_form(v) + sym_grad(w))


def curl_curl(M: SymMatrixField) -> ScalarField:
    """``d22 M11 - 2 d12 M12 + d11 M22``."""
    a = derivative_arrays(ScalarField(M.grid, M.d11), [(0, 2)])[0]
    b = derivative_arrays(ScalarField(M.grid, M.d12), [(1, 1)])[0]
    c = derivative_arrays(ScalarField(M.grid, M.d22), [(2, 0)])[0]
    return ScalarField(M.grid, a - 2.0 * b + c)


def det_MA(v: VectorField) -> ScalarField:
    """``<d11 v, d22 v> - |d12 v|^2`` summed over the components of ``v``."""
    out = np.zeros(v.grid.shape)
    for j in range(v.k):
        h11, h12, h22 = derivative_arrays(v[j], [(2, 0), (1, 1), (0, 2)])
        out += h11 * h22 - h12 * h12
    return ScalarField(v.grid, out)


def wedge(D: SymMatrixField) -> SymMatrixField:
    """``D`` with its 22 entry removed."""
    return SymMatrixField(D.grid, D.d11, D.d12, np.zeros(D.grid.shape))


def min_eigenvalue(D: SymMatrixField) -> ScalarField:
    """Pointwise smaller eigenvalue of the symmetric 2x2 matrix."""
    mean = 0.5 * (D.d11 + D.d22)
    rad = np.hypot(0.5 * (D.d11 - D.d22), D.d12)
    return ScalarField(D.grid, mean - rad)


def outer(g: VectorField) -> SymMatrixField:
    """``g (x) g`` for a 2-vector field."""
    return SymMatrixField(g.grid, g.values[0] ** 2, g.values[0] * g.values[1], g.values[1] ** 2)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------


def bump_kernel(h, l):
    """Discrete radial bump ``exp(1/(|x|^2 - 1))`` scaled to radius ``l``.

    Normalized so the weights sum to one, which preserves constants
    exactly on the grid.  For ``l <= h`` the kernel is the identity.
    """
    r = int(math.floor(l / h))
    if r < 1:
        return np.ones((1, 1))
    off = np.arange(-r, r + 1) * h
    P, Q = np.meshgrid(off, off, indexing="ij")
    rho2 = (P**2 + Q**2) / l**2
    k = np.zeros_like(rho2)
    inside = rho2 < 1.0
    k[inside] = np.exp(1.0 / (rho2[inside] - 1.0))
    return k / k.sum()


def _mollify_array(a, grid, l):
    ker = bump_kernel(grid.h, l)
    r = ker.shape[0] // 2
    if r == 0:
        return np.array(a)
    if grid.periodic:
        if 2 * r + 1 > min(grid.shape):
            raise DomainError("mollification radius exceeds the period")
        full = np.zeros(grid.shape)
        idx = np.arange(-r, r + 1)
        full[np.ix_(idx % grid.nx, idx % grid.ny)] = ker
        return np.fft.irfft2(np.fft.rfft2(a) * np.fft.rfft2(full), s=grid.shape)
    padded = np.pad(a, r, mode="reflect")
    return signal.fftconvolve(padded, ker, mode="valid")


def _check_mollify(grid, l):
    if not l > 0:
        raise DomainError("mollification length must be positive")
    if not grid.periodic and grid.margin + 1e-12 < l:
        raise MarginError(f"margin {grid.margin:g} smaller than mollification length {l:g}")


def mollify(f, l):
    """Convolution with the scaled bump kernel of radius ``l``."""
    grid = f.grid
    _check_mollify(grid, l)
    if isinstance(f, ScalarField):
        base = _mollify_array(f.periodic_part(), grid, l)
        if f.slope is not None:
            base = base + (f.values - f.periodic_part())
        return ScalarField(grid, base, f.slope)
    if isinstance(f, VectorField):
        return VectorField.from_components([mollify(c, l) for c in f.components()])
    if isinstance(f, SymMatrixField):
        return SymMatrixField(grid, *[_mollify_array(a, grid, l) for a in f.entries()])
    raise TypeError(f"cannot mollify {type(f).__name__}")


def convolution_commutator(f: ScalarField, g: ScalarField, l) -> ScalarField:
    """``(f g) * phi_l - (f * phi_l)(g * phi_l)``."""
    _same_grid(f.grid, g.grid)
    if f.slope is not None or g.slope is not None:
        raise ValueError("commutator needs periodic or extended samples without affine part")
    fg = ScalarField(f.grid, f.values * g.values)
    return ScalarField(f.grid, mollify(fg, l).values - mollify(f, l).values * mollify(g, l).values)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


@dataclass
class NormReport:
    """Sup norm, C^m norms and sampled Hoelder seminorms of a field.

    ``cm[m]`` is the max over multi-indices with ``|I| <= m`` of the sup of
    ``d^I f``; ``holder[beta]`` is the sampled seminorm ``[f]_beta``.
    """

    sup: float
    cm: dict
    holder: dict
    radius: float
    derivative_sups: dict = field(default_factory=dict)


def _component_scalars(f):
    if isinstance(f, ScalarField):
        return [f]
    if isinstance(f, VectorField):
        return f.components()
    return [ScalarField(f.grid, a) for a in f.entries()]


def holder_seminorm(a, grid, beta, region=None, radius=None):
    """Max of ``|a(x)-a(y)| / |x-y|^beta`` over pairs at dyadic separations.

    Pairs are taken along the two axes and both diagonals, with
    separations ``h * 2^j`` up to ``radius``.  Both points must lie in
    ``region`` when a mask is given.
    """
    if radius is None:
        radius = 0.25 * grid.h * min(grid.shape)
    best = 0.0
    step = 1
    while step * grid.h <= radius * (1 + 1e-12) and step < min(grid.shape):
        for d1, d2 in ((1, 0), (0, 1), (1, 1), (1, -1)):
            o1, o2 = d1 * step, d2 * step
            sa = (slice(0, grid.nx - o1), slice(max(0, -o2), grid.ny - max(0, o2)))
            sb = (slice(o1, grid.nx), slice(max(0, o2), grid.ny - max(0, -o2)))
            diff = np.abs(a[sb] - a[sa])
            if region is not None:
                diff = np.where(region[sa] & region[sb], diff, 0.0)
            if diff.size:
                dist = step * grid.h * math.hypot(d1, d2)
                best = max(best, float(diff.max()) / dist**beta)
        step *= 2
    return best


def norms(f, m_max=0, betas=(), region=None, radius=None) -> NormReport:
    """Norm report for a scalar, vector or symmetric-matrix field."""
    if m_max < 0:
        raise DomainError("m_max must be nonnegative")
    grid = f.grid
    comps = _component_scalars(f)
    sups = {}
    for m in range(m_max + 1):
        idx = [(t, m - t) for t in range(m + 1)]
        best = 0.0
        for c in comps:
            for arr in derivative_arrays(c, idx):
                vals = arr if region is None else arr[region]
                if vals.size:
                    best = max(best, float(np.max(np.abs(vals))))
        sups[m] = best
    cm = {}
    running = 0.0
    for m in range(m_max + 1):
        running = max(running, sups[m])
        cm[m] = running
    if radius is None:
        radius = 0.25 * grid.h * min(grid.shape)
    holder = {}
    for b in betas:
        if not 0 < b <= 1:
            raise DomainError("Hoelder exponents must lie in (0, 1]")
        holder[b] = max(holder_seminorm(c.values, grid, b, region, radius) for c in comps)
    return NormReport(cm[0], cm, holder, radius, sups)
