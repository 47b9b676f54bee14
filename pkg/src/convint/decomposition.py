"""Conformal decomposition ``D = a(D) Id + sym grad Psi(D)`` of matrix fields.

The construction works on the periodic box spanned by the grid:

1. split ``D = (tr D / 2) Id + Dt`` with ``Dt`` traceless;
2. solve ``lap u = -curl_curl(Dt)`` spectrally;
3. ``coeff = tr D / 2 - u`` and ``M = Dt + u Id`` is compatible
   (``curl_curl M = 0``);
4. recover the rotation ``om`` from ``grad om = (d2 M11 - d1 M12,
   d2 M12 - d1 M22)`` and integrate ``grad Psi1 = (M11, M12 + om)``,
   ``grad Psi2 = (M12 - om, M22)``.

The mean of ``M`` gives ``Psi`` an affine part, kept explicitly.  On the
torus the decomposition is unique, so the maps are linear and commute
with derivatives.  On extended grids the traceless part must vanish near
the edge of the box (the caller multiplies by a cutoff), which makes the
periodic extension smooth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmplitudeError, CompatibilityError, NormalizationError
from .grid_fields import (ScalarField, SymMatrixField, VectorField, _wavenumbers,
                          sup_norm)

DEFAULT_TOL = 1e-6
_EDGE_POINTS = 3


@dataclass
class Decomposition:
    """Result of :func:`decompose`.

    ``residual`` is the sup of ``D - coeff Id - sym grad potential``
    relative to the sup of ``D``, evaluated spectrally on the box.
    ``affine`` is the constant symmetric gradient of the affine part of
    ``potential``.  ``nyquist_loss`` is the sup of the discarded Nyquist
    modes of the input (relative), which no first derivative on the grid
    can represent.
    """

    coeff: ScalarField
    potential: VectorField
    residual: float
    affine: np.ndarray
    curl_residual: float
    source: SymMatrixField
    _sym_grad: SymMatrixField = None
    nyquist_loss: float = 0.0

    def sym_grad_potential(self) -> SymMatrixField:
        """Spectrally exact ``sym grad potential`` (affine part included)."""
        return self._sym_grad


def _odd_mask(n, full=True):
    """Multiplier zeroing the unpaired Nyquist mode for odd derivatives."""
    m = np.ones(n if full else n // 2 + 1)
    if n % 2 == 0:
        if full:
            m[n // 2] = 0.0
        else:
            m[-1] = 0.0
    return m


def _drop_nyquist(a):
    """Remove the Nyquist row and column of an even-sized grid; returns ``(kept, removed)``."""
    nx, ny = a.shape
    if nx % 2 and ny % 2:
        return a, np.zeros_like(a)
    spec = np.fft.rfft2(a)
    cut = np.zeros_like(spec)
    if nx % 2 == 0:
        cut[nx // 2, :] = spec[nx // 2, :]
    if ny % 2 == 0:
        cut[:, -1] = spec[:, -1]
    removed = np.fft.irfft2(cut, s=a.shape)
    return a - removed, removed


def _traceless_edge_check(D: SymMatrixField, tol):
    g = D.grid
    if g.periodic:
        return
    p = 0.5 * (D.d11 - D.d22)
    q = D.d12
    e = _EDGE_POINTS
    band = np.zeros(g.shape, dtype=bool)
    band[:e, :] = band[-e:, :] = True
    band[:, :e] = band[:, -e:] = True
    scale = max(sup_norm(D), 1e-300)
    edge = max(np.max(np.abs(p[band])), np.max(np.abs(q[band])))
    if edge > tol * scale:
        raise CompatibilityError(
            f"traceless part does not vanish near the grid edge ({edge:.3e}); "
            "multiply by a compactly supported cutoff first", residual=edge)


def decompose(D: SymMatrixField, cutoff: ScalarField | None = None,
              tol: float = DEFAULT_TOL) -> Decomposition:
    """Decompose ``chi D`` (or ``D`` when no cutoff is given).

    Raises :class:`CompatibilityError` when the identity residual exceeds
    ``tol`` (relative) and :class:`NormalizationError` if the periodic
    Poisson data has nonzero mean.
    """
    g = D.grid
    if cutoff is not None:
        D = D * cutoff
    _traceless_edge_check(D, tol)
    scale = max(sup_norm(D), 1e-300)
    kept = [_drop_nyquist(e) for e in D.entries()]
    loss = max(float(np.max(np.abs(r))) for _, r in kept) / scale
    D = SymMatrixField(g, *(k for k, _ in kept))
    nx, ny = g.shape
    kx, ky = _wavenumbers(nx, ny, g.h)
    K1 = kx[:, None]
    K2 = ky[None, :]
    k2 = K1**2 + K2**2
    k2[0, 0] = 1.0
    ox = _odd_mask(nx, True)[:, None]
    oy = _odd_mask(ny, False)[None, :]
    i1 = 1j * K1 * ox  # first-derivative multipliers
    i2 = 1j * K2 * oy

    tr = 0.5 * (D.d11 + D.d22)
    p_hat = np.fft.rfft2(0.5 * (D.d11 - D.d22))
    q_hat = np.fft.rfft2(D.d12)

    # curl_curl of the traceless part, then u with lap u = -curl_curl
    cc_hat = (K1**2 - K2**2) * p_hat + 2.0 * (K1 * ox) * (K2 * oy) * q_hat
    if abs(cc_hat[0, 0]) > 1e-9 * scale * nx * ny:
        raise NormalizationError("Poisson data has nonzero mean")
    u_hat = cc_hat / k2
    u_hat[0, 0] = 0.0

    m11 = p_hat + u_hat
    m12 = q_hat
    m22 = -p_hat + u_hat
    mean = np.array([[m11[0, 0].real, m12[0, 0].real],
                     [m12[0, 0].real, m22[0, 0].real]]) / (nx * ny)

    # rotation from its gradient (least squares in Fourier space)
    g1 = i2 * m11 - i1 * m12
    g2 = i2 * m12 - i1 * m22
    om = (np.conj(i1) * g1 + np.conj(i2) * g2) / k2
    om[0, 0] = 0.0

    grads = ((m11, m12 + om), (m12 - om, m22))
    psi_hat = []
    for a1, a2 in grads:
        ph = (np.conj(i1) * a1 + np.conj(i2) * a2) / k2
        ph[0, 0] = 0.0
        psi_hat.append(ph)

    shape = g.shape
    u = np.fft.irfft2(u_hat, s=shape)
    coeff = ScalarField(g, tr - u)
    X1, X2 = g.mesh
    psi = []
    for j, ph in enumerate(psi_hat):
        lin = mean[j, 0] * X1 + mean[j, 1] * X2
        psi.append(np.fft.irfft2(ph, s=shape) + lin)
    slope = mean if g.periodic else None
    potential = VectorField(g, np.stack(psi), slope)

    # spectral sym grad of the potential and the identity residual
    s11 = np.fft.irfft2(i1 * psi_hat[0], s=shape) + mean[0, 0]
    s22 = np.fft.irfft2(i2 * psi_hat[1], s=shape) + mean[1, 1]
    s12 = 0.5 * np.fft.irfft2(i2 * psi_hat[0] + i1 * psi_hat[1], s=shape) + mean[0, 1]
    sg = SymMatrixField(g, s11, s12, s22)
    res = (D - SymMatrixField.identity(g) * coeff) - sg
    residual = sup_norm(res) / scale
    M_cc = (-(K2**2) * m11 + 2.0 * (K1 * ox) * (K2 * oy) * m12 - (K1**2) * m22)
    curl_res = float(np.max(np.abs(np.fft.irfft2(M_cc, s=shape)))) / scale
    if residual > tol:
        raise CompatibilityError(
            f"decomposition residual {residual:.3e} exceeds tolerance {tol:.1e} "
            f"(curl_curl residual {curl_res:.3e})", residual, curl_res)
    return Decomposition(coeff, potential, residual, mean, curl_res, D, sg, loss)


@dataclass
class ShiftedDecomposition:
    """Positive amplitude variant: ``chi H = a2 Id + sym grad potential``."""

    a2: ScalarField
    a: ScalarField
    Ct: float
    pad: float
    coeff: ScalarField
    potential: VectorField
    residual: float
    band_low_margin: float
    band_high_margin: float
    decomposition: Decomposition


def default_Ct(abar_sup, mu, gamma):
    """``4 |a(chi H)|_0 / mu^gamma``; falls back to 1 when the coefficient vanishes."""
    c = 4.0 * abar_sup / mu**gamma
    return c if c > 1e-300 else 1.0


def decompose_shifted(H: SymMatrixField, mu: float, gamma: float, Ct: float | None = None,
                      cutoff: ScalarField | None = None, check: str = "initial",
                      tol: float = DEFAULT_TOL, iteration=None) -> ShiftedDecomposition:
    """Squared amplitude ``a2 = Ct mu^gamma + a(chi H)`` and potential
    ``Psi(chi H) - Ct mu^gamma x``.

    ``check="initial"`` enforces ``|a(chi H)|_0 <= Ct mu^gamma / 4``;
    every call enforces the band ``Ct mu^gamma / 2 <= a2 <= 3 Ct mu^gamma / 2``.
    """
    dec = decompose(H, cutoff, tol)
    abar = sup_norm(dec.coeff)
    if Ct is None:
        Ct = default_Ct(abar, mu, gamma)
    pad = Ct * mu**gamma
    if check == "initial" and abar > 0.25 * pad * (1 + 1e-12):
        raise AmplitudeError(
            f"|a(chi H)|_0 = {abar:.4g} exceeds Ct mu^gamma / 4 = {pad / 4:.4g}", iteration)
    a2 = dec.coeff + pad
    lo = float(np.min(a2.values)) - 0.5 * pad
    hi = 1.5 * pad - float(np.max(a2.values))
    if lo < 0 or hi < 0:
        where = "" if iteration is None else f" at iteration {iteration}"
        raise AmplitudeError(f"squared amplitude left the band [{pad / 2:.4g}, {1.5 * pad:.4g}]"
                             f"{where}", iteration)
    ident = VectorField.identity_map(H.grid)
    potential = dec.potential - ident * pad
    a = ScalarField(H.grid, np.sqrt(a2.values))
    return ShiftedDecomposition(a2, a, Ct, pad, dec.coeff, potential, dec.residual, lo, hi, dec)
