"""Iterated decomposition absorbing an order-N block of corrugation errors.

One corrugation with amplitude ``a`` and frequency ``lam`` along ``x1``
leaves the error

    E(a) = -(a/lam) G Q + (a/lam^2) Gb grad^2 a + (1/lam^2) Gt grad a (x) grad a

(``Q`` stands for ``grad^2 v^j``).  Its 11 and 12 entries can be fed back
into the decomposition so that the amplitude already accounts for them:

    a_n^2 Id + sym grad Psi_n = chi (H - wedge E_{n-1}),   E_0 = 0.

After ``N`` rounds the uncancelled part is ``F = wedge E_N - wedge E_{N-1}``,
which is smaller by roughly ``(lam/mu)^{-N}`` than ``H``.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corrugation import phase, profiles
from .decomposition import DEFAULT_TOL, ShiftedDecomposition, decompose_shifted
from .errors import DecompositionError, DomainError, FrequencyRatioError, GridMismatchError, MarginError
from .grid_fields import (ScalarField, SymMatrixField, VectorField, derivative_arrays, norms,
                          sup_norm, sym_grad, wedge)

log = logging.getLogger(__name__)

DEFAULT_SIGMA0 = 4.0


@dataclass
class TrailEntry:
    n: int
    increment: float  # sup of wedge E_n - wedge E_{n-1}
    band_low_margin: float
    band_high_margin: float
    residual: float  # relative residual of the decomposition at step n


@dataclass
class KallenResult:
    a: ScalarField
    Psi: VectorField
    F: SymMatrixField
    E_last: SymMatrixField
    E_prev_wedge: SymMatrixField
    trail: list
    Ct: float
    input_norms: dict = field(default_factory=dict)
    identity_residual: float = 0.0
    decomposition: ShiftedDecomposition = None


def corrugation_error(a: ScalarField, Q: SymMatrixField, lam: float) -> SymMatrixField:
    """Error field left by a corrugation along ``x1`` with amplitude ``a``."""
    g = a.grid
    G, Gb, _, Gt = profiles(phase(g, lam, 1))
    a1, a2, a11, a12, a22 = derivative_arrays(a, [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
    av = a.values
    c1 = -(av / lam) * G
    c2 = (av / lam**2) * Gb
    c3 = Gt / lam**2
    return SymMatrixField(g, c1 * Q.d11 + c2 * a11 + c3 * a1 * a1,
                          c1 * Q.d12 + c2 * a12 + c3 * a1 * a2,
                          c1 * Q.d22 + c2 * a22 + c3 * a2 * a2)


def check_frequency_gap(lam, mu, gamma, sigma0=DEFAULT_SIGMA0, on_fail="raise"):
    """``lam^{1-gamma} >= mu sigma0``; returns the ratio ``lam^{1-gamma} / (mu sigma0)``."""
    ratio = lam ** (1.0 - gamma) / (mu * sigma0)
    if ratio < 1.0:
        msg = (f"frequency gap too small: lam^(1-gamma) = {lam ** (1 - gamma):.4g} "
               f"< mu*sigma0 = {mu * sigma0:.4g}")
        if on_fail == "raise":
            raise FrequencyRatioError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return ratio


def input_norms(H: SymMatrixField, Q: SymMatrixField, region=None, max_order=4):
    """C^m norms of the inputs up to ``max_order`` (orders the margin cannot support are skipped)."""
    out = {}
    for name, f in (("H", H), ("Q", Q)):
        for m in range(max_order, -1, -1):
            try:
                out[name] = norms(f, m_max=m, region=region).derivative_sups
                break
            except MarginError:
                continue
    return out


def kallen_iterate(H: SymMatrixField, Q: SymMatrixField, lam: float, mu: float, N: int,
                   gamma: float, Ct: float | None = None, cutoff: ScalarField | None = None,
                   sigma0: float = DEFAULT_SIGMA0, tol: float = DEFAULT_TOL,
                   on_precondition: str = "raise", region=None) -> KallenResult:
    """Run ``N`` rounds of decomposition against the projected errors.

    ``H`` and ``Q`` are the already normalised defect and Hessian.  ``Ct``
    defaults to the value chosen by the first shifted decomposition and is
    then kept fixed.  ``region`` (boolean mask) restricts the reported
    norms; by default it is where ``cutoff`` equals one.
    """
    g = H.grid
    if Q.grid != g or (cutoff is not None and cutoff.grid != g):
        raise GridMismatchError("H, Q and the cutoff must share a grid")
    if N < 1:
        raise DomainError("N must be at least 1")
    check_frequency_gap(lam, mu, gamma, sigma0, on_precondition)
    if region is None and cutoff is not None:
        region = cutoff.values >= 1.0 - 1e-12
    inorms = input_norms(H, Q, region)
    log.debug("kallen inputs: %s", inorms)

    zero = SymMatrixField.zeros(g)
    E_wedge_prev = zero
    E = zero
    trail = []
    sd = None
    for n in range(1, N + 1):
        sd = decompose_shifted(H - E_wedge_prev, mu, gamma, Ct=Ct, cutoff=cutoff,
                               check="initial" if n == 1 else "band", tol=tol, iteration=n)
        Ct = sd.Ct
        E = corrugation_error(sd.a, Q, lam)
        E_wedge = wedge(E)
        inc = sup_norm(E_wedge - E_wedge_prev, region)
        trail.append(TrailEntry(n, inc, sd.band_low_margin, sd.band_high_margin, sd.residual))
        if n < N:
            E_wedge_prev = E_wedge
    F = wedge(E) - E_wedge_prev
    # identity check with the common derivative backend on the inner region
    target = H - E_wedge_prev
    lhs = SymMatrixField.identity(g) * sd.a2 + sym_grad(sd.potential)
    scale = max(sup_norm(target, region), 1e-300)
    id_res = sup_norm(lhs - target, region) / scale
    if not math.isfinite(id_res):
        raise DecompositionError("identity residual is not finite")
    return KallenResult(sd.a, sd.potential, F, E, E_wedge_prev, trail, Ct, inorms, id_res, sd)


def trail_rows(trail):
    return [{"n": t.n, "increment": t.increment, "band_low_margin": t.band_low_margin,
             "band_high_margin": t.band_high_margin, "residual": t.residual} for t in trail]


def write_trail_csv(trail, path):
    rows = trail_rows(trail)
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["n"])
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})


def increment_ratios(trail):
    """Successive ratios of the trail increments."""
    inc = np.array([t.increment for t in trail])
    with np.errstate(divide="ignore", invalid="ignore"):
        return inc[1:] / inc[:-1]
