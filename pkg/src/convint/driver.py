"""Outer iteration over stages, the density construction and exponent estimation."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import (ConfigError, ConstructionError, ConvintError, MarginError,
                     StagnationError)
from .grid_fields import (Grid2, ScalarField, SymMatrixField, VectorField, curl_curl, defect,
                          det_MA, min_eigenvalue, mollify, norms, sup_norm)
from .kallen import DEFAULT_SIGMA0
from .stage import relaxed_frequencies, run_stage

log = logging.getLogger(__name__)

ALPHA_CAP = 1 - 1 / math.sqrt(5)


def check_subsolution(v, w, A, region=None) -> float:
    """Minimum over the grid (or ``region``) of the smaller eigenvalue of the defect."""
    m = min_eigenvalue(defect(v, w, A)).values
    return float(np.min(m if region is None else m[region]))


# ---------------------------------------------------------------------------
# grid refinement
# ---------------------------------------------------------------------------


def _refine_array(a, grid: Grid2, fine: Grid2):
    if grid.periodic:
        nx, ny = grid.shape
        Nx, Ny = fine.shape
        spec = np.fft.fft2(a)
        out = np.zeros((Nx, Ny), dtype=complex)
        hx, hy = nx // 2, ny // 2
        out[:hx, :hy] = spec[:hx, :hy]
        out[:hx, -hy:] = spec[:hx, -hy:]
        out[-hx:, :hy] = spec[-hx:, :hy]
        out[-hx:, -hy:] = spec[-hx:, -hy:]
        return np.real(np.fft.ifft2(out)) * (Nx * Ny) / (nx * ny)
    spl = RectBivariateSpline(grid.x1, grid.x2, a, kx=5, ky=5)
    return spl(fine.x1, fine.x2)


def refine_field(f, fine: Grid2):
    g = f.grid
    if isinstance(f, ScalarField):
        if f.slope is not None:
            X1, X2 = fine.mesh
            per = _refine_array(f.periodic_part(), g, fine)
            return ScalarField(fine, per + f.slope[0] * X1 + f.slope[1] * X2, f.slope)
        return ScalarField(fine, _refine_array(f.values, g, fine))
    if isinstance(f, VectorField):
        return VectorField.from_components([refine_field(c, fine) for c in f.components()])
    return SymMatrixField(fine, *(_refine_array(e, g, fine) for e in f.entries()))


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------


@dataclass
class NashKuiperConfig:
    v: VectorField
    w: VectorField
    A: SymMatrixField
    domain: object = None
    mode: str = "relaxed"
    N: int = 2
    K: int = 1
    gamma: float = 0.01
    mu0: float = 4.0  # base frequency of the first stage
    rho: float = 0.5  # growth of the base frequency: mu0_{n+1} = mu0_n^(1 + rho)
    ratios: tuple = (6.0, 6.0)
    stage_frequencies: list = None  # optional explicit list per stage
    max_stages: int = 3
    defect_tol: float = 0.0
    eps: float = math.inf
    alpha: float = None
    beta: float = 1.0
    sigma0: float = DEFAULT_SIGMA0
    refine: bool = False
    mollify_data: bool = True
    on_precondition: str = "raise"
    continue_rotation: bool = True
    tol: float = 1e-6

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.alpha is not None:
            cap = min(self.beta / 2, ALPHA_CAP)
            if not 0 < self.alpha < cap:
                raise ConfigError(f"alpha must lie in (0, {cap:.6f})")
        if self.mode not in ("relaxed", "strict"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.max_stages < 1:
            raise ConfigError("max_stages must be positive")


@dataclass
class TraceRow:
    n: int
    defect: float
    v_c2: float
    dv_c1: float
    dw_c1: float
    lam: float
    h: float
    dv_c0_total: float = 0.0
    preliminary: bool = False


@dataclass
class ConvergenceTrace:
    rows: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    stop_reason: str = ""

    def append(self, row: TraceRow):
        if self.rows and row.n <= self.rows[-1].n:
            raise ValueError("trace rows must increase in n")
        self.rows.append(row)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def as_dicts(self):
        return [r.__dict__.copy() for r in self.rows]


def _stage_margin(K, mu0):
    eta = 1.0 / mu0
    l = (K + 1) * eta
    return l, l + K * eta + eta / 2


def _room(grid, domain):
    b = domain.bounds
    return min(b[0] - grid.origin[0], b[2] - grid.origin[1],
               grid.origin[0] + (grid.nx - 1) * grid.h - b[1],
               grid.origin[1] + (grid.ny - 1) * grid.h - b[3])


def _c2(v, region):
    try:
        return max(norms(c, m_max=2, region=region).cm[2] for c in v.components())
    except MarginError:
        return math.nan


def run_nash_kuiper(cfg: NashKuiperConfig, callback=None):
    """Iterate stages with growing frequencies; returns ``(trace, v, w)``.

    Stage ``n`` uses the base frequency ``mu0_n`` with ``mu0_{n+1} =
    mu0_n^(1 + rho)`` (or ``stage_frequencies[n]``), mollification length
    ``l_n = (K+1)/mu0_n`` and ``K`` double steps.  Stops on the defect
    tolerance, ``max_stages`` or two consecutive non-decreasing defects
    (:class:`StagnationError`, with the partial trace attached).
    ``callback(n, v, w)`` is called after every stage.
    """
    v, w, A = cfg.v, cfg.w, cfg.A
    g = v.grid
    domain = cfg.domain
    sub = check_subsolution(v, w, A, None if domain is None else domain.mask(g, 0.0))
    if not sub > 0:
        raise ConstructionError(f"initial data is not a strict subsolution (min eigenvalue {sub:.4g})")
    region = None if domain is None else domain.mask(g, 0.0)
    trace = ConvergenceTrace()
    D0 = sup_norm(defect(v, w, A), region)
    trace.append(TraceRow(0, D0, _c2(v, region), 0.0, 0.0, 0.0, g.h))
    v_start = v
    avail = math.inf if domain is None else _room(g, domain) - 4 * g.h
    mu0 = cfg.mu0
    k_counter = 0
    defects = [D0]
    for n in range(1, cfg.max_stages + 1):
        if cfg.defect_tol > 0 and defects[-1] <= cfg.defect_tol:
            trace.stop_reason = "defect tolerance reached"
            break
        freqs = None
        if cfg.stage_frequencies is not None:
            freqs = list(cfg.stage_frequencies[n - 1])
            base = freqs[0][0] / cfg.ratios[0]
        else:
            base = mu0
        l, need = _stage_margin(cfg.K, base)
        if domain is not None and need > avail:
            err = MarginError(f"stage {n} needs margin {need:.4g}, only {avail:.4g} left")
            err.stage, err.trace = n, trace
            raise err
        if cfg.refine:
            top = max(m for _, m in (freqs or relaxed_frequencies(base, cfg.K, cfg.ratios)))
            while top * g.h > 0.5:
                fine = g.refined(2)
                v, w, A = refine_field(v, fine), refine_field(w, fine), refine_field(A, fine)
                v_start = refine_field(v_start, fine)
                g = fine
                region = None if domain is None else domain.mask(g, 0.0)
        if freqs is None:
            freqs = relaxed_frequencies(base, cfg.K, cfg.ratios, g if g.periodic else None)
        try:
            v_new, w_new, rep = run_stage(
                v, w, A, l, N=cfg.N, K=cfg.K, gamma=cfg.gamma, domain=domain, mode="relaxed",
                frequencies=freqs, mu0=base, sigma0=cfg.sigma0,
                k_offset=k_counter if cfg.continue_rotation else 0,
                on_precondition=cfg.on_precondition, mollify_data=cfg.mollify_data,
                tol=cfg.tol)
        except ConvintError as exc:
            exc.stage = n
            exc.trace = trace
            raise
        k_counter += cfg.K
        if domain is not None:
            avail = l
        D = sup_norm(defect(v_new, w_new, A), region)
        dv = norms(v_new - v, m_max=1, region=region).cm[1]
        dw = norms(w_new - w, m_max=1, region=region).cm[1]
        c0 = sup_norm(v_new - v_start, region)
        trace.append(TraceRow(n, D, _c2(v_new, region), dv, dw, freqs[-1][1], g.h, c0,
                              preliminary=(n == 1 and D0 > 1)))
        trace.stages.append(rep)
        v, w = v_new, w_new
        if callback is not None:
            callback(n, v, w)
        defects.append(D)
        if len(defects) >= 3 and defects[-1] >= defects[-2] >= defects[-3]:
            err = StagnationError(f"defect did not decrease in stages {n - 1} and {n}", stage=n)
            err.trace = trace
            raise err
        mu0 = base ** (1 + cfg.rho)
    else:
        trace.stop_reason = "max stages"
    if trace.rows[-1].dv_c0_total > cfg.eps:
        warnings.warn(f"C0 budget exceeded: {trace.rows[-1].dv_c0_total:.4g} > {cfg.eps:.4g}",
                      RuntimeWarning, stacklevel=2)
    return trace, v, w


# ---------------------------------------------------------------------------
# exponent estimation
# ---------------------------------------------------------------------------


@dataclass
class AlphaEstimate:
    alpha: float
    b: float
    B: float
    r2_increments: float
    r2_norms: float


def _fit(n, y):
    coef = np.polyfit(n, y, 1)
    pred = np.polyval(coef, n)
    ss = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    return coef[0], r2


def estimate_alpha(trace, increments=None, norms2=None) -> AlphaEstimate:
    """Fit ``|v_{n+1} - v_n|_1 ~ b^{-n}`` and ``|v_n|_2 ~ B^n``; ``alpha = log b / (log b + log B)``.

    Accepts a :class:`ConvergenceTrace` or explicit arrays.  Rows with
    ``n = 0`` carry no increment and are skipped.
    """
    if trace is not None:
        rows = [r for r in trace.rows if r.n > 0]
        n = np.array([r.n for r in rows], dtype=float)
        inc = np.array([r.dv_c1 for r in rows])
        nrm = np.array([r.v_c2 for r in rows])
    else:
        inc = np.asarray(increments, dtype=float)
        nrm = np.asarray(norms2, dtype=float)
        n = np.arange(1, len(inc) + 1, dtype=float)
    if len(n) < 3:
        raise ConfigError("alpha estimation needs at least 3 stages")
    if np.any(inc <= 0) or np.any(nrm <= 0):
        raise ConfigError("trace norms must be positive")
    s_inc, r2a = _fit(n, np.log(inc))
    s_nrm, r2b = _fit(n, np.log(nrm))
    log_b, log_B = -s_inc, s_nrm
    alpha = log_b / (log_b + log_B) if (log_b + log_B) != 0 else math.nan
    if min(r2a, r2b) < 0.9:
        warnings.warn(f"trace is not geometric (R^2 {r2a:.3f}, {r2b:.3f})", RuntimeWarning,
                      stacklevel=2)
    return AlphaEstimate(alpha, math.exp(log_b), math.exp(log_B), r2a, r2b)


def synthetic_trace(b, B, n=6, c_inc=1.0, c_nrm=1.0):
    """Closed-form geometric trace with rates ``b`` (increments) and ``B`` (norms)."""
    tr = ConvergenceTrace()
    tr.append(TraceRow(0, 1.0, c_nrm, 0.0, 0.0, 0.0, 0.0))
    for k in range(1, n + 1):
        tr.append(TraceRow(k, b ** (-k), c_nrm * B**k, c_inc * b ** (-k), 0.0, 0.0, 0.0))
    return tr


# ---------------------------------------------------------------------------
# density demo
# ---------------------------------------------------------------------------


def double_antiderivative(f: ScalarField) -> ScalarField:
    """``F`` with ``d22 F = f`` and ``F = d2 F = 0`` on the line ``x2 = x2_0``.

    Cumulative composite Simpson/trapezoid integration along ``x2``.
    """
    from scipy.integrate import cumulative_simpson

    g = f.grid
    x2 = g.x2
    first = cumulative_simpson(f.values, x=x2, axis=1, initial=0.0)
    second = cumulative_simpson(first, x=x2, axis=1, initial=0.0)
    return ScalarField(g, second)


def density_metric(f: ScalarField, c: float, polynomial=None) -> SymMatrixField:
    """``A = (c - F) e1 (x) e1 + c e2 (x) e2`` with ``d22 F = f``, so ``-curl_curl A = f``.

    ``polynomial`` may supply ``F`` in closed form (a function of ``(X1, X2)``).
    """
    g = f.grid
    if polynomial is not None:
        F = ScalarField.from_function(g, polynomial)
    else:
        F = double_antiderivative(f)
    z = np.zeros(g.shape)
    return SymMatrixField(g, c - F.values, z, c + z)


@dataclass
class DensityProblem:
    f: ScalarField
    v_target: VectorField
    eps: float
    c: float = None
    scale: float = 0.1
    domain: object = None
    antiderivative: object = None


@dataclass
class DensityReport:
    A: SymMatrixField
    c: float
    cc_residual: float
    subsolution: float
    trace: ConvergenceTrace
    target_distance: list
    det_residual: list
    coarse_scale: float
    error: str = ""


def coarse_det_residual(v, f, ell, region=None):
    """Sup of the ``ell``-mollified ``det_MA(v) - f``."""
    r = det_MA(v) - f
    return sup_norm(mollify(r, ell), region)


def density_demo(p: DensityProblem, cfg: dict, coarse_scale=0.1):
    """Build ``A`` for ``f``, start below ``v_target`` and run the outer loop.

    ``cfg`` holds :class:`NashKuiperConfig` keyword arguments (other than
    the fields).  The padding constant ``c`` is doubled until the start is
    a strict subsolution.
    """
    g = p.f.grid
    region = None if p.domain is None else p.domain.mask(g, 0.0)
    v0 = p.v_target * p.scale
    if p.v_target.grid.periodic or p.domain is None:
        v0 = mollify(v0, 2 * g.h)
    w0 = VectorField.zeros(g, 2)
    c = p.c if p.c is not None else 1.0
    for _ in range(40):
        A = density_metric(p.f, c, p.antiderivative)
        sub = check_subsolution(v0, w0, A, region)
        if sub > 0:
            break
        if p.c is not None:
            raise ConstructionError(f"padding constant {c:g} gives no subsolution")
        c *= 2
    else:
        raise ConstructionError("no padding constant produced a subsolution")
    cc_res = sup_norm(-curl_curl(A) - p.f, region)
    dist = [sup_norm(v0 - p.v_target, region)]
    dets = [coarse_det_residual(v0, p.f, coarse_scale, region)]
    ncfg = NashKuiperConfig(v=v0, w=w0, A=A, domain=p.domain, eps=p.eps, **cfg)

    def record(n, v, w):
        dist.append(sup_norm(v - p.v_target, region))
        dets.append(coarse_det_residual(v, p.f, coarse_scale, region))

    err = ""
    trace = ConvergenceTrace()
    try:
        trace, _, _ = run_nash_kuiper(ncfg, record)
    except ConvintError as exc:
        err = f"{type(exc).__name__}: {exc}"
        trace = getattr(exc, "trace", trace)
    return DensityReport(A, c, cc_res, sub, trace, dist, dets, coarse_scale, err)
