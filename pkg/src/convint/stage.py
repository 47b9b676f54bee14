"""Double steps, stages and the exact constant ledger.

A double step at counter ``k`` cancels the current defect ``D_k`` in two
corrugations.  The first (along ``x1``, component ``alpha_k``) uses an
amplitude built by :func:`kallen_iterate`, which leaves only
``-F + b^2 e2 (x) e2``.  The second (along ``x2``, component ``beta_k``)
removes ``b^2 e2 (x) e2``.  The components rotate with ``k`` so that
every component of ``v`` is touched twice in any three consecutive steps.

A stage mollifies the data, picks ``K`` frequency pairs and performs
``K`` double steps; the active region shrinks by ``eta`` per step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .corrugation import StepParams, check_frequency, phase, profiles, step_perturb
from .decomposition import DEFAULT_TOL
from .errors import (ConfigError, DomainError, FrequencyRatioError, MarginError,
                     ResolutionError, ScheduleError)
from .grid_fields import (ScalarField, SymMatrixField, VectorField, defect, derivative_arrays,
                          hessian, mollify, norms, sup_norm)
from .kallen import DEFAULT_SIGMA0, kallen_iterate
from .schedule import (HalfIntExponent, ZERO, fibonacci, lambda_exponent, make_schedule,
                       verify_conditions)

log = logging.getLogger(__name__)


def codim_assignment(k: int):
    """``(alpha_k, beta_k, gamma_k)`` with ``alpha = 2k mod 3 + 1``, ``beta = (2k+1) mod 3 + 1``."""
    if k < 0:
        raise DomainError("step counter must be nonnegative")
    a = (2 * k) % 3 + 1
    b = (2 * k + 1) % 3 + 1
    return a, b, 6 - a - b


@dataclass
class StageState:
    v: VectorField
    w: VectorField
    A: SymMatrixField
    k: int = 0
    margin: float = 0.0  # fields are meaningful on domain + B_margin
    domain: object = None  # None on periodic grids

    def __post_init__(self):
        if self.v.k != 3 or self.w.k != 2:
            raise DomainError("v needs 3 components and w needs 2")
        if self.margin < 0:
            raise MarginError("active margin became negative")

    def region(self, r=None):
        if self.domain is None:
            return None
        return self.domain.mask(self.v.grid, self.margin if r is None else r)

    def defect(self):
        return defect(self.v, self.w, self.A)


@dataclass
class DoubleStepReport:
    k: int
    alpha: int
    beta: int
    lam: float
    mu: float
    mu_prev: float
    Ct_k: float
    Ct: float
    defect_before: float
    defect_after: float
    bookkeeping_residual: float
    bookkeeping_relative: float
    b2_min: float
    b2_floor: float
    F_norm: float
    kallen_identity_residual: float
    trail: list = field(default_factory=list)

    @property
    def reduction(self):
        return self.defect_after / self.defect_before if self.defect_before > 0 else math.inf


def _restrict(f, mask):
    return f if mask is None else f[mask]


def b_squared(a: ScalarField, v_alpha: ScalarField, lam: float) -> np.ndarray:
    """``a^2 + (a/lam) G d22 v - (a/lam^2) Gb d22 a - (1/lam^2) Gt (d2 a)^2``."""
    G, Gb, _, Gt = profiles(phase(a.grid, lam, 1))
    (v22,) = derivative_arrays(v_alpha, [(0, 2)])
    a2d, a22 = derivative_arrays(a, [(0, 1), (0, 2)])
    av = a.values
    return av * av + (av / lam) * G * v22 - (av / lam**2) * Gb * a22 - (Gt / lam**2) * a2d**2


def double_step(state: StageState, lam: float, mu_next: float, mu_prev: float, *, N: int,
                gamma: float, eta: float = 0.0, Ct: float | None = None,
                Ct_k: float | None = None, sigma0: float = DEFAULT_SIGMA0,
                tol: float = DEFAULT_TOL, on_precondition: str = "raise"):
    """One double step with frequencies ``lam`` (first) and ``mu_next`` (second).

    ``mu_prev`` is the frequency scale of the incoming defect.  ``Ct_k``
    normalises the defect and defaults to its measured sup on the active
    region; ``Ct`` is the padding constant of the amplitude.
    Returns ``(new_state, DoubleStepReport)``.
    """
    g = state.v.grid
    if not (mu_prev <= lam <= mu_next):
        raise FrequencyRatioError(f"frequencies out of order: {mu_prev:g}, {lam:g}, {mu_next:g}")
    check_frequency(g, lam, 1)
    check_frequency(g, mu_next, 2)
    periodic = state.domain is None
    r = state.margin
    if not periodic and r - eta < 0:
        raise MarginError(f"active margin {r:g} cannot shrink by {eta:g}")
    region = state.region()
    inner_region = state.region(r - eta)
    cutoff = None if periodic else state.domain.cutoff(g, r - eta, r)

    alpha, beta, _ = codim_assignment(state.k)
    D = state.defect()
    d_before = sup_norm(D, region)
    if Ct_k is None:
        Ct_k = d_before if d_before > 1e-300 else 1.0
    sq = math.sqrt(Ct_k)
    v_alpha = state.v[alpha - 1]
    H = D / Ct_k
    Q = hessian(v_alpha) / sq
    res = kallen_iterate(H, Q, lam, mu_prev, N, gamma, Ct=Ct, cutoff=cutoff, sigma0=sigma0,
                         tol=tol, on_precondition=on_precondition, region=inner_region)
    a = res.a * sq
    Psi = res.Psi * Ct_k
    F = res.F * Ct_k

    v1, w1 = step_perturb(state.v, state.w, StepParams(1, alpha, lam, a))
    w1 = w1 + Psi

    b2 = b_squared(a, v_alpha, lam)
    # b^2 must equal a^2 minus the 22 entry of the last error field
    E22 = res.E_last.d22 * Ct_k
    b2_alt = a.values**2 - E22
    scale = max(float(np.max(np.abs(b2))), 1e-300)
    if np.max(np.abs(b2 - b2_alt)) > 1e-8 * scale:
        raise FrequencyRatioError("inconsistent b^2 bookkeeping")

    D_int = defect(v1, w1, state.A)
    expected = SymMatrixField(g, -F.d11, -F.d12, -F.d22 + b2)
    book = sup_norm(D_int - expected, inner_region)

    floor = 0.25 * res.Ct * Ct_k * mu_prev**gamma
    b2_min = float(np.min(_restrict(b2, inner_region)))
    if b2_min < floor:
        raise FrequencyRatioError(
            f"b^2 fell to {b2_min:.4g} below {floor:.4g} at step {state.k}: "
            f"lam/mu ratio {lam / mu_prev:.3g} too small")
    b = ScalarField(g, np.sqrt(np.maximum(b2, floor)))
    v2, w2 = step_perturb(v1, w1, StepParams(2, beta, mu_next, b))
    new = StageState(v2, w2, state.A, state.k + 1, r - eta if not periodic else r, state.domain)
    d_after = sup_norm(new.defect(), new.region())
    rep = DoubleStepReport(state.k, alpha, beta, lam, mu_next, mu_prev, Ct_k, res.Ct, d_before,
                           d_after, book, book / Ct_k, b2_min, floor, sup_norm(F, inner_region),
                           res.identity_residual, res.trail)
    if book / Ct_k > tol * 10:
        log.warning("bookkeeping residual %.3e at step %d", book / Ct_k, state.k)
    return new, rep


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


@dataclass
class StageReport:
    mode: str
    K: int
    N: int
    gamma: float
    l: float
    eta: float
    mu0: float
    frequencies: list
    Ct0: float
    Mbar: float
    measured: dict
    predicted: dict
    ratios: dict
    steps: list
    mollification_constant: float
    schedule: object = None
    conditions: object = None
    stage_bounds: dict = field(default_factory=dict)

    def step_rows(self):
        return [{"k": s.k, "alpha": s.alpha, "beta": s.beta, "lam": s.lam, "mu": s.mu,
                 "Ct_k": s.Ct_k, "Ct": s.Ct, "defect_before": s.defect_before,
                 "defect_after": s.defect_after, "bookkeeping_relative": s.bookkeeping_relative,
                 "b2_min": s.b2_min, "b2_floor": s.b2_floor, "F_norm": s.F_norm}
                for s in self.steps]


def _commensurate(grid, f, axis):
    if not grid.periodic:
        return float(f)
    L = grid.period[axis - 1]
    n = max(1, round(f * L / (2 * np.pi)))
    return 2 * np.pi * n / L


def relaxed_frequencies(mu0, K, ratios=(6.0, 6.0), grid=None):
    """``lam_k = r1 mu_{k-1}``, ``mu_k = r2 lam_k``; rounded to the torus when periodic."""
    r1, r2 = ratios
    out = []
    mu = mu0
    for _ in range(K):
        lam = r1 * mu
        if grid is not None:
            lam = _commensurate(grid, lam, 1)
        mu = r2 * lam
        if grid is not None:
            mu = _commensurate(grid, mu, 2)
        out.append((lam, mu))
    return out


def _c1(f, region):
    return norms(f, m_max=1, region=region).cm[1]


def _hess_sup(f, region):
    return max(norms(c, m_max=2, region=region).derivative_sups[2] for c in f.components())


def predicted_bounds(freqs, mu0, N, gamma, Ct0, grad_v0):
    """Generic bounds with unit constants, evaluated on the actual frequencies."""
    mus = [mu0] + [m for _, m in freqs]
    lams = [mu0] + [l for l, _ in freqs]
    K = len(freqs)
    Lam = 1.0
    for k in range(0, K + 1):
        Lam *= mus[k] * lams[k] ** N
    decay = 1.0
    for k in range(K):
        decay *= (lams[k + 1] / mus[k]) ** (-N)
    out = {
        "Lambda": Lam,
        "v_c1": math.sqrt(Ct0) * Lam ** (gamma / 2),
        "w_c1": math.sqrt(Ct0) * Lam**gamma * (grad_v0 + math.sqrt(Ct0)),
        "defect": Ct0 * Lam**gamma * decay,
    }
    if K >= 2:
        half = 1.0
        for k in range(K - 1):
            half *= (lams[k + 1] / mus[k]) ** (-N / 2)
        extra = 1 + (lams[K - 1] / mus[K - 2]) ** (N / 2) / (mus[K] / mus[K - 1])
        out["v_hess"] = math.sqrt(Ct0) * Lam ** (gamma / 2) * half * extra * mus[K]
    else:
        out["v_hess"] = math.sqrt(Ct0) * Lam ** (gamma / 2) * mus[K]
    out["w_hess"] = out["v_hess"] * Lam ** (gamma / 2) * (1 + math.sqrt(Ct0) + grad_v0)
    return out


def stage_bounds(lam, l, gamma, N, K, D0, Mbar, grad_v0, A_holder=0.0, beta=1.0):
    """Stage bounds in terms of ``lam`` and ``l`` with unit constants."""
    F1 = fibonacci(K + 1)
    grow = (F1 - 2) + (F1 - 1) * N / 2
    dec = 2 * (fibonacci(K) - 1) * N
    base = math.sqrt(D0) + l * Mbar
    tail = 1 + base + grad_v0
    s = lam * l
    return {
        "v_c1": lam ** (gamma / 2) * base,
        "w_c1": lam**gamma * base * tail,
        "v_hess": s**grow * lam ** (gamma / 2) / l * base,
        "w_hess": s**grow * lam**gamma / l * base * tail,
        "defect": l**beta * A_holder + lam**gamma / s**dec * (D0 + (l * Mbar) ** 2),
    }


def run_stage(v, w, A, l, lam=None, *, N=2, K=4, gamma=0.01, Mbar=None, domain=None,
              mode="relaxed", frequencies=None, ratios=(6.0, 6.0), mu0=None, sigma0=DEFAULT_SIGMA0,
              C_scale=1.0, Ct=None, tol=DEFAULT_TOL, k_offset=0, on_precondition="raise",
              mollify_data=True, renormalize=True, eta=None):
    """Mollify, choose frequencies and perform ``K`` double steps.

    ``mode="strict"`` builds the Fibonacci schedule with ``sigma = lam l``;
    ``mode="relaxed"`` uses ``frequencies`` (list of ``(lam_k, mu_k)``) or
    geometric ``ratios`` from ``mu0``.  On extended grids ``domain`` is the
    working region and the data must be valid on ``domain + B_{2l}``.
    ``renormalize=False`` normalises every step by the initial constant
    instead of the measured defect.  ``eta`` (relaxed mode only) overrides
    the cutoff width ``l/(K+1)``.  Returns ``(v, w, StageReport)``.
    """
    if mode not in ("strict", "relaxed"):
        raise ConfigError(f"unknown mode {mode!r}")
    g = v.grid
    if K < 1 or N < 1:
        raise ConfigError("K and N must be positive")
    if not l > 0:
        raise ConfigError("mollification length l must be positive")
    if eta is None or mode == "strict":
        eta = l / (K + 1)
    if mu0 is None:
        mu0 = 1.0 / eta
    periodic = domain is None
    if periodic and not g.periodic:
        raise ConfigError("extended grids need a domain")

    r0 = l + K * eta
    region0 = None if periodic else domain.mask(g, r0)
    region_out = None if periodic else domain.mask(g, l)
    if not periodic:
        span = domain.bounds
        room = min(span[0] - g.origin[0], span[2] - g.origin[1],
                   g.origin[0] + (g.nx - 1) * g.h - span[1],
                   g.origin[1] + (g.ny - 1) * g.h - span[3])
        need = r0 + eta / 2 + 4 * g.h
        if room < need:
            raise MarginError(f"grid extends {room:g} beyond the domain, need {need:g}")

    if Mbar is None:
        Mbar = max(_c2(v), _c2(w), 1.0)

    schedule = conds = None
    if mode == "strict":
        if lam is None:
            raise ConfigError("strict mode needs lam")
        sigma = lam * l
        if lam ** (1 - gamma) * l < sigma0:
            raise ScheduleError(f"lam^(1-gamma) l = {lam ** (1 - gamma) * l:.4g} below sigma0")
        schedule = make_schedule(mu0, sigma, N, K)
        conds = verify_conditions(schedule, gamma, sigma0)
        if not conds.passed:
            bad = ", ".join(f"{c.name}[k={c.k}]" for c in conds.failures())
            raise ScheduleError(f"schedule conditions fail: {bad}")
        muK = schedule.mu(K)
        if not math.isfinite(muK) or muK * g.h > math.pi:
            raise ResolutionError(f"mu_K = {muK:.4g} needs spacing below {math.pi / muK:.3g}, "
                                  f"grid has {g.h:.3g}")
        freqs = schedule.frequencies()
    else:
        freqs = list(frequencies) if frequencies is not None else relaxed_frequencies(
            mu0, K, ratios, g if g.periodic else None)
        if len(freqs) != K:
            raise ConfigError(f"need {K} frequency pairs, got {len(freqs)}")
        for lk, mk in freqs:
            check_frequency(g, lk, 1)
            check_frequency(g, mk, 2)

    if mollify_data:
        v0, w0, A0 = mollify(v, eta / 2), mollify(w, eta / 2), mollify(A, eta / 2)
    else:
        v0, w0, A0 = v, w, A
    moll_c = _c1(v0 - v, region0) / (l * Mbar)
    state = StageState(v0, w0, A0, k_offset, r0 if not periodic else 0.0, domain)
    D0 = sup_norm(state.defect(), region0)
    Ct0 = C_scale * (D0 + (l * Mbar) ** 2)

    mus = [mu0] + [m for _, m in freqs]
    steps = []
    for k in range(K):
        lk, mk = freqs[k]
        state, rep = double_step(state, lk, mk, mus[k], N=N, gamma=gamma,
                                 eta=0.0 if periodic else eta, Ct=Ct,
                                 Ct_k=None if renormalize else Ct0, sigma0=sigma0, tol=tol,
                                 on_precondition=on_precondition)
        steps.append(rep)
        log.info("double step %d: defect %.3e -> %.3e", rep.k, rep.defect_before, rep.defect_after)

    vt, wt = state.v, state.w
    grad_v0 = max(norms(c, m_max=1, region=region_out).derivative_sups[1] for c in v0.components())
    measured = {
        "v_c1": _c1(vt - v0, region_out),
        "w_c1": _c1(wt - w0, region_out),
        "v_hess": _hess_sup(vt, region_out),
        "w_hess": _hess_sup(wt, region_out),
        "defect": sup_norm(state.defect(), region_out),
        "defect_initial": D0,
    }
    pred = predicted_bounds(freqs, mu0, N, gamma, Ct0, grad_v0)
    ratios_out = {}
    for key in ("v_c1", "w_c1", "v_hess", "w_hess", "defect"):
        p = pred.get(key)
        ratios_out[key] = measured[key] / p if p and math.isfinite(p) and p > 0 else math.nan
    tb = {}
    if mode == "strict":
        tb = stage_bounds(lam, l, gamma, N, K, D0, Mbar, grad_v0)
    rep = StageReport(mode, K, N, gamma, l, eta, mu0, freqs, Ct0, Mbar, measured, pred, ratios_out,
                      steps, moll_c, schedule, conds, tb)
    return vt, wt, rep


def _c2(f):
    try:
        return max(norms(c, m_max=2).cm[2] for c in f.components())
    except MarginError:
        return max(norms(c, m_max=0).cm[0] for c in f.components())


# ---------------------------------------------------------------------------
# exact constant ledger
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Monomial:
    """``C^c * Ct0^t * mu0^(m0 + m1 gamma) * sigma^(s0 + s1 gamma)``.

    ``s0`` and ``s1`` are exponents of the form ``p + q N/2``.
    """

    c: int
    t: Fraction
    m0: Fraction
    m1: Fraction
    s0: HalfIntExponent
    s1: HalfIntExponent

    def times(self, o):
        return Monomial(self.c + o.c, self.t + o.t, self.m0 + o.m0, self.m1 + o.m1,
                        self.s0 + o.s0, self.s1 + o.s1)

    def sqrt_s0(self, N):
        return self.s0.value(N) / 2

    def describe(self, N):
        return {"C_power": self.c, "Ct0_power": self.t, "mu0_power": (self.m0, self.m1),
                "sigma_power": (self.s0.value(N), self.s1.value(N)),
                "sigma_power_pq": (str(self.s0), str(self.s1))}


ONE = Monomial(0, Fraction(0), Fraction(0), Fraction(0), ZERO, ZERO)
CT0 = Monomial(0, Fraction(1), Fraction(0), Fraction(0), ZERO, ZERO)
C1 = Monomial(1, Fraction(0), Fraction(0), Fraction(0), ZERO, ZERO)


@dataclass
class BoundLedger:
    N: int
    K: int
    gamma: float
    sigma: float
    mu0: float
    C: float
    Ct: list
    A: dict
    B: dict
    decay_exponent: Fraction
    growth_exponent: Fraction
    gamma_part: Fraction
    Lambda_exponent: Fraction
    gamma_bar: float

    def value(self, mono: Monomial, Ct0=1.0):
        """Floating value of a ledger entry (may overflow to inf)."""
        g = self.gamma
        N = self.N
        try:
            return (self.C ** mono.c * Ct0 ** float(mono.t)
                    * self.mu0 ** float(mono.m0 + mono.m1 * Fraction(g))
                    * self.sigma ** float(mono.s0.value(N) + mono.s1.value(N) * Fraction(g)))
        except OverflowError:
            return math.inf

    def rows(self):
        out = []
        for k, m in enumerate(self.Ct):
            out.append({"k": k, "Ct": m.describe(self.N),
                        "A": self.A[k].describe(self.N) if k in self.A else None,
                        "B": self.B[k].describe(self.N) if k in self.B else None})
        return out


def _frequency_monomial(e: HalfIntExponent, power_gamma: int = 0, power: int = 0):
    """``(mu0 sigma^e)^(power + power_gamma * gamma)``."""
    return Monomial(0, Fraction(0), Fraction(power), Fraction(power_gamma),
                    e.scaled(power), e.scaled(power_gamma))


def simulate_stage_bounds(N: int, K: int, gamma: float, sigma: float = 2.0, mu0: float = 1.0,
                          C: float = 1.0) -> BoundLedger:
    """Propagate ``Ct_k``, ``A_k``, ``B_k`` through the constant recursion exactly.

    ``Ct_{k+1} = C Ct_k mu_k^g lam_{k+1}^{gN} / (lam_{k+1}/mu_k)^N``,
    ``A_k = C Ct_{k-2} mu_{k-2}^g``, ``B_k = C Ct_{k-1} mu_{k-1}^g``, with
    ``A_0 = A_1 = B_0 = Ct_0``.
    """
    if N < 4 or K < 4:
        raise DomainError("the ledger needs N, K >= 4")
    if not sigma > 1:
        raise DomainError("sigma must exceed 1")
    s = make_schedule(mu0, sigma, N, K)

    def e_lam(k):
        return ZERO if k <= 0 else s.lam_exp[k - 1]

    def e_mu(k):
        return ZERO if k <= 0 else s.mu_exp[k - 1]

    Ct = [CT0]
    for k in range(K):
        ratio = e_lam(k + 1) - e_mu(k)
        step = C1.times(_frequency_monomial(e_mu(k), power_gamma=1))
        step = step.times(_frequency_monomial(e_lam(k + 1), power_gamma=N))
        step = step.times(Monomial(0, Fraction(0), Fraction(0), Fraction(0),
                                   ratio.scaled(-N), ZERO))
        Ct.append(Ct[-1].times(step))
    A = {0: CT0, 1: CT0}
    B = {0: CT0}
    for k in range(2, K + 2):
        A[k] = C1.times(Ct[k - 2]).times(_frequency_monomial(e_mu(k - 2), power_gamma=1))
    for k in range(1, K + 1):
        B[k] = C1.times(Ct[k - 1]).times(_frequency_monomial(e_mu(k - 1), power_gamma=1))
    decay = -Ct[K].s0.value(N)
    # Hessian of v_K: A_K^{1/2} mu_{K-1} + B_K^{1/2} lam_K + A_{K+1}^{1/2} mu_K
    terms = [A[K].s0.value(N) / 2 + e_mu(K - 1).value(N),
             B[K].s0.value(N) / 2 + e_lam(K).value(N),
             A[K + 1].s0.value(N) / 2 + e_mu(K).value(N)]
    growth = max(terms)
    P = lambda_exponent(s)
    return BoundLedger(N, K, gamma, sigma, mu0, C, Ct, A, B, decay, growth,
                       Ct[K].s1.value(N), P, gamma * float(P))
