"""Fibonacci frequency schedules with exact exponent arithmetic.

Frequencies are ``mu0 * sigma**e`` where every exponent ``e`` has the form
``p + q*N/2`` with integers ``p, q``.  Once ``N`` is fixed the exponents
are exact rationals, so all ratio conditions between frequencies are
checked with zero tolerance.  ``mu0``, ``sigma0`` and a real ``gamma``
only enter the conditions that involve ``gamma``; there they appear as
real offsets in units of ``log(sigma)`` and are compared with a tolerance
of ``LOG_TOL``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import DomainError

LOG_TOL = 1e-12
_FIB_MAX = 90


def fibonacci(k: int) -> int:
    """``F_0 = F_1 = 1``, ``F_{k+2} = F_k + F_{k+1}``; valid for ``0 <= k <= 90``."""
    if not isinstance(k, (int,)) or isinstance(k, bool):
        raise DomainError("Fibonacci index must be an integer")
    if k < 0 or k > _FIB_MAX:
        raise DomainError(f"Fibonacci index {k} outside [0, {_FIB_MAX}] (64-bit guard)")
    a, b = 1, 1
    for _ in range(k):
        a, b = b, a + b
    return a


@dataclass(frozen=True)
class HalfIntExponent:
    """The exponent ``p + q*N/2``."""

    p: int
    q: int

    def value(self, N) -> Fraction:
        return Fraction(self.p) + Fraction(self.q * N, 2)

    def __add__(self, o):
        return HalfIntExponent(self.p + o.p, self.q + o.q)

    def __sub__(self, o):
        return HalfIntExponent(self.p - o.p, self.q - o.q)

    def __neg__(self):
        return HalfIntExponent(-self.p, -self.q)

    def scaled(self, c: int):
        return HalfIntExponent(self.p * c, self.q * c)

    def __str__(self):
        return f"{self.p}{'+' if self.q >= 0 else '-'}{abs(self.q)}*N/2"


ZERO = HalfIntExponent(0, 0)


@dataclass(frozen=True)
class FrequencySchedule:
    """``lam_k = mu0 sigma^{e_lam[k]}``, ``mu_k = mu0 sigma^{e_mu[k]}`` for ``k = 1..K``.

    By convention ``lam_0 = mu_0 = mu_{-1} = mu0`` (exponent zero).
    """

    mu0: float
    sigma: float
    N: int
    K: int
    lam_exp: tuple
    mu_exp: tuple

    def e_lam(self, k) -> Fraction:
        return Fraction(0) if k <= 0 else self.lam_exp[k - 1].value(self.N)

    def e_mu(self, k) -> Fraction:
        return Fraction(0) if k <= 0 else self.mu_exp[k - 1].value(self.N)

    def lam(self, k) -> float:
        return self.mu0 * self.sigma ** float(self.e_lam(k))

    def mu(self, k) -> float:
        return self.mu0 * self.sigma ** float(self.e_mu(k))

    def log10_mu(self, k) -> float:
        return math.log10(self.mu0) + float(self.e_mu(k)) * math.log10(self.sigma)

    def frequencies(self):
        """List of ``(lam_k, mu_k)`` floats for ``k = 1..K`` (may overflow to inf)."""
        out = []
        for k in range(1, self.K + 1):
            try:
                out.append((self.lam(k), self.mu(k)))
            except OverflowError:
                out.append((math.inf, math.inf))
        return out

    def is_monotone(self) -> bool:
        for k in range(1, self.K + 1):
            if not (self.e_mu(k - 1) <= self.e_lam(k) <= self.e_mu(k)):
                return False
        return True

    def rows(self):
        return [{"k": k, "lam_exp": self.e_lam(k), "mu_exp": self.e_mu(k),
                 "lam_exp_pq": str(self.lam_exp[k - 1]), "mu_exp_pq": str(self.mu_exp[k - 1])}
                for k in range(1, self.K + 1)]


def fib_exponents(N, K):
    """Exponent pairs ``(p, q)`` of ``lam_k`` and ``mu_k`` for ``k = 1..K``."""
    F = fibonacci
    lam, mu = [], []
    for k in range(1, K):
        lam.append(HalfIntExponent(F(k + 2) - 2, F(k + 2) - 3))
        mu.append(HalfIntExponent(F(k + 2) - 2, F(k + 3) - 3))
    lam.append(HalfIntExponent(2 * F(K) - 2, F(K + 2) - 3))
    mu.append(HalfIntExponent(2 * F(K) - 2, 3 * F(K) - 3))
    return tuple(lam), tuple(mu)


def make_schedule(mu0: float, sigma: float, N: int, K: int) -> FrequencySchedule:
    """Fibonacci schedule; requires ``N >= 1``, ``K >= 4``, ``sigma > 1``."""
    if N < 1:
        raise DomainError("N must be at least 1")
    if K < 4:
        raise DomainError("the Fibonacci schedule needs K >= 4")
    if not sigma > 1:
        raise DomainError("sigma must exceed 1")
    if not mu0 > 0:
        raise DomainError("mu0 must be positive")
    lam, mu = fib_exponents(N, K)
    s = FrequencySchedule(float(mu0), float(sigma), int(N), int(K), lam, mu)
    if not s.is_monotone():
        raise DomainError("schedule exponents are not monotone")
    return s


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


@dataclass
class Condition:
    """One inequality ``lhs >= rhs`` between exponents of ``sigma``."""

    name: str
    k: int
    lhs: object
    rhs: object
    margin: object
    exact: bool
    passed: bool


@dataclass
class ConditionReport:
    conditions: list
    passed: bool
    sigma0_max_log: float
    sigma0_max: float
    notes: list = field(default_factory=list)

    def failures(self):
        return [c for c in self.conditions if not c.passed]

    def by_name(self, name):
        return [c for c in self.conditions if c.name == name]


def _exact(name, k, lhs, rhs):
    m = Fraction(lhs) - Fraction(rhs)
    return Condition(name, k, lhs, rhs, m, True, m >= 0)


def _real(name, k, lhs, rhs):
    m = float(lhs) - float(rhs)
    return Condition(name, k, lhs, rhs, m, False, m >= -LOG_TOL)


def _as_exact(gamma):
    if isinstance(gamma, Fraction):
        return gamma
    return Fraction(gamma)


def gamma_max(N, K) -> Fraction:
    """Largest admissible ``gamma``: ``1 / ((F_{K+2} - 3)(1 + N/2))``."""
    return 1 / (Fraction(fibonacci(K + 2) - 3) * (1 + Fraction(N, 2)))


def verify_conditions(s: FrequencySchedule, gamma, sigma0: float = 1.0) -> ConditionReport:
    """Evaluate every growth and ratio condition of the schedule.

    Condition names:

    * ``lambda_growth`` (k = 0..K-1): ``lam_{k+1}^{1-gamma} >= mu_k sigma0``
    * ``first_ratio``: ``mu_1/lam_1 >= (lam_1/mu_0)^N``
    * ``middle_ratio_a`` / ``middle_ratio_b`` (k = 2..K-1): the two terms of
      the max bounding ``mu_k/lam_k``
    * ``last_ratio_a`` / ``last_ratio_b``: the same for ``k = K``
    * ``sigma_floor``: ``sigma / (mu0 sigma)^gamma >= sigma0``
    * ``gamma_small``: ``gamma <= gamma_max(N, K)``

    Ratio conditions do not involve ``mu0``, ``sigma0`` or ``gamma`` and are
    compared exactly.
    """
    N, K = s.N, s.K
    g = _as_exact(gamma)
    L0 = math.log(s.mu0) / math.log(s.sigma)
    S0 = math.log(sigma0) / math.log(s.sigma)
    el, em = s.e_lam, s.e_mu
    half = Fraction(N, 2)
    conds = []
    growth_margins = []
    for k in range(0, K):
        base = (1 - g) * el(k + 1) - em(k)
        if L0 == 0 and S0 == 0:
            c = _exact("lambda_growth", k, (1 - g) * el(k + 1), em(k))
        else:
            c = _real("lambda_growth", k, float((1 - g) * el(k + 1)) + (1 - float(g)) * L0,
                      float(em(k)) + L0 + S0)
        conds.append(c)
        growth_margins.append(float(base) - float(g) * L0)
    conds.append(_exact("first_ratio", 1, em(1) - el(1), N * (el(1) - em(0))))

    def rl(k):  # exponent of lam_k / mu_{k-1}
        return el(k) - em(k - 1)

    def ml(k):  # exponent of mu_k / lam_k
        return em(k) - el(k)

    for k in range(2, K):
        conds.append(_exact("middle_ratio_a", k, ml(k), half * (rl(k) + rl(k - 1))))
        conds.append(_exact("middle_ratio_b", k, ml(k), N * rl(k) + half * rl(k - 1) - ml(k - 1)))
    conds.append(_exact("last_ratio_a", K, ml(K), half * rl(K)))
    conds.append(_exact("last_ratio_b", K, ml(K), N * rl(K) + half * rl(K - 1) - ml(K - 1)))
    if L0 == 0 and S0 == 0:
        conds.append(_exact("sigma_floor", 0, 1 - g, 0))
    else:
        conds.append(_real("sigma_floor", 0, 1 - float(g) * (L0 + 1), S0))
    conds.append(_exact("gamma_small", 0, gamma_max(N, K), g))
    # largest sigma0 compatible with the gamma-dependent conditions
    floor_margin = 1 - float(g) * (L0 + 1)
    smax_log = min(min(growth_margins), floor_margin)
    try:
        smax = s.sigma ** smax_log
    except OverflowError:
        smax = math.inf
    return ConditionReport(conds, all(c.passed for c in conds), smax_log, smax)


def quotient_identities(s: FrequencySchedule):
    """Exact checks of the frequency quotients; list of ``(name, k, got, expected)``."""
    F = fibonacci
    N, K = s.N, s.K
    out = []
    for k in range(1, K):
        out.append(("lam_over_prev_mu", k, s.e_lam(k) - s.e_mu(k - 1), Fraction(F(k))))
        out.append(("mu_over_lam", k, s.e_mu(k) - s.e_lam(k), Fraction(F(k + 1) * N, 2)))
    out.append(("lam_over_prev_mu", K, s.e_lam(K) - s.e_mu(K - 1), Fraction(F(K - 2))))
    out.append(("mu_over_lam", K, s.e_mu(K) - s.e_lam(K), Fraction(F(K - 2) * N, 2)))
    return out


def decay_telescope(s: FrequencySchedule) -> Fraction:
    """Exponent of ``prod_{k=0}^{K-1} (lam_{k+1}/mu_k)^{-N}``."""
    return -s.N * sum(s.e_lam(k + 1) - s.e_mu(k) for k in range(s.K))


def lambda_exponent(s: FrequencySchedule) -> Fraction:
    """Exponent ``P(N, K)`` of ``prod_{k=1}^{K} mu_k lam_k^N``."""
    return sum(s.e_mu(k) + s.N * s.e_lam(k) for k in range(1, s.K + 1))


# ---------------------------------------------------------------------------
# Hoelder exponent algebra
# ---------------------------------------------------------------------------


def decay_exponent(N, K) -> Fraction:
    return Fraction(2 * (fibonacci(K) - 1) * N)


def growth_exponent(N, K) -> Fraction:
    F1 = fibonacci(K + 1)
    return Fraction(F1 - 2) + Fraction((F1 - 1) * N, 2)


def ratio_r(N, K) -> Fraction:
    """``r_{K,N} = growth / decay``."""
    return growth_exponent(N, K) / decay_exponent(N, K)


def alpha_of(N, K) -> Fraction:
    """Hoelder exponent ``1 / (1 + 2 r_{K,N})``."""
    return 1 / (1 + 2 * ratio_r(N, K))


def exponent_summary(N: int, K: int) -> dict:
    """Exact ``r``, ``alpha``, ``gamma_max``, ``P(N,K)``, decay and growth exponents."""
    if N < 4 or K < 4:
        raise DomainError("exponent summary needs N, K >= 4")
    s = make_schedule(1.0, 2.0, N, K)
    return {
        "N": N, "K": K,
        "r": ratio_r(N, K),
        "alpha": alpha_of(N, K),
        "gamma_max": gamma_max(N, K),
        "Lambda_exponent": lambda_exponent(s),
        "decay_exponent": decay_exponent(N, K),
        "growth_exponent": growth_exponent(N, K),
        "r_limit_N": Fraction(fibonacci(K + 1) - 1, 4 * (fibonacci(K) - 1)),
    }


GOLDEN = (1 + math.sqrt(5)) / 2
ALPHA_LIMIT = 1 - 1 / math.sqrt(5)
