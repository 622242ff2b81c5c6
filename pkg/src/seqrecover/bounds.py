"""Closed-form sample-complexity and error-probability bounds.

All ``*_m`` functions return the average number of measurements per
dimension as a real number; rounding up is left to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError, DomainError
from .models import ModelSpec

CHERNOFF_GRID = 1024
CHERNOFF_TOL = 1e-8


def _check_divergence(name: str, d: float):
    if not d > 0.0:
        raise DegenerateModelError(f"{name} must be positive, got {d}")


def _check_int(name: str, v, minimum: int):
    if isinstance(v, bool) or int(v) != v or v < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, got {v}")


def seq_lower_bound_m(s: int, d01: float) -> float:
    """Below log(s) / D(f0||f1) every sequential procedure fails."""
    _check_int("s", s, 2)
    _check_divergence("d01", d01)
    return math.log(s) / d01


def st_sufficient_m(s: int, n: int, d01: float) -> float:
    """Above (log s + log log n) / D(f0||f1) sequential thresholding succeeds."""
    _check_int("s", s, 2)
    _check_int("n", n, 3)
    if n <= s:
        raise DomainError(f"n must exceed s, got n={n}, s={s}")
    _check_divergence("d01", d01)
    return (math.log(s) + math.log(math.log(n))) / d01


def nonseq_lower_bound_m(n: int, d10: float) -> float:
    """Below log(n) / D(f1||f0) every non-sequential procedure fails."""
    _check_int("n", n, 2)
    _check_divergence("d10", d10)
    return math.log(n) / d10


def _minmax_objective(model: ModelSpec, log_null: float, log_alt: float, lam: float) -> float:
    to_null, to_alt = model.tilted_divergences(lam)
    if to_null <= 0.0 or to_alt <= 0.0:
        return math.inf
    return max(log_null / to_null, log_alt / to_alt)


def chernoff_minmax_m(n: int, s: int, model: ModelSpec) -> tuple[float, float]:
    """min over lambda of max(log(n-s)/D(f_lam||f0), log(s)/D(f_lam||f1)).

    This is the non-sequential failure threshold expressed through the
    tilted family. Returns ``(m_star, lambda_star)``. The objective is
    unimodal for the built-in models; a 1024-point grid localises the
    minimum and a ternary search refines it.
    """
    _check_int("s", s, 2)
    if n <= s:
        raise DomainError(f"n must exceed s, got n={n}, s={s}")
    log_null, log_alt = math.log(n - s), math.log(s)

    def f(lam):
        return _minmax_objective(model, log_null, log_alt, lam)

    grid = (np.arange(CHERNOFF_GRID) + 1.0) / (CHERNOFF_GRID + 1.0)
    values = np.array([f(x) for x in grid])
    i = int(np.argmin(values))
    lo = grid[i - 1] if i > 0 else 0.0
    hi = grid[i + 1] if i < CHERNOFF_GRID - 1 else 1.0
    while hi - lo > CHERNOFF_TOL:
        a = lo + (hi - lo) / 3.0
        b = hi - (hi - lo) / 3.0
        if f(a) <= f(b):
            hi = b
        else:
            lo = a
    lam = 0.5 * (lo + hi)
    return f(lam), lam


def wald_E0N_lower(alpha: float, beta: float, d01: float) -> float:
    """Wald's lower bound on the expected sample size under the null."""
    for name, v in (("alpha", alpha), ("beta", beta)):
        if not 0.0 < v < 1.0:
            raise DomainError(f"{name} must lie in (0, 1), got {v}")
    _check_divergence("d01", d01)
    return (
        alpha * math.log(alpha / (1.0 - beta)) + (1.0 - alpha) * math.log((1.0 - alpha) / beta)
    ) / d01


def _check_rates(alpha, beta, n, s):
    for name, v in (("alpha", alpha), ("beta", beta)):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {v}")
    if not 0 <= s <= n:
        raise DomainError(f"need 0 <= s <= n, got n={n}, s={s}")


def fwer_union_upper(alpha: float, beta: float, n: int, s: int) -> float:
    """Union bound (n - s) alpha + s beta, not clamped to 1."""
    _check_rates(alpha, beta, n, s)
    return (n - s) * alpha + s * beta


def fwer_exp_lower(alpha: float, beta: float, n: int, s: int) -> float:
    """1 - exp(-beta s) exp(-alpha (n - s)), a lower bound on the exact FWER."""
    _check_rates(alpha, beta, n, s)
    return -math.expm1(-beta * s - alpha * (n - s))


def fwer_exact(alpha: float, beta: float, n: int, s: int) -> float:
    """1 - (1 - beta)^s (1 - alpha)^(n - s) for independent components."""
    _check_rates(alpha, beta, n, s)
    # log1p keeps tiny per-component rates from cancelling
    log_ok = 0.0
    for rate, count in ((beta, s), (alpha, n - s)):
        if count:
            if rate == 1.0:
                return 1.0
            log_ok += count * math.log1p(-rate)
    return -math.expm1(log_ok)


@dataclass(frozen=True)
class BoundReport:
    seq_lower_m: float
    st_sufficient_m: float
    nonseq_lower_m: float
    chernoff_minmax_m: float
    lambda_star: float
    d01: float
    d10: float


def bound_report(n: int, s: int, model: ModelSpec) -> BoundReport:
    d01, d10 = model.kl("d01"), model.kl("d10")
    m_star, lam = chernoff_minmax_m(n, s, model)
    return BoundReport(
        seq_lower_m=seq_lower_bound_m(s, d01),
        st_sufficient_m=st_sufficient_m(s, n, d01),
        nonseq_lower_m=nonseq_lower_bound_m(n, d10),
        chernoff_minmax_m=m_star,
        lambda_star=lam,
        d01=d01,
        d10=d10,
    )
