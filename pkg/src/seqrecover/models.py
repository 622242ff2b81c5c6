"""Observation models: the null/alternative pair, LLRs, divergences, tilting.

Two built-in pairs are provided, a unit-variance Gaussian mean shift and a
pair of Bernoulli laws. Each exposes the same small interface (``sample``,
``llr``, ``block_stat``, ``kl``, ``tilt``, ``block_cdf``, ``null_quantile``)
which the procedures and bounds consume. All logarithms are natural.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special, stats

from . import kernels
from .errors import DomainError

Hypothesis = Literal["null", "alt"]
Direction = Literal["d01", "d10"]

# Bernoulli quantile: cumulative mass within this of rho counts as reaching it.
_CDF_TOL = 1e-12


def _check_hypothesis(hypothesis):
    if hypothesis not in ("null", "alt"):
        raise DomainError(f"hypothesis must be 'null' or 'alt', got {hypothesis!r}")


def _check_lambda(lam):
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")


@dataclass(frozen=True)
class GaussianShift:
    """f0 = N(0, 1), f1 = N(theta, 1)."""

    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise DomainError(f"theta must be a finite positive real, got {self.theta}")

    kind = kernels.GAUSSIAN

    @property
    def kernel_params(self) -> np.ndarray:
        return np.array([self.theta, 0.5 * self.theta * self.theta, 0.0, 0.0])

    def mean(self, hypothesis: Hypothesis) -> float:
        _check_hypothesis(hypothesis)
        return self.theta if hypothesis == "alt" else 0.0

    def sample(self, hypothesis: Hypothesis, rng: np.random.Generator, size=None):
        return rng.normal(self.mean(hypothesis), 1.0, size=size)

    def llr(self, y):
        return self.theta * np.asarray(y, dtype=float) - 0.5 * self.theta**2

    def block_stat(self, ys, axis=-1):
        ys = np.asarray(ys, dtype=float)
        return self.theta * ys.mean(axis=axis) - 0.5 * self.theta**2

    def kl(self, direction: Direction) -> float:
        if direction not in ("d01", "d10"):
            raise DomainError(f"direction must be 'd01' or 'd10', got {direction!r}")
        return 0.5 * self.theta**2

    def tilt(self, lam: float) -> TiltedModel:
        _check_lambda(lam)
        return TiltedModel(self, lam)

    def tilted_divergences(self, lam: float) -> tuple[float, float]:
        _check_lambda(lam)
        half = 0.5 * self.theta**2
        return (1.0 - lam) ** 2 * half, lam**2 * half

    def block_cdf(self, block_size: int, x: float, hypothesis: Hypothesis) -> float:
        """P(t^(block_size) <= x) under the given hypothesis."""
        _check_hypothesis(hypothesis)
        half = 0.5 * self.theta**2
        centre = half if hypothesis == "alt" else -half
        scale = self.theta / math.sqrt(block_size)
        return float(special.ndtr((x - centre) / scale))

    def null_quantile(self, block_size: int, rho: float) -> tuple[float, float]:
        scale = self.theta / math.sqrt(block_size)
        return -0.5 * self.theta**2 + scale * float(special.ndtri(rho)), rho


@dataclass(frozen=True)
class BernoulliPair:
    """f0 = Bernoulli(p0), f1 = Bernoulli(p1)."""

    p0: float
    p1: float

    def __post_init__(self):
        for name, p in (("p0", self.p0), ("p1", self.p1)):
            if not 0.0 < p < 1.0:
                raise DomainError(f"{name} must lie strictly inside (0, 1), got {p}")
        if self.p0 == self.p1:
            raise DomainError("p0 and p1 must differ")

    kind = kernels.BERNOULLI

    @property
    def llr_values(self) -> tuple[float, float]:
        """(llr(0), llr(1))."""
        return (
            math.log((1.0 - self.p1) / (1.0 - self.p0)),
            math.log(self.p1 / self.p0),
        )

    @property
    def kernel_params(self) -> np.ndarray:
        l0, l1 = self.llr_values
        return np.array([self.p0, self.p1, l0, l1])

    def prob_one(self, hypothesis: Hypothesis) -> float:
        _check_hypothesis(hypothesis)
        return self.p1 if hypothesis == "alt" else self.p0

    def sample(self, hypothesis: Hypothesis, rng: np.random.Generator, size=None):
        draws = rng.random(size=size) < self.prob_one(hypothesis)
        return np.asarray(draws, dtype=np.int64)[()]

    def _as_bits(self, y) -> np.ndarray:
        y = np.asarray(y)
        if not np.all((y == 0) | (y == 1)):
            raise DomainError("Bernoulli observations must be 0 or 1")
        return y.astype(float)

    def llr(self, y):
        l0, l1 = self.llr_values
        return np.where(self._as_bits(y) > 0.5, l1, l0)[()]

    def count_stat(self, ones, block_size):
        """Block statistic as a function of the number of ones.

        Same arithmetic as the kernels, so ties with a quantile computed here
        resolve identically during simulation.
        """
        l0, l1 = self.llr_values
        ones = np.asarray(ones, dtype=float)
        return ((ones * l1 + (block_size - ones) * l0) / block_size)[()]

    def block_stat(self, ys, axis=-1):
        bits = self._as_bits(ys)
        return self.count_stat(bits.sum(axis=axis), bits.shape[axis])

    def kl(self, direction: Direction) -> float:
        if direction == "d01":
            a, b = self.p0, self.p1
        elif direction == "d10":
            a, b = self.p1, self.p0
        else:
            raise DomainError(f"direction must be 'd01' or 'd10', got {direction!r}")
        return a * math.log(a / b) + (1.0 - a) * math.log((1.0 - a) / (1.0 - b))

    def tilt(self, lam: float) -> TiltedModel:
        _check_lambda(lam)
        return TiltedModel(self, lam)

    def tilted_divergences(self, lam: float) -> tuple[float, float]:
        q = self.tilt(lam).prob_one
        return _binary_kl(q, self.p0), _binary_kl(q, self.p1)

    def _block_table(self, block_size: int, hypothesis: Hypothesis):
        b = block_size
        ones = np.arange(b + 1)
        p = self.prob_one(hypothesis)
        pmf = np.array([math.comb(b, c) * p**c * (1.0 - p) ** (b - c) for c in ones])
        return self.count_stat(ones, b), pmf

    def block_cdf(self, block_size: int, x: float, hypothesis: Hypothesis) -> float:
        t, pmf = self._block_table(block_size, hypothesis)
        return float(np.sum(pmf[t <= x]))

    def null_quantile(self, block_size: int, rho: float) -> tuple[float, float]:
        t, pmf = self._block_table(block_size, "null")
        order = np.argsort(t, kind="stable")
        cdf = np.cumsum(pmf[order])
        idx = int(np.searchsorted(cdf, rho - _CDF_TOL, side="left"))
        idx = min(idx, len(cdf) - 1)
        return float(t[order][idx]), float(min(cdf[idx], 1.0))


ModelSpec = GaussianShift | BernoulliPair


def _binary_kl(a: float, b: float) -> float:
    total = 0.0
    if a > 0:
        total += a * math.log(a / b)
    if a < 1:
        total += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return total


@dataclass(frozen=True)
class TiltedModel:
    """Normalised geometric mixture f0**lam * f1**(1 - lam) / Z.

    ``lam = 0`` is the alternative, ``lam = 1`` the null.
    """

    base: ModelSpec
    lam: float

    def __post_init__(self):
        _check_lambda(self.lam)

    @property
    def mean(self) -> float:
        """Gaussian base only: the tilted law is N((1 - lam) * theta, 1)."""
        return (1.0 - self.lam) * self.base.theta

    @property
    def prob_one(self) -> float:
        """Bernoulli base only: tilted P(y = 1)."""
        p0, p1, lam = self.base.p0, self.base.p1, self.lam
        w1 = p0**lam * p1 ** (1.0 - lam)
        w0 = (1.0 - p0) ** lam * (1.0 - p1) ** (1.0 - lam)
        return w1 / (w0 + w1)

    def pdf(self, y):
        if isinstance(self.base, GaussianShift):
            return stats.norm.pdf(y, loc=self.mean)
        q = self.prob_one
        return np.where(self.base._as_bits(y) > 0.5, q, 1.0 - q)[()]

    def logpdf(self, y):
        if isinstance(self.base, GaussianShift):
            return stats.norm.logpdf(y, loc=self.mean)
        q = self.prob_one
        return np.where(self.base._as_bits(y) > 0.5, math.log(q), math.log1p(-q))[()]

    def sample(self, rng: np.random.Generator, size=None):
        if isinstance(self.base, GaussianShift):
            return rng.normal(self.mean, 1.0, size=size)
        return (rng.random(size=size) < self.prob_one).astype(np.int64)

    def total_mass(self) -> float:
        if isinstance(self.base, GaussianShift):
            from scipy import integrate

            lo, hi = self.mean - 12.0, self.mean + 12.0
            return integrate.quad(self.pdf, lo, hi, epsabs=1e-12)[0]
        q = self.prob_one
        return q + (1.0 - q)


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def sample(model: ModelSpec, hypothesis: Hypothesis, rng: np.random.Generator):
    """One i.i.d. draw from f0 (``"null"``) or f1 (``"alt"``)."""
    return model.sample(hypothesis, rng)


def llr(model: ModelSpec, y) -> float:
    """log f1(y) / f0(y)."""
    return model.llr(y)


def block_llr(model: ModelSpec, ys) -> float:
    """Normalised LLR of a block: the mean of ``llr`` over ``ys``."""
    ys = np.asarray(ys)
    if ys.ndim != 1 or ys.size == 0:
        raise DomainError("block_llr needs a non-empty one-dimensional sequence")
    return float(model.block_stat(ys))


def kl_divergence(model: ModelSpec, direction: Direction) -> float:
    """``"d01"`` gives D(f0||f1), ``"d10"`` gives D(f1||f0)."""
    return model.kl(direction)


def tilt(model: ModelSpec, lam: float) -> TiltedModel:
    return model.tilt(lam)


def tilted_divergences(model: ModelSpec, lam: float) -> tuple[float, float]:
    """(D(f_lam||f0), D(f_lam||f1))."""
    return model.tilted_divergences(lam)


@functools.lru_cache(maxsize=1024)
def null_quantile_gamma(model: ModelSpec, block_size: int, rho: float) -> tuple[float, float]:
    """Smallest gamma with P(t^(block_size) <= gamma | f0) >= rho.

    Returns ``(gamma, rho_achieved)``. For the Gaussian pair the achieved
    level equals ``rho``; for Bernoulli it is the exact null mass at or
    below gamma, which can exceed ``rho``.
    """
    if not 0.5 <= rho < 1.0:
        raise DomainError(f"rho must lie in [1/2, 1), got {rho}")
    if int(block_size) != block_size or block_size < 1:
        raise DomainError(f"block_size must be a positive integer, got {block_size}")
    return model.null_quantile(int(block_size), float(rho))
