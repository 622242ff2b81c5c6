"""Support-recovery procedures: sequential thresholding, parallel SPRTs and
the fixed-sample threshold test.

Each procedure takes a problem instance (anything with ``n``, ``model`` and a
boolean ``is_alt`` mask), a config and an integer seed, and returns a
:class:`RecoveryResult`. Component ``i`` draws its observations from a
counter-based stream keyed on ``(seed, i, pass)``, see :mod:`.kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError
from .models import ModelSpec, null_quantile_gamma

if TYPE_CHECKING:
    from .harness import ProblemInstance


@dataclass(frozen=True)
class MeasurementLedger:
    per_component: np.ndarray
    total: int

    @classmethod
    def from_counts(cls, counts) -> MeasurementLedger:
        counts = np.asarray(counts, dtype=np.int64)
        return cls(counts, int(counts.sum()))


@dataclass(frozen=True)
class SeqThreshConfig:
    """Sequential thresholding: ``K`` passes of ``round(rho * m)`` samples each."""

    m: int
    rho: float = 0.5
    K: int = 1
    gamma_override: float | None = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError("m", f"must be a positive integer, got {self.m}")
        if not 0.5 <= self.rho < 1.0:
            raise ConfigError("rho", f"must lie in [1/2, 1), got {self.rho}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError("K", f"must be a positive integer, got {self.K}")

    @property
    def block_size(self) -> int:
        """round(rho * m), never below one."""
        return max(1, int(round(self.rho * self.m)))


@dataclass(frozen=True)
class SprtConfig:
    """Cumulative-LLR boundaries ``lower < 0 < upper`` and a step cap."""

    lower: float
    upper: float
    max_steps: int

    def __post_init__(self):
        if not self.lower < 0.0 < self.upper:
            raise ConfigError(
                "sprt boundaries", f"need lower < 0 < upper, got ({self.lower}, {self.upper})"
            )
        if int(self.max_steps) != self.max_steps or self.max_steps < 0:
            raise ConfigError("max_steps", f"must be a non-negative integer, got {self.max_steps}")


@dataclass(frozen=True)
class FixedSampleConfig:
    m: int
    gamma: float = 0.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError("m", f"must be a positive integer, got {self.m}")


ProcedureConfig = SeqThreshConfig | SprtConfig | FixedSampleConfig


@dataclass(frozen=True)
class RecoveryResult:
    estimated_support: np.ndarray
    ledger: MeasurementLedger
    passes_survived: np.ndarray | None = None
    # per-pass block statistics (sequential thresholding) or final cumulative
    # LLR (SPRT); kept for audits
    statistics: np.ndarray | None = field(default=None, repr=False)

    @property
    def support_set(self) -> frozenset[int]:
        return frozenset(int(i) for i in self.estimated_support)


def default_passes(n: int) -> int:
    """K = ceil(log n), at least one pass."""
    return max(1, math.ceil(math.log(n)))


def default_sprt_max_steps(n: int, model: ModelSpec) -> int:
    return 100 * math.ceil(math.log(max(n, 2)) / model.kl("d01"))


def wald_boundaries(alpha_target: float, beta_target: float) -> tuple[float, float]:
    """Wald's SPRT boundaries on the cumulative LLR for target error rates."""
    for name, v in (("alpha_target", alpha_target), ("beta_target", beta_target)):
        if not 0.0 < v < 1.0:
            raise DomainError(f"{name} must lie in (0, 1), got {v}")
    lower = math.log(beta_target / (1.0 - alpha_target))
    upper = math.log((1.0 - beta_target) / alpha_target)
    if not lower < 0.0 < upper:
        raise DomainError(
            f"degenerate targets ({alpha_target}, {beta_target}) give boundaries "
            f"({lower}, {upper}); need alpha + beta < 1"
        )
    return lower, upper


def resolve_gamma(model: ModelSpec, cfg: SeqThreshConfig) -> tuple[float, float]:
    """(gamma, rho_achieved) for a sequential-thresholding config.

    With ``gamma_override`` set, rho_achieved is the exact null elimination
    probability at the override.
    """
    if cfg.gamma_override is not None:
        gamma = float(cfg.gamma_override)
        return gamma, model.block_cdf(cfg.block_size, gamma, "null")
    return null_quantile_gamma(model, cfg.block_size, cfg.rho)


def run_sequential_thresholding(
    instance: ProblemInstance, cfg: SeqThreshConfig, seed: int
) -> RecoveryResult:
    """K passes; a component survives a pass iff its fresh block LLR > gamma."""
    model = instance.model
    gamma, _ = resolve_gamma(model, cfg)
    counts, survived, stats = kernels.threshold_passes(
        model.kind, model.kernel_params, instance.is_alt, seed, cfg.K, cfg.block_size, gamma
    )
    support = np.flatnonzero(survived == cfg.K)
    return RecoveryResult(support, MeasurementLedger.from_counts(counts), survived, stats)


def run_fixed_sample(
    instance: ProblemInstance, cfg: FixedSampleConfig, seed: int
) -> RecoveryResult:
    """m samples of every component; keep those whose block LLR > gamma."""
    model = instance.model
    counts, survived, stats = kernels.threshold_passes(
        model.kind, model.kernel_params, instance.is_alt, seed, 1, cfg.m, cfg.gamma
    )
    support = np.flatnonzero(survived == 1)
    return RecoveryResult(support, MeasurementLedger.from_counts(counts), None, stats[:, 0])


def run_parallel_sprt(instance: ProblemInstance, cfg: SprtConfig, seed: int) -> RecoveryResult:
    """Independent SPRT per component on the cumulative LLR.

    A walk that is still inside (lower, upper) after ``max_steps`` samples is
    declared active iff its LLR is strictly above the midpoint of the
    boundaries.
    """
    model = instance.model
    counts, llr = kernels.sprt(
        model.kind, model.kernel_params, instance.is_alt, seed, cfg.lower, cfg.upper, cfg.max_steps
    )
    active = np.where(
        llr >= cfg.upper,
        True,
        np.where(llr <= cfg.lower, False, llr > 0.5 * (cfg.lower + cfg.upper)),
    )
    return RecoveryResult(np.flatnonzero(active), MeasurementLedger.from_counts(counts), None, llr)


def run_procedure(instance: ProblemInstance, cfg: ProcedureConfig, seed: int) -> RecoveryResult:
    if isinstance(cfg, SeqThreshConfig):
        return run_sequential_thresholding(instance, cfg, seed)
    if isinstance(cfg, SprtConfig):
        return run_parallel_sprt(instance, cfg, seed)
    if isinstance(cfg, FixedSampleConfig):
        return run_fixed_sample(instance, cfg, seed)
    raise TypeError(f"unknown procedure config {type(cfg).__name__}")


def procedure_tag(cfg: ProcedureConfig) -> str:
    return {SeqThreshConfig: "st", SprtConfig: "sprt", FixedSampleConfig: "fixed"}[type(cfg)]


def component_observations(
    model: ModelSpec, alt: bool, seed: int, component: int, pass_index: int, count: int
) -> np.ndarray:
    """The observations a procedure draws for one component on one pass.

    SPRT and fixed-sample runs use ``pass_index=0``.
    """
    return kernels.observations(
        model.kind, model.kernel_params, alt, seed, component, pass_index, count
    )


def st_error_rates(model: ModelSpec, cfg: SeqThreshConfig) -> tuple[float, float]:
    """Exact per-component (alpha, beta) of sequential thresholding.

    Passes use independent blocks, so a null survives all K passes with
    probability P0(t > gamma)**K and an active component is missed with
    probability 1 - P1(t > gamma)**K.
    """
    gamma, _ = resolve_gamma(model, cfg)
    b = cfg.block_size
    keep0 = 1.0 - model.block_cdf(b, gamma, "null")
    keep1 = 1.0 - model.block_cdf(b, gamma, "alt")
    return keep0**cfg.K, 1.0 - keep1**cfg.K
