"""Problem instances, Monte Carlo estimation, budget audits, sweeps and the
exact-enumeration oracle for small Bernoulli problems.

Seeds: trial ``t`` under master seed ``M`` uses
``SeedSequence([M, t]).generate_state(2)`` as (instance seed, procedure
seed), so every trial is reproducible on its own and the aggregate does not
depend on how trials are split across workers.
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds
from .errors import ConfigError, DomainError, OracleOverflowError
from .models import BernoulliPair, GaussianShift, ModelSpec
from .procedures import (
    FixedSampleConfig,
    ProcedureConfig,
    SeqThreshConfig,
    SprtConfig,
    default_passes,
    procedure_tag,
    resolve_gamma,
    run_parallel_sprt,
    run_procedure,
    st_error_rates,
)

DEFAULT_MAX_STATES = 2**24
_ENUM_CHUNK = 1 << 16


@dataclass(frozen=True)
class ProblemInstance:
    n: int
    s: int
    support: np.ndarray
    model: ModelSpec
    seed: int

    @functools.cached_property
    def is_alt(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.support] = True
        return mask


def generate_instance(n: int, s: int, model: ModelSpec, seed: int) -> ProblemInstance:
    """Hidden support of size ``s`` drawn uniformly from ``range(n)``."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if not 0 <= s <= n:
        raise DomainError(f"need 0 <= s <= n, got n={n}, s={s}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(n, size=s, replace=False)).astype(np.int64)
    return ProblemInstance(n, s, support, model, int(seed))


def trial_seeds(master_seed: int, trial: int) -> tuple[int, int]:
    state = np.random.SeedSequence([int(master_seed), int(trial)]).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def model_echo(model: ModelSpec) -> dict:
    if isinstance(model, GaussianShift):
        return {"model": "gaussian", "theta": model.theta}
    return {"model": "bernoulli", "p0": model.p0, "p1": model.p1}


@dataclass(frozen=True)
class MonteCarloEstimate:
    alpha_hat: float | None
    beta_hat: float | None
    fwer_hat: float
    avg_measurements_per_dim: float
    trials: int
    alpha_se: float | None
    beta_se: float | None
    fwer_se: float
    avg_measurements_se: float
    false_positives: int
    false_negatives: int
    failures: int
    mean_total: float
    config: dict = field(default_factory=dict)

    @property
    def errors_per_trial(self) -> float:
        """Mean number of misclassified components, an upper bound on fwer_hat."""
        return (self.false_positives + self.false_negatives) / self.trials


def _run_chunk(cfg, n, s, model, master_seed, trials):
    fp = fn = failures = total = total_sq = 0
    for t in trials:
        iseed, pseed = trial_seeds(master_seed, t)
        inst = generate_instance(n, s, model, iseed)
        res = run_procedure(inst, cfg, pseed)
        declared = np.zeros(n, dtype=bool)
        declared[res.estimated_support] = True
        a = int(np.count_nonzero(declared & ~inst.is_alt))
        b = int(np.count_nonzero(~declared & inst.is_alt))
        fp += a
        fn += b
        failures += (a + b) > 0
        total += res.ledger.total
        total_sq += res.ledger.total ** 2
    return fp, fn, failures, total, total_sq


def _rate(count, size):
    if size == 0:
        return None, None
    p = count / size
    return p, math.sqrt(p * (1.0 - p) / size)


def run_trials(
    cfg: ProcedureConfig,
    n: int,
    s: int,
    model: ModelSpec,
    trials: int,
    master_seed: int,
    workers: int = 1,
) -> MonteCarloEstimate:
    """Monte Carlo estimate of alpha, beta, FWER and measurement usage.

    Each trial draws a fresh support. alpha and beta pool component counts
    over all trials; they are ``None`` when there are no null (resp. active)
    components.
    """
    if trials < 1:
        raise DomainError(f"trials must be positive, got {trials}")
    if not 0 <= s <= n:
        raise DomainError(f"need 0 <= s <= n, got n={n}, s={s}")
    workers = max(1, int(workers))
    chunks = [range(lo, trials, workers) for lo in range(min(workers, trials))]
    if workers == 1:
        parts = [_run_chunk(cfg, n, s, model, master_seed, chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda c: _run_chunk(cfg, n, s, model, master_seed, c), chunks)
            )
    fp, fn, failures, total, total_sq = (sum(col) for col in zip(*parts))

    alpha, alpha_se = _rate(fp, trials * (n - s))
    beta, beta_se = _rate(fn, trials * s)
    fwer, fwer_se = _rate(failures, trials)
    mean_total = total / trials
    var_total = max(total_sq / trials - mean_total**2, 0.0)
    echo = {"procedure": procedure_tag(cfg), "n": n, "s": s, "trials": trials,
            "seed": master_seed, **model_echo(model), **asdict(cfg)}
    return MonteCarloEstimate(
        alpha_hat=alpha,
        beta_hat=beta,
        fwer_hat=fwer,
        avg_measurements_per_dim=mean_total / n,
        trials=trials,
        alpha_se=alpha_se,
        beta_se=beta_se,
        fwer_se=fwer_se,
        avg_measurements_se=math.sqrt(var_total / trials) / n,
        false_positives=fp,
        false_negatives=fn,
        failures=failures,
        mean_total=mean_total,
        config=echo,
    )


# ---------------------------------------------------------------------------
# budget audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    mean_total: float
    bound: float
    allowed: float
    margin: float
    budget_ratio: float  # mean_total / (n m)


def budget_audit(
    estimate: MonteCarloEstimate,
    m: int,
    n: int,
    s: int,
    K: int = 1,
    rho_achieved: float = 1.0,
    tolerance: float = 0.0,
) -> AuditReport:
    """Check mean measurements against m(n - s) + m s K rho_achieved.

    With the defaults ``K=1, rho_achieved=1`` the bound is the plain budget
    ``n m``, which a fixed-sample run meets with equality.
    """
    bound = m * (n - s) + m * s * K * rho_achieved
    allowed = bound * (1.0 + tolerance)
    observed = estimate.mean_total
    return AuditReport(
        passed=observed <= allowed,
        mean_total=observed,
        bound=bound,
        allowed=allowed,
        margin=allowed - observed,
        budget_ratio=observed / (n * m),
    )


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    procedure: str
    n: int
    s: int
    model: ModelSpec
    m_grid: tuple[int, ...]
    trials: int
    master_seed: int
    rho: float = 0.5
    K: int | None = None
    gamma: float = 0.0
    tune: bool = False

    def __post_init__(self):
        if self.procedure not in ("st", "fixed"):
            raise ConfigError("procedure", "sweeps over m need procedure 'st' or 'fixed'")
        grid = tuple(int(m) for m in self.m_grid)
        if not grid:
            raise ConfigError("m_grid", "must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("m_grid", f"must be strictly increasing, got {grid}")
        object.__setattr__(self, "m_grid", grid)

    def config_for(self, m: int) -> ProcedureConfig:
        if self.procedure == "fixed":
            return FixedSampleConfig(m, self.gamma)
        if self.tune:
            return tune_sequential_thresholding(m, self.n, self.s, self.model)[0]
        return SeqThreshConfig(m, self.rho, self.K or default_passes(self.n))


@dataclass(frozen=True)
class SweepRow:
    m: int
    config: ProcedureConfig
    estimate: MonteCarloEstimate
    seq_lower_m: float | None
    st_sufficient_m: float | None
    nonseq_lower_m: float | None


def bound_annotations(n: int, s: int, model: ModelSpec) -> dict:
    """seq_lower_m, st_sufficient_m and nonseq_lower_m, ``None`` where undefined."""
    d01, d10 = model.kl("d01"), model.kl("d10")
    out = {}
    for key, fn in (
        ("seq_lower_m", lambda: bounds.seq_lower_bound_m(s, d01)),
        ("st_sufficient_m", lambda: bounds.st_sufficient_m(s, n, d01)),
        ("nonseq_lower_m", lambda: bounds.nonseq_lower_bound_m(n, d10)),
    ):
        try:
            out[key] = fn()
        except DomainError:
            out[key] = None
    return out


def sweep_m(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """One Monte Carlo estimate per grid value of m.

    Every grid point reuses the master seed, so points share supports and
    random streams (common random numbers).
    """
    notes = bound_annotations(spec.n, spec.s, spec.model)
    rows = []
    for m in spec.m_grid:
        cfg = spec.config_for(m)
        est = run_trials(cfg, spec.n, spec.s, spec.model, spec.trials, spec.master_seed, workers)
        rows.append(SweepRow(m, cfg, est, **notes))
    return rows


def tune_sequential_thresholding(
    m: int,
    n: int,
    s: int,
    model: ModelSpec,
    rho_grid=None,
    max_passes: int | None = None,
) -> tuple[SeqThreshConfig, float]:
    """(rho, K) minimising the exact predicted FWER at budget m.

    Uses the closed-form per-component rates from ``st_error_rates``. Needs
    the sparsity ``s``, which the procedure itself never uses.
    """
    if rho_grid is None:
        rho_grid = np.round(np.arange(0.5, 1.0, 0.01), 2)
    max_passes = max_passes or 4 * default_passes(n)
    best = None
    for rho in rho_grid:
        rho = float(rho)
        if round(rho * m) < 1:
            continue
        cfg = SeqThreshConfig(m, rho, 1)
        gamma, _ = resolve_gamma(model, cfg)
        keep0 = 1.0 - model.block_cdf(cfg.block_size, gamma, "null")
        keep1 = 1.0 - model.block_cdf(cfg.block_size, gamma, "alt")
        for K in range(1, max_passes + 1):
            fwer = bounds.fwer_exact(keep0**K, 1.0 - keep1**K, n, s)
            if best is None or fwer < best[0]:
                best = (fwer, rho, K)
    fwer, rho, K = best
    return SeqThreshConfig(m, rho, K), fwer


# ---------------------------------------------------------------------------
# rare-event block error estimation
# ---------------------------------------------------------------------------


def block_miss_probability(
    model: ModelSpec,
    block_size: int,
    gamma: float,
    blocks: int,
    seed: int,
    proposal_lambda: float | None = 1.0,
) -> tuple[float, float]:
    """Estimate P(t^(block_size) <= gamma | f1) from ``blocks`` simulated blocks.

    ``proposal_lambda=None`` samples f1 directly. Otherwise blocks come from
    the tilted law f_lambda and are reweighted by prod f1/f_lambda; the
    default lambda=1 samples the null, which keeps the relative error bounded
    as the miss probability decays exponentially in the block size.
    Returns ``(estimate, standard_error)``.
    """
    rng = np.random.default_rng(seed)
    if proposal_lambda is None:
        ys = model.sample("alt", rng, size=(blocks, block_size))
        w = (model.block_stat(ys, axis=1) <= gamma).astype(float)
    else:
        proposal = model.tilt(proposal_lambda)
        target = model.tilt(0.0)
        ys = proposal.sample(rng, size=(blocks, block_size))
        logw = np.sum(target.logpdf(ys) - proposal.logpdf(ys), axis=1)
        w = np.where(model.block_stat(ys, axis=1) <= gamma, np.exp(logw), 0.0)
    return float(w.mean()), float(w.std(ddof=1) / math.sqrt(blocks))


def match_sprt_boundaries(
    model: ModelSpec,
    alpha: float,
    beta: float,
    max_steps: int,
    seed: int,
    pilot: int = 200_000,
    rounds: int = 2,
    tol: float = 1e-3,
) -> SprtConfig:
    """SPRT boundaries whose pilot-simulated error rates sit at or just below
    (alpha, beta).

    Starts from Wald's boundaries and bisects the upper boundary against the
    null false-positive rate and the lower boundary against the miss rate,
    on fixed pilot streams so each rate is monotone in its boundary.
    """
    from .procedures import wald_boundaries

    null_inst = ProblemInstance(pilot, 0, np.empty(0, np.int64), model, 0)
    alt_inst = ProblemInstance(pilot, pilot, np.arange(pilot), model, 0)
    null_seed, alt_seed = trial_seeds(seed, 0)
    lower, upper = wald_boundaries(alpha, beta)

    def fp_rate(lo, up):
        r = run_parallel_sprt(null_inst, SprtConfig(lo, up, max_steps), null_seed)
        return r.estimated_support.size / pilot

    def miss_rate(lo, up):
        r = run_parallel_sprt(alt_inst, SprtConfig(lo, up, max_steps), alt_seed)
        return 1.0 - r.estimated_support.size / pilot

    for _ in range(rounds):
        a, b = 1e-6, 60.0
        while b - a > tol:
            mid = 0.5 * (a + b)
            if fp_rate(lower, mid) <= alpha:
                b = mid
            else:
                a = mid
        upper = b
        a, b = -60.0, -1e-6
        while b - a > tol:
            mid = 0.5 * (a + b)
            if miss_rate(mid, upper) <= beta:
                a = mid
            else:
                b = mid
        lower = a
    return SprtConfig(lower, upper, max_steps)


# ---------------------------------------------------------------------------
# exact enumeration oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactErrors:
    alpha: float | None
    beta: float | None
    fwer: float
    expected_measurements: float  # total over all n components
    expected_measurements_per_dim: float
    states: int


def _sequence_length(cfg: ProcedureConfig) -> int:
    if isinstance(cfg, SeqThreshConfig):
        return cfg.K * cfg.block_size
    if isinstance(cfg, FixedSampleConfig):
        return cfg.m
    return cfg.max_steps


def _decide(cfg: ProcedureConfig, model: BernoulliPair, bits: np.ndarray):
    """Decision and measurement count for each row of observation bits."""
    rows = bits.shape[0]
    if isinstance(cfg, SeqThreshConfig):
        gamma, _ = resolve_gamma(model, cfg)
        b = cfg.block_size
        alive = np.ones(rows, dtype=bool)
        used = np.zeros(rows, dtype=np.int64)
        for k in range(cfg.K):
            used += b * alive
            t = model.block_stat(bits[:, k * b : (k + 1) * b], axis=1)
            alive &= t > gamma
        return alive, used
    if isinstance(cfg, FixedSampleConfig):
        t = model.block_stat(bits, axis=1)
        return t > cfg.gamma, np.full(rows, cfg.m, dtype=np.int64)
    lam = np.zeros(rows)
    running = np.ones(rows, dtype=bool)
    used = np.zeros(rows, dtype=np.int64)
    for j in range(cfg.max_steps):
        lam = np.where(running, lam + model.llr(bits[:, j]), lam)
        used += running
        running &= (cfg.lower < lam) & (lam < cfg.upper)
    mid = 0.5 * (cfg.lower + cfg.upper)
    active = np.where(lam >= cfg.upper, True, np.where(lam <= cfg.lower, False, lam > mid))
    return active, used


def _bit_rows(start: int, stop: int, length: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return (codes[:, None] >> np.arange(length, dtype=np.int64)) & 1


def _component_exact(cfg, model: BernoulliPair, hypothesis: str):
    length = _sequence_length(cfg)
    p = model.prob_one(hypothesis)
    p_active = 0.0
    e_used = 0.0
    for start in range(0, 2**length, _ENUM_CHUNK):
        bits = _bit_rows(start, min(start + _ENUM_CHUNK, 2**length), length)
        ones = bits.sum(axis=1)
        prob = p**ones * (1.0 - p) ** (length - ones)
        active, used = _decide(cfg, model, bits)
        p_active += float(np.sum(prob[active]))
        e_used += float(np.sum(prob * used))
    return p_active, e_used


def _require_bernoulli(model):
    if not isinstance(model, BernoulliPair):
        raise DomainError("exact enumeration needs a BernoulliPair model")


def enumerate_exact(
    cfg: ProcedureConfig,
    n: int,
    s: int,
    model: BernoulliPair,
    max_states: int = DEFAULT_MAX_STATES,
) -> ExactErrors:
    """Exact per-component error rates by summing over every outcome sequence.

    Components are independent, so enumerating one null and one active
    component suffices; FWER = 1 - (1 - beta)^s (1 - alpha)^(n - s).
    """
    _require_bernoulli(model)
    if not 0 <= s <= n:
        raise DomainError(f"need 0 <= s <= n, got n={n}, s={s}")
    states = 2 ** _sequence_length(cfg)
    if states > max_states:
        raise OracleOverflowError(states, max_states)
    alpha, e0 = _component_exact(cfg, model, "null")
    hit, e1 = _component_exact(cfg, model, "alt")
    beta = 1.0 - hit
    fwer = 1.0 - (1.0 - beta) ** s * (1.0 - alpha) ** (n - s)
    total = (n - s) * e0 + s * e1
    return ExactErrors(
        alpha=alpha if s < n else None,
        beta=beta if s > 0 else None,
        fwer=fwer,
        expected_measurements=total,
        expected_measurements_per_dim=total / n,
        states=states,
    )


def enumerate_joint_fwer(
    cfg: ProcedureConfig,
    n: int,
    s: int,
    model: BernoulliPair,
    max_states: int = DEFAULT_MAX_STATES,
) -> float:
    """P(estimated support != support) by enumerating all components jointly.

    Exponential in n; meant for cross-checking the product formula on tiny
    problems. Components ``0..s-1`` are taken as the active ones.
    """
    _require_bernoulli(model)
    length = _sequence_length(cfg)
    width = n * length
    states = 2**width
    if states > max_states:
        raise OracleOverflowError(states, max_states)
    probs_one = np.array([model.p1 if i < s else model.p0 for i in range(n)])
    fail = 0.0
    for start in range(0, states, _ENUM_CHUNK):
        bits = _bit_rows(start, min(start + _ENUM_CHUNK, states), width)
        prob = np.ones(bits.shape[0])
        wrong = np.zeros(bits.shape[0], dtype=bool)
        for i in range(n):
            block = bits[:, i * length : (i + 1) * length]
            ones = block.sum(axis=1)
            prob *= probs_one[i] ** ones * (1.0 - probs_one[i]) ** (length - ones)
            active, _ = _decide(cfg, model, block)
            wrong |= active != (i < s)
        fail += float(np.sum(prob[wrong]))
    return fail
