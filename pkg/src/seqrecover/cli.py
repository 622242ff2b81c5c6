"""Command-line front end.

    seqrecover bounds --model gaussian --theta 2 --n 10000 --s 10
    seqrecover run --procedure st --model gaussian --theta 1 --n 4096 --s 8 \\
        --m 16 --trials 500 --seed 1 --out run.csv
    seqrecover sweep --procedure st --tune --m-grid 2,4,8,16 ... --seed 1
    seqrecover audit --procedure st --m 8 --K 12 ... --seed 1
    seqrecover oracle --procedure st --model bernoulli --p0 0.2 --p1 0.8 ...

Every option can also come from a ``--config`` file of ``key = value`` lines
whose keys are the flag names without the leading dashes. Flags override the
file, which overrides the defaults.

Exit codes: 0 success, 1 budget audit failed, 2 configuration error,
3 domain error, 4 I/O error, 5 oracle refused (state space too large).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field, fields, replace

from . import bounds
from .errors import ConfigError, DomainError, OracleOverflowError
from .harness import (
    SweepSpec,
    bound_annotations,
    budget_audit,
    enumerate_exact,
    run_trials,
    sweep_m,
    tune_sequential_thresholding,
)
from .models import BernoulliPair, GaussianShift
from .procedures import (
    FixedSampleConfig,
    SeqThreshConfig,
    SprtConfig,
    default_passes,
    default_sprt_max_steps,
    resolve_gamma,
    wald_boundaries,
)

EXIT_OK = 0
EXIT_AUDIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_IO = 4
EXIT_ORACLE = 5

SUBCOMMANDS = ("bounds", "run", "sweep", "audit", "oracle")
PROCEDURES = ("st", "sprt", "fixed")

CSV_COLUMNS = (
    "procedure", "n", "s", "m", "rho", "K", "trials", "seed",
    "alpha_hat", "alpha_se", "beta_hat", "beta_se", "fwer_hat", "fwer_se",
    "avg_meas_per_dim", "seq_lower_m", "st_sufficient_m", "nonseq_lower_m",
)  # fmt: skip


def _bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _grid(text) -> tuple[int, ...]:
    if isinstance(text, tuple):
        return text
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    model: str = "gaussian"
    theta: float | None = None
    p0: float | None = None
    p1: float | None = None
    n: int | None = None
    s: int | None = None
    procedure: str | None = None
    m: int | None = None
    m_grid: tuple[int, ...] | None = None
    rho: float | None = None
    K: int | None = None
    gamma: float | None = None
    tune: bool | None = None
    alpha_target: float | None = None
    beta_target: float | None = None
    A: float | None = None
    B: float | None = None
    max_steps: int | None = None
    trials: int | None = None
    seed: int | None = None
    tolerance: float | None = None
    format: str = "csv"
    # execution settings: never change results, so excluded from equality
    # and from the echoed header
    workers: int = field(default=1, compare=False)
    out: str | None = field(default=None, compare=False)

    def model_spec(self):
        if self.model == "gaussian":
            return GaussianShift(self.theta)
        return BernoulliPair(self.p0, self.p1)

    def procedure_config(self, m: int | None = None):
        m = self.m if m is None else m
        if self.procedure == "st":
            return SeqThreshConfig(m, self.rho, self.K)
        if self.procedure == "fixed":
            return FixedSampleConfig(m, self.gamma)
        return SprtConfig(self.A, self.B, self.max_steps)


# key -> (converter, flag help)
_FIELDS = {
    "subcommand": (str, None),
    "model": (str, "observation model: gaussian or bernoulli"),
    "theta": (float, "Gaussian mean shift under the alternative"),
    "p0": (float, "Bernoulli success probability under the null"),
    "p1": (float, "Bernoulli success probability under the alternative"),
    "n": (int, "dimension"),
    "s": (int, "sparsity"),
    "procedure": (str, "st, sprt or fixed"),
    "m": (int, "measurement budget per dimension"),
    "m_grid": (_grid, "comma-separated increasing m values (sweep)"),
    "rho": (float, "null elimination probability per pass, in [1/2, 1) (st)"),
    "K": (int, "number of passes (st); default ceil(log n)"),
    "gamma": (float, "threshold on the block LLR (fixed)"),
    "tune": (_bool, "pick rho and K minimising the predicted FWER (st)"),
    "alpha_target": (float, "SPRT target false-positive rate"),
    "beta_target": (float, "SPRT target false-negative rate"),
    "A": (float, "SPRT lower boundary on the cumulative LLR"),
    "B": (float, "SPRT upper boundary on the cumulative LLR"),
    "max_steps": (int, "SPRT truncation length"),
    "trials": (int, "Monte Carlo trials per point"),
    "seed": (int, "master seed"),
    "tolerance": (float, "relative slack for the budget audit"),
    "format": (str, "csv or text"),
    "workers": (int, "worker threads for trials"),
    "out": (str, "output path ('-' for stdout)"),
}

_ST_ONLY = ("rho", "K", "tune")
_SPRT_ONLY = ("alpha_target", "beta_target", "A", "B", "max_steps")


def _flag(key: str) -> str:
    return key.replace("_", "-")


def _key(name: str) -> str:
    return name.strip().replace("-", "_")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("argv", message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="seqrecover",
        description="Sparse support recovery: sequential thresholding, SPRTs, bounds.",
        argument_default=argparse.SUPPRESS,
    )
    # explicit None: argparse would otherwise check the SUPPRESS sentinel against choices
    parser.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS, default=None)
    parser.add_argument("--config", help="key = value file; flags take precedence")
    for key, (_, text) in _FIELDS.items():
        if key == "subcommand":
            continue
        if key == "tune":
            parser.add_argument("--tune", action="store_const", const=True, help=text)
            continue
        parser.add_argument(f"--{_flag(key)}", dest=key, help=text)
    return parser


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines. Blank lines and ``#`` comments are skipped."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        name, value = line.split("=", 1)
        key = _key(name)
        if key not in _FIELDS:
            raise ConfigError(key, "unknown key")
        values[key] = value.strip()
    return values


def _convert(values: dict) -> dict:
    out = {}
    for key, raw in values.items():
        if raw is None:
            continue
        conv = _FIELDS[key][0]
        try:
            out[key] = conv(raw)
        except (TypeError, ValueError):
            raise ConfigError(key, f"cannot parse {raw!r}") from None
    return out


def _require(values: dict, *keys):
    for key in keys:
        if values.get(key) is None:
            raise ConfigError(key, "missing required field")


def _resolve(values: dict) -> RunConfig:
    sub = values.get("subcommand")
    if sub is None:
        raise ConfigError("subcommand", "missing required field")
    if sub not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}")
    model = values.setdefault("model", "gaussian")
    if model == "gaussian":
        _require(values, "theta")
        for key in ("p0", "p1"):
            if key in values:
                raise ConfigError(key, "only applies to model bernoulli")
    elif model == "bernoulli":
        _require(values, "p0", "p1")
        if "theta" in values:
            raise ConfigError("theta", "only applies to model gaussian")
    else:
        raise ConfigError("model", f"must be gaussian or bernoulli, got {model!r}")
    fmt = values.setdefault("format", "csv")
    if fmt not in ("csv", "text"):
        raise ConfigError("format", f"must be csv or text, got {fmt!r}")
    _require(values, "n", "s")
    n, s = values["n"], values["s"]
    if n < 1:
        raise ConfigError("n", f"must be positive, got {n}")
    if not 0 <= s <= n:
        raise ConfigError("s", f"must lie in [0, n], got {s}")
    if values.get("workers", 1) < 1:
        raise ConfigError("workers", "must be at least 1")

    if sub == "bounds":
        extra = sorted(k for k in values if k not in ("subcommand", "model", "theta", "p0", "p1",
                                                       "n", "s", "format", "workers", "out"))
        if extra:
            raise ConfigError(extra[0], "not used by the bounds subcommand")
        return RunConfig(**values)

    proc = values.setdefault("procedure", "st")
    if proc not in PROCEDURES:
        raise ConfigError("procedure", f"must be one of {', '.join(PROCEDURES)}")
    for key in _ST_ONLY:
        if key in values and proc != "st":
            raise ConfigError(key, "only applies to procedure st")
    for key in _SPRT_ONLY:
        if key in values and proc != "sprt":
            raise ConfigError(key, "only applies to procedure sprt")
    if "gamma" in values and proc == "sprt":
        raise ConfigError("gamma", "does not apply to procedure sprt")
    if "tolerance" in values and sub != "audit":
        raise ConfigError("tolerance", "only applies to the audit subcommand")
    if sub != "oracle":
        _require(values, "seed")
        if values["seed"] < 0:
            raise ConfigError("seed", "must be non-negative")
        values.setdefault("trials", 500)
        if values["trials"] < 1:
            raise ConfigError("trials", "must be positive")
    elif "trials" in values or "seed" in values:
        raise ConfigError("trials" if "trials" in values else "seed", "oracle is exact; drop it")

    if sub == "sweep":
        if proc == "sprt":
            raise ConfigError("procedure", "sweeps over m need procedure st or fixed")
        _require(values, "m_grid")
        if "m" in values:
            raise ConfigError("m", "use m_grid with sweep")
        grid = values["m_grid"]
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ConfigError("m_grid", f"must be non-empty, positive, strictly increasing: {grid}")
    else:
        if "m_grid" in values:
            raise ConfigError("m_grid", "only applies to the sweep subcommand")
        if proc == "sprt":
            if "m" in values:
                raise ConfigError("m", "does not apply to procedure sprt")
        else:
            _require(values, "m")
            if values["m"] < 1:
                raise ConfigError("m", "must be positive")

    if proc == "st":
        values.setdefault("tune", False)
        if values["tune"]:
            if sub not in ("sweep", "run"):
                raise ConfigError("tune", "only applies to run and sweep")
            if "rho" in values or "K" in values:
                raise ConfigError("tune", "cannot be combined with explicit rho or K")
        else:
            values.setdefault("rho", 0.5)
            values.setdefault("K", default_passes(n))
            if not 0.5 <= values["rho"] < 1.0:
                raise ConfigError("rho", f"must lie in [1/2, 1), got {values['rho']}")
            if values["K"] < 1:
                raise ConfigError("K", "must be positive")
    elif proc == "fixed":
        values.setdefault("gamma", 0.0)
    else:
        explicit = "A" in values or "B" in values
        targets = "alpha_target" in values or "beta_target" in values
        if explicit:
            _require(values, "A", "B")
        if targets or not explicit:
            values.setdefault("alpha_target", 0.01)
            values.setdefault("beta_target", 0.01)
            try:
                wald = wald_boundaries(values["alpha_target"], values["beta_target"])
            except DomainError as exc:
                raise ConfigError("alpha_target", str(exc)) from None
            # an echoed config carries both; accept them only if they agree
            if explicit and (values["A"], values["B"]) != wald:
                raise ConfigError("A", "give either explicit boundaries or error targets, not both")
            values["A"], values["B"] = wald
        if not values["A"] < 0 < values["B"]:
            raise ConfigError("A", "need A < 0 < B")
        if "max_steps" not in values:
            try:
                values["max_steps"] = default_sprt_max_steps(n, _model_of(values))
            except DomainError as exc:
                raise ConfigError("model", str(exc)) from None
        if values["max_steps"] < 0:
            raise ConfigError("max_steps", "must be non-negative")
    if sub == "audit":
        values.setdefault("tolerance", 0.0)
        if proc == "sprt":
            raise ConfigError("procedure", "audit needs procedure st or fixed")
    if sub == "oracle" and model != "bernoulli":
        raise ConfigError("model", "oracle needs model bernoulli")
    return RunConfig(**values)


def _model_of(values):
    if values["model"] == "gaussian":
        return GaussianShift(values["theta"])
    return BernoulliPair(values["p0"], values["p1"])


def parse_config(argv=None, config_text: str | None = None) -> RunConfig:
    """Resolve a RunConfig from flags, an optional config file and defaults.

    ``config_text`` is used when given; otherwise ``--config PATH`` is read.
    """
    ns = vars(build_parser().parse_args([] if argv is None else list(argv)))
    path = ns.pop("config", None)
    if config_text is None and path is not None:
        try:
            with open(path) as fh:
                config_text = fh.read()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    from_file = _convert(parse_config_text(config_text or ""))
    from_flags = _convert(ns)
    values = {**from_file, **from_flags}
    try:
        return _resolve(values)
    except DomainError as exc:
        raise ConfigError("model", str(exc)) from None


def format_config(cfg: RunConfig) -> str:
    """``key = value`` lines for every resolved, result-affecting field."""
    lines = []
    for f in fields(cfg):
        if not f.compare:
            continue
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{_flag(f.name)} = {value}")
    return "\n".join(lines) + "\n"


def config_from_output(text: str) -> RunConfig:
    """Recover the RunConfig echoed in the header of an output file."""
    echoed = [line[2:] for line in text.splitlines() if line.startswith("# ")]
    return parse_config(config_text="\n".join(echoed))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def emit_results(records, fmt: str = "csv", destination=None, config: RunConfig | None = None):
    """Write records as CSV (fixed column order) or ``key = value`` text.

    ``destination`` is a path, ``"-"``/``None`` for stdout, or a writable
    text stream. The resolved config, if given, is echoed as ``# `` lines.
    """
    buf = io.StringIO()
    if config is not None:
        for line in format_config(config).splitlines():
            buf.write(f"# {line}\n")
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(rec.get(col)) for col in CSV_COLUMNS])
    elif fmt == "text":
        for i, rec in enumerate(records, 1):
            buf.write(f"[record {i}]\n")
            keys = list(CSV_COLUMNS) + [k for k in rec if k not in CSV_COLUMNS]
            for key in keys:
                buf.write(f"{key} = {_fmt(rec.get(key))}\n")
    else:
        raise ConfigError("format", f"must be csv or text, got {fmt!r}")
    text = buf.getvalue()
    if destination is None or destination == "-":
        sys.stdout.write(text)
    elif hasattr(destination, "write"):
        destination.write(text)
    else:
        try:
            with open(destination, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(exc.errno, f"cannot write results to {destination}: {exc.strerror}")


def _estimate_record(cfg: RunConfig, proc_cfg, est, m, notes) -> dict:
    rec = {
        "procedure": cfg.procedure,
        "n": cfg.n,
        "s": cfg.s,
        "m": m,
        "rho": getattr(proc_cfg, "rho", None),
        "K": getattr(proc_cfg, "K", None),
        "trials": est.trials,
        "seed": cfg.seed,
        "alpha_hat": est.alpha_hat,
        "alpha_se": est.alpha_se,
        "beta_hat": est.beta_hat,
        "beta_se": est.beta_se,
        "fwer_hat": est.fwer_hat,
        "fwer_se": est.fwer_se,
        "avg_meas_per_dim": est.avg_measurements_per_dim,
        **notes,
    }
    if isinstance(proc_cfg, SprtConfig):
        rec.update(A=proc_cfg.lower, B=proc_cfg.upper, max_steps=proc_cfg.max_steps)
    return rec


def _run_bounds(cfg: RunConfig) -> list[dict]:
    report = bounds.bound_report(cfg.n, cfg.s, cfg.model_spec())
    return [{
        "procedure": "bounds",
        "n": cfg.n,
        "s": cfg.s,
        "seq_lower_m": report.seq_lower_m,
        "st_sufficient_m": report.st_sufficient_m,
        "nonseq_lower_m": report.nonseq_lower_m,
        "chernoff_minmax_m": report.chernoff_minmax_m,
        "lambda_star": report.lambda_star,
        "d01": report.d01,
        "d10": report.d10,
    }]  # fmt: skip


def _run_run(cfg: RunConfig) -> list[dict]:
    model = cfg.model_spec()
    if cfg.procedure == "st" and cfg.tune:
        proc_cfg, _ = tune_sequential_thresholding(cfg.m, cfg.n, cfg.s, model)
    else:
        proc_cfg = cfg.procedure_config()
    est = run_trials(proc_cfg, cfg.n, cfg.s, model, cfg.trials, cfg.seed, cfg.workers)
    return [_estimate_record(cfg, proc_cfg, est, cfg.m, bound_annotations(cfg.n, cfg.s, model))]


def _run_sweep(cfg: RunConfig) -> list[dict]:
    spec = SweepSpec(
        procedure=cfg.procedure,
        n=cfg.n,
        s=cfg.s,
        model=cfg.model_spec(),
        m_grid=cfg.m_grid,
        trials=cfg.trials,
        master_seed=cfg.seed,
        rho=cfg.rho if cfg.rho is not None else 0.5,
        K=cfg.K,
        gamma=cfg.gamma if cfg.gamma is not None else 0.0,
        tune=bool(cfg.tune),
    )
    rows = sweep_m(spec, cfg.workers)
    notes = bound_annotations(cfg.n, cfg.s, spec.model)
    return [_estimate_record(cfg, row.config, row.estimate, row.m, notes) for row in rows]


def _run_audit(cfg: RunConfig) -> tuple[list[dict], bool]:
    model = cfg.model_spec()
    proc_cfg = cfg.procedure_config()
    est = run_trials(proc_cfg, cfg.n, cfg.s, model, cfg.trials, cfg.seed, cfg.workers)
    if isinstance(proc_cfg, SeqThreshConfig):
        _, rho_achieved = resolve_gamma(model, proc_cfg)
        report = budget_audit(est, cfg.m, cfg.n, cfg.s, proc_cfg.K, rho_achieved, cfg.tolerance)
    else:
        report = budget_audit(est, cfg.m, cfg.n, cfg.s, tolerance=cfg.tolerance)
    rec = _estimate_record(cfg, proc_cfg, est, cfg.m, bound_annotations(cfg.n, cfg.s, model))
    rec.update(
        audit_passed=report.passed,
        audit_mean_total=report.mean_total,
        audit_bound=report.bound,
        audit_allowed=report.allowed,
        audit_margin=report.margin,
        audit_budget_ratio=report.budget_ratio,
    )
    return [rec], report.passed


def _run_oracle(cfg: RunConfig) -> list[dict]:
    model = cfg.model_spec()
    proc_cfg = cfg.procedure_config()
    exact = enumerate_exact(proc_cfg, cfg.n, cfg.s, model)
    return [{
        "procedure": cfg.procedure,
        "n": cfg.n,
        "s": cfg.s,
        "m": cfg.m,
        "rho": getattr(proc_cfg, "rho", None),
        "K": getattr(proc_cfg, "K", None),
        "alpha_hat": exact.alpha,
        "alpha_se": 0.0 if exact.alpha is not None else None,
        "beta_hat": exact.beta,
        "beta_se": 0.0 if exact.beta is not None else None,
        "fwer_hat": exact.fwer,
        "fwer_se": 0.0,
        "avg_meas_per_dim": exact.expected_measurements_per_dim,
        **bound_annotations(cfg.n, cfg.s, model),
        "states": exact.states,
    }]  # fmt: skip


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        build_parser().print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(argv)
        passed = True
        if cfg.subcommand == "bounds":
            records = _run_bounds(cfg)
        elif cfg.subcommand == "run":
            records = _run_run(cfg)
        elif cfg.subcommand == "sweep":
            records = _run_sweep(cfg)
        elif cfg.subcommand == "audit":
            records, passed = _run_audit(cfg)
        else:
            records = _run_oracle(cfg)
        emit_results(records, cfg.format, cfg.out, cfg)
    except ConfigError as exc:
        print(f"seqrecover: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleOverflowError as exc:
        print(f"seqrecover: oracle refused: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except DomainError as exc:
        print(f"seqrecover: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"seqrecover: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not passed:
        print("seqrecover: budget audit failed", file=sys.stderr)
        return EXIT_AUDIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
