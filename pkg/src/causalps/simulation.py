"""Simulation study harness: data generation, the replication engine, and
bias/coverage summaries."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import glm
from .data import Dataset
from .errors import BatchFailureError, CsvFormatError, EmptySelectionError, ModelError
from .outcome import PS_ONLY, PS_PLUS_COV
from .samplers import ChainConfig, PriorSpec, derive_seed
from .strategies import (
    STRATEGIES,
    run_cut_C,
    run_joint_B,
    run_joint_D,
    run_sequential,
)

_TAG_IDS = {"A1": 1, "A2": 2, "B": 3, "C": 4, "D": 5}

RECORDS_HEADER = (
    ["replicate", "strategy", "delta_hat", "ci_low", "ci_high", "ci_width", "covered"]
    + [f"theta_xc_{j}" for j in range(1, 7)]
    + ["failed"]
)


@dataclass(frozen=True)
class DgpSpec:
    """Data-generating process for the simulation study.

    Treatment: X ~ Bernoulli(expit(c . treat_coefs)), no intercept.
    Outcome:   Y ~ Bernoulli(expit(t(c) . outcome_coefs + b X)), no
    intercept, where t() applies the fixed transform pattern
    [c1, exp(c2 - 1), c3, exp(c4 - 1), |c5|, |c6|] and b defaults to 0
    (the treatment is absent from the outcome model).

    Covariates are iid standard normal; the law is not dictated by the
    design being replicated, and the standard normal is the canonical
    sign-varying continuous choice (it also makes E[X] = 1/2 exactly).
    """

    n: int = 1000
    treat_coefs: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    outcome_coefs: tuple = (0.6, 0.5, 0.4, 0.3, 0.2, 0.1)
    outcome_treat_coef: float = 0.0

    def __post_init__(self):
        if self.n < 50:
            raise ValueError("need n >= 50")
        if len(self.treat_coefs) != 6 or len(self.outcome_coefs) != 6:
            raise ValueError("coefficient vectors must have length 6")

    @property
    def p(self) -> int:
        return 6


def transformed_covariates(c):
    """The outcome model's covariate transforms (deliberately nonlinear)."""
    c = np.asarray(c, dtype=float)
    return np.column_stack([
        c[:, 0],
        np.exp(c[:, 1] - 1.0),
        c[:, 2],
        np.exp(c[:, 3] - 1.0),
        np.abs(c[:, 4]),
        np.abs(c[:, 5]),
    ])


def generate_dataset(spec: DgpSpec, seed) -> Dataset:
    """One simulated dataset; bitwise-deterministic given the seed."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((spec.n, 6))
    p_x = glm.expit(c @ np.asarray(spec.treat_coefs))
    x = (rng.random(spec.n) < p_x).astype(float)
    eta_y = transformed_covariates(c) @ np.asarray(spec.outcome_coefs)
    p_y = glm.expit(eta_y + spec.outcome_treat_coef * x)
    y = (rng.random(spec.n) < p_y).astype(float)
    return Dataset(x=x, y=y, c=c)


@dataclass(frozen=True)
class TrueDelta:
    value: float
    mc_se: float
    n_draws: int


def true_delta(spec: DgpSpec, n_draws: int = 10_000_000, seed: int = 0) -> TrueDelta:
    """True average causal effect under the data-generating process.

    With no treatment term in the outcome model the effect is identically
    zero (returned exactly). Otherwise it is the Monte Carlo average of
    expit(t + b) - expit(t) over the covariate law, with its standard error.
    """
    b = spec.outcome_treat_coef
    if b == 0.0:
        return TrueDelta(value=0.0, mc_se=0.0, n_draws=0)
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk = 1_000_000
    coefs = np.asarray(spec.outcome_coefs)
    while done < n_draws:
        size = min(chunk, n_draws - done)
        c = rng.standard_normal((size, 6))
        t = transformed_covariates(c) @ coefs
        diff = glm.expit(t + b) - glm.expit(t)
        total += float(diff.sum())
        total_sq += float((diff * diff).sum())
        done += size
    mean = total / n_draws
    var = max(total_sq / n_draws - mean * mean, 0.0)
    return TrueDelta(value=mean, mc_se=float(np.sqrt(var / n_draws)), n_draws=n_draws)


@dataclass(frozen=True)
class AnalysisSettings:
    """Per-strategy tuning knobs shared by one study."""

    boot: int = 1000
    chain: ChainConfig = field(default_factory=ChainConfig)
    inner: ChainConfig = field(default_factory=lambda: ChainConfig(
        iterations=500, burn_in=250, thin=1, initial_scale=0.2))
    prior_mean: float = 0.0
    prior_sd: float = 10.0

    def priors(self):
        p = PriorSpec(mean=self.prior_mean, sd=self.prior_sd)
        return (p, p)


@dataclass(frozen=True)
class StrategyRow:
    """Per-replicate, per-strategy extract feeding the records CSV."""

    delta_hat: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    theta_xc: tuple | None = None
    failed: bool = False
    error: str = ""

    @property
    def width(self) -> float | None:
        if self.failed or self.ci_low is None:
            return None
        return self.ci_high - self.ci_low


@dataclass(frozen=True)
class ReplicationRecord:
    """One replicate's results; unselected strategies hold None."""

    replicate: int
    rows: dict


def replicate_seeds(master_seed, r):
    """(dataset seed, analysis seed) for replicate ``r`` — a pure function
    of the master seed and index, so any execution schedule agrees."""
    return derive_seed(master_seed, r, 0), derive_seed(master_seed, r, 1)


def _row_from_result(result) -> StrategyRow:
    return StrategyRow(
        delta_hat=float(result.delta.point),
        ci_low=float(result.delta.lo),
        ci_high=float(result.delta.hi),
        theta_xc=tuple(float(v) for v in result.theta_xc[1:]),
    )


def analyze_dataset(data: Dataset, strategies, settings: AnalysisSettings, seed,
                    keep_results: bool = False):
    """Run the selected strategies on one dataset.

    Per-strategy seeds derive from ``seed`` and the strategy tag, so a
    single strategy can be re-run in isolation and reproduce its slot of a
    full run. Returns ``{tag: StrategyRow}``; with ``keep_results`` also
    ``{tag: StrategyResult}`` for the non-failed strategies.
    """
    unknown = set(strategies) - set(STRATEGIES)
    if unknown:
        raise ValueError(f"unknown strategies: {sorted(unknown)}")
    priors = settings.priors()
    rows = {}
    results = {}
    for tag in STRATEGIES:
        if tag not in strategies:
            continue
        s = derive_seed(seed, _TAG_IDS[tag])
        try:
            if tag == "A1":
                res = run_sequential(data, PS_ONLY, boot=settings.boot, seed=s)
            elif tag == "A2":
                res = run_sequential(data, PS_PLUS_COV, boot=settings.boot, seed=s)
            elif tag == "B":
                res = run_joint_B(data, priors, replace(settings.chain, seed=s))
            elif tag == "C":
                res = run_cut_C(
                    data, priors,
                    cfg=replace(settings.chain, seed=s),
                    inner=replace(settings.inner, seed=derive_seed(s, 0)),
                )
            else:
                res = run_joint_D(data, priors, replace(settings.chain, seed=s))
        except ModelError as exc:
            rows[tag] = StrategyRow(failed=True, error=f"{type(exc).__name__}: {exc}")
            continue
        rows[tag] = _row_from_result(res)
        results[tag] = res
    if keep_results:
        return rows, results
    return rows


def _replicate_worker(args):
    spec, strategies, settings, master_seed, r = args
    data_seed, analysis_seed = replicate_seeds(master_seed, r)
    data = generate_dataset(spec, data_seed)
    rows = analyze_dataset(data, strategies, settings, analysis_seed)
    full_rows = {tag: rows.get(tag) for tag in STRATEGIES}
    return ReplicationRecord(replicate=r, rows=full_rows)


def run_replications(spec: DgpSpec, strategies, R: int, master_seed,
                     settings: AnalysisSettings | None = None, jobs: int = 1):
    """Simulate and analyze ``R`` replicates.

    Single-replicate strategy failures are recorded, never fatal; the batch
    errors out only when more than 5% of replicates failed for some
    selected strategy. Results are ordered by replicate index and identical
    for any ``jobs`` value.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    strategies = [t for t in STRATEGIES if t in set(strategies)]
    if not strategies:
        raise EmptySelectionError("no strategies selected")
    settings = AnalysisSettings() if settings is None else settings

    args = [(spec, strategies, settings, master_seed, r) for r in range(R)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_replicate_worker, args))
    else:
        records = [_replicate_worker(a) for a in args]

    for tag in strategies:
        n_failed = sum(1 for rec in records if rec.rows[tag] is not None and rec.rows[tag].failed)
        if n_failed > 0.05 * R:
            raise BatchFailureError(
                f"strategy {tag}: {n_failed} of {R} replicates failed (>5%)"
            )
    return records


@dataclass(frozen=True)
class StrategySummary:
    strategy: str
    mean_delta: float
    sd_delta: float
    mean_delta_mcse: float
    bias: float
    coverage: float
    coverage_mcse: float
    mean_width: float
    median_width: float
    mean_theta_xc: tuple
    theta_xc_mcse: tuple
    n_failed: int
    n_used: int

    def to_dict(self):
        return {
            "mean_delta": self.mean_delta,
            "sd_delta": self.sd_delta,
            "mean_delta_mcse": self.mean_delta_mcse,
            "bias": self.bias,
            "coverage": self.coverage,
            "coverage_mcse": self.coverage_mcse,
            "mean_width": self.mean_width,
            "median_width": self.median_width,
            "mean_theta_xc": list(self.mean_theta_xc),
            "theta_xc_mcse": list(self.theta_xc_mcse),
            "n_failed": self.n_failed,
            "n_used": self.n_used,
        }


@dataclass(frozen=True)
class SummaryTable:
    strategies: dict
    true_delta: float
    n_replicates: int

    def to_json_dict(self):
        out = {tag: s.to_dict() for tag, s in self.strategies.items()}
        out["_meta"] = {
            "true_delta": self.true_delta,
            "n_replicates": self.n_replicates,
        }
        return out


def summarize(records, true_delta_value: float = 0.0, strategies=None) -> SummaryTable:
    """Aggregate replication records into bias/coverage/width summaries.

    Failed replicates are excluded from every metric (counts reported);
    interval endpoints count as covering. Monte Carlo standard errors:
    sd/sqrt(n) for means, sqrt(c(1-c)/n) for coverage.
    """
    if strategies is None:
        strategies = [
            t for t in STRATEGIES
            if any(rec.rows.get(t) is not None for rec in records)
        ]
    strategies = [t for t in STRATEGIES if t in set(strategies)]
    if not strategies:
        raise EmptySelectionError("no strategies to summarize")

    table = {}
    for tag in strategies:
        rows = [rec.rows[tag] for rec in records if rec.rows.get(tag) is not None]
        used = [r for r in rows if not r.failed]
        if not used:
            raise EmptySelectionError(f"strategy {tag}: no usable records")
        n_used = len(used)
        deltas = np.array([r.delta_hat for r in used])
        widths = np.array([r.width for r in used])
        covered = np.array([
            (r.ci_low <= true_delta_value) and (true_delta_value <= r.ci_high)
            for r in used
        ])
        thetas = np.array([r.theta_xc for r in used])
        sd = float(np.std(deltas, ddof=1)) if n_used > 1 else 0.0
        theta_sd = np.std(thetas, axis=0, ddof=1) if n_used > 1 else np.zeros(6)
        cov = float(covered.mean())
        table[tag] = StrategySummary(
            strategy=tag,
            mean_delta=float(deltas.mean()),
            sd_delta=sd,
            mean_delta_mcse=sd / np.sqrt(n_used),
            bias=float(deltas.mean()) - true_delta_value,
            coverage=cov,
            coverage_mcse=float(np.sqrt(cov * (1.0 - cov) / n_used)),
            mean_width=float(widths.mean()),
            median_width=float(np.median(widths)),
            mean_theta_xc=tuple(thetas.mean(axis=0).tolist()),
            theta_xc_mcse=tuple((theta_sd / np.sqrt(n_used)).tolist()),
            n_failed=len(rows) - n_used,
            n_used=n_used,
        )
    return SummaryTable(
        strategies=table,
        true_delta=true_delta_value,
        n_replicates=len(records),
    )


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def write_records_csv(records, path, true_delta_value: float = 0.0):
    """Records CSV: one row per (replicate, selected strategy)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORDS_HEADER)
        for rec in records:
            for tag in STRATEGIES:
                row = rec.rows.get(tag)
                if row is None:
                    continue
                if row.failed:
                    w.writerow([rec.replicate, tag] + [""] * 11 + [1])
                    continue
                covered = int(row.ci_low <= true_delta_value <= row.ci_high)
                w.writerow(
                    [rec.replicate, tag, _fmt(row.delta_hat), _fmt(row.ci_low),
                     _fmt(row.ci_high), _fmt(row.width), covered]
                    + [_fmt(v) for v in row.theta_xc]
                    + [0]
                )


def read_records_csv(path):
    """Parse a records CSV back into ReplicationRecords.

    Raises CsvFormatError with row/column diagnostics on malformed input.
    """
    by_replicate = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if header != RECORDS_HEADER:
            raise CsvFormatError(
                f"{path}: bad header {header!r}, expected {RECORDS_HEADER!r}"
            )
        for i, row in enumerate(reader, start=2):
            if len(row) != len(RECORDS_HEADER):
                raise CsvFormatError(
                    f"{path}: row {i} has {len(row)} fields, expected {len(RECORDS_HEADER)}"
                )
            try:
                rep = int(row[0])
                tag = row[1]
                if tag not in STRATEGIES:
                    raise ValueError(f"unknown strategy {tag!r}")
                failed = bool(int(row[13]))
                if failed:
                    srow = StrategyRow(failed=True)
                else:
                    srow = StrategyRow(
                        delta_hat=float(row[2]),
                        ci_low=float(row[3]),
                        ci_high=float(row[4]),
                        theta_xc=tuple(float(v) for v in row[7:13]),
                    )
            except ValueError as exc:
                raise CsvFormatError(f"{path}: row {i}: {exc}") from None
            by_replicate.setdefault(rep, {t: None for t in STRATEGIES})[tag] = srow
    return [
        ReplicationRecord(replicate=rep, rows=rows)
        for rep, rows in sorted(by_replicate.items())
    ]


def write_summary_json(table: SummaryTable, path):
    with open(path, "w") as fh:
        json.dump(table.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
