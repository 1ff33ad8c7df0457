"""Accuracy metrics, significance testing, and tabular reporting.

Per-impact errors average the element-wise deviation of a predicted
deformation field against its reference; method-level rows aggregate
those over impacts, attach relative changes against a named baseline,
and carry a paired t-test on the per-impact MAE values.  The t-test
p-value comes from a continued-fraction regularized incomplete beta, so
the whole chain has no dependencies beyond the standard library and
numpy.  ``threshold_flags`` marks impacts whose 95th-percentile field
value exceeds an injury reference level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateTestError,
    DimensionError,
    ReportError,
)
from .impact_data import LabelField

MPS_THRESHOLD = 0.3
MPSR_THRESHOLD = 120.0


@dataclass
class ImpactError:
    """Element-averaged absolute and squared error for one impact."""

    impact_id: str
    mae: float
    rmse: float


@dataclass
class ErrorSummary:
    """Per-impact errors plus their means over impacts."""

    per_impact: list[ImpactError]
    mae: float
    rmse: float

    def impact_maes(self) -> np.ndarray:
        return np.array([e.mae for e in self.per_impact])


def error_metrics(pred, ref, impact_ids: list[str] | None = None) -> ErrorSummary:
    """Per-impact MAE/RMSE over elements, with means over impacts.

    Rows are impacts, columns are elements; 1-d inputs count as a single
    impact.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    ref = np.atleast_2d(np.asarray(ref, dtype=np.float64))
    if pred.shape != ref.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    if pred.size == 0:
        raise DimensionError("error metrics need at least one impact and element")
    if impact_ids is not None and len(impact_ids) != pred.shape[0]:
        raise DimensionError(
            f"{len(impact_ids)} impact_ids for {pred.shape[0]} impacts"
        )
    diff = pred - ref
    maes = np.mean(np.abs(diff), axis=1)
    rmses = np.sqrt(np.mean(diff * diff, axis=1))
    ids = impact_ids if impact_ids is not None else [str(i) for i in range(pred.shape[0])]
    per_impact = [
        ImpactError(ids[i], float(maes[i]), float(rmses[i])) for i in range(pred.shape[0])
    ]
    return ErrorSummary(per_impact, float(maes.mean()), float(rmses.mean()))


def percentile(values, q: float) -> float:
    """Linear-interpolation percentile at sorted position 1 + (n-1)q/100."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DimensionError("percentile of an empty vector")
    if not 0.0 <= q <= 100.0:
        raise ConfigError(f"q must be within [0, 100], got {q}")
    return float(np.percentile(v, q))


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # modified Lentz iteration; terms come in pairs (even, odd)
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        numer = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numer * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numer / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numer = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numer * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numer / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise ConvergenceError("incomplete beta continued fraction did not converge")


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) with 1e-12 convergence."""
    if a <= 0.0 or b <= 0.0:
        raise ConfigError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ConfigError(f"x must be within [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b))
    # the continued fraction converges fast only below the mean; use the
    # symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the other side
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_p_value(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t with df degrees of freedom."""
    if df < 1:
        raise ConfigError(f"df must be >= 1, got {df}")
    if not math.isfinite(t):
        raise ConfigError(f"t must be finite, got {t}")
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t))


class TTestResult(NamedTuple):
    t: float
    p: float
    n: int


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test on aligned samples.

    t = mean(a-b) / (std(a-b, ddof=1) / sqrt(n)); zero-variance
    differences (including a == b everywhere) are degenerate.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"sample sizes differ: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise DimensionError(f"paired test needs n >= 2, got {n}")
    d = a - b
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateTestError("paired differences have zero variance")
    t = float(d.mean()) / (sd / math.sqrt(n))
    return TTestResult(t, student_t_p_value(t, n - 1), n)


def relative_change(baseline: float, new: float) -> float:
    """Percent change of ``new`` against ``baseline``."""
    if baseline == 0.0:
        raise ReportError("relative change needs a nonzero baseline")
    return 100.0 * (new - baseline) / baseline


@dataclass
class MethodErrors:
    """Error summary of one method on one (target, dataset) pair."""

    target: str
    dataset: str
    method: str
    errors: ErrorSummary


@dataclass
class MethodReport:
    """One rendered table row: aggregates plus comparison to the baseline."""

    target: str
    dataset: str
    method: str
    mae: float
    rmse: float
    rel_mae_change: float
    rel_rmse_change: float
    t: float | None
    p: float | None
    n: int
    degenerate: bool


@dataclass
class Report:
    rows: list[MethodReport]
    text: str
    csv: str


def _aligned_maes(entry: ErrorSummary, base: ErrorSummary) -> tuple[np.ndarray, np.ndarray]:
    if len(entry.per_impact) != len(base.per_impact):
        raise ReportError(
            f"paired test needs matching impact counts, got "
            f"{len(entry.per_impact)} vs {len(base.per_impact)}"
        )
    by_id = {e.impact_id: e.mae for e in base.per_impact}
    ids = [e.impact_id for e in entry.per_impact]
    if len(by_id) == len(base.per_impact) and all(i in by_id for i in ids):
        return entry.impact_maes(), np.array([by_id[i] for i in ids])
    return entry.impact_maes(), base.impact_maes()


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def build_report(entries: list[MethodErrors], baseline: str = "baseline") -> Report:
    """Rows per (target, dataset, method) with changes against the baseline.

    Each group must contain the named baseline method.  Baseline rows
    report zero change and a skipped (degenerate) test; other rows carry
    a paired t-test of per-impact MAE against the baseline, aligned by
    impact id when both sides share one.
    """
    if not entries:
        raise ReportError("no method errors to report")
    groups: dict[tuple[str, str], list[MethodErrors]] = {}
    for e in entries:
        groups.setdefault((e.target, e.dataset), []).append(e)

    rows: list[MethodReport] = []
    for (target, dataset) in sorted(groups):
        group = groups[(target, dataset)]
        base = [e for e in group if e.method == baseline]
        if not base:
            raise ReportError(f"baseline {baseline!r} missing for ({target}, {dataset})")
        base_err = base[0].errors
        ordered = sorted(group, key=lambda e: (e.method != baseline, e.method))
        for e in ordered:
            if e.method == baseline:
                rows.append(MethodReport(
                    target, dataset, e.method, e.errors.mae, e.errors.rmse,
                    0.0, 0.0, None, None, len(e.errors.per_impact), True,
                ))
                continue
            t = p = None
            degenerate = False
            try:
                result = paired_t_test(*_aligned_maes(e.errors, base_err))
                t, p = result.t, result.p
            except DegenerateTestError:
                degenerate = True
            rows.append(MethodReport(
                target, dataset, e.method, e.errors.mae, e.errors.rmse,
                relative_change(base_err.mae, e.errors.mae),
                relative_change(base_err.rmse, e.errors.rmse),
                t, p, len(e.errors.per_impact), degenerate,
            ))
    return Report(rows, _render_text(rows), _render_csv(rows))


def _render_csv(rows: list[MethodReport]) -> str:
    lines = ["target,dataset,method,mae,rmse,rel_mae_change_pct,rel_rmse_change_pct,"
             "t,p,n,degenerate"]
    for r in rows:
        lines.append(",".join([
            r.target, r.dataset, r.method,
            _fmt(r.mae), _fmt(r.rmse), _fmt(r.rel_mae_change), _fmt(r.rel_rmse_change),
            _fmt(r.t), _fmt(r.p), str(r.n), "true" if r.degenerate else "false",
        ]))
    return "\n".join(lines) + "\n"


def _render_text(rows: list[MethodReport]) -> str:
    header = ["Target", "Dataset", "Method", "MAE", "RMSE",
              "dMAE%", "dRMSE%", "t", "p"]
    table = [header]
    for r in rows:
        table.append([
            r.target, r.dataset, r.method,
            f"{r.mae:.6g}", f"{r.rmse:.6g}",
            f"{r.rel_mae_change:+.1f}", f"{r.rel_rmse_change:+.1f}",
            "-" if r.t is None else f"{r.t:.3f}",
            "-" if r.p is None else f"{r.p:.4g}",
        ])
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = []
    for idx, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


@dataclass
class FlagRecord:
    impact_id: str
    kind: str
    percentile_95: float
    flagged: bool


@dataclass
class ThresholdFlags:
    """Injury reference levels plus the per-impact exceedance records."""

    mps_threshold: float = MPS_THRESHOLD
    mpsr_threshold: float = MPSR_THRESHOLD
    records: list[FlagRecord] = field(default_factory=list)

    def validate(self) -> None:
        if self.mps_threshold <= 0.0 or self.mpsr_threshold <= 0.0:
            raise ConfigError("thresholds must be positive")

    def threshold_for(self, kind: str) -> float:
        if kind == "mps":
            return self.mps_threshold
        if kind == "mpsr":
            return self.mpsr_threshold
        raise ConfigError(f"unknown label kind {kind!r}")


def threshold_flags(
    fields: list[LabelField],
    flags_cfg: ThresholdFlags | None = None,
    impact_ids: list[str] | None = None,
) -> ThresholdFlags:
    """Flag impacts whose 95th-percentile field value exceeds the threshold.

    The comparison is strict, so a field sitting exactly at the
    threshold is not flagged.
    """
    cfg = flags_cfg or ThresholdFlags()
    cfg.validate()
    if not fields:
        raise DimensionError("threshold_flags needs at least one field")
    if impact_ids is not None and len(impact_ids) != len(fields):
        raise DimensionError(f"{len(impact_ids)} impact_ids for {len(fields)} fields")
    records = []
    for i, f in enumerate(fields):
        p95 = percentile(f.element_values, 95.0)
        records.append(FlagRecord(
            impact_ids[i] if impact_ids is not None else str(i),
            f.kind, p95, p95 > cfg.threshold_for(f.kind),
        ))
    return replace(cfg, records=records)


def render_flags_csv(flags: ThresholdFlags) -> str:
    lines = ["impact_id,kind,percentile_95,flag"]
    for r in flags.records:
        lines.append(
            f"{r.impact_id},{r.kind},{_fmt(r.percentile_95)},"
            f"{'true' if r.flagged else 'false'}"
        )
    return "\n".join(lines) + "\n"
