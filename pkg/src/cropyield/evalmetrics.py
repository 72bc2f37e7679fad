"""Regression error metrics and report emission.

All three metrics are reported as fractions (a perfect predictor scores 0,
a 10% average miss scores 0.1); the ``percent`` flag on the report writers
multiplies by 100 for display. RMSLE uses the natural logarithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeMismatchError


def _paired(y, y_pred):
    y = np.asarray(y, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y.shape != y_pred.shape or y.ndim != 1 or y.size < 1:
        raise ShapeMismatchError(
            f"metrics need equal-length 1-D vectors, got {y.shape} and {y_pred.shape}"
        )
    return y, y_pred


def mape(y, y_pred) -> float:
    """Mean absolute fractional error relative to the true value."""
    y, y_pred = _paired(y, y_pred)
    if np.any(y == 0.0):
        raise DomainError("MAPE undefined when any true value is zero")
    return float(np.mean(np.abs((y - y_pred) / y)))


def rmsle(y, y_pred) -> float:
    """Root mean squared difference of log(1 + value)."""
    y, y_pred = _paired(y, y_pred)
    if np.any(y <= -1.0) or np.any(y_pred <= -1.0):
        raise DomainError("RMSLE needs all values > -1")
    d = np.log1p(y) - np.log1p(y_pred)
    return float(np.sqrt(np.mean(d * d)))


def smape(y, y_pred) -> float:
    """Absolute error normalized by the mean magnitude of truth and prediction."""
    y, y_pred = _paired(y, y_pred)
    denom = (np.abs(y) + np.abs(y_pred)) / 2.0
    if np.any(denom == 0.0):
        raise DomainError("SMAPE undefined when a pair is (0, 0)")
    return float(np.mean(np.abs(y - y_pred) / denom))


METRICS = {"mape": mape, "rmsle": rmsle, "smape": smape}


@dataclass
class EvalReport:
    mape: float
    rmsle: float
    smape: float
    n: int
    per_group: dict = field(default_factory=dict)  # tag -> {metric: value, n: count}
    baseline: dict = field(default_factory=dict)  # mean-predictor reference metrics


def evaluate(predict_fn, dataset, split_idx, baseline_constant: float | None = None) -> EvalReport:
    """Score ``predict_fn(sample) -> yhat`` over the given sample indices.

    Groups are the samples' season tags. ``baseline_constant`` (usually the
    train-split mean yield) adds reference metrics for the same indices.
    """
    idx = list(split_idx)
    if not idx:
        raise DomainError("cannot evaluate an empty split")
    y, preds, tags = [], [], []
    for i in idx:
        sample = dataset.samples[i]
        try:
            preds.append(float(predict_fn(sample)))
        except DomainError as err:
            raise DomainError(f"prediction failed for sample index {i}: {err}") from err
        y.append(sample.y)
        tags.append(sample.season_tag)
    y = np.array(y)
    preds = np.array(preds)

    def all_metrics(yv, pv):
        return {name: fn(yv, pv) for name, fn in METRICS.items()}

    report = EvalReport(**all_metrics(y, preds), n=len(idx))
    for tag in sorted(set(tags)):
        sel = [k for k, t in enumerate(tags) if t == tag]
        group = all_metrics(y[sel], preds[sel])
        group["n"] = len(sel)
        report.per_group[tag] = group
    if baseline_constant is not None:
        const = np.full_like(y, baseline_constant)
        report.baseline = all_metrics(y, const)
    return report


def _fmt(v: float, percent: bool) -> str:
    return f"{v * 100.0 if percent else v:.12g}"


def write_report_table(report: EvalReport, path, percent: bool = False) -> None:
    """Delimited text table: metric, value, group, n."""
    lines = ["metric,value,group,n"]
    for name in ("mape", "rmsle", "smape"):
        lines.append(f"{name},{_fmt(getattr(report, name), percent)},all,{report.n}")
    for tag, group in sorted(report.per_group.items()):
        for name in ("mape", "rmsle", "smape"):
            lines.append(f"{name},{_fmt(group[name], percent)},{tag},{group['n']}")
    for name in ("mape", "rmsle", "smape"):
        if name in report.baseline:
            lines.append(f"baseline_{name},{_fmt(report.baseline[name], percent)},all,{report.n}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_report_kv(report: EvalReport, path) -> None:
    """Machine-readable key=value file; values always fractional."""
    lines = [f"n={report.n}"]
    for name in ("mape", "rmsle", "smape"):
        lines.append(f"{name}={getattr(report, name)!r}")
    for name in ("mape", "rmsle", "smape"):
        if name in report.baseline:
            lines.append(f"baseline_{name}={report.baseline[name]!r}")
    for tag, group in sorted(report.per_group.items()):
        lines.append(f"group.{tag}.n={group['n']}")
        for name in ("mape", "rmsle", "smape"):
            lines.append(f"group.{tag}.{name}={group[name]!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report_kv(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            if not _:
                raise DomainError(f"malformed report line in {path}: {line!r}")
            out[key] = value
    return out
