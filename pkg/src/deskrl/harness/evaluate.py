"""Final metrics (last-5-epoch averaging) and percentile-bootstrap CIs over seeds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deskrl.errors import ContractViolation
from deskrl.harness.records import RunRecord

LAST_EPOCHS = 5


def final_metric(record: RunRecord, key: str = "sr"):
    """Mean of the metric over the final 5 epochs.

    Shorter runs fall back to all epochs and set the ``short_run`` flag.
    """
    series = record.epoch_series(key)
    if not series:
        raise ContractViolation("run record has no epochs")
    short = len(series) < LAST_EPOCHS
    window = series if short else series[-LAST_EPOCHS:]
    return float(np.mean(window)), short


def final_success_rate(record: RunRecord):
    return final_metric(record, "sr")


@dataclass
class EvalSummary:
    method: str
    suite: str
    metric: str
    n_seeds: int
    point: float
    lo: float
    hi: float
    degenerate: bool = False

    def __post_init__(self):
        if not (self.lo <= self.point + 1e-12 and self.point <= self.hi + 1e-12):
            raise ContractViolation("CI must bracket the point estimate")


def bootstrap_ci(values, rng: np.random.Generator, n_resamples: int = 2000,
                 level: float = 0.95):
    """Percentile bootstrap over per-seed statistics.

    Returns (lo, point, hi); a single seed yields the degenerate CI [x, x]
    with the degenerate flag raised by the caller.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractViolation("bootstrap over an empty sample")
    point = float(values.mean())
    if values.size == 1:
        return point, point, point
    if n_resamples < 1000:
        raise ContractViolation("use at least 1000 bootstrap resamples")
    idx = rng.integers(0, values.size, size=(n_resamples, values.size))
    means = values[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return float(lo), point, float(hi)


def summarize_runs(records: list[RunRecord], rng: np.random.Generator,
                   n_resamples: int = 2000) -> list[EvalSummary]:
    """Group runs by (suite, method) and bootstrap each final metric over seeds."""
    from deskrl.harness.records import method_label

    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        key = (rec.config["suite"], method_label(rec.config))
        groups.setdefault(key, []).append(rec)
    out = []
    for (suite, method), recs in sorted(groups.items()):
        for metric in ("sr", "reward", "progress"):
            finals = [final_metric(r, metric)[0] for r in recs]
            lo, point, hi = bootstrap_ci(finals, rng, n_resamples)
            out.append(EvalSummary(method, suite, metric, len(recs), point, lo, hi,
                                   degenerate=len(recs) == 1))
    return out


def write_summary_csv(path: str, summaries: list[EvalSummary]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("suite,method,metric,n_seeds,point,lo,hi,degenerate\n")
        for s in summaries:
            fh.write(
                f"{s.suite},{s.method},{s.metric},{s.n_seeds},"
                f"{s.point:.6f},{s.lo:.6f},{s.hi:.6f},{int(s.degenerate)}\n"
            )
