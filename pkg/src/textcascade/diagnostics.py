"""Reference matching and trajectory-level semantic diagnostics.

Each generated event is matched to same-node held-out events inside a
primary time window, falling back to a relaxed window. Alignment is the
cosine between the generated embedding and the mean reference embedding;
drift is one minus cosine to the seed (global) or to the weighted
predecessor centroid (local, absent on empty-memory steps).
"""

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateEmbeddingError

PRIMARY_WINDOW_HOURS = 12.0
RELAXED_WINDOW_HOURS = 24.0
MOVING_AVERAGE_WINDOW = 5
TREND_EPSILON = 0.001
LATE_STAGE_FRACTION = 0.2


class MatchWindow(str, Enum):
    PRIMARY = "primary_12h"
    RELAXED = "relaxed_24h"
    NONE = "none"


@dataclass
class MatchResult:
    generated_index: int
    references: list
    window_used: MatchWindow


def match_references(gen, test_stream, primary_window=PRIMARY_WINDOW_HOURS,
                     relaxed_window=RELAXED_WINDOW_HOURS, generated_index=-1):
    """Same-node test events within the primary window, else the relaxed one."""
    if primary_window <= 0 or relaxed_window <= 0:
        raise ValueError("windows must be positive")
    if primary_window > relaxed_window:
        raise ValueError("primary window must not exceed the relaxed window")
    same_node = [e for e in test_stream.events if e.node == gen.node]
    primary = [e for e in same_node if abs(e.tau - gen.tau) <= primary_window]
    if primary:
        return MatchResult(generated_index, primary, MatchWindow.PRIMARY)
    relaxed = [e for e in same_node if abs(e.tau - gen.tau) <= relaxed_window]
    if relaxed:
        return MatchResult(generated_index, relaxed, MatchWindow.RELAXED)
    return MatchResult(generated_index, [], MatchWindow.NONE)


def _cosine(u, v):
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateEmbeddingError("cosine with a zero-norm vector")
    return float(np.dot(u, v) / (nu * nv))


def semantic_alignment(gen_vec, ref_vecs):
    """Cosine between the generated embedding and the mean reference embedding."""
    if not ref_vecs:
        raise ValueError("need at least one reference vector")
    stack = np.stack([np.asarray(v.values, dtype=float) for v in ref_vecs])
    mean_ref = stack.mean(axis=0)
    return _cosine(np.asarray(gen_vec.values, dtype=float), mean_ref)


def global_drift(gen_vec, seed_vec):
    """One minus cosine to the seed text embedding; lies in [0, 2]."""
    return 1.0 - _cosine(np.asarray(gen_vec.values, dtype=float),
                         np.asarray(seed_vec.values, dtype=float))


def local_drift(gen_vec, memory, history_vecs):
    """One minus cosine to the weighted predecessor centroid; None if no memory.

    history_vecs maps a history index to the embedding of that event's text.
    """
    if memory.is_empty:
        return None
    centroid = None
    for item in memory.items:
        vec = np.asarray(history_vecs[item.rep_index].values, dtype=float)
        centroid = item.weight * vec if centroid is None else centroid + item.weight * vec
    return 1.0 - _cosine(np.asarray(gen_vec.values, dtype=float), centroid)


@dataclass
class TrendResult:
    label: str  # increasing | decreasing | flat | insufficient
    slope: float


def trend(series, slope_epsilon=TREND_EPSILON):
    """Least-squares slope of the series against its ordinal, labeled by sign."""
    n = len(series)
    if n < 2:
        return TrendResult("insufficient", float("nan"))
    x = np.arange(n, dtype=float)
    y = np.asarray(series, dtype=float)
    x_centered = x - x.mean()
    slope = float((x_centered @ (y - y.mean())) / (x_centered @ x_centered))
    if slope > slope_epsilon:
        label = "increasing"
    elif slope < -slope_epsilon:
        label = "decreasing"
    else:
        label = "flat"
    return TrendResult(label, slope)


def late_stage(series, fraction=LATE_STAGE_FRACTION):
    """Mean of the final ceil(fraction * n) values."""
    if len(series) == 0:
        raise ValueError("series must be non-empty")
    count = max(1, math.ceil(fraction * len(series)))
    return float(np.mean(series[-count:]))


def moving_average(series, window=MOVING_AVERAGE_WINDOW):
    """Trailing mean over up to `window` points, one value per input point."""
    out = []
    for idx in range(len(series)):
        lo = max(0, idx - window + 1)
        out.append(float(np.mean(series[lo:idx + 1])))
    return out


@dataclass
class DiagnosticsRecord:
    generated_index: int
    tau: float
    node: int
    matched: bool
    window_used: str
    s_t: float = None
    d_global: float = None
    d_local: float = None


def evaluate_run(run, test_stream, embedder,
                 primary_window=PRIMARY_WINDOW_HOURS,
                 relaxed_window=RELAXED_WINDOW_HOURS):
    """Per-event diagnostics for one cascade run against a held-out stream.

    Degenerate embeddings leave the affected fields unset for that event
    rather than aborting the run.
    """
    history = [run.seed] + list(run.events)
    history_vecs = {}
    for idx, event in enumerate(history):
        if event.text:
            history_vecs[idx] = embedder.embed(event.text)
    seed_vec = history_vecs.get(0)

    records = []
    for pos, (event, memory) in enumerate(zip(run.events, run.memories), start=1):
        match = match_references(event, test_stream, primary_window, relaxed_window,
                                 generated_index=pos)
        record = DiagnosticsRecord(
            generated_index=pos,
            tau=event.tau,
            node=event.node,
            matched=match.window_used != MatchWindow.NONE,
            window_used=match.window_used.value,
        )
        gen_vec = history_vecs.get(pos)
        if gen_vec is not None:
            if record.matched:
                try:
                    ref_vecs = [embedder.embed(ref.text)
                                for ref in match.references if ref.text]
                    if ref_vecs:
                        record.s_t = semantic_alignment(gen_vec, ref_vecs)
                except DegenerateEmbeddingError:
                    pass
            if seed_vec is not None:
                try:
                    record.d_global = global_drift(gen_vec, seed_vec)
                except DegenerateEmbeddingError:
                    pass
            try:
                record.d_local = local_drift(gen_vec, memory, history_vecs)
            except DegenerateEmbeddingError:
                pass
        records.append(record)
    return records


@dataclass
class RunSummary:
    run_id: str
    record_count: int
    matched_count: int
    primary_match_count: int
    relaxed_match_count: int
    mean_s: float = None
    trend_label: str = "insufficient"
    trend_slope: float = None
    late_stage_s: float = None
    mean_global_drift: float = None
    mean_local_drift: float = None

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "record_count": self.record_count,
            "matched_count": self.matched_count,
            "primary_match_count": self.primary_match_count,
            "relaxed_match_count": self.relaxed_match_count,
            "mean_s": self.mean_s,
            "trend_label": self.trend_label,
            "trend_slope": self.trend_slope,
            "late_stage_s": self.late_stage_s,
            "mean_global_drift": self.mean_global_drift,
            "mean_local_drift": self.mean_local_drift,
        }


def summarize_run(records, run_id, slope_epsilon=TREND_EPSILON,
                  late_fraction=LATE_STAGE_FRACTION):
    """Run-level statistics over matched alignment values and drift series."""
    s_series = [r.s_t for r in records if r.s_t is not None]
    d_global = [r.d_global for r in records if r.d_global is not None]
    d_local = [r.d_local for r in records if r.d_local is not None]
    summary = RunSummary(
        run_id=run_id,
        record_count=len(records),
        matched_count=sum(1 for r in records if r.matched),
        primary_match_count=sum(1 for r in records if r.window_used == MatchWindow.PRIMARY.value),
        relaxed_match_count=sum(1 for r in records if r.window_used == MatchWindow.RELAXED.value),
    )
    if s_series:
        summary.mean_s = float(np.mean(s_series))
        summary.late_stage_s = late_stage(s_series, late_fraction)
        trend_result = trend(s_series, slope_epsilon)
        summary.trend_label = trend_result.label
        summary.trend_slope = (None if math.isnan(trend_result.slope) else trend_result.slope)
    if d_global:
        summary.mean_global_drift = float(np.mean(d_global))
    if d_local:
        summary.mean_local_drift = float(np.mean(d_local))
    return summary


def _mean_std(values):
    """Across-run mean and sample standard deviation of per-run means."""
    if not values:
        return None, None
    if len(values) == 1:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(np.std(values, ddof=1))


def aggregate_summaries(summaries, pooled_records=None):
    """Across-run aggregate: mean and sample std of per-run means per metric.

    Also reports pooled statistics over all matched events, since per-run
    averaging and pooling answer slightly different questions.
    """
    means_s = [s.mean_s for s in summaries if s.mean_s is not None]
    late = [s.late_stage_s for s in summaries if s.late_stage_s is not None]
    glob = [s.mean_global_drift for s in summaries if s.mean_global_drift is not None]
    loc = [s.mean_local_drift for s in summaries if s.mean_local_drift is not None]
    agg = {
        "run_count": len(summaries),
        "single_run": len(summaries) == 1,
        "matched_count": sum(s.matched_count for s in summaries),
        "primary_match_count": sum(s.primary_match_count for s in summaries),
        "relaxed_match_count": sum(s.relaxed_match_count for s in summaries),
    }
    for name, values in (("mean_s", means_s), ("late_stage_s", late),
                         ("mean_global_drift", glob), ("mean_local_drift", loc)):
        mean, std = _mean_std(values)
        agg[name] = mean
        agg[f"{name}_std"] = std
    if pooled_records is not None:
        pooled_s = [r.s_t for r in pooled_records if r.s_t is not None]
        agg["pooled_mean_s"] = float(np.mean(pooled_s)) if pooled_s else None
        pooled_trend = trend(pooled_s) if len(pooled_s) >= 2 else TrendResult("insufficient", float("nan"))
        agg["pooled_trend_label"] = pooled_trend.label
    return agg


def write_records_csv(per_run_records, path):
    """CSV export: (run_id, t_index, tau, node, matched, window_used, S_t, D_global, D_local)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "t_index", "tau", "node", "matched",
                         "window_used", "S_t", "D_global", "D_local"])
        for run_id, records in per_run_records:
            for r in records:
                writer.writerow([
                    run_id, r.generated_index, repr(r.tau), r.node, r.matched,
                    r.window_used,
                    "" if r.s_t is None else repr(r.s_t),
                    "" if r.d_global is None else repr(r.d_global),
                    "" if r.d_local is None else repr(r.d_local),
                ])


def write_moving_average_csv(per_run_records, path, window=MOVING_AVERAGE_WINDOW):
    """Trailing moving average of matched alignment values, for plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "ordinal", "t_index", "S_t_ma"])
        for run_id, records in per_run_records:
            matched = [r for r in records if r.s_t is not None]
            ma = moving_average([r.s_t for r in matched], window)
            for ordinal, (record, value) in enumerate(zip(matched, ma)):
                writer.writerow([run_id, ordinal, record.generated_index, repr(value)])


def write_summary_json(summaries, aggregate, path, policy=None):
    payload = {
        "policy": policy,
        "aggregate": aggregate,
        "runs": [s.to_dict() for s in summaries],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
