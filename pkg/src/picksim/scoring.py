"""Competition scoring and the three comparison metrics, computed from logs.

The shipped score table reproduces the known winning total for a
14-stow/9-pick finals shape but is a calibration schedule, not the official
one (the real point values were never published); see data/score_table.yaml.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .runlog import Event, RunLog
from .world import FailureCause, OutcomeKind

SCORE_TABLE_SCHEMA_VERSION = 1


@dataclass
class ScoreTable:
    stow_points: float = 10.0
    pick_points: float = 14.0
    drop_penalty: float = -10.0
    protrusion_penalty: float = -5.0
    incorrect_report_penalty: float = -10.0
    completion_bonus: float = 6.0

    def __post_init__(self) -> None:
        if min(self.stow_points, self.pick_points, self.completion_bonus) < 0:
            raise ValueError("awards must be non-negative")
        if max(self.drop_penalty, self.protrusion_penalty, self.incorrect_report_penalty) > 0:
            raise ValueError("penalties must be non-positive")

    @classmethod
    def load(cls, path: str | Path) -> "ScoreTable":
        raw = yaml.safe_load(Path(path).read_text())
        if raw.get("schema_version") != SCORE_TABLE_SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported score table schema_version")
        fields = {k: float(v) for k, v in raw.items() if k != "schema_version"}
        return cls(**fields)


def _event_delta(event: Event, table: ScoreTable) -> float:
    kind = event.kind
    if kind == "place":
        delta = 0.0
        award = event.payload.get("award")
        if award == "stow":
            delta += table.stow_points
        elif award == "pick":
            delta += table.pick_points
        if event.payload.get("protruding"):
            delta += table.protrusion_penalty
        return delta
    if kind == "drop":
        return table.drop_penalty
    if kind == "location_report" and not event.payload.get("correct", True):
        return table.incorrect_report_penalty
    if kind == "order_complete" and event.payload.get("time_remaining", 0.0) > 0.0:
        return table.completion_bonus
    return 0.0


def score_run(log: RunLog, table: ScoreTable) -> tuple[float, list[tuple[float, float]]]:
    """Final score and its cumulative step trace, one step per scoring event."""
    total = 0.0
    trace: list[tuple[float, float]] = []
    for event in log:
        delta = _event_delta(event, table)
        if delta != 0.0:
            total += delta
            trace.append((event.t, total))
    return total, trace


def trace_markers(log: RunLog) -> list[tuple[float, str]]:
    """Phase-transition / completion / end markers for plotting score traces."""
    markers = []
    for event in log:
        if event.kind == "phase_start" and event.payload.get("phase") == "pick":
            markers.append((event.t, "stow_to_pick"))
        elif event.kind == "order_complete":
            markers.append((event.t, "order_complete"))
        elif event.kind == "task_end":
            markers.append((event.t, "end"))
    return markers


def write_trace_csv(trace: list[tuple[float, float]], path: str | Path) -> None:
    lines = ["seconds,points"]
    lines += [f"{t:.6f},{p:g}" for t, p in trace]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class MetricsReport:
    grasp_success_rate: float | None
    avg_attempt_time: float | None
    error_rate: float | None
    final_score: float
    attempts: int
    successes: int
    items_transferred: int
    penalties: int
    manual_interventions: int
    failure_histogram: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "final_score": self.final_score,
            "attempts": self.attempts,
            "successes": self.successes,
            "items_transferred": self.items_transferred,
            "penalties": self.penalties,
            "manual_interventions": self.manual_interventions,
            "failure_histogram": self.failure_histogram,
        }
        # Rate fields are absent (not zero) when there is nothing to rate.
        if self.grasp_success_rate is not None:
            out["grasp_success_rate"] = self.grasp_success_rate
        if self.avg_attempt_time is not None:
            out["avg_attempt_time"] = self.avg_attempt_time
        if self.error_rate is not None:
            out["error_rate"] = self.error_rate
        return out


def count_penalty_events(log: RunLog) -> int:
    """Penalty events: drops, protruding placements, incorrect final reports."""
    n = 0
    for e in log:
        if e.kind == "drop":
            n += 1
        elif e.kind == "place" and e.payload.get("protruding"):
            n += 1
        elif e.kind == "location_report" and not e.payload.get("correct", True):
            n += 1
    return n


def failure_taxonomy(log: RunLog) -> dict:
    """Histogram of attempt outcomes and failed-grasp causes."""
    kinds = {k.value: 0 for k in OutcomeKind if k is not OutcomeKind.SUCCESS}
    causes = {c.value: 0 for c in FailureCause}
    for event in log.of_kind("attempt_end"):
        kind = event.payload.get("outcome")
        if kind in kinds:
            kinds[kind] += 1
        if kind == OutcomeKind.FAILED_GRASP.value:
            cause = event.payload.get("cause")
            if cause in causes:
                causes[cause] += 1
    return {"kinds": kinds, "failed_grasp_causes": causes}


def compute_metrics(log: RunLog, table: ScoreTable | None = None) -> MetricsReport:
    """Fold a log into the comparison metrics.

    A grasp attempt spans "from finishing an action with one item to
    finishing an action with the next": attempt times are deltas between
    consecutive attempt_end events, anchored at the first task_start.
    """
    table = table if table is not None else ScoreTable()
    attempt_ends = log.of_kind("attempt_end")
    attempts = len(attempt_ends)
    successes = sum(
        1 for e in attempt_ends if e.payload.get("outcome") == OutcomeKind.SUCCESS.value
    )
    starts = log.of_kind("task_start")
    avg_time: float | None = None
    if attempts and starts:
        avg_time = (attempt_ends[-1].t - starts[0].t) / attempts

    transferred = sum(1 for e in log.of_kind("place") if e.payload.get("award") in ("stow", "pick"))
    penalties = count_penalty_events(log)
    if penalties == 0:
        error_rate: float | None = 0.0
    elif transferred > 0:
        error_rate = penalties / transferred
    else:
        error_rate = None

    final_score, _ = score_run(log, table)
    return MetricsReport(
        grasp_success_rate=(successes / attempts) if attempts else None,
        avg_attempt_time=avg_time,
        error_rate=error_rate,
        final_score=final_score,
        attempts=attempts,
        successes=successes,
        items_transferred=transferred,
        penalties=penalties,
        manual_interventions=len(log.of_kind("manual_intervention")),
        failure_histogram=failure_taxonomy(log),
    )


def merge_metrics(reports: list[MetricsReport]) -> MetricsReport:
    """Associative merge for batch aggregation (pooled counts, not means)."""
    attempts = sum(r.attempts for r in reports)
    successes = sum(r.successes for r in reports)
    transferred = sum(r.items_transferred for r in reports)
    penalties = sum(r.penalties for r in reports)
    hist: dict = {"kinds": {}, "failed_grasp_causes": {}}
    for r in reports:
        for group in hist:
            for k, v in r.failure_histogram.get(group, {}).items():
                hist[group][k] = hist[group].get(k, 0) + v
    times = [r.avg_attempt_time * r.attempts for r in reports if r.avg_attempt_time is not None]
    avg_time = (sum(times) / attempts) if attempts and times else None
    if penalties == 0:
        error_rate: float | None = 0.0
    elif transferred > 0:
        error_rate = penalties / transferred
    else:
        error_rate = None
    return MetricsReport(
        grasp_success_rate=(successes / attempts) if attempts else None,
        avg_attempt_time=avg_time,
        error_rate=error_rate,
        final_score=sum(r.final_score for r in reports),
        attempts=attempts,
        successes=successes,
        items_transferred=transferred,
        penalties=penalties,
        manual_interventions=sum(r.manual_interventions for r in reports),
        failure_histogram=hist,
    )
