"""Human-evaluation protocol: task creation, rater assignment, append-only
persistence and aggregation.

Three task kinds: accuracy (gold and predicted text, accurate/inaccurate),
fluency (prediction only, 1-5) and pairwise (system output vs gold, blind
order, 7-level preference).  Every task closes after ratings from 3 distinct
raters.  Aggregation: accuracy needs >= 2/3 accurate votes; fluency is the
mean over all individual ratings; pairwise takes an exact-level strict
majority, otherwise the no-majority bucket.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

RATERS_PER_TASK = 3

ACCURACY_VALUES = ("accurate", "inaccurate")
PAIRWISE_LEVELS = (
    "much_better",
    "better",
    "slightly_better",
    "about_the_same",
    "slightly_worse",
    "worse",
    "much_worse",
)
NO_MAJORITY = "no_majority"


def flip_level(level: str) -> str:
    return PAIRWISE_LEVELS[len(PAIRWISE_LEVELS) - 1 - PAIRWISE_LEVELS.index(level)]


class RatingError(Exception):
    def __init__(self, message: str, code: str):
        super().__init__(message)
        self.code = code  # "not_found" | "duplicate" | "domain"


@dataclass(frozen=True)
class RatingTask:
    id: str
    kind: str  # accuracy | fluency | pairwise
    payload: Mapping[str, str]
    hidden: Mapping[str, str] = field(default_factory=dict)

    def public_payload(self) -> dict:
        return dict(self.payload)


@dataclass(frozen=True)
class RatingRecord:
    task_id: str
    rater_id: str
    value: str | int


def validate_value(kind: str, value) -> None:
    if kind == "accuracy":
        if value not in ACCURACY_VALUES:
            raise RatingError(f"accuracy value must be one of {ACCURACY_VALUES}", "domain")
    elif kind == "fluency":
        if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
            raise RatingError("fluency value must be an integer 1-5", "domain")
    elif kind == "pairwise":
        if value not in PAIRWISE_LEVELS:
            raise RatingError(f"pairwise value must be one of {PAIRWISE_LEVELS}", "domain")
    else:
        raise RatingError(f"unknown task kind {kind!r}", "domain")


def create_rating_tasks(
    gold_texts: Sequence[str],
    system_outputs: Mapping[str, Sequence[str]],
    n: int = 200,
    seed: int = 0,
) -> list[RatingTask]:
    """Sample ``n`` examples uniformly; for each (example, system) emit one
    accuracy, one fluency and one blind pairwise (system vs gold) task.  All
    systems see the same sampled examples.  Pairwise presentation order is
    randomized per task; the hidden key records which side is the system."""
    for name, outputs in system_outputs.items():
        if len(outputs) != len(gold_texts):
            raise ValueError(f"system {name!r} output count mismatch")
    rng = np.random.default_rng(seed)
    n = min(n, len(gold_texts))
    idx = sorted(rng.choice(len(gold_texts), size=n, replace=False).tolist())
    tasks: list[RatingTask] = []
    for system in sorted(system_outputs):
        outputs = system_outputs[system]
        for i in idx:
            gold, pred = gold_texts[i], outputs[i]
            base = f"{system}-{i}"
            tasks.append(
                RatingTask(
                    id=f"acc-{base}",
                    kind="accuracy",
                    payload={"gold": gold, "prediction": pred},
                )
            )
            tasks.append(
                RatingTask(id=f"flu-{base}", kind="fluency", payload={"prediction": pred})
            )
            system_first = bool(rng.integers(2))
            a, b = (pred, gold) if system_first else (gold, pred)
            tasks.append(
                RatingTask(
                    id=f"pair-{base}",
                    kind="pairwise",
                    payload={"text_a": a, "text_b": b},
                    hidden={"system_side": "a" if system_first else "b", "system": system},
                )
            )
    return tasks


class TaskStore:
    """Single-writer task/rating store backed by an append-only JSON-lines
    ledger; derived state is rebuilt from the ledger on startup."""

    def __init__(self, ledger_path: str | Path | None = None):
        self.ledger_path = Path(ledger_path) if ledger_path else None
        self.tasks: dict[str, RatingTask] = {}
        self.order: list[str] = []
        self.records: dict[tuple[str, str], RatingRecord] = {}
        self.assignments: set[tuple[str, str]] = set()
        if self.ledger_path and self.ledger_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.ledger_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                if obj["type"] == "task":
                    task = RatingTask(
                        id=obj["id"],
                        kind=obj["kind"],
                        payload=obj["payload"],
                        hidden=obj.get("hidden", {}),
                    )
                    self.tasks[task.id] = task
                    self.order.append(task.id)
                elif obj["type"] == "assignment":
                    self.assignments.add((obj["task_id"], obj["rater_id"]))
                elif obj["type"] == "rating":
                    rec = RatingRecord(obj["task_id"], obj["rater_id"], obj["value"])
                    self.records[(rec.task_id, rec.rater_id)] = rec

    def _append(self, obj: dict) -> None:
        if self.ledger_path:
            with open(self.ledger_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")

    def add_tasks(self, tasks: Sequence[RatingTask]) -> None:
        for task in tasks:
            if task.id in self.tasks:
                raise ValueError(f"duplicate task id {task.id}")
            self.tasks[task.id] = task
            self.order.append(task.id)
            self._append(
                {
                    "type": "task",
                    "id": task.id,
                    "kind": task.kind,
                    "payload": dict(task.payload),
                    "hidden": dict(task.hidden),
                }
            )

    def ratings_for(self, task_id: str) -> list[RatingRecord]:
        return [r for (tid, _), r in self.records.items() if tid == task_id]

    def is_closed(self, task_id: str) -> bool:
        return len(self.ratings_for(task_id)) >= RATERS_PER_TASK

    def next_task(self, rater_id: str) -> RatingTask | None:
        """First open task this rater has not rated; records the assignment."""
        if not rater_id:
            raise RatingError("rater id required", "domain")
        for tid in self.order:
            if self.is_closed(tid):
                continue
            if (tid, rater_id) in self.records:
                continue
            if (tid, rater_id) not in self.assignments:
                self.assignments.add((tid, rater_id))
                self._append({"type": "assignment", "task_id": tid, "rater_id": rater_id})
            return self.tasks[tid]
        return None

    def submit(self, record: RatingRecord) -> None:
        task = self.tasks.get(record.task_id)
        if task is None:
            raise RatingError(f"unknown task {record.task_id!r}", "not_found")
        if (record.task_id, record.rater_id) in self.records:
            raise RatingError("duplicate rating for this task and rater", "duplicate")
        if (record.task_id, record.rater_id) not in self.assignments:
            raise RatingError("rater was not assigned this task", "not_found")
        validate_value(task.kind, record.value)
        if self.is_closed(record.task_id):
            raise RatingError("task already closed", "duplicate")
        self.records[(record.task_id, record.rater_id)] = record
        self._append(
            {
                "type": "rating",
                "task_id": record.task_id,
                "rater_id": record.rater_id,
                "value": record.value,
            }
        )

    def progress(self) -> dict:
        closed = sum(1 for tid in self.order if self.is_closed(tid))
        return {
            "tasks": len(self.order),
            "closed": closed,
            "ratings": len(self.records),
        }

    def audit(self) -> None:
        """Every closed task has exactly RATERS_PER_TASK records from distinct raters."""
        for tid in self.order:
            recs = self.ratings_for(tid)
            raters = {r.rater_id for r in recs}
            if len(recs) > RATERS_PER_TASK:
                raise AssertionError(f"task {tid} has {len(recs)} ratings")
            if len(raters) != len(recs):
                raise AssertionError(f"task {tid} has duplicate raters")


@dataclass(frozen=True)
class AggregateReport:
    accuracy_percent: float | None
    fluency_mean: float | None
    pairwise_distribution: Mapping[str, float]
    complete_tasks: int
    incomplete_tasks: int

    def to_dict(self) -> dict:
        return {
            "accuracy_percent": self.accuracy_percent,
            "fluency_mean": self.fluency_mean,
            "pairwise_distribution": dict(self.pairwise_distribution),
            "complete_tasks": self.complete_tasks,
            "incomplete_tasks": self.incomplete_tasks,
        }


def aggregate(store: TaskStore) -> AggregateReport:
    by_task: dict[str, list[RatingRecord]] = defaultdict(list)
    for rec in store.records.values():
        by_task[rec.task_id].append(rec)

    complete = 0
    incomplete = 0
    acc_correct = 0
    acc_total = 0
    fluency_values: list[int] = []
    pairwise_buckets: Counter = Counter()
    pairwise_total = 0
    for tid in store.order:
        task = store.tasks[tid]
        recs = by_task.get(tid, [])
        if len(recs) < RATERS_PER_TASK:
            incomplete += 1
            continue
        complete += 1
        values = [r.value for r in recs]
        if task.kind == "accuracy":
            acc_total += 1
            if sum(1 for v in values if v == "accurate") >= 2:
                acc_correct += 1
        elif task.kind == "fluency":
            fluency_values.extend(int(v) for v in values)
        elif task.kind == "pairwise":
            # Votes are relative to presentation order; the hidden key maps
            # them to system-vs-gold before bucketing.
            system_side = task.hidden.get("system_side", "a")
            oriented = [v if system_side == "a" else flip_level(v) for v in values]
            counts = Counter(oriented)
            level, count = counts.most_common(1)[0]
            pairwise_buckets[level if count >= 2 else NO_MAJORITY] += 1
            pairwise_total += 1

    distribution = {
        level: 100.0 * pairwise_buckets.get(level, 0) / pairwise_total
        if pairwise_total
        else 0.0
        for level in (*PAIRWISE_LEVELS, NO_MAJORITY)
    }
    return AggregateReport(
        accuracy_percent=100.0 * acc_correct / acc_total if acc_total else None,
        fluency_mean=sum(fluency_values) / len(fluency_values) if fluency_values else None,
        pairwise_distribution=distribution,
        complete_tasks=complete,
        incomplete_tasks=incomplete,
    )
