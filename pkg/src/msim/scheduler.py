"""Preemptive timeslice scheduling: policies and the task timeline.

The timeline is the contract between the scheduler and the memory manager:
an ordered plan of (task, timeslice) entries covering the lookahead horizon,
from which the global future page access order can be reconstructed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import Task


@dataclass(frozen=True)
class TimelineEntry:
    task_id: str
    timeslice_s: float
    resume_command_cursor: int


Timeline = tuple[TimelineEntry, ...]


@dataclass(frozen=True)
class Policy:
    kind: str = "rr"  # "rr" | "priority"
    timeslice_s: float = 5e-3
    horizon_rounds: int = 2

    def __post_init__(self):
        if self.timeslice_s <= 0:
            raise ValueError("timeslice must be positive")
        if self.kind not in ("rr", "priority"):
            raise ValueError(f"unknown policy kind {self.kind!r}")


def runnable_order(policy: Policy, tasks: Sequence[Task]) -> list[Task]:
    """Tasks eligible for the next entries, highest priority level first."""
    live = [t for t in tasks if t.remaining() > 0]
    if not live:
        return []
    if policy.kind == "priority":
        top = max(t.priority for t in live)
        live = [t for t in live if t.priority == top]
    return live


def build_timeline(
    policy: Policy,
    tasks: Sequence[Task],
    horizon_entries: int | None = None,
) -> Timeline:
    """Plan the next `horizon_entries` timeslices (default: two full rounds).

    Round-robin cycles the runnable set in task order; the priority policy
    restricts the horizon to the highest runnable level. Resume cursors are
    projected forward by accumulating profiled command latencies, so each
    entry records where its task's command stream will stand when it starts.
    """
    live = runnable_order(policy, tasks)
    if not live:
        return ()
    if horizon_entries is None:
        horizon_entries = policy.horizon_rounds * len(live)
    cursors = {t.id: t.cursor for t in live}
    entries = []
    idx = 0
    alive = list(live)
    while len(entries) < horizon_entries and alive:
        t = alive[idx % len(alive)]
        cur = cursors[t.id]
        if cur >= len(t.commands):
            alive = [x for x in alive if cursors[x.id] < len(x.commands)]
            if not alive:
                break
            idx = 0
            continue
        entries.append(TimelineEntry(t.id, policy.timeslice_s, cur))
        cursors[t.id] = _project_cursor(t, cur, policy.timeslice_s)
        idx += 1
    return tuple(entries)


def _project_cursor(task: Task, cursor: int, timeslice_s: float) -> int:
    """Cursor after running one timeslice from `cursor` (profiled latencies).

    A command that starts inside the slice runs to completion, matching the
    engine's switch-at-command-boundary rule.
    """
    elapsed = 0.0
    cur = cursor
    while cur < len(task.commands) and elapsed < timeslice_s:
        elapsed += task.commands[cur].latency_s
        cur += 1
    return cur
