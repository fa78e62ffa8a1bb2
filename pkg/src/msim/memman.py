"""Eviction-list manipulation, OPT enforcement, migration planning.

The driver's eviction list orders resident pages head (next victim) to tail
(most protected). `madvise` moves pages to the tail; walking the scheduler
timeline in reverse and madvising each entry's per-timeslice working set
leaves the list sorted from farthest-future-use to nearest-future-use, so
evicting from the head realizes Belady's OPT policy. A brute-force oracle
provides the independent check.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import PageSet, Task
from .scheduler import Timeline, TimelineEntry

Run = tuple[int, int]


class EvictionList:
    """Ordered runs of resident pages; head = next eviction victim."""

    def __init__(self):
        self._runs: list[Run] = []
        self._resident = PageSet()

    @property
    def resident(self) -> PageSet:
        return self._resident

    def __len__(self) -> int:
        return len(self._resident)

    def pages_in_order(self) -> list[int]:
        out = []
        for a, b in self._runs:
            out.extend(range(a, b))
        return out

    def append_tail(self, runs: Iterable[Run]):
        """Insert newly resident pages at the protected tail."""
        added = []
        for a, b in runs:
            if b <= a:
                continue
            if self._runs and self._runs[-1][1] == a:
                pa, _ = self._runs[-1]
                self._runs[-1] = (pa, b)
            else:
                self._runs.append((a, b))
            added.append((a, b))
        if added:
            self._resident = self._resident | PageSet(added)

    def madvise(self, pages: PageSet):
        """Move the resident members of `pages` to the tail.

        Moved pages keep their relative list order; everything else keeps
        its order too. Non-resident pages are silently skipped.
        """
        if not pages or not self._runs:
            return
        starts = [r[0] for r in pages.runs]
        kept: list[Run] = []
        moved: list[Run] = []
        for a, b in self._runs:
            cur = a
            i = bisect_right(starts, cur) - 1
            if i < 0:
                i = 0
            while cur < b and i < len(pages.runs):
                pa, pb = pages.runs[i]
                if pb <= cur:
                    i += 1
                    continue
                if pa >= b:
                    break
                lo, hi = max(cur, pa), min(b, pb)
                if cur < lo:
                    _push(kept, (cur, lo))
                _push(moved, (lo, hi))
                cur = hi
                if pb <= b:
                    i += 1
            if cur < b:
                _push(kept, (cur, b))
        kept.extend(moved)
        self._runs = _coalesce_adjacent(kept)

    def evict_head(self, n_pages: int) -> list[Run]:
        """Pop `n_pages` pages from the head; returns them in head order."""
        if n_pages <= 0:
            return []
        out: list[Run] = []
        need = n_pages
        while need > 0 and self._runs:
            a, b = self._runs[0]
            size = b - a
            if size <= need:
                out.append((a, b))
                self._runs.pop(0)
                need -= size
            else:
                out.append((a, a + need))
                self._runs[0] = (a + need, b)
                need = 0
        if out:
            self._resident = self._resident - PageSet(out)
        return out

    def remove(self, pages: PageSet):
        """Drop pages from the list wherever they sit (e.g. freed buffers)."""
        if not pages or not self._runs:
            return
        kept: list[Run] = []
        for a, b in self._runs:
            for r in (PageSet([(a, b)]) - pages).runs:
                _push(kept, r)
        self._runs = kept
        self._resident = self._resident - pages


def _push(runs: list[Run], run: Run):
    if runs and runs[-1][1] == run[0]:
        runs[-1] = (runs[-1][0], run[1])
    else:
        runs.append(run)


def _coalesce_adjacent(runs: list[Run]) -> list[Run]:
    out: list[Run] = []
    for r in runs:
        _push(out, r)
    return out


@dataclass
class HelperQueue:
    """Per-task queue of unexecuted commands with their predicted pages.

    `predicted[i]` parallels `task.commands[i]`; retired entries are simply
    left behind the task cursor.
    """

    task: Task
    predicted: list[PageSet] = field(default_factory=list)
    # True for commands that bring their own data in (host-to-device copies):
    # their pages join the working set but need no migration beforehand.
    self_populating: list[bool] = field(default_factory=list)

    def append(self, page_sets: Iterable[PageSet], self_pop: Iterable[bool] = ()):
        page_sets = list(page_sets)
        self_pop = list(self_pop)
        self.predicted.extend(page_sets)
        self.self_populating.extend(
            self_pop if self_pop else [False] * len(page_sets)
        )


@dataclass
class Window:
    """Pages one timeline entry touches, in first-access order."""

    task_id: str
    ordered_runs: list[Run]  # every predicted page, first-access order
    demand_runs: list[Run]  # pages that must be migrated in up front
    pages: PageSet
    end_cursor: int


def compute_window(helper: HelperQueue, cursor: int, timeslice_s: float) -> Window:
    """Walk the helper queue from `cursor`, accumulating profiled latencies
    until the timeslice is filled; collects predicted pages deduplicated in
    first-access order. Pages first touched by a self-populating command are
    kept out of the demand runs."""
    ordered: list[Run] = []
    demand: list[Run] = []
    seen = PageSet()
    elapsed = 0.0
    cur = cursor
    cmds = helper.task.commands
    self_pop = helper.self_populating
    while cur < len(cmds) and elapsed < timeslice_s:
        pred = helper.predicted[cur]
        new = pred - seen
        if new:
            ordered.extend(new.runs)
            if not (cur < len(self_pop) and self_pop[cur]):
                demand.extend(new.runs)
            seen = seen | new
        elapsed += cmds[cur].latency_s
        cur += 1
    return Window(helper.task.id, ordered, demand, seen, cur)


def timeline_windows(
    timeline: Timeline, helpers: dict[str, HelperQueue]
) -> list[Window]:
    return [
        compute_window(helpers[e.task_id], e.resume_command_cursor, e.timeslice_s)
        for e in timeline
        if e.task_id in helpers
    ]


@dataclass
class ReorderStats:
    pages_advised: dict[str, int] = field(default_factory=dict)

    @property
    def total_pages(self) -> int:
        return sum(self.pages_advised.values())


def reorder_for_opt(
    evlist: EvictionList,
    timeline: Timeline,
    helpers: dict[str, HelperQueue],
    windows: Sequence[Window] | None = None,
) -> ReorderStats:
    """Madvise each timeline entry's working set, walking entries last to
    first so the head ends up holding the farthest-future-use pages.

    Within an entry the first-access-ordered runs are advised in reverse,
    refining the order to command granularity; a page used by several
    entries settles at the position of its earliest future use because the
    later (earlier-entry) madvise wins.
    """
    if windows is None:
        windows = timeline_windows(timeline, helpers)
    stats = ReorderStats()
    for w in reversed(list(windows)):
        for run in reversed(w.ordered_runs):
            evlist.madvise(PageSet([run]))
        stats.pages_advised[w.task_id] = stats.pages_advised.get(w.task_id, 0) + len(
            w.pages
        )
    return stats


def madvise_cost_s(hw, stats: ReorderStats) -> float:
    """Control-plane latency of one reordering pass: one call per helper
    plus a per-page charge, scaling linearly with task count at constant
    per-task page volume."""
    return sum(
        hw.madvise_call_s + n * hw.per_page_madvise_s
        for n in stats.pages_advised.values()
    )


@dataclass
class MigrationPlan:
    evict_runs: list[Run]  # head-first
    populate_runs: list[Run]  # predicted first-access order
    truncated_pages: int = 0

    @property
    def evict_pages(self) -> int:
        return sum(b - a for a, b in self.evict_runs)

    @property
    def populate_pages(self) -> int:
        return sum(b - a for a, b in self.populate_runs)


def plan_migration(
    evlist: EvictionList,
    next_ws_runs: Sequence[Run],
    capacity_pages: int,
) -> MigrationPlan:
    """Populate the non-resident part of the next working set (first-access
    order) and free space by evicting from the list head.

    A working set larger than HBM is truncated to the capacity-sized prefix;
    the rest is left to the fault fallback.
    """
    resident = evlist.resident
    populate: list[Run] = []
    count = 0
    truncated = 0
    for run in next_ws_runs:
        missing = PageSet([run]) - resident
        for a, b in missing.runs:
            take = min(b - a, capacity_pages - count)
            if take > 0:
                populate.append((a, a + take))
                count += take
            truncated += (b - a) - take
    free = capacity_pages - len(evlist)
    evict_count = max(0, count - free)
    evict: list[Run] = []
    need = evict_count
    for a, b in evlist._runs:
        if need <= 0:
            break
        take = min(b - a, need)
        evict.append((a, a + take))
        need -= take
    return MigrationPlan(evict, populate, truncated)


def apply_plan(evlist: EvictionList, plan: MigrationPlan):
    evlist.evict_head(plan.evict_pages)
    evlist.append_tail(plan.populate_runs)


def belady_oracle(
    access_seq: Sequence[int], frames: int
) -> tuple[int, list[tuple[int, int]]]:
    """Brute-force OPT reference: on a fault with full frames, evict the
    resident page whose next use is farthest (never used again preferred,
    ties by lowest page id). Returns (faults, [(seq_index, victim), ...])."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    resident: set[int] = set()
    faults = 0
    trace: list[tuple[int, int]] = []
    for i, page in enumerate(access_seq):
        if page in resident:
            continue
        faults += 1
        if len(resident) >= frames:
            best_page, best_next = -1, -1
            for p in sorted(resident):
                nxt = _next_use(access_seq, i + 1, p)
                if nxt > best_next:
                    best_page, best_next = p, nxt
            resident.remove(best_page)
            trace.append((i, best_page))
        resident.add(page)
    return faults, trace


def _next_use(seq: Sequence[int], start: int, page: int) -> int:
    for j in range(start, len(seq)):
        if seq[j] == page:
            return j
    return len(seq) + 1  # never used again sorts farthest
