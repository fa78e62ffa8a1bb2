"""Trace-driven simulation of one GPU under memory oversubscription.

Three memory managers share a single execution loop:

* demand paging ("um"): pages move in on faults, batched with prefetch,
  evicted least-recently-used from the list head;
* proactive: the scheduler timeline drives eviction-list reordering and a
  pipelined swap of the next timeslice's predicted working set before the
  slice starts, so steady state runs (nearly) fault-free;
* ideal: proactive with ground-truth prediction and free list manipulation,
  an upper bound on what prediction quality can buy.

A fourth, "reference", runs the same commands with memory management
switched off entirely and provides the denominator for normalized
throughput.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .analyzer import build_descriptors
from .core import Command, CommandKind, HwConfig, PageSet, Task, pages_of, pages_of_ranges
from .memman import (
    EvictionList,
    HelperQueue,
    MigrationPlan,
    Window,
    apply_plan,
    compute_window,
    madvise_cost_s,
    plan_migration,
    reorder_for_opt,
    timeline_windows,
)
from .predictor import ground_truth_prediction, predict, predict_allocation
from .scheduler import Policy, Timeline, build_timeline


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Mode:
    name: str  # "um" | "proactive" | "ideal" | "reference"
    prefetch_pages: int = 16
    pipelined: bool = True
    early_start: bool = True
    predictor: str = "template"  # "template" | "allocation" | "oracle"

    @classmethod
    def um(cls, prefetch_pages: int = 16) -> "Mode":
        return cls("um", prefetch_pages=prefetch_pages)

    @classmethod
    def proactive(
        cls,
        pipelined: bool = True,
        early_start: bool = True,
        predictor: str = "template",
    ) -> "Mode":
        return cls("proactive", pipelined=pipelined, early_start=early_start,
                   predictor=predictor)

    @classmethod
    def ideal(cls) -> "Mode":
        return cls("ideal", predictor="oracle")

    @classmethod
    def reference(cls) -> "Mode":
        return cls("reference")


@dataclass
class Metrics:
    total_time_s: float = 0.0
    exec_s: float = 0.0
    save_restore_s: float = 0.0
    madvise_s: float = 0.0
    migration_s: float = 0.0  # planned-swap stalls (incl. overlap waits)
    fault_s: float = 0.0
    fault_count: int = 0
    fault_pages: int = 0
    prefetched_pages: int = 0  # speculative slop beyond the faulting pages
    migrated_in_pages: int = 0
    migrated_out_pages: int = 0
    evicted_capacity_pages: int = 0  # squeezed out by faults/copies, no swap plan
    memcpy_installed_pages: int = 0
    context_switches: int = 0
    completed_tasks: int = 0
    plan_truncations: int = 0  # plans cut short by HBM capacity
    page_size_bytes: int = 4096
    completion_s: dict = None  # task id -> completion time
    normalized_throughput: Optional[float] = None

    def __post_init__(self):
        if self.completion_s is None:
            self.completion_s = {}

    @property
    def h2d_migration_pages(self) -> int:
        """Pages moved host-to-device by the memory manager (planned
        populates plus demand faults; copies carry their own data)."""
        return self.migrated_in_pages + self.fault_pages

    @property
    def migrated_bytes_h2d(self) -> int:
        return self.h2d_migration_pages * self.page_size_bytes

    @property
    def migrated_bytes_d2h(self) -> int:
        return (self.migrated_out_pages + self.evicted_capacity_pages) * self.page_size_bytes


@dataclass(frozen=True)
class SimEvent:
    t: float
    kind: str
    task_id: str
    pages: int = 0


def evict_page_cost_s(hw: HwConfig) -> float:
    return hw.per_page_unmap_s + hw.page_size_bytes / hw.bw_d2h_bytes_per_s


def populate_page_cost_s(hw: HwConfig) -> float:
    return hw.page_size_bytes / hw.bw_h2d_bytes_per_s + hw.per_page_map_s


def sequential_time(hw: HwConfig, n_evict: int, n_populate: int) -> float:
    """Swap latency with every unmap/copy-out/copy-in/map step serialized."""
    return n_evict * evict_page_cost_s(hw) + n_populate * populate_page_cost_s(hw)


def populate_ready(hw: HwConfig, j: int, free_pages: int, n_evict: int) -> float:
    """Completion time of the j-th populated page when eviction and
    population run on separate copy engines.

    Populate j must wait for populate j-1 and for j - free frames to have
    been evicted; the makespan maximizes (i - free)+ * E + (j - i + 1) * P
    over the pipeline stage i where the wait chain switches queues, and the
    maximum sits at an endpoint or at the free-frame breakpoint.
    """
    if j <= 0:
        return 0.0
    e, p = evict_page_cost_s(hw), populate_page_cost_s(hw)
    f = max(0, free_pages)
    best = 0.0
    for i in {1, min(f + 1, j), j}:
        if i < 1:
            continue
        lag = max(0, min(i, n_evict + f) - f)  # evictions actually waited on
        best = max(best, lag * e + (j - i + 1) * p)
    return best


def pipeline_time(hw: HwConfig, n_evict: int, n_populate: int, free_pages: int) -> float:
    """Swap latency with eviction and population pipelined across the two
    copy engines. N evictions and N populations with equal per-page cost t
    and no free frames finish in (N+1)t instead of the serial 2Nt."""
    evict_done = n_evict * evict_page_cost_s(hw)
    return max(evict_done, populate_ready(hw, n_populate, free_pages, n_evict))


def _copy_task(t: Task) -> Task:
    return Task(
        id=t.id,
        allocations=t.allocations,
        commands=list(t.commands),
        cursor=t.cursor,
        priority=t.priority,
        arrival_s=t.arrival_s,
    )


class Simulator:
    def __init__(
        self,
        tasks: Sequence[Task],
        hw: HwConfig,
        policy: Policy,
        mode: Mode,
        feeder: Optional[Callable[["Simulator"], None]] = None,
        record_events: bool = False,
    ):
        self.hw = hw
        self.policy = policy
        self.mode = mode
        self.feeder = feeder
        self.page = hw.page_size_bytes
        self.capacity = hw.hbm_capacity_pages
        self.tasks = [_copy_task(t) for t in tasks]
        for t in self.tasks:
            t.validate()
        self.by_id = {t.id: t for t in self.tasks}
        if len(self.by_id) != len(self.tasks):
            raise SimulationError("duplicate task ids")
        self._rr_order = [t.id for t in self.tasks]
        total_alloc = sum(a.size_bytes for t in self.tasks for a in t.allocations)
        if total_alloc > hw.dram_capacity_bytes:
            raise SimulationError(
                f"allocations ({total_alloc} B) exceed DRAM backing "
                f"({hw.dram_capacity_bytes} B)"
            )
        self.evlist = EvictionList()
        self.metrics = Metrics(page_size_bytes=self.page)
        self.t = 0.0
        self.events: list[SimEvent] = []
        self.record_events = record_events
        self.helpers: dict[str, HelperQueue] = {}
        self.actual: dict[str, list[PageSet]] = {}
        self._descriptors: dict[str, dict] = {}
        for t in self.tasks:
            self._init_task_tables(t)

    # -- prediction tables -------------------------------------------------

    def _init_task_tables(self, task: Task):
        helper = HelperQueue(task)
        self.helpers[task.id] = helper
        self.actual[task.id] = []
        if self.mode.predictor == "template" and self.mode.name in ("proactive",):
            self._descriptors[task.id] = build_descriptors(task)
        self._extend_task_tables(task, task.commands)

    def _extend_task_tables(self, task: Task, commands: Sequence[Command]):
        helper = self.helpers[task.id]
        preds, flags = [], []
        for cmd in commands:
            preds.append(self._predict(task, cmd).pages)
            flags.append(cmd.kind is CommandKind.MEMCPY_H2D)
            self.actual[task.id].append(self._actual_pages(cmd))
        helper.append(preds, flags)

    def _predict(self, task: Task, cmd: Command):
        if self.mode.name == "ideal" or self.mode.predictor == "oracle":
            return ground_truth_prediction(cmd, self.page)
        if self.mode.predictor == "allocation":
            return predict_allocation(task.allocations, cmd, self.page)
        return predict(self._descriptors.get(task.id, {}), cmd, self.page)

    def _actual_pages(self, cmd: Command) -> PageSet:
        if cmd.kind is CommandKind.KERNEL:
            return pages_of_ranges(cmd.ground_truth_access, self.page)
        return pages_of(cmd.device_range(), self.page)

    def append_commands(self, task_id: str, commands: Sequence[Command]):
        """Feed more work into a live task's stream and helper queue."""
        task = self.by_id[task_id]
        if task.remaining() == 0 and task.commands:
            raise SimulationError(f"cannot append to completed task {task_id!r}")
        commands = list(commands)
        task.commands.extend(commands)
        self._extend_task_tables(task, commands)

    # -- main loop ----------------------------------------------------------

    def run(self, max_switches: int = 1_000_000) -> Metrics:
        proactive = self.mode.name in ("proactive", "ideal")
        for _ in range(max_switches):
            if self.feeder is not None:
                self.feeder(self)
            live = [t for t in self.tasks if t.remaining() > 0]
            if not live:
                break
            ready = [t for t in live if t.arrival_s <= self.t + 1e-15]
            if not ready:
                self.t = min(t.arrival_s for t in live)
                continue
            rank = {tid: i for i, tid in enumerate(self._rr_order)}
            ready.sort(key=lambda t: rank[t.id])
            timeline = build_timeline(self.policy, ready)
            entry = timeline[0]
            task = self.by_id[entry.task_id]
            self._rr_order.remove(task.id)
            self._rr_order.append(task.id)
            self.metrics.context_switches += 1
            self._charge(self.hw.save_restore_s, "save_restore_s")
            pending = None
            if proactive:
                pending = self._prepare_slice(entry, timeline)
            self._emit("switch", task.id)
            self._run_slice(task, entry, timeline, pending)
            if task.remaining() == 0:
                self._release(task)
        else:
            raise SimulationError("context-switch budget exhausted")
        self.metrics.total_time_s = self.t
        return self.metrics

    def _charge(self, dt: float, bucket: str):
        self.t += dt
        setattr(self.metrics, bucket, getattr(self.metrics, bucket) + dt)

    def _emit(self, kind: str, task_id: str, pages: int = 0):
        if self.record_events:
            self.events.append(SimEvent(self.t, kind, task_id, pages))

    # -- proactive switch work ----------------------------------------------

    def _prepare_slice(self, entry, timeline: Timeline):
        """Reorder the eviction list for the planned future and swap in the
        incoming slice's missing pages. Returns early-start gating state."""
        windows = timeline_windows(timeline, self.helpers)
        cur = windows[0]
        missing = PageSet(cur.demand_runs) - self.evlist.resident
        over = len(self.evlist) + len(missing) - self.capacity
        if not missing and over <= 0:
            return None
        stats = reorder_for_opt(self.evlist, timeline, self.helpers, windows)
        if self.mode.name == "proactive":
            self._charge(madvise_cost_s(self.hw, stats), "madvise_s")
        free = self.capacity - len(self.evlist)
        plan = plan_migration(self.evlist, cur.demand_runs, self.capacity)
        if plan.truncated_pages:
            self.metrics.plan_truncations += 1
        self.metrics.migrated_in_pages += plan.populate_pages
        self.metrics.migrated_out_pages += plan.evict_pages
        self._emit("migrate", entry.task_id, plan.populate_pages)
        pending = None
        if not self.mode.pipelined:
            self._charge(
                sequential_time(self.hw, plan.evict_pages, plan.populate_pages),
                "migration_s",
            )
        elif self.mode.early_start:
            pending = self._gating_state(entry, cur, plan, free)
        else:
            self._charge(
                pipeline_time(self.hw, plan.evict_pages, plan.populate_pages, free),
                "migration_s",
            )
        apply_plan(self.evlist, plan)
        if len(self.evlist) > self.capacity:
            raise SimulationError("migration plan overflowed HBM capacity")
        return pending

    def _gating_state(self, entry, window: Window, plan: MigrationPlan, free: int):
        """Per-command populate prefixes: command k may start once its
        cumulative demand pages have landed."""
        helper = self.helpers[entry.task_id]
        resident = self.evlist.resident
        prefix: dict[int, int] = {}
        seen = PageSet()
        cum = 0
        for cur in range(entry.resume_command_cursor, window.end_cursor):
            new = helper.predicted[cur] - seen
            seen = seen | new
            if not helper.self_populating[cur]:
                cum += len(new - resident)
            prefix[cur] = min(cum, plan.populate_pages)
        return {
            "prefix": prefix,
            "free": free,
            "n_evict": plan.evict_pages,
            "evict_done": plan.evict_pages * evict_page_cost_s(self.hw),
        }

    # -- slice execution ----------------------------------------------------

    def _run_slice(self, task: Task, entry, timeline: Timeline, pending):
        budget = entry.timeslice_s
        elapsed = 0.0  # profiled command time, drives the switch decision
        offset = 0.0  # wall-clock offset within the slice
        slice_start = self.t
        while task.cursor < len(task.commands) and elapsed < budget:
            cur = task.cursor
            cmd = task.commands[cur]
            if pending is not None:
                j = pending["prefix"].get(cur, 0)
                ready = populate_ready(self.hw, j, pending["free"], pending["n_evict"])
                if ready > offset:
                    self.metrics.migration_s += ready - offset
                    offset = ready
            offset += self._touch(task, cmd, cur, timeline, entry, budget - elapsed)
            offset += cmd.latency_s
            elapsed += cmd.latency_s
            task.cursor = cur + 1
        if pending is not None and pending["evict_done"] > offset:
            self.metrics.migration_s += pending["evict_done"] - offset
            offset = pending["evict_done"]
        self.t = slice_start + offset
        self.metrics.exec_s += elapsed

    def _touch(
        self, task: Task, cmd: Command, cur: int, timeline: Timeline,
        entry, remaining_budget: float,
    ) -> float:
        """Make a command's pages resident; returns the stall it cost."""
        if self.mode.name == "reference":
            return 0.0
        actual = self.actual[task.id][cur]
        missing = actual - self.evlist.resident
        if not missing:
            if self.mode.name == "um":
                self.evlist.madvise(actual)  # LRU refresh
            return 0.0
        if len(missing) > self.capacity:
            raise SimulationError(
                f"command working set ({len(missing)} pages) exceeds HBM "
                f"capacity ({self.capacity} pages)"
            )
        stall = 0.0
        over = len(self.evlist) + len(missing) - self.capacity
        if over > 0:
            if self.mode.name in ("proactive", "ideal"):
                stall += self._refresh_opt(task, cur, timeline, remaining_budget)
            evicted = self.evlist.evict_head(over)
            self.metrics.evicted_capacity_pages += sum(b - a for a, b in evicted)
        if cmd.kind is CommandKind.MEMCPY_H2D:
            # the copy itself carries the data; residency comes for free
            self.metrics.memcpy_installed_pages += len(missing)
        else:
            stall += self._fault(len(missing))
        self.evlist.append_tail(missing.runs)
        if len(self.evlist) > self.capacity:
            raise SimulationError(
                f"residency {len(self.evlist)} pages exceeds capacity "
                f"{self.capacity} after command {cur} of task {task.id!r}"
            )
        if self.mode.name == "um":
            self.evlist.madvise(actual)
        self._emit("fault", task.id, len(missing))
        return stall

    def _fault(self, n_pages: int) -> float:
        hw = self.hw
        self.metrics.fault_pages += n_pages
        if self.mode.name == "ideal":
            # perfect manager: misses cost raw pipelined copy, no driver trip
            dt = n_pages * populate_page_cost_s(hw)
        else:
            batches = math.ceil(n_pages / self.mode.prefetch_pages)
            self.metrics.fault_count += batches
            self.metrics.prefetched_pages += batches * self.mode.prefetch_pages - n_pages
            dt = batches * (
                hw.fault_control_plane_s
                + hw.fault_transfer_s * self.mode.prefetch_pages
            )
        self.metrics.fault_s += dt
        return dt

    def _refresh_opt(
        self, task: Task, cur: int, timeline: Timeline, remaining_budget: float
    ) -> float:
        """Re-sort the eviction list against the remaining future before a
        demand eviction, so mid-slice victims still follow farthest-next-use."""
        helper = self.helpers[task.id]
        head = compute_window(helper, cur, max(remaining_budget, 1e-12))
        rest = timeline_windows(timeline[1:], self.helpers)
        stats = reorder_for_opt(self.evlist, timeline, self.helpers, [head] + rest)
        if self.mode.name == "proactive":
            dt = madvise_cost_s(self.hw, stats)
            self.metrics.madvise_s += dt
            return dt
        return 0.0

    def _release(self, task: Task):
        self.metrics.completed_tasks += 1
        self.metrics.completion_s[task.id] = self.t
        if self.mode.name == "reference":
            return
        pages = PageSet()
        for a in task.allocations:
            first = a.base_addr // self.page
            last = (a.base_addr + a.size_bytes - 1) // self.page
            pages = pages | PageSet([(first, last + 1)])
        self.evlist.remove(pages)
        self._emit("release", task.id, len(pages))


def um_command_duration(
    hw: HwConfig, cmd: Command, missing_pages: int, prefetch_pages: int = 16
) -> float:
    """Wall time of one command under demand paging: profiled latency plus
    serialized fault batches (each batch one driver round-trip moving
    `prefetch_pages` pages)."""
    batches = math.ceil(missing_pages / prefetch_pages) if missing_pages else 0
    return cmd.latency_s + batches * (
        hw.fault_control_plane_s + hw.fault_transfer_s * prefetch_pages
    )


def simulate(
    tasks: Sequence[Task],
    hw: HwConfig,
    policy: Policy,
    mode: Mode,
    feeder=None,
    record_events: bool = False,
) -> Metrics:
    return Simulator(tasks, hw, policy, mode, feeder, record_events).run()


def simulate_normalized(
    tasks: Sequence[Task],
    hw: HwConfig,
    policy: Policy,
    mode: Mode,
    feeder=None,
) -> Metrics:
    """Run a mode plus the memory-free reference and attach the ratio of
    reference wall time to mode wall time."""
    m = simulate(tasks, hw, policy, mode, feeder)
    ref = simulate(tasks, hw, policy, Mode.reference(), feeder)
    m.normalized_throughput = ref.total_time_s / m.total_time_s
    return m
