"""Shared domain types: hardware config, allocations, commands, page sets."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HwConfig:
    hbm_capacity_bytes: int
    dram_capacity_bytes: int
    bw_d2h_bytes_per_s: float
    bw_h2d_bytes_per_s: float
    page_size_bytes: int = 4096
    fault_control_plane_s: float = 31.79e-6
    fault_transfer_s: float = 1.35e-6
    per_page_unmap_s: float = 0.0
    per_page_map_s: float = 0.0
    per_page_madvise_s: float = 1e-9
    madvise_call_s: float = 5e-6
    save_restore_s: float = 50e-6
    copy_engines: int = 2

    def __post_init__(self):
        if self.hbm_capacity_bytes <= 0 or self.dram_capacity_bytes <= 0:
            raise ConfigError("capacities must be positive")
        if self.bw_d2h_bytes_per_s <= 0 or self.bw_h2d_bytes_per_s <= 0:
            raise ConfigError("bandwidths must be positive")
        p = self.page_size_bytes
        if p <= 0 or (p & (p - 1)) != 0:
            raise ConfigError("page_size_bytes must be a power of two")

    @property
    def hbm_capacity_pages(self) -> int:
        return self.hbm_capacity_bytes // self.page_size_bytes

    def with_capacity(self, hbm_capacity_bytes: int) -> "HwConfig":
        return replace(self, hbm_capacity_bytes=hbm_capacity_bytes)


@dataclass(frozen=True)
class ByteRange:
    start_addr: int
    length_bytes: int

    def __post_init__(self):
        if self.length_bytes <= 0:
            raise ValueError("zero or negative length range")

    @property
    def end_addr(self) -> int:
        return self.start_addr + self.length_bytes


@dataclass(frozen=True)
class Allocation:
    id: str
    base_addr: int
    size_bytes: int
    owner_task: str

    def contains_addr(self, addr: int) -> bool:
        return self.base_addr <= addr < self.base_addr + self.size_bytes


class PageSet:
    """Set of page indices stored as sorted, disjoint half-open runs.

    Pages come from contiguous buffer accesses, so runs stay few even when
    cardinality is large; all set algebra is O(runs).
    """

    __slots__ = ("runs",)

    def __init__(self, runs: Iterable[tuple[int, int]] = ()):
        self.runs: tuple[tuple[int, int], ...] = _normalize(runs)

    @classmethod
    def from_pages(cls, pages: Iterable[int]) -> "PageSet":
        return cls((p, p + 1) for p in pages)

    @classmethod
    def single(cls, page: int) -> "PageSet":
        ps = cls.__new__(cls)
        ps.runs = ((page, page + 1),)
        return ps

    def __len__(self) -> int:
        return sum(b - a for a, b in self.runs)

    def __bool__(self) -> bool:
        return bool(self.runs)

    def __iter__(self) -> Iterator[int]:
        for a, b in self.runs:
            yield from range(a, b)

    def __contains__(self, page: int) -> bool:
        lo, hi = 0, len(self.runs)
        while lo < hi:
            mid = (lo + hi) // 2
            a, b = self.runs[mid]
            if page < a:
                hi = mid
            elif page >= b:
                lo = mid + 1
            else:
                return True
        return False

    def __eq__(self, other) -> bool:
        return isinstance(other, PageSet) and self.runs == other.runs

    def __hash__(self):
        return hash(self.runs)

    def __repr__(self):
        return f"PageSet({list(self.runs)!r})"

    def __or__(self, other: "PageSet") -> "PageSet":
        if not self.runs:
            return other
        if not other.runs:
            return self
        return PageSet(self.runs + other.runs)

    def __and__(self, other: "PageSet") -> "PageSet":
        out = []
        i = j = 0
        a_runs, b_runs = self.runs, other.runs
        while i < len(a_runs) and j < len(b_runs):
            a0, a1 = a_runs[i]
            b0, b1 = b_runs[j]
            lo, hi = max(a0, b0), min(a1, b1)
            if lo < hi:
                out.append((lo, hi))
            if a1 <= b1:
                i += 1
            else:
                j += 1
        ps = PageSet.__new__(PageSet)
        ps.runs = tuple(out)
        return ps

    def __sub__(self, other: "PageSet") -> "PageSet":
        if not other.runs or not self.runs:
            return self
        out = []
        j = 0
        b_runs = other.runs
        for a0, a1 in self.runs:
            cur = a0
            while j < len(b_runs) and b_runs[j][1] <= cur:
                j += 1
            k = j
            while k < len(b_runs) and b_runs[k][0] < a1:
                b0, b1 = b_runs[k]
                if b0 > cur:
                    out.append((cur, b0))
                cur = max(cur, b1)
                if b1 >= a1:
                    break
                k += 1
            if cur < a1:
                out.append((cur, a1))
        ps = PageSet.__new__(PageSet)
        ps.runs = tuple(out)
        return ps


def _normalize(runs: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    rs = sorted((a, b) for a, b in runs if b > a)
    if not rs:
        return ()
    out = [rs[0]]
    for a, b in rs[1:]:
        pa, pb = out[-1]
        if a <= pb:
            if b > pb:
                out[-1] = (pa, b)
        else:
            out.append((a, b))
    return tuple(out)


def pages_of(rng: ByteRange, page_size: int) -> PageSet:
    """Pages whose frame overlaps [start, start+length)."""
    if rng.length_bytes <= 0:
        raise ValueError("zero-length range")
    first = rng.start_addr // page_size
    last = (rng.end_addr - 1) // page_size
    return PageSet([(first, last + 1)])


def pages_of_ranges(ranges: Iterable[ByteRange], page_size: int) -> PageSet:
    runs = []
    for r in ranges:
        first = r.start_addr // page_size
        last = (r.end_addr - 1) // page_size
        runs.append((first, last + 1))
    return PageSet(runs)


class CommandKind(enum.Enum):
    KERNEL = "KERNEL"
    MEMCPY_H2D = "H2D"
    MEMCPY_D2H = "D2H"


@dataclass(frozen=True)
class Arg:
    """One launch-argument slot: a 64- or 32-bit word, or a raw struct blob."""

    value: int = 0
    width: int = 64
    raw: Optional[bytes] = None  # set for struct-typed args

    def __post_init__(self):
        if self.raw is None and self.width not in (32, 64):
            raise ValueError("arg width must be 32 or 64")


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    latency_s: float
    kernel_name: str = ""
    launch_args: tuple[Arg, ...] = ()
    grid_dims: tuple[int, int, int] = (1, 1, 1)
    block_dims: tuple[int, int, int] = (1, 1, 1)
    ground_truth_access: tuple[ByteRange, ...] = ()

    def __post_init__(self):
        if self.latency_s <= 0:
            raise ValueError("latency_s must be positive")
        if self.kind is not CommandKind.KERNEL and len(self.launch_args) != 3:
            raise ValueError("memcpy needs explicit src/dst/size args")

    @property
    def memcpy_src(self) -> int:
        return self.launch_args[0].value

    @property
    def memcpy_dst(self) -> int:
        return self.launch_args[1].value

    @property
    def memcpy_size(self) -> int:
        return self.launch_args[2].value

    def device_range(self) -> ByteRange:
        """Device-side extent of a memcpy command."""
        addr = self.memcpy_dst if self.kind is CommandKind.MEMCPY_H2D else self.memcpy_src
        return ByteRange(addr, self.memcpy_size)


@dataclass
class Task:
    id: str
    allocations: list[Allocation] = field(default_factory=list)
    commands: list[Command] = field(default_factory=list)
    cursor: int = 0
    priority: int = 0
    arrival_s: float = 0.0

    def remaining(self) -> int:
        return len(self.commands) - self.cursor

    def validate(self):
        allocs = sorted(self.allocations, key=lambda a: a.base_addr)
        for a, b in zip(allocs, allocs[1:]):
            if a.base_addr + a.size_bytes > b.base_addr:
                raise ValueError(f"overlapping allocations {a.id}/{b.id}")
        if not 0 <= self.cursor <= len(self.commands):
            raise ValueError("cursor out of range")


def ground_truth_pages(cmd: Command, page_size: int) -> PageSet:
    return pages_of_ranges(cmd.ground_truth_access, page_size)
