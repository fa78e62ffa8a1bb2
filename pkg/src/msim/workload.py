"""Synthetic task generators with planted ground truth, plus trace files.

Generators build command streams whose true page accesses are known by
construction, so prediction accuracy and fault behavior can be checked
exactly. Latencies are inputs derived from configurable coefficients,
standing in for an offline profiler's lookup table.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .core import (
    Allocation,
    Arg,
    ByteRange,
    Command,
    CommandKind,
    Task,
)

TRACE_HEADER = "MSIM-TRACE v1"

# Default latency coefficients: memory-bound kernels sweep bytes at the
# in-HBM bandwidth implied by an 8.5 GB pass in 12.7 ms.
DEFAULT_MEM_BW = 8.5e9 / 12.7e-3
DEFAULT_FLOPS = 50e12
DEFAULT_H2D_BW = 41.7e9

ADDRESS_SPACE_BITS = 56


class TraceError(ValueError):
    pass


class _Bump:
    """Deterministic page-granularity bump allocator for one task."""

    def __init__(self, base_addr: int, page_size: int = 4096):
        self.addr = base_addr
        self.page = page_size

    def alloc(self, size: int) -> int:
        base = self.addr
        pages = -(-size // self.page)
        self.addr += pages * self.page
        if self.addr >= 1 << ADDRESS_SPACE_BITS:
            raise OverflowError("simulated address space exhausted")
        return base


def task_base_addr(index: int) -> int:
    """Disjoint per-task address windows keep absolute page ids unique."""
    return (index + 1) << 40


def _seed_memcpys(task: Task, h2d_bw: float):
    for a in task.allocations:
        task.commands.append(
            Command(
                kind=CommandKind.MEMCPY_H2D,
                latency_s=a.size_bytes / h2d_bw,
                launch_args=(Arg(0, 64), Arg(a.base_addr, 64), Arg(a.size_bytes, 64)),
            )
        )


def _indirect_region(rng: random.Random, scratch: Allocation, n_pages: int, page: int) -> ByteRange:
    max_off = scratch.size_bytes // page - n_pages
    off = rng.randrange(0, max_off + 1)
    return ByteRange(scratch.base_addr + off * page, n_pages * page)


def gen_vector_add(
    n_elems: int,
    elem_bytes: int = 4,
    iterations: int = 1,
    *,
    task_id: str = "va",
    base_addr: int = 1 << 40,
    mem_bw: float = DEFAULT_MEM_BW,
    h2d_bw: float = DEFAULT_H2D_BW,
    kernel_name: str = "vector_add",
    indirect_rate: float = 0.0,
    seed: int = 0,
    page_size: int = 4096,
) -> Task:
    """Streaming micro-benchmark: per iteration one kernel reading A and B
    and writing C in full, args [ptrA, ptrB, ptrC, N]."""
    if n_elems <= 0:
        raise ValueError("n_elems must be positive")
    bump = _Bump(base_addr, page_size)
    size = n_elems * elem_bytes
    task = Task(id=task_id)
    bufs = []
    for name in "ABC":
        base = bump.alloc(size)
        a = Allocation(f"{task_id}.{name}", base, size, task_id)
        task.allocations.append(a)
        bufs.append(a)
    scratch = _maybe_scratch(task, bump, indirect_rate, page_size, task_id)
    _seed_memcpys(task, h2d_bw)
    rng = random.Random(seed)
    latency = 3 * size / mem_bw
    for _ in range(iterations):
        access = [ByteRange(b.base_addr, size) for b in bufs]
        if scratch is not None:
            n_ind = _indirect_pages(3 * size, indirect_rate, page_size)
            access.append(_indirect_region(rng, scratch, n_ind, page_size))
        task.commands.append(
            Command(
                kind=CommandKind.KERNEL,
                kernel_name=kernel_name,
                latency_s=latency,
                launch_args=(
                    Arg(bufs[0].base_addr, 64),
                    Arg(bufs[1].base_addr, 64),
                    Arg(bufs[2].base_addr, 64),
                    Arg(n_elems, 64),
                ),
                grid_dims=(-(-n_elems // 256), 1, 1),
                block_dims=(256, 1, 1),
                ground_truth_access=tuple(access),
            )
        )
    task.validate()
    return task


def _maybe_scratch(task, bump, indirect_rate, page_size, task_id):
    if indirect_rate <= 0:
        return None
    scratch = Allocation(f"{task_id}.scratch", bump.alloc(256 * page_size), 256 * page_size, task_id)
    task.allocations.append(scratch)
    return scratch


def _indirect_pages(base_bytes: int, rate: float, page: int) -> int:
    base_pages = -(-base_bytes // page)
    return max(1, round(base_pages * rate / (1.0 - rate)))


def gen_matmul(
    m: int,
    n: int,
    k: int,
    count: int = 1,
    *,
    elem_bytes: int = 4,
    task_id: str = "mm",
    base_addr: int = 1 << 40,
    flops: float = DEFAULT_FLOPS,
    h2d_bw: float = DEFAULT_H2D_BW,
    kernel_name: str = "matmul",
    page_size: int = 4096,
) -> Task:
    """Compute-bound task: `count` kernels over A (m*k), B (k*n), C (m*n),
    args [ptrA, ptrB, ptrC, M, N, K]; latency cubic in the dimensions."""
    if min(m, n, k) <= 0:
        raise ValueError("dimensions must be positive")
    bump = _Bump(base_addr, page_size)
    sizes = (m * k * elem_bytes, k * n * elem_bytes, m * n * elem_bytes)
    task = Task(id=task_id)
    for name, size in zip("ABC", sizes):
        task.allocations.append(
            Allocation(f"{task_id}.{name}", bump.alloc(size), size, task_id)
        )
    _seed_memcpys(task, h2d_bw)
    latency = 2.0 * m * n * k / flops
    for _ in range(count):
        task.commands.append(
            Command(
                kind=CommandKind.KERNEL,
                kernel_name=kernel_name,
                latency_s=latency,
                launch_args=(
                    Arg(task.allocations[0].base_addr, 64),
                    Arg(task.allocations[1].base_addr, 64),
                    Arg(task.allocations[2].base_addr, 64),
                    Arg(m, 32),
                    Arg(n, 32),
                    Arg(k, 32),
                ),
                grid_dims=(-(-m // 16), -(-n // 16), 1),
                block_dims=(16, 16, 1),
                ground_truth_access=tuple(
                    ByteRange(a.base_addr, s)
                    for a, s in zip(task.allocations, sizes)
                ),
            )
        )
    task.validate()
    return task


KV_ROW_BYTES = 256


def gen_llm_like(
    layers: int,
    weight_bytes_per_layer: int,
    kv_max_bytes: int,
    decode_steps: int,
    kv_used_fraction_schedule: list[float],
    *,
    task_id: str = "llm",
    base_addr: int = 1 << 40,
    mem_bw: float = DEFAULT_MEM_BW,
    h2d_bw: float = DEFAULT_H2D_BW,
    kernel_name: str = "decode_layer",
    page_size: int = 4096,
) -> Task:
    """Decode loop over one monolithic weight buffer (sliced per layer) and
    per-layer KV buffers, of which only the current-sequence prefix is
    touched; a 32-bit seq_len argument drives the KV extent."""
    if len(kv_used_fraction_schedule) != decode_steps:
        raise ValueError("schedule length must equal decode_steps")
    prev = 0.0
    for f in kv_used_fraction_schedule:
        if not (0.0 < f <= 1.0) or f < prev:
            raise ValueError("fractions must be in (0, 1] and non-decreasing")
        prev = f
    bump = _Bump(base_addr, page_size)
    task = Task(id=task_id)
    weights = Allocation(
        f"{task_id}.weights", bump.alloc(layers * weight_bytes_per_layer),
        layers * weight_bytes_per_layer, task_id,
    )
    task.allocations.append(weights)
    kvs = []
    for i in range(layers):
        kv = Allocation(f"{task_id}.kv{i}", bump.alloc(kv_max_bytes), kv_max_bytes, task_id)
        task.allocations.append(kv)
        kvs.append(kv)
    _seed_memcpys(task, h2d_bw)
    task.commands.extend(decode_step_commands(
        task, kv_used_fraction_schedule, weight_bytes_per_layer, kv_max_bytes,
        mem_bw=mem_bw, kernel_name=kernel_name,
    ))
    task.validate()
    return task


def decode_step_commands(
    task: Task,
    fraction_schedule: list[float],
    weight_bytes_per_layer: int,
    kv_max_bytes: int,
    *,
    mem_bw: float = DEFAULT_MEM_BW,
    kernel_name: str = "decode_layer",
) -> list[Command]:
    """Kernels for the given decode steps of an llm-like task; usable both
    up front and for appending steps mid-simulation."""
    weights = task.allocations[0]
    kvs = [a for a in task.allocations[1:] if ".kv" in a.id]
    layers = len(kvs)
    cmds = []
    for frac in fraction_schedule:
        seq_len = max(1, int(frac * kv_max_bytes) // KV_ROW_BYTES)
        used = seq_len * KV_ROW_BYTES
        for i in range(layers):
            slice_ptr = weights.base_addr + i * weight_bytes_per_layer
            cmds.append(
                Command(
                    kind=CommandKind.KERNEL,
                    kernel_name=kernel_name,
                    latency_s=(weight_bytes_per_layer + used) / mem_bw,
                    launch_args=(
                        Arg(slice_ptr, 64),
                        Arg(kvs[i].base_addr, 64),
                        Arg(seq_len, 32),
                    ),
                    ground_truth_access=(
                        ByteRange(slice_ptr, weight_bytes_per_layer),
                        ByteRange(kvs[i].base_addr, used),
                    ),
                )
            )
    return cmds


# ---------------------------------------------------------------------------
# Planted-rule corpus for analyzer verification


@dataclass
class PlantedKernel:
    name: str
    kind: str  # fixed | linear | strided
    rule_page_counts: list[int] = field(default_factory=list)  # per record
    indirect_page_counts: list[int] = field(default_factory=list)
    coeff: int = 0
    arg_indices: tuple[int, ...] = ()
    fixed_size: int = 0


@dataclass
class PlantedCorpus:
    task: Task
    kernels: dict[str, PlantedKernel]

    def expected_fneg(self, name: str) -> float:
        pk = self.kernels[name]
        rates = [
            ind / (ind + rule)
            for rule, ind in zip(pk.rule_page_counts, pk.indirect_page_counts)
        ]
        return sum(rates) / len(rates)


def gen_template_corpus(
    n_kernels: int = 60,
    records_per: int = 4,
    indirect_rate: float = 0.0025,
    seed: int = 0,
    page_size: int = 4096,
    task_id: str = "corpus",
) -> PlantedCorpus:
    """Corpus of kernels with deterministically planted fixed-size, linear
    and strided access rules; a configurable fraction of the touched pages
    is indirect (not derivable from any argument)."""
    rng = random.Random(seed)
    bump = _Bump(task_base_addr(0), page_size)
    task = Task(id=task_id)
    scratch = Allocation(f"{task_id}.scratch", bump.alloc(4096 * page_size), 4096 * page_size, task_id)
    task.allocations.append(scratch)
    kernels: dict[str, PlantedKernel] = {}
    kinds = ["fixed", "linear", "strided"]
    # deterministic round-robin over kinds so every kind appears
    for ki in range(n_kernels):
        kind = kinds[ki % 3]
        name = f"{kind}_k{ki}"
        pk = PlantedKernel(name=name, kind=kind)
        indirect = rng.random() < 12 * indirect_rate  # a few kernels carry all indirection
        if kind == "fixed":
            size = rng.randrange(1, 9) * page_size
            alloc = Allocation(f"{task_id}.{name}", bump.alloc(size), size, task_id)
            task.allocations.append(alloc)
            pk.fixed_size = size
            for r in range(records_per):
                access = [ByteRange(alloc.base_addr, size)]
                args = (Arg(alloc.base_addr, 64), Arg(rng.randrange(1, 1000), 32))
                rule_pages = size // page_size
                ind_pages = _plant_indirect(rng, access, scratch, rule_pages, indirect, page_size)
                pk.rule_page_counts.append(rule_pages)
                pk.indirect_page_counts.append(ind_pages)
                task.commands.append(_corpus_cmd(name, args, access))
        elif kind == "linear":
            coeff = rng.choice([2, 4, 8, 16])
            width = rng.choice([32, 64])
            max_n = 4 * page_size // coeff
            alloc = Allocation(f"{task_id}.{name}", bump.alloc(coeff * max_n), coeff * max_n, task_id)
            task.allocations.append(alloc)
            pk.coeff = coeff
            pk.arg_indices = (1,)
            for r in range(records_per):
                n = rng.randrange(page_size // coeff, max_n + 1)
                size = coeff * n
                access = [ByteRange(alloc.base_addr, size)]
                args = (Arg(alloc.base_addr, 64), Arg(n, width))
                rule_pages = -(-size // page_size)
                ind_pages = _plant_indirect(rng, access, scratch, rule_pages, indirect, page_size)
                pk.rule_page_counts.append(rule_pages)
                pk.indirect_page_counts.append(ind_pages)
                task.commands.append(_corpus_cmd(name, args, access))
        else:  # strided
            chunk_coeff = rng.choice([4, 8])
            stride = 4 * page_size
            max_count = 8
            max_chunk_elems = page_size // chunk_coeff
            alloc_size = stride * max_count
            alloc = Allocation(f"{task_id}.{name}", bump.alloc(alloc_size), alloc_size, task_id)
            task.allocations.append(alloc)
            pk.coeff = chunk_coeff
            pk.arg_indices = (1, 2)
            for r in range(records_per):
                count = rng.randrange(2, max_count + 1)
                chunk_elems = rng.randrange(page_size // (2 * chunk_coeff), max_chunk_elems + 1)
                chunk = chunk_coeff * chunk_elems
                access = [
                    ByteRange(alloc.base_addr + j * stride, chunk) for j in range(count)
                ]
                args = (Arg(alloc.base_addr, 64), Arg(count, 32), Arg(chunk_elems, 32))
                rule_pages = count * (-(-chunk // page_size))
                ind_pages = _plant_indirect(rng, access, scratch, rule_pages, indirect, page_size)
                pk.rule_page_counts.append(rule_pages)
                pk.indirect_page_counts.append(ind_pages)
                task.commands.append(_corpus_cmd(name, args, access))
        kernels[name] = pk
    task.validate()
    return PlantedCorpus(task, kernels)


def _plant_indirect(rng, access, scratch, rule_pages, flagged: bool, page: int) -> int:
    if not flagged:
        return 0
    n_ind = max(1, rule_pages // 32)
    access.append(_indirect_region(rng, scratch, n_ind, page))
    return n_ind


def _corpus_cmd(name, args, access):
    return Command(
        kind=CommandKind.KERNEL,
        kernel_name=name,
        latency_s=10e-6,
        launch_args=args,
        ground_truth_access=tuple(access),
    )


# ---------------------------------------------------------------------------
# Trace serialization


def save_trace(task: Task, path: str):
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_trace(task))


def format_trace(task: Task) -> str:
    lines = [TRACE_HEADER, f"TASK {task.id}"]
    for a in task.allocations:
        lines.append(f"ALLOC {a.id} {a.base_addr} {a.size_bytes}")
    for c in task.commands:
        if c.kind is CommandKind.KERNEL:
            args = ",".join(_fmt_arg(a) for a in c.launch_args)
            access = ",".join(
                f"({r.start_addr},{r.length_bytes})" for r in c.ground_truth_access
            )
            line = f"KERNEL {c.kernel_name} {c.latency_s!r} args=[{args}] access=[{access}]"
            if c.grid_dims != (1, 1, 1) or c.block_dims != (1, 1, 1):
                line += (
                    f" grid=({c.grid_dims[0]},{c.grid_dims[1]},{c.grid_dims[2]})"
                    f" block=({c.block_dims[0]},{c.block_dims[1]},{c.block_dims[2]})"
                )
            lines.append(line)
        else:
            d = "H2D" if c.kind is CommandKind.MEMCPY_H2D else "D2H"
            lines.append(
                f"MEMCPY {d} {c.memcpy_src} {c.memcpy_dst} {c.memcpy_size} {c.latency_s!r}"
            )
    return "\n".join(lines) + "\n"


def _fmt_arg(a: Arg) -> str:
    if a.raw is not None:
        return f"raw:{a.raw.hex()}"
    return f"{a.width}:{a.value}"


def load_trace(path: str) -> Task:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise TraceError(f"cannot read trace {path!r}: {e}") from e
    return parse_trace(text, source=path)


def parse_trace(text: str, source: str = "<string>") -> Task:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise TraceError(f"{source}:1: missing '{TRACE_HEADER}' header")
    task = Task(id="trace")
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            _parse_record(task, line)
        except (ValueError, IndexError) as e:
            raise TraceError(f"{source}:{lineno}: {e}") from e
    try:
        task.validate()
    except ValueError as e:
        raise TraceError(f"{source}: {e}") from e
    return task


def _parse_record(task: Task, line: str):
    parts = line.split()
    rec = parts[0]
    if rec == "TASK":
        task.id = parts[1]
        for i, a in enumerate(task.allocations):
            task.allocations[i] = Allocation(a.id, a.base_addr, a.size_bytes, task.id)
    elif rec == "ALLOC":
        task.allocations.append(
            Allocation(parts[1], int(parts[2]), int(parts[3]), task.id)
        )
    elif rec == "KERNEL":
        name, latency = parts[1], float(parts[2])
        fields = dict(p.split("=", 1) for p in parts[3:])
        args = tuple(_parse_arg(tok) for tok in _split_list(fields.get("args", "[]")))
        access = tuple(
            _parse_range(tok) for tok in _split_tuples(fields.get("access", "[]"))
        )
        grid = _parse_dims(fields.get("grid", "(1,1,1)"))
        block = _parse_dims(fields.get("block", "(1,1,1)"))
        task.commands.append(
            Command(
                kind=CommandKind.KERNEL,
                kernel_name=name,
                latency_s=latency,
                launch_args=args,
                grid_dims=grid,
                block_dims=block,
                ground_truth_access=access,
            )
        )
    elif rec == "MEMCPY":
        d, src, dst, size, latency = parts[1], int(parts[2]), int(parts[3]), int(parts[4]), float(parts[5])
        if d not in ("H2D", "D2H"):
            raise ValueError(f"bad memcpy direction {d!r}")
        kind = CommandKind.MEMCPY_H2D if d == "H2D" else CommandKind.MEMCPY_D2H
        task.commands.append(
            Command(
                kind=kind,
                latency_s=latency,
                launch_args=(Arg(src, 64), Arg(dst, 64), Arg(size, 64)),
            )
        )
    else:
        raise ValueError(f"unknown record type {rec!r}")


def _split_list(s: str) -> list[str]:
    if not (s.startswith("[") and s.endswith("]")):
        raise ValueError(f"expected bracketed list, got {s!r}")
    inner = s[1:-1]
    return [t for t in inner.split(",") if t] if inner else []


def _split_tuples(s: str) -> list[str]:
    if not (s.startswith("[") and s.endswith("]")):
        raise ValueError(f"expected bracketed list, got {s!r}")
    inner = s[1:-1]
    out = []
    depth = 0
    cur = ""
    for ch in inner:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            if cur:
                out.append(cur)
            cur = ""
        else:
            cur += ch
    if cur:
        out.append(cur)
    return out


def _parse_arg(tok: str) -> Arg:
    kind, val = tok.split(":", 1)
    if kind == "raw":
        return Arg(0, 64, raw=bytes.fromhex(val))
    width = int(kind)
    return Arg(int(val), width)


def _parse_range(tok: str) -> ByteRange:
    if not (tok.startswith("(") and tok.endswith(")")):
        raise ValueError(f"expected (start,len), got {tok!r}")
    a, b = tok[1:-1].split(",")
    return ByteRange(int(a), int(b))


def _parse_dims(tok: str) -> tuple[int, int, int]:
    if not (tok.startswith("(") and tok.endswith(")")):
        raise ValueError(f"expected (x,y,z), got {tok!r}")
    x, y, z = tok[1:-1].split(",")
    return (int(x), int(y), int(z))
