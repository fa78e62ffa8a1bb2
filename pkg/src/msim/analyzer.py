"""Offline inference of launch-argument -> access-region mappings.

Each identified pointer argument gets one rule, matched strictly in order:
fixed-size, then linear in a product of integer arguments, then strided
(regular chunks whose stride/chunk/count each follow a linear form). All
coefficients are exact rationals; a linear match requires the size to be an
exact constant multiple of the argument product in every record, which is
what makes over-prediction impossible for rule-covered regions.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .core import Arg, ByteRange, Command, CommandKind

DESC_HEADER = "MSIM-DESC v1"

MAX_PRODUCT_TERMS = 3


class DescriptorError(ValueError):
    pass


@dataclass(frozen=True)
class InvocationRecord:
    kernel_name: str
    launch_args: tuple[Arg, ...]
    grid_dims: tuple[int, int, int] = (1, 1, 1)
    block_dims: tuple[int, int, int] = (1, 1, 1)
    observed_regions: tuple[ByteRange, ...] = ()
    latency_s: float = 1e-6

    @classmethod
    def from_command(cls, cmd: Command) -> "InvocationRecord":
        assert cmd.kind is CommandKind.KERNEL
        return cls(
            kernel_name=cmd.kernel_name,
            launch_args=cmd.launch_args,
            grid_dims=cmd.grid_dims,
            block_dims=cmd.block_dims,
            observed_regions=coalesce_regions(cmd.ground_truth_access),
            latency_s=cmd.latency_s,
        )


def coalesce_regions(regions: Sequence[ByteRange]) -> tuple[ByteRange, ...]:
    """Sort by start and merge strictly overlapping regions. Touching
    regions stay separate: adjacent buffers must keep distinct starts."""
    rs = sorted(regions, key=lambda r: r.start_addr)
    out: list[ByteRange] = []
    for r in rs:
        if out and r.start_addr < out[-1].end_addr:
            prev = out[-1]
            end = max(prev.end_addr, r.end_addr)
            out[-1] = ByteRange(prev.start_addr, end - prev.start_addr)
        else:
            out.append(r)
    return tuple(out)


def slice_struct_args(raw: bytes) -> list[tuple[int, int, int]]:
    """Every aligned 64- and 32-bit window of a struct payload as an
    independent (offset, width, value) candidate."""
    out = []
    for off in range(0, len(raw) - 7, 8):
        out.append((off, 64, struct.unpack_from("<Q", raw, off)[0]))
    for off in range(0, len(raw) - 3, 4):
        out.append((off, 32, struct.unpack_from("<I", raw, off)[0]))
    return out


def slot_values(
    launch_args: Sequence[Arg],
    grid_dims: tuple[int, int, int] = (1, 1, 1),
    block_dims: tuple[int, int, int] = (1, 1, 1),
) -> dict[str, int]:
    """Integer candidate slots: argument words, struct slices, and the six
    launch-configuration dimensions."""
    vals: dict[str, int] = {}
    for i, a in enumerate(launch_args):
        if a.raw is not None:
            for off, width, v in slice_struct_args(a.raw):
                vals[f"a{i}+{off}w{width}"] = v
        else:
            vals[f"a{i}"] = a.value
    for name, v in zip(("gx", "gy", "gz"), grid_dims):
        vals[name] = v
    for name, v in zip(("bx", "by", "bz"), block_dims):
        vals[name] = v
    return vals


def _slot_order(slot: str) -> tuple:
    # argument slots first (by index, then struct offset), then grid/block
    if slot.startswith("a"):
        body = slot[1:]
        if "+" in body:
            i, rest = body.split("+")
            off, width = rest.split("w")
            return (0, int(i), 1, int(off), -int(width))
        return (0, int(body), 0, 0, 0)
    order = {"gx": 0, "gy": 1, "gz": 2, "bx": 3, "by": 4, "bz": 5}
    return (1, order[slot], 0, 0, 0)


@dataclass(frozen=True)
class LinearExpr:
    """Either a constant or coeff * product(slots)."""

    coeff: Fraction
    slots: tuple[str, ...] = ()

    def evaluate(self, vals: dict[str, int]) -> Optional[int]:
        prod = Fraction(1)
        for s in self.slots:
            if s not in vals:
                return None
            prod *= vals[s]
        v = self.coeff * prod
        if v.denominator != 1:
            return None
        return int(v)

    def serialize(self) -> str:
        if not self.slots:
            return f"fixed:{self.coeff}"
        return "lin:" + str(self.coeff) + "*" + "*".join(self.slots)

    @classmethod
    def parse(cls, s: str) -> "LinearExpr":
        if s.startswith("fixed:"):
            return cls(Fraction(s[6:]))
        if s.startswith("lin:"):
            parts = s[4:].split("*")
            return cls(Fraction(parts[0]), tuple(parts[1:]))
        raise DescriptorError(f"bad linear expression {s!r}")


@dataclass(frozen=True)
class TemplateRule:
    ptr_arg_index: int
    kind: str  # fixed | linear | strided | unpredictable
    offset_bytes: int = 0
    size: Optional[LinearExpr] = None  # fixed/linear extent
    stride: Optional[LinearExpr] = None
    chunk: Optional[LinearExpr] = None
    count: Optional[LinearExpr] = None

    def predict_regions(self, cmd: Command) -> Optional[list[ByteRange]]:
        """Evaluate against a command's live argument values; None when the
        rule is unpredictable or references a missing slot."""
        if self.kind == "unpredictable":
            return None
        if self.ptr_arg_index >= len(cmd.launch_args):
            return None
        base = cmd.launch_args[self.ptr_arg_index].value + self.offset_bytes
        vals = slot_values(cmd.launch_args, cmd.grid_dims, cmd.block_dims)
        if self.kind in ("fixed", "linear"):
            size = self.size.evaluate(vals)
            if size is None:
                return None
            return [ByteRange(base, max(size, 1))]  # a live pointer touches >= 1 byte
        stride = self.stride.evaluate(vals)
        chunk = self.chunk.evaluate(vals)
        count = self.count.evaluate(vals)
        if stride is None or chunk is None or count is None or count < 1:
            return None
        return [ByteRange(base + j * stride, max(chunk, 1)) for j in range(count)]


@dataclass
class KernelDescriptor:
    kernel_name: str
    rules: list[TemplateRule] = field(default_factory=list)
    profiled_latency_s: float = 1e-6
    unpredictable_fraction: float = 0.0


def identify_pointer_args(records: Sequence[InvocationRecord]) -> list[int]:
    """64-bit argument indices whose value is a region start in every record."""
    if not records:
        raise ValueError("need at least one record")
    n_args = len(records[0].launch_args)
    out = []
    for i in range(n_args):
        ok = True
        for rec in records:
            if i >= len(rec.launch_args):
                ok = False
                break
            a = rec.launch_args[i]
            if a.raw is not None or a.width != 64:
                ok = False
                break
            if not any(r.start_addr == a.value for r in rec.observed_regions):
                ok = False
                break
        if ok:
            out.append(i)
    return out


def _constant_offsets(records: Sequence[InvocationRecord], arg_index: int) -> Optional[int]:
    """Smallest positive constant c with value+c a region start everywhere."""
    common: Optional[set[int]] = None
    for rec in records:
        a = rec.launch_args[arg_index]
        if a.raw is not None or a.width != 64:
            return None
        # a struct/base pointer sits near its regions; an offset rivaling the
        # arg value itself means the arg is a plain integer, not an address
        offs = {
            r.start_addr - a.value
            for r in rec.observed_regions
            if a.value < r.start_addr < 2 * a.value
        }
        common = offs if common is None else (common & offs)
        if not common:
            return None
    return min(common)


def _family(rec: InvocationRecord, base: int, other_bases: set[int]) -> list[ByteRange]:
    """Regions belonging to a pointer: everything from its base up to the
    next other pointer's base (regions are coalesced and sorted)."""
    ceiling = min((b for b in other_bases if b > base), default=None)
    fam = [
        r
        for r in rec.observed_regions
        if r.start_addr >= base and (ceiling is None or r.start_addr < ceiling)
    ]
    return fam


def _candidate_slots(
    records: Sequence[InvocationRecord], exclude_ptr_indices: set[int]
) -> list[str]:
    """Slots usable as linear factors: positive in every record, deduplicated
    by value signature (lowest-ordered slot kept)."""
    per_rec = [
        slot_values(r.launch_args, r.grid_dims, r.block_dims) for r in records
    ]
    names = sorted(per_rec[0].keys(), key=_slot_order)
    seen_sig: dict[tuple, str] = {}
    out = []
    for name in names:
        if name.startswith("a") and "+" not in name:
            if int(name[1:]) in exclude_ptr_indices:
                continue
        vals = tuple(v.get(name) for v in per_rec)
        if any(v is None or v <= 0 for v in vals):
            continue
        if vals in seen_sig:
            continue
        seen_sig[vals] = name
        out.append(name)
    return out


def fit_linear_expr(
    values: Sequence[int],
    records: Sequence[InvocationRecord],
    slots: list[str],
    max_terms: int = MAX_PRODUCT_TERMS,
) -> Optional[LinearExpr]:
    """Constant value, or an exact coeff * product(args) fit. Preference:
    constant, then fewest factors, then lowest slot indices."""
    if all(v == values[0] for v in values):
        return LinearExpr(Fraction(values[0]))
    per_rec = [slot_values(r.launch_args, r.grid_dims, r.block_dims) for r in records]
    for n_terms in range(1, max_terms + 1):
        for combo in itertools.combinations_with_replacement(slots, n_terms):
            coeff = None
            ok = True
            for v, vals in zip(values, per_rec):
                prod = 1
                for s in combo:
                    prod *= vals[s]
                c = Fraction(v, prod)
                if coeff is None:
                    coeff = c
                elif c != coeff:
                    ok = False
                    break
            if ok and coeff is not None and coeff > 0:
                return LinearExpr(coeff, combo)
    return None


def infer_rule(
    records: Sequence[InvocationRecord],
    ptr_arg_index: int,
    offset_bytes: int = 0,
    all_ptr_indices: Optional[dict[int, int]] = None,
) -> TemplateRule:
    """Match a pointer's spatial extent against the templates in order:
    fixed, linear, strided. Incompatible records yield unpredictable."""
    if all_ptr_indices is None:
        all_ptr_indices = {ptr_arg_index: offset_bytes}
    families = []
    for rec in records:
        base = rec.launch_args[ptr_arg_index].value + offset_bytes
        other = {
            rec.launch_args[i].value + off
            for i, off in all_ptr_indices.items()
            if not (i == ptr_arg_index and off == offset_bytes)
        }
        fam = _family(rec, base, other)
        if not fam or fam[0].start_addr != base:
            return TemplateRule(ptr_arg_index, "unpredictable", offset_bytes)
        families.append(fam)
    slots = _candidate_slots(records, set(all_ptr_indices.keys()))
    if all(len(f) == 1 for f in families):
        sizes = [f[0].length_bytes for f in families]
        if all(s == sizes[0] for s in sizes):
            return TemplateRule(
                ptr_arg_index, "fixed", offset_bytes, size=LinearExpr(Fraction(sizes[0]))
            )
        expr = fit_linear_expr(sizes, records, slots)
        if expr is not None and expr.slots:
            return TemplateRule(ptr_arg_index, "linear", offset_bytes, size=expr)
        return TemplateRule(ptr_arg_index, "unpredictable", offset_bytes)
    # multiple chunks somewhere: strided family
    strides, chunks, counts = [], [], []
    for fam in families:
        if len(fam) < 2:
            return TemplateRule(ptr_arg_index, "unpredictable", offset_bytes)
        sts = {b.start_addr - a.start_addr for a, b in zip(fam, fam[1:])}
        lens = {r.length_bytes for r in fam}
        if len(sts) != 1 or len(lens) != 1:
            return TemplateRule(ptr_arg_index, "unpredictable", offset_bytes)
        strides.append(sts.pop())
        chunks.append(lens.pop())
        counts.append(len(fam))
    stride_e = fit_linear_expr(strides, records, slots)
    chunk_e = fit_linear_expr(chunks, records, slots)
    count_e = fit_linear_expr(counts, records, slots)
    if stride_e is None or chunk_e is None or count_e is None:
        return TemplateRule(ptr_arg_index, "unpredictable", offset_bytes)
    return TemplateRule(
        ptr_arg_index, "strided", offset_bytes,
        stride=stride_e, chunk=chunk_e, count=count_e,
    )


def build_descriptor(
    kernel_name: str,
    records: Sequence[InvocationRecord],
    min_records: int = 2,
) -> KernelDescriptor:
    """One rule per identified pointer argument (constant base offsets
    supported), mean profiled latency, plus the fraction of observed region
    instances no rule accounts for."""
    if not records:
        raise ValueError(f"no records for kernel {kernel_name!r}")
    ptr_offsets: dict[int, int] = {i: 0 for i in identify_pointer_args(records)}
    n_args = len(records[0].launch_args)
    for i in range(n_args):
        if i in ptr_offsets:
            continue
        c = _constant_offsets(records, i)
        if c is not None:
            ptr_offsets[i] = c
    rules = []
    for i, off in sorted(ptr_offsets.items()):
        rules.append(infer_rule(records, i, off, ptr_offsets))
    desc = KernelDescriptor(
        kernel_name=kernel_name,
        rules=[r for r in rules if r.kind != "unpredictable"],
        profiled_latency_s=sum(r.latency_s for r in records) / len(records),
    )
    desc.unpredictable_fraction = _uncovered_fraction(desc, records)
    return desc


def _uncovered_fraction(desc: KernelDescriptor, records: Sequence[InvocationRecord]) -> float:
    total = 0
    misses = 0
    for rec in records:
        cmd = _record_as_command(rec)
        predicted = []
        for rule in desc.rules:
            regs = rule.predict_regions(cmd)
            if regs:
                predicted.extend(regs)
        for r in rec.observed_regions:
            total += 1
            if not any(p.start_addr <= r.start_addr and p.end_addr >= r.end_addr for p in predicted):
                misses += 1
    return misses / total if total else 0.0


def classify_regions(
    desc: KernelDescriptor, records: Sequence[InvocationRecord]
) -> dict[str, int]:
    """Count observed region instances by the rule kind that predicts them;
    uncovered instances count as 'others'."""
    counts = {"fixed": 0, "linear": 0, "strided": 0, "others": 0}
    for rec in records:
        cmd = _record_as_command(rec)
        by_rule = [(rule, rule.predict_regions(cmd) or []) for rule in desc.rules]
        for r in rec.observed_regions:
            kind = "others"
            for rule, regs in by_rule:
                if any(p.start_addr <= r.start_addr and p.end_addr >= r.end_addr for p in regs):
                    kind = rule.kind
                    break
            counts[kind] += 1
    return counts


def _record_as_command(rec: InvocationRecord) -> Command:
    return Command(
        kind=CommandKind.KERNEL,
        kernel_name=rec.kernel_name,
        latency_s=rec.latency_s,
        launch_args=rec.launch_args,
        grid_dims=rec.grid_dims,
        block_dims=rec.block_dims,
    )


def records_from_task(task) -> dict[str, list[InvocationRecord]]:
    out: dict[str, list[InvocationRecord]] = {}
    for cmd in task.commands:
        if cmd.kind is CommandKind.KERNEL:
            out.setdefault(cmd.kernel_name, []).append(InvocationRecord.from_command(cmd))
    return out


def build_descriptors(task) -> dict[str, KernelDescriptor]:
    return {
        name: build_descriptor(name, recs)
        for name, recs in records_from_task(task).items()
    }


# ---------------------------------------------------------------------------
# Descriptor serialization


def save_descriptors(descs: dict[str, KernelDescriptor], path: str):
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_descriptors(descs))


def format_descriptors(descs: dict[str, KernelDescriptor]) -> str:
    lines = [DESC_HEADER]
    for name in sorted(descs):
        d = descs[name]
        lines.append(
            f"KERNEL {name} latency={d.profiled_latency_s!r} "
            f"unpredictable={d.unpredictable_fraction!r}"
        )
        for r in d.rules:
            if r.kind in ("fixed", "linear"):
                lines.append(
                    f"RULE ptr={r.ptr_arg_index} offset={r.offset_bytes} "
                    f"kind={r.kind} size={r.size.serialize()}"
                )
            else:
                lines.append(
                    f"RULE ptr={r.ptr_arg_index} offset={r.offset_bytes} kind=strided "
                    f"stride={r.stride.serialize()} chunk={r.chunk.serialize()} "
                    f"count={r.count.serialize()}"
                )
    return "\n".join(lines) + "\n"


def load_descriptors(path: str) -> dict[str, KernelDescriptor]:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != DESC_HEADER:
        raise DescriptorError(f"{path}:1: missing '{DESC_HEADER}' header")
    descs: dict[str, KernelDescriptor] = {}
    cur: Optional[KernelDescriptor] = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "KERNEL":
                fields = dict(p.split("=", 1) for p in parts[2:])
                cur = KernelDescriptor(
                    kernel_name=parts[1],
                    profiled_latency_s=float(fields["latency"]),
                    unpredictable_fraction=float(fields["unpredictable"]),
                )
                descs[parts[1]] = cur
            elif parts[0] == "RULE":
                if cur is None:
                    raise DescriptorError("RULE before KERNEL")
                fields = dict(p.split("=", 1) for p in parts[1:])
                kind = fields["kind"]
                rule = TemplateRule(
                    ptr_arg_index=int(fields["ptr"]),
                    kind=kind,
                    offset_bytes=int(fields.get("offset", "0")),
                    size=LinearExpr.parse(fields["size"]) if "size" in fields else None,
                    stride=LinearExpr.parse(fields["stride"]) if "stride" in fields else None,
                    chunk=LinearExpr.parse(fields["chunk"]) if "chunk" in fields else None,
                    count=LinearExpr.parse(fields["count"]) if "count" in fields else None,
                )
                cur.rules.append(rule)
            else:
                raise DescriptorError(f"unknown record {parts[0]!r}")
        except (KeyError, ValueError) as e:
            raise DescriptorError(f"{path}:{lineno}: {e}") from e
    return descs
