"""Per-command working-set prediction.

Template mode evaluates the inferred rules against the live launch
arguments; allocation mode is the coarse fallback that charges any pointed-to
allocation in full. Memory copies carry their device range explicitly, so
both modes are exact for them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .analyzer import KernelDescriptor
from .core import Allocation, Command, CommandKind, PageSet, pages_of, pages_of_ranges


@dataclass
class Prediction:
    pages: PageSet
    complete: bool = True  # False when a rule could not be evaluated


def predict(
    descriptors: dict[str, KernelDescriptor],
    cmd: Command,
    page_size: int,
) -> Prediction:
    if cmd.kind is not CommandKind.KERNEL:
        return Prediction(pages_of(cmd.device_range(), page_size))
    desc = descriptors.get(cmd.kernel_name)
    if desc is None:
        return Prediction(PageSet(), complete=False)
    pages = PageSet()
    complete = True
    for rule in desc.rules:
        regions = rule.predict_regions(cmd)
        if regions is None:
            complete = False
            continue
        pages = pages | pages_of_ranges(regions, page_size)
    if desc.unpredictable_fraction > 0.0:
        complete = False
    return Prediction(pages, complete)


def predict_allocation(
    allocations: Sequence[Allocation],
    cmd: Command,
    page_size: int,
) -> Prediction:
    """Whole-allocation prediction: each 64-bit argument that lands inside a
    live allocation claims that allocation entirely."""
    if cmd.kind is not CommandKind.KERNEL:
        return Prediction(pages_of(cmd.device_range(), page_size))
    pages = PageSet()
    for a in cmd.launch_args:
        if a.raw is not None or a.width != 64:
            continue
        for alloc in allocations:
            if alloc.contains_addr(a.value):
                rng = alloc_range(alloc)
                pages = pages | pages_of(rng, page_size)
                break
    return Prediction(pages, complete=True)


def alloc_range(alloc: Allocation):
    from .core import ByteRange

    return ByteRange(alloc.base_addr, alloc.size_bytes)


def ground_truth_prediction(cmd: Command, page_size: int) -> Prediction:
    if cmd.kind is not CommandKind.KERNEL:
        return Prediction(pages_of(cmd.device_range(), page_size))
    return Prediction(pages_of_ranges(cmd.ground_truth_access, page_size))


def accuracy(predicted: PageSet, actual: PageSet) -> tuple[float, float]:
    """(false-negative, false-positive) rates over actually touched pages."""
    n_actual = len(actual)
    if n_actual == 0:
        return (0.0, 0.0)
    fneg = len(actual - predicted) / n_actual
    fpos = len(predicted - actual) / n_actual
    return (fneg, fpos)
