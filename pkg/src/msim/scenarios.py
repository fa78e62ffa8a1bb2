"""Canned multi-tenant scenarios sized relative to HBM capacity.

Footprints are expressed through the subscription ratio: at ratio r with n
tasks, each task owns r/n of HBM, so the aggregate footprint is r times the
card. Command latencies come from simple roofline estimates so the slice
budget maps to a realistic number of kernels.
"""

from __future__ import annotations

import math

from .core import HwConfig, Task
from .scheduler import Policy
from .workload import (
    DEFAULT_FLOPS,
    DEFAULT_MEM_BW,
    gen_llm_like,
    gen_matmul,
    gen_vector_add,
    task_base_addr,
)

STREAM_TIMESLICE_S = 1.75e-3
LLM_MEM_BW = 30e9  # decode kernels run far below peak memory bandwidth


def _page_align(n: int, page: int) -> int:
    return max(page, (n // page) * page)


def streaming_scenario(
    hw: HwConfig,
    subscription_ratio: float,
    *,
    n_tasks: int = 4,
    slices_per_task: int = 10,
    timeslice_s: float = STREAM_TIMESLICE_S,
    mem_bw: float = DEFAULT_MEM_BW,
    flops: float = DEFAULT_FLOPS,
    indirect_rate: float = 0.0,
    seed: int = 0,
) -> tuple[list[Task], Policy]:
    """Alternating vector-add and matmul tasks streaming over their whole
    footprint every kernel; the demand-paging collapse benchmark."""
    if subscription_ratio <= 0:
        raise ValueError("subscription ratio must be positive")
    page = hw.page_size_bytes
    per_task = subscription_ratio * hw.hbm_capacity_bytes / n_tasks
    budget = slices_per_task * timeslice_s
    tasks: list[Task] = []
    for i in range(n_tasks):
        base = task_base_addr(i)
        if i % 2 == 0:
            arr = _page_align(int(per_task // 3), page)
            n_elems = arr // 4
            latency = 3 * arr / mem_bw
            tasks.append(
                gen_vector_add(
                    n_elems,
                    iterations=max(1, round(budget / latency)),
                    task_id=f"va{i}",
                    base_addr=base,
                    mem_bw=mem_bw,
                    indirect_rate=indirect_rate,
                    seed=seed + i,
                    page_size=page,
                )
            )
        else:
            side = max(64, int(math.sqrt(per_task / 12)))
            latency = 2.0 * side**3 / flops
            tasks.append(
                gen_matmul(
                    side, side, side,
                    count=max(1, round(budget / latency)),
                    task_id=f"mm{i}",
                    base_addr=base,
                    flops=flops,
                    page_size=page,
                )
            )
    return tasks, Policy(kind="rr", timeslice_s=timeslice_s)


def llm_scenario(
    hw: HwConfig,
    subscription_ratio: float,
    *,
    n_tasks: int = 4,
    layers: int = 20,
    decode_steps: int = 10,
    slice_fraction: float = 0.08,
    mem_bw: float = LLM_MEM_BW,
) -> tuple[list[Task], Policy]:
    """Decode-loop tasks: monolithic weights sliced per layer plus growing
    KV prefixes. A timeslice covers `slice_fraction` of one decode step, so
    per-slice working sets are a small window into a large weight buffer —
    the workload where prediction granularity matters most."""
    page = hw.page_size_bytes
    per_task = subscription_ratio * hw.hbm_capacity_bytes / n_tasks
    wpl = _page_align(int(0.9 * per_task / layers), page)
    kv_max = _page_align(int(0.1 * per_task / layers), page)
    schedule = [0.5 + 0.5 * (s + 1) / decode_steps for s in range(decode_steps)]
    tasks = []
    for i in range(n_tasks):
        tasks.append(
            gen_llm_like(
                layers, wpl, kv_max, decode_steps, schedule,
                task_id=f"llm{i}",
                base_addr=task_base_addr(i),
                mem_bw=mem_bw,
                page_size=page,
            )
        )
    step_s = layers * (wpl + 0.75 * kv_max) / mem_bw
    return tasks, Policy(kind="rr", timeslice_s=slice_fraction * step_s)


def uniform_scenario(
    hw: HwConfig,
    n_tasks: int,
    task_footprint_bytes: int,
    *,
    slices_per_task: int = 4,
    timeslice_s: float = STREAM_TIMESLICE_S,
    mem_bw: float = DEFAULT_MEM_BW,
) -> tuple[list[Task], Policy]:
    """n identical vector-add tasks with a fixed per-task footprint,
    independent of capacity; used for control-plane scaling studies."""
    page = hw.page_size_bytes
    arr = _page_align(task_footprint_bytes // 3, page)
    latency = 3 * arr / mem_bw
    iters = max(1, round(slices_per_task * timeslice_s / latency))
    tasks = [
        gen_vector_add(
            arr // 4,
            iterations=iters,
            task_id=f"t{i:02d}",
            base_addr=task_base_addr(i),
            mem_bw=mem_bw,
            page_size=page,
        )
        for i in range(n_tasks)
    ]
    return tasks, Policy(kind="rr", timeslice_s=timeslice_s)
