"""Working-set prediction: template rules, allocation fallback, oracle."""

from __future__ import annotations

from fractions import Fraction

import pytest

from msim.analyzer import KernelDescriptor, LinearExpr, TemplateRule, build_descriptors
from msim.core import (
    Allocation,
    Arg,
    ByteRange,
    Command,
    CommandKind,
    PageSet,
    pages_of,
    pages_of_ranges,
)
from msim.predictor import (
    Prediction,
    accuracy,
    ground_truth_prediction,
    predict,
    predict_allocation,
)
from msim.workload import gen_llm_like, gen_vector_add

PAGE = 4096


def kernel_cmd(name, args, gt=(), grid=(1, 1, 1), block=(1, 1, 1)):
    return Command(
        kind=CommandKind.KERNEL,
        latency_s=1e-6,
        kernel_name=name,
        launch_args=tuple(args),
        grid_dims=grid,
        block_dims=block,
        ground_truth_access=tuple(gt),
    )


def memcpy_cmd(dst, size):
    return Command(
        kind=CommandKind.MEMCPY_H2D,
        latency_s=1e-6,
        launch_args=(Arg(0), Arg(dst), Arg(size)),
        ground_truth_access=(ByteRange(dst, size),),
    )


# ---------------------------------------------------------------- template


def test_memcpy_prediction_exact_regardless_of_descriptors():
    cmd = memcpy_cmd(1 << 30, 3 * PAGE)
    pred = predict({}, cmd, PAGE)
    assert pred.complete
    assert pred.pages == pages_of(cmd.device_range(), PAGE)


def test_missing_kernel_descriptor_is_incomplete_and_empty():
    cmd = kernel_cmd("unknown", [Arg(1 << 30)], gt=[ByteRange(1 << 30, PAGE)])
    pred = predict({}, cmd, PAGE)
    assert not pred.complete
    assert len(pred.pages) == 0


def test_fixed_rule_prediction():
    base = 1 << 30
    desc = KernelDescriptor(
        kernel_name="k",
        rules=(
            TemplateRule(
                ptr_arg_index=0,
                kind="fixed",
                offset_bytes=0,
                size=LinearExpr(Fraction(2 * PAGE)),
            ),
        ),
    )
    cmd = kernel_cmd("k", [Arg(base)])
    pred = predict({"k": desc}, cmd, PAGE)
    assert pred.complete
    assert sorted(pred.pages) == [base // PAGE, base // PAGE + 1]


def test_linear_rule_scales_with_argument():
    base = 1 << 30
    desc = KernelDescriptor(
        kernel_name="k",
        rules=(
            TemplateRule(
                ptr_arg_index=0,
                kind="linear",
                offset_bytes=0,
                size=LinearExpr(Fraction(4), ("a1",)),
            ),
        ),
    )
    for n in (PAGE // 4, 5 * PAGE // 4):
        cmd = kernel_cmd("k", [Arg(base), Arg(n, width=32)])
        pred = predict({"k": desc}, cmd, PAGE)
        assert pred.complete
        assert len(pred.pages) == (4 * n + PAGE - 1) // PAGE


def test_unpredictable_fraction_marks_incomplete_but_keeps_rule_pages():
    base = 1 << 30
    desc = KernelDescriptor(
        kernel_name="k",
        rules=(
            TemplateRule(
                ptr_arg_index=0,
                kind="fixed",
                offset_bytes=0,
                size=LinearExpr(Fraction(PAGE)),
            ),
        ),
        unpredictable_fraction=0.25,
    )
    cmd = kernel_cmd("k", [Arg(base)])
    pred = predict({"k": desc}, cmd, PAGE)
    assert not pred.complete
    assert sorted(pred.pages) == [base // PAGE]


def test_inferred_descriptors_reproduce_ground_truth_on_regular_task():
    task = gen_vector_add(4096, iterations=6, task_id="t", seed=1)
    descs = build_descriptors(task)
    for cmd in task.commands:
        if cmd.kind is not CommandKind.KERNEL:
            continue
        pred = predict(descs, cmd, PAGE)
        actual = pages_of_ranges(cmd.ground_truth_access, PAGE)
        assert pred.complete
        assert pred.pages == actual


def test_inferred_descriptors_reproduce_llm_ground_truth():
    task = gen_llm_like(
        layers=3,
        weight_bytes_per_layer=8 * PAGE,
        kv_max_bytes=4 * PAGE,
        decode_steps=3,
        kv_used_fraction_schedule=[0.5, 0.75, 1.0],
        task_id="l",
    )
    descs = build_descriptors(task)
    misses = 0
    for cmd in task.commands:
        if cmd.kind is not CommandKind.KERNEL:
            continue
        pred = predict(descs, cmd, PAGE)
        actual = pages_of_ranges(cmd.ground_truth_access, PAGE)
        fneg, fpos = accuracy(pred.pages, actual)
        misses += fneg
    assert misses == 0


# ------------------------------------------------------------- allocation


def test_allocation_prediction_charges_whole_allocation():
    alloc = Allocation(id="a", base_addr=1 << 30, size_bytes=8 * PAGE, owner_task="t")
    # Pointer into the middle of the allocation still claims all of it.
    cmd = kernel_cmd("k", [Arg((1 << 30) + 3 * PAGE)], gt=[ByteRange(1 << 30, PAGE)])
    pred = predict_allocation([alloc], cmd, PAGE)
    assert pred.complete
    assert len(pred.pages) == 8
    assert sorted(pred.pages)[0] == (1 << 30) // PAGE


def test_allocation_prediction_ignores_non_pointer_args():
    alloc = Allocation(id="a", base_addr=1 << 30, size_bytes=PAGE, owner_task="t")
    cmd = kernel_cmd(
        "k",
        [Arg((1 << 30), width=32), Arg(0, width=64, raw=b"\x00" * 8)],
    )
    pred = predict_allocation([alloc], cmd, PAGE)
    assert len(pred.pages) == 0


def test_allocation_prediction_memcpy_is_exact():
    cmd = memcpy_cmd(1 << 30, 2 * PAGE)
    pred = predict_allocation([], cmd, PAGE)
    assert pred.pages == pages_of(cmd.device_range(), PAGE)


def test_allocation_superset_of_template_on_regular_task():
    task = gen_vector_add(8192, iterations=4, task_id="t")
    descs = build_descriptors(task)
    for cmd in task.commands:
        if cmd.kind is not CommandKind.KERNEL:
            continue
        t = predict(descs, cmd, PAGE).pages
        a = predict_allocation(task.allocations, cmd, PAGE).pages
        assert len(t - a) == 0  # template never predicts outside allocations


# ------------------------------------------------------------------ oracle


def test_ground_truth_prediction_matches_access_ranges():
    gt = [ByteRange(1 << 30, PAGE), ByteRange((1 << 30) + 10 * PAGE, 2 * PAGE)]
    cmd = kernel_cmd("k", [Arg(1 << 30)], gt=gt)
    pred = ground_truth_prediction(cmd, PAGE)
    assert pred.complete
    assert pred.pages == pages_of_ranges(gt, PAGE)


# ---------------------------------------------------------------- accuracy


def test_accuracy_empty_actual_is_zero_rates():
    assert accuracy(PageSet.from_pages([1, 2]), PageSet()) == (0.0, 0.0)


def test_accuracy_rates():
    actual = PageSet.from_pages([0, 1, 2, 3])
    predicted = PageSet.from_pages([2, 3, 4, 5, 6])
    fneg, fpos = accuracy(predicted, actual)
    assert fneg == pytest.approx(0.5)
    assert fpos == pytest.approx(0.75)


def test_accuracy_perfect_prediction():
    actual = PageSet.from_pages([7, 8, 9])
    assert accuracy(actual, actual) == (0.0, 0.0)
