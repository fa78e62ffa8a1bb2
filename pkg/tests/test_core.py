import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msim.core import (
    Allocation,
    Arg,
    ByteRange,
    Command,
    CommandKind,
    HwConfig,
    PageSet,
    Task,
    pages_of,
    pages_of_ranges,
)

PAGE = 4096


# -- PageSet: run-based implementation checked against plain sets -----------

runs_st = st.lists(
    st.tuples(st.integers(0, 300), st.integers(0, 60)).map(lambda t: (t[0], t[0] + t[1])),
    max_size=8,
)


def as_set(ps: PageSet) -> set:
    return set(ps)


@settings(max_examples=200)
@given(runs_st, runs_st)
def test_pageset_algebra_matches_set_oracle(a_runs, b_runs):
    a, b = PageSet(a_runs), PageSet(b_runs)
    sa, sb = as_set(a), as_set(b)
    assert as_set(a | b) == sa | sb
    assert as_set(a & b) == sa & sb
    assert as_set(a - b) == sa - sb
    assert len(a) == len(sa)
    for p in list(sa)[:5]:
        assert p in a


@given(runs_st)
def test_pageset_normalized_runs(a_runs):
    a = PageSet(a_runs)
    for (s0, e0), (s1, e1) in zip(a.runs, a.runs[1:]):
        assert s0 < e0 and s1 < e1
        assert e0 < s1  # disjoint and non-adjacent after normalization


def test_pageset_equality_and_hash():
    assert PageSet([(0, 3), (3, 5)]) == PageSet([(0, 5)])
    assert hash(PageSet([(1, 2)])) == hash(PageSet.single(1))
    assert PageSet.from_pages([5, 3, 4]) == PageSet([(3, 6)])
    assert not PageSet()


# -- pages_of ----------------------------------------------------------------

def test_pages_of_single_byte():
    assert list(pages_of(ByteRange(0, 1), PAGE)) == [0]


def test_pages_of_straddles_boundary():
    # [4095, 4097) touches pages 0 and 1
    assert list(pages_of(ByteRange(PAGE - 1, 2), PAGE)) == [0, 1]


def test_pages_of_exact_page():
    assert list(pages_of(ByteRange(3 * PAGE, PAGE), PAGE)) == [3]


def test_pages_of_ranges_merges():
    ps = pages_of_ranges([ByteRange(0, PAGE), ByteRange(PAGE, PAGE)], PAGE)
    assert ps == PageSet([(0, 2)])


def test_zero_length_range_rejected():
    with pytest.raises(ValueError):
        ByteRange(0, 0)


# -- config and command validation -------------------------------------------

def test_hw_config_validation():
    with pytest.raises(ValueError):
        HwConfig(hbm_capacity_bytes=0, dram_capacity_bytes=1,
                 bw_d2h_bytes_per_s=1.0, bw_h2d_bytes_per_s=1.0)
    with pytest.raises(ValueError):
        HwConfig(hbm_capacity_bytes=1 << 30, dram_capacity_bytes=1 << 30,
                 bw_d2h_bytes_per_s=1.0, bw_h2d_bytes_per_s=1.0,
                 page_size_bytes=3000)  # not a power of two


def test_hw_capacity_pages():
    hw = HwConfig(hbm_capacity_bytes=1 << 20, dram_capacity_bytes=1 << 30,
                  bw_d2h_bytes_per_s=1.0, bw_h2d_bytes_per_s=1.0)
    assert hw.hbm_capacity_pages == 256
    assert hw.with_capacity(1 << 21).hbm_capacity_pages == 512


def test_arg_width_validation():
    with pytest.raises(ValueError):
        Arg(1, width=16)
    Arg(1, width=32)
    Arg(b"x", width=0, raw=b"\x00" * 8)  # struct args skip width checks


def test_memcpy_needs_three_args():
    with pytest.raises(ValueError):
        Command(kind=CommandKind.MEMCPY_H2D, latency_s=1e-6)


def test_command_latency_positive():
    with pytest.raises(ValueError):
        Command(kind=CommandKind.KERNEL, latency_s=0.0)


def test_memcpy_device_range():
    cmd = Command(
        kind=CommandKind.MEMCPY_H2D, latency_s=1e-6,
        launch_args=(Arg(100, 64), Arg(5000, 64), Arg(300, 64)),
    )
    assert cmd.device_range() == ByteRange(5000, 300)
    d2h = Command(
        kind=CommandKind.MEMCPY_D2H, latency_s=1e-6,
        launch_args=(Arg(5000, 64), Arg(100, 64), Arg(300, 64)),
    )
    assert d2h.device_range() == ByteRange(5000, 300)


def test_task_overlapping_allocations_rejected():
    t = Task(id="t", allocations=[
        Allocation("a", 0, 100, "t"),
        Allocation("b", 50, 100, "t"),
    ])
    with pytest.raises(ValueError):
        t.validate()
