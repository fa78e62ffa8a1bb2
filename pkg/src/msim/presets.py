"""Built-in hardware presets.

Each preset is calibrated from two measured numbers: the sequential swap
bandwidth (unmap, copy-out, copy-in, map fully serialized) and the pipelined
swap bandwidth with eviction and population overlapped on two copy engines.
For per-page costs E (evict) and P (populate), sequential bandwidth is the
harmonic mean 2/(E+P) and the large-plan pipelined bandwidth is 2/max(E,P),
so the two measurements pin down the per-direction link rates:

    bw_d2h = pipelined / 2
    bw_h2d = sequential * bw_d2h / (2 * bw_d2h - sequential)
"""

from __future__ import annotations

from .core import ConfigError, HwConfig

GIB = 1 << 30


def _calibrated(
    name: str,
    sequential_swap_bw: float,
    pipelined_swap_bw: float,
    hbm_bytes: int,
) -> HwConfig:
    bw_d2h = pipelined_swap_bw / 2.0
    denom = 2.0 * bw_d2h - sequential_swap_bw
    if denom <= 0:
        raise ConfigError(f"preset {name}: pipelined bw must exceed sequential")
    bw_h2d = sequential_swap_bw * bw_d2h / denom
    return HwConfig(
        hbm_capacity_bytes=hbm_bytes,
        dram_capacity_bytes=256 * GIB,
        bw_d2h_bytes_per_s=bw_d2h,
        bw_h2d_bytes_per_s=bw_h2d,
    )


PRESETS = {
    # 16 GB card on a PCIe 5.0 x16 link: 41.7 GB/s sequential swap,
    # 63.5 GB/s pipelined.
    "rtx5080": _calibrated("rtx5080", 41.7e9, 63.5e9, 16 * GIB),
    # 10 GB card on a PCIe 4.0 x16 link: 22.22 GB/s sequential swap,
    # 39.8 GB/s pipelined.
    "rtx3080": _calibrated("rtx3080", 22.22e9, 39.8e9, 10 * GIB),
}


def get_preset(name: str) -> HwConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown hardware preset {name!r}; available: {sorted(PRESETS)}"
        ) from None
