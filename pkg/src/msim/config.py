"""Experiment manifests: validating TOML loader and scenario assembly.

A manifest describes one experiment: hardware (preset plus overrides), a
workload scenario, scheduler knobs, the memory-management mode, and an
optional sweep block. Everything random flows from the single top-level
seed so reruns are byte-identical.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import ConfigError, HwConfig, Task
from .engine import Mode
from .presets import get_preset
from .scenarios import llm_scenario, streaming_scenario, uniform_scenario
from .scheduler import Policy

SCENARIOS = ("streaming", "llm", "uniform")
MODES = ("um", "proactive", "ideal")


@dataclass
class Experiment:
    seed: int
    hw: HwConfig
    scenario: str
    workload_opts: dict
    policy_overrides: dict
    mode: Mode
    sweep_ratios: list[float] = field(default_factory=list)
    sweep_modes: list[str] = field(default_factory=list)

    def build_workload(
        self, subscription_ratio: Optional[float] = None
    ) -> tuple[list[Task], Policy]:
        opts = dict(self.workload_opts)
        ratio = subscription_ratio if subscription_ratio is not None else opts.pop(
            "subscription_ratio", 1.0
        )
        opts.pop("subscription_ratio", None)
        if self.scenario == "streaming":
            tasks, policy = streaming_scenario(self.hw, ratio, seed=self.seed, **opts)
        elif self.scenario == "llm":
            tasks, policy = llm_scenario(self.hw, ratio, **opts)
        else:
            tasks, policy = uniform_scenario(
                self.hw, opts.pop("n_tasks", 4), opts.pop("task_footprint_bytes"), **opts
            )
        if self.policy_overrides:
            policy = dataclasses.replace(policy, **self.policy_overrides)
        return tasks, policy

    def build_mode(self, name: Optional[str] = None) -> Mode:
        if name is None or name == self.mode.name:
            return self.mode
        if name == "um":
            return Mode.um(self.mode.prefetch_pages)
        if name == "proactive":
            return Mode.proactive(
                self.mode.pipelined, self.mode.early_start, self.mode.predictor
            )
        if name == "ideal":
            return Mode.ideal()
        raise ConfigError(f"unknown mode {name!r}")


def load_config(path: str) -> Experiment:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}") from e
    return parse_config(data, source=path)


def parse_config(data: dict, source: str = "<config>") -> Experiment:
    def fail(msg: str):
        raise ConfigError(f"{source}: {msg}")

    if "hw" not in data:
        fail("missing required section [hw]")
    if "workload" not in data:
        fail("missing required section [workload]")
    seed = _expect(data, "seed", int, 0, fail)
    hw = _parse_hw(dict(data["hw"]), fail)
    scenario, wl_opts = _parse_workload(dict(data["workload"]), fail)
    policy_overrides = _parse_scheduler(dict(data.get("scheduler", {})), fail)
    mode = _parse_mode(dict(data.get("mode", {})), fail)
    sweep = dict(data.get("sweep", {}))
    ratios = sweep.pop("ratios", [])
    sweep_modes = sweep.pop("modes", list(MODES))
    if sweep:
        fail(f"unknown keys in [sweep]: {sorted(sweep)}")
    for r in ratios:
        if not isinstance(r, (int, float)) or r <= 0:
            fail(f"sweep ratio {r!r} must be a positive number")
    for m in sweep_modes:
        if m not in MODES:
            fail(f"unknown sweep mode {m!r}; expected one of {MODES}")
    return Experiment(
        seed=seed,
        hw=hw,
        scenario=scenario,
        workload_opts=wl_opts,
        policy_overrides=policy_overrides,
        mode=mode,
        sweep_ratios=[float(r) for r in ratios],
        sweep_modes=list(sweep_modes),
    )


def _expect(table: dict, key: str, typ, default, fail):
    v = table.get(key, default)
    if typ is float and isinstance(v, int):
        v = float(v)
    if not isinstance(v, typ):
        fail(f"key {key!r} must be {typ.__name__}, got {type(v).__name__}")
    return v


_HW_FIELDS = {f.name: f for f in dataclasses.fields(HwConfig)}


def _parse_hw(table: dict, fail) -> HwConfig:
    preset = table.pop("preset", None)
    if preset is not None:
        try:
            hw = get_preset(preset)
        except ConfigError as e:
            fail(str(e))
    elif {"hbm_capacity_bytes", "bw_d2h_bytes_per_s", "bw_h2d_bytes_per_s"} <= set(table):
        hw = None
    else:
        fail(
            "[hw] needs either preset=... or explicit hbm_capacity_bytes, "
            "bw_d2h_bytes_per_s and bw_h2d_bytes_per_s"
        )
    overrides: dict[str, Any] = {}
    for k, v in table.items():
        if k not in _HW_FIELDS:
            fail(f"unknown [hw] key {k!r}")
        overrides[k] = float(v) if _HW_FIELDS[k].type == "float" else v
    try:
        if preset is None:
            overrides.setdefault("dram_capacity_bytes", 256 << 30)
            return HwConfig(**overrides)
        return dataclasses.replace(hw, **overrides)
    except (TypeError, ValueError) as e:
        fail(f"invalid [hw] values: {e}")


def _parse_workload(table: dict, fail) -> tuple[str, dict]:
    scenario = table.pop("scenario", None)
    if scenario not in SCENARIOS:
        fail(f"[workload] scenario must be one of {SCENARIOS}, got {scenario!r}")
    # scenario-specific subsections win over the generic keys
    opts = {k: v for k, v in table.items() if not isinstance(v, dict)}
    opts.update(table.get(scenario, {}))
    return scenario, opts


def _parse_scheduler(table: dict, fail) -> dict:
    out = {}
    if "policy" in table:
        out["kind"] = table.pop("policy")
    for k in ("timeslice_s", "horizon_rounds"):
        if k in table:
            out[k] = table.pop(k)
    if table:
        fail(f"unknown keys in [scheduler]: {sorted(table)}")
    if out:
        try:
            Policy(**{"kind": "rr", **out})
        except ValueError as e:
            fail(f"invalid [scheduler]: {e}")
    return out


def _parse_mode(table: dict, fail) -> Mode:
    name = table.pop("name", "proactive")
    if name not in MODES:
        fail(f"[mode] name must be one of {MODES}, got {name!r}")
    prefetch = table.pop("prefetch_pages", 16)
    if not isinstance(prefetch, int) or prefetch < 1:
        fail("[mode] prefetch_pages must be an integer >= 1")
    pipelined = table.pop("pipelined", True)
    early_start = table.pop("early_start", True)
    predictor = table.pop("predictor", "template")
    if predictor not in ("template", "allocation", "oracle"):
        fail(f"[mode] predictor must be template|allocation|oracle, got {predictor!r}")
    if table:
        fail(f"unknown keys in [mode]: {sorted(table)}")
    if name == "um":
        return Mode.um(prefetch)
    if name == "ideal":
        return Mode.ideal()
    return Mode(
        "proactive", prefetch_pages=prefetch, pipelined=bool(pipelined),
        early_start=bool(early_start), predictor=predictor,
    )
