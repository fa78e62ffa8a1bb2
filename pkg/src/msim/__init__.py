"""Trace-driven simulator for proactive GPU memory scheduling.

Compares three memory managers under HBM oversubscription: demand paging,
a proactive scheduler-driven design (working-set prediction from launch
arguments, timeline-ordered eviction lists, pipelined page migration), and
an oracle-fed ideal.
"""

from .core import (
    Allocation,
    Arg,
    ByteRange,
    Command,
    CommandKind,
    ConfigError,
    HwConfig,
    PageSet,
    Task,
    pages_of,
    pages_of_ranges,
)
from .engine import Metrics, Mode, Simulator, simulate, simulate_normalized
from .memman import EvictionList, HelperQueue, belady_oracle, plan_migration
from .presets import PRESETS, get_preset
from .scheduler import Policy, build_timeline

__version__ = "1.0.0"

__all__ = [
    "Allocation", "Arg", "ByteRange", "Command", "CommandKind", "ConfigError",
    "EvictionList", "HelperQueue", "HwConfig", "Metrics", "Mode", "PageSet",
    "Policy", "PRESETS", "Simulator", "Task", "belady_oracle",
    "build_timeline", "get_preset", "pages_of", "pages_of_ranges",
    "plan_migration", "simulate", "simulate_normalized",
]
