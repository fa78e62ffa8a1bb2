"""Command-line front end: experiment runs, sweeps, trace analysis.

All outputs are plain artifacts (CSV, descriptor files, SVG) written under
--out-dir; rows are sorted by key before writing so reruns are
byte-identical for a given seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import analyzer, workload
from .charts import save_chart
from .config import Experiment, load_config
from .core import ConfigError
from .engine import Metrics, Mode, simulate_normalized
from .predictor import accuracy, ground_truth_prediction, predict, predict_allocation

METRICS_SCHEMA = "msim-metrics-v1"
SWEEP_SCHEMA = "msim-sweep-v1"
KINDS_SCHEMA = "msim-access-kinds-v1"
PREDICT_SCHEMA = "msim-predict-v1"

METRICS_HEADER = (
    "schema,scenario,mode,subscription_ratio,normalized_throughput,sim_time_s,"
    "faults,faults_per_task,migrated_bytes_h2d,migrated_bytes_d2h,"
    "madvise_s,context_switches\n"
)


def _metrics_row(exp: Experiment, mode_name: str, ratio: float, m: Metrics, n_tasks: int) -> str:
    return ",".join(
        [
            METRICS_SCHEMA,
            exp.scenario,
            mode_name,
            f"{ratio:g}",
            f"{m.normalized_throughput:.6f}",
            f"{m.total_time_s:.9f}",
            str(m.fault_count),
            f"{m.fault_count / max(1, n_tasks):.2f}",
            str(m.migrated_bytes_h2d),
            str(m.migrated_bytes_d2h),
            f"{m.madvise_s:.9f}",
            str(m.context_switches),
        ]
    ) + "\n"


def cmd_run(exp: Experiment, out_dir: str, no_charts: bool) -> int:
    ratio = float(exp.workload_opts.get("subscription_ratio", 1.0))
    tasks, policy = exp.build_workload(ratio)
    m = simulate_normalized(tasks, exp.hw, policy, exp.mode)
    path = os.path.join(out_dir, "metrics.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write(METRICS_HEADER)
        f.write(_metrics_row(exp, exp.mode.name, ratio, m, len(tasks)))
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as f:
        f.write(
            f"scenario={exp.scenario} mode={exp.mode.name} ratio={ratio:g}\n"
            f"normalized throughput: {m.normalized_throughput:.4f}\n"
            f"sim time: {m.total_time_s * 1e3:.3f} ms over "
            f"{m.context_switches} context switches\n"
            f"faults: {m.fault_count} ({m.fault_pages} pages); migrated "
            f"{m.migrated_bytes_h2d} B in, {m.migrated_bytes_d2h} B out\n"
            f"madvise overhead: {m.madvise_s * 1e3:.3f} ms\n"
        )
    print(f"wrote {path}")
    return 0


def cmd_sweep(exp: Experiment, ratios: list[float], out_dir: str, no_charts: bool) -> int:
    ratios = sorted(ratios or exp.sweep_ratios or [1.0, 1.5, 2.0, 3.0])
    modes = sorted(exp.sweep_modes)
    rows = []
    series_thr, series_faults, series_bytes = {}, {}, {}
    for ratio in ratios:
        tasks, policy = exp.build_workload(ratio)
        for name in modes:
            m = simulate_normalized(tasks, exp.hw, policy, exp.build_mode(name))
            rows.append(((ratio, name), _metrics_row(exp, name, ratio, m, len(tasks))))
            series_thr.setdefault(name, []).append((ratio, m.normalized_throughput))
            series_faults.setdefault(name, []).append(
                (ratio, m.fault_count / max(1, len(tasks)))
            )
            series_bytes.setdefault(name, []).append(
                (ratio, m.migrated_bytes_h2d / max(1, len(tasks)))
            )
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write(METRICS_HEADER.replace(METRICS_SCHEMA, SWEEP_SCHEMA, 1))
        for _, row in sorted(rows, key=lambda kv: kv[0]):
            f.write(row.replace(METRICS_SCHEMA, SWEEP_SCHEMA, 1))
    if not no_charts:
        save_chart(
            os.path.join(out_dir, "throughput.svg"),
            "Normalized throughput vs subscription", "subscription ratio",
            "normalized throughput", series_thr,
        )
        save_chart(
            os.path.join(out_dir, "faults.svg"),
            "Page faults per task vs subscription", "subscription ratio",
            "faults / task", series_faults,
        )
        save_chart(
            os.path.join(out_dir, "migrated.svg"),
            "Migrated bytes (H2D) per task vs subscription", "subscription ratio",
            "bytes / task", series_bytes,
        )
    print(f"wrote {path}")
    return 0


def cmd_analyze(trace_path: str, out_dir: str) -> int:
    task = workload.load_trace(trace_path)
    records = analyzer.records_from_task(task)
    descs = {
        name: analyzer.build_descriptor(name, recs) for name, recs in records.items()
    }
    desc_path = os.path.join(out_dir, "descriptors.msdesc")
    analyzer.save_descriptors(descs, desc_path)
    totals = {"fixed": 0, "linear": 0, "strided": 0, "others": 0}
    for name, recs in records.items():
        for kind, n in analyzer.classify_regions(descs[name], recs).items():
            totals[kind] += n
    total = max(1, sum(totals.values()))
    path = os.path.join(out_dir, "access_kinds.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("schema,fixed_pct,linear_pct,strided_pct,others_pct\n")
        f.write(
            ",".join(
                [KINDS_SCHEMA]
                + [f"{100.0 * totals[k] / total:.2f}" for k in ("fixed", "linear", "strided", "others")]
            )
            + "\n"
        )
    print(f"wrote {desc_path} and {path}")
    return 0


def cmd_predict_check(trace_path: str, desc_path: str, out_dir: str) -> int:
    task = workload.load_trace(trace_path)
    descs = analyzer.load_descriptors(desc_path)
    page = 4096
    per_kernel: dict[str, dict[str, list[tuple[float, float]]]] = {}
    for cmd in task.commands:
        if cmd.kind.name != "KERNEL":
            continue
        actual = ground_truth_prediction(cmd, page).pages
        t = predict(descs, cmd, page)
        a = predict_allocation(task.allocations, cmd, page)
        slot = per_kernel.setdefault(cmd.kernel_name, {"template": [], "allocation": []})
        slot["template"].append(accuracy(t.pages, actual))
        slot["allocation"].append(accuracy(a.pages, actual))
    path = os.path.join(out_dir, "predict_check.csv")
    agg: dict[str, list[tuple[float, float]]] = {"template": [], "allocation": []}
    with open(path, "w", encoding="utf-8") as f:
        f.write("schema,kernel,predictor,f_neg,f_pos\n")
        for name in sorted(per_kernel):
            for pred in ("allocation", "template"):
                pairs = per_kernel[name][pred]
                agg[pred].extend(pairs)
                fneg = sum(p[0] for p in pairs) / len(pairs)
                fpos = sum(p[1] for p in pairs) / len(pairs)
                f.write(f"{PREDICT_SCHEMA},{name},{pred},{fneg:.6f},{fpos:.6f}\n")
        for pred in ("allocation", "template"):
            pairs = agg[pred] or [(0.0, 0.0)]
            fneg = sum(p[0] for p in pairs) / len(pairs)
            fpos = sum(p[1] for p in pairs) / len(pairs)
            f.write(f"{PREDICT_SCHEMA},ALL,{pred},{fneg:.6f},{fpos:.6f}\n")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msim", description=__doc__)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", default=".", help="directory for output artifacts")
    p.add_argument("--no-charts", action="store_true", help="CSV only, skip SVG charts")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="single end-to-end experiment")
    run.add_argument("config")
    sweep = sub.add_parser("sweep", help="subscription-ratio sweep")
    sweep.add_argument("config")
    sweep.add_argument("--ratios", type=float, nargs="+", default=None)
    an = sub.add_parser("analyze", help="infer access templates from a trace")
    an.add_argument("trace")
    pc = sub.add_parser("predict-check", help="score predictors against a trace")
    pc.add_argument("trace")
    pc.add_argument("descriptors")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    os.makedirs(args.out_dir, exist_ok=True)
    try:
        if args.command in ("run", "sweep"):
            exp = load_config(args.config)
            if args.seed is not None:
                exp = dataclasses.replace(exp, seed=args.seed)
            if args.command == "run":
                return cmd_run(exp, args.out_dir, args.no_charts)
            return cmd_sweep(exp, args.ratios, args.out_dir, args.no_charts)
        if args.command == "analyze":
            return cmd_analyze(args.trace, args.out_dir)
        return cmd_predict_check(args.trace, args.descriptors, args.out_dir)
    except (ConfigError, workload.TraceError, analyzer.DescriptorError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
