"""Experiment runner: pack / plan / simulate / route / mem / reproduce.

Every subcommand resolves its config (flags > config file > OMNISCHED_SEED >
defaults), runs the scenario, and writes a run directory containing
``config.resolved``, ``summary.json``, and the scenario's CSVs. Outputs
carry no timestamps, so a run is byte-reproducible from (config, seed).

Exit codes: 0 success, 1 usage error, 2 domain error. Domain errors print a
one-line JSON object ``{"kind", "message", "context"}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import memsim as memsim_mod
from . import moe as moe_mod
from .config import (
    ExperimentConfig,
    build_config,
    load_config_file,
    reproduce_scenario_doc,
)
from .errors import ConfigError, OmniSchedError
from .packing import REPORT_CSV_FIELDS, POLICIES, pack
from .pipeline import (
    COMPARISON_CSV_FIELDS,
    compare_configs,
)
from .sharding import naive_plan, plan_balanced_stages, plan_imbalance
from .workload import trace_stats


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that defers exit handling so usage errors map to exit 1."""

    def error(self, message):  # noqa: D102 - argparse hook
        raise _UsageError(message)


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _prepare_out(config: ExperimentConfig, out_override: Optional[str]) -> Path:
    out = Path(out_override) if out_override else config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    out.joinpath("config.resolved").write_text(
        yaml.safe_dump(config.resolved_dict(), sort_keys=True), encoding="utf-8"
    )
    return out


def cmd_pack(config: ExperimentConfig, policy: str, out_override: Optional[str] = None) -> dict:
    trace = config.load_workload()
    out = _prepare_out(config, out_override)
    names = list(POLICIES) if policy == "all" else [policy]
    rows = []
    for name in names:
        _, report = pack(trace, config.capacity, name)
        rows.append(report.to_dict())
    _write_csv(out / "packing.csv", REPORT_CSV_FIELDS, rows)
    summary = {
        "command": "pack",
        "trace": trace_stats(trace).to_dict(),
        "capacity": config.capacity,
        "reports": rows,
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_plan(config: ExperimentConfig, out_override: Optional[str] = None) -> dict:
    if not config.encoders or not config.llm_layer_costs:
        raise ConfigError("plan needs a cost model (encoders + llm_layer_costs)")
    out = _prepare_out(config, out_override)
    plans = {}
    for layout in config.layouts:
        balanced = plan_balanced_stages(config.encoders, config.llm_layer_costs, layout)
        naive = naive_plan(config.encoders, config.llm_layer_costs, layout)
        plans[layout.label()] = {
            "balanced": balanced.to_dict(),
            "naive": naive.to_dict(),
        }
    _write_json(out / "plan.json", plans)
    summary = {
        "command": "plan",
        "layouts": {
            label: {
                "balanced_imbalance": doc["balanced"]["imbalance"],
                "naive_imbalance": doc["naive"]["imbalance"],
            }
            for label, doc in plans.items()
        },
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_simulate(config: ExperimentConfig, out_override: Optional[str] = None) -> dict:
    if not config.encoders or not config.llm_layer_costs:
        raise ConfigError("simulate needs a cost model (encoders + llm_layer_costs)")
    trace = config.load_workload()
    out = _prepare_out(config, out_override)
    table = compare_configs(
        trace,
        config.capacity,
        config.encoders,
        config.llm_layer_costs,
        config.layouts,
        config.packing_policies,
        config.plan_policies,
        config.backward_ratio,
        config.comm_latency,
    )
    _write_csv(out / "comparison.csv", COMPARISON_CSV_FIELDS, table.rows())
    for cell in table.cells:
        name = f"timeline_{cell.layout.label()}_{cell.packing_policy}_{cell.plan_policy}.csv"
        rows = [
            {"stage": s, "kind": kind, "start": start, "end": end, "microbatch": mb}
            for s, kind, start, end, mb in cell.result.timeline_rows()
        ]
        _write_csv(out / name, ["stage", "kind", "start", "end", "microbatch"], rows)
    summary = {
        "command": "simulate",
        "trace": trace_stats(trace).to_dict(),
        "capacity": config.capacity,
        "headline_ratio": table.headline_ratio,
        "cells": table.rows(),
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_route(config: ExperimentConfig, out_override: Optional[str] = None) -> dict:
    out = _prepare_out(config, out_override)
    scenario = config.routing
    source = moe_mod.GaussianLogitSource(
        mean_offsets=scenario.mean_offsets,
        seed=scenario.seed if scenario.seed is not None else config.seed,
        std=scenario.logit_std,
    )
    reports = moe_mod.simulate_routing(
        scenario.config, source, scenario.tokens_per_step, scenario.steps
    )
    _write_csv(out / "route.csv", moe_mod.ROUTE_CSV_FIELDS, moe_mod.load_report_rows(reports))
    summary = {
        "command": "route",
        "num_experts": scenario.config.num_experts,
        "top_k": scenario.config.top_k,
        "steps": scenario.steps,
        "tokens_per_step": scenario.tokens_per_step,
        "cov_first": reports[0].cov,
        "cov_last": reports[-1].cov,
        "aux_first": reports[0].aux,
        "aux_last": reports[-1].aux,
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_mem(config: ExperimentConfig, out_override: Optional[str] = None) -> dict:
    trace = config.load_workload()
    out = _prepare_out(config, out_override)
    scenario = config.memsim
    rows = []
    per_sample = memsim_mod.events_from_samples(
        trace, scenario.bytes_per_token, scenario.round_to
    )
    rows.append(
        {"scenario": "per-sample", **_frag_row(memsim_mod.simulate_allocator(per_sample, scenario.allocator))}
    )
    batches, _ = pack(trace, config.capacity, "ffd")
    packed_events = memsim_mod.events_from_batches(batches, scenario.bytes_per_token)
    rows.append(
        {"scenario": "ffd-packed", **_frag_row(memsim_mod.simulate_allocator(packed_events, scenario.allocator))}
    )
    _write_csv(out / "memsim.csv", memsim_mod.MEMSIM_CSV_FIELDS, rows)
    summary = {"command": "mem", "rows": rows}
    _write_json(out / "summary.json", summary)
    return summary


def _frag_row(report: memsim_mod.FragReport) -> dict:
    doc = report.to_dict()
    doc.pop("final_live")
    return doc


def cmd_reproduce(out_dir: Optional[str] = None, scenario_path: Optional[str] = None) -> dict:
    """Run the shipped heterogeneous scenario end to end and summarize the
    baseline-vs-optimized contrast."""
    doc = load_config_file(scenario_path) if scenario_path else reproduce_scenario_doc()
    config = build_config(doc)
    trace = config.load_workload()
    out = _prepare_out(config, out_dir)

    pack_rows = []
    for name in config.packing_policies:
        _, report = pack(trace, config.capacity, name)
        pack_rows.append(report.to_dict())
    _write_csv(out / "packing.csv", REPORT_CSV_FIELDS, pack_rows)

    table = compare_configs(
        trace,
        config.capacity,
        config.encoders,
        config.llm_layer_costs,
        config.layouts,
        config.packing_policies,
        config.plan_policies,
        config.backward_ratio,
        config.comm_latency,
    )
    _write_csv(out / "comparison.csv", COMPARISON_CSV_FIELDS, table.rows())

    mem = config.memsim
    baseline_events = memsim_mod.events_from_samples(trace, mem.bytes_per_token, mem.round_to)
    baseline_frag = memsim_mod.simulate_allocator(baseline_events, mem.allocator)
    ffd_batches, _ = pack(trace, config.capacity, "ffd")
    packed_events = memsim_mod.events_from_batches(ffd_batches, mem.bytes_per_token)
    packed_frag = memsim_mod.simulate_allocator(packed_events, mem.allocator)
    mem_rows = [
        {"scenario": "per-sample", **_frag_row(baseline_frag)},
        {"scenario": "ffd-packed", **_frag_row(packed_frag)},
    ]
    _write_csv(out / "memsim.csv", memsim_mod.MEMSIM_CSV_FIELDS, mem_rows)

    layouts = {}
    for layout in config.layouts:
        label = layout.label()
        base = table.cell(label, "padded", "naive")
        best = table.cell(label, "ffd", "balanced")
        layouts[label] = {
            "throughput_baseline": base.throughput,
            "throughput_optimized": best.throughput,
            "throughput_ratio": best.throughput / base.throughput,
            "bubble_fraction_baseline": base.result.bubble_fraction,
            "bubble_fraction_optimized": best.result.bubble_fraction,
            "idle_fraction_baseline": base.result.idle_fraction,
            "idle_fraction_optimized": best.result.idle_fraction,
            "imbalance_baseline": plan_imbalance(base.plan),
            "imbalance_optimized": plan_imbalance(best.plan),
        }

    summary = {
        "command": "reproduce",
        "scenario": config.name,
        "seed": config.seed,
        "trace": trace_stats(trace).to_dict(),
        "capacity": config.capacity,
        "packing": {row["policy"]: row for row in pack_rows},
        "layouts": layouts,
        "throughput_ratio_min": min(v["throughput_ratio"] for v in layouts.values()),
        "fragmentation": {
            "per_sample_baseline": _frag_row(baseline_frag),
            "ffd_packed": _frag_row(packed_frag),
        },
    }
    _write_json(out / "summary.json", summary)
    return summary


def _build_parser() -> _Parser:
    parser = _Parser(prog="omnisched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="experiment seed")

    p_pack = sub.add_parser("pack", help="pack a trace and report fill statistics")
    common(p_pack)
    p_pack.add_argument("--trace", help="NDJSON trace file")
    p_pack.add_argument("--capacity", type=int, help="token budget per batch")
    p_pack.add_argument("--policy", default="all", choices=sorted(POLICIES) + ["all"])

    p_plan = sub.add_parser("plan", help="plan stage assignments for each layout")
    common(p_plan)
    p_plan.add_argument("--cost-model", dest="cost_model", help="JSON cost model file")
    p_plan.add_argument("--layouts", help="comma-separated DPxPPxTP layouts")

    p_sim = sub.add_parser("simulate", help="packing x planning x schedule comparison")
    common(p_sim)
    p_sim.add_argument("--trace", help="NDJSON trace file")
    p_sim.add_argument("--capacity", type=int)
    p_sim.add_argument("--cost-model", dest="cost_model", help="JSON cost model file")
    p_sim.add_argument("--layouts", help="comma-separated DPxPPxTP layouts")

    p_route = sub.add_parser("route", help="simulate MoE routing under balancing")
    common(p_route)
    p_route.add_argument("--experts", dest="num_experts", type=int)
    p_route.add_argument("--top-k", dest="top_k", type=int)
    p_route.add_argument("--bias-step", dest="bias_step", type=float)
    p_route.add_argument("--aux-coef", dest="aux_coefficient", type=float)
    p_route.add_argument("--tokens", dest="tokens_per_step", type=int)
    p_route.add_argument("--steps", dest="steps", type=int)

    p_mem = sub.add_parser("mem", help="allocator fragmentation for a trace")
    common(p_mem)
    p_mem.add_argument("--trace", help="NDJSON trace file")
    p_mem.add_argument("--capacity", type=int)
    p_mem.add_argument("--bytes-per-token", dest="bytes_per_token", type=int)
    p_mem.add_argument("--allocator", choices=list(memsim_mod.ALLOCATOR_POLICIES))

    p_rep = sub.add_parser("reproduce", help="run the shipped headline scenario")
    p_rep.add_argument("--out", help="output directory")
    p_rep.add_argument("--scenario", help="override the shipped scenario file")

    return parser


_OVERRIDE_KEYS = (
    "seed", "trace", "capacity", "cost_model", "layouts",
    "num_experts", "top_k", "bias_step", "aux_coefficient", "tokens_per_step", "steps",
    "bytes_per_token", "allocator",
)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    doc = load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    return build_config(doc, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(json.dumps({"kind": "usage", "message": str(exc), "context": {}}), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)

    try:
        if args.command == "pack":
            cmd_pack(_config_from_args(args), args.policy, args.out)
        elif args.command == "plan":
            cmd_plan(_config_from_args(args), args.out)
        elif args.command == "simulate":
            cmd_simulate(_config_from_args(args), args.out)
        elif args.command == "route":
            cmd_route(_config_from_args(args), args.out)
        elif args.command == "mem":
            cmd_mem(_config_from_args(args), args.out)
        elif args.command == "reproduce":
            cmd_reproduce(args.out, args.scenario)
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")
    except OmniSchedError as exc:
        print(json.dumps(exc.to_dict(), default=str), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
