"""Synchronous 1F1B pipeline schedule simulation over a stage plan.

Non-interleaved 1F1B: stage ``s`` runs ``min(m, pp - s)`` warmup forwards,
then strictly alternates backward/forward (backward first, which also
resolves same-instant ties in favor of backward), then drains the remaining
backwards. Dependencies:

* forward(s, i) needs forward(s-1, i)
* backward(s, i) needs forward(s, i) and backward(s+1, i)

Per-stage per-microbatch forward cost is ``stage_cost[s] * tokens``;
backward cost is ``backward_ratio`` times that. An optional constant
``comm_latency`` is charged on every cross-stage dependency edge.

``bubble_fraction`` follows the bottleneck-stage convention:
``1 - ideal_time / makespan`` with ``ideal_time`` the busy time of the
busiest stage. ``idle_fraction`` additionally reports the idle share across
the whole stage grid, which is the quantity that grows when work piles onto
one stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError, EmptyMicrobatchError, InvalidSpecError
from .packing import PackedBatch, PackingReport, pack
from .sharding import EncoderSpec, ParallelLayout, StagePlan, naive_plan, plan_balanced_stages, plan_imbalance
from .workload import WorkloadTrace


@dataclass(frozen=True)
class MicroBatch:
    """One pipeline work item.

    ``tokens`` drives compute cost (the physical batch width, capacity for
    padded batches); ``useful_tokens`` excludes padding and is what
    throughput counts.
    """

    index: int
    tokens: int
    useful_tokens: int

    def __post_init__(self):
        if self.tokens < 1:
            raise InvalidSpecError(f"microbatch {self.index}: tokens must be >= 1")
        if not (0 <= self.useful_tokens <= self.tokens):
            raise InvalidSpecError(
                f"microbatch {self.index}: useful_tokens must be in [0, tokens]"
            )


def microbatches_from_batches(batches: Sequence[PackedBatch]) -> list[MicroBatch]:
    """Padded batches cost their full capacity; packed batches cost what they hold."""
    return [
        MicroBatch(
            index=i,
            tokens=b.capacity if b.padded else b.used,
            useful_tokens=b.used,
        )
        for i, b in enumerate(batches)
    ]


@dataclass(frozen=True)
class StageEvent:
    kind: str  # "F" | "B"
    microbatch: int
    start: float
    end: float


@dataclass(frozen=True)
class ScheduleResult:
    makespan: float
    ideal_time: float
    bubble_fraction: float
    idle_fraction: float
    throughput: float
    total_useful_tokens: int
    stage_busy: tuple[float, ...]
    stage_timelines: tuple[tuple[StageEvent, ...], ...]

    def timeline_rows(self) -> list[tuple]:
        """CSV rows (stage, kind, start, end, microbatch), idle gaps included."""
        rows = []
        for s, events in enumerate(self.stage_timelines):
            cursor = 0.0
            for ev in events:
                if ev.start > cursor:
                    rows.append((s, "idle", cursor, ev.start, ""))
                rows.append((s, ev.kind, ev.start, ev.end, ev.microbatch))
                cursor = ev.end
            if cursor < self.makespan:
                rows.append((s, "idle", cursor, self.makespan, ""))
        return rows

    def summary_dict(self) -> dict:
        return {
            "makespan": self.makespan,
            "ideal_time": self.ideal_time,
            "bubble_fraction": self.bubble_fraction,
            "idle_fraction": self.idle_fraction,
            "throughput": self.throughput,
            "total_useful_tokens": self.total_useful_tokens,
        }


def stage_op_order(pp: int, stage: int, m: int) -> list[tuple[str, int]]:
    """The fixed 1F1B op sequence for one stage: warmup forwards, then
    alternating backward/forward, then the backward drain."""
    warmup = min(m, pp - stage)
    order: list[tuple[str, int]] = [("F", i) for i in range(warmup)]
    next_f = warmup
    next_b = 0
    while next_b < m:
        order.append(("B", next_b))
        next_b += 1
        if next_f < m:
            order.append(("F", next_f))
            next_f += 1
    return order


def simulate_1f1b(
    plan: StagePlan,
    microbatches: Sequence[MicroBatch],
    backward_ratio: float = 2.0,
    comm_latency: float = 0.0,
) -> ScheduleResult:
    """Event-driven simulation of the non-interleaved 1F1B schedule."""
    if not microbatches:
        raise EmptyMicrobatchError("simulation needs at least one microbatch")
    if backward_ratio <= 0:
        raise InvalidSpecError(f"backward_ratio must be > 0, got {backward_ratio}")

    pp = plan.layout.pp
    m = len(microbatches)
    fwd = [[plan.stage_cost[s] * mb.tokens for mb in microbatches] for s in range(pp)]
    bwd = [[backward_ratio * c for c in row] for row in fwd]

    orders = [stage_op_order(pp, s, m) for s in range(pp)]
    pointer = [0] * pp
    stage_free = [0.0] * pp
    end_time: dict[tuple[str, int, int], float] = {}
    timelines: list[list[StageEvent]] = [[] for _ in range(pp)]

    remaining = sum(len(o) for o in orders)
    while remaining:
        progressed = False
        for s in range(pp):
            while pointer[s] < len(orders[s]):
                kind, i = orders[s][pointer[s]]
                ready = stage_free[s]
                if kind == "F":
                    if s > 0:
                        dep = end_time.get(("F", s - 1, i))
                        if dep is None:
                            break
                        ready = max(ready, dep + comm_latency)
                    duration = fwd[s][i]
                else:
                    dep_f = end_time.get(("F", s, i))
                    if dep_f is None:
                        break
                    ready = max(ready, dep_f)
                    if s < pp - 1:
                        dep_b = end_time.get(("B", s + 1, i))
                        if dep_b is None:
                            break
                        ready = max(ready, dep_b + comm_latency)
                    duration = bwd[s][i]
                finish = ready + duration
                end_time[(kind, s, i)] = finish
                stage_free[s] = finish
                timelines[s].append(StageEvent(kind=kind, microbatch=i, start=ready, end=finish))
                pointer[s] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise RuntimeError("1F1B schedule deadlocked; dependency order is inconsistent")

    makespan = max(end_time.values())
    busy = tuple(sum(ev.end - ev.start for ev in tl) for tl in timelines)
    ideal = max(busy)
    useful = sum(mb.useful_tokens for mb in microbatches)
    return ScheduleResult(
        makespan=makespan,
        ideal_time=ideal,
        bubble_fraction=1.0 - ideal / makespan,
        idle_fraction=1.0 - sum(busy) / (pp * makespan),
        throughput=plan.layout.dp * useful / makespan,
        total_useful_tokens=useful,
        stage_busy=busy,
        stage_timelines=tuple(tuple(tl) for tl in timelines),
    )


def bubble_fraction_analytic(pp: int, m: int) -> float:
    """Closed-form 1F1B bubble fraction for uniform stage costs."""
    if pp < 1 or m < 1:
        raise InvalidSpecError(f"pp and m must be >= 1, got pp={pp}, m={m}")
    return (pp - 1) / (m + pp - 1)


def estimate_throughput(result: ScheduleResult, total_useful_tokens: int, dp: int) -> float:
    """Useful tokens per time unit across dp replicas; padding never counts."""
    if result.makespan <= 0:
        raise InvalidSpecError("makespan must be > 0")
    return dp * total_useful_tokens / result.makespan


PLAN_POLICIES = {
    "naive": naive_plan,
    "balanced": plan_balanced_stages,
}

BASELINE_CELL = ("padded", "naive")


@dataclass(frozen=True)
class CompareCell:
    layout: ParallelLayout
    packing_policy: str
    plan_policy: str
    packing_report: PackingReport
    plan: StagePlan
    result: ScheduleResult
    throughput: float
    ratio_vs_baseline: float

    def to_row(self) -> dict:
        return {
            "layout": self.layout.label(),
            "packing_policy": self.packing_policy,
            "plan_policy": self.plan_policy,
            "batch_count": self.packing_report.batch_count,
            "fill_fraction": self.packing_report.fill_fraction,
            "max_stage_cost": max(self.plan.stage_cost),
            "imbalance": plan_imbalance(self.plan),
            "makespan": self.result.makespan,
            "bubble_fraction": self.result.bubble_fraction,
            "idle_fraction": self.result.idle_fraction,
            "throughput": self.throughput,
            "ratio_vs_baseline": self.ratio_vs_baseline,
        }


COMPARISON_CSV_FIELDS = [
    "layout", "packing_policy", "plan_policy", "batch_count", "fill_fraction",
    "max_stage_cost", "imbalance", "makespan", "bubble_fraction", "idle_fraction",
    "throughput", "ratio_vs_baseline",
]


@dataclass(frozen=True)
class ComparisonTable:
    cells: tuple[CompareCell, ...]
    headline_ratio: dict[str, float]  # layout label -> (ffd, balanced) ratio

    def rows(self) -> list[dict]:
        return [c.to_row() for c in self.cells]

    def cell(self, layout_label: str, packing_policy: str, plan_policy: str) -> CompareCell:
        for c in self.cells:
            if (
                c.layout.label() == layout_label
                and c.packing_policy == packing_policy
                and c.plan_policy == plan_policy
            ):
                return c
        raise KeyError((layout_label, packing_policy, plan_policy))


def compare_configs(
    trace: WorkloadTrace,
    capacity: int,
    encoders: Sequence[EncoderSpec],
    llm_layer_costs: Sequence[float],
    layouts: Sequence[ParallelLayout],
    packing_policies: Sequence[str] = ("padded", "stream", "ffd"),
    plan_policies: Sequence[str] = ("naive", "balanced"),
    backward_ratio: float = 2.0,
    comm_latency: float = 0.0,
) -> ComparisonTable:
    """Run packing x planning x simulation over every cell and normalize each
    cell's throughput by the (padded, naive) baseline of the same layout.

    The baseline cell is always computed, even when not requested.
    """
    if not layouts:
        raise ConfigError("at least one layout is required")
    for p in plan_policies:
        if p not in PLAN_POLICIES:
            raise ConfigError(f"unknown plan policy {p!r}", policy=p)

    pack_names = list(dict.fromkeys(list(packing_policies) + [BASELINE_CELL[0]]))
    plan_names = list(dict.fromkeys(list(plan_policies) + [BASELINE_CELL[1]]))
    packed = {name: pack(trace, capacity, name) for name in pack_names}
    total_useful = trace.total_tokens

    cells: list[CompareCell] = []
    headline: dict[str, float] = {}
    for layout in layouts:
        plans = {name: PLAN_POLICIES[name](encoders, llm_layer_costs, layout) for name in plan_names}
        raw: dict[tuple[str, str], tuple[PackingReport, StagePlan, ScheduleResult, float]] = {}
        for pname in pack_names:
            batches, report = packed[pname]
            mbs = microbatches_from_batches(batches)
            for plname in plan_names:
                result = simulate_1f1b(plans[plname], mbs, backward_ratio, comm_latency)
                thr = estimate_throughput(result, total_useful, layout.dp)
                raw[(pname, plname)] = (report, plans[plname], result, thr)
        base_thr = raw[BASELINE_CELL][3]
        for pname in packing_policies:
            for plname in plan_policies:
                report, plan, result, thr = raw[(pname, plname)]
                cells.append(
                    CompareCell(
                        layout=layout,
                        packing_policy=pname,
                        plan_policy=plname,
                        packing_report=report,
                        plan=plan,
                        result=result,
                        throughput=thr,
                        ratio_vs_baseline=thr / base_thr,
                    )
                )
        if "ffd" in packing_policies and "balanced" in plan_policies:
            headline[layout.label()] = raw[("ffd", "balanced")][3] / base_thr
    return ComparisonTable(cells=tuple(cells), headline_ratio=headline)
