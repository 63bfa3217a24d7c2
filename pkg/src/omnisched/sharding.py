"""Stage planning: place encoder units and LLM layers onto pipeline stages.

The unit sequence is fixed (encoders in declared order, each encoder's units
in order, then LLM layers); a plan is a contiguous partition of that sequence
into ``pp`` non-empty segments. ``plan_balanced_stages`` finds the partition
minimizing the maximum per-stage cost exactly; ``naive_plan`` is the
everything-on-stage-0 encoder placement used as the baseline.

Tensor parallelism divides the cost of tp-divisible units by ``tp`` before
partitioning; LLM layers are always tp-divisible, encoder units carry a flag.
Data parallelism never changes a single plan's stage costs (replicas are
identical); it scales aggregate throughput downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

from .errors import ConfigError, InvalidSpecError, TooFewLayersError, TooFewUnitsError
from .workload import Modality


@dataclass(frozen=True)
class EncoderSpec:
    """Shardable encoder: ordered unit costs plus per-unit tp divisibility."""

    modality: Modality
    unit_costs: tuple[float, ...]
    tp_divisible: tuple[bool, ...]

    def __post_init__(self):
        if not self.unit_costs:
            raise InvalidSpecError(f"encoder {self.modality.value}: needs at least one unit")
        if len(self.unit_costs) != len(self.tp_divisible):
            raise InvalidSpecError(
                f"encoder {self.modality.value}: unit_costs and tp_divisible lengths differ"
            )
        for c in self.unit_costs:
            if c <= 0:
                raise InvalidSpecError(f"encoder {self.modality.value}: unit costs must be > 0")


@dataclass(frozen=True)
class ParallelLayout:
    dp: int
    pp: int
    tp: int

    def __post_init__(self):
        for name, v in (("dp", self.dp), ("pp", self.pp), ("tp", self.tp)):
            if v < 1:
                raise InvalidSpecError(f"{name} must be >= 1, got {v}")

    @property
    def world_size(self) -> int:
        return self.dp * self.pp * self.tp

    @classmethod
    def parse(cls, text: str) -> "ParallelLayout":
        """Parse a ``DPxPPxTP`` string, e.g. ``1x4x2``."""
        parts = text.lower().split("x")
        if len(parts) != 3:
            raise ConfigError(f"layout must look like 1x4x2 (dp x pp x tp), got {text!r}")
        try:
            dp, pp, tp = (int(p) for p in parts)
        except ValueError:
            raise ConfigError(f"layout degrees must be integers, got {text!r}") from None
        return cls(dp=dp, pp=pp, tp=tp)

    def label(self) -> str:
        return f"{self.dp}x{self.pp}x{self.tp}"


@dataclass(frozen=True)
class PlanUnit:
    """One shardable unit: an encoder sub-block or an LLM layer."""

    kind: str  # "encoder" | "llm"
    modality: Union[Modality, None]
    index: int
    cost: float
    tp_divisible: bool

    @property
    def label(self) -> str:
        if self.kind == "encoder":
            return f"{self.modality.value}.{self.index}"
        return f"llm.{self.index}"

    def effective_cost(self, tp: int) -> float:
        return self.cost / tp if self.tp_divisible else self.cost


def build_units(encoders: Sequence[EncoderSpec], llm_layer_costs: Sequence[float]) -> list[PlanUnit]:
    units: list[PlanUnit] = []
    for enc in encoders:
        for i, (c, div) in enumerate(zip(enc.unit_costs, enc.tp_divisible)):
            units.append(PlanUnit("encoder", enc.modality, i, float(c), bool(div)))
    for i, c in enumerate(llm_layer_costs):
        if c <= 0:
            raise InvalidSpecError(f"llm layer {i}: cost must be > 0")
        units.append(PlanUnit("llm", None, i, float(c), True))
    return units


@dataclass(frozen=True)
class StagePlan:
    layout: ParallelLayout
    stage_assignment: tuple[tuple[PlanUnit, ...], ...]
    stage_cost: tuple[float, ...]
    boundaries: tuple[int, ...]  # cumulative unit counts at each stage end

    def to_dict(self) -> dict:
        return {
            "layout": {"dp": self.layout.dp, "pp": self.layout.pp, "tp": self.layout.tp},
            "stages": [
                {"units": [u.label for u in stage], "cost": cost}
                for stage, cost in zip(self.stage_assignment, self.stage_cost)
            ],
            "max_stage_cost": max(self.stage_cost),
            "imbalance": plan_imbalance(self),
        }


def _assemble_plan(units: list[PlanUnit], layout: ParallelLayout, cuts: list[int]) -> StagePlan:
    """Build a StagePlan from segment end indices (ascending, last == len(units))."""
    stages = []
    costs = []
    start = 0
    for end in cuts:
        seg = tuple(units[start:end])
        stages.append(seg)
        costs.append(sum(u.effective_cost(layout.tp) for u in seg))
        start = end
    return StagePlan(
        layout=layout,
        stage_assignment=tuple(stages),
        stage_cost=tuple(costs),
        boundaries=tuple(cuts),
    )


def plan_balanced_stages(
    encoders: Sequence[EncoderSpec],
    llm_layer_costs: Sequence[float],
    layout: ParallelLayout,
) -> StagePlan:
    """Exact minimum-bottleneck contiguous partition into ``pp`` stages.

    Dynamic program over suffixes, O(n^2 * pp); ties are broken by the
    lexicographically smallest boundary vector.
    """
    units = build_units(encoders, llm_layer_costs)
    n = len(units)
    pp = layout.pp
    if n < pp:
        raise TooFewUnitsError(
            f"{n} shardable units cannot fill {pp} pipeline stages", units=n, pp=pp
        )

    eff = [u.effective_cost(layout.tp) for u in units]
    prefix = [0.0] * (n + 1)
    for i, c in enumerate(eff):
        prefix[i + 1] = prefix[i] + c

    def seg(i: int, j: int) -> float:
        return prefix[j] - prefix[i]

    # best[i][r]: minimal max stage cost partitioning units[i:] into r segments
    INF = float("inf")
    best = [[INF] * (pp + 1) for _ in range(n + 1)]
    best[n][0] = 0.0
    for r in range(1, pp + 1):
        # at least r units must remain
        for i in range(n - r, -1, -1):
            if r == 1:
                best[i][1] = seg(i, n)
                continue
            acc = INF
            for j in range(i + 1, n - (r - 1) + 1):
                cand = max(seg(i, j), best[j][r - 1])
                if cand < acc:
                    acc = cand
            best[i][r] = acc

    opt = best[0][pp]
    cuts: list[int] = []
    i = 0
    for r in range(pp, 0, -1):
        if r == 1:
            cuts.append(n)
            break
        for j in range(i + 1, n - (r - 1) + 1):
            if seg(i, j) <= opt and best[j][r - 1] <= opt:
                cuts.append(j)
                i = j
                break
    return _assemble_plan(units, layout, cuts)


def naive_plan(
    encoders: Sequence[EncoderSpec],
    llm_layer_costs: Sequence[float],
    layout: ParallelLayout,
) -> StagePlan:
    """Baseline: all encoder units on stage 0, LLM layers split evenly by
    count across stages (earlier stages take the remainder)."""
    units = build_units(encoders, llm_layer_costs)
    n_llm = len(llm_layer_costs)
    pp = layout.pp
    if n_llm < pp:
        raise TooFewLayersError(
            f"{n_llm} LLM layers cannot fill {pp} pipeline stages", layers=n_llm, pp=pp
        )
    n_enc = len(units) - n_llm
    q, rem = divmod(n_llm, pp)
    cuts = []
    end = n_enc
    for s in range(pp):
        end += q + (1 if s < rem else 0)
        cuts.append(end)
    return _assemble_plan(units, layout, cuts)


def plan_imbalance(plan: StagePlan) -> float:
    """max stage cost / mean stage cost; 1.0 iff perfectly balanced."""
    costs = plan.stage_cost
    return max(costs) / (sum(costs) / len(costs))


def load_cost_model(path: Union[str, Path]) -> tuple[list[EncoderSpec], list[float]]:
    """Read a JSON cost model: encoder unit costs plus LLM layer costs."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"cost model file not found: {path}", path=str(path))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cost model is not valid JSON: {exc.msg}", path=str(path)) from None
    return parse_cost_model(doc)


def parse_cost_model(doc: dict) -> tuple[list[EncoderSpec], list[float]]:
    if not isinstance(doc, dict) or "encoders" not in doc or "llm_layer_costs" not in doc:
        raise ConfigError("cost model needs 'encoders' and 'llm_layer_costs'")
    encoders = []
    for entry in doc["encoders"]:
        try:
            modality = Modality(entry["modality"])
        except (KeyError, ValueError):
            raise ConfigError(f"bad encoder modality in cost model: {entry!r}") from None
        costs = entry.get("unit_costs")
        if not costs:
            raise ConfigError(f"encoder {modality.value}: unit_costs missing or empty")
        divisible = entry.get("tp_divisible", [True] * len(costs))
        encoders.append(
            EncoderSpec(
                modality=modality,
                unit_costs=tuple(float(c) for c in costs),
                tp_divisible=tuple(bool(d) for d in divisible),
            )
        )
    layers = [float(c) for c in doc["llm_layer_costs"]]
    if not layers:
        raise ConfigError("llm_layer_costs must not be empty")
    return encoders, layers
