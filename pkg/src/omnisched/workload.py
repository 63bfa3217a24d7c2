"""Multimodal workload model: trace records, file ingestion, synthetic generation.

A trace is an ordered list of variable-length samples tagged with one of four
modalities. Traces live in NDJSON files (one flat JSON object per line,
``#`` comments ignored) and can be generated synthetically from a seeded
spec with per-modality mixture weights and length distributions.

The synthetic generator draws from numpy's PCG64 stream seeded with a single
64-bit integer; for each sample it draws the modality first, then the length,
so a trace is a pure function of its spec.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import (
    DuplicateIdError,
    EmptyTraceError,
    InvalidSpecError,
    TraceNotFoundError,
    TraceParseError,
)


class Modality(str, Enum):
    TEXT = "text"
    IMAGE = "image"
    AUDIO = "audio"
    VIDEO = "video"


# Fixed draw order for the synthetic generator's mixture lookup.
MODALITY_ORDER = (Modality.TEXT, Modality.IMAGE, Modality.AUDIO, Modality.VIDEO)


@dataclass(frozen=True)
class ModalitySample:
    """One variable-length training sample."""

    id: int
    modality: Modality
    length: int
    cost_per_token: float = 1.0

    def __post_init__(self):
        if self.length < 1:
            raise InvalidSpecError(
                f"sample {self.id}: length must be >= 1, got {self.length}",
                sample_id=self.id,
            )
        if self.cost_per_token <= 0:
            raise InvalidSpecError(
                f"sample {self.id}: cost_per_token must be > 0",
                sample_id=self.id,
            )


@dataclass(frozen=True)
class WorkloadTrace:
    samples: tuple[ModalitySample, ...]
    name: str = "trace"

    def __post_init__(self):
        seen: dict[int, int] = {}
        for pos, s in enumerate(self.samples):
            if s.id in seen:
                raise DuplicateIdError(
                    f"duplicate sample id {s.id}", sample_id=s.id, positions=[seen[s.id], pos]
                )
            seen[s.id] = pos

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def total_tokens(self) -> int:
        return sum(s.length for s in self.samples)


@dataclass(frozen=True)
class UniformLength:
    """Integer lengths drawn uniformly from [low, high]."""

    low: int
    high: int

    def __post_init__(self):
        if not (1 <= self.low <= self.high):
            raise InvalidSpecError(
                f"uniform bounds must satisfy 1 <= low <= high, got [{self.low}, {self.high}]"
            )

    def draw(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class LogNormalLength:
    """exp(Normal(mu, sigma)) rounded to the nearest integer, clamped to [1, max_len]."""

    mu: float
    sigma: float
    max_len: int

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidSpecError(f"sigma must be >= 0, got {self.sigma}")
        if self.max_len < 1:
            raise InvalidSpecError(f"max_len must be >= 1, got {self.max_len}")

    def draw(self, rng: np.random.Generator) -> int:
        raw = int(round(math.exp(rng.normal(self.mu, self.sigma))))
        return min(max(raw, 1), self.max_len)


LengthDistribution = Union[UniformLength, LogNormalLength]


@dataclass(frozen=True)
class SyntheticTraceSpec:
    """Seeded recipe for a synthetic trace.

    ``weights`` are relative mixture weights per modality (non-negative, at
    least one positive); ``lengths`` maps each weighted modality to its
    length distribution.
    """

    weights: dict[Modality, float]
    lengths: dict[Modality, LengthDistribution]
    sample_count: int
    seed: int
    name: str = "synthetic"

    def __post_init__(self):
        if self.sample_count < 1:
            raise InvalidSpecError(f"sample_count must be >= 1, got {self.sample_count}")
        if not self.weights:
            raise InvalidSpecError("mixture weights must not be empty")
        total = 0.0
        for m, w in self.weights.items():
            if w < 0:
                raise InvalidSpecError(f"negative mixture weight for {m.value}: {w}")
            total += w
        if total <= 0:
            raise InvalidSpecError("mixture weights must sum to a positive value")
        for m, w in self.weights.items():
            if w > 0 and m not in self.lengths:
                raise InvalidSpecError(f"no length distribution for modality {m.value}")


def generate_trace(spec: SyntheticTraceSpec) -> WorkloadTrace:
    """Generate a trace deterministically from ``spec``.

    Per sample: one uniform draw picks the modality from the mixture, then one
    draw from that modality's length distribution picks the length.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    ordered = [m for m in MODALITY_ORDER if spec.weights.get(m, 0.0) > 0]
    weights = np.array([spec.weights[m] for m in ordered], dtype=float)
    cumulative = np.cumsum(weights / weights.sum())

    samples = []
    for i in range(spec.sample_count):
        r = rng.random()
        modality = ordered[int(np.searchsorted(cumulative, r, side="right").clip(0, len(ordered) - 1))]
        length = spec.lengths[modality].draw(rng)
        samples.append(ModalitySample(id=i, modality=modality, length=length))
    return WorkloadTrace(samples=tuple(samples), name=spec.name)


_REQUIRED_FIELDS = {"id", "modality", "length"}
_ALLOWED_FIELDS = _REQUIRED_FIELDS | {"cost_per_token"}


def _parse_record(obj: dict, lineno: int) -> ModalitySample:
    if not isinstance(obj, dict):
        raise TraceParseError(f"line {lineno}: record must be an object", line=lineno)
    unknown = set(obj) - _ALLOWED_FIELDS
    if unknown:
        raise TraceParseError(
            f"line {lineno}: unknown fields {sorted(unknown)}", line=lineno, fields=sorted(unknown)
        )
    missing = _REQUIRED_FIELDS - set(obj)
    if missing:
        raise TraceParseError(
            f"line {lineno}: missing fields {sorted(missing)}", line=lineno, fields=sorted(missing)
        )
    if not isinstance(obj["id"], int) or isinstance(obj["id"], bool):
        raise TraceParseError(f"line {lineno}: id must be an integer", line=lineno)
    try:
        modality = Modality(obj["modality"])
    except ValueError:
        raise TraceParseError(
            f"line {lineno}: unknown modality {obj['modality']!r}", line=lineno
        ) from None
    if not isinstance(obj["length"], int) or isinstance(obj["length"], bool) or obj["length"] < 1:
        raise TraceParseError(f"line {lineno}: length must be a positive integer", line=lineno)
    cost = obj.get("cost_per_token", 1.0)
    if not isinstance(cost, (int, float)) or isinstance(cost, bool) or cost <= 0:
        raise TraceParseError(f"line {lineno}: cost_per_token must be > 0", line=lineno)
    return ModalitySample(id=obj["id"], modality=modality, length=obj["length"], cost_per_token=float(cost))


def load_trace(path: Union[str, Path]) -> WorkloadTrace:
    """Load a trace from an NDJSON file, preserving record order.

    Blank lines and ``#`` comment lines are skipped. Raises a parse error
    naming the offending line, a duplicate-id error, or an empty-file error
    when no records are present.
    """
    path = Path(path)
    if not path.exists():
        raise TraceNotFoundError(f"trace file not found: {path}", path=str(path))

    samples: list[ModalitySample] = []
    seen: dict[int, int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise TraceParseError(
                    f"line {lineno}: invalid record: {exc.msg}", line=lineno
                ) from None
            sample = _parse_record(obj, lineno)
            if sample.id in seen:
                raise DuplicateIdError(
                    f"duplicate sample id {sample.id} on lines {seen[sample.id]} and {lineno}",
                    sample_id=sample.id,
                    lines=[seen[sample.id], lineno],
                )
            seen[sample.id] = lineno
            samples.append(sample)
    if not samples:
        raise EmptyTraceError(f"trace file contains no records: {path}", path=str(path))
    return WorkloadTrace(samples=tuple(samples), name=path.stem)


def dump_trace(trace: WorkloadTrace) -> str:
    """Canonical NDJSON serialization; default cost_per_token is omitted."""
    lines = []
    for s in trace.samples:
        rec: dict = {"id": s.id, "modality": s.modality.value, "length": s.length}
        if s.cost_per_token != 1.0:
            rec["cost_per_token"] = s.cost_per_token
        lines.append(json.dumps(rec, separators=(", ", ": ")))
    return "\n".join(lines) + "\n"


def save_trace(trace: WorkloadTrace, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_trace(trace), encoding="utf-8")


@dataclass(frozen=True)
class ModalityStats:
    count: int
    min_length: int
    max_length: int
    mean_length: float
    total_tokens: int


@dataclass(frozen=True)
class TraceStats:
    total_samples: int
    total_tokens: int
    per_modality: dict[str, ModalityStats] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total_samples": self.total_samples,
            "total_tokens": self.total_tokens,
            "per_modality": {
                m: {
                    "count": st.count,
                    "min_length": st.min_length,
                    "max_length": st.max_length,
                    "mean_length": st.mean_length,
                    "total_tokens": st.total_tokens,
                }
                for m, st in sorted(self.per_modality.items())
            },
        }


def trace_stats(trace: WorkloadTrace) -> TraceStats:
    """Summarize a trace; modalities with no samples are simply absent."""
    buckets: dict[str, list[int]] = {}
    for s in trace.samples:
        buckets.setdefault(s.modality.value, []).append(s.length)
    per = {
        m: ModalityStats(
            count=len(ls),
            min_length=min(ls),
            max_length=max(ls),
            mean_length=sum(ls) / len(ls),
            total_tokens=sum(ls),
        )
        for m, ls in buckets.items()
    }
    return TraceStats(
        total_samples=len(trace.samples),
        total_tokens=trace.total_tokens,
        per_modality=per,
    )


def concat_traces(traces: Iterable[WorkloadTrace], name: str = "concat") -> WorkloadTrace:
    """Concatenate traces, reassigning ids sequentially to keep them unique."""
    samples = []
    next_id = 0
    for t in traces:
        for s in t.samples:
            samples.append(ModalitySample(next_id, s.modality, s.length, s.cost_per_token))
            next_id += 1
    return WorkloadTrace(samples=tuple(samples), name=name)
