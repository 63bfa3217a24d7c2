"""Allocator behavior under batch-shaped allocation streams.

Two policies bracket real caching allocators at this abstraction level:

* ``exact_reuse_cache`` keeps freed blocks in a size-keyed cache and reuses
  only exact size matches, so every new size grows the reserved pool even
  when live memory is flat. That growth is the fragmentation this module
  measures.
* ``no_cache`` returns blocks immediately; reserved always equals live, so
  it shows zero fragmentation by construction.

Fixed-capacity batch streams allocate one capacity-sized buffer per batch
(constant shape, the packed regime); per-sample streams allocate each
sample at its own size (the dynamic-shape regime packing replaces).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

from .errors import AllocatorError, DoubleFreeError, UnknownTagError
from .packing import PackedBatch
from .workload import WorkloadTrace

AllocatorPolicy = Literal["exact_reuse_cache", "no_cache"]

ALLOCATOR_POLICIES = ("exact_reuse_cache", "no_cache")


@dataclass(frozen=True)
class AllocEvent:
    kind: str  # "alloc" | "free"
    tag: str
    size: int = 0

    def __post_init__(self):
        if self.kind not in ("alloc", "free"):
            raise AllocatorError(f"event kind must be alloc or free, got {self.kind!r}")
        if self.kind == "alloc" and self.size < 1:
            raise AllocatorError(f"alloc {self.tag!r}: size must be a positive integer")


@dataclass(frozen=True)
class FragReport:
    policy: str
    peak_reserved: int
    peak_live: int
    fragmentation_ratio: float
    reuse_hits: int
    new_blocks: int
    final_live: int

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "peak_reserved": self.peak_reserved,
            "peak_live": self.peak_live,
            "fragmentation_ratio": self.fragmentation_ratio,
            "reuse_hits": self.reuse_hits,
            "new_blocks": self.new_blocks,
            "final_live": self.final_live,
        }


MEMSIM_CSV_FIELDS = ["scenario", "policy", "peak_reserved", "peak_live", "fragmentation_ratio", "reuse_hits", "new_blocks"]


def events_from_batches(batches: Sequence[PackedBatch], bytes_per_token: int) -> list[AllocEvent]:
    """One capacity-sized buffer per batch, freed before the next batch.

    Fixed-capacity batches are physically capacity-shaped regardless of how
    full they are, which is exactly why packing to a fixed capacity gives
    the allocator a constant-size stream.
    """
    if bytes_per_token < 1:
        raise AllocatorError(f"bytes_per_token must be >= 1, got {bytes_per_token}")
    events = []
    for i, b in enumerate(batches):
        tag = f"batch{i}"
        events.append(AllocEvent("alloc", tag, b.capacity * bytes_per_token))
        events.append(AllocEvent("free", tag))
    return events


def events_from_samples(
    trace: WorkloadTrace, bytes_per_token: int, round_to: int = 1
) -> list[AllocEvent]:
    """The no-packing regime: one buffer per sample at its own (optionally
    bucket-rounded) size, freed before the next sample."""
    if bytes_per_token < 1:
        raise AllocatorError(f"bytes_per_token must be >= 1, got {bytes_per_token}")
    if round_to < 1:
        raise AllocatorError(f"round_to must be >= 1, got {round_to}")
    events = []
    for s in trace.samples:
        tag = f"sample{s.id}"
        tokens = -(-s.length // round_to) * round_to
        events.append(AllocEvent("alloc", tag, tokens * bytes_per_token))
        events.append(AllocEvent("free", tag))
    return events


def simulate_allocator(events: Sequence[AllocEvent], policy: AllocatorPolicy) -> FragReport:
    """Replay an event stream and report fragmentation statistics.

    ``fragmentation_ratio`` is the share of reserved memory not backing live
    allocations at the first instant reserved memory peaks.
    """
    if policy not in ALLOCATOR_POLICIES:
        raise AllocatorError(f"unknown allocator policy {policy!r}", policy=policy)
    caching = policy == "exact_reuse_cache"

    live: dict[str, int] = {}
    ever_allocated: set[str] = set()
    cache: dict[int, int] = {}  # size -> count of cached blocks
    live_total = 0
    cached_total = 0
    peak_reserved = 0
    live_at_peak = 0
    peak_live = 0
    reuse_hits = 0
    new_blocks = 0

    for ev in events:
        if ev.kind == "alloc":
            if ev.tag in live:
                raise AllocatorError(
                    f"alloc tag {ev.tag!r} is already live", tag=ev.tag
                )
            if caching and cache.get(ev.size, 0) > 0:
                cache[ev.size] -= 1
                cached_total -= ev.size
                reuse_hits += 1
            else:
                new_blocks += 1
            live[ev.tag] = ev.size
            ever_allocated.add(ev.tag)
            live_total += ev.size
            peak_live = max(peak_live, live_total)
            reserved = live_total + cached_total
            if reserved > peak_reserved:
                peak_reserved = reserved
                live_at_peak = live_total
        else:
            if ev.tag not in live:
                if ev.tag in ever_allocated:
                    raise DoubleFreeError(f"tag {ev.tag!r} was already freed", tag=ev.tag)
                raise UnknownTagError(f"free of unknown tag {ev.tag!r}", tag=ev.tag)
            size = live.pop(ev.tag)
            live_total -= size
            if caching:
                cache[size] = cache.get(size, 0) + 1
                cached_total += size
            # no_cache returns the block immediately; reserved tracks live

    frag = 0.0 if peak_reserved == 0 else (peak_reserved - live_at_peak) / peak_reserved
    return FragReport(
        policy=policy,
        peak_reserved=peak_reserved,
        peak_live=peak_live,
        fragmentation_ratio=frag,
        reuse_hits=reuse_hits,
        new_blocks=new_blocks,
        final_live=live_total,
    )
