import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnisched.errors import OversizeSampleError
from omnisched.packing import pack_ffd, pack_padded, pack_stream, padding_baseline
from omnisched.workload import Modality, ModalitySample, WorkloadTrace

from oracles import min_bins_exhaustive


def trace_of(lengths):
    return WorkloadTrace(
        samples=tuple(ModalitySample(i, Modality.TEXT, l) for i, l in enumerate(lengths))
    )


def batch_lengths(batches):
    return [[e.length for e in b.entries] for b in batches]


class TestFfd:
    def test_reference_instance(self):
        batches, report = pack_ffd(trace_of([7, 5, 4, 3, 1]), capacity=8)
        assert batch_lengths(batches) == [[7, 1], [5, 3], [4]]
        assert report.batch_count == 3
        assert report.fill_fraction == pytest.approx(20 / 24)
        # exhaustive oracle agrees this is optimal
        assert min_bins_exhaustive([7, 5, 4, 3, 1], 8) == 3

    def test_single_full_sample(self):
        batches, report = pack_ffd(trace_of([8]), capacity=8)
        assert report.batch_count == 1
        assert report.fill_fraction == 1.0

    def test_oversize_sample_names_id(self):
        with pytest.raises(OversizeSampleError) as exc:
            pack_ffd(trace_of([3, 9, 2]), capacity=8)
        assert exc.value.context["sample_id"] == 1

    def test_tie_break_by_ascending_id(self):
        # equal lengths placed in id order
        batches, _ = pack_ffd(trace_of([4, 4, 4]), capacity=8)
        ids = [[e.sample_id for e in b.entries] for b in batches]
        assert ids == [[0, 1], [2]]


class TestStream:
    def test_reference_instance(self):
        batches, report = pack_stream(trace_of([5, 4, 5]), capacity=8)
        assert batch_lengths(batches) == [[5], [4], [5]]
        assert report.fill_fraction == pytest.approx(14 / 24)

    def test_exact_fit_pairs(self):
        _, report = pack_stream(trace_of([4, 4, 4, 4]), capacity=8)
        assert report.batch_count == 2

    def test_empty_trace(self):
        batches, report = pack_stream(WorkloadTrace(samples=()), capacity=8)
        assert batches == []
        assert report.batch_count == 0
        assert report.fill_fraction == 0.0
        assert report.padding_tokens == 0


class TestPaddedBaseline:
    def test_reference_instance(self):
        report = padding_baseline(trace_of([7, 5, 4, 3, 1]), capacity=8)
        assert report.batch_count == 5
        assert report.fill_fraction == pytest.approx(0.5)

    def test_full_batches(self):
        report = padding_baseline(trace_of([8, 8]), capacity=8)
        assert report.fill_fraction == 1.0

    def test_single_tiny_sample(self):
        report = padding_baseline(trace_of([1]), capacity=8)
        assert report.fill_fraction == pytest.approx(0.125)

    def test_batches_flagged_padded(self):
        batches, _ = pack_padded(trace_of([3, 5]), capacity=8)
        assert all(b.padded for b in batches)
        assert [b.used for b in batches] == [3, 5]


@st.composite
def length_lists(draw):
    capacity = draw(st.integers(min_value=1, max_value=30))
    lengths = draw(st.lists(st.integers(min_value=1, max_value=capacity), min_size=0, max_size=30))
    return lengths, capacity


@given(length_lists())
@settings(max_examples=150)
def test_conservation_capacity_offsets(case):
    lengths, capacity = case
    trace = trace_of(lengths)
    for packer in (pack_ffd, pack_stream, pack_padded):
        batches, report = packer(trace, capacity)
        placed = sorted(e.sample_id for b in batches for e in b.entries)
        assert placed == sorted(s.id for s in trace.samples)
        for b in batches:
            b.validate()
            assert b.used <= capacity
        assert report.batch_count == len(batches)
        assert report.padding_tokens == report.batch_count * capacity - report.total_tokens
        if report.batch_count:
            assert 0 < report.fill_fraction <= 1


@given(length_lists())
@settings(max_examples=150)
def test_stream_never_worse_than_padded(case):
    # next-fit opens at most one batch per sample
    lengths, capacity = case
    trace = trace_of(lengths)
    _, stream = pack_stream(trace, capacity)
    _, padded = pack_padded(trace, capacity)
    if lengths:
        assert stream.fill_fraction >= padded.fill_fraction


@pytest.mark.parametrize("seed", range(20))
def test_ffd_beats_stream_on_random_traces(seed):
    # holds on generic traces; an adversarial arrival order can invert it
    # (see the documented counterexample below), so this stays seeded.
    rng = np.random.default_rng(seed)
    capacity = int(rng.integers(8, 64))
    lengths = rng.integers(1, capacity + 1, size=int(rng.integers(1, 60))).tolist()
    trace = trace_of(lengths)
    _, ffd = pack_ffd(trace, capacity)
    _, stream = pack_stream(trace, capacity)
    assert ffd.fill_fraction >= stream.fill_fraction


def test_ffd_stream_dominance_counterexample():
    # A next-fit-friendly arrival order can beat FFD outright: FFD needs 4
    # batches here while next-fit's arrival order tiles 3 exactly. Kept as a
    # regression pin so nobody "fixes" the seeded test above into a universal
    # claim.
    lengths = [4, 3, 3, 4, 3, 3, 5, 5]
    trace = trace_of(lengths)
    _, ffd = pack_ffd(trace, 10)
    _, stream = pack_stream(trace, 10)
    assert ffd.batch_count == 4
    assert stream.batch_count == 3
    assert stream.fill_fraction > ffd.fill_fraction


@pytest.mark.parametrize("seed", range(10))
def test_ffd_quality_bound_random(seed):
    rng = np.random.default_rng(100 + seed)
    capacity = int(rng.integers(2, 13))
    lengths = rng.integers(1, capacity + 1, size=int(rng.integers(1, 11))).tolist()
    _, report = pack_ffd(trace_of(lengths), capacity)
    opt = min_bins_exhaustive(lengths, capacity)
    assert report.batch_count <= (11 / 9) * opt + 1
