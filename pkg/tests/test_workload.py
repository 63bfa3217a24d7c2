import numpy as np
import pytest

from omnisched.errors import (
    DuplicateIdError,
    EmptyTraceError,
    InvalidSpecError,
    TraceNotFoundError,
    TraceParseError,
)
from omnisched.workload import (
    LogNormalLength,
    Modality,
    ModalitySample,
    SyntheticTraceSpec,
    UniformLength,
    WorkloadTrace,
    concat_traces,
    dump_trace,
    generate_trace,
    load_trace,
    save_trace,
    trace_stats,
)


def make_spec(weights, lengths, count, seed, name="t"):
    return SyntheticTraceSpec(weights=weights, lengths=lengths, sample_count=count, seed=seed, name=name)


class TestLoadTrace:
    def test_three_records_in_order(self, tmp_path):
        p = tmp_path / "t.ndjson"
        p.write_text(
            '# comment\n'
            '{"id": 3, "modality": "text", "length": 10}\n'
            '{"id": 1, "modality": "video", "length": 64, "cost_per_token": 2.5}\n'
            '\n'
            '{"id": 2, "modality": "audio", "length": 7}\n'
        )
        trace = load_trace(p)
        assert [s.id for s in trace.samples] == [3, 1, 2]
        assert trace.samples[1].modality is Modality.VIDEO
        assert trace.samples[1].cost_per_token == 2.5
        assert trace.samples[0].cost_per_token == 1.0

    def test_duplicate_id_names_offender(self, tmp_path):
        p = tmp_path / "t.ndjson"
        p.write_text(
            '{"id": 1, "modality": "text", "length": 5}\n'
            '{"id": 7, "modality": "text", "length": 5}\n'
            '{"id": 2, "modality": "text", "length": 5}\n'
            '{"id": 3, "modality": "text", "length": 5}\n'
            '{"id": 7, "modality": "audio", "length": 9}\n'
        )
        with pytest.raises(DuplicateIdError) as exc:
            load_trace(p)
        assert exc.value.context["sample_id"] == 7
        assert exc.value.context["lines"] == [2, 5]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "t.ndjson"
        p.write_text("# only comments\n\n")
        with pytest.raises(EmptyTraceError):
            load_trace(p)

    def test_parse_error_carries_line_number(self, tmp_path):
        p = tmp_path / "t.ndjson"
        p.write_text('{"id": 1, "modality": "text", "length": 5}\nnot json\n')
        with pytest.raises(TraceParseError) as exc:
            load_trace(p)
        assert exc.value.context["line"] == 2

    def test_unknown_modality_rejected(self, tmp_path):
        p = tmp_path / "t.ndjson"
        p.write_text('{"id": 1, "modality": "smell", "length": 5}\n')
        with pytest.raises(TraceParseError):
            load_trace(p)

    def test_unknown_field_rejected(self, tmp_path):
        p = tmp_path / "t.ndjson"
        p.write_text('{"id": 1, "modality": "text", "length": 5, "extra": 1}\n')
        with pytest.raises(TraceParseError):
            load_trace(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(TraceNotFoundError):
            load_trace(tmp_path / "nope.ndjson")

    def test_round_trip(self, tmp_path):
        spec = make_spec(
            {Modality.TEXT: 2.0, Modality.IMAGE: 1.0},
            {Modality.TEXT: UniformLength(1, 50), Modality.IMAGE: LogNormalLength(3.0, 0.5, 100)},
            count=40,
            seed=9,
        )
        trace = generate_trace(spec)
        p = tmp_path / "t.ndjson"
        save_trace(trace, p)
        loaded = load_trace(p)
        assert loaded.samples == trace.samples
        # canonical serialization is a fixed point
        assert dump_trace(loaded) == p.read_text()


class TestGenerateTrace:
    def test_deterministic_under_seed(self):
        spec = make_spec(
            {Modality.TEXT: 1.0, Modality.AUDIO: 3.0},
            {Modality.TEXT: UniformLength(1, 100), Modality.AUDIO: LogNormalLength(4.0, 1.0, 500)},
            count=200,
            seed=1234,
        )
        assert dump_trace(generate_trace(spec)) == dump_trace(generate_trace(spec))

    def test_degenerate_uniform(self):
        spec = make_spec(
            {Modality.TEXT: 1.0}, {Modality.TEXT: UniformLength(5, 5)}, count=4, seed=0
        )
        trace = generate_trace(spec)
        assert len(trace) == 4
        assert all(s.modality is Modality.TEXT and s.length == 5 for s in trace.samples)

    def test_mixture_fraction_within_five_sigma(self):
        # two equal weights, n=10000: binomial sd ~ 0.005, bound at +/- 5 sigma
        spec = make_spec(
            {Modality.TEXT: 1.0, Modality.VIDEO: 1.0},
            {Modality.TEXT: UniformLength(1, 10), Modality.VIDEO: UniformLength(1, 10)},
            count=10000,
            seed=42,
        )
        trace = generate_trace(spec)
        frac = sum(1 for s in trace.samples if s.modality is Modality.TEXT) / len(trace)
        assert 0.45 <= frac <= 0.55

    def test_lognormal_clamped(self):
        spec = make_spec(
            {Modality.VIDEO: 1.0}, {Modality.VIDEO: LogNormalLength(10.0, 2.0, 64)}, count=300, seed=3
        )
        trace = generate_trace(spec)
        assert all(1 <= s.length <= 64 for s in trace.samples)

    def test_invalid_specs(self):
        with pytest.raises(InvalidSpecError):
            make_spec({Modality.TEXT: 1.0}, {Modality.TEXT: UniformLength(1, 5)}, count=0, seed=0)
        with pytest.raises(InvalidSpecError):
            make_spec({Modality.TEXT: -1.0}, {Modality.TEXT: UniformLength(1, 5)}, count=1, seed=0)
        with pytest.raises(InvalidSpecError):
            make_spec({Modality.TEXT: 0.0}, {Modality.TEXT: UniformLength(1, 5)}, count=1, seed=0)
        with pytest.raises(InvalidSpecError):
            UniformLength(4, 2)
        with pytest.raises(InvalidSpecError):
            LogNormalLength(1.0, 0.5, 0)
        with pytest.raises(InvalidSpecError):
            make_spec({Modality.TEXT: 1.0}, {}, count=1, seed=0)


class TestTraceStats:
    def test_arithmetic(self):
        trace = WorkloadTrace(
            samples=(
                ModalitySample(0, Modality.TEXT, 3),
                ModalitySample(1, Modality.TEXT, 5),
            )
        )
        st = trace_stats(trace)
        assert st.total_tokens == 8
        assert st.per_modality["text"].mean_length == 4

    def test_empty_trace_absent_means(self):
        st = trace_stats(WorkloadTrace(samples=()))
        assert st.total_samples == 0
        assert st.total_tokens == 0
        assert st.per_modality == {}

    def test_degenerate_distribution(self):
        spec = make_spec(
            {Modality.TEXT: 1.0}, {Modality.TEXT: UniformLength(5, 5)}, count=4, seed=0
        )
        st = trace_stats(generate_trace(spec))
        text = st.per_modality["text"]
        assert text.min_length == text.max_length == text.mean_length == 5

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_totals_additive_under_concat(self, seed):
        rng = np.random.default_rng(seed)
        specs = [
            make_spec(
                {Modality.TEXT: 1.0, Modality.IMAGE: 1.0},
                {
                    Modality.TEXT: UniformLength(1, int(rng.integers(2, 50))),
                    Modality.IMAGE: UniformLength(1, int(rng.integers(2, 50))),
                },
                count=int(rng.integers(1, 40)),
                seed=int(rng.integers(0, 2**32)),
            )
            for _ in range(3)
        ]
        traces = [generate_trace(s) for s in specs]
        combined = concat_traces(traces)
        assert trace_stats(combined).total_tokens == sum(trace_stats(t).total_tokens for t in traces)
        assert trace_stats(combined).total_samples == sum(len(t) for t in traces)


def test_sample_validation():
    with pytest.raises(InvalidSpecError):
        ModalitySample(0, Modality.TEXT, 0)
    with pytest.raises(InvalidSpecError):
        ModalitySample(0, Modality.TEXT, 5, cost_per_token=0.0)
    with pytest.raises(DuplicateIdError):
        WorkloadTrace(samples=(ModalitySample(1, Modality.TEXT, 5), ModalitySample(1, Modality.TEXT, 6)))
