"""
Tests for the error taxonomy, random substreams, retries and event sinks.
"""
import io

import numpy as np
import pytest
from rich.console import Console

from adapters.observability.console import ConsoleSink
from adapters.observability.jsonl import JsonlFileSink, read_events
from core.observability.emitter import EventEmitter
from core.observability.events import Event, EventLevel
from core.runtime.errors import (
    CheckpointFormatError,
    DatasetFormatError,
    DegenerateInputError,
    DimensionError,
    FractureError,
    MissingArtifactError,
    NumericError,
    ParameterError,
    UsageError,
)
from core.runtime.retry import RetriesExhausted, retry_with_fresh_draws
from core.runtime.rng import derive_seed, substream


class TestErrors:
    """Exit codes by family."""

    @pytest.mark.parametrize(
        "error, code",
        [
            (UsageError("x"), 1),
            (ParameterError("x"), 1),
            (DimensionError("x"), 1),
            (MissingArtifactError("a/b"), 2),
            (DatasetFormatError("x"), 2),
            (CheckpointFormatError("x"), 2),
            (FractureError("x"), 2),
            (NumericError("x"), 3),
            (DegenerateInputError("x"), 3),
        ],
    )
    def test_exit_codes(self, error, code):
        assert error.exit_code == code

    def test_format_error_location(self):
        """Corrupt-file errors name the path and byte offset."""
        assert str(DatasetFormatError("bad magic", path="s.occs", offset=0)) == "bad magic (s.occs, offset 0)"


class TestSubstreams:
    """Named generators derived from one seed."""

    def test_same_names_same_draws(self):
        a = substream(7, "fracture", 3).random(5)
        b = substream(7, "fracture", 3).random(5)
        np.testing.assert_array_equal(a, b)

    def test_names_and_seed_separate_streams(self):
        """Changing the seed or any name gives a different stream."""
        base = substream(7, "fracture", 3).random()
        assert substream(8, "fracture", 3).random() != base
        assert substream(7, "fracture", 4).random() != base
        assert substream(7, "init").random() != base

    def test_derived_seed_range(self):
        """Child seeds are stable non-negative 63-bit integers."""
        seed = derive_seed(7, "dropout")
        assert seed == derive_seed(7, "dropout")
        assert 0 <= seed < 2**63


class TestRetry:
    """Bounded retries with fresh draws."""

    def test_succeeds_after_failures(self, events):
        """Failed attempts are reported, then the first success is returned."""

        def flaky(attempt):
            if attempt < 2:
                raise FractureError(f"miss {attempt}")
            return attempt

        assert retry_with_fresh_draws(flaky, 5) == 2
        assert [e.payload["attempt"] for e in events.of_type("retry")] == [0, 1]

    def test_other_errors_propagate(self):
        """Only the listed error types are retried."""

        def broken(attempt):
            raise NumericError("nan")

        with pytest.raises(NumericError):
            retry_with_fresh_draws(broken, 5)

    def test_zero_attempts(self):
        with pytest.raises(ParameterError):
            retry_with_fresh_draws(lambda attempt: attempt, 0)

    def test_exhausted_is_a_fracture_error(self):
        """Running out of attempts is still a data error."""

        def miss(attempt):
            raise FractureError("miss")

        with pytest.raises(RetriesExhausted) as info:
            retry_with_fresh_draws(miss, 2)
        assert isinstance(info.value, FractureError)
        assert info.value.attempts == 2


class TestSinks:
    """Local JSONL and console sinks."""

    def test_jsonl_lines(self, tmp_path):
        """One JSON object per event; numpy values are converted."""
        sink = JsonlFileSink(run_name="train run/1", run_id="abc", base_dir=tmp_path)
        sink.send(Event(runtime="train", event_type="epoch", payload={"loss": np.float32(0.5), "ids": np.arange(2)}))
        sink.send(Event(runtime="train", event_type="early_stop", payload={}, level=EventLevel.WARNING))
        assert sink.path.name == "train_run_1_events.jsonl"
        assert len(sink.path.read_text().splitlines()) == 2
        (entry,) = read_events(sink.path, "epoch")
        assert entry["run_id"] == "abc"
        assert entry["level"] == "info"
        assert entry["payload"] == {"loss": 0.5, "ids": [0, 1]}

    def test_console_filters(self):
        """Below-threshold levels and per-step events stay off the console."""
        buffer = io.StringIO()
        sink = ConsoleSink(console=Console(file=buffer, width=200))
        sink.send(Event(runtime="train", event_type="detail", payload={}, level=EventLevel.DEBUG))
        sink.send(Event(runtime="train", event_type="fracture_bisected", payload={"offset": 0.1}))
        sink.send(Event(runtime="train", event_type="epoch", payload={"loss": 0.123456789}))
        output = buffer.getvalue()
        assert "detail" not in output and "fracture_bisected" not in output
        assert "epoch loss=0.123457" in output

    def test_failing_sink_does_not_break_emit(self):
        """A raising sink is skipped; later sinks still receive the event."""

        class Broken:
            def send(self, event):
                raise OSError("disk full")

        received = []

        class Collect:
            def send(self, event):
                received.append(event)

        EventEmitter([Broken(), Collect()]).emit("gen-data", "done", {})
        assert len(received) == 1
