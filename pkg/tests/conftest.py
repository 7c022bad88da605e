"""
Global pytest configuration and shared fixtures for the restoration pipeline.
"""
from typing import List

import pytest

from autodiff.tape import precision
from core.observability.emitter import get_global_sinks, set_global_sinks
from core.observability.events import Event
from core.schemas import DataConfig, EvalConfig, InferenceConfig, ModelConfig, RunConfig, TrainConfig, TTTConfig
from fracture.dataset import read_dataset
from workers.gen_data.worker import generate_dataset


class RecordingSink:
    """Collects every emitted event in memory."""

    def __init__(self) -> None:
        self.events: List[Event] = []

    def send(self, event: Event) -> None:
        self.events.append(event)

    def of_type(self, event_type: str) -> List[Event]:
        return [e for e in self.events if e.event_type == event_type]


@pytest.fixture
def events():
    """Route runtime events into a RecordingSink for the duration of a test."""
    previous = get_global_sinks()
    sink = RecordingSink()
    set_global_sinks([sink])
    yield sink
    set_global_sinks(previous)


@pytest.fixture
def float64():
    """Create tensors in double precision (gradient checks)."""
    with precision("float64"):
        yield


@pytest.fixture(scope="session")
def tiny_model_config():
    """A decoder small enough for finite differences and quick training."""
    return ModelConfig(
        latent_dim_c=8,
        latent_dim_b=8,
        hidden_width=16,
        n_layers=4,
        skip_layer=2,
        skip_mode="concat",
        dropout=0.0,
    )


@pytest.fixture(scope="session")
def tiny_run_config(tiny_model_config):
    """End-to-end settings that finish in seconds on a handful of boxes."""
    return RunConfig(
        seed=7,
        data=DataConfig(count=10, n_uniform=1500, n_surface=1500, fracture_mc_points=10_000, segments=8),
        model=tiny_model_config,
        train=TrainConfig(
            epochs=4,
            instances_per_step=4,
            points_per_instance=256,
            val_period=2,
            patience=2,
            val_steps=5,
            val_resolution=12,
            val_surface_samples=300,
        ),
        infer=InferenceConfig(steps=10, query_uniform=300, query_surface=300, heldout_points=200),
        ttt=TTTConfig(epochs=5),
        eval=EvalConfig(resolution=12, surface_samples=300),
    )


@pytest.fixture(scope="session")
def boxes_dir(tmp_path_factory, tiny_run_config):
    """A small boxes dataset written once per session."""
    path = tmp_path_factory.mktemp("boxes")
    generate_dataset(tiny_run_config, path)
    return path


@pytest.fixture
def boxes(boxes_dir):
    """The session dataset, opened fresh for each test."""
    return read_dataset(boxes_dir)
