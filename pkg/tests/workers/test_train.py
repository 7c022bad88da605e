"""
Tests for joint training.
"""
import csv

import numpy as np
import pytest

from autodiff.tape import Tape
from core.runtime.errors import NumericError, ParameterError
from core.schemas import DataConfig, ModelConfig, RunConfig, Split, TrainConfig
from fracture.dataset import read_dataset
from models.checkpoint import load_checkpoint, read_meta
from models.decoder import init_model
from workers.gen_data.worker import generate_dataset
from workers.train import worker as train_worker
from workers.train.worker import BEST_DIR, LAST_DIR, LOG_COLUMNS, LOG_NAME, fair_training_budget, train_class, validate


def _with_train(config, **changes):
    return config.model_copy(update={"train": config.train.model_copy(update=changes)})


class TestFairTrainingBudget:
    """Training steps left after paying for test-time training."""

    def test_one_step_per_epoch(self):
        """Without point counts each TTT epoch costs one step."""
        assert fair_training_budget(100, 2, 5) == 90

    def test_point_ratio(self):
        """TTT epochs are charged in proportion to the points they touch."""
        assert fair_training_budget(100, 2, 5, ttt_points=512, step_points=1024) == 95
        assert fair_training_budget(100, 3, 1, ttt_points=600, step_points=1024) == 98

    def test_never_negative(self):
        """An oversized TTT cost leaves zero steps."""
        assert fair_training_budget(5, 10, 10) == 0

    def test_negative_inputs(self):
        """Negative budgets are rejected."""
        with pytest.raises(ParameterError):
            fair_training_budget(-1, 1, 1)


class TestTrainClass:
    """End-to-end training on the tiny boxes dataset."""

    def test_writes_checkpoints_and_log(self, boxes, tiny_run_config, tmp_path, events):
        """Both checkpoints and one log row per epoch are written."""
        best = train_class(boxes, tiny_run_config, tmp_path)
        assert (tmp_path / BEST_DIR / "checkpoint.json").exists()
        assert (tmp_path / LAST_DIR / "optimizer.bin").exists()
        assert sorted(best.latents) == boxes.ids(Split.TRAIN)
        with (tmp_path / LOG_NAME).open(newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert list(rows[0]) == LOG_COLUMNS
        assert [int(r["epoch"]) for r in rows] == [0, 1, 2, 3]
        assert rows[0]["val_CD"] == "" and rows[1]["val_CD"] != ""
        assert len(events.of_type("validation_round")) == 2
        assert read_meta(tmp_path / LAST_DIR).progress.steps == 8

    def test_resume_matches_uninterrupted_run(self, boxes, tiny_run_config, tmp_path):
        """Stopping after two epochs and resuming yields the same weights as one long run."""
        config = _with_train(tiny_run_config, val_period=10)
        train_class(boxes, config, tmp_path / "straight")
        train_class(boxes, _with_train(config, epochs=2), tmp_path / "split")
        train_class(boxes, config, tmp_path / "split", resume=True)
        straight = load_checkpoint(tmp_path / "straight" / LAST_DIR)
        resumed = load_checkpoint(tmp_path / "split" / LAST_DIR)
        for key, p in straight.model.parameters().items():
            np.testing.assert_array_equal(resumed.model.parameters()[key].data, p.data)
        assert resumed.progress.epoch == 4
        with (tmp_path / "split" / LOG_NAME).open(newline="") as handle:
            assert [int(r["epoch"]) for r in csv.DictReader(handle)] == [0, 1, 2, 3]

    def test_iteration_budget(self, boxes, tiny_run_config, tmp_path, events):
        """Training stops once the step budget is spent, mid-epoch if need be."""
        train_class(boxes, _with_train(tiny_run_config, iteration_budget=3), tmp_path)
        assert read_meta(tmp_path / LAST_DIR).progress.steps == 3
        assert len(events.of_type("budget_exhausted")) == 1

    def test_numeric_failure_names_the_batch(self, boxes, tiny_run_config, tmp_path, mocker):
        """A non-finite backward pass aborts with the epoch and instances in the message."""
        mocker.patch.object(Tape, "backward", side_effect=NumericError("non-finite gradient"))
        with pytest.raises(NumericError, match="epoch 0, instances boxes_"):
            train_class(boxes, tiny_run_config, tmp_path)

    def test_needs_training_instances(self, boxes, tiny_run_config, tmp_path, mocker):
        """A dataset with an empty train split cannot be trained on."""
        mocker.patch.object(boxes, "ids", return_value=[])
        with pytest.raises(ParameterError):
            train_class(boxes, tiny_run_config, tmp_path)

    def test_best_follows_training_when_rounds_are_sparse(self, boxes, tiny_run_config, tmp_path, events):
        """With no scheduled round before the end, the closing epoch is validated and becomes best."""
        config = _with_train(tiny_run_config, val_period=10)
        best = train_class(boxes, config, tmp_path)
        last = load_checkpoint(tmp_path / LAST_DIR)
        mc = config.model
        init = init_model(mc.latent_dim_c, mc.latent_dim_b, config.seed, mc)
        for key, p in best.model.parameters().items():
            np.testing.assert_array_equal(p.data, last.model.parameters()[key].data)
        assert any(not np.array_equal(p.data, init.parameters()[k].data) for k, p in best.model.parameters().items())
        assert [e.payload["epoch"] for e in events.of_type("validation_round")] == [3]
        assert best.progress.epoch == 4

    def test_budget_stop_is_validated(self, boxes, tiny_run_config, tmp_path, events):
        """Running out of steps closes with a validation round on the partial epoch."""
        best = train_class(boxes, _with_train(tiny_run_config, val_period=10, iteration_budget=3), tmp_path)
        assert len(events.of_type("validation_round")) == 1
        assert best.progress.steps == 3

    def test_zero_epochs_returns_init(self, boxes, tiny_run_config, tmp_path):
        """Without epochs the best checkpoint is the seeded initialization."""
        config = _with_train(tiny_run_config, epochs=0)
        best = train_class(boxes, config, tmp_path)
        mc = config.model
        init = init_model(mc.latent_dim_c, mc.latent_dim_b, config.seed, mc)
        for key, p in init.parameters().items():
            np.testing.assert_array_equal(best.model.parameters()[key].data, p.data)
        assert best.progress.epoch == 0
        with (tmp_path / LOG_NAME).open(newline="") as handle:
            assert list(csv.DictReader(handle)) == []

    def test_early_stop_keeps_minimum(self, boxes, tiny_run_config, tmp_path, mocker, events):
        """Patience runs out after two worse rounds; best/ holds the epoch with the lowest CD."""
        config = _with_train(tiny_run_config, epochs=10, val_period=1, patience=2)
        train_class(boxes, _with_train(config, epochs=2, val_period=10), tmp_path / "reference")
        reference = load_checkpoint(tmp_path / "reference" / LAST_DIR)

        mocker.patch.object(train_worker, "validate", side_effect=[0.5, 0.3, 0.4, 0.45])
        best = train_class(boxes, config, tmp_path / "stopped")
        last = read_meta(tmp_path / "stopped" / LAST_DIR).progress
        assert last.stopped_early and last.epoch == 4
        assert (best.progress.best_val_cd, best.progress.best_epoch, best.progress.epoch) == (0.3, 1, 2)
        for key, p in reference.model.parameters().items():
            np.testing.assert_array_equal(best.model.parameters()[key].data, p.data)
        assert len(events.of_type("early_stop")) == 1


class TestValidate:
    """Mean complete-shape CD over validation instances."""

    def test_deterministic(self, boxes, tiny_run_config):
        """The same model and seed score the same."""
        mc = tiny_run_config.model
        model = init_model(mc.latent_dim_c, mc.latent_dim_b, 0, mc)
        instances = [boxes.instance(iid) for iid in boxes.ids(Split.VAL)]
        first = validate(model, instances, tiny_run_config)
        assert first == validate(model, instances, tiny_run_config)
        assert first > 0.0

    def test_needs_instances(self, tiny_run_config, tiny_model_config):
        """An empty validation split cannot be scored."""
        model = init_model(8, 8, 0, tiny_model_config)
        with pytest.raises(ParameterError):
            validate(model, [], tiny_run_config)


@pytest.mark.slow
class TestSingleInstanceOverfit:
    """Both decoders can memorize one fractured box."""

    def test_complete_chamfer_small(self, tmp_path, mocker):
        """Within 2000 epochs the decoded complete shape is within CD 5e-4 of the box."""
        config = RunConfig(
            seed=1,
            data=DataConfig(count=10, n_uniform=20_000, n_surface=20_000),
            model=ModelConfig(latent_dim_c=16, latent_dim_b=16, hidden_width=128, n_layers=6, skip_layer=3, dropout=0.0),
            train=TrainConfig(epochs=2000, instances_per_step=1, points_per_instance=8192),
        )
        generate_dataset(config, tmp_path / "data")
        dataset = read_dataset(tmp_path / "data")
        target = dataset.ids(Split.TRAIN)[0]
        mocker.patch.object(dataset, "ids", side_effect=lambda split=None: [target] if split is Split.TRAIN else [])
        best = train_class(dataset, config, tmp_path / "ckpt")
        cd = train_worker.complete_chamfer(best.model, best.latents[target], dataset.instance(target), 64, 5000, config.seed)
        assert cd < 5e-4
