"""
Tests for Chamfer tables and cumulative curves.
"""
import csv

import numpy as np
import pytest

from core.runtime.errors import MissingArtifactError, ParameterError
from core.schemas import EvalRecord, InstanceResult, LossBreakdown, MethodTag
from workers.evaluate.worker import aggregate, cumulative_curve, evaluate_results, load_records


def _record(iid, cd, method=MethodTag.WITH_TTT, class_name="boxes", restoration=None):
    return EvalRecord(instance_id=iid, class_name=class_name, method=method, cd=cd, cd_restoration=restoration)


def _write_result(root, iid, method, cd, cd_r):
    result = InstanceResult(
        instance_id=iid,
        class_name="mugs",
        method=method,
        seed=0,
        cd_complete=cd,
        cd_restoration=cd_r,
        inference=LossBreakdown(l_f=0.1, total=0.1),
        l_f_pre_ttt=0.1,
        l_f_post_ttt=0.1,
        heldout_l_f_pre=0.1,
        heldout_l_f_post=0.1,
        timings={"inference": 1.0, "evaluate": 0.5},
    )
    folder = root / method.value / iid
    folder.mkdir(parents=True)
    (folder / "result.json").write_text(result.model_dump_json())


class TestAggregate:
    """Mean and median per class and method."""

    def test_even_count_median_averages(self):
        """The median of an even count is the mean of the middle pair."""
        (summary,) = aggregate([_record(f"i{k}", cd) for k, cd in enumerate([4.0, 1.0, 3.0, 2.0])])
        assert summary.median == 2.5
        assert summary.mean == 2.5
        assert summary.n == 4

    def test_outlier_dominated(self):
        """One catastrophic instance pushes the mean past three medians."""
        (summary,) = aggregate([_record("a", 1e-4), _record("b", 1e-4), _record("c", 1e-2)])
        assert summary.outlier_dominated
        (calm,) = aggregate([_record("a", 1e-4), _record("b", 2e-4)])
        assert not calm.outlier_dominated

    def test_groups_in_method_order(self):
        """Summaries are sorted by class, then inference-only before with-TTT."""
        records = [
            _record("a", 1.0),
            _record("a", 2.0, method=MethodTag.INFERENCE_ONLY),
            _record("b", 3.0, class_name="bottles"),
        ]
        keys = [(s.class_name, s.method) for s in aggregate(records)]
        assert keys == [("bottles", MethodTag.WITH_TTT), ("boxes", MethodTag.INFERENCE_ONLY), ("boxes", MethodTag.WITH_TTT)]

    def test_requested_empty_group_omitted(self, events):
        """A requested group without records is dropped with a warning."""
        summaries = aggregate([_record("a", 1.0)], classes=["boxes"], methods=[MethodTag.WITH_TTT, MethodTag.BASELINE])
        assert [s.method for s in summaries] == [MethodTag.WITH_TTT]
        assert events.of_type("empty_group")[0].payload == {"class": "boxes", "method": "baseline"}

    def test_restoration_statistics(self):
        """Restoration CDs are summarized alongside when present."""
        (summary,) = aggregate([_record("a", 1.0, restoration=2.0), _record("b", 1.0, restoration=4.0)])
        assert summary.restoration_mean == 3.0


class TestCumulativeCurve:
    """Fraction of instances below log-spaced thresholds."""

    def test_single_value(self):
        """Identical CDs collapse to one threshold reaching 1."""
        curve = cumulative_curve([0.5, 0.5, 0.5])
        np.testing.assert_array_equal(curve.thresholds, [0.5])
        np.testing.assert_array_equal(curve.fractions, [1.0])

    def test_monotone_and_complete(self):
        """Fractions never decrease and end at 1; thresholds span min to max."""
        values = np.random.default_rng(0).lognormal(-8, 1, size=40)
        curve = cumulative_curve(values, n_thresholds=20)
        assert len(curve.thresholds) == 20
        assert curve.thresholds[0] == pytest.approx(values.min())
        assert curve.thresholds[-1] == pytest.approx(values.max())
        assert np.all(np.diff(curve.fractions) >= 0)
        assert curve.fractions[-1] == 1.0
        assert curve.fractions[0] == pytest.approx(1 / 40)

    def test_zero_distance_gets_its_own_threshold(self):
        """A perfect reconstruction shows up left of the log axis."""
        curve = cumulative_curve([0.0, 1e-4, 1e-3], n_thresholds=5)
        assert curve.thresholds[0] == 0.0
        assert curve.fractions[0] == pytest.approx(1 / 3)

    def test_empty(self):
        """No records, no curve."""
        with pytest.raises(ParameterError):
            cumulative_curve([])


class TestEvaluateResults:
    """Reading result files and writing the report."""

    def test_report_files(self, tmp_path):
        """CSV tables and one SVG per class are written from result files."""
        results = tmp_path / "results"
        for k, (cd, cd_r) in enumerate([(1e-4, 2e-4), (3e-4, 4e-4)]):
            _write_result(results, f"mugs_{k:04d}", MethodTag.WITH_TTT, cd, cd_r)
        _write_result(results, "mugs_0000", MethodTag.INFERENCE_ONLY, 5e-4, 6e-4)
        summaries = evaluate_results(results, tmp_path / "report")
        assert [s.method for s in summaries] == [MethodTag.INFERENCE_ONLY, MethodTag.WITH_TTT]
        with (tmp_path / "report" / "report.csv").open(newline="") as handle:
            rows = list(csv.DictReader(handle))
        ttt_mean = next(r for r in rows if r["method"] == "with-ttt" and r["statistic"] == "mean")
        assert float(ttt_mean["cd_x1e4"]) == pytest.approx(2.0)
        assert ttt_mean["n"] == "2"
        assert (tmp_path / "report" / "report_restoration.csv").exists()
        svg = (tmp_path / "report" / "curves_mugs.svg").read_text()
        assert svg.startswith("<?xml") and "with-ttt" in svg and "inference-only" in svg

    def test_wall_time_summed(self, tmp_path):
        """Records carry the total of the stage timings."""
        _write_result(tmp_path, "mugs_0000", MethodTag.WITH_TTT, 1e-4, None)
        (record,) = load_records(tmp_path)
        assert record.wall_seconds == 1.5

    def test_reports_ignore_timings(self, tmp_path):
        """Runs that differ only in stage timings write identical CSV reports."""
        results = tmp_path / "results"
        _write_result(results, "mugs_0000", MethodTag.WITH_TTT, 1e-4, 2e-4)
        evaluate_results(results, tmp_path / "first")
        path = results / MethodTag.WITH_TTT.value / "mugs_0000" / "result.json"
        slower = InstanceResult.model_validate_json(path.read_text()).model_copy(update={"timings": {"inference": 9.0, "evaluate": 4.0}})
        path.write_text(slower.model_dump_json())
        evaluate_results(results, tmp_path / "second")
        for name in ("report.csv", "report_restoration.csv"):
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()

    def test_missing_results(self, tmp_path):
        """A missing results directory is a missing artifact."""
        with pytest.raises(MissingArtifactError):
            load_records(tmp_path / "absent")
