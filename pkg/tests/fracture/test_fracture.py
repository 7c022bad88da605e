"""
Tests for shape families, fracturing, labelled samples and the dataset format.
"""
import numpy as np
import pytest

from core.runtime.errors import DatasetFormatError, FractureError, MissingArtifactError, ParameterError
from core.runtime.retry import RetriesExhausted, retry_with_fresh_draws
from core.runtime.rng import substream
from core.schemas import BAND_BOUNDS, Band, ShapeClass, Split
from fracture.breaks import BreakSet, EllipsoidBreak, PlaneBreak, fracture, random_rotation
from fracture.dataset import (
    HEADER,
    RECORD_DTYPE,
    assign_splits,
    decode_samples,
    encode_samples,
    read_samples,
    split_sizes,
)
from fracture.instance import ShapeInstance
from fracture.samples import OccupancySampleSet, sample_points
from fracture.shapes import ClassSpec, gen_class
from geometry.sampling import volume_fraction


def _shape(kind=ShapeClass.BOXES, seed=0):
    return gen_class(ClassSpec(kind, segments=12), 1, np.random.default_rng(seed))[0]


def _fractured(band, seed, kind="plane"):
    shape = _shape(seed=seed)

    def attempt(k):
        return fracture(shape.solid, band, substream(seed, "fracture", k), kind=kind, n_mc=100_000)

    return shape, retry_with_fresh_draws(attempt, 20)


class TestShapes:
    """Procedural families."""

    @pytest.mark.parametrize("kind", [ShapeClass.BOXES, ShapeClass.BOTTLES, ShapeClass.MUGS])
    def test_unit_cube_and_watertight(self, kind):
        """Every family yields watertight meshes inside the unit cube."""
        for shape in gen_class(ClassSpec(kind, segments=12), 3, np.random.default_rng(1)):
            lo, hi = shape.mesh.bounds()
            assert np.all(lo >= 0.0) and np.all(hi <= 1.0)
            assert shape.mesh.is_watertight()

    def test_same_generator_same_shapes(self):
        """Drawing twice from the same seed reproduces the parameters."""
        a = gen_class(ClassSpec(ShapeClass.MUGS), 2, np.random.default_rng(5))
        b = gen_class(ClassSpec(ShapeClass.MUGS), 2, np.random.default_rng(5))
        assert [s.params for s in a] == [s.params for s in b]

    def test_zero_jitter_is_prototype(self):
        """Without jitter every instance equals the prototype."""
        shapes = gen_class(ClassSpec(ShapeClass.BOXES, jitter=0.0), 3, np.random.default_rng(2))
        assert shapes[0].params.values == {"sx": 1.0, "sy": 0.7, "sz": 0.5}
        assert len({tuple(s.params.values.values()) for s in shapes}) == 1

    def test_bad_spec(self):
        """Unknown classes, bad jitter and OBJ without a path are rejected."""
        with pytest.raises(ParameterError):
            ClassSpec("teapots")
        with pytest.raises(ParameterError):
            ClassSpec(ShapeClass.BOXES, jitter=2.0)
        with pytest.raises(ParameterError):
            ClassSpec(ShapeClass.OBJ)


class TestFracture:
    """Cuts that remove a prescribed share of the volume."""

    @pytest.mark.parametrize("band", [Band.LOW, Band.HIGH])
    def test_fraction_inside_band(self, band):
        """Measured removed fractions fall inside the band, confirmed by an independent estimate."""
        lo, hi = BAND_BOUNDS[band]
        for seed in range(3):
            shape, result = _fractured(band.bounds, seed)
            assert lo <= result.estimate.fraction <= hi
            check = volume_fraction(
                lambda p: shape.solid.contains(p) & ~result.break_set.contains(p),
                shape.solid.contains,
                200_000,
                substream(seed, "check"),
            )
            assert lo - 0.01 <= check.fraction <= hi + 0.01

    def test_ellipsoid_attempts_land_in_band(self):
        """Every ellipsoidal attempt either lands in the band or reports a FractureError."""
        shape = _shape(seed=11)
        for k in range(8):
            try:
                result = fracture(shape.solid, Band.LOW.bounds, substream(11, "ellipsoid", k), kind="ellipsoid", n_mc=50_000)
            except FractureError:
                continue
            assert 0.05 <= result.estimate.fraction <= 0.20

    def test_invalid_band(self):
        """Bands must satisfy 0 < lo < hi < 1."""
        with pytest.raises(ParameterError):
            fracture(_shape().solid, (0.3, 0.2), np.random.default_rng(0))

    def test_retries_exhausted(self):
        """A step that always fails gives up with the last error attached."""

        def always_fails(k):
            raise FractureError(f"attempt {k}")

        with pytest.raises(RetriesExhausted) as exc_info:
            retry_with_fresh_draws(always_fails, 3)
        assert exc_info.value.attempts == 3
        assert "attempt 2" in str(exc_info.value.last)

    def test_descriptor_round_trip(self):
        """Break sets rebuilt from descriptors classify points identically."""
        rng = np.random.default_rng(3)
        points = rng.random((500, 3))
        for brk in (PlaneBreak(np.array([1.0, 2.0, -0.5]), 0.4), EllipsoidBreak(np.full(3, 0.5), np.array([0.3, 0.2, 0.25]), random_rotation(rng))):
            twin = BreakSet.from_descriptor(brk.descriptor())
            np.testing.assert_array_equal(twin.contains(points), brk.contains(points))


class TestSamples:
    """Labelled occupancy samples."""

    def test_labels_are_exact_on_stored_coordinates(self):
        """o_C and o_B agree with the oracles on the float32 points that get stored."""
        shape, result = _fractured(Band.LOW.bounds, 4)
        instance = ShapeInstance("boxes_0000", "boxes", shape, result.break_set)
        samples = sample_points(instance, 500, 500, 0.01, np.random.default_rng(0))
        assert len(samples) == 1000
        exact = samples.points.astype(np.float64)
        np.testing.assert_array_equal(samples.o_c, shape.solid.contains(exact))
        np.testing.assert_array_equal(samples.o_b, result.break_set.contains(exact))
        samples.require_both_parts("boxes_0000")

    def test_derived_labels_partition_complete(self):
        """o_F + o_R = o_C for every record."""
        samples = OccupancySampleSet(np.zeros((4, 3)), [1, 1, 0, 0], [1, 0, 1, 0])
        np.testing.assert_array_equal(samples.o_f + samples.o_r, samples.o_c)

    def test_missing_part_detected(self):
        """A sample set without restoration points fails the both-parts check."""
        samples = OccupancySampleSet(np.zeros((2, 3)), [1, 1], [1, 1])
        with pytest.raises(FractureError):
            samples.require_both_parts("x")

    def test_non_binary_labels(self):
        """Labels other than 0 and 1 are rejected."""
        with pytest.raises(ParameterError):
            OccupancySampleSet(np.zeros((1, 3)), [2], [0])


class TestSampleFiles:
    """The ``.occs`` binary layout."""

    def _samples(self):
        rng = np.random.default_rng(6)
        return OccupancySampleSet(rng.random((5, 3)), rng.integers(0, 2, 5), rng.integers(0, 2, 5))

    def test_layout(self):
        """16-byte header plus 16 bytes per record."""
        blob = encode_samples(self._samples())
        assert len(blob) == HEADER.size + 5 * RECORD_DTYPE.itemsize == 96
        assert blob[:4] == b"OCCS"

    def test_decode_is_bit_identical(self):
        """Decoding restores the exact coordinates and labels."""
        samples = self._samples()
        back = decode_samples(encode_samples(samples))
        assert back.points.tobytes() == samples.points.tobytes()
        np.testing.assert_array_equal(back.o_c, samples.o_c)
        np.testing.assert_array_equal(back.o_b, samples.o_b)

    def test_bad_magic(self):
        """A wrong magic is reported at offset 0."""
        blob = b"XXXX" + encode_samples(self._samples())[4:]
        with pytest.raises(DatasetFormatError) as exc_info:
            decode_samples(blob)
        assert exc_info.value.offset == 0

    def test_truncated_records(self):
        """A short file reports where the data ended."""
        blob = encode_samples(self._samples())[:-3]
        with pytest.raises(DatasetFormatError, match="truncated") as exc_info:
            decode_samples(blob)
        assert exc_info.value.offset == len(blob)

    def test_non_binary_label_offset(self):
        """A corrupted label byte is located exactly."""
        blob = bytearray(encode_samples(self._samples()))
        blob[HEADER.size + 2 * RECORD_DTYPE.itemsize + 13] = 7
        with pytest.raises(DatasetFormatError) as exc_info:
            decode_samples(bytes(blob))
        assert exc_info.value.offset == HEADER.size + 2 * RECORD_DTYPE.itemsize + 12

    def test_missing_file(self, tmp_path):
        """Reading an absent file is a missing-artifact error."""
        with pytest.raises(MissingArtifactError):
            read_samples(tmp_path / "none.occs")


class TestSplits:
    """Train/val/test assignment."""

    def test_sizes(self):
        """70/15/15 with the remainder going to test."""
        assert split_sizes(240) == (168, 36, 36)
        assert split_sizes(10) == (7, 2, 1)

    def test_assignment_is_a_partition(self):
        """Every id lands in exactly one split, reproducibly."""
        ids = [f"boxes_{k:04d}" for k in range(20)]
        splits = assign_splits(ids, substream(0, "splits"))
        assert sorted(sum(splits.values(), [])) == ids
        assert splits == assign_splits(reversed(ids), substream(0, "splits"))
        assert len(splits[Split.TRAIN]) == 14


@pytest.mark.slow
class TestBandCompliance:
    """Fifty fractured boxes per band, re-measured with a million samples each."""

    @pytest.mark.parametrize("band", [Band.LOW, Band.HIGH])
    def test_fifty_instances(self, band):
        """Every removed fraction lies in the band up to the Monte Carlo tolerance."""
        lo, hi = band.bounds
        shapes = gen_class(ClassSpec(ShapeClass.BOXES, segments=12), 50, substream(3, "shapes", band.value))
        for i, shape in enumerate(shapes):

            def attempt(k, shape=shape, i=i):
                return fracture(shape.solid, band.bounds, substream(3, "fracture", band.value, i, k), n_mc=200_000)

            result = retry_with_fresh_draws(attempt, 20)
            check = volume_fraction(
                lambda p: shape.solid.contains(p) & ~result.break_set.contains(p),
                shape.solid.contains,
                1_000_000,
                substream(3, "check", band.value, i),
            )
            assert lo - 0.01 <= check.fraction <= hi + 0.01
