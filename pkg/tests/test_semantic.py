import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgrid import (
    HISTOGRAM,
    IGNORE,
    MEAN,
    NUM_CLASSES,
    SUM,
    ArgmaxGrid,
    ClassId,
    GridSpec,
    PointCloud,
    SemanticGrid,
    encode_argmax,
    encode_histogram,
    encode_mean,
    encode_summed,
    synth_probabilities,
)

SPEC = GridSpec(x_min=0.0, y_min=0.0, cell_size=1.0, n_x=4, n_y=4)


def labeled_cloud(xyz, labels):
    xyz = np.asarray(xyz, dtype=np.float64)
    return PointCloud(
        xyz=xyz, intensity=np.zeros(len(xyz))
    ).with_labels(np.asarray(labels, dtype=np.int16))


def prob_cloud(seed, n=300, spec=SPEC):
    g = np.random.default_rng(seed)
    xyz = g.uniform(-1.0, 5.0, size=(n, 3))
    labels = g.integers(0, NUM_CLASSES, size=n)
    probs = synth_probabilities(labels, seed=seed)
    return PointCloud(xyz=xyz, intensity=np.zeros(n)).with_probabilities(probs)


class TestHistogram:
    def test_counts_hard_labels_per_cell(self):
        cloud = labeled_cloud(
            [
                [0.5, 0.5, 0.0],
                [0.6, 0.4, 1.0],
                [0.1, 0.9, -1.0],
                [0.5, 0.5, 0.0],  # ignore-labeled
                [9.0, 9.0, 0.0],  # out of bounds
            ],
            [ClassId.ROAD, ClassId.ROAD, ClassId.BUILDING, IGNORE, ClassId.ROAD],
        )
        hist = encode_histogram(cloud, SPEC)
        assert hist.kind == HISTOGRAM
        expected = np.zeros(NUM_CLASSES)
        expected[ClassId.ROAD] = 2
        expected[ClassId.BUILDING] = 1
        np.testing.assert_array_equal(hist.mass[0, 0], expected)
        assert hist.count[0, 0] == 3
        assert hist.count.sum() == 3
        assert hist.validity.sum() == 1

    def test_probability_rows_fall_back_to_argmax(self):
        n = 50
        g = np.random.default_rng(0)
        labels = g.integers(0, NUM_CLASSES, size=n)
        probs = synth_probabilities(labels, seed=1)
        cloud = PointCloud(
            xyz=np.full((n, 3), 0.5), intensity=np.zeros(n)
        ).with_probabilities(probs)
        hist = encode_histogram(cloud, SPEC)
        counts = np.bincount(np.argmax(probs, axis=1), minlength=NUM_CLASSES)
        np.testing.assert_array_equal(hist.mass[0, 0], counts)

    def test_requires_semantics(self):
        bare = PointCloud(xyz=np.zeros((1, 3)), intensity=np.zeros(1))
        with pytest.raises(ValueError, match="neither labels nor probabilities"):
            encode_histogram(bare, SPEC)


class TestArgmax:
    def test_dominant_class_and_tie_break(self):
        cloud = labeled_cloud(
            [[0.5, 0.5, 0.0]] * 3 + [[1.5, 0.5, 0.0]] * 2,
            [ClassId.ROAD, ClassId.ROAD, ClassId.BUILDING]
            + [ClassId.VEHICLE, ClassId.BUILDING],
        )
        grid = encode_argmax(encode_histogram(cloud, SPEC))
        assert grid.label[0, 0] == ClassId.ROAD
        # 1-1 tie in cell (1, 0): lowest class id wins
        assert grid.label[1, 0] == ClassId.BUILDING
        assert grid.label[2, 2] == IGNORE
        assert grid.validity.sum() == 2

    def test_requires_histogram_kind(self):
        summed = encode_summed(prob_cloud(0), SPEC)
        with pytest.raises(ValueError, match="histogram"):
            encode_argmax(summed)

    def test_label_validation(self):
        with pytest.raises(ValueError):
            ArgmaxGrid(spec=SPEC, label=np.full(SPEC.shape, 11, dtype=np.int16))


class TestSummed:
    def test_sums_probability_rows(self):
        rows = np.zeros((3, NUM_CLASSES))
        rows[0, 0] = 1.0
        rows[1, 4] = 0.5
        rows[1, 0] = 0.5
        rows[2, 4] = 1.0
        cloud = PointCloud(
            xyz=np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 1.0], [3.5, 3.5, 0.0]]),
            intensity=np.zeros(3),
        ).with_probabilities(rows)
        grid = encode_summed(cloud, SPEC)
        assert grid.kind == SUM
        np.testing.assert_allclose(grid.mass[0, 0, 0], 1.5)
        np.testing.assert_allclose(grid.mass[0, 0, 4], 0.5)
        np.testing.assert_allclose(grid.mass[3, 3, 4], 1.0)
        assert grid.count[0, 0] == 2
        assert grid.count[3, 3] == 1

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_bit_exact_under_permutation(self, seed):
        cloud = prob_cloud(seed)
        base = encode_summed(cloud, SPEC)
        perm = np.random.default_rng(seed + 1).permutation(len(cloud))
        shuffled = PointCloud(
            xyz=cloud.xyz[perm], intensity=cloud.intensity[perm]
        ).with_probabilities(cloud.probabilities[perm])
        again = encode_summed(shuffled, SPEC)
        assert np.array_equal(base.mass, again.mass)
        assert np.array_equal(base.count, again.count)

    def test_one_hot_rows_reproduce_histogram(self):
        g = np.random.default_rng(5)
        n = 200
        xyz = g.uniform(0.0, 4.0, size=(n, 3))
        labels = g.integers(0, NUM_CLASSES, size=n).astype(np.int16)
        cloud = PointCloud(xyz=xyz, intensity=np.zeros(n)).with_labels(labels)
        one_hot = np.eye(NUM_CLASSES)[labels]
        cloud_p = PointCloud(xyz=xyz, intensity=np.zeros(n)).with_probabilities(
            one_hot
        )
        hist = encode_histogram(cloud, SPEC)
        summed = encode_summed(cloud_p, SPEC)
        assert np.array_equal(hist.mass, summed.mass)
        assert np.array_equal(hist.count, summed.count)

    def test_requires_probabilities(self):
        cloud = labeled_cloud([[0.5, 0.5, 0.0]], [ClassId.ROAD])
        with pytest.raises(ValueError, match="no probability rows"):
            encode_summed(cloud, SPEC)


class TestMean:
    def test_mean_rows_are_sum_over_count(self):
        cloud = prob_cloud(2)
        summed = encode_summed(cloud, SPEC)
        mean = encode_mean(summed)
        assert mean.kind == MEAN
        occ = summed.validity
        np.testing.assert_allclose(
            mean.mass[occ], summed.mass[occ] / summed.count[occ][:, None]
        )
        np.testing.assert_allclose(mean.mass[occ].sum(axis=1), 1.0, atol=1e-9)
        assert (mean.mass[~occ] == 0).all()

    def test_requires_sum_kind(self):
        hist = encode_histogram(
            labeled_cloud([[0.5, 0.5, 0.0]], [ClassId.ROAD]), SPEC
        )
        with pytest.raises(ValueError, match="summed"):
            encode_mean(hist)


class TestSemanticGridValidation:
    def test_histogram_sums_must_match_count(self):
        mass = np.zeros(SPEC.shape + (NUM_CLASSES,))
        count = np.zeros(SPEC.shape)
        count[0, 0] = 1.0  # claims a point but mass is empty
        with pytest.raises(ValueError):
            SemanticGrid(spec=SPEC, mass=mass, count=count, kind=HISTOGRAM)

    def test_rejects_negative_mass(self):
        mass = np.zeros(SPEC.shape + (NUM_CLASSES,))
        mass[0, 0, 0] = -1.0
        with pytest.raises(ValueError):
            SemanticGrid(
                spec=SPEC, mass=mass, count=np.zeros(SPEC.shape), kind=SUM
            )

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            SemanticGrid(
                spec=SPEC,
                mass=np.zeros(SPEC.shape + (NUM_CLASSES,)),
                count=np.zeros(SPEC.shape),
                kind="median",
            )

    def test_mean_rows_must_normalize(self):
        mass = np.zeros(SPEC.shape + (NUM_CLASSES,))
        count = np.zeros(SPEC.shape)
        mass[0, 0, 0] = 0.5  # occupied row summing to 0.5
        count[0, 0] = 1.0
        with pytest.raises(ValueError):
            SemanticGrid(spec=SPEC, mass=mass, count=count, kind=MEAN)


class TestSynthProbabilities:
    def test_deterministic_per_seed(self):
        labels = np.arange(NUM_CLASSES)
        a = synth_probabilities(labels, flip_rate=0.2, seed=9)
        b = synth_probabilities(labels, flip_rate=0.2, seed=9)
        c = synth_probabilities(labels, flip_rate=0.2, seed=10)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_rows_are_distributions(self):
        labels = np.random.default_rng(0).integers(-1, NUM_CLASSES, size=500)
        rows = synth_probabilities(labels, flip_rate=0.4, seed=3)
        assert rows.shape == (500, NUM_CLASSES)
        assert (rows > 0).all()
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_flip_rate_recovers_labels(self):
        labels = np.random.default_rng(1).integers(0, NUM_CLASSES, size=5000)
        rows = synth_probabilities(labels, flip_rate=0.0, seed=2)
        np.testing.assert_array_equal(np.argmax(rows, axis=1), labels)

    def test_flip_rate_matches_error_rate(self):
        n = 20000
        labels = np.random.default_rng(2).integers(0, NUM_CLASSES, size=n)
        rows = synth_probabilities(labels, flip_rate=0.3, seed=4)
        acc = float(np.mean(np.argmax(rows, axis=1) == labels))
        assert abs(acc - 0.7) < 0.02

    def test_parameter_validation(self):
        labels = np.zeros(3, dtype=np.int64)
        with pytest.raises(ValueError):
            synth_probabilities(labels, flip_rate=1.0)
        with pytest.raises(ValueError):
            synth_probabilities(labels, concentration=0.0)
        with pytest.raises(ValueError):
            synth_probabilities(np.array([11]))
