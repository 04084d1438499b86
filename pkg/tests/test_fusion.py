import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgrid import (
    IGNORE,
    MEAN,
    NUM_CLASSES,
    ClassId,
    FusionInput,
    GridSpec,
    LabelGrid,
    LateFusionHead,
    PointCloud,
    assemble_early_fusion_input,
    encode_argmax,
    encode_histogram,
    encode_mean,
    encode_multilayer,
    encode_summed,
    forward,
    init_head,
    loss_and_gradient,
    predict,
    standardize_channels,
    synth_probabilities,
    train,
)

from .helpers import numeric_gradient

SPEC8 = GridSpec(x_min=0.0, y_min=0.0, cell_size=1.0, n_x=8, n_y=8)


def tiny_fusion(seed, n_channels=4, spec=SPEC8):
    g = np.random.default_rng(seed)
    return FusionInput(
        spec=spec,
        channels=g.normal(size=(n_channels, *spec.shape)),
        names=tuple(f"ch{k}" for k in range(n_channels)),
        observed=np.ones(spec.shape, dtype=bool),
    )


def tiny_gt(seed, spec=SPEC8, ignore_rate=0.25):
    g = np.random.default_rng(seed + 1000)
    label = g.integers(0, NUM_CLASSES, size=spec.shape).astype(np.int16)
    label[g.random(spec.shape) < ignore_rate] = IGNORE
    return LabelGrid(spec=spec, label=label)


def head_to_vector(head):
    return np.concatenate(
        [head.w1.ravel(), head.b1.ravel(), head.w2.ravel(), head.b2.ravel()]
    )


def vector_to_head(vec, in_features, hidden):
    sizes = [
        hidden * in_features,
        hidden,
        NUM_CLASSES * hidden,
        NUM_CLASSES,
    ]
    parts = np.split(vec, np.cumsum(sizes)[:-1])
    return LateFusionHead(
        w1=parts[0].reshape(hidden, in_features),
        b1=parts[1],
        w2=parts[2].reshape(NUM_CLASSES, hidden),
        b2=parts[3],
    )


def separable_fixture():
    """Two linearly separable classes on a 20x20 grid."""
    spec = GridSpec(x_min=0.0, y_min=0.0, cell_size=1.0, n_x=20, n_y=20)
    g = np.random.default_rng(0)
    label = np.where(
        g.random(spec.shape) < 0.5, ClassId.ROAD, ClassId.BUILDING
    ).astype(np.int16)
    channels = np.stack(
        [
            (label == ClassId.ROAD).astype(np.float64),
            (label == ClassId.BUILDING).astype(np.float64),
            0.1 * g.standard_normal(spec.shape),
        ]
    )
    fusion = FusionInput(
        spec=spec,
        channels=channels,
        names=("is_road", "is_building", "noise"),
        observed=np.ones(spec.shape, dtype=bool),
    )
    return fusion, LabelGrid(spec=spec, label=label)


class TestInitHead:
    def test_shapes_and_zero_biases(self):
        head = init_head(16, hidden=32, seed=0)
        assert head.w1.shape == (32, 16)
        assert head.b1.shape == (32,)
        assert head.w2.shape == (NUM_CLASSES, 32)
        assert head.b2.shape == (NUM_CLASSES,)
        assert head.in_features == 16
        assert head.hidden == 32
        assert not head.b1.any()
        assert not head.b2.any()

    def test_uniform_bounds(self):
        head = init_head(16, hidden=32, seed=1)
        lim1 = np.sqrt(6.0 / (16 + 32))
        lim2 = np.sqrt(6.0 / (32 + NUM_CLASSES))
        assert np.abs(head.w1).max() <= lim1
        assert np.abs(head.w2).max() <= lim2
        # spread over the interval, not collapsed
        assert np.abs(head.w1).max() > 0.8 * lim1

    def test_deterministic_per_seed(self):
        a, b = init_head(8, seed=5), init_head(8, seed=5)
        assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)
        c = init_head(8, seed=6)
        assert not np.array_equal(a.w1, c.w1)

    def test_validation(self):
        with pytest.raises(ValueError):
            init_head(0)
        with pytest.raises(ValueError):
            init_head(4, hidden=0)


class TestAssemble:
    @staticmethod
    def _stack_and_cloud(seed):
        g = np.random.default_rng(seed)
        n = 200
        xyz = g.uniform(0.5, 7.5, size=(n, 3))
        labels = g.integers(0, NUM_CLASSES, size=n)
        cloud = PointCloud(
            xyz=xyz, intensity=g.uniform(0, 1, size=n)
        ).with_probabilities(synth_probabilities(labels, seed=seed))
        return encode_multilayer(cloud, SPEC8, sensor_origin=(0.1, 0.1, 0.0)), cloud

    def test_mass_grid_gives_sixteen_channels(self):
        stack, cloud = self._stack_and_cloud(0)
        mean = encode_mean(encode_summed(cloud, SPEC8))
        fusion = assemble_early_fusion_input(stack, mean)
        assert fusion.n_channels == 16
        assert fusion.names[:5] == (
            "z_max",
            "z_min",
            "intensity",
            "observations",
            "occlusion_upper",
        )
        assert fusion.names[5] == f"{MEAN}_building"
        np.testing.assert_array_equal(fusion.channels[0], stack.z_max.values)
        np.testing.assert_array_equal(fusion.channels[5], mean.mass[:, :, 0])

    def test_argmax_grid_gives_single_class_channel(self):
        stack, cloud = self._stack_and_cloud(1)
        argmax = encode_argmax(encode_histogram(cloud, SPEC8))
        fusion = assemble_early_fusion_input(stack, argmax)
        assert fusion.n_channels == 6
        assert fusion.names[5] == "argmax_class"
        empty = argmax.label == IGNORE
        assert (fusion.channels[5][empty] == -1.0).all()

    def test_observed_is_union_of_sources(self):
        stack, cloud = self._stack_and_cloud(2)
        mean = encode_mean(encode_summed(cloud, SPEC8))
        fusion = assemble_early_fusion_input(stack, mean)
        expected = (
            stack.z_max.validity | stack.observations.validity | mean.validity
        )
        np.testing.assert_array_equal(fusion.observed, expected)

    def test_spec_mismatch_rejected(self):
        stack, cloud = self._stack_and_cloud(3)
        other_spec = GridSpec(x_min=0.0, y_min=0.0, cell_size=0.5, n_x=8, n_y=8)
        mean = encode_mean(encode_summed(cloud, other_spec))
        with pytest.raises(ValueError):
            assemble_early_fusion_input(stack, mean)

    def test_fusion_input_validation(self):
        with pytest.raises(ValueError):
            FusionInput(
                spec=SPEC8,
                channels=np.zeros((2, 8, 8)),
                names=("a", "a"),
                observed=np.ones((8, 8), bool),
            )
        with pytest.raises(ValueError):
            FusionInput(
                spec=SPEC8,
                channels=np.full((1, 8, 8), np.nan),
                names=("a",),
                observed=np.ones((8, 8), bool),
            )


class TestForwardAndLoss:
    def test_zero_head_gives_uniform_loss(self):
        head = LateFusionHead(
            w1=np.zeros((4, 3)),
            b1=np.zeros(4),
            w2=np.zeros((NUM_CLASSES, 4)),
            b2=np.zeros(NUM_CLASSES),
        )
        loss, grad = loss_and_gradient(head, tiny_fusion(0, 3), tiny_gt(0))
        assert loss == pytest.approx(np.log(NUM_CLASSES), abs=1e-9)
        assert not grad.w1.any()  # relu output is zero, so w1 gets no signal

    def test_hand_computed_forward(self):
        # single channel, identity-ish pipeline: logit_c = w2[c] * relu(x)
        spec = GridSpec(x_min=0.0, y_min=0.0, cell_size=1.0, n_x=1, n_y=2)
        fusion = FusionInput(
            spec=spec,
            channels=np.array([[[2.0, -3.0]]]),
            names=("x",),
            observed=np.ones((1, 2), bool),
        )
        w2 = np.zeros((NUM_CLASSES, 1))
        w2[4, 0] = 1.5
        head = LateFusionHead(
            w1=np.ones((1, 1)),
            b1=np.zeros(1),
            w2=w2,
            b2=np.zeros(NUM_CLASSES),
        )
        logits = forward(head, fusion)
        assert logits.shape == (1, 2, NUM_CLASSES)
        assert logits[0, 0, 4] == pytest.approx(3.0)  # 1.5 * relu(2)
        assert logits[0, 1, 4] == pytest.approx(0.0)  # relu(-3) = 0

    def test_channel_count_mismatch_rejected(self):
        head = init_head(5)
        with pytest.raises(ValueError):
            forward(head, tiny_fusion(0, 4))
        with pytest.raises(ValueError):
            loss_and_gradient(head, tiny_fusion(0, 4), tiny_gt(0))

    def test_loss_requires_labeled_cells(self):
        gt = LabelGrid(
            spec=SPEC8, label=np.full(SPEC8.shape, IGNORE, dtype=np.int16)
        )
        with pytest.raises(ValueError):
            loss_and_gradient(init_head(4), tiny_fusion(0), gt)

    def test_logit_shift_leaves_loss_unchanged(self):
        head = init_head(4, seed=2)
        fusion, gt = tiny_fusion(2), tiny_gt(2)
        base, _ = loss_and_gradient(head, fusion, gt)
        shifted = LateFusionHead(
            w1=head.w1, b1=head.b1, w2=head.w2, b2=head.b2 + 7.5
        )
        also, _ = loss_and_gradient(shifted, fusion, gt)
        assert also == pytest.approx(base, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed):
        spec = GridSpec(x_min=0.0, y_min=0.0, cell_size=1.0, n_x=5, n_y=5)
        fusion = tiny_fusion(seed, n_channels=3, spec=spec)
        gt = tiny_gt(seed, spec=spec)
        head = init_head(3, hidden=4, seed=seed)
        _, grad = loss_and_gradient(head, fusion, gt)
        analytic = np.concatenate(
            [grad.w1.ravel(), grad.b1.ravel(), grad.w2.ravel(), grad.b2.ravel()]
        )

        def f(vec):
            h = vector_to_head(vec, in_features=3, hidden=4)
            return loss_and_gradient(h, fusion, gt)[0]

        numeric = numeric_gradient(f, head_to_vector(head))
        rel = np.abs(analytic - numeric) / np.maximum(
            np.abs(analytic) + np.abs(numeric), 1e-8
        )
        assert rel.max() < 1e-6


class TestTrain:
    def test_separable_problem_is_learned(self):
        fusion, gt = separable_fixture()
        head, trace = train([(fusion, gt)], epochs=200, learning_rate=0.5, hidden=8)
        assert len(trace) == 200
        assert trace[0] > 1.0
        assert trace[-1] < 0.01
        assert trace[-1] < trace[0]
        pred = predict(head, fusion)
        assert (pred.label == gt.label).mean() == 1.0

    def test_training_is_deterministic(self):
        fusion, gt = separable_fixture()
        h1, t1 = train([(fusion, gt)], epochs=50, learning_rate=0.5, hidden=8, seed=3)
        h2, t2 = train([(fusion, gt)], epochs=50, learning_rate=0.5, hidden=8, seed=3)
        assert t1 == t2
        for a, b in zip(
            (h1.w1, h1.b1, h1.w2, h1.b2), (h2.w1, h2.b1, h2.w2, h2.b2)
        ):
            assert np.array_equal(a, b)

    def test_zero_epochs_returns_initial_head(self):
        fusion, gt = separable_fixture()
        head, trace = train([(fusion, gt)], epochs=0, learning_rate=0.1, seed=4)
        assert trace == []
        init = init_head(fusion.n_channels, hidden=32, seed=4)
        assert np.array_equal(head.w1, init.w1)

    def test_resume_from_existing_head(self):
        fusion, gt = separable_fixture()
        half1, _ = train([(fusion, gt)], epochs=25, learning_rate=0.5, hidden=8)
        resumed, _ = train(
            [(fusion, gt)], epochs=25, learning_rate=0.5, head=half1
        )
        full, _ = train([(fusion, gt)], epochs=50, learning_rate=0.5, hidden=8)
        np.testing.assert_allclose(resumed.w1, full.w1, atol=1e-12)
        np.testing.assert_allclose(resumed.b2, full.b2, atol=1e-12)

    def test_multiple_pairs_form_one_batch(self):
        fusion, gt = separable_fixture()
        # a duplicated pair doubles every count, leaving the mean loss alone
        single, t_single = train([(fusion, gt)], epochs=10, learning_rate=0.2)
        double, t_double = train(
            [(fusion, gt), (fusion, gt)], epochs=10, learning_rate=0.2
        )
        np.testing.assert_allclose(t_single, t_double, atol=1e-12)
        np.testing.assert_allclose(single.w1, double.w1, atol=1e-12)

    def test_validation(self):
        fusion, gt = separable_fixture()
        with pytest.raises(ValueError):
            train([], epochs=1, learning_rate=0.1)
        with pytest.raises(ValueError):
            train([(fusion, gt)], epochs=-1, learning_rate=0.1)
        empty_gt = LabelGrid(
            spec=fusion.spec,
            label=np.full(fusion.spec.shape, IGNORE, dtype=np.int16),
        )
        with pytest.raises(ValueError):
            train([(fusion, empty_gt)], epochs=1, learning_rate=0.1)
        with pytest.raises(ValueError):
            train(
                [(fusion, gt)],
                epochs=1,
                learning_rate=0.1,
                head=init_head(fusion.n_channels + 1),
            )

    def test_non_finite_loss_aborts_training(self):
        # weights large enough that the logits overflow on the first pass
        spec = GridSpec(x_min=0.0, y_min=0.0, cell_size=1.0, n_x=2, n_y=2)
        fusion = FusionInput(
            spec=spec,
            channels=np.ones((2, 2, 2)),
            names=("a", "b"),
            observed=np.ones((2, 2), bool),
        )
        gt = LabelGrid(
            spec=spec, label=np.zeros(spec.shape, dtype=np.int16)
        )
        huge = LateFusionHead(
            w1=np.full((4, 2), 1e200),
            b1=np.zeros(4),
            w2=np.full((NUM_CLASSES, 4), 1e200),
            b2=np.zeros(NUM_CLASSES),
        )
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(FloatingPointError):
                train([(fusion, gt)], epochs=5, learning_rate=0.1, head=huge)


class TestPredict:
    def test_unobserved_cells_stay_ignore(self):
        g = np.random.default_rng(0)
        observed = g.random(SPEC8.shape) < 0.5
        fusion = FusionInput(
            spec=SPEC8,
            channels=g.normal(size=(3, 8, 8)),
            names=("a", "b", "c"),
            observed=observed,
        )
        pred = predict(init_head(3, seed=1), fusion)
        assert (pred.label[~observed] == IGNORE).all()
        assert (pred.label[observed] != IGNORE).all()

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=10, deadline=None)
    def test_prediction_is_argmax_of_logits(self, seed):
        fusion = tiny_fusion(seed)
        head = init_head(4, seed=seed)
        pred = predict(head, fusion)
        logits = forward(head, fusion)
        np.testing.assert_array_equal(
            pred.label, np.argmax(logits, axis=2).astype(np.int16)
        )


class TestStandardizeChannels:
    def make_partial(self, seed=0, n_channels=4):
        g = np.random.default_rng(seed)
        observed = g.random(SPEC8.shape) < 0.7
        observed[0, 0] = True  # keep at least one cell
        channels = g.normal(3.0, 5.0, size=(n_channels, *SPEC8.shape))
        channels[:, ~observed] = 0.0
        return FusionInput(
            spec=SPEC8,
            channels=channels,
            names=tuple(f"ch{k}" for k in range(n_channels)),
            observed=observed,
        )

    def test_observed_cells_have_unit_moments(self):
        fusion = self.make_partial()
        out = standardize_channels(fusion)
        for k in range(out.n_channels):
            values = out.channels[k][out.observed]
            assert abs(values.mean()) < 1e-12
            assert abs(values.std() - 1.0) < 1e-12

    def test_unobserved_cells_zeroed_and_metadata_kept(self):
        fusion = self.make_partial(seed=5)
        out = standardize_channels(fusion)
        assert not out.channels[:, ~out.observed].any()
        assert out.names == fusion.names
        assert out.spec == fusion.spec
        np.testing.assert_array_equal(out.observed, fusion.observed)

    def test_constant_channel_becomes_zero(self):
        observed = np.ones(SPEC8.shape, dtype=bool)
        channels = np.stack([np.full(SPEC8.shape, 7.5), np.zeros(SPEC8.shape)])
        fusion = FusionInput(
            spec=SPEC8, channels=channels, names=("const", "zero"), observed=observed
        )
        out = standardize_channels(fusion)
        assert not out.channels.any()

    def test_requires_observed_cells(self):
        fusion = FusionInput(
            spec=SPEC8,
            channels=np.zeros((1, *SPEC8.shape)),
            names=("a",),
            observed=np.zeros(SPEC8.shape, dtype=bool),
        )
        with pytest.raises(ValueError, match="no observed cells"):
            standardize_channels(fusion)

    def test_training_on_standardized_channels_still_learns(self):
        fusion, gt = separable_fixture()
        head, _ = train(
            [(standardize_channels(fusion), gt)],
            epochs=200,
            learning_rate=0.5,
            hidden=8,
        )
        pred = predict(head, standardize_channels(fusion))
        assert (pred.label == gt.label).mean() == 1.0
