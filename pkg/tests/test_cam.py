import numpy as np
import pytest

from finercam import cam
from finercam.backend import LinearBackend
from finercam.cam import (
    ExplanationTarget,
    FeatureStack,
    activate,
    aggregate,
    aggregate_raw,
    compose_raw,
    explain,
    finer_scorecam_weights,
    finer_weights,
    gradcam_weights_backend,
    gradcam_weights_final_layer,
    layercam_map,
    layercam_raw,
    normalize,
    onehot_coeffs,
    scorecam_weights,
    uniform_location_grads,
    upsample_bilinear,
)
from finercam.head import ClassifierHead
from finercam.rng import StreamRng


def head_of(rows, bias=None):
    rows = np.asarray(rows, dtype=np.float32)
    return ClassifierHead(weights=rows, bias=bias, class_names=[f"c{i}" for i in range(rows.shape[0])])


def stack_of(*maps):
    return FeatureStack.from_maps(np.stack([np.asarray(m, dtype=np.float32) for m in maps]))


class TestGradWeights:
    def test_hand_value(self):
        head = head_of([[0.3, -0.1], [0.0, 0.0]])
        np.testing.assert_allclose(gradcam_weights_final_layer(head, 0, 4), [0.075, -0.025], atol=1e-9)

    def test_zero_row(self):
        head = head_of([[0.3, -0.1], [0.0, 0.0]])
        assert np.all(gradcam_weights_final_layer(head, 1, 4) == 0.0)

    def test_times_grid_count_recovers_row(self):
        rng = StreamRng(3)
        head = head_of(rng.normal((5, 7)).astype(np.float32))
        for c in range(5):
            w = gradcam_weights_final_layer(head, c, 49)
            np.testing.assert_allclose(w * 49, head.weights[c], atol=1e-6)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            gradcam_weights_final_layer(head_of([[1.0]]), 3, 4)

    def test_backend_matches_final_layer(self, toy):
        image = StreamRng(4).uniform((64, 64, 3)).astype(np.float32)
        for c in (0, 3):
            via_backend = gradcam_weights_backend(toy, image, onehot_coeffs(toy.num_classes, c))
            via_head = gradcam_weights_final_layer(toy.head, c, toy.grid_count)
            np.testing.assert_allclose(via_backend, via_head, atol=1e-6)

    def test_backend_self_difference_is_zero(self, toy):
        image = StreamRng(5).uniform((64, 64, 3)).astype(np.float32)
        coeffs = onehot_coeffs(toy.num_classes, 2, reference=2, gamma=1.0)
        assert np.all(gradcam_weights_backend(toy, image, coeffs) == 0.0)


class TestFinerWeights:
    def test_hand_value(self):
        out = finer_weights(np.array([1.0, 0.5]), np.array([0.8, -0.2]), 0.5)
        np.testing.assert_allclose(out, [0.6, 0.6], atol=1e-12)

    def test_gamma_zero_is_baseline(self):
        a = np.array([1.0, -2.0, 3.0])
        out = finer_weights(a, np.array([9.0, 9.0, 9.0]), 0.0)
        assert np.array_equal(out, a)

    def test_equal_weights_unit_gamma_cancel(self):
        a = np.array([0.25, -1.5])
        assert np.all(finer_weights(a, a, 1.0) == 0.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            finer_weights(np.zeros(2), np.zeros(3), 1.0)


class TestCompose:
    def test_hand_sum(self):
        stack = stack_of([[1, 0], [0, 0]], [[0, 0], [0, 2]])
        out = compose_raw(stack, np.array([2.0, -1.0]))
        np.testing.assert_allclose(out, [[2, 0], [0, -2]], atol=1e-7)

    def test_zero_weights(self):
        stack = stack_of([[1, 2], [3, 4]])
        assert np.all(compose_raw(stack, np.zeros(1)) == 0.0)

    def test_single_channel_identity(self):
        stack = stack_of([[1.5, -2.5], [0.25, 4.0]])
        np.testing.assert_allclose(compose_raw(stack, np.ones(1)), stack.maps[0], atol=1e-7)


class TestActivate:
    def test_relu(self):
        out = activate(np.array([[2.0, 0.0], [0.0, -2.0]], dtype=np.float32), "relu")
        np.testing.assert_array_equal(out.grid, [[2, 0], [0, 0]])
        assert not out.normalized

    def test_all_negative(self):
        out = activate(np.full((2, 2), -1.0, dtype=np.float32), "relu")
        assert np.all(out.grid == 0.0)

    def test_identity(self):
        raw = np.array([[-1.0, 2.0]], dtype=np.float32)
        assert np.array_equal(activate(raw, "identity").grid, raw)


class TestAggregate:
    def test_single_reference_identity(self):
        stack = stack_of([[1.0, -1.0]], [[0.5, 2.0]])
        w = np.array([0.3, -0.7])
        direct = activate(compose_raw(stack, w)).grid
        for strategy in cam.AGGREGATIONS:
            assert np.array_equal(aggregate([w], stack, strategy).grid, direct)

    def test_identical_vectors_average(self):
        stack = stack_of([[1.0, -1.0]], [[0.5, 2.0]])
        w = np.array([0.3, -0.7])
        one = aggregate([w], stack, "avg_before_act").grid
        two = aggregate([w, w], stack, "avg_before_act").grid
        np.testing.assert_allclose(two, one, atol=1e-7)

    def test_strategies_differ_on_sign_fixture(self):
        stack = stack_of([[1.0]])
        before = aggregate([np.array([1.0]), np.array([-1.0])], stack, "avg_before_act").grid
        after = aggregate([np.array([1.0]), np.array([-1.0])], stack, "avg_after_act").grid
        np.testing.assert_allclose(before, [[0.0]], atol=1e-9)
        np.testing.assert_allclose(after, [[0.5]], atol=1e-9)

    def test_max_before_act(self):
        stack = stack_of([[1.0, -3.0]])
        out = aggregate([np.array([1.0]), np.array([-1.0])], stack, "max_before_act").grid
        np.testing.assert_allclose(out, [[1.0, 3.0]], atol=1e-7)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([], stack_of([[1.0]]), "avg_before_act")


class TestScoreWeights:
    @pytest.fixture
    def linear(self):
        rng = StreamRng(61)
        weights = np.stack([rng.uniform((8, 8, 3)), rng.uniform((8, 8, 3))])
        return LinearBackend(weights), rng.uniform((8, 8, 3)).astype(np.float32)

    def test_linear_closed_form(self, linear):
        backend, image = linear
        alphas = scorecam_weights(backend, image, 0)
        stack, _ = backend.forward(image)
        masks = cam.channel_masks(stack, 8, 8)
        expected = [
            np.tensordot(backend.pixel_weights[0], (image * m[:, :, None]).astype(np.float64),
                         axes=([0, 1, 2], [0, 1, 2]))
            for m in masks
        ]
        np.testing.assert_allclose(alphas, expected, atol=1e-9)

    def test_constant_channel_zero_mask(self):
        constant = np.full((4, 4), 2.5, dtype=np.float32)
        varying = np.arange(16, dtype=np.float32).reshape(4, 4)
        stack = stack_of(constant, varying)
        masks = cam.channel_masks(stack, 8, 8)
        assert np.all(masks[0] == 0.0)
        assert masks[1].max() == pytest.approx(1.0)

    def test_identical_channels_equal_alphas(self):
        rng = StreamRng(62)
        plane = rng.uniform((4, 4))
        weights = np.stack([rng.uniform((4, 4, 2)), rng.uniform((4, 4, 2))])
        backend = LinearBackend(weights)

        class SameChannels:
            num_classes = 2
            input_shape = (4, 4, 2)

            def forward(self, image, layer=None):
                maps = np.stack([plane, plane, plane]).astype(np.float32)
                return FeatureStack.from_maps(maps), backend.forward(image)[1]

            def masked_forward(self, image, mask):
                return backend.masked_forward(image, mask)

        image = rng.uniform((4, 4, 2)).astype(np.float32)
        alphas = scorecam_weights(SameChannels(), image, 0)
        assert np.allclose(alphas, alphas[0])

    def test_finer_gamma_zero_bitwise(self, linear):
        backend, image = linear
        base = scorecam_weights(backend, image, 0)
        finer = finer_scorecam_weights(backend, image, 0, 1, 0.0)
        assert np.array_equal(base, finer)

    def test_finer_identical_logit_functions(self):
        rng = StreamRng(63)
        row = rng.uniform((6, 6, 3))
        backend = LinearBackend(np.stack([row, row]))
        image = rng.uniform((6, 6, 3)).astype(np.float32)
        x_b = rng.uniform((6, 6, 3)).astype(np.float32)
        alphas = finer_scorecam_weights(backend, image, 0, 1, 1.0, baseline_input=x_b)
        _, base_logits = backend.forward(x_b)
        np.testing.assert_allclose(alphas, -base_logits[0], atol=1e-9)

    def test_finer_linear_closed_form(self, linear):
        backend, image = linear
        gamma = 0.7
        alphas = finer_scorecam_weights(backend, image, 0, 1, gamma)
        a_c = scorecam_weights(backend, image, 0)
        a_d = scorecam_weights(backend, image, 1)
        # both scorecam calls subtract f(0) = 0 on this backend
        np.testing.assert_allclose(alphas, a_c - gamma * a_d, atol=1e-9)

    def test_same_class_rejected(self, linear):
        backend, image = linear
        with pytest.raises(ValueError):
            finer_scorecam_weights(backend, image, 0, 0, 0.5)


class TestLayerCam:
    def test_hand_value(self):
        stack = stack_of([[4.0]], [[8.0]])
        grads = uniform_location_grads(stack, np.array([1.0, -1.0]))
        out = layercam_map(stack, grads)
        np.testing.assert_allclose(out.grid, [[4.0]], atol=1e-7)

    def test_all_negative_grads(self):
        stack = stack_of([[4.0]], [[8.0]])
        grads = uniform_location_grads(stack, np.array([-1.0, -2.0]))
        assert np.all(layercam_map(stack, grads).grid == 0.0)

    def test_constant_grads_match_compose_of_positive_part(self):
        rng = StreamRng(71)
        stack = FeatureStack.from_maps(rng.normal((3, 4, 4)).astype(np.float32))
        row = np.array([0.5, -1.0, 2.0])
        raw = layercam_raw(stack, uniform_location_grads(stack, row))
        expected = compose_raw(stack, np.maximum(row, 0.0) / stack.grid_count)
        np.testing.assert_allclose(raw, expected, atol=1e-6)

    def test_shape_mismatch(self):
        stack = stack_of([[1.0]])
        with pytest.raises(ValueError):
            layercam_raw(stack, np.zeros((1, 2, 2), dtype=np.float32))


class TestUpsampleNormalize:
    def test_constant_upsample(self):
        out = upsample_bilinear(np.full((2, 3), 3.5, dtype=np.float32), 7, 9)
        np.testing.assert_allclose(out, 3.5, atol=1e-6)

    def test_hand_coordinates(self):
        out = upsample_bilinear(np.array([[0.0, 1.0]], dtype=np.float32), 1, 4)
        np.testing.assert_allclose(out, [[0, 0.25, 0.75, 1.0]], atol=1e-7)

    def test_same_size_identity(self):
        rng = StreamRng(72)
        src = rng.uniform((5, 6)).astype(np.float32)
        np.testing.assert_allclose(upsample_bilinear(src, 5, 6), src, atol=1e-6)

    def test_normalize_examples(self):
        sal = activate(np.array([[2.0, 0.0], [0.0, 0.0]], dtype=np.float32))
        out = normalize(sal)
        np.testing.assert_array_equal(out.grid, [[1, 0], [0, 0]])
        assert out.normalized

    def test_normalize_zero_map(self):
        out = normalize(activate(np.zeros((2, 2), dtype=np.float32)))
        assert np.all(out.grid == 0.0)
        assert out.normalized

    def test_normalize_idempotent(self):
        sal = activate(np.array([[0.5, 1.0]], dtype=np.float32))
        once = normalize(sal)
        twice = normalize(once)
        assert np.array_equal(once.grid, twice.grid)

    def test_normalize_rejects_negative(self):
        with pytest.raises(ValueError):
            normalize(cam.SaliencyMap(grid=np.array([[-1.0]], dtype=np.float32)))


class TestExplanationTarget:
    def test_reference_equal_target_rejected(self):
        with pytest.raises(ValueError):
            ExplanationTarget(target_class=1, references=((1, 0.5),))

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            ExplanationTarget(target_class=0, references=((1, -0.1),))
        with pytest.raises(ValueError):
            ExplanationTarget(target_class=0, references=((1, 4.5),))
        ExplanationTarget(target_class=0, references=((1, 2.0),))  # extrapolation ok

    def test_empty_references_allowed(self):
        assert ExplanationTarget(target_class=0).num_references == 0


class TestExplain:
    @pytest.fixture
    def setup(self):
        rng = StreamRng(81)
        stack = FeatureStack.from_maps(rng.normal((6, 5, 5)).astype(np.float32))
        head = head_of(rng.normal((4, 6)).astype(np.float32))
        return stack, head

    def test_no_references_is_baseline(self, setup):
        stack, head = setup
        sal = explain(stack, head, ExplanationTarget(target_class=1))
        manual = activate(compose_raw(stack, gradcam_weights_final_layer(head, 1, stack.grid_count)))
        assert np.array_equal(sal.grid, manual.grid)

    def test_single_reference_manual_pipeline(self, setup):
        stack, head = setup
        sal = explain(stack, head, ExplanationTarget(target_class=1, references=((3, 0.6),)))
        weights = finer_weights(
            gradcam_weights_final_layer(head, 1, stack.grid_count),
            gradcam_weights_final_layer(head, 3, stack.grid_count),
            0.6,
        )
        manual = activate(compose_raw(stack, weights))
        assert np.array_equal(sal.grid, manual.grid)

    def test_reverse_comparison_flips_sign(self, setup):
        stack, head = setup
        fwd = explain(stack, head, ExplanationTarget(
            target_class=1, references=((3, 1.0),), activation="identity"))
        rev = explain(stack, head, ExplanationTarget(
            target_class=3, references=((1, 1.0),), activation="identity"))
        np.testing.assert_allclose(rev.grid, -fwd.grid, atol=1e-6)

    def test_score_requires_backend(self, setup):
        stack, head = setup
        with pytest.raises(ValueError, match="backend"):
            explain(stack, head, ExplanationTarget(target_class=0, method="score"))

    def test_upsample_to_image(self, setup):
        stack, head = setup
        sal = explain(stack, head, ExplanationTarget(target_class=0), upsample_to=(20, 20))
        assert sal.grid.shape == (20, 20)
        assert sal.resolution == "image"


class TestInvariants:
    def test_difference_gradients_equal_weight_difference(self, toy):
        """Gradients of y_c - gamma*y_d equal alpha_c - gamma*alpha_d."""
        image = StreamRng(91).uniform((64, 64, 3)).astype(np.float32)
        rng = StreamRng(92)
        for _ in range(20):
            c = rng.randint(toy.num_classes)
            d = (c + 1 + rng.randint(toy.num_classes - 1)) % toy.num_classes
            gamma = float(rng.uniform(1, 0.0, 2.0)[0])
            combined = gradcam_weights_backend(toy, image, onehot_coeffs(toy.num_classes, c, d, gamma))
            split = finer_weights(
                gradcam_weights_backend(toy, image, onehot_coeffs(toy.num_classes, c)),
                gradcam_weights_backend(toy, image, onehot_coeffs(toy.num_classes, d)),
                gamma,
            )
            assert np.abs(combined - split).max() < 1e-6

    def test_gamma_zero_bitwise_all_methods(self, toy):
        image = StreamRng(93).uniform((64, 64, 3)).astype(np.float32)
        stack, _ = toy.forward(image)
        for method in cam.METHODS:
            base = explain(stack, toy.head, ExplanationTarget(target_class=2, method=method),
                           backend=toy, image=image)
            finer = explain(stack, toy.head,
                            ExplanationTarget(target_class=2, references=((5, 0.0),), method=method),
                            backend=toy, image=image)
            assert np.array_equal(base.grid, finer.grid), method

    def test_relu_does_not_commute_with_subtraction(self):
        """Subtracting activated maps differs from activating the
        subtracted composition."""
        stack = stack_of([[2.0, 0.0]], [[0.0, 2.0]])
        alpha_c = np.array([1.0, 0.0])
        alpha_d = np.array([0.0, 1.0])
        finer = activate(compose_raw(stack, finer_weights(alpha_c, alpha_d, 1.0))).grid
        subtracted = activate(compose_raw(stack, alpha_c)).grid - 1.0 * activate(compose_raw(stack, alpha_d)).grid
        assert np.abs(finer - subtracted).max() > 0.1

    def test_scale_covariance(self):
        rng = StreamRng(94)
        stack = FeatureStack.from_maps(rng.normal((4, 6, 6)).astype(np.float32))
        head = head_of(rng.normal((3, 4)).astype(np.float32))
        scaled = head_of(head.weights * np.float32(3.0))
        spec = ExplanationTarget(target_class=0, references=((2, 0.6),))
        raw_a = explain(stack, head, spec)
        raw_b = explain(stack, scaled, spec)
        np.testing.assert_allclose(raw_b.grid, 3.0 * raw_a.grid, atol=1e-5)
        np.testing.assert_allclose(normalize(raw_b).grid, normalize(raw_a).grid, atol=1e-6)

    def test_deterministic(self, toy):
        image = StreamRng(95).uniform((64, 64, 3)).astype(np.float32)
        stack, _ = toy.forward(image)
        spec = ExplanationTarget(target_class=1, references=((0, 0.6), (2, 0.6)))
        a = explain(stack, toy.head, spec)
        b = explain(stack, toy.head, spec)
        assert np.array_equal(a.grid, b.grid)


def test_feature_stack_invariant():
    maps = np.ones((2, 2, 2), dtype=np.float32)
    with pytest.raises(ValueError, match="pooled"):
        FeatureStack(maps=maps, pooled=np.array([1.0, 2.0], dtype=np.float32))
