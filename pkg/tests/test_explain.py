import hashlib

import numpy as np
import pytest

from hybridtune.errors import DataError, InputError, UnsupportedArchitectureError
from hybridtune.explain import Caption, Heatmap, grad_cam, overlay, render_annotated
from hybridtune.nn import Network, build_network, predict_proba
from hybridtune.ppm import decode_ppm

from netgen import toy_localization
from oracles import occlusion_argmax

GOLDEN_SHA256 = "ded877e61cce6727343657fd96f13d8f899fca44d33ad5cf10718903be30fbb9"


def chebyshev(a, b):
    return max(abs(int(a[0]) - int(b[0])), abs(int(a[1]) - int(b[1])))


def cam_argmax(cam):
    return np.unravel_index(int(np.argmax(cam.values)), cam.values.shape)


class TestGradCam:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_occlusion(self, seed):
        net, img, _ = toy_localization(np.random.default_rng(seed))
        cam = grad_cam(net, img, 0)
        occ = occlusion_argmax(lambda im: predict_proba(net, im[None])[0], img, 0)
        assert chebyshev(cam_argmax(cam), occ) <= 1

    def test_range_and_shape(self):
        net = build_network("cnn-small", (3, 20, 28), list("abc"), 1)
        img = np.random.default_rng(0).random((3, 20, 28)).astype(np.float32)
        cam = grad_cam(net, img)
        assert cam.values.shape == (20, 28)
        assert cam.values.min() >= 0.0 and cam.values.max() <= 1.0
        assert cam.values.max() in (0.0, 1.0)
        assert cam.target_class == cam.predicted_class
        assert cam.probability == pytest.approx(cam.probabilities.max())

    def test_all_zero_activations(self):
        net, img, _ = toy_localization(np.random.default_rng(0))
        net.groups[0].bias.data[:] = -100.0
        cam = grad_cam(net, img, 0)
        assert not cam.values.any()

    def test_invariant_to_head_scaling(self):
        net, img, _ = toy_localization(np.random.default_rng(3))
        a = grad_cam(net, img, 0)
        net.head.weight.data *= 3.0
        b = grad_cam(net, img, 0)
        np.testing.assert_allclose(a.values, b.values, atol=1e-12)

    def test_deterministic_and_parameters_untouched(self):
        net, img, _ = toy_localization(np.random.default_rng(4))
        before = [p.copy() for p in net.parameter_arrays()]
        a, b = grad_cam(net, img), grad_cam(net, img)
        assert a.values.tobytes() == b.values.tobytes()
        assert all(np.array_equal(x, y) for x, y in zip(before, net.parameter_arrays()))
        assert all(p.grad is None for g in net.groups for p in g.parameters)

    def test_bad_target(self):
        net, img, _ = toy_localization(np.random.default_rng(0))
        with pytest.raises(InputError):
            grad_cam(net, img, 2)

    def test_no_conv_groups(self):
        net, img, _ = toy_localization(np.random.default_rng(0))
        dense_only = Network([net.head], "toy", net.input_shape, net.class_labels)
        with pytest.raises(UnsupportedArchitectureError):
            grad_cam(dense_only, img)


class TestOverlay:
    def test_zero_heat_is_identity(self):
        img = np.random.default_rng(1).random((3, 4, 5))
        assert np.array_equal(overlay(img, np.zeros((4, 5))), img)

    def test_unit_heat_formula(self):
        img = np.random.default_rng(2).random((3, 4, 5))
        out = overlay(img, np.ones((4, 5)))
        red = np.zeros_like(img)
        red[0] = 1.0
        np.testing.assert_allclose(out, 0.5 * img + 0.5 * red, atol=1e-15)


class TestRender:
    def test_golden_bytes(self, tmp_path):
        net, img, _ = toy_localization(np.random.default_rng(2024))
        cam = grad_cam(net, img)
        ppm, txt = render_annotated(img, cam, Caption("on", "on", 0.1, cam.probability), tmp_path / "g.ppm")
        assert hashlib.sha256(ppm.read_bytes()).hexdigest() == GOLDEN_SHA256
        assert txt.read_text() == "Prediction/Actual: on/on\nLoss/Probability: 0.10/0.94\n"
        assert decode_ppm(ppm.read_bytes()).shape == (8, 8, 3)

    def test_misaligned(self, tmp_path):
        with pytest.raises(InputError):
            render_annotated(np.zeros((3, 4, 4)), np.zeros((4, 5)), Caption("a", "b", 0, 0), tmp_path / "x.ppm")

    def test_unwritable(self, tmp_path):
        heat = Heatmap(np.zeros((2, 2)), 0, 1.0, np.array([1.0]))
        with pytest.raises(DataError):
            render_annotated(np.zeros((3, 2, 2)), heat, Caption("a", "b", 0, 1), tmp_path / "missing" / "x.ppm")
