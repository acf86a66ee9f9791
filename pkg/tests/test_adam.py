import numpy as np
import pytest

from liftmapdetect.adam import Adam, NanGradient, clip_global_norm
from liftmapdetect.autodiff import Tensor


def make_param(values, grad=None):
    p = Tensor(np.asarray(values, dtype=np.float32), requires_grad=True)
    if grad is not None:
        p.grad = np.asarray(grad, dtype=np.float32)
    return p


class TestStep:
    def test_zero_gradient_leaves_parameter_unchanged(self):
        p = make_param([1.0, -2.0], grad=[0.0, 0.0])
        opt = Adam([("w", p)], lr=0.1)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_missing_gradient_treated_as_zero(self):
        p = make_param([3.0])
        Adam([("w", p)], lr=0.1).step()
        np.testing.assert_array_equal(p.data, [3.0])

    def test_signed_step_without_momentum(self):
        # With beta1 = beta2 = 0 the first update is -lr * g / (|g| + eps):
        # a unit step in the gradient's sign direction, regardless of scale.
        p = make_param([0.0, 0.0, 0.0], grad=[5.0, -0.001, 0.0])
        opt = Adam([("w", p)], lr=0.25, beta1=0.0, beta2=0.0)
        opt.step()
        np.testing.assert_allclose(p.data, [-0.25, 0.25, 0.0], atol=1e-5)

    def test_step_counter_advances_by_one(self):
        p = make_param([1.0], grad=[1.0])
        opt = Adam([("w", p)])
        for k in range(1, 4):
            opt.step()
            assert opt.step_count == k

    def test_bias_correction_first_step_is_full_sized(self):
        # With defaults, m_hat = g and v_hat = g^2 after one step, so the
        # first update has magnitude ~lr independent of the warmup factors.
        p = make_param([0.0], grad=[7.0])
        opt = Adam([("w", p)], lr=0.01)
        opt.step()
        np.testing.assert_allclose(p.data, [-0.01], rtol=1e-5)

    def test_converges_on_quadratic(self):
        # Minimize (w - 3)^2 from w = 0 with a large step size. Momentum
        # makes the iterates overshoot, but the oscillation envelope decays.
        w = make_param([0.0])
        opt = Adam([("w", w)], lr=0.5)
        gaps = []
        for _ in range(40):
            w.grad = 2.0 * (w.data - 3.0)
            opt.step()
            gaps.append(abs(float(w.data[0]) - 3.0))
        # Steady approach while still far from the optimum.
        assert all(b < a for a, b in zip(gaps[:5], gaps[1:6]))
        assert min(gaps) < 0.01
        assert max(gaps[20:]) < max(gaps[:20]) / 2
        assert gaps[-1] < 0.3

    def test_nan_gradient_aborts_before_mutating_state(self):
        a = make_param([1.0], grad=[1.0])
        b = make_param([2.0], grad=[np.nan])
        opt = Adam([("a", a), ("b", b)], lr=0.1)
        with pytest.raises(NanGradient, match="'b'"):
            opt.step()
        np.testing.assert_array_equal(a.data, [1.0])
        np.testing.assert_array_equal(b.data, [2.0])
        assert opt.step_count == 0
        assert not opt.m["a"].any()

    def test_moment_shapes_match_parameters(self):
        p = make_param(np.zeros((2, 3)))
        opt = Adam([("w", p)])
        assert opt.m["w"].shape == (2, 3)
        assert opt.v["w"].shape == (2, 3)


class TestClipping:
    def test_below_threshold_untouched(self):
        p = make_param([0.0], grad=[0.5])
        norm = clip_global_norm([("w", p)], max_norm=1.0)
        assert norm == 0.5
        np.testing.assert_array_equal(p.grad, [0.5])

    def test_scales_joint_norm_to_max(self):
        a = make_param([0.0], grad=[3.0])
        b = make_param([0.0], grad=[4.0])
        params = [("a", a), ("b", b)]
        norm = clip_global_norm(params, max_norm=1.0)
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(a.grad, [0.6], rtol=1e-6)
        np.testing.assert_allclose(b.grad, [0.8], rtol=1e-6)
        joint = np.sqrt(float(a.grad[0]) ** 2 + float(b.grad[0]) ** 2)
        assert joint == pytest.approx(1.0, rel=1e-6)

    def test_direction_preserved(self):
        rng = np.random.default_rng(9)
        g = rng.standard_normal(16).astype(np.float32) * 10.0
        p = make_param(np.zeros(16), grad=g.copy())
        clip_global_norm([("w", p)], max_norm=1.0)
        cos = float(np.dot(p.grad, g) / (np.linalg.norm(p.grad) * np.linalg.norm(g)))
        assert cos == pytest.approx(1.0, abs=1e-6)

    def test_all_zero_gradients(self):
        p = make_param([1.0], grad=[0.0])
        assert clip_global_norm([("w", p)], max_norm=1.0) == 0.0
