"""Forward-semantics contracts of the layer operations."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deblurlab import autodiff as ad
from deblurlab import kernels as K
from oracles import naive_conv2d


class TestConv2d:
    def test_identity_kernel(self):
        x = np.ones((1, 1, 3, 3))
        w = np.ones((1, 1, 1, 1))
        out = ad.conv2d(ad.tensor(x), ad.tensor(w), stride=1, padding=0)
        assert np.array_equal(out.data, x)

    def test_mean_kernel(self):
        x = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
        w = np.full((1, 1, 3, 3), 1.0 / 9.0)
        out = ad.conv2d(ad.tensor(x), ad.tensor(w), stride=1, padding=0)
        assert out.shape == (1, 1, 1, 1)
        assert out.item() == pytest.approx(5.0, abs=1e-12)

    def test_matches_naive_oracle(self, rng):
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 3, 3))
        got = ad.conv2d(ad.tensor(x), ad.tensor(w), stride=1, padding=0).data
        assert np.abs(got - naive_conv2d(x, w, 1, 0)).max() < 1e-12

    @pytest.mark.parametrize("stride,padding", [(1, 1), (2, 0), (2, 1), (3, 2)])
    def test_strided_padded_vs_oracle(self, rng, stride, padding):
        x = rng.standard_normal((2, 2, 7, 9))
        w = rng.standard_normal((3, 2, 3, 3))
        got = ad.conv2d(ad.tensor(x), ad.tensor(w), stride=stride, padding=padding).data
        assert np.abs(got - naive_conv2d(x, w, stride, padding)).max() < 1e-12

    def test_output_shape_law(self, rng):
        x = rng.standard_normal((1, 1, 11, 13))
        w = rng.standard_normal((1, 1, 3, 5))
        out = ad.conv2d(ad.tensor(x), ad.tensor(w), stride=2, padding=1)
        assert out.shape == (1, 1, (11 + 2 - 3) // 2 + 1, (13 + 2 - 5) // 2 + 1)

    def test_kernel_larger_than_padded_input_raises(self, rng):
        x = ad.tensor(rng.standard_normal((1, 1, 3, 3)))
        w = ad.tensor(rng.standard_normal((1, 1, 5, 5)))
        with pytest.raises(ValueError, match="exceeds padded input"):
            ad.conv2d(x, w, stride=1, padding=0)

    def test_channel_mismatch_raises(self, rng):
        x = ad.tensor(rng.standard_normal((1, 2, 4, 4)))
        w = ad.tensor(rng.standard_normal((1, 3, 3, 3)))
        with pytest.raises(ValueError, match="channel mismatch"):
            ad.conv2d(x, w, stride=1, padding=0)


class TestConv2dTranspose:
    def test_single_pixel_stamp(self):
        x = ad.tensor(np.ones((1, 1, 1, 1)))
        w = ad.tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        out = ad.conv2d_transpose(x, w, stride=2, padding=0)
        assert np.array_equal(out.data.reshape(2, 2), [[1.0, 2.0], [3.0, 4.0]])

    def test_adjoint_identity(self, rng):
        # <conv(x, w), y> == <x, conv_transpose(y, w)> with divisible geometry
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 2, 2))
        y = rng.standard_normal((2, 4, 4, 4))
        lhs = float((ad.conv2d(ad.tensor(x), ad.tensor(w), 2, 0).data * y).sum())
        rhs = float((ad.conv2d_transpose(ad.tensor(y), ad.tensor(w), 2, 0).data * x).sum())
        assert abs(lhs - rhs) < 1e-10

    def test_zero_input_gives_zero(self, rng):
        x = ad.tensor(np.zeros((1, 2, 3, 3)))
        w = ad.tensor(rng.standard_normal((2, 5, 4, 4)))
        assert not ad.conv2d_transpose(x, w, 2, 1).data.any()

    def test_output_extent(self, rng):
        x = ad.tensor(rng.standard_normal((1, 2, 5, 5)))
        w = ad.tensor(rng.standard_normal((2, 3, 4, 4)))
        out = ad.conv2d_transpose(x, w, stride=2, padding=1)
        assert out.shape == (1, 3, (5 - 1) * 2 - 2 + 4, (5 - 1) * 2 - 2 + 4)


class TestPixelShuffle:
    def test_shape_law(self, rng):
        x = ad.tensor(rng.standard_normal((1, 4, 2, 2)))
        assert ad.pixel_shuffle(x, 2).shape == (1, 1, 4, 4)

    def test_inverse_rearrangement_round_trips(self, rng):
        x = rng.standard_normal((2, 8, 3, 5))
        y = ad.pixel_shuffle(ad.tensor(x), 2).data
        n, c, h, w = y.shape
        back = (
            y.reshape(n, c, h // 2, 2, w // 2, 2)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, c * 4, h // 2, w // 2)
        )
        assert np.array_equal(back, x)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 5), st.data())
    def test_element_multiset_preserved(self, r, c, hw, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        x = rng.standard_normal((2, c * r * r, hw, hw + 1))
        y = ad.pixel_shuffle(ad.tensor(x), r).data
        assert np.array_equal(np.sort(x.reshape(-1)), np.sort(y.reshape(-1)))

    def test_indivisible_channels_raise(self, rng):
        x = ad.tensor(rng.standard_normal((1, 3, 2, 2)))
        with pytest.raises(ValueError, match="divisible"):
            ad.pixel_shuffle(x, 2)


class TestAvgPool:
    def test_window_mean(self):
        x = ad.tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        assert ad.avg_pool2d(x).item() == pytest.approx(2.5, abs=0)

    def test_constant_preserved(self):
        x = ad.tensor(np.full((2, 3, 4, 4), 0.7))
        assert np.allclose(ad.avg_pool2d(x).data, 0.7, atol=1e-15)

    def test_equals_uniform_conv(self, rng):
        x = rng.standard_normal((2, 3, 8, 8))
        pooled = ad.avg_pool2d(ad.tensor(x)).data
        w = np.zeros((3, 3, 2, 2))
        for c in range(3):
            w[c, c] = 0.25
        conv = ad.conv2d(ad.tensor(x), ad.tensor(w), stride=2, padding=0).data
        assert np.abs(pooled - conv).max() < 1e-12

    def test_indivisible_extent_raises(self, rng):
        with pytest.raises(ValueError, match="not divisible"):
            ad.avg_pool2d(ad.tensor(rng.standard_normal((1, 1, 5, 4))))


class TestInstanceNorm:
    def _affine(self, c):
        return ad.tensor(np.ones(c)), ad.tensor(np.zeros(c))

    def test_constant_plane_zeroed(self):
        x = ad.tensor(np.full((1, 2, 4, 4), 3.3))
        g, b = self._affine(2)
        assert np.allclose(ad.instance_norm(x, g, b).data, 0.0, atol=1e-12)

    def test_already_normalized_plane(self):
        x = ad.tensor(np.array([-1.0, 1.0, -1.0, 1.0]).reshape(1, 1, 2, 2))
        g, b = self._affine(1)
        out = ad.instance_norm(x, g, b).data
        assert np.allclose(out, x.data, atol=1e-4)

    def test_random_plane_moments(self, rng):
        x = ad.tensor(rng.standard_normal((3, 4, 8, 8)))
        g, b = self._affine(4)
        out = ad.instance_norm(x, g, b).data
        assert np.abs(out.mean(axis=(2, 3))).max() < 1e-6
        assert np.abs(out.var(axis=(2, 3)) - 1.0).max() < 1e-4

    def test_affine_applies(self, rng):
        x = ad.tensor(rng.standard_normal((1, 2, 6, 6)))
        out = ad.instance_norm(x, ad.tensor(np.array([2.0, 0.5])), ad.tensor(np.array([1.0, -1.0])))
        assert np.allclose(out.data.mean(axis=(2, 3)), [[1.0, -1.0]], atol=1e-6)


class TestLeakyRelu:
    @pytest.mark.parametrize("value,expected", [(2.0, 2.0), (-1.0, -0.1), (0.0, 0.0)])
    def test_pointwise(self, value, expected):
        out = ad.leaky_relu(ad.tensor(np.array(value)), alpha=0.1)
        assert out.item() == pytest.approx(expected, abs=0)


class TestDropout:
    def test_inference_is_identity(self, rng):
        x = ad.tensor(rng.standard_normal(100))
        out = ad.dropout(x, p=0.5, training=False, seed=1)
        assert np.array_equal(out.data, x.data)

    def test_p_zero_is_identity(self, rng):
        x = ad.tensor(rng.standard_normal(100))
        assert np.array_equal(ad.dropout(x, p=0.0, training=True, seed=1).data, x.data)

    def test_survivor_fraction(self):
        x = ad.tensor(np.ones(10_000))
        out = ad.dropout(x, p=0.5, training=True, seed=7).data
        frac = (out > 0).mean()
        assert abs(frac - 0.5) < 0.02
        assert np.allclose(out[out > 0], 2.0)

    def test_mask_reproducible(self, rng):
        x = ad.tensor(rng.standard_normal(512))
        a = ad.dropout(x, 0.5, True, seed=9).data
        b = ad.dropout(x, 0.5, True, seed=9).data
        assert np.array_equal(a, b)

    def test_invalid_p(self, rng):
        with pytest.raises(ValueError, match="probability"):
            ad.dropout(ad.tensor(np.ones(3)), p=1.0, training=True, seed=0)


class TestBackwardBasics:
    def test_sum_gives_ones(self):
        x = ad.tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        grads = ad.backward(x.sum())
        assert np.array_equal(grads[x].data, np.ones((2, 3)))

    def test_sum_of_squares(self):
        x = ad.tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        grads = ad.backward((x * x).sum())
        assert np.allclose(grads[x].data, [2.0, 4.0, 6.0])

    def test_multi_element_loss_rejected(self):
        x = ad.tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(x * x)

    def test_grad_of_unrelated_input_is_zero(self):
        x = ad.tensor(np.ones(3), requires_grad=True)
        z = ad.tensor(np.ones(3), requires_grad=True)
        (gz,) = ad.grad((x * x).sum(), [z])
        assert not gz.data.any()


class TestTape:
    def test_topological_order(self, rng):
        x = ad.tensor(rng.standard_normal((4,)), requires_grad=True)
        y = (x * x + x).sum() * 2.0
        order = ad.topo_order(y)
        position = {id(t): i for i, t in enumerate(order)}
        for t in order:
            for p in t.node.parents:
                if p.node is not None:
                    assert position[id(p)] < position[id(t)]

    def test_backward_visits_each_node_once(self, rng):
        x = ad.tensor(rng.standard_normal((4,)), requires_grad=True)
        shared = x * 3.0
        y = (shared * shared + shared).sum()
        calls = {}
        for t in ad.topo_order(y):
            node = t.node
            original = node.vjp

            def counted(g, _node=node, _orig=original):
                calls[_node.id] = calls.get(_node.id, 0) + 1
                return _orig(g)

            node.vjp = counted
        ad.grad(y, [x])
        assert set(calls.values()) == {1}

    def test_node_ids_are_unique_and_ordered(self, rng):
        x = ad.tensor(rng.standard_normal((3,)), requires_grad=True)
        y = (x + 1.0) * (x + 2.0)
        ids = [t.node.id for t in ad.topo_order(y.sum())]
        assert len(ids) == len(set(ids))


class TestDeterminism:
    def test_bitwise_repeatability(self, rng):
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 3, 3))

        def run():
            t = ad.tensor(x, requires_grad=True)
            out = ad.leaky_relu(ad.conv2d(t, ad.tensor(w), 1, 1), 0.1)
            loss = (out * out).mean()
            (g,) = ad.grad(loss, [t])
            return loss.item(), g.data.copy()

        l1, g1 = run()
        l2, g2 = run()
        assert l1 == l2
        assert np.array_equal(g1, g2)


class TestBackendParity:
    def test_backends_bit_identical(self, rng):
        try:
            from deblurlab.kernels import _fastconv
        except ImportError:
            pytest.skip("compiled backend not built")
        from deblurlab.kernels import _refconv

        x = rng.standard_normal((2, 3, 9, 9))
        w = rng.standard_normal((4, 3, 3, 3))
        y = rng.standard_normal((2, 4, 4, 4))
        results = {}
        original = K._impl
        try:
            for name, impl in (("fast", _fastconv), ("ref", _refconv)):
                K._impl = impl
                results[name] = (
                    K.conv2d(x, w, 2, 0),
                    K.conv2d_input_grad(y, w, 2, 0, (9, 9)),
                    K.conv2d_weight_grad(x, y, 2, 0, (3, 3)),
                )
        finally:
            K._impl = original
        for a, b in zip(results["fast"], results["ref"]):
            assert np.array_equal(a, b)


class TestDebugChecks:
    def test_nan_screen(self):
        ad.set_debug_checks(True)
        try:
            bad = ad.tensor(np.array([-1.0]))
            with np.errstate(invalid="ignore"):
                with pytest.raises(FloatingPointError, match="power"):
                    bad**0.5
        finally:
            ad.set_debug_checks(False)
