import numpy as np
import pytest

from conftest import assert_grads_close
from test_ssm import make_vssb

from icemamba import tensor as T
from icemamba.blocks import (
    EcaWeights,
    RessbWeights,
    conv1x1,
    eca_forward,
    eca_kernel_size,
    final_patch_expand,
    output_head,
    patch_embed,
    patch_expand,
    patch_merge,
    patch_rescale,
    trunc_normal,
)
from icemamba.errors import ShapeError
from icemamba.ssm import vssb_forward
from icemamba.tensor import Tensor


class TestEcaKernelSize:
    @pytest.mark.parametrize("channels,expected", [(64, 3), (256, 5), (2, 1), (1, 1), (16, 3), (512, 5)])
    def test_examples(self, channels, expected):
        assert eca_kernel_size(channels) == expected

    def test_always_odd(self):
        for c in range(1, 1024):
            k = eca_kernel_size(c)
            assert k % 2 == 1 and k >= 1


class TestEcaForward:
    def test_zero_kernel_halves(self, rng):
        x = rng.normal(size=(4, 3, 3))
        out = eca_forward(Tensor(x), EcaWeights(Tensor(np.zeros(3))))
        np.testing.assert_allclose(out.data, x / 2, rtol=1e-6)

    def test_gates_in_open_interval(self, rng):
        x = Tensor(rng.normal(size=(6, 4, 4)))
        w = EcaWeights(Tensor(rng.normal(size=(3,))))
        out = eca_forward(x, w).data
        gates = out / np.where(x.data == 0, 1, x.data)
        finite = np.isfinite(gates) & (x.data != 0)
        assert ((gates[finite] > 0) & (gates[finite] < 1)).all()

    def test_identity_kernel_two_channels(self):
        # channel 0 pools to 0 -> gate 0.5; channel 1 pools large -> gate ~ 1
        x = np.stack([np.zeros((2, 2)), np.full((2, 2), 50.0)])
        out = eca_forward(Tensor(x), EcaWeights(Tensor(np.ones(1))))
        np.testing.assert_allclose(out.data[0], 0.0, atol=1e-7)
        np.testing.assert_allclose(out.data[1], x[1] * (1 / (1 + np.exp(-50.0))), rtol=1e-6)

    def test_kernel_longer_than_channels_rejected(self):
        with pytest.raises(ShapeError, match="2C-1"):
            eca_forward(Tensor(np.zeros((2, 2, 2))), EcaWeights(Tensor(np.zeros(5))))

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeError):
            EcaWeights(Tensor(np.zeros(4)))

    def test_gradient(self, rng):
        x = rng.normal(size=(3, 4, 2))
        k = rng.normal(size=(3,))
        assert_grads_close(
            lambda xt, kt: T.tensor_sum(T.mul(eca_forward(xt, EcaWeights(kt)), xt)),
            [x, k],
        )


def make_ressb(rng, c, n=2, zero_vssb=False, zero_res=False, dtype=np.float64):
    k = eca_kernel_size(c)
    return RessbWeights(
        eca=EcaWeights(Tensor(rng.normal(0, 0.3, size=(k,)).astype(dtype), requires_grad=True)),
        vssb1=make_vssb(rng, c, n=n, zero=zero_vssb, dtype=dtype),
        vssb2=make_vssb(rng, c, n=n, zero=zero_vssb, dtype=dtype),
        res_w=Tensor(
            (np.zeros((c, c)) if zero_res else rng.normal(0, 0.3, size=(c, c))).astype(dtype),
            requires_grad=True,
        ),
        res_b=Tensor(np.zeros(c, dtype=dtype), requires_grad=True),
    )


class TestRessb:
    def test_zeroed_branches_reduce_to_eca(self, rng):
        from icemamba.blocks import ressb_forward

        x = Tensor(rng.normal(size=(3, 4, 4)))
        w = make_ressb(rng, 3, zero_vssb=True, zero_res=True)
        out = ressb_forward(x, w)
        expected = eca_forward(x, w.eca)
        np.testing.assert_allclose(out.data, expected.data, atol=1e-12)

    def test_shape_preserved(self, rng):
        from icemamba.blocks import ressb_forward

        x = Tensor(rng.normal(size=(2, 6, 4)))
        assert ressb_forward(x, make_ressb(rng, 2)).shape == (2, 6, 4)

    def test_two_branch_decomposition_exact(self, rng):
        from icemamba.blocks import ressb_forward

        x = Tensor(rng.normal(size=(2, 4, 4)))
        w = make_ressb(rng, 2)
        whole = ressb_forward(x, w).data
        enhanced = vssb_forward(vssb_forward(eca_forward(x, w.eca), w.vssb1), w.vssb2).data
        residual = T.silu(conv1x1(x, w.res_w, w.res_b)).data
        np.testing.assert_array_equal(whole, enhanced + residual)


class TestPatchOps:
    def test_embed_identity_p1(self, rng):
        x = rng.normal(size=(3, 4, 4))
        out = patch_embed(Tensor(x), 1, Tensor(np.eye(3)))
        np.testing.assert_allclose(out.data, x, rtol=1e-6)

    def test_embed_shape(self, rng):
        x = Tensor(rng.normal(size=(2, 8, 8)))
        w = Tensor(rng.normal(size=(2 * 16, 5)))
        assert patch_embed(x, 4, w).shape == (5, 2, 2)

    def test_embed_constant_input(self, rng):
        x = Tensor(np.full((2, 4, 4), 1.5))
        w = Tensor(rng.normal(size=(2 * 4, 3)))
        out = patch_embed(x, 2, w).data
        for c in range(3):
            np.testing.assert_allclose(out[c], out[c, 0, 0], rtol=1e-6)

    def test_embed_indivisible_names_padding(self):
        with pytest.raises(ShapeError, match=r"pad by \(1, 2\)"):
            patch_embed(Tensor(np.zeros((1, 5, 4))), 3, Tensor(np.zeros((9, 2))))

    def test_merge_shape(self, rng):
        x = Tensor(rng.normal(size=(4, 8, 8)))
        out = patch_merge(x, Tensor(rng.normal(size=(16, 8))))
        assert out.shape == (8, 4, 4)

    def test_expand_shape(self, rng):
        x = Tensor(rng.normal(size=(8, 4, 4)))
        out = patch_expand(x, Tensor(rng.normal(size=(8, 16))))
        assert out.shape == (4, 8, 8)

    def test_expand_merge_shape_roundtrip(self, rng):
        x = Tensor(rng.normal(size=(4, 6, 6)))
        merged = patch_merge(x, Tensor(rng.normal(size=(16, 8))))
        back = patch_expand(merged, Tensor(rng.normal(size=(8, 16))))
        assert back.shape == x.shape

    def test_merge_requires_even(self):
        with pytest.raises(ShapeError, match="even"):
            patch_merge(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((8, 4))))

    def test_expand_requires_even_channels(self):
        with pytest.raises(ShapeError, match="even"):
            patch_expand(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((3, 6))))

    def test_final_expand_keeps_channels(self, rng):
        x = Tensor(rng.normal(size=(3, 2, 5)))
        out = final_patch_expand(x, 4, Tensor(rng.normal(size=(3, 3 * 16))))
        assert out.shape == (3, 8, 20)

    def test_rescale_dispatch(self, rng):
        x = Tensor(rng.normal(size=(2, 4, 4)))
        assert patch_rescale(x, "merge", Tensor(rng.normal(size=(8, 4)))).shape == (4, 2, 2)
        with pytest.raises(ShapeError, match="unknown"):
            patch_rescale(x, "sideways", Tensor(np.zeros((1, 1))))

    def test_patch_grads(self, rng):
        x = rng.normal(size=(2, 4, 4))
        w = rng.normal(size=(8, 6))
        assert_grads_close(
            lambda xt, wt: T.tensor_sum(T.mul(patch_embed(xt, 2, wt), 1.0)), [x, w]
        )
        wm = rng.normal(size=(8, 4))
        assert_grads_close(
            lambda xt, wt: T.tensor_sum(T.mul(patch_merge(xt, wt), 1.0)), [x, wm]
        )
        we = rng.normal(size=(2, 4))
        assert_grads_close(
            lambda xt, wt: T.tensor_sum(T.mul(patch_expand(xt, wt), 1.0)), [x, we]
        )


class TestOutputHead:
    def test_zero_weights_zero_output(self, rng):
        x = Tensor(rng.normal(size=(3, 4, 4)))
        out = output_head(x, Tensor(np.zeros((3, 2))), Tensor(np.zeros(2)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_bounded(self, rng):
        x = Tensor(rng.normal(0, 2, size=(3, 4, 4)))
        out = output_head(x, Tensor(rng.normal(size=(3, 6))), Tensor(rng.normal(size=(6,))))
        assert out.shape == (6, 4, 4)
        assert (np.abs(out.data) < 1).all()


class TestTruncNormal:
    def test_bounded_and_deterministic(self):
        a = trunc_normal(np.random.default_rng(5), (1000,), std=0.02)
        b = trunc_normal(np.random.default_rng(5), (1000,), std=0.02)
        assert (np.abs(a) <= 0.04 + 1e-9).all()
        np.testing.assert_array_equal(a, b)


class TestFullBlockGradient32:
    def test_ressb_input_gradient_fd_f32(self, rng):
        # 32-bit whole-block check: the float32 gradient matches the true
        # derivative (finite differences on a float64 twin) within 1e-3
        import dataclasses

        from conftest import fd_gradient
        from icemamba.blocks import ressb_forward
        from icemamba.tensor import Tensor, backward

        def cast_tree(obj, dtype):
            if isinstance(obj, Tensor):
                return Tensor(obj.data.astype(dtype), requires_grad=obj.requires_grad)
            if isinstance(obj, tuple):
                return tuple(cast_tree(o, dtype) for o in obj)
            if dataclasses.is_dataclass(obj):
                return type(obj)(
                    **{
                        f.name: cast_tree(getattr(obj, f.name), dtype)
                        for f in dataclasses.fields(obj)
                    }
                )
            return obj

        c = 2
        w32 = make_ressb(rng, c, n=2, dtype=np.float32)
        w64 = cast_tree(w32, np.float64)
        x = rng.normal(size=(c, 4, 4))
        probe = rng.normal(size=(c, 4, 4))

        t32 = Tensor(x.astype(np.float32), requires_grad=True)
        out = T.tensor_sum(T.mul(ressb_forward(t32, w32), Tensor(probe.astype(np.float32))))
        backward(out)

        def loss64(arr):
            t = Tensor(np.asarray(arr, dtype=np.float64))
            return float(T.tensor_sum(T.mul(ressb_forward(t, w64), Tensor(probe))).data)

        ref = fd_gradient(loss64, [x], 0, eps=1e-6)
        scale = max(np.abs(ref).max(), 1e-6)
        assert np.abs(t32.grad.astype(np.float64) - ref).max() / scale < 1e-3
