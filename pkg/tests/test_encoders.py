import numpy as np
import pytest

from patchecg.encoders import EncoderConfig, FrozenEncoder, Net1DEncoder, ProjectionEncoder, build_encoder
from patchecg.gradcheck import check_gradients
from patchecg.tensor import ShapeError, Tensor


def small_net1d(dtype=np.float64, seed=0):
    cfg = EncoderConfig(variant="net1d", P=16, D=6, base_filters=4, kernel=4, filter_list=[4, 8])
    return Net1DEncoder(cfg, np.random.default_rng(seed), dtype)


def patches(rng, n, P):
    x = np.stack([rng.standard_normal((n, P)), (rng.random((n, P)) > 0.3).astype(float)], axis=1)
    x[:, 0] *= x[:, 1]
    return x


def test_projection_zero_weights():
    enc = ProjectionEncoder(8, 5, np.random.default_rng(0), np.float64)
    enc.proj.weight.data[:] = 0
    enc.proj.bias.data[:] = 0
    out = enc(Tensor(np.random.default_rng(1).standard_normal((2, 8))))
    np.testing.assert_array_equal(out.data, np.zeros(5))


def test_projection_selector():
    P = 4
    enc = ProjectionEncoder(P, P, np.random.default_rng(0), np.float64)
    enc.proj.weight.data[:] = 0
    enc.proj.weight.data[:P, :] = np.eye(P)  # first P flattened entries are the values row
    enc.proj.bias.data[:] = 0
    values = np.array([0.5, -1.0, 2.0, 3.5])
    out = enc(Tensor(np.stack([values, np.ones(P)])))
    np.testing.assert_array_equal(out.data, values)


def test_projection_weight_gradient_is_outer_product():
    rng = np.random.default_rng(2)
    enc = ProjectionEncoder(8, 3, rng, np.float64)
    x = patches(rng, 5, 8)
    enc(Tensor(x)).sum().backward()
    flat = x.reshape(5, 16)
    np.testing.assert_allclose(enc.proj.weight.grad, flat.sum(axis=0)[:, None] * np.ones((1, 3)), rtol=1e-12)
    np.testing.assert_allclose(enc.proj.bias.grad, np.full(3, 5.0))


def test_projection_gradcheck():
    rng = np.random.default_rng(3)
    enc = ProjectionEncoder(8, 3, rng, np.float64)
    x = Tensor(patches(rng, 4, 8), requires_grad=True)
    coef = rng.standard_normal((4, 3))
    assert check_gradients(lambda: (enc(x) * enc(x) * coef).sum(), enc.parameters() + [x]) <= 1e-3


def test_net1d_gradcheck():
    rng = np.random.default_rng(4)
    enc = small_net1d()
    x = Tensor(patches(rng, 2, 16), requires_grad=True)
    coef = rng.standard_normal((2, 6))
    assert check_gradients(lambda: (enc(x) * coef).sum(), enc.parameters() + [x]) <= 1e-3


def test_net1d_zero_network_returns_final_bias():
    enc = small_net1d()
    for p in enc.parameters():
        p.data[:] = 0
    enc.out.bias.data[:] = np.arange(6.0)
    out = enc(Tensor(patches(np.random.default_rng(5), 3, 16)))
    np.testing.assert_array_equal(out.data, np.tile(np.arange(6.0), (3, 1)))


@pytest.mark.parametrize("variant", ["projection", "net1d"])
def test_missing_patches_identical(variant):
    cfg = EncoderConfig(variant=variant, P=16, D=6, base_filters=4, kernel=4, filter_list=[4])
    enc = build_encoder(cfg, np.random.default_rng(0), np.float64)
    out = enc(Tensor(np.zeros((2, 2, 16)))).data
    assert out[0].tobytes() == out[1].tobytes()


@pytest.mark.parametrize("variant", ["projection", "net1d"])
def test_output_shape(variant):
    cfg = EncoderConfig(variant=variant, P=16, D=7, base_filters=4, kernel=4, filter_list=[4])
    enc = build_encoder(cfg, np.random.default_rng(0))
    assert enc(Tensor(np.zeros((5, 2, 16), np.float32))).shape == (5, 7)
    assert enc(Tensor(np.zeros((2, 16), np.float32))).shape == (7,)
    with pytest.raises(ShapeError):
        enc(Tensor(np.zeros((3, 2, 15), np.float32)))


def test_encoder_is_per_patch():
    rng = np.random.default_rng(6)
    enc = small_net1d()
    x = patches(rng, 4, 16)
    batch = enc(Tensor(x)).data
    for i in range(4):
        np.testing.assert_allclose(enc(Tensor(x[i])).data, batch[i], rtol=1e-12, atol=1e-12)


def test_config_rejects_kernel_longer_than_patch():
    with pytest.raises(ValueError, match="kernel"):
        EncoderConfig(variant="net1d", P=8, kernel=16).validate()
    with pytest.raises(ValueError):
        EncoderConfig(variant="net1d", filter_list=[]).validate()
    with pytest.raises(ValueError):
        EncoderConfig(variant="mlp").validate()


def test_frozen_encoder_interface():
    enc = FrozenEncoder(lambda x: x[:, 0, :3] * 2, P=8, D=3)
    out = enc(Tensor(np.ones((2, 2, 8))))
    np.testing.assert_array_equal(out.data, np.full((2, 3), 2.0))
    assert enc.parameters() == []
