import numpy as np
import pytest

from maskmix import autograd as ag
from maskmix.errors import LayoutMismatchError, ShapeError
from maskmix.mask_network import (Reenactor, init_mask_network, mask_active, mask_forward, mix,
                                  mix_tensors)
from maskmix.style_space import StyleCode, builtin_layout, delta

import oracles


@pytest.fixture
def toy():
    return builtin_layout("toy")


def _code(layout, rng):
    return StyleCode(rng.normal(size=layout.total_dims), layout)


def test_toy_shapes(toy):
    params = init_mask_network(toy, hidden_width=16, seed=0)
    assert len(params.subnets) == 4
    for net in params.subnets:
        assert net.W1.shape == (16, 16) and net.W2.shape == (16, 16)
        assert not net.b1.any() and not net.b2.any()


def test_default_hidden_width_is_layer_width():
    layout = builtin_layout("stylegan2-ffhq")
    params = init_mask_network(layout, seed=0)
    assert [n.hidden for n in params.subnets] == [l.channels for l in layout.active_layers]


def test_glorot_bounds(toy):
    params = init_mask_network(toy, hidden_width=8, seed=3)
    for net in params.subnets:
        assert np.abs(net.W1).max() <= np.sqrt(6 / (16 + 8))
        assert np.abs(net.W2).max() <= np.sqrt(6 / (8 + 16))


def test_init_deterministic(toy):
    a, b = init_mask_network(toy, seed=5), init_mask_network(toy, seed=5)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.arrays(), b.arrays()))
    c = init_mask_network(toy, seed=6)
    assert a.arrays()[0].tobytes() != c.arrays()[0].tobytes()


def test_zero_difference_gives_half(toy):
    params = init_mask_network(toy, seed=0)
    m = mask_forward(params, StyleCode(np.zeros(64), toy))
    np.testing.assert_array_equal(m, 0.5)


def test_zero_params_give_half(toy, rng):
    params = init_mask_network(toy, seed=0)
    params = params.with_arrays([np.zeros_like(a) for a in params.arrays()])
    np.testing.assert_array_equal(mask_forward(params, _code(toy, rng)), 0.5)


@pytest.mark.parametrize("per_layer", [True, False])
def test_mask_matches_straight_line_formula(toy, rng, per_layer):
    params = init_mask_network(toy, seed=1, per_layer=per_layer)
    params = params.with_arrays([a + rng.normal(scale=0.3, size=a.shape) for a in params.arrays()])
    for _ in range(20):
        ds = _code(toy, rng)
        got = mask_forward(params, ds)
        expected = oracles.mask(toy, params.arrays(), per_layer, ds.values[None, toy.active_index])[0]
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)
        assert np.all((got > 0) & (got < 1))


def test_mask_rejects_foreign_layout(rng):
    params = init_mask_network(builtin_layout("toy"), seed=0)
    big = builtin_layout("stylegan2-ffhq")
    with pytest.raises(LayoutMismatchError):
        mask_forward(params, StyleCode(np.zeros(big.total_dims), big))


def test_mask_permutation_equivariance(toy, rng):
    params = init_mask_network(toy, seed=2)
    ds = _code(toy, rng)
    base = mask_forward(params, ds)
    perms = [rng.permutation(16) for _ in range(4)]
    hidden = [rng.permutation(16) for _ in range(4)]
    arrays = []
    for net, p, q in zip(params.subnets, perms, hidden):
        arrays += [net.W1[q][:, p], net.b1[q], net.W2[p][:, q], net.b2[p]]
    permuted = params.with_arrays(arrays)
    ds_perm = ds.values.copy()
    for i, p in enumerate(perms):
        ds_perm[16 * i:16 * i + 16] = ds.values[16 * i:16 * i + 16][p]
    out = mask_forward(permuted, StyleCode(ds_perm, toy))
    for i, p in enumerate(perms):
        np.testing.assert_allclose(out[16 * i:16 * i + 16], base[16 * i:16 * i + 16][p], atol=1e-14)


def test_mix_extremes():
    layout = builtin_layout("stylegan2-ffhq")
    rng = np.random.default_rng(0)
    s, t = _code(layout, rng), _code(layout, rng)
    inactive = np.setdiff1d(np.arange(layout.total_dims), layout.active_index)
    zero = mix(s, t, np.zeros(layout.active_dims)).values
    one = mix(s, t, np.ones(layout.active_dims)).values
    np.testing.assert_array_equal(zero, s.values)
    np.testing.assert_array_equal(one[layout.active_index], t.values[layout.active_index])
    np.testing.assert_array_equal(one[inactive], s.values[inactive])
    same = mix(s, s, rng.uniform(size=layout.active_dims)).values
    np.testing.assert_allclose(same, s.values, rtol=1e-15, atol=1e-15)


def test_mix_matches_elementwise_oracle(toy, rng):
    for _ in range(20):
        s, t, m = _code(toy, rng), _code(toy, rng), rng.uniform(size=64)
        got = mix(s, t, m).values
        assert got.tobytes() == oracles.mix(s.values, t.values, m, toy.active_index).tobytes()


def test_mix_is_convex_per_channel(toy, rng):
    s, t, m = _code(toy, rng), _code(toy, rng), rng.uniform(size=64)
    r = mix(s, t, m).values
    assert np.all(r >= np.minimum(s.values, t.values) - 1e-15)
    assert np.all(r <= np.maximum(s.values, t.values) + 1e-15)


def test_mix_gradient_wrt_mask(toy, rng):
    s, t = rng.normal(size=64), rng.normal(size=64)
    m = ag.Tensor(rng.uniform(size=64), requires_grad=True)
    w = rng.normal(size=64)
    ag.backward(ag.sum(mix_tensors(s, t, m, toy) * w))
    np.testing.assert_allclose(m.grad, w * (t - s), rtol=1e-14)


def test_mix_rejects_wrong_mask_size(toy):
    s = StyleCode(np.zeros(64), toy)
    with pytest.raises(ShapeError):
        mix(s, s, np.zeros(63))


def test_reenactor_uses_the_live_weights(toy, rng):
    params = init_mask_network(toy, seed=0)
    weights = [ag.Tensor(a, requires_grad=True) for a in params.arrays()]
    model = Reenactor(params, toy, weights=weights)
    s, t = rng.normal(size=(2, 64)), rng.normal(size=(2, 64))
    ag.backward(ag.sum(model.mask(s, t)))
    assert all(np.any(w.grad) for w in weights[2::4])


def test_reenactor_rotation_identity_is_plain_mix(toy, rng):
    params = init_mask_network(toy, seed=0)
    s, t = rng.normal(size=(3, 64)), rng.normal(size=(3, 64))
    plain, _ = Reenactor(params, toy).reenact(s, t)
    rotated, _ = Reenactor(params, toy, rotation=np.eye(64)).reenact(s, t)
    np.testing.assert_allclose(plain.data, rotated.data, atol=1e-14)


def test_mask_active_rejects_wrong_width(toy):
    params = init_mask_network(toy, seed=0)
    with pytest.raises(ShapeError):
        mask_active(params, toy, np.zeros(10))


def test_delta_feeds_mask(toy, rng):
    params = init_mask_network(toy, seed=0)
    s, t = _code(toy, rng), _code(toy, rng)
    direct = Reenactor(params, toy).mask(s.values, t.values).data
    np.testing.assert_allclose(mask_forward(params, delta(s, t)), direct, atol=1e-15)
