import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sensorattn import dual, oracles
from sensorattn.gradcheck import gradcheck
from sensorattn.tensor import ConvKernel, Tensor, parameters, with_parameters

small = st.integers(1, 3)


def random_params(n_q, rng, alpha, beta):
    p = dual.DualAttentionParams.init(n_q, rng, alpha=alpha, beta=beta)
    convs = [ConvKernel(3, Tensor(rng.uniform(-1, 1, (n_q, n_q, 3, 3))), Tensor(rng.uniform(-1, 1, n_q))) for _ in range(3)]
    return dual.DualAttentionParams(*convs, p.alpha, p.beta)


def test_init_is_residual_pass_through(rng):
    p = dual.DualAttentionParams.init(4, rng)
    assert p.alpha.item() == 0.0 and p.beta.item() == 0.0
    assert len({id(p.conv_q1), id(p.conv_q2), id(p.conv_q3)}) == 3
    assert not np.array_equal(p.conv_q1.weights.data, p.conv_q2.weights.data)


def test_spatial_map_of_zeros_is_uniform():
    z = Tensor(np.zeros((3, 2, 2)))
    np.testing.assert_array_equal(dual.spatial_map(z, z).data, np.full((4, 4), 0.25))


def test_spatial_map_single_channel_hand_value():
    q = Tensor([[[1.0, 0.0]]])
    s = dual.spatial_map(q, q).data
    e = math.e
    np.testing.assert_allclose(s[0], [e / (e + 1), 1 / (e + 1)], rtol=0, atol=1e-15)
    np.testing.assert_allclose(s[1], [0.5, 0.5], rtol=0, atol=1e-15)


def test_spatial_map_random_2x2x2_matches_loop_oracle(rng):
    q1, q2 = rng.uniform(-1, 1, (2, 2, 2)), rng.uniform(-1, 1, (2, 2, 2))
    assert np.max(np.abs(dual.spatial_map(Tensor(q1), Tensor(q2)).data - oracles.spatial_map(q1, q2))) < 1e-12


def test_spatial_branch_alpha_zero_is_identity(rng):
    q = Tensor(rng.normal(size=(3, 2, 3)))
    np.testing.assert_array_equal(dual.spatial_branch(q, random_params(3, rng, 0.0, 0.7)).data, q.data)


def test_spatial_branch_uniform_mixing_of_constant_values(rng):
    # zero q1/q2 kernels make S uniform; a zero-weight q3 kernel with bias c makes V constant c
    n, c = 2, 0.625
    zero = ConvKernel(3, Tensor(np.zeros((n, n, 3, 3))), Tensor(np.zeros(n)))
    const = ConvKernel(3, Tensor(np.zeros((n, n, 3, 3))), Tensor(np.full(n, c)))
    p = dual.DualAttentionParams(zero, zero, const, Tensor(1.0), Tensor(0.0))
    q = Tensor(rng.normal(size=(n, 3, 3)))
    np.testing.assert_allclose(dual.spatial_branch(q, p).data, q.data + c, rtol=0, atol=1e-15)


def test_spatial_branch_random_matches_loop_oracle(rng):
    q = rng.uniform(-1, 1, (2, 2, 2))
    p = random_params(2, rng, 0.5, 0.0)
    out = dual.spatial_branch(Tensor(q), p).data
    assert np.max(np.abs(out - oracles.spatial_branch(q, oracles.dual_params(p)))) < 1e-12


def test_channel_branch_beta_zero_is_identity(rng):
    q = Tensor(rng.normal(size=(3, 2, 2)))
    np.testing.assert_array_equal(dual.channel_branch(q, random_params(3, rng, 0.3, 0.0)).data, q.data)


def test_identical_channels_give_uniform_channel_map(rng):
    plane = rng.normal(size=(2, 3))
    q = Tensor(np.stack([plane] * 4))
    np.testing.assert_allclose(dual.channel_map(q).data, np.full((4, 4), 0.25), rtol=0, atol=1e-15)


def test_channel_branch_random_3x2x2_matches_loop_oracle(rng):
    q = rng.uniform(-1, 1, (3, 2, 2))
    p = random_params(3, rng, 0.0, 1.0)
    out = dual.channel_branch(Tensor(q), p).data
    assert np.max(np.abs(out - oracles.channel_branch(q, oracles.dual_params(p)))) < 1e-12


@given(small, small, small, st.integers(0, 2**32 - 1))
def test_zero_gates_give_twice_the_input(n, h, w, seed):
    r = np.random.default_rng(seed)
    q = Tensor(r.normal(size=(n, h, w)))
    np.testing.assert_array_equal(dual.dual_forward(q, random_params(n, r, 0.0, 0.0)).data, 2.0 * q.data)


@pytest.mark.parametrize("n", [1, 4])
@pytest.mark.parametrize("hw", [(1, 1), (1, 3), (3, 1), (3, 3)])
def test_dual_forward_preserves_shape(n, hw, rng):
    q = Tensor(rng.normal(size=(n, *hw)))
    assert dual.dual_forward(q, random_params(n, rng, 0.4, -0.2)).shape == (n, *hw)


@given(small, small, small, st.integers(0, 2**32 - 1))
def test_attention_maps_are_row_stochastic(n, h, w, seed):
    r = np.random.default_rng(seed)
    q1, q2 = Tensor(r.normal(0, 2, (n, h, w))), Tensor(r.normal(0, 2, (n, h, w)))
    for m in (dual.spatial_map(q1, q2).data, dual.channel_map(q1).data):
        assert np.all(np.abs(m.sum(axis=1) - 1.0) < 1e-12)
        assert np.all(m > 0)


@given(st.integers(2, 4), small, small, st.integers(0, 2**32 - 1))
def test_channel_map_is_permutation_equivariant(n, h, w, seed):
    r = np.random.default_rng(seed)
    q = r.normal(size=(n, h, w))
    perm = r.permutation(n)
    c = dual.channel_map(Tensor(q)).data
    c_perm = dual.channel_map(Tensor(q[perm])).data
    np.testing.assert_allclose(c_perm, c[np.ix_(perm, perm)], rtol=0, atol=1e-15)


@given(small, small, small, st.integers(0, 2**32 - 1))
def test_dual_forward_matches_loop_oracle(n, h, w, seed):
    r = np.random.default_rng(seed)
    q = r.uniform(-1, 1, (n, h, w))
    p = random_params(n, r, r.uniform(-1, 1), r.uniform(-1, 1))
    assert np.max(np.abs(dual.dual_forward(Tensor(q), p).data - oracles.dual_forward(q, oracles.dual_params(p)))) < 1e-12


def test_spatial_map_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        dual.spatial_map(Tensor(np.zeros((2, 2, 2))), Tensor(np.zeros((2, 2, 3))))


def test_dual_forward_gradcheck():
    report = gradcheck("dual_forward", trials=20)
    assert report.passed, report.line()


def test_parameters_cover_kernels_and_gates(rng):
    p = dual.DualAttentionParams.init(2, rng)
    leaves = parameters(p)
    assert len(leaves) == 8
    doubled = with_parameters(p, [Tensor(x.data * 2) for x in leaves])
    np.testing.assert_array_equal(doubled.conv_q3.bias.data, p.conv_q3.bias.data * 2)
