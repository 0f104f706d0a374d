import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sensorattn import mixed, oracles
from sensorattn.gradcheck import gradcheck
from sensorattn.tensor import ConvKernel, Tensor, parameters, with_parameters

small = st.integers(1, 3)


def random_params(n_q, rng, n_mix=2, head_dim=2, alphas=None):
    p = mixed.MixedAttentionParams.init(n_q, rng, n_mix=n_mix, head_dim=head_dim)
    p = with_parameters(p, [Tensor(rng.uniform(-1, 1, t.shape)) for t in parameters(p)])
    if alphas is not None:
        p = mixed.MixedAttentionParams(p.proj1, p.proj2, p.proj3, p.fcn_w, p.fcn_b, p.out_w, p.out_b, Tensor(alphas), p.n_mix)
    return p


def maps_of(x1, x2, x3):
    return mixed.MiddleMaps(Tensor(x1), Tensor(x2), Tensor(x3))


def test_init_defaults(rng):
    p = mixed.MixedAttentionParams.init(5, rng)
    assert p.n_mix == 4 and p.head_dim == 8
    np.testing.assert_array_equal(p.alphas.data, [0.5, 0.5])


def test_head_count_must_divide_width(rng):
    p = mixed.MixedAttentionParams.init(2, rng, n_mix=2, head_dim=3)
    with pytest.raises(ValueError):
        mixed.MixedAttentionParams(p.proj1, p.proj2, p.proj3, p.fcn_w, p.fcn_b, p.out_w, p.out_b, p.alphas, n_mix=4)
    with pytest.raises(ValueError):
        mixed.MixedAttentionParams.init(2, rng, n_mix=0)


def test_identity_projection_reproduces_query(rng):
    n = 4
    eye = ConvKernel(1, Tensor(np.eye(n).reshape(n, n, 1, 1)), Tensor(np.zeros(n)))
    base = mixed.MixedAttentionParams.init(n, rng, n_mix=2, head_dim=2)
    p = mixed.MixedAttentionParams(eye, eye, eye, base.fcn_w, base.fcn_b, base.out_w, base.out_b, base.alphas, 2)
    q = Tensor(rng.normal(size=(n, 2, 3)))
    m = mixed.qkv_project(q, p)
    for x in (m.x1, m.x2, m.x3):
        np.testing.assert_array_equal(x.data, q.data)


def test_zero_input_gives_bias_maps(rng):
    p = random_params(3, rng)
    m = mixed.qkv_project(Tensor(np.zeros((3, 2, 2))), p)
    for x, k in zip((m.x1, m.x2, m.x3), (p.proj1, p.proj2, p.proj3)):
        np.testing.assert_array_equal(x.data, np.broadcast_to(k.bias.data[:, None, None], x.shape))


def test_qkv_project_matches_loop_oracle(rng):
    q = rng.uniform(-1, 1, (3, 2, 3))
    p = random_params(3, rng)
    m = mixed.qkv_project(Tensor(q), p)
    for got, want in zip((m.x1, m.x2, m.x3), oracles.qkv_project(q, oracles.mixed_params(p))):
        assert np.max(np.abs(got.data - want)) < 1e-12


def test_zero_fcn_gives_constant_bias(rng):
    p = random_params(3, rng)
    p = mixed.MixedAttentionParams(
        p.proj1, p.proj2, p.proj3, Tensor(np.zeros(p.fcn_w.shape)), Tensor([0.1, 0.2, 0.3]), p.out_w, p.out_b, p.alphas, p.n_mix
    )
    out = mixed.conv_branch(mixed.qkv_project(Tensor(rng.normal(size=(3, 2, 2))), p), p).data
    np.testing.assert_array_equal(out, np.broadcast_to(np.array([0.1, 0.2, 0.3])[:, None, None], (3, 2, 2)))


@pytest.mark.parametrize("n", [2, 4])
def test_conv_branch_shape(n, rng):
    p = random_params(n, rng)
    assert mixed.conv_branch(mixed.qkv_project(Tensor(rng.normal(size=(n, 3, 2))), p), p).shape == (n, 3, 2)


def test_conv_branch_matches_loop_oracle(rng):
    p = random_params(2, rng)
    m = mixed.qkv_project(Tensor(rng.uniform(-1, 1, (2, 3, 3))), p)
    ref = oracles.conv_branch(m.x1.data, m.x2.data, m.x3.data, oracles.mixed_params(p))
    assert np.max(np.abs(mixed.conv_branch(m, p).data - ref)) < 1e-12


def test_single_token_attends_to_itself(rng):
    p = random_params(3, rng)
    width = p.n_mix * p.head_dim
    x1, x2, x3 = (rng.normal(size=(width, 1, 1)) for _ in range(3))
    m = maps_of(x1, x2, x3)
    np.testing.assert_array_equal(mixed.head_attention(m, p).data, np.ones((p.n_mix, 1, 1)))
    expected = x3[:, 0, 0] @ p.out_w.data + p.out_b.data
    np.testing.assert_allclose(mixed.attention_branch(m, p).data[:, 0, 0], expected, rtol=0, atol=1e-15)


def test_equal_keys_average_the_values(rng):
    p = random_params(2, rng)
    width, h, w = p.n_mix * p.head_dim, 2, 3
    key = rng.normal(size=width)
    x2 = np.broadcast_to(key[:, None, None], (width, h, w)).copy()
    x1, x3 = rng.normal(size=(width, h, w)), rng.normal(size=(width, h, w))
    m = maps_of(x1, x2, x3)
    np.testing.assert_allclose(mixed.head_attention(m, p).data, 1.0 / (h * w), rtol=0, atol=1e-15)
    mean_value = x3.reshape(width, -1).mean(axis=1) @ p.out_w.data + p.out_b.data
    out = mixed.attention_branch(m, p).data
    np.testing.assert_allclose(out, np.broadcast_to(mean_value[:, None, None], out.shape), rtol=0, atol=1e-14)


def test_attention_2x2_single_head_matches_loop_oracle(rng):
    p = random_params(2, rng, n_mix=1, head_dim=3)
    m = mixed.qkv_project(Tensor(rng.uniform(-1, 1, (2, 2, 2))), p)
    ref = oracles.attention_branch(m.x1.data, m.x2.data, m.x3.data, oracles.mixed_params(p))
    assert np.max(np.abs(mixed.attention_branch(m, p).data - ref)) < 1e-12


@pytest.mark.parametrize("alphas, branch", [((1.0, 0.0), "conv"), ((0.0, 1.0), "attention")])
def test_one_hot_alphas_select_a_branch(alphas, branch, rng):
    p = random_params(3, rng, alphas=alphas)
    q = Tensor(rng.normal(size=(3, 2, 3)))
    m = mixed.qkv_project(q, p)
    expected = mixed.conv_branch(m, p) if branch == "conv" else mixed.attention_branch(m, p)
    np.testing.assert_array_equal(mixed.mixed_forward(q, p).data, expected.data)


@given(small, small, small, st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_head_attention_rows_are_distributions(n, h, w, n_mix, seed):
    r = np.random.default_rng(seed)
    p = random_params(n, r, n_mix=n_mix)
    a = mixed.head_attention(mixed.qkv_project(Tensor(r.normal(0, 2, (n, h, w))), p), p).data
    assert np.all(np.abs(a.sum(axis=-1) - 1.0) < 1e-12)
    assert np.all(a > 0)


@given(small, small, small, st.integers(0, 2**32 - 1))
def test_output_is_linear_in_alphas(n, h, w, seed):
    r = np.random.default_rng(seed)
    q = Tensor(r.normal(size=(n, h, w)))
    base = random_params(n, r)
    a, b = r.normal(size=2), r.normal(size=2)

    def run(alphas):
        p = mixed.MixedAttentionParams(
            base.proj1, base.proj2, base.proj3, base.fcn_w, base.fcn_b, base.out_w, base.out_b, Tensor(alphas), base.n_mix
        )
        return mixed.mixed_forward(q, p).data

    np.testing.assert_allclose(run(a - 3.0 * b), run(a) - 3.0 * run(b), rtol=0, atol=1e-12)


@given(small, small, small, st.integers(0, 2**32 - 1))
def test_attention_branch_is_token_permutation_equivariant(n, h, w, seed):
    r = np.random.default_rng(seed)
    p = random_params(n, r)
    width = p.n_mix * p.head_dim
    xs = [r.normal(size=(width, h, w)) for _ in range(3)]
    perm = r.permutation(h * w)

    def shuffled(x):
        return x.reshape(x.shape[0], -1)[:, perm].reshape(x.shape)

    out = mixed.attention_branch(maps_of(*xs), p).data
    out_p = mixed.attention_branch(maps_of(*(shuffled(x) for x in xs)), p).data
    np.testing.assert_allclose(out_p, shuffled(out), rtol=0, atol=1e-13)


@given(small, small, small, st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_mixed_forward_matches_loop_oracle(n, h, w, n_mix, seed):
    r = np.random.default_rng(seed)
    p = random_params(n, r, n_mix=n_mix, head_dim=int(r.integers(1, 4)))
    q = r.uniform(-1, 1, (n, h, w))
    out = mixed.mixed_forward(Tensor(q), p).data
    assert np.max(np.abs(out - oracles.mixed_forward(q, oracles.mixed_params(p)))) < 1e-12


def test_mixed_forward_gradcheck():
    report = gradcheck("mixed_forward", trials=20)
    assert report.passed, report.line()
