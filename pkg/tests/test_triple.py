import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sensorattn import oracles, triple
from sensorattn.gradcheck import gradcheck
from sensorattn.tensor import ConvKernel, Tensor

small = st.integers(1, 3)


def random_params(rng, alphas=None):
    convs = [ConvKernel(5, Tensor(rng.uniform(-1, 1, (1, 1, 5, 5))), Tensor(rng.uniform(-1, 1, 1))) for _ in range(3)]
    alphas = rng.uniform(-1, 1, 3) if alphas is None else alphas
    return triple.TripleAttentionParams(
        *convs, bn_gamma=Tensor(rng.uniform(0.5, 1.5, 3)), bn_beta=Tensor(rng.uniform(-1, 1, 3)), alphas=Tensor(alphas)
    )


def delta_params(alphas=(1 / 3, 1 / 3, 1 / 3)):
    w = np.zeros((1, 1, 5, 5))
    w[0, 0, 2, 2] = 1.0
    convs = [ConvKernel(5, Tensor(w), Tensor([0.0])) for _ in range(3)]
    return triple.TripleAttentionParams(*convs, bn_gamma=Tensor(np.ones(3)), bn_beta=Tensor(np.zeros(3)), alphas=Tensor(alphas))


def test_init_alphas_sum_to_one(rng):
    p = triple.TripleAttentionParams.init(rng)
    np.testing.assert_allclose(p.alphas.data, [1 / 3] * 3)
    assert p.alphas.data.sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("branch", triple.BRANCHES)
def test_constant_query_gives_half_gate(branch):
    c = 0.8
    q = Tensor(np.full((2, 3, 3), c))
    np.testing.assert_allclose(triple.branch_gate(q, branch, delta_params()).data, 0.5, atol=1e-15)
    np.testing.assert_allclose(triple.branch_forward(q, branch, delta_params()).data, 0.5 * c, atol=1e-15)


def test_constant_query_uniform_alphas_halves_input():
    q = Tensor(np.full((3, 2, 4), 1.7))
    np.testing.assert_allclose(triple.triple_forward(q, delta_params()).data, 0.5 * q.data, atol=1e-15)


@given(small, small, small, st.integers(0, 2**32 - 1))
def test_gates_lie_strictly_inside_unit_interval(n, h, w, seed):
    r = np.random.default_rng(seed)
    q = Tensor(r.normal(size=(n, h, w)))
    p = random_params(r)
    for branch in triple.BRANCHES:
        g = triple.branch_gate(q, branch, p).data
        assert g.shape[0] == 1
        assert np.all(g > 0) and np.all(g < 1)


def test_branch_pools_the_excluded_axis(rng):
    q = Tensor(rng.normal(size=(2, 3, 4)))
    p = random_params(rng)
    assert triple.branch_gate(q, "HW", p).shape == (1, 3, 4)
    assert triple.branch_gate(q, "NH", p).shape == (1, 2, 3)
    assert triple.branch_gate(q, "NW", p).shape == (1, 2, 4)


def test_branch_2x3x3_matches_loop_oracle(rng):
    q = rng.uniform(-1, 1, (2, 3, 3))
    p = random_params(rng)
    for branch in triple.BRANCHES:
        out = triple.branch_forward(Tensor(q), branch, p).data
        assert np.max(np.abs(out - oracles.triple_branch(q, branch, oracles.triple_params(p)))) < 1e-12


@pytest.mark.parametrize("k", range(3))
def test_one_hot_alphas_select_a_branch(k, rng):
    q = Tensor(rng.normal(size=(3, 2, 3)))
    alphas = np.eye(3)[k]
    p = random_params(rng, alphas)
    np.testing.assert_array_equal(triple.triple_forward(q, p).data, triple.branch_forward(q, triple.BRANCHES[k], p).data)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_shape_is_preserved(n, h, w, seed):
    r = np.random.default_rng(seed)
    q = Tensor(r.normal(size=(n, h, w)))
    assert triple.triple_forward(q, random_params(r)).shape == (n, h, w)


@given(small, small, small, st.integers(0, 2**32 - 1))
def test_swapping_h_and_w_swaps_the_side_branches(n, h, w, seed):
    r = np.random.default_rng(seed)
    q = r.normal(size=(n, h, w))
    p = random_params(r)
    swapped = triple.TripleAttentionParams(
        ConvKernel(5, Tensor(np.swapaxes(p.conv_b1.weights.data, 2, 3)), p.conv_b1.bias),
        p.conv_b3,
        p.conv_b2,
        bn_gamma=Tensor(p.bn_gamma.data[[0, 2, 1]]),
        bn_beta=Tensor(p.bn_beta.data[[0, 2, 1]]),
        alphas=Tensor(p.alphas.data[[0, 2, 1]]),
    )
    out = triple.triple_forward(Tensor(q), p).data
    out_t = triple.triple_forward(Tensor(np.swapaxes(q, 1, 2)), swapped).data
    np.testing.assert_allclose(out_t, np.swapaxes(out, 1, 2), rtol=0, atol=1e-14)


@given(small, small, small, st.integers(0, 2**32 - 1))
def test_output_is_linear_in_alphas(n, h, w, seed):
    r = np.random.default_rng(seed)
    q = Tensor(r.normal(size=(n, h, w)))
    base = random_params(r)
    a, b = r.normal(size=3), r.normal(size=3)

    def run(alphas):
        return triple.triple_forward(q, triple.TripleAttentionParams(
            base.conv_b1, base.conv_b2, base.conv_b3, base.bn_gamma, base.bn_beta, Tensor(alphas)
        )).data

    np.testing.assert_allclose(run(a + 2.0 * b), run(a) + 2.0 * run(b), rtol=0, atol=1e-13)


@given(small, small, small, st.integers(0, 2**32 - 1))
def test_triple_forward_matches_loop_oracle(n, h, w, seed):
    r = np.random.default_rng(seed)
    q = r.uniform(-1, 1, (n, h, w))
    p = random_params(r)
    out = triple.triple_forward(Tensor(q), p).data
    assert np.max(np.abs(out - oracles.triple_forward(q, oracles.triple_params(p)))) < 1e-12


def test_rank_must_be_three():
    with pytest.raises(ValueError):
        triple.branch_forward(Tensor(np.zeros((2, 2))), "HW", delta_params())


def test_triple_forward_gradcheck():
    report = gradcheck("triple_forward", trials=20)
    assert report.passed, report.line()
