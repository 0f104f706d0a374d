"""Triple attention for LiDAR query maps.

Each branch rotates the query so that one pair of axes is trailing, max-pools
the remaining axis to one, and turns the pooled 2D map into a sigmoid gate
via 5x5 conv + batch norm. The gate multiplies the query (broadcast over the
pooled axis). Branch outputs are combined with learnable weights.

Branch layouts for a query [N_q, H, W]:

    HW: [N_q, H, W]  pool N_q
    NH: [W, N_q, H]  pool W
    NW: [H, N_q, W]  pool H
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    ConvKernel,
    DimensionError,
    Tensor,
    adaptive_max_pool,
    batchnorm2d,
    conv2d_same,
    permute,
    sigmoid,
    take,
)

BRANCHES = ("HW", "NH", "NW")
BRANCH_AXES = {"HW": (0, 1, 2), "NH": (2, 0, 1), "NW": (1, 0, 2)}
BN_EPS = 1e-5


@dataclass(frozen=True)
class TripleAttentionParams:
    conv_b1: ConvKernel
    conv_b2: ConvKernel
    conv_b3: ConvKernel
    bn_gamma: Tensor  # [3], one per branch
    bn_beta: Tensor  # [3]
    alphas: Tensor  # [3], branch weights

    @classmethod
    def init(cls, rng: np.random.Generator):
        convs = [ConvKernel.init(5, 1, 1, rng) for _ in range(3)]
        return cls(*convs, bn_gamma=Tensor(np.ones(3)), bn_beta=Tensor(np.zeros(3)), alphas=Tensor(np.full(3, 1.0 / 3.0)))

    def conv(self, branch: str) -> ConvKernel:
        return (self.conv_b1, self.conv_b2, self.conv_b3)[BRANCHES.index(branch)]


def branch_gate(q: Tensor, branch: str, p: TripleAttentionParams) -> Tensor:
    """Sigmoid gate in the branch's permuted layout, leading dim 1."""
    if q.ndim != 3:
        raise DimensionError(f"triple attention expects [N_q x H x W], got {q.shape}")
    i = BRANCHES.index(branch)
    x = permute(q, BRANCH_AXES[branch])
    pooled = adaptive_max_pool(x, x.shape[1:])
    z = conv2d_same(pooled, p.conv(branch))
    z = batchnorm2d(z, take(p.bn_gamma, slice(i, i + 1)), take(p.bn_beta, slice(i, i + 1)), BN_EPS)
    return sigmoid(z)


def branch_forward(q: Tensor, branch: str, p: TripleAttentionParams) -> Tensor:
    axes = BRANCH_AXES[branch]
    gate = branch_gate(q, branch, p)
    gated = permute(q, axes) * gate
    return permute(gated, np.argsort(axes))


def triple_forward(q: Tensor, p: TripleAttentionParams) -> Tensor:
    out = None
    for i, branch in enumerate(BRANCHES):
        term = take(p.alphas, i) * branch_forward(q, branch, p)
        out = term if out is None else out + term
    return out
