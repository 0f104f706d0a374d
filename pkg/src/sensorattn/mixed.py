"""Mixed convolution / self-attention for radar query maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    ConvKernel,
    DimensionError,
    Tensor,
    concat,
    conv2d_same,
    linear,
    matmul,
    permute,
    reshape,
    softmax_last,
    take,
)

DEFAULT_HEADS = 4
DEFAULT_HEAD_DIM = 8


@dataclass(frozen=True)
class MixedAttentionParams:
    proj1: ConvKernel
    proj2: ConvKernel
    proj3: ConvKernel
    fcn_w: Tensor  # [3 * n_mix * d_head, N_q]
    fcn_b: Tensor  # [N_q]
    out_w: Tensor  # [n_mix * d_head, N_q]
    out_b: Tensor  # [N_q]
    alphas: Tensor  # [2]: (conv, attention)
    n_mix: int = DEFAULT_HEADS

    def __post_init__(self):
        if self.n_mix < 1:
            raise ValueError("n_mix must be >= 1")
        if self.proj1.out_channels % self.n_mix:
            raise ValueError(f"{self.proj1.out_channels} projection channels not divisible by {self.n_mix} heads")

    @property
    def head_dim(self) -> int:
        return self.proj1.out_channels // self.n_mix

    @classmethod
    def init(cls, n_q: int, rng: np.random.Generator, n_mix: int = DEFAULT_HEADS, head_dim: int = DEFAULT_HEAD_DIM):
        width = n_mix * head_dim
        projs = [ConvKernel.init(1, n_q, width, rng) for _ in range(3)]
        return cls(
            *projs,
            fcn_w=Tensor(rng.normal(0.0, 1.0 / math.sqrt(3 * width), (3 * width, n_q))),
            fcn_b=Tensor(np.zeros(n_q)),
            out_w=Tensor(rng.normal(0.0, 1.0 / math.sqrt(width), (width, n_q))),
            out_b=Tensor(np.zeros(n_q)),
            alphas=Tensor([0.5, 0.5]),
            n_mix=n_mix,
        )


@dataclass(frozen=True)
class MiddleMaps:
    x1: Tensor
    x2: Tensor
    x3: Tensor


def qkv_project(q: Tensor, p: MixedAttentionParams) -> MiddleMaps:
    if q.ndim != 3:
        raise DimensionError(f"mixed attention expects [N_q x H x W], got {q.shape}")
    return MiddleMaps(conv2d_same(q, p.proj1), conv2d_same(q, p.proj2), conv2d_same(q, p.proj3))


def _tokens(x: Tensor) -> Tensor:
    c, h, w = x.shape
    return permute(reshape(x, (c, h * w)), (1, 0))


def _to_map(tokens: Tensor, h: int, w: int) -> Tensor:
    return reshape(permute(tokens, (1, 0)), (tokens.shape[1], h, w))


def conv_branch(m: MiddleMaps, p: MixedAttentionParams) -> Tensor:
    _, h, w = m.x1.shape
    stacked = concat([m.x1, m.x2, m.x3], axis=0)
    return _to_map(linear(_tokens(stacked), p.fcn_w, p.fcn_b), h, w)


def _heads(x: Tensor, n_mix: int) -> Tensor:
    tok = _tokens(x)
    hw, width = tok.shape
    return permute(reshape(tok, (hw, n_mix, width // n_mix)), (1, 0, 2))


def head_attention(m: MiddleMaps, p: MixedAttentionParams) -> Tensor:
    """Per-head token attention [n_mix x HW x HW], rows sum to one."""
    q, k = _heads(m.x1, p.n_mix), _heads(m.x2, p.n_mix)
    scores = matmul(q, permute(k, (0, 2, 1))) * (1.0 / math.sqrt(p.head_dim))
    return softmax_last(scores)


def attention_branch(m: MiddleMaps, p: MixedAttentionParams) -> Tensor:
    _, h, w = m.x1.shape
    attn = head_attention(m, p)
    ctx = matmul(attn, _heads(m.x3, p.n_mix))  # [n_mix, HW, d_head]
    merged = reshape(permute(ctx, (1, 0, 2)), (h * w, p.n_mix * p.head_dim))
    return _to_map(linear(merged, p.out_w, p.out_b), h, w)


def mixed_forward(q: Tensor, p: MixedAttentionParams) -> Tensor:
    m = qkv_project(q, p)
    return take(p.alphas, 0) * conv_branch(m, p) + take(p.alphas, 1) * attention_branch(m, p)
