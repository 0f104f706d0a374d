"""Dual attention for camera query maps.

A spatial branch mixes positions through a (HW x HW) affinity built from two
3x3 convolutions of the query, and a channel branch mixes the N_q channels
through an (N_q x N_q) affinity of the raw query. Both are residual, gated by
learnable scalars, and summed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    ConvKernel,
    DimensionError,
    Tensor,
    conv2d_same,
    matmul,
    reshape,
    softmax_last,
    transpose,
)


@dataclass(frozen=True)
class DualAttentionParams:
    conv_q1: ConvKernel
    conv_q2: ConvKernel
    conv_q3: ConvKernel
    alpha: Tensor
    beta: Tensor

    @classmethod
    def init(cls, n_q: int, rng: np.random.Generator, alpha: float = 0.0, beta: float = 0.0):
        kernels = [ConvKernel.init(3, n_q, n_q, rng) for _ in range(3)]
        return cls(*kernels, alpha=Tensor(alpha), beta=Tensor(beta))


def _flatten(q: Tensor) -> Tensor:
    n, h, w = q.shape
    return reshape(q, (n, h * w))


def spatial_map(q1: Tensor, q2: Tensor) -> Tensor:
    """Row-stochastic (HW x HW) map: S[m, n] = softmax_n <q1[:, m], q2[:, n]>."""
    if q1.shape != q2.shape or q1.ndim != 3:
        raise DimensionError(f"spatial_map needs equal rank-3 shapes, got {q1.shape} and {q2.shape}")
    return softmax_last(matmul(transpose(_flatten(q1)), _flatten(q2)))


def channel_map(q: Tensor) -> Tensor:
    """Row-stochastic (N_q x N_q) map: C[m, n] = softmax_n <q[m], q[n]>."""
    flat = _flatten(q)
    return softmax_last(matmul(flat, transpose(flat)))


def spatial_branch(q: Tensor, p: DualAttentionParams) -> Tensor:
    s = spatial_map(conv2d_same(q, p.conv_q1), conv2d_same(q, p.conv_q2))
    v = _flatten(conv2d_same(q, p.conv_q3))
    # out[:, n] = sum_m S[m, n] v[:, m]
    mixed = reshape(matmul(v, s), q.shape)
    return p.alpha * mixed + q


def channel_branch(q: Tensor, p: DualAttentionParams) -> Tensor:
    c = channel_map(q)
    mixed = reshape(matmul(transpose(c), _flatten(q)), q.shape)
    return p.beta * mixed + q


def dual_forward(q: Tensor, p: DualAttentionParams) -> Tensor:
    if q.ndim != 3:
        raise DimensionError(f"dual attention expects [N_q x H x W], got {q.shape}")
    return spatial_branch(q, p) + channel_branch(q, p)
