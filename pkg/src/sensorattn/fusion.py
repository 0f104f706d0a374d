"""Query-based multi-sensor fusion.

Reference points (relative xyz in [0, 1]^3) are projected into every camera
view and onto BEV grids, features are bilinearly sampled there (shifted by
learned offsets for LiDAR and radar), and the samples are averaged with
per-query softmax weights read off the featured-attention outputs. The three
modality features are then concatenated and folded back into the queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    DimensionError,
    Linear,
    Tensor,
    add,
    bilinear_gather,
    concat,
    layer_norm,
    mul,
    relu,
    reshape,
    softmax_last,
    stack,
    sum_,
    take,
)

ROTATION_TOL = 1e-10
DEPTH_EPS = 1e-9


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SceneBounds:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ConfigurationError(f"scene bounds must have lo < hi, got {self.lo} / {self.hi}")

    def denormalize(self, refs: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return lo + np.asarray(refs, dtype=np.float64) * (hi - lo)

    def normalize(self, xyz: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return (np.asarray(xyz, dtype=np.float64) - lo) / (hi - lo)


@dataclass(frozen=True)
class CameraModel:
    intrinsics: np.ndarray  # 3x3
    extrinsics: np.ndarray  # 4x4, world -> camera
    image_size: tuple[int, int]  # (H_img, W_img)

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64)
        e = np.asarray(self.extrinsics, dtype=np.float64)
        if k.shape != (3, 3) or e.shape != (4, 4):
            raise ConfigurationError(f"camera matrices must be 3x3 and 4x4, got {k.shape} and {e.shape}")
        if np.any(np.tril(k, -1) != 0) or k[0, 0] <= 0 or k[1, 1] <= 0 or k[2, 2] != 1:
            raise ConfigurationError("intrinsics must be upper-triangular with positive focal lengths")
        r = e[:3, :3]
        if np.max(np.abs(r.T @ r - np.eye(3))) > ROTATION_TOL or abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise ConfigurationError("extrinsic rotation block is not a proper rotation")
        if np.any(e[3] != (0, 0, 0, 1)):
            raise ConfigurationError("extrinsics must be a rigid transform with last row (0, 0, 0, 1)")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "extrinsics", e)

    @classmethod
    def looking_along(cls, yaw: float, height: float, focal: float, image_size: tuple[int, int]):
        """Camera at (0, 0, height), optical axis horizontal at world heading ``yaw``.

        World frame: x forward, y left, z up. Camera frame: x right, y down, z forward.
        """
        fwd = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        r = np.stack([right, down, fwd])
        e = np.eye(4)
        e[:3, :3] = r
        e[:3, 3] = -r @ np.array([0.0, 0.0, height])
        h, w = image_size
        k = np.array([[focal, 0.0, w / 2.0], [0.0, focal, h / 2.0], [0.0, 0.0, 1.0]])
        return cls(k, e, (int(h), int(w)))


@dataclass(frozen=True)
class BevSpec:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    resolution: float
    grid: tuple[int, int]  # (H, W): rows follow y, columns follow x

    def __post_init__(self):
        h = round((self.y_range[1] - self.y_range[0]) / self.resolution)
        w = round((self.x_range[1] - self.x_range[0]) / self.resolution)
        if (h, w) != tuple(self.grid) or h < 1 or w < 1:
            raise ConfigurationError(f"BEV grid {tuple(self.grid)} inconsistent with ranges/resolution (expected {(h, w)})")

    @classmethod
    def from_range(cls, x_range, y_range, resolution: float):
        h = round((y_range[1] - y_range[0]) / resolution)
        w = round((x_range[1] - x_range[0]) / resolution)
        return cls(tuple(x_range), tuple(y_range), float(resolution), (h, w))


@dataclass(frozen=True)
class Rig:
    """Sensor geometry shared by every query: camera models and BEV grids."""

    bounds: SceneBounds
    cameras: tuple[CameraModel, ...]
    lidar_bevs: tuple[BevSpec, ...]  # one per scale
    radar_bev: BevSpec


@dataclass(frozen=True)
class FeatureBundle:
    camera: tuple[tuple[Tensor, ...], ...]  # [view][scale] -> [C x H_i x W_i]
    lidar: tuple[Tensor, ...]  # [scale] -> [C x H_i x W_i]
    radar: Tensor  # [C_n x H x W]


# ---------------------------------------------------------------------------
# projection


def project_to_camera(refs: np.ndarray, cam: CameraModel, bounds: SceneBounds):
    """Pinhole projection of relative points; returns normalized (u, v) and visibility."""
    world = bounds.denormalize(np.atleast_2d(refs))
    cam_pts = world @ cam.extrinsics[:3, :3].T + cam.extrinsics[:3, 3]
    depth = cam_pts[:, 2]
    safe = np.where(depth > DEPTH_EPS, depth, 1.0)
    pix = cam_pts @ cam.intrinsics.T
    u_px, v_px = pix[:, 0] / safe, pix[:, 1] / safe
    h, w = cam.image_size
    visible = (depth > DEPTH_EPS) & (u_px >= 0) & (u_px < w) & (v_px >= 0) & (v_px < h)
    u = np.where(depth > DEPTH_EPS, u_px / w, 0.0)
    v = np.where(depth > DEPTH_EPS, v_px / h, 0.0)
    return u, v, visible


def unproject_from_camera(u: float, v: float, depth: float, cam: CameraModel, bounds: SceneBounds) -> np.ndarray:
    """Relative point that projects to normalized pixel (u, v) at the given depth."""
    h, w = cam.image_size
    ray = np.linalg.solve(cam.intrinsics, np.array([u * w, v * h, 1.0]))
    cam_pt = ray * depth
    r, t = cam.extrinsics[:3, :3], cam.extrinsics[:3, 3]
    return bounds.normalize(r.T @ (cam_pt - t))


def project_to_bev(refs: np.ndarray, bev: BevSpec, bounds: SceneBounds):
    """Continuous (x_cell, y_cell) of relative points on a BEV grid, plus an inside flag.

    Corners of the metric range map to cell centers 0 and W-1 (H-1).
    """
    world = bounds.denormalize(np.atleast_2d(refs))
    h, w = bev.grid
    (x0, x1), (y0, y1) = bev.x_range, bev.y_range
    x_cell = (world[:, 0] - x0) / (x1 - x0) * (w - 1)
    y_cell = (world[:, 1] - y0) / (y1 - y0) * (h - 1)
    inside = (x_cell >= 0) & (x_cell <= w - 1) & (y_cell >= 0) & (y_cell <= h - 1)
    return x_cell, y_cell, inside


def bilinear_sample(fmap: Tensor, x: Tensor | np.ndarray, y: Tensor | np.ndarray) -> Tensor:
    """Sample a [C x H x W] map at continuous (x=column, y=row) points -> [P x C]."""
    x = x if isinstance(x, Tensor) else Tensor(np.atleast_1d(x))
    y = y if isinstance(y, Tensor) else Tensor(np.atleast_1d(y))
    return bilinear_gather(fmap, y, x)


# ---------------------------------------------------------------------------
# attention-weighted aggregation


def query_map(queries: Tensor, proj: Linear, side: int) -> Tensor:
    """Project [N_q x d] query features to the [N_q x side x side] map the attention modules consume."""
    return reshape(proj(queries), (queries.shape[0], side, side))


def weight_logits(module_out: Tensor, head: Linear) -> Tensor:
    n = module_out.shape[0]
    return head(reshape(module_out, (n, -1)))


@dataclass(frozen=True)
class Aggregate:
    feature: Tensor  # [N_q x C]
    weights: Tensor  # [N_q x samples], rows sum to one (or zero when masked out)
    mask: np.ndarray  # [N_q] bool, True where the query had no valid sample
    valid: np.ndarray  # [N_q x samples] bool, samples that entered the softmax


def _weighted_sum(samples: Tensor, weights: Tensor) -> Tensor:
    # samples [N_q, S, C], weights [N_q, S]
    n, s = weights.shape
    return sum_(mul(samples, reshape(weights, (n, s, 1))), axis=1)


def aggregate_camera(
    maps: tuple[tuple[Tensor, ...], ...],
    cameras: tuple[CameraModel, ...],
    bounds: SceneBounds,
    refs: np.ndarray,
    dual_out: Tensor,
    head: Linear,
) -> Aggregate:
    """Visibility-masked, softmax-weighted sum over views x scales, no offsets."""
    n_q = refs.shape[0]
    samples, visible = [], []
    for view, cam in zip(maps, cameras):
        u, v, vis = project_to_camera(refs, cam, bounds)
        for fmap in view:
            _, h, w = fmap.shape
            samples.append(bilinear_sample(fmap, u * (w - 1), v * (h - 1)))
            visible.append(vis)
    mask = np.stack(visible, axis=1)  # [N_q, N*m]
    logits = weight_logits(dual_out, head)
    if logits.shape != (n_q, mask.shape[1]):
        raise DimensionError(f"camera weight head gives {logits.shape}, expected {(n_q, mask.shape[1])}")
    weights = softmax_last(logits, mask=mask)
    return Aggregate(_weighted_sum(stack(samples, axis=1), weights), weights, ~mask.any(axis=1), mask)


def _offset_samples(fmap: Tensor, x: np.ndarray, y: np.ndarray, offsets: Tensor) -> Tensor:
    # offsets [N_q, K, 2] in cell units (dx, dy) -> samples [N_q, K, C]
    n, k, _ = offsets.shape
    cols = reshape(add(Tensor(x[:, None]), take(offsets, (slice(None), slice(None), 0))), (n * k,))
    rows = reshape(add(Tensor(y[:, None]), take(offsets, (slice(None), slice(None), 1))), (n * k,))
    return reshape(bilinear_gather(fmap, rows, cols), (n, k, fmap.shape[0]))


def aggregate_lidar(
    maps: tuple[Tensor, ...],
    bevs: tuple[BevSpec, ...],
    bounds: SceneBounds,
    refs: np.ndarray,
    offsets: Tensor,
    triple_out: Tensor,
    head: Linear,
) -> Aggregate:
    """Softmax-weighted sum over scales x K offset samples. ``offsets`` is [N_q, m, K, 2]."""
    n_q, m, k, _ = offsets.shape
    if m != len(maps) or m != len(bevs):
        raise DimensionError(f"offsets cover {m} scales but {len(maps)} maps / {len(bevs)} BEV specs given")
    per_scale = []
    for i, (fmap, bev) in enumerate(zip(maps, bevs)):
        x, y, _ = project_to_bev(refs, bev, bounds)
        per_scale.append(_offset_samples(fmap, x, y, take(offsets, (slice(None), i))))
    samples = concat(per_scale, axis=1)  # [N_q, m*K, C]
    weights = softmax_last(weight_logits(triple_out, head))
    if weights.shape != (n_q, m * k):
        raise DimensionError(f"LiDAR weight head gives {weights.shape}, expected {(n_q, m * k)}")
    return Aggregate(_weighted_sum(samples, weights), weights, np.zeros(n_q, dtype=bool), np.ones(weights.shape, dtype=bool))


def aggregate_radar(
    fmap: Tensor,
    bev: BevSpec,
    bounds: SceneBounds,
    refs: np.ndarray,
    offsets: Tensor,
    mixed_out: Tensor,
    head: Linear,
) -> Aggregate:
    """Single-map version of :func:`aggregate_lidar`; ``offsets`` is [N_q, K, 2]."""
    n_q, k, _ = offsets.shape
    x, y, _ = project_to_bev(refs, bev, bounds)
    samples = _offset_samples(fmap, x, y, offsets)
    weights = softmax_last(weight_logits(mixed_out, head))
    if weights.shape != (n_q, k):
        raise DimensionError(f"radar weight head gives {weights.shape}, expected {(n_q, k)}")
    return Aggregate(_weighted_sum(samples, weights), weights, np.zeros(n_q, dtype=bool), np.ones(weights.shape, dtype=bool))


def sampling_offsets(queries: Tensor, head: Linear, shape: tuple[int, ...]) -> Tensor:
    """Offsets in cell units from a linear head on the query features."""
    return reshape(head(queries), (queries.shape[0], *shape, 2))


# ---------------------------------------------------------------------------
# query update


def position_encoding(refs: np.ndarray, bounds: SceneBounds, dim: int, temperature: float = 10000.0) -> np.ndarray:
    """Sinusoidal encoding of metric xyz; trailing dims beyond 6*(dim//6) are zero."""
    xyz = bounds.denormalize(refs)
    n_freq = dim // 6
    out = np.zeros((xyz.shape[0], dim))
    if n_freq == 0:
        return out
    freqs = temperature ** (-np.arange(n_freq) / n_freq)
    angles = xyz[:, :, None] * freqs  # [N, 3, n_freq]
    enc = np.stack([np.sin(angles), np.cos(angles)], axis=-1).reshape(xyz.shape[0], -1)
    out[:, : enc.shape[1]] = enc
    return out


@dataclass(frozen=True)
class FuseParams:
    mlp1: Linear  # [C + C + C_n -> d]
    mlp2: Linear  # [d -> d]
    ffn1: Linear  # [d -> d_ff]
    ffn2: Linear  # [d_ff -> d]

    @classmethod
    def init(cls, in_dim: int, d_model: int, rng: np.random.Generator, d_ff: int | None = None, gain: float = 1.0):
        d_ff = d_ff or 2 * d_model
        return cls(
            Linear.init(in_dim, d_model, rng, gain),
            Linear.init(d_model, d_model, rng, gain),
            Linear.init(d_model, d_ff, rng, gain),
            Linear.init(d_ff, d_model, rng, gain),
        )


def fuse_and_update(
    f_cam: Tensor,
    f_lidar: Tensor,
    f_radar: Tensor,
    queries: Tensor,
    refs: np.ndarray,
    params: FuseParams,
    bounds: SceneBounds,
) -> Tensor:
    """Concatenate modality features, encode by MLP, add position encoding, apply residual FFN.

    Both residual sums are layer-normalized so query magnitudes stay fixed
    however many layers are stacked.
    """
    n = queries.shape[0]
    for name, f in (("camera", f_cam), ("lidar", f_lidar), ("radar", f_radar)):
        if f.ndim != 2 or f.shape[0] != n:
            raise DimensionError(f"{name} feature {f.shape} not aligned with {n} queries")
    fused = concat([f_cam, f_lidar, f_radar], axis=1)
    h = params.mlp2(relu(params.mlp1(fused)))
    pe = Tensor(position_encoding(refs, bounds, queries.shape[1]))
    z = layer_norm(queries + h + pe)
    return layer_norm(z + params.ffn2(relu(params.ffn1(z))))
