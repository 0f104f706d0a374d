"""End-to-end model: featured attention per modality, aggregation, query updates, boxes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import dual, fusion, head, mixed, triple
from .config import RunConfig
from .scene import MODEL_STREAM, SceneBundle, make_rng
from .tensor import Linear, Tape, Tensor, backward, parameters, reshape, with_parameters, zeros

log = logging.getLogger(__name__)

OFFSET_GAIN = 0.1


@dataclass(frozen=True)
class LayerParams:
    cam_map: Linear
    cam_weights: Linear
    lidar_map: Linear
    lidar_weights: Linear
    lidar_offsets: Linear
    radar_map: Linear
    radar_weights: Linear
    radar_offsets: Linear
    fuse: fusion.FuseParams


@dataclass(frozen=True)
class ModelParams:
    query_embed: Tensor  # [N_q x d_model]
    dual: dual.DualAttentionParams
    triple: triple.TripleAttentionParams
    mixed: mixed.MixedAttentionParams
    layers: tuple[LayerParams, ...]
    head: head.HeadParams
    refs: np.ndarray = field(repr=False)  # [N_q x 3], fixed relative reference points


def init_model(cfg: RunConfig) -> ModelParams:
    """Featured-attention modules are shared by all decoder layers; heads and MLPs are per layer."""
    rng = make_rng(cfg.seed, MODEL_STREAM)
    n_q, d, s2 = cfg.n_queries, cfg.d_model, cfg.query_map_size**2
    n_views, m, k = len(cfg.cameras), cfg.scales, cfg.samples
    layers = []
    for _ in range(cfg.decoder_layers):
        layers.append(
            LayerParams(
                cam_map=Linear.init(d, s2, rng),
                cam_weights=Linear.init(s2, n_views * m, rng),
                lidar_map=Linear.init(d, s2, rng),
                lidar_weights=Linear.init(s2, m * k, rng),
                lidar_offsets=Linear.init(d, m * k * 2, rng, OFFSET_GAIN),
                radar_map=Linear.init(d, s2, rng),
                radar_weights=Linear.init(s2, k, rng),
                radar_offsets=Linear.init(d, k * 2, rng, OFFSET_GAIN),
                fuse=fusion.FuseParams.init(2 * cfg.channels + cfg.radar_channels, d, rng, gain=1.0 / math.sqrt(2.0)),
            )
        )
    return ModelParams(
        query_embed=Tensor(rng.normal(0.0, 1.0, (n_q, d))),
        dual=dual.DualAttentionParams.init(n_q, rng),
        triple=triple.TripleAttentionParams.init(rng),
        mixed=mixed.MixedAttentionParams.init(n_q, rng, cfg.n_mix, cfg.head_dim),
        layers=tuple(layers),
        head=head.HeadParams.init(d, cfg.n_classes, rng, gain=0.1, prior=0.1),
        refs=rng.uniform(0.0, 1.0, (n_q, 3)),
    )


@dataclass
class ForwardResult:
    preds: head.Predictions
    queries: Tensor
    dumps: dict[str, Tensor]
    camera_valid: list[np.ndarray]  # per layer [N_q x views*scales], True where the view sees the query


def uses(mode: str, modality: str) -> bool:
    return modality == "camera" or mode == "all" or mode.startswith(modality)


def forward(params: ModelParams, scene: SceneBundle, cfg: RunConfig) -> ForwardResult:
    rig, feats = scene.rig, scene.features
    refs, s = params.refs, cfg.query_map_size
    n_q = cfg.n_queries
    mode = cfg.modality_mode
    q = params.query_embed
    dumps: dict[str, Tensor] = {}
    valid = []
    for li, layer in enumerate(params.layers):
        f_cam = zeros((n_q, cfg.channels))
        f_lidar = zeros((n_q, cfg.channels))
        f_radar = zeros((n_q, cfg.radar_channels))

        a_cam = dual.dual_forward(fusion.query_map(q, layer.cam_map, s), params.dual)
        agg = fusion.aggregate_camera(feats.camera, rig.cameras, rig.bounds, refs, a_cam, layer.cam_weights)
        f_cam = agg.feature
        valid.append(agg.valid)
        dumps[f"layer{li}_camera_attention"] = reshape(a_cam, (n_q, s * s))
        dumps[f"layer{li}_camera_weights"] = agg.weights

        if uses(mode, "lidar"):
            a_lidar = triple.triple_forward(fusion.query_map(q, layer.lidar_map, s), params.triple)
            offsets = fusion.sampling_offsets(q, layer.lidar_offsets, (cfg.scales, cfg.samples))
            agg = fusion.aggregate_lidar(feats.lidar, rig.lidar_bevs, rig.bounds, refs, offsets, a_lidar, layer.lidar_weights)
            f_lidar = agg.feature
            dumps[f"layer{li}_lidar_attention"] = reshape(a_lidar, (n_q, s * s))
            dumps[f"layer{li}_lidar_weights"] = agg.weights

        if uses(mode, "radar"):
            a_radar = mixed.mixed_forward(fusion.query_map(q, layer.radar_map, s), params.mixed)
            offsets = fusion.sampling_offsets(q, layer.radar_offsets, (cfg.samples,))
            agg = fusion.aggregate_radar(feats.radar, rig.radar_bev, rig.bounds, refs, offsets, a_radar, layer.radar_weights)
            f_radar = agg.feature
            dumps[f"layer{li}_radar_attention"] = reshape(a_radar, (n_q, s * s))
            dumps[f"layer{li}_radar_weights"] = agg.weights

        q = fusion.fuse_and_update(f_cam, f_lidar, f_radar, q, refs, layer.fuse, rig.bounds)

    preds = head.decode_boxes(q, refs, params.head, rig.bounds)
    return ForwardResult(preds, q, dumps, valid)


@dataclass
class RunResult:
    result: ForwardResult
    losses: head.LossBreakdown
    grads: dict[Tensor, np.ndarray] | None = None


def run_pipeline(cfg: RunConfig, scene: SceneBundle, params: ModelParams | None = None, with_grad: bool = False) -> RunResult:
    params = params if params is not None else init_model(cfg)
    if not with_grad:
        result = forward(params, scene, cfg)
        return RunResult(result, head.total_loss(result.preds, scene.gts))
    with Tape() as tape:
        result = forward(params, scene, cfg)
        losses = head.total_loss(result.preds, scene.gts)
    return RunResult(result, losses, backward(tape, losses.total))


def loss_and_grads(params: ModelParams, scene: SceneBundle, cfg: RunConfig):
    """Total loss and parameter gradients; matching is recomputed but kept off the tape."""
    run = run_pipeline(cfg, scene, params, with_grad=True)
    leaves = parameters(params)
    return run.losses, [run.grads.get(p, np.zeros(p.shape)) for p in leaves]


def sgd_step(params: ModelParams, grads: list[np.ndarray], lr: float) -> ModelParams:
    return with_parameters(params, [Tensor(p.data - lr * g) for p, g in zip(parameters(params), grads)])


@dataclass
class OverfitReport:
    losses: list[float]
    steps: int
    lr: float

    @property
    def reduction(self) -> float:
        return 1.0 - self.losses[-1] / self.losses[0]

    def passed(self, target: float = 0.5) -> bool:
        return self.reduction >= target


def overfit(cfg: RunConfig, scene: SceneBundle, steps: int = 50, lr: float = 1e-2) -> OverfitReport:
    """Plain gradient descent on one scene; records the loss before each step and after the last."""
    params = init_model(cfg)
    history = []
    for step in range(steps):
        losses, grads = loss_and_grads(params, scene, cfg)
        history.append(losses.total.item())
        log.debug("step %d loss %.6f", step, history[-1])
        params = sgd_step(params, grads, lr)
    history.append(run_pipeline(cfg, scene, params).losses.total.item())
    return OverfitReport(history, steps, lr)
