"""Synthetic scenes standing in for the sensor encoders.

Feature maps are Gaussian noise plus a class-dependent feature pattern
painted as a Gaussian bump wherever a ground-truth box center lands: on every
BEV level for LiDAR and radar, and in every camera view that sees it.

Randomness: numpy's PCG64 bit generator seeded through
``SeedSequence([seed, stream])``; stream 0 draws the scene, stream 1 the
model initialization. Same seed and config give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .fusion import FeatureBundle, Rig, project_to_bev, project_to_camera
from .head import GroundTruth
from .tensor import Tensor

SCENE_STREAM, MODEL_STREAM = 0, 1
BUMP_AMPLITUDE = 1.0


def make_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


@dataclass(frozen=True)
class SceneBundle:
    features: FeatureBundle
    gts: GroundTruth
    rig: Rig


def _bump(fmap: np.ndarray, row: float, col: float, sigma: float, pattern: np.ndarray) -> None:
    _, h, w = fmap.shape
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    g = np.exp(-((rr - row) ** 2 + (cc - col) ** 2) / (2.0 * sigma**2))
    fmap += BUMP_AMPLITUDE * pattern[:, None, None] * g[None]


def sample_boxes(cfg: RunConfig, rng: np.random.Generator) -> GroundTruth:
    lo, hi = np.asarray(cfg.scene_lo), np.asarray(cfg.scene_hi)
    n = cfg.n_boxes
    rel = np.column_stack([rng.uniform(0.15, 0.85, (n, 2)), rng.uniform(0.35, 0.65, n)])
    centers = lo + rel * (hi - lo)
    sizes = np.column_stack([rng.uniform(0.8, 2.0, n), rng.uniform(1.0, 2.0, n), rng.uniform(1.5, 4.5, n)])
    theta = rng.uniform(-np.pi, np.pi, n)
    vel = rng.uniform(-1.0, 1.0, (n, 2))
    boxes = np.column_stack([centers, sizes, np.sin(theta), np.cos(theta), vel])
    return GroundTruth(boxes.reshape(n, 10), rng.integers(0, cfg.n_classes, n))


def generate_scene(cfg: RunConfig) -> SceneBundle:
    cfg.validate()
    rng = make_rng(cfg.seed, SCENE_STREAM)
    rig = cfg.rig()
    gts = sample_boxes(cfg, rng)
    refs = rig.bounds.normalize(gts.boxes[:, 0:3]) if len(gts) else np.zeros((0, 3))
    cam_patterns = rng.normal(0.0, 1.0, (cfg.n_classes, cfg.channels))
    radar_patterns = rng.normal(0.0, 1.0, (cfg.n_classes, cfg.radar_channels))

    camera = []
    for spec, cam in zip(cfg.cameras, rig.cameras):
        views = []
        u, v, vis = project_to_camera(refs, cam, rig.bounds) if len(gts) else ((), (), ())
        for level in range(cfg.scales):
            h, w = cfg.camera_feature_size(spec, level)
            fmap = rng.normal(0.0, cfg.noise_std, (cfg.channels, h, w))
            for k in range(len(gts)):
                if vis[k]:
                    _bump(fmap, v[k] * (h - 1), u[k] * (w - 1), 1.0, cam_patterns[gts.labels[k]])
            views.append(Tensor(fmap))
        camera.append(tuple(views))

    lidar = []
    for bev in rig.lidar_bevs:
        fmap = rng.normal(0.0, cfg.noise_std, (cfg.channels, *bev.grid))
        for k in range(len(gts)):
            x, y, _ = project_to_bev(refs[k : k + 1], bev, rig.bounds)
            sigma = max(1.0, float(np.mean(gts.boxes[k, [3, 5]])) / (2.0 * bev.resolution))
            _bump(fmap, y[0], x[0], sigma, cam_patterns[gts.labels[k]])
        lidar.append(Tensor(fmap))

    radar = rng.normal(0.0, cfg.noise_std, (cfg.radar_channels, *rig.radar_bev.grid))
    for k in range(len(gts)):
        x, y, _ = project_to_bev(refs[k : k + 1], rig.radar_bev, rig.bounds)
        _bump(radar, y[0], x[0], 1.0, radar_patterns[gts.labels[k]])

    return SceneBundle(FeatureBundle(tuple(camera), tuple(lidar), Tensor(radar)), gts, rig)
