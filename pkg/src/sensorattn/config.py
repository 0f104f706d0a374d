"""Run configuration, profiles and the YAML scene-configuration file."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import yaml

from .fusion import BevSpec, CameraModel, ConfigurationError, Rig, SceneBounds

MODES = ("lidar_camera", "radar_camera", "all")
PROFILES = ("desk", "paper")


@dataclass(frozen=True)
class CameraSpec:
    yaw_deg: float
    height: float = 1.5
    focal: float = 32.0
    image_size: tuple[int, int] = (48, 64)

    def build(self) -> CameraModel:
        return CameraModel.looking_along(math.radians(self.yaw_deg), self.height, self.focal, tuple(self.image_size))


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    modality_mode: str = "all"
    n_queries: int = 16
    channels: int = 32  # C, camera and LiDAR feature width; also the query width
    radar_channels: int = 16  # C_n
    scales: int = 2  # feature-map levels m for camera and LiDAR
    samples: int = 4  # K offset samples per level
    n_mix: int = 4
    head_dim: int = 8
    decoder_layers: int = 3
    query_map_size: int = 3  # side of the [N_q x s x s] map fed to the attention modules
    n_classes: int = 3
    n_boxes: int = 3
    scene_lo: tuple[float, float, float] = (-8.0, -8.0, -2.0)
    scene_hi: tuple[float, float, float] = (8.0, 8.0, 2.0)
    cameras: tuple[CameraSpec, ...] = tuple(CameraSpec(yaw) for yaw in (0.0, 90.0, 180.0, 270.0))
    camera_stride: int = 8  # image pixels per feature cell at level 0; doubles per level
    lidar_resolution: float = 0.5  # meters per cell at level 0; doubles per level
    radar_resolution: float = 1.0
    noise_std: float = 0.1
    out_dir: str = "out"

    @property
    def d_model(self) -> int:
        return self.channels

    def validate(self) -> "RunConfig":
        def bad(name, why):
            raise ConfigurationError(f"{name}: {why}")

        if self.modality_mode not in MODES:
            bad("modality_mode", f"must be one of {MODES}, got {self.modality_mode!r}")
        for name in ("n_queries", "channels", "radar_channels", "scales", "samples", "n_mix", "head_dim",
                     "decoder_layers", "query_map_size", "n_classes", "camera_stride"):
            if int(getattr(self, name)) < 1:
                bad(name, "must be >= 1")
        if self.n_boxes < 0 or self.n_boxes > self.n_queries:
            bad("n_boxes", f"must be in [0, n_queries={self.n_queries}]")
        if self.seed < 0:
            bad("seed", "must be an unsigned integer")
        if len(self.scene_lo) != 3 or len(self.scene_hi) != 3 or any(h <= l for l, h in zip(self.scene_lo, self.scene_hi)):
            bad("scene_lo/scene_hi", "need three coordinates each with lo < hi")
        if not self.cameras:
            bad("cameras", "at least one camera is required")
        for name in ("lidar_resolution", "radar_resolution"):
            if getattr(self, name) <= 0:
                bad(name, "must be positive")
        if self.noise_std < 0:
            bad("noise_std", "must be non-negative")
        for i in range(self.scales):
            for cam in self.cameras:
                h, w = self.camera_feature_size(cam, i)
                if h < 1 or w < 1:
                    bad("camera_stride", f"level {i} feature map of a {cam.image_size} image is empty")
        try:
            self.rig()
        except ConfigurationError as exc:
            bad("cameras/BEV", str(exc))
        return self

    def camera_feature_size(self, cam: CameraSpec, level: int) -> tuple[int, int]:
        stride = self.camera_stride * 2**level
        return cam.image_size[0] // stride, cam.image_size[1] // stride

    def rig(self) -> Rig:
        bounds = SceneBounds(tuple(self.scene_lo), tuple(self.scene_hi))
        xr, yr = (self.scene_lo[0], self.scene_hi[0]), (self.scene_lo[1], self.scene_hi[1])
        lidar = tuple(BevSpec.from_range(xr, yr, self.lidar_resolution * 2**i) for i in range(self.scales))
        return Rig(bounds, tuple(c.build() for c in self.cameras), lidar, BevSpec.from_range(xr, yr, self.radar_resolution))

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


FULL_SIZE_CAMERAS = tuple(CameraSpec(yaw, height=1.6, focal=800.0, image_size=(900, 1600)) for yaw in range(0, 360, 60))

PROFILE_DEFAULTS = {
    "desk": RunConfig(),
    "paper": RunConfig(
        n_queries=900,
        channels=256,
        radar_channels=64,
        query_map_size=4,
        n_classes=10,
        n_boxes=20,
        scene_lo=(-51.2, -51.2, -5.0),
        scene_hi=(51.2, 51.2, 3.0),
        cameras=FULL_SIZE_CAMERAS,
        camera_stride=16,
        lidar_resolution=0.8,
        radar_resolution=1.6,
    ),
}


def profile(name: str) -> RunConfig:
    if name not in PROFILE_DEFAULTS:
        raise ConfigurationError(f"profile: must be one of {PROFILES}, got {name!r}")
    return PROFILE_DEFAULTS[name]


def _coerce(base: RunConfig, raw: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigurationError(f"{unknown[0]}: unknown configuration field")
    values = {}
    for key, value in raw.items():
        if key == "cameras":
            try:
                value = tuple(CameraSpec(**{**c, "image_size": tuple(c.get("image_size", (48, 64)))}) for c in value)
            except TypeError as exc:
                raise ConfigurationError(f"cameras: {exc}") from None
        elif key in ("scene_lo", "scene_hi"):
            value = tuple(float(v) for v in value)
        values[key] = value
    return replace(base, **values)


def load_config(path: str | Path | None = None, profile_name: str = "desk", **overrides) -> RunConfig:
    """Profile defaults, then the YAML file, then explicit overrides; validated."""
    cfg = profile(profile_name)
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"config: cannot read {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigurationError("config: top level must be a mapping")
        cfg = _coerce(cfg, raw)
    return cfg.with_overrides(**overrides).validate()


def config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["cameras"] = [dict(c, image_size=list(c["image_size"])) for c in d["cameras"]]
    d["scene_lo"], d["scene_hi"] = list(cfg.scene_lo), list(cfg.scene_hi)
    return d
