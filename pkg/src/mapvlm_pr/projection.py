"""Range-view / bird's-eye-view projection and the stacked pseudo-global view.

Both views share the azimuth column index, so column ``u`` of every RV layer
and every BEV layer looks in the same direction.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeMismatch
from .scan_io import PointCloud

RV = "RV"
BEV = "BEV"
FULL = "FULL"

_MIN_RANGE = 1e-6

NCLT_RANGE_INTERVALS = ((0.0, 15.0), (15.0, 30.0), (30.0, 45.0), (45.0, 60.0))
NCLT_HEIGHT_INTERVALS = ((-4.0, 0.0), (0.0, 4.0), (4.0, 8.0), (8.0, 12.0))
KITTI_RANGE_INTERVALS = ((0.0, 20.0), (20.0, 40.0), (40.0, 60.0), (60.0, 80.0))
KITTI_HEIGHT_INTERVALS = ((-3.0, -1.5), (-1.5, 0.0), (0.0, 1.5), (1.5, 5.0))


def _check_intervals(name, intervals):
    for lo, hi in intervals:
        if not lo < hi:
            raise ConfigError(f"{name}: interval ({lo}, {hi}) is empty")
    for (_, hi), (lo, _) in zip(intervals, intervals[1:]):
        if hi != lo:
            raise ConfigError(f"{name}: intervals must be contiguous ({hi} != {lo})")


@dataclass(frozen=True)
class ProjectionConfig:
    """Image geometry and layer boundaries.

    ``fov_up``/``fov_down`` are degrees (``fov_down`` stored positive);
    intervals are half-open ``[low, high)`` in meters.
    """

    w: int = 900
    h: int = 32
    fov_up: float = 30.67
    fov_down: float = 10.67
    max_range: float = 60.0
    range_intervals: tuple = NCLT_RANGE_INTERVALS
    height_intervals: tuple = NCLT_HEIGHT_INTERVALS

    def __post_init__(self):
        object.__setattr__(self, "range_intervals",
                           tuple((float(a), float(b)) for a, b in self.range_intervals))
        object.__setattr__(self, "height_intervals",
                           tuple((float(a), float(b)) for a, b in self.height_intervals))
        if self.w <= 0 or self.h <= 0:
            raise ConfigError("image width and height must be positive")
        if self.max_range <= 0:
            raise ConfigError("max_range must be positive")
        if self.fov_up + self.fov_down <= 0:
            raise ConfigError("fov_up + fov_down must be positive")
        _check_intervals("range_intervals", self.range_intervals)
        _check_intervals("height_intervals", self.height_intervals)

    @classmethod
    def nclt(cls, **overrides) -> "ProjectionConfig":
        return cls(**overrides)

    @classmethod
    def kitti(cls, **overrides) -> "ProjectionConfig":
        base = dict(w=900, h=64, fov_up=3.0, fov_down=25.0, max_range=80.0,
                    range_intervals=KITTI_RANGE_INTERVALS,
                    height_intervals=KITTI_HEIGHT_INTERVALS)
        base.update(overrides)
        return cls(**base)

    @property
    def fov_total_rad(self) -> float:
        return math.radians(self.fov_up + self.fov_down)

    @property
    def q(self) -> int:
        """Layers per modality, the last one being the full view."""
        return len(self.range_intervals) + 1


@dataclass(frozen=True)
class ViewImage:
    values: np.ndarray
    kind: str
    layer_tag: str = FULL

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class PseudoGlobalView:
    """Channels ordered ``[B_1..B_q, R_1..R_q]``."""

    channels: Sequence[ViewImage] = field(default_factory=list)

    def __post_init__(self):
        if len(self.channels) % 2:
            raise ShapeMismatch("pseudo-global view needs an even channel count")

    @property
    def shape(self):
        return self.channels[0].shape

    def as_array(self) -> np.ndarray:
        return np.stack([c.values for c in self.channels])


def column_index(points: np.ndarray, w: int) -> np.ndarray:
    """Azimuth column shared by both projections."""
    yaw = np.arctan2(points[:, 1], points[:, 0])
    u = np.floor(0.5 * (1.0 - yaw / np.pi) * w).astype(np.int64)
    return np.mod(u, w)


def rv_row_index(points: np.ndarray, cfg: ProjectionConfig) -> np.ndarray:
    r = np.linalg.norm(points, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        pitch = np.arcsin(np.clip(points[:, 2] / r, -1.0, 1.0))
    v = np.floor((1.0 - (pitch + math.radians(cfg.fov_up)) / cfg.fov_total_rad) * cfg.h)
    return np.clip(np.nan_to_num(v), 0, cfg.h - 1).astype(np.int64)


def bev_row_index(points: np.ndarray, cfg: ProjectionConfig) -> np.ndarray:
    planar = np.hypot(points[:, 0], points[:, 1])
    v = np.floor(planar / cfg.max_range * cfg.h)
    return np.clip(v, 0, cfg.h - 1).astype(np.int64)


def _rv_image(points, cfg, tag):
    img = np.full((cfg.h, cfg.w), np.inf)
    if len(points):
        r = np.linalg.norm(points, axis=1)
        keep = (r > _MIN_RANGE) & (r <= cfg.max_range)
        pts, r = points[keep], r[keep]
        np.minimum.at(img, (rv_row_index(pts, cfg), column_index(pts, cfg.w)), r)
    img[np.isinf(img)] = 0.0
    return ViewImage(img, RV, tag)


def _bev_image(points, cfg, tag):
    img = np.full((cfg.h, cfg.w), -np.inf)
    if len(points):
        planar = np.hypot(points[:, 0], points[:, 1])
        pts = points[planar <= cfg.max_range]
        np.maximum.at(img, (bev_row_index(pts, cfg), column_index(pts, cfg.w)), pts[:, 2])
    img[np.isinf(img)] = 0.0
    return ViewImage(img, BEV, tag)


def project_rv(cloud: PointCloud, cfg: ProjectionConfig) -> ViewImage:
    """Spherical projection; each pixel keeps the smallest range that hits it."""
    return _rv_image(cloud.points, cfg, FULL)


def project_bev(cloud: PointCloud, cfg: ProjectionConfig) -> ViewImage:
    """Top-down projection indexed by (planar distance, azimuth); pixels keep max z."""
    return _bev_image(cloud.points, cfg, FULL)


def _tag(lo, hi):
    return f"[{lo:g},{hi:g})"


def layer_index(values, intervals) -> np.ndarray:
    """Index of the half-open interval holding each value, -1 if none."""
    values = np.asarray(values, dtype=np.float64)
    out = np.full(values.shape, -1, dtype=np.int64)
    for i, (lo, hi) in enumerate(intervals):
        out[(values >= lo) & (values < hi)] = i
    return out


def multilayer_rv(cloud: PointCloud, cfg: ProjectionConfig) -> list[ViewImage]:
    """One RV image per range interval, then the full RV image."""
    pts = cloud.points
    idx = layer_index(np.linalg.norm(pts, axis=1), cfg.range_intervals)
    layers = [_rv_image(pts[idx == i], cfg, _tag(lo, hi))
              for i, (lo, hi) in enumerate(cfg.range_intervals)]
    layers.append(_rv_image(pts, cfg, FULL))
    return layers


def multilayer_bev(cloud: PointCloud, cfg: ProjectionConfig) -> list[ViewImage]:
    """One BEV image per height interval, then the full BEV image."""
    pts = cloud.points
    idx = layer_index(pts[:, 2], cfg.height_intervals)
    layers = [_bev_image(pts[idx == i], cfg, _tag(lo, hi))
              for i, (lo, hi) in enumerate(cfg.height_intervals)]
    layers.append(_bev_image(pts, cfg, FULL))
    return layers


def build_pgv(bev_layers: Sequence[ViewImage], rv_layers: Sequence[ViewImage]) -> PseudoGlobalView:
    if not bev_layers or not rv_layers:
        raise ShapeMismatch("both BEV and RV layer lists must be non-empty")
    shapes = {img.shape for img in list(bev_layers) + list(rv_layers)}
    if len(shapes) != 1:
        raise ShapeMismatch(f"layer shapes differ: {sorted(shapes)}")
    return PseudoGlobalView(list(bev_layers) + list(rv_layers))


def project_pgv(cloud: PointCloud, cfg: ProjectionConfig) -> PseudoGlobalView:
    return build_pgv(multilayer_bev(cloud, cfg), multilayer_rv(cloud, cfg))


def write_pgm(image: ViewImage, path, counts_per_meter: float = 256.0) -> None:
    """Dump an image as a 16-bit binary PGM; negative values clip to 0."""
    scaled = np.clip(np.rint(image.values * counts_per_meter), 0, 65535).astype(">u2")
    h, w = scaled.shape
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(scaled.tobytes())


def read_pgm(path, counts_per_meter: float = 256.0) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    data = np.frombuffer(raw[m.end(): m.end() + 2 * w * h], dtype=">u2").reshape(h, w)
    return data.astype(np.float64) / counts_per_meter
