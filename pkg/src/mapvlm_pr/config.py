"""Flat ``key = value`` pipeline configuration.

Keys are dotted (``projection.w``, ``mapvlm.d1``, ``eval.gt_radius``); ``#``
starts a comment. Interval lists are written ``low:high`` separated by
commas, e.g. ``projection.range_intervals = 0:15, 15:30, 30:45, 45:60``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .mapvlm import MapvlmConfig
from .projection import ProjectionConfig

BASELINE_DIM = 640
PLACE_GT_RADIUS = 10.0
LOOP_GT_RADIUS = 5.0


@dataclass(frozen=True)
class PipelineConfig:
    scan_dir: Optional[Path] = None
    pose_file: Optional[Path] = None
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    descriptor_source: str = "baseline"
    descriptor_path: Optional[Path] = None
    target_dim: Optional[int] = None
    mapvlm: MapvlmConfig = field(default_factory=MapvlmConfig)
    class_radius: float = 5.0
    gt_radius: Optional[float] = None
    exclusion_frames: int = 100
    margin: float = 0.5
    hinge: bool = False
    output_dir: Path = Path("out")

    def gt_radius_for(self, mode: str) -> float:
        if self.gt_radius is not None:
            return self.gt_radius
        return LOOP_GT_RADIUS if mode == "loop" else PLACE_GT_RADIUS

    def require_dataset(self) -> None:
        if self.scan_dir is None or self.pose_file is None:
            raise ConfigError("dataset.scan_dir and dataset.pose_file must be set")


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _intervals(text):
    out = []
    for part in text.split(","):
        lo, sep, hi = part.strip().partition(":")
        if not sep:
            raise ValueError(f"interval {part.strip()!r} is not low:high")
        out.append((float(lo), float(hi)))
    return tuple(out)


_PROJECTION_KEYS = {
    "w": int, "h": int, "fov_up": float, "fov_down": float, "max_range": float,
    "range_intervals": _intervals, "height_intervals": _intervals,
}
_MAPVLM_KEYS = {
    "d1": int, "d2": int, "k_neighbor": int, "reg_epsilon_scale": float,
    "min_class_size": int, "kernel": str,
}
_TOP_KEYS = {
    "dataset.scan_dir": ("scan_dir", Path),
    "dataset.pose_file": ("pose_file", Path),
    "descriptor.source": ("descriptor_source", str),
    "descriptor.path": ("descriptor_path", Path),
    "descriptor.target_dim": ("target_dim", int),
    "labels.class_radius": ("class_radius", float),
    "eval.gt_radius": ("gt_radius", float),
    "eval.exclusion_frames": ("exclusion_frames", int),
    "triplet.margin": ("margin", float),
    "triplet.hinge": ("hinge", _bool),
    "output.dir": ("output_dir", Path),
}
INPUT_PATH_KEYS = ("dataset.scan_dir", "dataset.pose_file", "descriptor.path")
KNOWN_KEYS = (sorted(_TOP_KEYS) + ["projection.preset"]
              + [f"projection.{k}" for k in _PROJECTION_KEYS]
              + [f"mapvlm.{k}" for k in _MAPVLM_KEYS])


def parse_lines(lines, source="<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def build_config(raw: dict[str, str]) -> PipelineConfig:
    """Turn parsed key/value pairs into a validated config.

    Every configured input path must exist.
    """
    unknown = set(raw) - set(KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        preset = raw.get("projection.preset", "nclt").lower()
        if preset not in ("nclt", "kitti"):
            raise ConfigError(f"projection.preset must be nclt or kitti, got {preset!r}")
        proj = {k: conv(raw[f"projection.{k}"]) for k, conv in _PROJECTION_KEYS.items()
                if f"projection.{k}" in raw}
        projection = getattr(ProjectionConfig, preset)(**proj)
        mcfg = {k: conv(raw[f"mapvlm.{k}"]) for k, conv in _MAPVLM_KEYS.items()
                if f"mapvlm.{k}" in raw}
        mapvlm = MapvlmConfig(**mcfg)
        top = {name: conv(raw[key]) for key, (name, conv) in _TOP_KEYS.items() if key in raw}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    cfg = PipelineConfig(projection=projection, mapvlm=mapvlm, **top)
    if cfg.descriptor_source not in ("baseline", "external"):
        raise ConfigError("descriptor.source must be 'baseline' or 'external'")
    if cfg.class_radius <= 0:
        raise ConfigError("labels.class_radius must be positive")
    if cfg.gt_radius is not None and cfg.gt_radius <= 0:
        raise ConfigError("eval.gt_radius must be positive")
    if cfg.exclusion_frames < 0:
        raise ConfigError("eval.exclusion_frames must be non-negative")
    if cfg.target_dim is not None and cfg.target_dim <= 0:
        raise ConfigError("descriptor.target_dim must be positive")
    for name in ("scan_dir", "pose_file", "descriptor_path"):
        path = getattr(cfg, name)
        if path is not None and not path.exists():
            raise ConfigError(f"{name} does not exist: {path}")
    return cfg


def load_config(path=None, overrides: Optional[dict[str, str]] = None) -> PipelineConfig:
    """Read ``path`` (optional) and apply ``overrides`` on top.

    Input paths inside the file are relative to the file's directory;
    override paths are taken as given.
    """
    raw = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        raw = parse_lines(text.splitlines(), str(path))
        for key in INPUT_PATH_KEYS:
            if key in raw and not Path(raw[key]).is_absolute():
                raw[key] = str(path.parent / raw[key])
    raw.update(overrides or {})
    return build_config(raw)
