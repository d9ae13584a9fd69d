"""Readers for KITTI-layout velodyne scans and pose files."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, MalformedPose, MalformedScan

SCAN_DTYPE = np.dtype("<f4")
_RECORD_BYTES = 16


@dataclass(frozen=True)
class PointCloud:
    """N x 3 points (meters) plus N intensities, in file order."""

    points: np.ndarray
    intensity: np.ndarray
    frame_id: int = 0

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {self.points.shape}")
        if self.intensity.shape != (self.points.shape[0],):
            raise ValueError("intensity length must match point count")
        if self.frame_id < 0:
            raise ValueError("frame_id must be non-negative")

    def __len__(self):
        return self.points.shape[0]

    @classmethod
    def from_xyz(cls, xyz, intensity=None, frame_id: int = 0) -> "PointCloud":
        pts = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        if intensity is None:
            intensity = np.zeros(pts.shape[0])
        return cls(pts, np.asarray(intensity, dtype=np.float64), frame_id)


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray
    timestamp: Optional[float] = None

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3) or not np.allclose(r.T @ r, np.eye(3), atol=1e-5):
            raise MalformedPose("rotation is not a 3x3 orthonormal matrix")


@dataclass(frozen=True)
class ScanSequence:
    scan_paths: Sequence[Path]
    poses: Sequence[Pose]
    frame_ids: Sequence[int] = field(default=())

    def __post_init__(self):
        if len(self.scan_paths) != len(self.poses):
            raise ValueError(
                f"{len(self.scan_paths)} scans but {len(self.poses)} poses")
        if not self.frame_ids:
            object.__setattr__(self, "frame_ids", tuple(range(len(self.scan_paths))))
        if len(self.frame_ids) != len(self.scan_paths):
            raise ValueError("frame_ids length must match scan count")
        if any(b <= a for a, b in zip(self.frame_ids, self.frame_ids[1:])):
            raise ValueError("frame ids must be strictly increasing")

    def __len__(self):
        return len(self.scan_paths)


def read_kitti_scan(path, frame_id: int = 0) -> PointCloud:
    """Decode a headerless float32 (x, y, z, intensity) scan file.

    Raises MalformedScan when the byte count is not a multiple of 16 or a
    coordinate is not finite; read failures surface as OSError.
    """
    raw = Path(path).read_bytes()
    if len(raw) % _RECORD_BYTES:
        raise MalformedScan(
            f"{path}: {len(raw)} bytes is not a multiple of {_RECORD_BYTES}")
    data = np.frombuffer(raw, dtype=SCAN_DTYPE).reshape(-1, 4)
    if not np.isfinite(data[:, :3]).all():
        raise MalformedScan(f"{path}: non-finite coordinates")
    # keep float32 values exactly; widen for downstream math
    return PointCloud(data[:, :3].astype(np.float64), data[:, 3].astype(np.float64), frame_id)


def write_kitti_scan(cloud: PointCloud, path) -> None:
    out = np.empty((len(cloud), 4), dtype=SCAN_DTYPE)
    out[:, :3] = cloud.points
    out[:, 3] = cloud.intensity
    Path(path).write_bytes(out.tobytes())


def read_pose_file(path) -> list[Pose]:
    """Parse KITTI row-major 3x4 poses, one per non-empty line.

    Timestamps are set to the line's frame index.
    """
    poses = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 12:
                raise MalformedPose(
                    f"{path}:{lineno}: expected 12 values, got {len(tokens)}")
            try:
                mat = np.array([float(t) for t in tokens]).reshape(3, 4)
            except ValueError as exc:
                raise MalformedPose(f"{path}:{lineno}: {exc}") from None
            if not np.isfinite(mat).all():
                raise MalformedPose(f"{path}:{lineno}: non-finite value")
            poses.append(Pose(mat[:, :3], mat[:, 3].copy(), float(len(poses))))
    return poses


def scan_position(pose: Pose) -> np.ndarray:
    return np.asarray(pose.translation, dtype=np.float64).copy()


def load_sequence(scan_dir, pose_file) -> ScanSequence:
    """Pair sorted ``*.bin`` files in ``scan_dir`` with the lines of ``pose_file``.

    Numeric file stems become frame ids; otherwise the sorted position is used.
    """
    paths = sorted(Path(scan_dir).glob("*.bin"))
    poses = read_pose_file(pose_file)
    if len(paths) != len(poses):
        raise ConfigError(
            f"{scan_dir} holds {len(paths)} scans but {pose_file} has {len(poses)} poses")
    stems = [p.stem for p in paths]
    if all(s.isdigit() for s in stems):
        ids = [int(s) for s in stems]
    else:
        ids = list(range(len(paths)))
    return ScanSequence(paths, poses, ids)


def sequence_positions(seq: ScanSequence) -> np.ndarray:
    return np.array([scan_position(p) for p in seq.poses]).reshape(-1, 3)
