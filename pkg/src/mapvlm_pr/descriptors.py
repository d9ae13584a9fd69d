"""Global descriptor sets: DSC1 binary files, CSV import, a projection-based
fallback descriptor, and place-class labelling from positions.

DSC1 layout (little endian)::

    b"DSC1" | N:u32 | D:u32 | vectors N*D f32 | positions N*3 f32 | frame ids N u32
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BadMagic, DimensionError, ShapeMismatch, TruncatedFile
from .projection import PseudoGlobalView

DSC_MAGIC = b"DSC1"
_HEADER = struct.Struct("<4sII")
DEFAULT_DIM = 768


@dataclass(frozen=True)
class DescriptorSet:
    vectors: np.ndarray
    positions: np.ndarray
    frame_ids: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float32)
        if vec.ndim != 2:
            raise ShapeMismatch("vectors must be an N x D matrix")
        n = vec.shape[0]
        pos = np.asarray(self.positions, dtype=np.float32).reshape(n, 3)
        ids = np.asarray(self.frame_ids, dtype=np.uint32).reshape(n)
        if not np.isfinite(vec).all() or not np.isfinite(pos).all():
            raise ValueError("descriptor set contains non-finite values")
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "frame_ids", ids)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64).reshape(n)
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def with_labels(self, labels) -> "DescriptorSet":
        return DescriptorSet(self.vectors, self.positions, self.frame_ids, labels)

    def subset(self, mask) -> "DescriptorSet":
        labels = None if self.labels is None else self.labels[mask]
        return DescriptorSet(self.vectors[mask], self.positions[mask],
                             self.frame_ids[mask], labels)


def save_descriptors(dset: DescriptorSet, path) -> None:
    n, d = dset.vectors.shape
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(DSC_MAGIC, n, d))
        fh.write(dset.vectors.astype("<f4").tobytes())
        fh.write(dset.positions.astype("<f4").tobytes())
        fh.write(dset.frame_ids.astype("<u4").tobytes())


def load_descriptors(path) -> DescriptorSet:
    raw = Path(path).read_bytes()
    if raw[:4] != DSC_MAGIC:
        raise BadMagic(f"{path}: expected magic {DSC_MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedFile(f"{path}: header is incomplete")
    _, n, d = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 4 * (n * d + 3 * n + n)
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header implies {expected}")
    off = _HEADER.size
    vec = np.frombuffer(raw, "<f4", n * d, off).reshape(n, d)
    off += 4 * n * d
    pos = np.frombuffer(raw, "<f4", 3 * n, off).reshape(n, 3)
    off += 12 * n
    ids = np.frombuffer(raw, "<u4", n, off)
    return DescriptorSet(vec.astype(np.float32), pos.astype(np.float32), ids.astype(np.uint32))


def load_descriptor_csv(path) -> DescriptorSet:
    """One row per descriptor; the last three columns are x, y, z.

    Frame ids are the row indices.
    """
    data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if data.size == 0:
        return DescriptorSet(np.zeros((0, 0)), np.zeros((0, 3)), np.zeros(0))
    if data.shape[1] < 4:
        raise DimensionError(f"{path}: need at least one descriptor column plus x,y,z")
    return DescriptorSet(data[:, :-3], data[:, -3:], np.arange(len(data)))


def baseline_descriptor(pgv: PseudoGlobalView, target_dim: int) -> np.ndarray:
    """Yaw-invariant hand-crafted descriptor for a pseudo-global view.

    Each channel collapses to a column profile (mean of the nonzero pixels in
    each column); the magnitudes of its leading DFT coefficients do not change
    under circular column shifts, i.e. under sensor yaw.
    """
    return stack_descriptor(pgv.as_array(), target_dim)


def column_profiles(stack: np.ndarray) -> np.ndarray:
    """(C, h, w) -> (C, w): mean of nonzero pixels per column, 0 for empty columns."""
    nonzero = stack != 0
    counts = nonzero.sum(axis=1)
    sums = np.where(nonzero, stack, 0.0).sum(axis=1)
    return np.divide(sums, counts, out=np.zeros_like(sums, dtype=np.float64), where=counts > 0)


def stack_descriptor(stack: np.ndarray, target_dim: int) -> np.ndarray:
    """Descriptor of a raw (C, h, w) channel stack; see :func:`baseline_descriptor`."""
    stack = np.asarray(stack, dtype=np.float64)
    c, _, w = stack.shape
    if target_dim <= 0 or target_dim % c:
        raise DimensionError(f"target_dim {target_dim} is not divisible by {c} channels")
    per = target_dim // c
    if per > w:
        raise DimensionError(f"{per} coefficients per channel exceed image width {w}")
    spectrum = np.fft.fft(column_profiles(stack), axis=1)[:, :per]
    out = np.abs(spectrum).reshape(-1)
    norm = np.linalg.norm(out)
    return out / norm if norm > 0 else out


def assign_place_classes(positions, radius: float = 5.0) -> np.ndarray:
    """Greedy leader clustering in the xy plane, in the given order.

    A point joins the first leader within ``radius``; otherwise it starts a
    new class. Class ids are dense and follow leader creation order.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    pos = np.asarray(positions, dtype=np.float64)
    xy = pos.reshape(len(pos), -1)[:, :2] if pos.size else np.zeros((0, 2))
    labels = np.empty(len(xy), dtype=np.int64)
    leaders = np.empty((0, 2))
    for i, p in enumerate(xy):
        if len(leaders):
            hit = np.flatnonzero(np.hypot(*(leaders - p).T) <= radius)
            if hit.size:
                labels[i] = hit[0]
                continue
        labels[i] = len(leaders)
        leaders = np.vstack([leaders, p])
    return labels
