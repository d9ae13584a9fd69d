"""Synthetic data: an anisotropic-noise class benchmark and a toy scan sequence."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .scan_io import PointCloud, write_kitti_scan


def anisotropic_classes(seed=0, n_classes=20, per_class=50, dim=64, noise_dim=8,
                        noise_scale=10.0, signal_scale=1.0, iso_scale=0.3):
    """Classes whose means differ only outside a shared high-variance noise subspace.

    Within-class spread is ``noise_scale`` along a random ``noise_dim``-dimensional
    subspace (plus small isotropic jitter); class means are drawn with scale
    ``signal_scale`` in the orthogonal complement. Returns ``(X, y)``.
    """
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    noise_basis, signal_basis = basis[:, :noise_dim], basis[:, noise_dim:]
    means = rng.standard_normal((n_classes, dim - noise_dim)) * signal_scale @ signal_basis.T
    X, y = [], []
    for c in range(n_classes):
        noise = rng.standard_normal((per_class, noise_dim)) * noise_scale @ noise_basis.T
        jitter = rng.standard_normal((per_class, dim)) * iso_scale
        X.append(means[c] + noise + jitter)
        y.append(np.full(per_class, c))
    return np.vstack(X), np.concatenate(y)


def leave_one_out_recall(Z, y) -> float:
    """Fraction of rows whose nearest other row (Euclidean) shares its label."""
    Z = np.asarray(Z, dtype=np.float64)
    sq = (Z * Z).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2 * Z @ Z.T
    np.fill_diagonal(d, np.inf)
    return float(np.mean(y[np.argmin(d, axis=1)] == y))


def toy_scene(rng, n_points=2000, extent=50.0):
    """Random box-like structures around the origin, as an (N, 3) array."""
    centers = rng.uniform(-extent, extent, size=(12, 2))
    pts = []
    per = n_points // len(centers)
    for cx, cy in centers:
        h = rng.uniform(1.0, 10.0)
        xy = rng.normal((cx, cy), 1.5, size=(per, 2))
        z = rng.uniform(-1.5, h, size=(per, 1))
        pts.append(np.hstack([xy, z]))
    ground = np.column_stack([rng.uniform(-extent, extent, (n_points // 4, 2)),
                              rng.normal(-1.7, 0.05, n_points // 4)])
    pts.append(ground)
    return np.vstack(pts)


def write_toy_sequence(root, n_scans=6, step=2.0, seed=0, revisit=True):
    """Write ``velodyne/*.bin`` and ``poses.txt`` for a straight drive.

    The vehicle moves ``step`` meters along x per frame through one static
    scene; with ``revisit`` the second half retraces the first half.
    """
    root = Path(root)
    (root / "velodyne").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    world = toy_scene(rng)
    xs = np.arange(n_scans) * step
    if revisit:
        half = (n_scans + 1) // 2
        xs = np.concatenate([xs[:half], xs[:n_scans - half][::-1]])
    lines = []
    for i, x in enumerate(xs):
        local = world - np.array([x, 0.0, 0.0])
        local = local + rng.normal(0, 0.02, local.shape)
        cloud = PointCloud.from_xyz(local, rng.uniform(0, 1, len(local)), i)
        write_kitti_scan(cloud, root / "velodyne" / f"{i:06d}.bin")
        lines.append(f"1 0 0 {x:.6f} 0 1 0 0 0 0 1 0")
    (root / "poses.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root
