"""MAPVLM metric learning.

PCA to ``d1`` dimensions, heat-kernel affinities with per-sample adaptive
bandwidths, locality-weighted within/between-class scatter, and a generalized
symmetric eigenproblem giving ``W2``. The learned Mahalanobis matrix is
``M = W1 W2 W2^T W1^T``; it is kept in factored form.

All fitting runs in float64.
"""
from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .descriptors import DescriptorSet
from .errors import (BadMagic, ConfigError, DegenerateClass, EmptySet,
                     InsufficientData, NotSymmetric, ShapeMismatch,
                     SolverFailure, TruncatedFile)

log = logging.getLogger(__name__)

SPD_MAGIC = b"SPD1"
_SPD_HEADER = struct.Struct("<4sIII")

# exp(-d^2 / (s_i s_j)^2): the bandwidth product enters squared
KERNEL_SQUARED_PRODUCT = "squared_product"
# exp(-d^2 / (s_i s_j)): classic local-scaling heat kernel, scale invariant
KERNEL_LOCAL_SCALING = "local_scaling"
KERNELS = (KERNEL_SQUARED_PRODUCT, KERNEL_LOCAL_SCALING)

_SIGMA_FLOOR = 1e-12
_SYM_TOL = 1e-8


@dataclass(frozen=True)
class MapvlmConfig:
    d1: int = 256
    d2: int = 256
    k_neighbor: int = 7
    reg_epsilon_scale: float = 1e-6
    min_class_size: int = 2
    kernel: str = KERNEL_SQUARED_PRODUCT

    def __post_init__(self):
        if not 1 <= self.d2 <= self.d1:
            raise ConfigError(f"need 1 <= d2 <= d1, got d1={self.d1}, d2={self.d2}")
        if self.k_neighbor < 1:
            raise ConfigError("k_neighbor must be >= 1")
        if self.min_class_size < 2:
            raise ConfigError("min_class_size must be >= 2 (bandwidths need a neighbour)")
        if self.reg_epsilon_scale < 0:
            raise ConfigError("reg_epsilon_scale must be non-negative")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")


@dataclass(frozen=True)
class MetricModel:
    """Factors of the learned metric.

    ``W1`` is D x d1 with orthonormal columns, ``W2`` is d1 x d2. ``mean`` is
    the training descriptor mean; it cancels in every distance.
    """

    W1: np.ndarray
    W2: np.ndarray
    lfda_eigenvalues: np.ndarray
    mean: np.ndarray
    pca_eigenvalues: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.W1.shape[0]

    @property
    def d1(self) -> int:
        return self.W1.shape[1]

    @property
    def d2(self) -> int:
        return self.W2.shape[1]

    @property
    def transform_matrix(self) -> np.ndarray:
        """``T = W1 W2`` (D x d2); distances are Euclidean in ``x @ T``."""
        return self.W1 @ self.W2

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise ShapeMismatch(f"expected vectors of dimension {self.dim}, got {X.shape[-1]}")
        return (X - self.mean) @ self.W1 @ self.W2

    def materialize_M(self) -> np.ndarray:
        T = self.transform_matrix
        return T @ T.T

    @classmethod
    def identity(cls, dim: int) -> "MetricModel":
        """Euclidean metric expressed as a model (W1 = W2 = I)."""
        eye = np.eye(dim)
        return cls(eye, eye.copy(), np.ones(dim), np.zeros(dim), np.ones(dim))


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _check_symmetric(A, name):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got {A.shape}")
    asym = np.max(np.abs(A - A.T)) if A.size else 0.0
    if asym > _SYM_TOL:
        raise NotSymmetric(f"{name} is not symmetric (max |A - A^T| = {asym:.3g})")


def compute_covariance(X):
    """Biased (1/N) covariance and mean of the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptySet("covariance needs at least one row")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / X.shape[0]
    return (C + C.T) / 2, mean


def pca_projection(C, d1: int, return_eigenvalues: bool = False):
    """Top-``d1`` unit eigenvectors of ``C`` as columns, largest eigenvalue first."""
    C = np.asarray(C, dtype=np.float64)
    _check_symmetric(C, "covariance")
    if not 1 <= d1 <= C.shape[0]:
        raise ConfigError(f"d1={d1} must lie in [1, {C.shape[0]}]")
    vals, vecs = np.linalg.eigh((C + C.T) / 2)
    order = np.argsort(vals)[::-1][:d1]
    W1 = _fix_signs(vecs[:, order])
    if return_eigenvalues:
        return W1, np.clip(vals[order], 0.0, None)
    return W1


def reduce(X, W1, mean) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    W1 = np.asarray(W1, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != W1.shape[0] or mean.shape != (W1.shape[0],):
        raise ShapeMismatch(
            f"cannot reduce X{X.shape} with W1{W1.shape} and mean{mean.shape}")
    return (X - mean) @ W1


def adaptive_bandwidths(X_red, labels, k: int) -> np.ndarray:
    """Distance from each sample to its k-th nearest same-class sample.

    Classes with fewer than ``k`` other members fall back to the farthest one.
    """
    X_red = np.asarray(X_red, dtype=np.float64)
    labels = np.asarray(labels)
    if k < 1:
        raise ValueError("k must be >= 1")
    sigma = np.empty(len(X_red))
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < 2:
            raise DegenerateClass(f"class {cls} has a single member (sample {idx[0]})")
        dist = cdist(X_red[idx], X_red[idx])
        np.fill_diagonal(dist, np.inf)
        kk = min(k, len(idx) - 1)
        sigma[idx] = np.partition(dist, kk - 1, axis=1)[:, kk - 1]
    return np.maximum(sigma, _SIGMA_FLOOR)


def affinity_matrices(X_red, labels, sigma, kernel: str = KERNEL_SQUARED_PRODUCT):
    """Within-class and between-class heat-kernel affinities.

    Both are symmetric, with disjoint off-diagonal supports; the diagonal of
    the within-class matrix is 1.
    """
    if kernel not in KERNELS:
        raise ConfigError(f"unknown kernel {kernel!r}")
    X_red = np.asarray(X_red, dtype=np.float64)
    labels = np.asarray(labels)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("bandwidths must be positive")
    d2 = cdist(X_red, X_red, "sqeuclidean")
    scale = np.outer(sigma, sigma)
    if kernel == KERNEL_SQUARED_PRODUCT:
        scale = scale * scale
    heat = np.exp(-d2 / scale)
    heat = (heat + heat.T) / 2
    same = labels[:, None] == labels[None, :]
    return np.where(same, heat, 0.0), np.where(same, 0.0, heat)


def _pairwise_scatter(X, A):
    # 1/2 sum_ij A_ij (x_i - x_j)(x_i - x_j)^T == X^T (diag(A 1) - A) X for symmetric A
    L = np.diag(A.sum(axis=1)) - A
    S = X.T @ L @ X
    return (S + S.T) / 2


def scatter_matrices(X_red, A_w, A_b):
    X_red = np.asarray(X_red, dtype=np.float64)
    n = X_red.shape[0]
    if A_w.shape != (n, n) or A_b.shape != (n, n):
        raise ShapeMismatch(f"affinities must be {n}x{n}")
    return _pairwise_scatter(X_red, A_w), _pairwise_scatter(X_red, A_b)


def solve_generalized_eig(S_B, S_W, d2: int, reg_epsilon_scale: float = 1e-6):
    """Leading solutions of ``S_B w = lambda (S_W + eps I) w``.

    ``eps = reg_epsilon_scale * trace(S_W) / d1`` (or ``reg_epsilon_scale``
    when the trace is zero). Reduction goes through the Cholesky factor of the
    regularized ``S_W``; returned columns satisfy ``w^T (S_W + eps I) w = 1``.
    """
    S_B = np.asarray(S_B, dtype=np.float64)
    S_W = np.asarray(S_W, dtype=np.float64)
    _check_symmetric(S_B, "S_B")
    _check_symmetric(S_W, "S_W")
    if S_B.shape != S_W.shape:
        raise ShapeMismatch(f"S_B{S_B.shape} and S_W{S_W.shape} differ")
    d1 = S_W.shape[0]
    if not 1 <= d2 <= d1:
        raise ConfigError(f"d2={d2} must lie in [1, {d1}]")
    tr = np.trace(S_W)
    eps = reg_epsilon_scale * tr / d1 if tr > 0 else reg_epsilon_scale
    S_W_reg = (S_W + S_W.T) / 2 + eps * np.eye(d1)
    try:
        L = linalg.cholesky(S_W_reg, lower=True)
    except linalg.LinAlgError as exc:
        raise SolverFailure(f"Cholesky of regularized S_W failed (eps={eps:.3g}): {exc}") from None
    tmp = linalg.solve_triangular(L, (S_B + S_B.T) / 2, lower=True)
    reduced = linalg.solve_triangular(L, tmp.T, lower=True)
    vals, vecs = np.linalg.eigh((reduced + reduced.T) / 2)
    order = np.argsort(vals)[::-1][:d2]
    W2 = linalg.solve_triangular(L.T, vecs[:, order], lower=False)
    return _fix_signs(W2), vals[order]


def build_metric(W1, W2, mean, eigvals, pca_eigenvalues=None) -> MetricModel:
    W1 = np.asarray(W1, dtype=np.float64)
    W2 = np.asarray(W2, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    eigvals = np.asarray(eigvals, dtype=np.float64)
    if W1.ndim != 2 or W2.ndim != 2 or W1.shape[1] != W2.shape[0]:
        raise ShapeMismatch(f"W1{W1.shape} and W2{W2.shape} do not conform")
    if mean.shape != (W1.shape[0],) or eigvals.shape != (W2.shape[1],):
        raise ShapeMismatch("mean/eigenvalue lengths do not match the factors")
    if not np.allclose(W1.T @ W1, np.eye(W1.shape[1]), atol=1e-8):
        raise ValueError("W1 columns are not orthonormal")
    if not np.any(W2):
        warnings.warn("W2 is identically zero; the learned metric is degenerate", RuntimeWarning)
    if pca_eigenvalues is not None:
        pca_eigenvalues = np.asarray(pca_eigenvalues, dtype=np.float64)
    return MetricModel(W1, W2, eigvals, mean, pca_eigenvalues)


def filter_small_classes(labels, min_class_size: int) -> np.ndarray:
    """Boolean mask keeping samples whose class has at least ``min_class_size`` members."""
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    keep = classes[counts >= min_class_size]
    return np.isin(labels, keep)


def fit(dset: DescriptorSet, cfg: MapvlmConfig = MapvlmConfig()) -> MetricModel:
    """Learn the metric from a labelled descriptor set."""
    if dset.labels is None:
        raise ValueError("descriptor set has no place-class labels")
    mask = filter_small_classes(dset.labels, cfg.min_class_size)
    X = dset.vectors[mask].astype(np.float64)
    y = dset.labels[mask]
    n_classes = len(np.unique(y))
    if n_classes < 2:
        raise InsufficientData(
            f"{n_classes} class(es) with >= {cfg.min_class_size} members "
            f"remain out of {len(np.unique(dset.labels))}; need at least 2")
    D = X.shape[1]
    if cfg.d1 > D:
        raise ConfigError(f"d1={cfg.d1} exceeds descriptor dimension {D}")
    if len(X) < cfg.d1 + 1:
        warnings.warn(f"only {len(X)} samples for d1={cfg.d1}; S_W will be rank deficient",
                      RuntimeWarning)
    log.info("fitting on %d samples, %d classes, D=%d", len(X), n_classes, D)

    C, mean = compute_covariance(X)
    W1, pca_vals = pca_projection(C, cfg.d1, return_eigenvalues=True)
    X_red = reduce(X, W1, mean)
    sigma = adaptive_bandwidths(X_red, y, cfg.k_neighbor)
    A_w, A_b = affinity_matrices(X_red, y, sigma, cfg.kernel)
    S_W, S_B = scatter_matrices(X_red, A_w, A_b)
    W2, lam = solve_generalized_eig(S_B, S_W, cfg.d2, cfg.reg_epsilon_scale)
    return build_metric(W1, W2, mean, lam, pca_vals)


def save_model(model: MetricModel, path) -> None:
    with open(Path(path), "wb") as fh:
        fh.write(_SPD_HEADER.pack(SPD_MAGIC, model.dim, model.d1, model.d2))
        for arr in (model.mean, model.W1, model.W2, model.lfda_eigenvalues):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> MetricModel:
    raw = Path(path).read_bytes()
    if raw[:4] != SPD_MAGIC:
        raise BadMagic(f"{path}: expected magic {SPD_MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < _SPD_HEADER.size:
        raise TruncatedFile(f"{path}: header is incomplete")
    _, D, d1, d2 = _SPD_HEADER.unpack_from(raw)
    sizes = (D, D * d1, d1 * d2, d2)
    expected = _SPD_HEADER.size + 8 * sum(sizes)
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header implies {expected}")
    parts, off = [], _SPD_HEADER.size
    for n in sizes:
        parts.append(np.frombuffer(raw, "<f8", n, off).astype(np.float64))
        off += 8 * n
    mean, W1, W2, lam = parts
    return MetricModel(W1.reshape(D, d1), W2.reshape(d1, d2), lam, mean)
