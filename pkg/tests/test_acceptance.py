"""Acceptance criteria A1-A8.

Each check returns ``(ok, detail)`` and prints one ``A<n> PASS|FAIL`` line.
Under pytest the lines are repeated in the terminal summary; or run
directly as ``python3 tests/test_acceptance.py``.
"""
import math
import struct
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from mapvlm_pr.descriptors import DescriptorSet, load_descriptors, save_descriptors
from mapvlm_pr.evaluation import (GroundTruth, auc, build_ground_truth, evaluate,
                                  precision_recall_curve, recall_at_n)
from mapvlm_pr.mapvlm import (KERNEL_LOCAL_SCALING, KERNEL_SQUARED_PRODUCT, MapvlmConfig,
                              MetricModel, adaptive_bandwidths, affinity_matrices,
                              build_metric, compute_covariance, fit, load_model,
                              pca_projection, reduce, save_model, scatter_matrices,
                              solve_generalized_eig)
from mapvlm_pr.metric_index import build_index, mahalanobis_distance, query_knn
from mapvlm_pr.projection import ProjectionConfig, project_bev, project_rv
from mapvlm_pr.scan_io import PointCloud, read_kitti_scan
from mapvlm_pr.synthetic import anisotropic_classes

sys.path.insert(0, str(Path(__file__).parent))
from oracles import (affinity_loop, bandwidths_loop, covariance_loop,  # noqa: E402
                     random_labeled, scatter_loop)
from test_projection import partition_holds, random_cloud, yaw_shift_ok  # noqa: E402


# collected for the terminal summary (see conftest.py)
LINES = []


def report(name, ok, detail, elapsed=None, budget=None):
    if budget is not None and elapsed is not None and elapsed >= budget:
        ok = False
        detail += f"; over budget {budget:g}s"
    timing = "" if elapsed is None else f" [{elapsed:.3f}s]"
    line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}{timing}"
    print(line, flush=True)
    LINES.append(line)
    return ok, line


def random_model(rng, D, d1, d2):
    W1 = np.linalg.qr(rng.standard_normal((D, d1)))[0]
    W2 = rng.standard_normal((d1, d2)) / math.sqrt(d1)
    return build_metric(W1, W2, rng.standard_normal(D), np.ones(d2))


def check_a1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    model = random_model(rng, 768, 256, 256)
    M = model.materialize_M()
    worst = 0.0
    for _ in range(1000):
        a, b = rng.standard_normal(768), rng.standard_normal(768)
        diff = a - b
        via_m = math.sqrt(max(float(diff @ M @ diff), 0.0))
        dist = mahalanobis_distance(a, b, model)
        worst = max(worst, abs(via_m - dist) / (1 + dist))
    return report("A1", worst <= 1e-9, f"max |dM - dT|/(1+d) = {worst:.2e} over 1000 pairs",
                  time.perf_counter() - t0, 10)


def check_a2():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    X, y = random_labeled(rng, 60, 8)
    errs = {}
    C, mean = compute_covariance(X)
    C0, m0 = covariance_loop(X)
    errs["cov"] = max(np.abs(C - C0).max(), np.abs(mean - m0).max())
    W1 = pca_projection(C, 8)
    Xr = reduce(X, W1, mean)
    sigma = adaptive_bandwidths(Xr, y, 7)
    errs["sigma"] = np.abs(sigma - bandwidths_loop(Xr, y, 7)).max()
    for kernel in (KERNEL_SQUARED_PRODUCT, KERNEL_LOCAL_SCALING):
        A_w, A_b = affinity_matrices(Xr, y, sigma, kernel)
        O_w, O_b = affinity_loop(Xr, y, sigma, kernel == KERNEL_SQUARED_PRODUCT)
        errs[f"aff[{kernel}]"] = max(np.abs(A_w - O_w).max(), np.abs(A_b - O_b).max())
        S_W, S_B = scatter_matrices(Xr, A_w, A_b)
        errs[f"scatter[{kernel}]"] = max(np.abs(S_W - scatter_loop(Xr, A_w)).max(),
                                         np.abs(S_B - scatter_loop(Xr, A_b)).max())
    oracle_ok = all(v <= 1e-10 for v in errs.values())

    # default kernel for the solver and metric checks
    A_w, A_b = affinity_matrices(Xr, y, sigma)
    S_W, S_B = scatter_matrices(Xr, A_w, A_b)
    scale = 1e-6
    W2, lam = solve_generalized_eig(S_B, S_W, 8, scale)
    S_W_reg = S_W + scale * np.trace(S_W) / 8 * np.eye(8)
    resid = np.linalg.norm(S_B @ W2 - S_W_reg @ W2 * lam, axis=0).max()
    M = build_metric(W1, W2, mean, lam).materialize_M()
    asym = np.abs(M - M.T).max()
    min_eig = np.linalg.eigvalsh((M + M.T) / 2).min()
    ok = oracle_ok and resid <= 1e-6 and asym <= 1e-12 and min_eig >= -1e-8
    worst = max(errs, key=errs.get)
    detail = (f"worst oracle err {errs[worst]:.1e} ({worst}); geig residual {resid:.1e}; "
              f"|M-M^T| {asym:.1e}; min eig(M) {min_eig:.1e}")
    return report("A2", ok, detail, time.perf_counter() - t0, 5)


def loo_recall(index, vectors, labels):
    """Leave-one-out Recall@1: each row queries the index with itself excluded."""
    hits = 0
    for i, fid in enumerate(index.frame_ids):
        top = query_knn(index, vectors[i], 1, exclude_ids=[int(fid)])
        hits += labels[top[0][0]] == labels[i]
    return hits / len(labels)


def check_a3():
    t0 = time.perf_counter()
    X, y = anisotropic_classes(seed=0)
    dset = DescriptorSet(X, np.zeros((len(X), 3)), np.arange(len(X)), y)
    model = fit(dset, MapvlmConfig(d1=32, d2=16, k_neighbor=7))
    learned = loo_recall(build_index(dset, model), X, y)
    euclid = loo_recall(build_index(dset, MetricModel.identity(X.shape[1])), X, y)
    ok = learned - euclid >= 0.05 and euclid <= 0.9
    return report("A3", ok, f"LOO Recall@1 learned {learned:.3f} vs Euclidean {euclid:.3f} "
                  f"(gain {learned - euclid:+.3f})", time.perf_counter() - t0, 60)


def check_a4():
    t0 = time.perf_counter()
    cfg = ProjectionConfig(w=900, h=32, fov_up=30.0, fov_down=10.0, max_range=60.0)
    fails = []
    rv = project_rv(PointCloud.from_xyz([[10.0, 0, 0]]), cfg).values
    if not (rv[8, 450] == 10.0 and np.count_nonzero(rv) == 1):
        fails.append("rv +x")
    rv = project_rv(PointCloud.from_xyz([[0, 10.0, 0]]), cfg).values
    if not (rv[8, 225] == 10.0 and np.count_nonzero(rv) == 1):
        fails.append("rv +y")
    bev = project_bev(PointCloud.from_xyz([[3.0, 4.0, 1.0]]), cfg).values
    u = math.floor(0.5 * (1 - math.atan2(4, 3) / math.pi) * 900)
    if not (bev[2, u] == 1.0 and np.count_nonzero(bev) == 1):
        fails.append("bev (3,4,1)")
    pts = random_cloud(np.random.default_rng(4), 100).points
    bad_k = [k for k in range(900) if not yaw_shift_ok(pts, k, 900)]
    if bad_k:
        fails.append(f"yaw k={bad_k[:5]}")
    rng = np.random.default_rng(44)
    nclt = ProjectionConfig.nclt()
    bad_p = sum(not partition_holds(random_cloud(rng, 300), nclt) for _ in range(20))
    if bad_p:
        fails.append(f"partition {bad_p}/20")
    detail = "hand cases, yaw k=0..899, partition on 20 clouds" if not fails else ", ".join(fails)
    return report("A4", not fails, detail, time.perf_counter() - t0, 5)


def check_a5():
    t0 = time.perf_counter()
    fails = []
    results, sets = [], []
    for q, rank in enumerate([1, 2, 6, None]):
        ids = list(range(100 * q, 100 * q + 20))
        if rank is not None:
            ids[rank - 1] = 1000 + q
        results.append(ids)
        sets.append(frozenset({1000 + q}))
    gt = GroundTruth(sets, 10.0)
    if [recall_at_n(results, gt, n) for n in (1, 5, 20)] != [0.25, 0.5, 0.75]:
        fails.append("AR@N hand case")
    gt3 = GroundTruth([frozenset({1}), frozenset({2}), frozenset({3})], 10.0)
    curve = precision_recall_curve([(1, 0.1), (9, 0.2), (3, 0.3)], gt3)
    if curve != [(1.0, 1 / 3), (0.5, 1 / 3), (2 / 3, 2 / 3)]:
        fails.append(f"PR sweep {curve}")
    if auc([(1.0, 0.5), (0.5, 1.0)]) != 0.875:
        fails.append("AUC 0.875")
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(100):
        res = [list(rng.permutation(40)[:25]) for _ in range(20)]
        g = GroundTruth([frozenset(rng.choice(40, rng.integers(0, 4), replace=False).tolist())
                         for _ in range(20)], 10.0)
        ar = [recall_at_n(res, g, n) for n in (1, 5, 20)]
        bad += not (ar[0] <= ar[1] <= ar[2])
    if bad:
        fails.append(f"monotonicity failed on {bad}/100")
    detail = "AR@N 0.25/0.5/0.75, PR sweep, AUC 0.875, monotone on 100 sets"
    return report("A5", not fails, detail if not fails else ", ".join(fails),
                  time.perf_counter() - t0, 2)


def check_a6():
    rng = np.random.default_rng(6)
    n = 200
    dset = DescriptorSet(rng.standard_normal((n, 64)), rng.uniform(0, 1000, (n, 3)), np.arange(n))
    index = build_index(dset, MetricModel.identity(64))
    ranked = [query_knn(index, v, 20) for v in dset.vectors.astype(np.float64)]
    gt = build_ground_truth(dset.positions, dset.positions, 10.0)
    rep = evaluate(ranked, gt, n)
    top_d = max(r[0][1] for r in ranked)
    return report("A6", rep.ar_at[1] == 1.0 and top_d <= 1e-9,
                  f"AR@1 {rep.ar_at[1]:.3f}, max top-1 distance {top_d:.1e}")


def check_a7():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    fails = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        dset = DescriptorSet(rng.standard_normal((50, 96)).astype(np.float32),
                             rng.uniform(-500, 500, (50, 3)).astype(np.float32),
                             rng.choice(2**32, 50, replace=False).astype(np.uint32))
        save_descriptors(dset, tmp / "a.dsc")
        back = load_descriptors(tmp / "a.dsc")
        save_descriptors(back, tmp / "b.dsc")
        if not (back.vectors.tobytes() == dset.vectors.tobytes()
                and back.positions.tobytes() == dset.positions.tobytes()
                and back.frame_ids.tobytes() == dset.frame_ids.tobytes()
                and (tmp / "a.dsc").read_bytes() == (tmp / "b.dsc").read_bytes()):
            fails.append("DSC1")
        model = random_model(rng, 40, 12, 5)
        save_model(model, tmp / "a.spd")
        m2 = load_model(tmp / "a.spd")
        if not all(getattr(m2, k).tobytes() == getattr(model, k).tobytes()
                   for k in ("W1", "W2", "mean", "lfda_eigenvalues")):
            fails.append("SPD1")
        recs = [(1.5, -2.25, 0.125, 0.5), (-70.0, 3.0e-3, 2.0, 1.0)]
        (tmp / "two.bin").write_bytes(b"".join(struct.pack("<4f", *r) for r in recs))
        cloud = read_kitti_scan(tmp / "two.bin")
        expect = np.array(recs, dtype=np.float32).astype(np.float64)
        if not (np.array_equal(cloud.points, expect[:, :3])
                and np.array_equal(cloud.intensity, expect[:, 3])):
            fails.append("KITTI 2-point scan")
    detail = "DSC1, SPD1 bit-exact; 2-point scan decoded" if not fails else ", ".join(fails)
    return report("A7", not fails, detail, time.perf_counter() - t0, 1)


def check_a8():
    rng = np.random.default_rng(8)
    model = random_model(rng, 768, 256, 256)
    n = 10_000
    dset = DescriptorSet(rng.standard_normal((n, 768)), np.zeros((n, 3)), np.arange(n))
    index = build_index(dset, model)
    q = rng.standard_normal(768)
    query_knn(index, q, 20)  # warm up
    times = []
    for _ in range(5):
        t0 = time.perf_counter()
        query_knn(index, q, 20)
        times.append(time.perf_counter() - t0)
    best, med = min(times), float(np.median(times))
    return report("A8", med < 0.05, f"single query over N=10000, d2=256: median "
                  f"{med * 1e3:.1f} ms (best {best * 1e3:.1f} ms)")


CHECKS = [check_a1, check_a2, check_a3, check_a4, check_a5, check_a6, check_a7, check_a8]


def test_a1_metric_equivalence():
    assert check_a1()[0]


def test_a2_mapvlm_oracles():
    assert check_a2()[0]


def test_a3_synthetic_benchmark():
    assert check_a3()[0]


def test_a4_projection():
    assert check_a4()[0]


def test_a5_evaluation():
    assert check_a5()[0]


def test_a6_self_retrieval():
    assert check_a6()[0]


def test_a7_round_trips():
    assert check_a7()[0]


def test_a8_retrieval_runtime():
    assert check_a8()[0]


if __name__ == "__main__":
    outcomes = [check()[0] for check in CHECKS]
    print(f"{sum(outcomes)}/{len(outcomes)} criteria passed")
    sys.exit(0 if all(outcomes) else 1)
