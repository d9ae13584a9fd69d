"""Time single-query retrieval in the transformed space for growing databases."""
import argparse
import time

import numpy as np

from mapvlm_pr import DescriptorSet
from mapvlm_pr.mapvlm import build_metric
from mapvlm_pr.metric_index import build_index, query_knn


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 10000, 50000])
    ap.add_argument("--dim", type=int, default=768)
    ap.add_argument("--d2", type=int, default=256)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    W1 = np.linalg.qr(rng.standard_normal((args.dim, args.d2)))[0]
    model = build_metric(W1, rng.standard_normal((args.d2, args.d2)), np.zeros(args.dim),
                         np.ones(args.d2))
    for n in args.sizes:
        dset = DescriptorSet(rng.standard_normal((n, args.dim)), np.zeros((n, 3)), np.arange(n))
        t0 = time.perf_counter()
        index = build_index(dset, model)
        build = time.perf_counter() - t0
        q = rng.standard_normal(args.dim)
        times = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            query_knn(index, q, 20)
            times.append(time.perf_counter() - t0)
        print(f"N={n:>6}  build {build * 1e3:8.1f} ms  query median "
              f"{np.median(times) * 1e3:6.2f} ms")


if __name__ == "__main__":
    main()
