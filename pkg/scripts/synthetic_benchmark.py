"""Euclidean vs learned-metric leave-one-out Recall@1 on the anisotropic-noise benchmark."""
import argparse
import time

import numpy as np

from mapvlm_pr import DescriptorSet, MapvlmConfig, fit
from mapvlm_pr.mapvlm import KERNELS
from mapvlm_pr.synthetic import anisotropic_classes, leave_one_out_recall


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--d1", type=int, default=32)
    ap.add_argument("--d2", type=int, default=16)
    ap.add_argument("--k", type=int, default=7)
    ap.add_argument("--noise-scale", type=float, default=10.0)
    args = ap.parse_args()

    print(f"{'seed':>4} {'euclid':>7} " + " ".join(f"{k:>16}" for k in KERNELS) + "  fit[s]")
    for seed in args.seeds:
        X, y = anisotropic_classes(seed=seed, noise_scale=args.noise_scale)
        dset = DescriptorSet(X, np.zeros((len(X), 3)), np.arange(len(X)), y)
        row = [leave_one_out_recall(X, y)]
        t0 = time.perf_counter()
        for kernel in KERNELS:
            model = fit(dset, MapvlmConfig(d1=args.d1, d2=args.d2, k_neighbor=args.k,
                                           kernel=kernel))
            row.append(leave_one_out_recall(model.transform(X), y))
        elapsed = time.perf_counter() - t0
        print(f"{seed:>4} {row[0]:>7.3f} " + " ".join(f"{v:>16.3f}" for v in row[1:])
              + f"  {elapsed:.2f}")


if __name__ == "__main__":
    main()
