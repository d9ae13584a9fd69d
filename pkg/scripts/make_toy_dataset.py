"""Write a small synthetic scan sequence plus a matching config file.

The sequence drives along x through a static scene and retraces its path,
so loop-closure evaluation has something to find. See the README for the
CLI walk-through that uses it.
"""
import argparse
from pathlib import Path

from mapvlm_pr.synthetic import write_toy_sequence

CONFIG = """\
dataset.scan_dir = velodyne
dataset.pose_file = poses.txt
projection.preset = nclt
descriptor.target_dim = 640
labels.class_radius = 5
mapvlm.d1 = {d1}
mapvlm.d2 = {d2}
eval.exclusion_frames = 2
output.dir = {out}
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("root", type=Path)
    ap.add_argument("--scans", type=int, default=40)
    ap.add_argument("--step", type=float, default=1.0)
    args = ap.parse_args()
    write_toy_sequence(args.root, n_scans=args.scans, step=args.step)
    d1 = min(16, args.scans - 1)
    cfg = args.root / "toy.cfg"
    cfg.write_text(CONFIG.format(d1=d1, d2=max(1, d1 // 2), out=args.root / "out"))
    print(f"wrote {args.scans} scans under {args.root}, config {cfg}")


if __name__ == "__main__":
    main()
