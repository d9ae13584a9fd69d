"""Command-line entry point: ``project``, ``describe``, ``fit-metric``,
``evaluate`` and ``mine`` over one shared config file."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import descriptors as dsc
from . import evaluation as ev
from . import mapvlm
from .config import BASELINE_DIM, PipelineConfig, load_config
from .errors import ConfigError, DimensionError, PipelineError, ShapeMismatch
from .metric_index import build_index, query_knn
from .projection import project_pgv, write_pgm
from .scan_io import (load_sequence, read_kitti_scan, read_pose_file, scan_position,
                      sequence_positions)
from .triplet import TripletBatch, mine_hardest, triplet_loss

log = logging.getLogger("mapvlm_pr")


def _out_dir(cfg: PipelineConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def _iter_pgvs(cfg: PipelineConfig, seq):
    for path, fid in zip(seq.scan_paths, seq.frame_ids):
        try:
            cloud = read_kitti_scan(path, fid)
        except (PipelineError, OSError) as exc:
            raise type(exc)(f"while reading scan {path}: {exc}") from exc
        yield path, fid, project_pgv(cloud, cfg.projection)


def cmd_project(cfg: PipelineConfig) -> int:
    cfg.require_dataset()
    out = _out_dir(cfg)
    dump = out / "pgv"
    dump.mkdir(exist_ok=True)
    seq = load_sequence(cfg.scan_dir, cfg.pose_file)
    count = 0
    with open(out / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_id", "source"])
        for path, fid, pgv in _iter_pgvs(cfg, seq):
            for c, img in enumerate(pgv.channels):
                write_pgm(img, dump / f"{fid:06d}_c{c:02d}.pgm")
            writer.writerow([fid, str(path)])
            fh.flush()
            count += 1
    print(f"projected {count} scans into {dump}")
    return 0


def cmd_describe(cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    if cfg.descriptor_source == "baseline":
        cfg.require_dataset()
        dim = cfg.target_dim or BASELINE_DIM
        seq = load_sequence(cfg.scan_dir, cfg.pose_file)
        vecs = [dsc.baseline_descriptor(pgv, dim) for _, _, pgv in _iter_pgvs(cfg, seq)]
        dset = dsc.DescriptorSet(np.array(vecs).reshape(len(vecs), dim),
                                 sequence_positions(seq), seq.frame_ids)
    else:
        if cfg.descriptor_path is None:
            raise ConfigError("descriptor.source = external needs descriptor.path")
        path = cfg.descriptor_path
        dset = (dsc.load_descriptor_csv(path) if path.suffix.lower() == ".csv"
                else dsc.load_descriptors(path))
        if cfg.target_dim is not None and len(dset) and dset.dim != cfg.target_dim:
            raise DimensionError(
                f"{path}: descriptors have D={dset.dim}, config expects {cfg.target_dim}")
        if cfg.pose_file is not None:
            seq_pos = np.array([scan_position(p) for p in read_pose_file(cfg.pose_file)])
            if len(seq_pos) != len(dset):
                raise ShapeMismatch(
                    f"{path} has {len(dset)} descriptors but {cfg.pose_file} has {len(seq_pos)} poses")
            dset = dsc.DescriptorSet(dset.vectors, seq_pos, dset.frame_ids)
    target = out / "descriptors.dsc"
    dsc.save_descriptors(dset, target)
    print(f"wrote {len(dset)} descriptors (D={dset.dim}) to {target}")
    return 0


def cmd_fit_metric(cfg: PipelineConfig, descriptors_path=None) -> int:
    out = _out_dir(cfg)
    path = Path(descriptors_path) if descriptors_path else out / "descriptors.dsc"
    dset = dsc.load_descriptors(path)
    labels = dsc.assign_place_classes(dset.positions, cfg.class_radius)
    dset = dset.with_labels(labels)
    mask = mapvlm.filter_small_classes(labels, cfg.mapvlm.min_class_size)
    n_classes = len(np.unique(labels))
    n_kept = len(np.unique(labels[mask]))
    print(f"{len(dset)} descriptors, {n_classes} place classes "
          f"({n_kept} with >= {cfg.mapvlm.min_class_size} members)")
    model = mapvlm.fit(dset, cfg.mapvlm)
    total_var = dset.vectors[mask].astype(np.float64).var(axis=0).sum()
    energy = model.pca_eigenvalues.sum() / total_var if total_var > 0 else 0.0
    target = out / "metric.spd"
    mapvlm.save_model(model, target)
    top = ", ".join(f"{v:.4g}" for v in model.lfda_eigenvalues[:5])
    print(f"top eigenvalues: {top}")
    print(f"PCA energy kept: {energy:.4f} (d1={model.d1}, d2={model.d2})")
    print(f"wrote {target}")
    return 0


def _rank_all(qset, index, k, mode, exclusion):
    ranked = []
    for vec, fid in zip(qset.vectors, qset.frame_ids):
        excl = None
        if mode == "loop":
            excl = range(int(fid) - exclusion, int(fid) + exclusion + 1)
        ranked.append(query_knn(index, vec, k, excl))
    return ranked


def _model_for(metric, model_path, dim):
    if metric == "euclidean":
        return mapvlm.MetricModel.identity(dim)
    if model_path is None:
        raise ConfigError("--model is required unless --metric euclidean")
    model = mapvlm.load_model(model_path)
    if model.dim != dim:
        raise ShapeMismatch(f"{model_path}: model expects D={model.dim}, descriptors have D={dim}")
    return model


def cmd_evaluate(cfg: PipelineConfig, query_desc, db_desc, model_path=None,
                 mode="place", metric="mapvlm", dump_results=False) -> int:
    out = _out_dir(cfg)
    qset = dsc.load_descriptors(query_desc)
    dbset = dsc.load_descriptors(db_desc)
    tag = f"{mode}_{metric}"
    if len(qset) and len(dbset) and qset.dim != dbset.dim:
        raise ShapeMismatch(f"{query_desc} has D={qset.dim} but {db_desc} has D={dbset.dim}")
    if not len(qset) or not len(dbset):
        warnings.warn("empty query or database set; every metric is reported as 0")
        report = ev.EvalReport({n: 0.0 for n in ev.AR_NS}, 0.0, 0.0, 0.0, 0.0, [], len(qset), 0)
    else:
        model = _model_for(metric, model_path, dbset.dim)
        index = build_index(dbset, model)
        k = max(max(ev.AR_NS), ev.one_percent_n(len(dbset)))
        ranked = _rank_all(qset, index, k, mode, cfg.exclusion_frames)
        gt = ev.build_ground_truth(
            qset.positions, dbset.positions, cfg.gt_radius_for(mode), cfg.exclusion_frames,
            qset.frame_ids, dbset.frame_ids, same_sequence=(mode == "loop"))
        if gt.n_evaluable == 0:
            warnings.warn("no query has a ground-truth match; recall values are 0")
        report = ev.evaluate(ranked, gt, len(dbset))
        if dump_results:
            with open(out / f"results_{tag}.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["query_id", "rank", "frame_id", "distance"])
                for qid, row in zip(qset.frame_ids, ranked):
                    for rank, (fid, d) in enumerate(row, 1):
                        writer.writerow([int(qid), rank, fid, f"{d:.9g}"])
    report.write(out / f"report_{tag}.txt")
    report.write_pr_csv(out / f"pr_{tag}.csv")
    print("\n".join(report.as_lines()))
    return 0


def cmd_mine(cfg: PipelineConfig, descriptors_path=None, model_path=None,
             metric="mapvlm") -> int:
    """Hardest positive/negative per query; positives lie within the gt radius."""
    out = _out_dir(cfg)
    path = Path(descriptors_path) if descriptors_path else out / "descriptors.dsc"
    dset = dsc.load_descriptors(path)
    model = _model_for(metric, model_path, dset.dim)
    radius = cfg.gt_radius_for("place")
    xy = dset.positions[:, :2].astype(np.float64)
    rows = 0
    with open(out / "triplets.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "pos_id", "neg_id", "loss"])
        for i in range(len(dset)):
            dist = np.hypot(*(xy - xy[i]).T)
            pos = np.flatnonzero(dist <= radius)
            pos = pos[pos != i]
            neg = np.flatnonzero(dist > radius)
            if not len(pos) or not len(neg):
                continue
            batch = TripletBatch(dset.vectors[i], dset.vectors[pos], dset.vectors[neg], cfg.margin)
            p, n = mine_hardest(batch.query, batch.positives, batch.negatives, model)
            loss = triplet_loss(batch, model, cfg.hinge)
            writer.writerow([int(dset.frame_ids[i]), int(dset.frame_ids[pos[p]]),
                             int(dset.frame_ids[neg[n]]), f"{loss:.9g}"])
            rows += 1
    print(f"wrote {rows} triplets to {out / 'triplets.csv'}")
    return 0


def _overrides(pairs):
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapvlm-pr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="pipeline config file (key = value lines)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key; repeatable")
    common.add_argument("-o", "--output-dir", help="shorthand for --set output.dir=...")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("project", parents=[common], help="write pseudo-global view dumps")
    sub.add_parser("describe", parents=[common], help="produce a DSC1 descriptor file")

    p = sub.add_parser("fit-metric", parents=[common], help="learn the metric (SPD1 file)")
    p.add_argument("--descriptors", help="DSC1 input (default: <output>/descriptors.dsc)")

    p = sub.add_parser("evaluate", parents=[common], help="retrieval metrics")
    p.add_argument("--query", required=True, help="query DSC1 file")
    p.add_argument("--db", required=True, help="database DSC1 file")
    p.add_argument("--model", help="SPD1 model file")
    p.add_argument("--mode", choices=("place", "loop"), default="place")
    p.add_argument("--metric", choices=("mapvlm", "euclidean"), default="mapvlm")
    p.add_argument("--dump-results", action="store_true",
                   help="also write ranked results as CSV")

    p = sub.add_parser("mine", parents=[common], help="hardest-triplet mining to CSV")
    p.add_argument("--descriptors", help="DSC1 input (default: <output>/descriptors.dsc)")
    p.add_argument("--model", help="SPD1 model file")
    p.add_argument("--metric", choices=("mapvlm", "euclidean"), default="mapvlm")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _overrides(args.set)
        if args.output_dir:
            overrides["output.dir"] = args.output_dir
        cfg = load_config(args.config, overrides)
        if args.command == "project":
            return cmd_project(cfg)
        if args.command == "describe":
            return cmd_describe(cfg)
        if args.command == "fit-metric":
            return cmd_fit_metric(cfg, args.descriptors)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.query, args.db, args.model, args.mode,
                                args.metric, args.dump_results)
        return cmd_mine(cfg, args.descriptors, args.model, args.metric)
    except (PipelineError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
