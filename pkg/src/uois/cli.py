"""Command-line entry point: ``uois <subcommand> [options]``.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 selfcheck failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import io
from .augment import augment_mask, make_refine_pair
from .core import TABLE, DirectionField, InvariantError, SemanticProbs, instance_masks
from .geometry import backproject
from .metrics import COLUMNS, aggregate, default_slack_radius, evaluate_pair
from .pipeline import OraclePredictor, PredictorContractError, paste_refined, refine_seam, segment_cloud
from .rng import substream
from .scenegen import apply_depth_noise, generate_views
from .selfcheck import FAULTS, run_selfcheck

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pool_map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


# --- gen-scenes ----------------------------------------------------------------

def _scene_names(index: int, views: int) -> list[str]:
    if views == 1:
        return [f"scene_{index:05d}"]
    return [f"scene_{index:05d}_v{v}" for v in range(views)]


def _gen_one(index: int, cfg: dict, out: Path) -> int:
    scfg = config_mod.scene_config(cfg)
    rng = substream(cfg["seed"], index)
    views = generate_views(scfg, rng)
    for name, s in zip(_scene_names(index, scfg.views_per_scene), views):
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        depth, valid = s.depth, s.valid
        if cfg["gen"]["depth_noise"]:
            cloud = apply_depth_noise(backproject(depth, s.camera, valid), config_mod.noise_config(cfg), rng)
            depth = cloud.xyz[..., 2]
        io.write_depth(d / "depth.png", depth, valid)
        io.write_labels(d / "label.png", s.instances)
        io.write_png8(d / "semantic.png", s.semantic.labels)
        io.write_png8(d / "rgb.png", s.rgb)
        io.write_pose(d / "pose.json", s.pose)
    return len(views)


def cmd_gen_scenes(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scfg = config_mod.scene_config(cfg)
    io.write_json(out / "camera.json", scfg.camera().to_dict())
    io.write_json(out / "generator.json", {"seed": cfg["seed"], "scene": cfg["scene"], "gen": cfg["gen"], "noise": cfg["noise"]})
    n = cfg["gen"]["count"]
    done = _pool_map(partial(_gen_one, cfg=cfg, out=out), range(n), cfg["workers"])
    print(f"wrote {sum(done)} views of {n} scenes to {out}")
    return EXIT_OK


# --- segment -------------------------------------------------------------------

class FilePredictor:
    """Serves cached network outputs: ``semantic.uois`` (HxWx3) and ``directions.uois`` (HxWx2)."""

    def __init__(self, folder: Path):
        self.folder = Path(folder)

    def __call__(self, cloud):
        probs = io.read_direction_file(self.folder / "semantic.uois")
        dirs = io.read_direction_file(self.folder / "directions.uois")
        if dirs.shape[2] != 2:
            raise PredictorContractError(f"{self.folder / 'directions.uois'}: expected 2 channels, got {dirs.shape[2]}")
        valid = np.hypot(dirs[..., 0], dirs[..., 1]) > 0.5
        try:
            return SemanticProbs(probs), DirectionField(np.where(valid[..., None], dirs, 0.0), valid)
        except InvariantError as exc:
            raise PredictorContractError(f"predictor output invalid ({self.folder}): {exc}") from None


def _predictor_for(rec: io.SceneRecord, index: int, cfg: dict, args):
    if args.predictor == "file":
        return FilePredictor(Path(args.predictions) / rec.name)
    if rec.labels is None:
        raise io.DataError(f"{rec.name}: the oracle predictor needs label.png")
    o = cfg["oracle"]
    return OraclePredictor(rec.labels, o["direction_noise_deg"], o["label_flip_prob"], seed=cfg["seed"], stream=index)


def _emit_refine(rec, inst, out_dir: Path, pad_frac: float) -> None:
    rdir = out_dir / "refine"
    rdir.mkdir(parents=True, exist_ok=True)
    rgb = rec.rgb if rec.rgb is not None else np.zeros(rec.depth.shape + (3,), np.uint8)
    entries = []
    for iid, pair in refine_seam(inst, rgb, pad_frac):
        stem = f"{iid:03d}"
        io.write_png8(rdir / f"{stem}_rgb.png", pair.rgb_crop)
        io.write_png8(rdir / f"{stem}_mask.png", pair.mask_crop.astype(np.uint8) * 255)
        entries.append({"instance": iid, "box": list(pair.crop_box), "rgb": f"{stem}_rgb.png",
                        "mask": f"{stem}_mask.png", "refined": f"{stem}_refined.png"})
    io.write_json(rdir / "refine.json", {"rgb_missing": rec.rgb is None, "crops": entries})


def _apply_refined(rec, inst, refined_root: Path):
    rdir = refined_root / rec.name / "refine"
    manifest = io.read_json(rdir / "refine.json")
    entries = []
    for e in manifest.get("crops", []):
        crop = io.read_mask(rdir / e.get("refined", f"{e['instance']:03d}_refined.png"))
        entries.append((crop, tuple(float(v) for v in e["box"])))
    return paste_refined(entries, inst.grid, table=inst.labels == TABLE)


def _segment_one(item, cfg: dict, args) -> dict:
    index, name = item
    try:
        rec = io.load_scene(args.data, name, need_labels=args.predictor == "oracle")
        cloud = backproject(rec.depth, rec.camera, rec.valid)
        params = config_mod.segment_params(cfg)
        inst, _ = segment_cloud(cloud, _predictor_for(rec, index, cfg, args), params)
        out_dir = Path(args.out) / name
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.emit_refine and inst.num_instances:
            _emit_refine(rec, inst, out_dir, cfg["refine"]["pad_frac"])
        if args.refined_masks:
            inst = _apply_refined(rec, inst, Path(args.refined_masks))
        io.write_labels(out_dir / "label.png", inst)
        return {"scene": name, "instances": inst.num_instances}
    except (io.DataError, InvariantError, OSError) as exc:
        return {"scene": name, "error": str(exc)}


def cmd_segment(args, cfg) -> int:
    if args.predictor == "file" and not args.predictions:
        raise UsageError("--predictor file needs --predictions DIR")
    names = io.list_scenes(args.data)
    if not names:
        raise io.DataError(f"{args.data}: no scenes found")
    Path(args.out).mkdir(parents=True, exist_ok=True)
    results = _pool_map(partial(_segment_one, cfg=cfg, args=args), list(enumerate(names)), cfg["workers"])
    failed = [r for r in results if "error" in r]
    for r in failed:
        _err(r["error"])
    io.write_json(Path(args.out) / "segment.json", {"scenes": results})
    print(f"segmented {len(results) - len(failed)}/{len(results)} scenes into {args.out}")
    return EXIT_DATA if failed else EXIT_OK


# --- evaluate ------------------------------------------------------------------

def _label_files(root: Path) -> dict:
    if not root.is_dir():
        raise io.DataError(f"{root}: not a directory")
    return {p.parent.name: p for p in sorted(root.glob("*/label.png"))}


def _evaluate_one(item, slack) -> tuple:
    name, pred_path, gt_path = item
    try:
        pred, gt = io.read_labels(pred_path), io.read_labels(gt_path)
        if pred.labels.shape != gt.labels.shape:
            raise io.DataError(f"{name}: prediction {pred.labels.shape} and ground truth {gt.labels.shape} differ in size")
        radius = default_slack_radius(gt.grid) if slack is None else slack
        return evaluate_pair(pred, gt, radius, image_id=name), None
    except io.DataError as exc:
        return None, str(exc)


def cmd_evaluate(args, cfg) -> int:
    pred, gt = _label_files(Path(args.pred)), _label_files(Path(args.gt))
    missing_pred = sorted(set(gt) - set(pred))
    missing_gt = sorted(set(pred) - set(gt))
    for n in missing_pred:
        _err(f"missing prediction for {n}")
    for n in missing_gt:
        _err(f"missing ground truth for {n}")
    common = sorted(set(pred) & set(gt))
    if not common:
        _err("no prediction/ground-truth pairs to evaluate")
        return EXIT_DATA
    slack = cfg["metrics"]["slack_radius"]
    results = _pool_map(partial(_evaluate_one, slack=slack), [(n, pred[n], gt[n]) for n in common], cfg["workers"])
    scores = [s for s, _ in results if s is not None]
    bad = [e for _, e in results if e is not None]
    for e in bad:
        _err(e)
    report = aggregate(scores, cfg["metrics"]["averaging"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", *COLUMNS])
        for s in scores:
            w.writerow([s.image_id, *(f"{v:.6f}" for v in s.row()[1:])])
    summary = report.summary()
    summary.update({"slack_radius": slack, "missing_prediction": missing_pred,
                    "missing_ground_truth": missing_gt, "errors": bad})
    io.write_json(out / "summary.json", summary)
    m = report.mean
    print(f"{len(scores)} images  Overlap P/R/F {m['overlap_p']:.2f}/{m['overlap_r']:.2f}/{m['overlap_f']:.2f}"
          f"  Boundary P/R/F {m['boundary_p']:.2f}/{m['boundary_r']:.2f}/{m['boundary_f']:.2f}")
    return EXIT_DATA if (missing_pred or missing_gt or bad) else EXIT_OK


# --- augment-gen ---------------------------------------------------------------

def _augment_one(item, cfg: dict, args) -> dict:
    index, name = item
    try:
        rec = io.load_scene(args.data, name, need_labels=True)
    except (io.DataError, InvariantError) as exc:
        return {"scene": name, "error": str(exc)}
    acfg = config_mod.augment_config(cfg)
    k_max = cfg["augment_gen"]["samples_per_instance"]
    rgb = rec.rgb if rec.rgb is not None else np.zeros(rec.depth.shape + (3,), np.uint8)
    out_dir = Path(args.out) / name
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = []
    for iid, gt_mask in instance_masks(rec.labels):
        for k in range(k_max):
            stream = (index << 32) | (iid << 16) | k
            rng = substream(cfg["seed"], stream)
            perturbed = augment_mask(gt_mask, acfg, rng)
            pair = make_refine_pair(rgb, gt_mask, perturbed, cfg["refine"]["pad_frac"])
            stem = f"{iid:03d}_{k:02d}"
            io.write_png8(out_dir / f"{stem}_rgb.png", pair.rgb_crop)
            io.write_png8(out_dir / f"{stem}_mask.png", pair.mask_crop.astype(np.uint8) * 255)
            io.write_png8(out_dir / f"{stem}_gt.png", pair.gt_crop.astype(np.uint8) * 255)
            pairs.append({"id": f"{name}/{stem}", "source": name, "instance": iid, "sample": k,
                          "seed": cfg["seed"], "stream": stream, "box": list(pair.crop_box),
                          "rgb": f"{stem}_rgb.png", "mask": f"{stem}_mask.png", "gt": f"{stem}_gt.png"})
    io.write_json(out_dir / "pairs.json", {"rgb_missing": rec.rgb is None, "pairs": pairs})
    return {"scene": name, "pairs": len(pairs)}


def cmd_augment_gen(args, cfg) -> int:
    names = io.list_scenes(args.data)
    if not names:
        raise io.DataError(f"{args.data}: no scenes found")
    results = _pool_map(partial(_augment_one, cfg=cfg, args=args), list(enumerate(names)), cfg["workers"])
    failed = [r for r in results if "error" in r]
    for r in failed:
        _err(r["error"])
    total = sum(r.get("pairs", 0) for r in results)
    print(f"wrote {total} refinement pairs from {len(results) - len(failed)} scenes to {args.out}")
    return EXIT_DATA if failed else EXIT_OK


# --- selfcheck / config ----------------------------------------------------------

def cmd_selfcheck(args, cfg) -> int:
    results = run_selfcheck(cfg["seed"], args.trials, args.inject_fault)
    for r in results:
        print(r.line())
    if args.out:
        io.write_json(args.out, {"seed": cfg["seed"], "trials": args.trials,
                                 "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]})
    failed = [r.name for r in results if not r.passed]
    if failed:
        _err("failed: " + ", ".join(failed))
        return EXIT_CHECK
    return EXIT_OK


def cmd_config(args, cfg) -> int:
    text = json.dumps(cfg, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


# --- argument parsing ------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", help="JSON config file (keys not given keep their defaults)")
    p.add_argument("--seed", type=int, help="overrides config key 'seed'")
    p.add_argument("--workers", type=int, help="overrides config key 'workers'")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. voting.nms_radius=40 (VALUE is JSON)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uois", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()

    p = sub.add_parser("gen-scenes", parents=[common], help="render a seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, help="overrides config key 'gen.count'")
    p.add_argument("--depth-noise", action="store_true", help="sets 'gen.depth_noise'")
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("segment", parents=[common], help="depth-only instance segmentation of a dataset")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--out", required=True)
    p.add_argument("--predictor", choices=("oracle", "file"), default="oracle")
    p.add_argument("--predictions", help="per-scene folders with semantic.uois and directions.uois")
    p.add_argument("--exact-voting", action="store_true", help="sets 'segment.method' to exact")
    p.add_argument("--no-imp", action="store_true", help="sets 'segment.use_imp' to false")
    p.add_argument("--direction-noise", type=float, help="overrides 'oracle.direction_noise_deg'")
    p.add_argument("--label-flip", type=float, help="overrides 'oracle.label_flip_prob'")
    p.add_argument("--emit-refine", action="store_true", help="write refiner input crops per instance")
    p.add_argument("--refined-masks", help="root holding <scene>/refine/refine.json and refined crops")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", parents=[common], help="Overlap and Boundary P/R/F of predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--slack-radius", type=int, help="overrides 'metrics.slack_radius'")
    p.add_argument("--averaging", choices=("macro", "micro"), help="overrides 'metrics.averaging'")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("augment-gen", parents=[common], help="perturbed-mask crops for refiner training")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, help="overrides 'augment_gen.samples_per_instance'")
    p.set_defaults(func=cmd_augment_gen)

    p = sub.add_parser("selfcheck", parents=[common], help="gradient, oracle and determinism checks")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--inject-fault", choices=FAULTS, help="corrupt one loss gradient (tests the checker)")
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("config", parents=[common], help="print the effective config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config)
    return parser


_FLAG_KEYS = {
    "seed": "seed",
    "workers": "workers",
    "count": "gen.count",
    "slack_radius": "metrics.slack_radius",
    "averaging": "metrics.averaging",
    "direction_noise": "oracle.direction_noise_deg",
    "label_flip": "oracle.label_flip_prob",
    "samples": "augment_gen.samples_per_instance",
}
_SWITCHES = {
    "depth_noise": ("gen.depth_noise", True),
    "exact_voting": ("segment.method", "exact"),
    "no_imp": ("segment.use_imp", False),
}


def resolve_config(args) -> dict:
    cfg = config_mod.load_config(args.config)
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg = config_mod.override(cfg, key.strip(), value)
    for attr, key in _FLAG_KEYS.items():
        v = getattr(args, attr, None)
        if v is not None:
            cfg = config_mod.override(cfg, key, v)
    for attr, (key, value) in _SWITCHES.items():
        if getattr(args, attr, False):
            cfg = config_mod.override(cfg, key, value)
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (UsageError, config_mod.ConfigError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (io.DataError, InvariantError) as exc:
        _err(str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
