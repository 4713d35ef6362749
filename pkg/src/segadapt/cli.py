"""Command-line surface: drives dataset creation, every training phase,
evaluation, reporting and ablation sweeps from a single JSON config."""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys

from . import trainer
from .config import ExperimentConfig, load_config, set_by_path


def cmd_generate_data(config: ExperimentConfig, force: bool = False):
    manifest = trainer.run_phase_generate_data(config, force)
    n = len(manifest["files"])
    print(f"wrote {n} dataset entries under {config.data_dir}")
    return 0


def cmd_pretrain(config: ExperimentConfig, force: bool = False):
    m = trainer.run_phase_pretrain(config, force)
    p = m["phases"]["pretrain"]
    print(f"pretrain done: source mIoU {p['source_miou']:.4f}, "
          f"baseline target mIoU {p['baseline_target_miou']:.4f}")
    return 0


def cmd_warmup(config: ExperimentConfig, force: bool = False):
    m = trainer.run_phase_warmup(config, force)
    print(f"warm-up done: target mIoU {m['phases']['warmup']['post_warmup_miou']:.4f}")
    return 0


def cmd_train_translation(config: ExperimentConfig, force: bool = False):
    m = trainer.run_phase_translation(config, force)
    probes = m["probes"].get("translation_consistency", {})
    if "ratio" in probes:
        print(f"translation done: consistency CE {probes['initial']:.4f} -> "
              f"{probes['final']:.4f} (ratio {probes['ratio']:.4f})")
    else:
        print("translation done")
    return 0


def cmd_train_joint(config: ExperimentConfig, force: bool = False):
    m = trainer.run_phase_joint(config, force)
    print(f"joint training done: target mIoU {m['phases']['joint']['post_joint_miou']:.4f}")
    return 0


def cmd_evaluate(config: ExperimentConfig, checkpoint: str):
    out = trainer.run_phase_evaluate(config, checkpoint)
    tgt = out.get("target", {})
    print(f"phase {out['phase']}: target mIoU "
          f"{tgt.get('miou', float('nan')):.4f}")
    return 0


def cmd_report(config: ExperimentConfig):
    report = trainer.run_phase_report(config)
    print(json.dumps({k: report[k] for k in
                      ("baseline_miou", "post_warmup_miou", "post_joint_miou", "final_miou")
                      if report.get(k) is not None}, indent=1))
    return 0


def cmd_run_all(config: ExperimentConfig, force: bool = False):
    report = trainer.run_all(config, force)
    print(f"pipeline complete: baseline {report.get('baseline_miou')}, "
          f"post-warmup {report.get('post_warmup_miou')}, "
          f"post-joint {report.get('post_joint_miou')}")
    return 0


def _parse_sweep_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sweep(config: ExperimentConfig, axis: str, values: list, force: bool = False):
    """Run the full pipeline once per value of a config field; collect
    (value, final mIoU) rows into sweep_summary.csv."""
    valid = _valid_axes(config)
    if axis not in valid:
        raise KeyError(f"unknown sweep axis {axis!r}; valid paths: {', '.join(valid)}")
    base_dir = config.output_dir
    rows = []
    for value in values:
        point = copy.deepcopy(config)
        set_by_path(point, axis, value)
        point.output_dir = os.path.join(base_dir, "sweep",
                                        f"{axis.replace('.', '_')}={value}")
        point.dataset.data_dir = ""
        point.validate()
        report = trainer.run_all(point, force)
        final = report.get("post_joint_miou")
        rows.append((value, final))
        print(f"sweep {axis}={value}: final mIoU {final}")
    os.makedirs(os.path.join(base_dir, "sweep"), exist_ok=True)
    out_path = os.path.join(base_dir, "sweep", "sweep_summary.csv")
    with open(out_path, "w") as f:
        f.write(f"{axis},final_miou\n")
        for value, final in rows:
            f.write(f"{value},{final}\n")
    print(f"sweep summary written to {out_path}")
    return 0


def _valid_axes(config):
    from .config import list_config_paths
    return list_config_paths(config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segadapt",
        description="Source-free adaptation of a segmentation network via "
                    "label-conditioned image generation (synthetic benchmark).")
    parser.add_argument("--config", help="JSON config; omit for the default experiment")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--output-dir", help="override config output_dir")
    parser.add_argument("--force", action="store_true",
                        help="redo phases that are already completed")
    parser.add_argument("--filter-scope", choices=["image", "dataset"],
                        help="confidence-filter quantile scope override")
    parser.add_argument("--hard-onehot", action="store_true",
                        help="straight-through hard labels into the generator")
    parser.add_argument("--device", default="cpu",
                        help="advisory only; computation is CPU/numpy")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate-data", "pretrain", "warmup", "train-translation",
                 "train-joint", "report", "run-all"):
        sub.add_parser(name)
    p_eval = sub.add_parser("evaluate")
    p_eval.add_argument("--checkpoint", required=True)
    p_sweep = sub.add_parser("sweep")
    p_sweep.add_argument("--axis", required=True,
                         help="dotted config path, e.g. loss.lambda_pseg")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values, e.g. 0,10")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.output_dir:
            config.output_dir = args.output_dir
        if args.filter_scope:
            config.schedule.filter_scope = args.filter_scope
        if args.hard_onehot:
            config.schedule.hard_onehot = True
        config.validate()

        if args.command == "generate-data":
            return cmd_generate_data(config, args.force)
        if args.command == "pretrain":
            return cmd_pretrain(config, args.force)
        if args.command == "warmup":
            return cmd_warmup(config, args.force)
        if args.command == "train-translation":
            return cmd_train_translation(config, args.force)
        if args.command == "train-joint":
            return cmd_train_joint(config, args.force)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.checkpoint)
        if args.command == "report":
            return cmd_report(config)
        if args.command == "run-all":
            return cmd_run_all(config, args.force)
        if args.command == "sweep":
            values = [_parse_sweep_value(v) for v in args.values.split(",")]
            return cmd_sweep(config, args.axis, values, args.force)
        raise ValueError(f"unknown command {args.command}")
    except (ValueError, KeyError, FileNotFoundError, RuntimeError, AssertionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
