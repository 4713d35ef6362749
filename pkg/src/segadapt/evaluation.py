"""Segmentation evaluation: confusion matrix, per-class IoU / mIoU over
class subsets, and report/plot emission for finished runs."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .labelops import IGNORE_INDEX


def new_confusion_matrix(num_classes: int) -> np.ndarray:
    return np.zeros((num_classes, num_classes), dtype=np.int64)


def accumulate(cm: np.ndarray, pred: np.ndarray, gt: np.ndarray,
               ignore_index: int = IGNORE_INDEX) -> np.ndarray:
    """Add one prediction/ground-truth pair into cm (rows = gt, cols = pred).
    Ground-truth ignore pixels are skipped."""
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape} / gt {gt.shape} shape mismatch")
    C = cm.shape[0]
    valid = gt != ignore_index
    idx = C * gt[valid].astype(np.int64) + pred[valid].astype(np.int64)
    cm += np.bincount(idx, minlength=C * C).reshape(C, C)
    return cm


@dataclass
class IoUReport:
    per_class: list          # float IoU or None where undefined
    miou: float
    pixel_accuracy: float
    image_count: int = 0
    subset: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {"per_class_iou": [None if v is None else float(v) for v in self.per_class],
                "miou": float(self.miou),
                "pixel_accuracy": float(self.pixel_accuracy),
                "image_count": self.image_count,
                "subset": list(self.subset)}


def iou(cm: np.ndarray, subset=None, image_count: int = 0,
        undefined_as_zero: bool = False) -> IoUReport:
    """IoU_c = cm[c,c] / (row_c + col_c - cm[c,c]). Classes whose denominator
    is zero are undefined; by default they are dropped from the subset mean,
    optionally counted as zero."""
    C = cm.shape[0]
    if subset is None:
        subset = list(range(C))
    subset = [int(c) for c in subset]
    if not subset:
        raise ValueError("empty class subset")
    diag = np.diag(cm).astype(np.float64)
    rows = cm.sum(axis=1).astype(np.float64)
    cols = cm.sum(axis=0).astype(np.float64)
    denom = rows + cols - diag
    per_class = [float(diag[c] / denom[c]) if denom[c] > 0 else None for c in range(C)]
    vals = []
    for c in subset:
        if per_class[c] is not None:
            vals.append(per_class[c])
        elif undefined_as_zero:
            vals.append(0.0)
    miou = float(np.mean(vals)) if vals else float("nan")
    total = cm.sum()
    acc = float(diag.sum() / total) if total else float("nan")
    return IoUReport(per_class=per_class, miou=miou, pixel_accuracy=acc,
                     image_count=image_count, subset=subset)


def evaluate_segmenter(net, images: np.ndarray, labels: np.ndarray,
                       subset=None, batch: int = 8) -> IoUReport:
    """Full-resolution evaluation of a SegNet over (N,3,H,W)/(N,H,W) arrays."""
    from .nets import seg_forward

    was_training = net.training
    net.eval()
    cm = new_confusion_matrix(net.num_classes)
    for start in range(0, images.shape[0], batch):
        chunk = images[start:start + batch]
        probs, _ = seg_forward(net, chunk)
        preds = probs.data.argmax(axis=1)
        for p, g in zip(preds, labels[start:start + batch]):
            accumulate(cm, p, g)
    net.train(was_training)
    return iou(cm, subset=subset, image_count=int(images.shape[0]))


# ------------------------------------------------------------------ report

LABEL_COLORS = np.array([
    [40, 40, 46], [214, 81, 66], [96, 175, 73], [75, 106, 189],
    [222, 196, 70], [157, 88, 184], [85, 196, 190], [230, 140, 42],
], dtype=np.uint8)


def colorize_labels(labels: np.ndarray, ignore_index: int = IGNORE_INDEX) -> np.ndarray:
    """Map a label map to an RGB uint8 image; ignore pixels render white."""
    out = np.full(labels.shape + (3,), 255, dtype=np.uint8)
    valid = labels != ignore_index
    out[valid] = LABEL_COLORS[labels[valid] % len(LABEL_COLORS)]
    return out


def image_to_uint8(img_chw: np.ndarray) -> np.ndarray:
    return np.clip(np.round((img_chw.transpose(1, 2, 0) + 1) * 127.5), 0, 255).astype(np.uint8)


def read_metrics(path: str) -> list[dict]:
    with open(path) as f:
        return list(csv.DictReader(f))


def _plot_curves(rows: list[dict], path: str):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    train_rows = [r for r in rows if r["total"] not in ("", None)]
    eval_rows = [r for r in rows if r["miou"] not in ("", None)]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    if train_rows:
        its = [int(r["iteration"]) for r in train_rows]
        axes[0].plot(its, [float(r["total"]) for r in train_rows], label="translation total", lw=0.8)
        seg_rows = [r for r in train_rows if r["seg_total"] != ""]
        if seg_rows:
            axes[0].plot([int(r["iteration"]) for r in seg_rows],
                         [float(r["seg_total"]) for r in seg_rows],
                         label="segmentation total", lw=0.8)
        axes[0].set_xlabel("iteration")
        axes[0].set_ylabel("loss")
        axes[0].legend()
    if eval_rows:
        axes[1].plot([int(r["iteration"]) for r in eval_rows],
                     [float(r["miou"]) for r in eval_rows], marker="o")
        axes[1].set_xlabel("iteration")
        axes[1].set_ylabel("target mIoU")
        axes[1].set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _render_panels(run_dir: str, config, out_dir: str, count: int = 4):
    """Side-by-side qualitative panels: target image, teacher prediction,
    filtered pseudo label, generated image, student prediction."""
    from PIL import Image

    from . import nets, synthdata
    from .labelops import argmax_labels, filter_by_class_confidence, one_hot

    ckpt_dir = os.path.join(run_dir, "checkpoints")
    joint = os.path.join(ckpt_dir, "joint.ckpt")
    warm = os.path.join(ckpt_dir, "warmup.ckpt")
    if not (os.path.exists(joint) and os.path.exists(warm)):
        return []
    _, jt = nets.load_checkpoint(joint)
    _, wt = nets.load_checkpoint(warm)
    C = config.dataset.scene.num_classes
    student = nets.SegNet(C, seed=config.seed).eval()
    teacher = nets.SegNet(C, seed=config.seed).eval()
    gen = nets.TranslationGenerator(C, seed=config.seed).eval()
    nets.load_into(student, jt, "seg")
    nets.load_into(gen, jt, "gen")
    nets.load_into(teacher, wt, "seg")

    imgs, _ = synthdata.make_probe_batch(config.dataset.scene, config.dataset.shift,
                                         config.dataset.n_source, config.dataset.n_target,
                                         count=count)
    paths = []
    for i, img in enumerate(imgs):
        t_probs, _ = nets.seg_forward(teacher, img[None])
        y1, conf = argmax_labels(t_probs.data[0])
        y2 = filter_by_class_confidence(y1, conf, config.schedule.filter_keep_fraction)
        z = np.zeros((1, gen.latent_dim), dtype=np.float32)
        fake = nets.translate(gen, one_hot(y1, C)[None], z)
        s_probs, _ = nets.seg_forward(student, img[None])
        sp = s_probs.data[0].argmax(axis=0)
        tiles = [image_to_uint8(img), colorize_labels(y1), colorize_labels(y2),
                 image_to_uint8(fake.data[0]), colorize_labels(sp)]
        panel = np.concatenate(tiles, axis=1)
        path = os.path.join(out_dir, f"panel_{i:02d}.png")
        Image.fromarray(panel).save(path)
        paths.append(path)
    return paths


def emit_report(run_dir: str, config=None) -> dict:
    """Summarize a run directory: report.json with phase mIoUs and deltas,
    loss/mIoU curves, and qualitative panels when checkpoints exist."""
    metrics_path = os.path.join(run_dir, "metrics.csv")
    if not os.path.exists(metrics_path):
        raise FileNotFoundError(f"metrics CSV not found: {metrics_path}")
    manifest_path = os.path.join(run_dir, "manifest.json")
    manifest = {}
    if os.path.exists(manifest_path):
        with open(manifest_path) as f:
            manifest = json.load(f)
    rows = read_metrics(metrics_path)
    eval_rows = [r for r in rows if r.get("miou") not in ("", None)]
    report_dir = os.path.join(run_dir, "report")
    os.makedirs(report_dir, exist_ok=True)

    phase_mious = {}
    for r in eval_rows:
        phase = r["phase"]
        phase_mious[phase] = float(r["miou"])
    report = {
        "config_hash": manifest.get("config_hash"),
        "phase_mious": phase_mious,
        "final_miou": float(eval_rows[-1]["miou"]) if eval_rows else None,
        "final_eval_phase": eval_rows[-1]["phase"] if eval_rows else None,
        "baseline_miou": phase_mious.get("eval-baseline"),
        "post_warmup_miou": phase_mious.get("eval-warmup"),
        "post_joint_miou": phase_mious.get("eval-joint"),
        "panels": [],
    }
    if eval_rows:
        last = eval_rows[-1]
        iou_cols = sorted((k for k in last if k.startswith("iou_")),
                          key=lambda k: int(k.split("_")[1]))
        report["per_class_iou"] = [float(last[k]) if last[k] != "" else None for k in iou_cols]
    if report["baseline_miou"] is not None and report["post_joint_miou"] is not None:
        report["joint_minus_baseline"] = report["post_joint_miou"] - report["baseline_miou"]

    train_rows = [r for r in rows if r.get("total") not in ("", None)]
    if train_rows:  # a run with zero training iterations gets no curves
        curve_path = os.path.join(report_dir, "curves.png")
        _plot_curves(rows, curve_path)
        report["curves"] = os.path.relpath(curve_path, run_dir)
    if config is not None:
        panels = _render_panels(run_dir, config, report_dir)
        report["panels"] = [os.path.relpath(p, run_dir) for p in panels]

    out_path = os.path.join(report_dir, "report.json")
    with open(out_path, "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
        f.write("\n")
    return report
