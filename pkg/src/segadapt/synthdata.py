"""Synthetic paired-domain segmentation data.

Scenes are procedurally drawn shape compositions (filled ellipses and
polygons over a textured background); each class owns a base colour so the
source task is learnable by a small network. A parametric style shift (hue
rotation, per-class brightness, texture noise, blur) renders the same scenes
as a target domain. Target labels are stored for evaluation but the training
loaders never expose them.
"""
from __future__ import annotations

import colorsys
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

IGNORE_INDEX = 255


@dataclass
class SceneSpec:
    seed: int = 0
    height: int = 64
    width: int = 64
    num_classes: int = 5
    shapes_min: int = 3
    shapes_max: int = 6

    def validate(self):
        if self.height < 16 or self.width < 16:
            raise ValueError(f"scene size {self.height}x{self.width} too small (min 16)")
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        if not 1 <= self.shapes_min <= self.shapes_max:
            raise ValueError("invalid shapes_per_scene range")


@dataclass
class DomainShiftParams:
    hue_rotation: float = 0.0                 # degrees
    brightness_offsets: list = field(default_factory=list)  # per class, in [-0.3, 0.3]
    texture_noise_amplitude: float = 0.0
    blur_radius: float = 0.0                  # gaussian sigma in px

    def is_identity(self) -> bool:
        return (self.hue_rotation == 0.0 and self.texture_noise_amplitude == 0.0
                and self.blur_radius == 0.0
                and all(b == 0.0 for b in self.brightness_offsets))


def class_palette(num_classes: int) -> np.ndarray:
    """Fixed base colour per class in [-1, 1] RGB; class 0 is a dark ground."""
    colors = [(-0.55, -0.52, -0.48)]
    for c in range(1, num_classes):
        hue = (c - 1) / max(num_classes - 1, 1)
        r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 0.85)
        colors.append((2 * r - 1, 2 * g - 1, 2 * b - 1))
    return np.array(colors, dtype=np.float64)


def _sample_seed(base_seed: int, index: int, stream: int) -> int:
    ss = np.random.SeedSequence((base_seed, index, stream))
    return int(ss.generate_state(1, np.uint64)[0])


def _ellipse_mask(H, W, cy, cx, ry, rx, angle):
    yy, xx = np.mgrid[0:H, 0:W]
    ca, sa = math.cos(angle), math.sin(angle)
    u = (xx - cx) * ca + (yy - cy) * sa
    v = -(xx - cx) * sa + (yy - cy) * ca
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _polygon_mask(H, W, verts):
    """Even-odd ray casting at pixel centres for a simple polygon."""
    yy, xx = np.mgrid[0:H, 0:W]
    inside = np.zeros((H, W), dtype=bool)
    n = len(verts)
    for k in range(n):
        x1, y1 = verts[k]
        x2, y2 = verts[(k + 1) % n]
        if y1 == y2:
            continue
        crosses = ((y1 <= yy) & (yy < y2)) | ((y2 <= yy) & (yy < y1))
        xcross = x1 + (yy - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (xx < xcross)
    return inside


def generate_scene(spec: SceneSpec, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Render scene `index`: returns (image 3×H×W float32 in [-1,1],
    labels H×W int64). Deterministic in (spec.seed, index)."""
    spec.validate()
    if index < 0:
        raise ValueError(f"scene index must be >= 0, got {index}")
    H, W, C = spec.height, spec.width, spec.num_classes
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, index)))
    palette = class_palette(C)

    labels = np.zeros((H, W), dtype=np.int64)
    img = np.empty((H, W, 3), dtype=np.float64)
    img[:] = palette[0]

    # smooth illumination ramp over the background and shapes alike
    theta = rng.uniform(0, 2 * math.pi)
    yy, xx = np.mgrid[0:H, 0:W]
    ramp = ((xx / max(W - 1, 1)) * math.cos(theta) + (yy / max(H - 1, 1)) * math.sin(theta))
    ramp = 0.12 * (ramp - ramp.mean())

    n_shapes = int(rng.integers(spec.shapes_min, spec.shapes_max + 1))
    margin = 2
    for _ in range(n_shapes):
        cls = int(rng.integers(1, C))
        kind = rng.random() < 0.5
        rmax = float(rng.uniform(7, min(H, W) / 4.0))
        cy = float(rng.uniform(rmax + margin, H - 1 - rmax - margin))
        cx = float(rng.uniform(rmax + margin, W - 1 - rmax - margin))
        if kind:
            ry = rmax
            rx = float(rng.uniform(0.55, 1.0)) * rmax
            angle = rng.uniform(0, math.pi)
            mask = _ellipse_mask(H, W, cy, cx, ry, rx, angle)
        else:
            nv = int(rng.integers(3, 8))
            angles = np.sort(rng.uniform(0, 2 * math.pi, nv))
            radii = rmax * rng.uniform(0.55, 1.0, nv)
            verts = [(cx + r * math.cos(a), cy + r * math.sin(a))
                     for a, r in zip(angles, radii)]
            mask = _polygon_mask(H, W, verts)
        if not mask.any():
            continue
        color = palette[cls] + rng.normal(0, 0.05, 3)
        labels[mask] = cls
        img[mask] = color

    img += ramp[:, :, None]
    img += rng.normal(0, 0.03, (H, W, 3))
    img = np.clip(img, -1, 1)
    return img.transpose(2, 0, 1).astype(np.float32), labels


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1), 0.0)
    h = np.zeros_like(maxc)
    nz = delta > 0
    rmax = nz & (maxc == r)
    gmax = nz & (maxc == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    dsafe = np.where(nz, delta, 1)
    h = np.where(rmax, ((g - b) / dsafe) % 6, h)
    h = np.where(gmax, (b - r) / dsafe + 2, h)
    h = np.where(bmax, (r - g) / dsafe + 4, h)
    return np.stack([h / 6.0, s, maxc], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    choices = np.stack([
        np.stack([v, t, p], axis=-1),
        np.stack([q, v, p], axis=-1),
        np.stack([p, v, t], axis=-1),
        np.stack([p, q, v], axis=-1),
        np.stack([t, p, v], axis=-1),
        np.stack([v, p, q], axis=-1),
    ])
    return np.take_along_axis(choices, i[None, ..., None], axis=0)[0]


def rotate_hue(img_chw: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate hue of a [-1,1] CHW image by `degrees` in HSV space."""
    rgb = (img_chw.transpose(1, 2, 0).astype(np.float64) + 1) / 2
    hsv = _rgb_to_hsv(np.clip(rgb, 0, 1))
    hsv[..., 0] = (hsv[..., 0] + degrees / 360.0) % 1.0
    out = _hsv_to_rgb(hsv)
    return (out * 2 - 1).transpose(2, 0, 1)


def apply_domain_shift(img: np.ndarray, labels: np.ndarray,
                       params: DomainShiftParams, seed: int) -> np.ndarray:
    """Restyle a source rendering into the target domain. Labels are only
    read (for per-class brightness), never modified; output in [-1,1]."""
    if img.shape[1:] != labels.shape:
        raise ValueError(f"image {img.shape} / labels {labels.shape} shape mismatch")
    out = img.astype(np.float64)
    if params.hue_rotation != 0.0:
        out = rotate_hue(out, params.hue_rotation)
    if any(b != 0.0 for b in params.brightness_offsets):
        offsets = np.zeros(int(labels.max()) + 1 if labels.size else 1)
        for c, b in enumerate(params.brightness_offsets):
            if c < offsets.size:
                offsets[c] = b
        out = out + offsets[labels][None, :, :]
    if params.texture_noise_amplitude != 0.0:
        rng = np.random.default_rng(seed)
        out = out + params.texture_noise_amplitude * rng.standard_normal(out.shape)
    if params.blur_radius > 0.0:
        out = np.stack([gaussian_filter(ch, params.blur_radius, mode="reflect")
                        for ch in out])
    return np.clip(out, -1, 1).astype(np.float32)


# ---------------------------------------------------------------- storage


def image_to_png(img_chw: np.ndarray, path: str):
    u8 = np.clip(np.round((img_chw.transpose(1, 2, 0) + 1) * 127.5), 0, 255).astype(np.uint8)
    _save(Image.fromarray(u8, mode="RGB"), path)


def label_to_png(labels: np.ndarray, path: str):
    _save(Image.fromarray(labels.astype(np.uint8), mode="L"), path)


def _save(im: Image.Image, path: str):
    try:
        im.save(path, format="PNG")
    except OSError as e:
        raise RuntimeError(f"failed to write {path}: {e}") from e


def load_image_png(path: str) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return (arr / 127.5 - 1.0).transpose(2, 0, 1)


def load_label_png(path: str) -> np.ndarray:
    return np.asarray(Image.open(path), dtype=np.int64)


def build_dataset(spec: SceneSpec, n_source: int, n_target: int,
                  shift: DomainShiftParams, out_dir: str) -> dict:
    """Write source/target splits and a JSON manifest under out_dir.

    Source scenes use indices [0, n_source); target scenes continue at
    [n_source, n_source + n_target) so the two splits never share content.
    """
    spec.validate()
    entries = []
    for sub in ("source/images", "source/labels", "target/images", "target/labels"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    for i in range(n_source):
        img, lab = generate_scene(spec, i)
        ip = f"source/images/src_{i:05d}.png"
        lp = f"source/labels/src_{i:05d}.png"
        image_to_png(img, os.path.join(out_dir, ip))
        label_to_png(lab, os.path.join(out_dir, lp))
        entries.append({"split": "source", "image_path": ip, "label_path": lp,
                        "seed": _sample_seed(spec.seed, i, 0), "index": i})
    for j in range(n_target):
        index = n_source + j
        img, lab = generate_scene(spec, index)
        shift_seed = _sample_seed(spec.seed, index, 1)
        img = apply_domain_shift(img, lab, shift, shift_seed)
        ip = f"target/images/tgt_{j:05d}.png"
        lp = f"target/labels/tgt_{j:05d}.png"
        image_to_png(img, os.path.join(out_dir, ip))
        label_to_png(lab, os.path.join(out_dir, lp))
        entries.append({"split": "target", "image_path": ip, "label_path": lp,
                        "seed": shift_seed, "index": index})
    manifest = {
        "version": 1,
        "spec": vars(spec).copy(),
        "shift": {"hue_rotation": shift.hue_rotation,
                  "brightness_offsets": list(shift.brightness_offsets),
                  "texture_noise_amplitude": shift.texture_noise_amplitude,
                  "blur_radius": shift.blur_radius},
        "n_source": n_source,
        "n_target": n_target,
        "files": entries,
    }
    mpath = os.path.join(out_dir, "manifest.json")
    try:
        with open(mpath, "w") as f:
            json.dump(manifest, f, indent=1, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise RuntimeError(f"failed to write {mpath}: {e}") from e
    return manifest


def load_manifest(data_dir: str) -> dict:
    mpath = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(mpath):
        raise FileNotFoundError(f"dataset manifest not found: {mpath}")
    with open(mpath) as f:
        return json.load(f)


def load_split_images(data_dir: str, manifest: dict, split: str) -> np.ndarray:
    """Images of a split as (N,3,H,W) float32. This is the only loader the
    trainer may use for the target split: it never touches label files."""
    files = [e for e in manifest["files"] if e["split"] == split]
    return np.stack([load_image_png(os.path.join(data_dir, e["image_path"]))
                     for e in files]) if files else np.zeros((0, 3, 0, 0), np.float32)


def load_split_with_labels(data_dir: str, manifest: dict, split: str):
    """Evaluation loader: images plus ground-truth labels."""
    files = [e for e in manifest["files"] if e["split"] == split]
    imgs = [load_image_png(os.path.join(data_dir, e["image_path"])) for e in files]
    labs = [load_label_png(os.path.join(data_dir, e["label_path"])) for e in files]
    if not files:
        return np.zeros((0, 3, 0, 0), np.float32), np.zeros((0, 0, 0), np.int64)
    return np.stack(imgs), np.stack(labs)


def make_probe_batch(spec: SceneSpec, shift: DomainShiftParams, n_source: int,
                     n_target: int, count: int = 8):
    """Freshly rendered target-style scenes past the end of the stored target
    split: a held-out batch that shares the domain but not the content."""
    imgs, labs = [], []
    for k in range(count):
        index = n_source + n_target + k
        img, lab = generate_scene(spec, index)
        img = apply_domain_shift(img, lab, shift, _sample_seed(spec.seed, index, 1))
        imgs.append(img)
        labs.append(lab)
    return np.stack(imgs), np.stack(labs)
