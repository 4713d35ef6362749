#!/usr/bin/env python3
"""Tour of the synthetic paired-domain data.

Renders a few scenes, applies the default style shift, and saves a grid:
row 1 source renderings, row 2 their exact labels, row 3 the same scenes
restyled as the target domain. Also demonstrates that the shift never
touches the labels and that everything is a pure function of (seed, index).
"""
import os

import numpy as np
from PIL import Image

from segadapt import synthdata
from segadapt.config import ExperimentConfig
from segadapt.evaluation import colorize_labels, image_to_uint8

out_dir = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(out_dir, exist_ok=True)

cfg = ExperimentConfig()
spec = cfg.dataset.scene
shift = cfg.dataset.shift
print(f"scene spec: {spec}")
print(f"style shift: {shift}")

n = 6
rows = [[], [], []]
for i in range(n):
    img, lab = synthdata.generate_scene(spec, i)
    tgt = synthdata.apply_domain_shift(img, lab, shift, seed=1000 + i)
    rows[0].append(image_to_uint8(img))
    rows[1].append(colorize_labels(lab))
    rows[2].append(image_to_uint8(tgt))

grid = np.concatenate([np.concatenate(r, axis=1) for r in rows], axis=0)
path = os.path.join(out_dir, "domains_grid.png")
Image.fromarray(grid).save(path)
print(f"saved {path} (rows: source / labels / target)")

# determinism and label preservation
img_a, lab_a = synthdata.generate_scene(spec, 3)
img_b, lab_b = synthdata.generate_scene(spec, 3)
assert np.array_equal(img_a, img_b) and np.array_equal(lab_a, lab_b)
shifted = synthdata.apply_domain_shift(img_a, lab_a, shift, seed=7)
assert np.array_equal(lab_a, lab_b), "labels untouched by the style shift"
print("scene generation is bit-deterministic; labels survive the shift unchanged")

# a 180-degree hue turn maps pure red to pure cyan (closed form)
red = np.full((3, 8, 8), -1.0, dtype=np.float32)
red[0] = 1.0
cyan = synthdata.apply_domain_shift(red, np.zeros((8, 8), np.int64),
                                    synthdata.DomainShiftParams(hue_rotation=180.0), 0)
print("hue(180) on pure red ->", cyan[:, 0, 0], "(expect [-1, 1, 1])")
