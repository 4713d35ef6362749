"""Label-space operations: one-hot encoding, argmax with confidences and
class-wise confidence filtering of pseudo labels."""
from __future__ import annotations

import math

import numpy as np

IGNORE_INDEX = 255


def one_hot(labels: np.ndarray, num_classes: int, ignore_index: int = IGNORE_INDEX,
            dtype=np.float32) -> np.ndarray:
    """Encode an H×W label map as a C×H×W indicator map.

    Pixels equal to ignore_index get an all-zero column. Any other label
    outside [0, num_classes) is rejected.
    """
    labels = np.asarray(labels)
    bad = (labels >= num_classes) & (labels != ignore_index)
    bad |= labels < 0
    if bad.any():
        offender = int(labels[bad].flat[0])
        raise ValueError(f"label value {offender} outside [0, {num_classes}) and not ignore ({ignore_index})")
    out = np.zeros((num_classes,) + labels.shape, dtype=dtype)
    valid = labels != ignore_index
    idx = np.nonzero(valid)
    out[labels[idx], idx[0], idx[1]] = 1
    return out


def argmax_labels(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel argmax class and its probability from a C×H×W map.
    Ties resolve toward the lower class index (np.argmax convention)."""
    probs = np.asarray(probs)
    labels = probs.argmax(axis=0).astype(np.int64)
    conf = np.take_along_axis(probs, labels[None], axis=0)[0]
    return labels, conf


def filter_by_class_confidence(labels: np.ndarray, conf: np.ndarray,
                               keep_fraction: float,
                               ignore_index: int = IGNORE_INDEX) -> np.ndarray:
    """Keep, per class c with n_c assigned pixels, the ceil(keep_fraction*n_c)
    most confident pixels and demote the rest of class c to ignore_index.

    Ties at the cut are broken toward the lower row-major pixel index, so the
    survivor set is exactly the k-prefix of a deterministic ordering and is
    monotone in keep_fraction.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    labels = np.asarray(labels)
    conf = np.asarray(conf)
    if labels.shape != conf.shape:
        raise ValueError(f"labels shape {labels.shape} != confidence shape {conf.shape}")
    flat_labels = labels.ravel()
    flat_conf = conf.ravel()
    out = flat_labels.copy()
    for c in np.unique(flat_labels):
        if c == ignore_index:
            continue
        idx = np.flatnonzero(flat_labels == c)
        k = math.ceil(keep_fraction * idx.size)
        if k >= idx.size:
            continue
        # stable sort on descending confidence keeps row-major order on ties
        order = np.argsort(-flat_conf[idx], kind="stable")
        out[idx[order[k:]]] = ignore_index
    return out.reshape(labels.shape)


def filter_dataset_scope(labels_list: list[np.ndarray], conf_list: list[np.ndarray],
                         keep_fraction: float,
                         ignore_index: int = IGNORE_INDEX) -> list[np.ndarray]:
    """Class-wise confidence filter with the quantile taken over the whole
    collection instead of per image; tie order is (image index, row-major)."""
    shapes = [lab.shape for lab in labels_list]
    big_labels = np.concatenate([lab.ravel() for lab in labels_list])
    big_conf = np.concatenate([cf.ravel() for cf in conf_list])
    filtered = filter_by_class_confidence(big_labels, big_conf, keep_fraction, ignore_index)
    out, start = [], 0
    for shape in shapes:
        n = int(np.prod(shape))
        out.append(filtered[start:start + n].reshape(shape))
        start += n
    return out


def validate_probmap(probs: np.ndarray, tol: float = 1e-5):
    """Check the ProbMap invariants: nonnegative, channels sum to 1."""
    if probs.ndim != 3:
        raise ValueError(f"expected C×H×W probabilities, got shape {probs.shape}")
    if (probs < 0).any():
        raise ValueError("negative probability")
    sums = probs.sum(axis=0)
    if np.abs(sums - 1.0).max() > tol:
        raise ValueError(f"per-pixel channel sums deviate from 1 by {np.abs(sums - 1.0).max()}")
