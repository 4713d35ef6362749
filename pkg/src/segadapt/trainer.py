"""Training phases and pipeline orchestration.

Phase order: source pretraining -> self-training warm-up (3 rounds) ->
translation pretraining (adversarial, iter_tr iterations) -> joint phase
(one translation update plus one segmentation update per iteration,
iter_joint iterations). The pretrained-then-warmed snapshot acts as the
fixed teacher for both later phases; the student is adapted with the
partially frozen backbone.
"""
from __future__ import annotations

import json
import os
import time

import numpy as np

from . import evaluation, losses, nets, synthdata
from .autodiff import Tensor
from .config import ExperimentConfig, config_hash, save_config
from .labelops import (IGNORE_INDEX, argmax_labels, filter_by_class_confidence,
                       filter_dataset_scope, one_hot)
from .losses import (LossWeights, hinge_d_loss, hinge_g_loss, kld_loss,
                     perceptual_loss, segmentation_loss,
                     semantic_consistency_loss, translation_loss)
from .nets import (MultiScalePatchDiscriminator, PerceptualExtractor, SegNet,
                   TranslationGenerator, clone_net, discriminate, encode_latent,
                   freeze_partial, reparameterize, seg_forward, state_hash,
                   translate)
from .optim import SGD, Adam, poly_lr

PHASE_STREAMS = {"pretrain": 10, "warmup": 11, "translation": 12, "joint": 13}

TRAIN_COLUMNS = ["total", "d_loss", "adv", "perc", "sem", "featm", "kld",
                 "seg_total", "seg_ce_tgt", "seg_ce_gen", "seg_perc",
                 "seg_featm", "seg_kld"]


class MetricsWriter:
    """Append-only CSV, one row per logged iteration or evaluation."""

    def __init__(self, path: str, num_classes: int):
        self.path = path
        self.num_classes = num_classes
        self.columns = (["iteration", "phase", "lr"] + TRAIN_COLUMNS
                        + ["miou", "acc"] + [f"iou_{c}" for c in range(num_classes)])
        if not os.path.exists(path) or os.path.getsize(path) == 0:
            with open(path, "w") as f:
                f.write(",".join(self.columns) + "\n")

    def _write(self, values: dict):
        row = [values.get(c, "") for c in self.columns]
        with open(self.path, "a") as f:
            f.write(",".join(str(v) for v in row) + "\n")

    def log_train(self, iteration: int, phase: str, lr: float, comps: dict):
        values = {"iteration": iteration, "phase": phase, "lr": repr(float(lr))}
        for k, v in comps.items():
            values[k] = repr(float(v))
        self._write(values)

    def log_eval(self, iteration: int, phase: str, report: evaluation.IoUReport):
        values = {"iteration": iteration, "phase": phase,
                  "miou": repr(float(report.miou)),
                  "acc": repr(float(report.pixel_accuracy))}
        for c, v in enumerate(report.per_class):
            values[f"iou_{c}"] = "" if v is None else repr(float(v))
        self._write(values)


class BatchCursor:
    """Seeded shuffled cursor over sample indices; reshuffles per pass."""

    def __init__(self, n: int, batch: int, rng: np.random.Generator):
        self.n = n
        self.batch = batch
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos + self.batch > self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos:self.pos + self.batch]
        self.pos += self.batch
        return idx


def _phase_rng(seed: int, phase: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, PHASE_STREAMS[phase])))


def _check_finite(value: float, phase: str, iteration: int):
    if not np.isfinite(value):
        raise RuntimeError(f"non-finite loss in {phase} at iteration {iteration}: {value}")


def teacher_pseudo_labels(teacher: SegNet, images: np.ndarray, batch: int = 8):
    """Argmax labels and confidences of the fixed teacher over an image stack."""
    labels, confs = [], []
    for start in range(0, images.shape[0], batch):
        probs, _ = seg_forward(teacher, images[start:start + batch])
        for p in probs.data:
            lab, conf = argmax_labels(p)
            labels.append(lab)
            confs.append(conf)
    return labels, confs


def _filtered_split_labels(teacher, images, schedule):
    labels, confs = teacher_pseudo_labels(teacher, images)
    if schedule.filter_scope == "dataset":
        return filter_dataset_scope(labels, confs, schedule.filter_keep_fraction)
    return [filter_by_class_confidence(lab, conf, schedule.filter_keep_fraction)
            for lab, conf in zip(labels, confs)]


# ------------------------------------------------------------ pretraining


def pretrain_source(net: SegNet, images: np.ndarray, labels: np.ndarray,
                    schedule, epochs: int | None = None, seed: int = 0,
                    writer: MetricsWriter | None = None) -> SegNet:
    """Supervised cross-entropy training on the labelled source split."""
    if images.shape[0] == 0:
        raise ValueError("source split is empty; cannot pretrain")
    epochs = schedule.pretrain_epochs if epochs is None else epochs
    rng = _phase_rng(seed, "pretrain")
    opt = SGD(net.parameters(), lr=schedule.pretrain_lr,
              momentum=schedule.seg_momentum, weight_decay=schedule.seg_weight_decay)
    n = images.shape[0]
    steps_per_epoch = max(n // schedule.batch_pretrain, 1)
    total_steps = epochs * steps_per_epoch
    net.train()
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(steps_per_epoch):
            idx = order[s * schedule.batch_pretrain:(s + 1) * schedule.batch_pretrain]
            probs, _ = seg_forward(net, images[idx])
            loss = semantic_consistency_loss(probs, labels[idx])
            _check_finite(loss.item(), "pretrain", step)
            opt.lr = poly_lr(schedule.pretrain_lr, step, total_steps, schedule.poly_power)
            opt.zero_grad()
            loss.backward()
            opt.step()
            if writer is not None and step % schedule.log_interval == 0:
                writer.log_train(step, "pretrain", opt.lr, {"total": loss.item()})
            step += 1
    net.eval()
    return net


def warmup_selftrain(net: SegNet, target_images: np.ndarray, schedule,
                     rounds: int | None = None, seed: int = 0,
                     writer: MetricsWriter | None = None) -> SegNet:
    """Self-training rounds: the round-start snapshot labels the whole target
    split (confidence-filtered), then the partially frozen student trains on
    those pseudo labels."""
    rounds = schedule.warmup_rounds if rounds is None else rounds
    if rounds == 0:
        return net
    rng = _phase_rng(seed, "warmup")
    opt = SGD(net.parameters(), lr=schedule.seg_lr,
              momentum=schedule.seg_momentum, weight_decay=schedule.seg_weight_decay)
    n = target_images.shape[0]
    step = 0
    for rnd in range(rounds):
        round_teacher = clone_net(net).eval()
        pseudo = _filtered_split_labels(round_teacher, target_images, schedule)
        pseudo = np.stack(pseudo)
        net.train()
        steps_per_epoch = max(n // schedule.batch_joint, 1)
        for _ in range(schedule.warmup_epochs_per_round):
            order = rng.permutation(n)
            for s in range(steps_per_epoch):
                idx = order[s * schedule.batch_joint:(s + 1) * schedule.batch_joint]
                probs, _ = seg_forward(net, target_images[idx])
                loss = semantic_consistency_loss(probs, pseudo[idx])
                _check_finite(loss.item(), "warmup", step)
                opt.zero_grad()
                loss.backward()
                opt.step()
                if writer is not None and step % schedule.log_interval == 0:
                    writer.log_train(step, f"warmup-r{rnd}", opt.lr, {"total": loss.item()})
                step += 1
        net.eval()
    return net


# ------------------------------------------------- translation / joint


def measure_translation_consistency(gen: TranslationGenerator, teacher: SegNet,
                                    images: np.ndarray, batch: int = 4) -> float:
    """CE between the fixed teacher's prediction on generated images and the
    labels that conditioned the generation (prior-mean latent)."""
    total, count = 0.0, 0
    C = gen.num_classes
    for start in range(0, images.shape[0], batch):
        chunk = images[start:start + batch]
        probs, _ = seg_forward(teacher, chunk)
        labs = [argmax_labels(p)[0] for p in probs.data]
        oh = np.stack([one_hot(l, C) for l in labs])
        z = np.zeros((chunk.shape[0], gen.latent_dim), dtype=np.float32)
        fake = translate(gen, oh, z)
        probs2, _ = seg_forward(teacher, fake.detach())
        ce = semantic_consistency_loss(probs2, np.stack(labs))
        total += ce.item() * chunk.shape[0]
        count += chunk.shape[0]
    return total / max(count, 1)


def translation_update(gen, disc, teacher, phi, batch_imgs: np.ndarray,
                       rng, weights: LossWeights, gen_opt, disc_opt,
                       phase: str, iteration: int):
    """One discriminator step and one generator step on a target batch.
    Returns (per-component floats, teacher labels, confidences, fake images)."""
    C = gen.num_classes
    x = Tensor(batch_imgs)
    t_probs, _ = seg_forward(teacher, x)
    y_labels, y_confs = [], []
    for p in t_probs.data:
        lab, conf = argmax_labels(p)
        y_labels.append(lab)
        y_confs.append(conf)
    onehot = np.stack([one_hot(l, C) for l in y_labels])

    mu, logvar = encode_latent(gen, x)
    eps = rng.standard_normal(mu.shape).astype(np.float32)
    z = reparameterize(mu, logvar, eps)
    fake = translate(gen, onehot, z)

    # discriminator step on detached fakes
    disc.requires_grad_(True)
    real_out = disc(x)
    fake_out_d = disc(fake.detach())
    d_loss = hinge_d_loss([l for _, l in real_out], [l for _, l in fake_out_d])
    disc_opt.zero_grad()
    d_loss.backward()
    disc_opt.step()

    # generator step; discriminator is a fixed critic here
    disc.requires_grad_(False)
    real_out = disc(x)
    fake_out = disc(fake)
    adv = hinge_g_loss([l for _, l in fake_out])
    fm = losses.feature_match_from_outputs(real_out, fake_out)
    perc = perceptual_loss(phi, fake, x.detach(), weights.w_perceptual)
    sem_probs, _ = seg_forward(teacher, fake)
    sem = semantic_consistency_loss(sem_probs, np.stack(y_labels))
    kld = kld_loss(mu, logvar)
    total, comps = translation_loss(perc, sem, kld, fm, adv, weights)
    _check_finite(float(total.data), phase, iteration)
    gen_opt.zero_grad()
    total.backward()
    gen_opt.step()

    logged = {"total": float(total.data), "d_loss": float(d_loss.data),
              "adv": comps["adversarial"], "perc": comps["perceptual"],
              "sem": comps["semantic"], "featm": comps["feat_match"],
              "kld": comps["kld"]}
    return logged, y_labels, y_confs, fake, (mu, logvar)


def train_translation(gen, disc, teacher, target_images: np.ndarray, schedule,
                      weights: LossWeights, seed: int = 0,
                      writer: MetricsWriter | None = None,
                      probe_images: np.ndarray | None = None,
                      phi: PerceptualExtractor | None = None):
    """Algorithm phase 1: adversarially train the translation model against
    the fixed teacher's pseudo labels for iter_tr iterations."""
    rng = _phase_rng(seed, "translation")
    phi = phi or PerceptualExtractor(seed=seed)
    gen_opt = Adam(gen.parameters(), lr=schedule.gen_lr,
                   beta1=schedule.adam_beta1, beta2=schedule.adam_beta2)
    disc_opt = Adam(disc.parameters(), lr=schedule.disc_lr,
                    beta1=schedule.adam_beta1, beta2=schedule.adam_beta2)
    cursor = BatchCursor(target_images.shape[0], schedule.batch_translation, rng)
    probes = {}
    if probe_images is not None:
        probes["initial"] = measure_translation_consistency(gen, teacher, probe_images)
    for it in range(schedule.iter_tr):
        idx = cursor.next()
        logged, *_ = translation_update(gen, disc, teacher, phi, target_images[idx],
                                        rng, weights, gen_opt, disc_opt,
                                        "translation", it)
        if writer is not None and it % schedule.log_interval == 0:
            writer.log_train(it, "translation", schedule.gen_lr, logged)
    if probe_images is not None:
        probes["final"] = measure_translation_consistency(gen, teacher, probe_images)
        if probes["initial"] > 0:
            probes["ratio"] = probes["final"] / probes["initial"]
    return gen, disc, probes


def _soft_or_hard_conditioning(student_probs: Tensor, hard: bool):
    """The student probabilities feed the generator; optionally the forward
    value is replaced by the hard one-hot with a straight-through gradient."""
    if not hard:
        return student_probs
    hard_oh = np.zeros_like(student_probs.data)
    am = student_probs.data.argmax(axis=1)
    n, _, h, w = student_probs.shape
    ii, jj, kk = np.meshgrid(np.arange(n), np.arange(h), np.arange(w), indexing="ij")
    hard_oh[ii, am, jj, kk] = 1.0
    return student_probs + Tensor(hard_oh - student_probs.data)


def segmentation_update(gen, disc, student, teacher, phi, batch_imgs,
                        y_labels, y_confs, fake_detached, mu_lv, schedule,
                        weights: LossWeights, seg_opt, iteration: int):
    """One student update per Algorithm lines 8-10: filter pseudo labels,
    regenerate from student predictions with the frozen translation model,
    minimize the combined segmentation objective."""
    x = Tensor(batch_imgs)
    if schedule.filter_scope == "dataset":
        y2 = filter_dataset_scope(y_labels, y_confs, schedule.filter_keep_fraction)
    else:
        y2 = [filter_by_class_confidence(l, c, schedule.filter_keep_fraction)
              for l, c in zip(y_labels, y_confs)]
    y2 = np.stack(y2)

    student.train()
    s_probs, _ = seg_forward(student, x)
    ce_tgt = semantic_consistency_loss(s_probs, y2)

    gen.requires_grad_(False)
    disc.requires_grad_(False)
    conditioning = _soft_or_hard_conditioning(s_probs, schedule.hard_onehot)
    z0 = Tensor(np.zeros((batch_imgs.shape[0], gen.latent_dim), dtype=np.float32))
    regen = gen(conditioning, z0)

    perc = perceptual_loss(phi, regen, x.detach(), weights.w_perceptual)
    fm = losses.feature_match_from_outputs(disc(x), disc(regen))

    sf_probs, _ = seg_forward(student, fake_detached)
    ce_gen = semantic_consistency_loss(sf_probs, np.stack(y_labels))

    mu, logvar = mu_lv
    kld = kld_loss(mu.detach(), logvar.detach())  # no path to the student; logged term

    total, comps = segmentation_loss(ce_tgt, ce_gen, perc, fm, kld, weights)
    _check_finite(float(total.data), "joint-seg", iteration)
    seg_opt.lr = poly_lr(schedule.seg_lr, iteration, schedule.iter_joint, schedule.poly_power)
    seg_opt.zero_grad()
    total.backward()
    seg_opt.step()
    gen.requires_grad_(True)
    student.eval()

    return {"seg_total": float(total.data), "seg_ce_tgt": comps["ce_target"],
            "seg_ce_gen": comps["ce_generated"], "seg_perc": comps["perceptual"],
            "seg_featm": comps["feat_match"], "seg_kld": comps["kld"]}, seg_opt.lr


def train_joint(gen, disc, student, teacher, target_images: np.ndarray, schedule,
                weights: LossWeights, seed: int = 0,
                writer: MetricsWriter | None = None,
                evaluator=None, eval_interval: int = 500,
                phi: PerceptualExtractor | None = None,
                checkpoint_cb=None):
    """Algorithm phase 2: per iteration, one translation update followed by
    one segmentation update; the teacher stays fixed throughout."""
    rng = _phase_rng(seed, "joint")
    phi = phi or PerceptualExtractor(seed=seed)
    teacher_hash_start = state_hash(teacher.state_dict())
    frozen_hash_start = state_hash(student.frozen_state_dict())
    gen_opt = Adam(gen.parameters(), lr=schedule.gen_lr,
                   beta1=schedule.adam_beta1, beta2=schedule.adam_beta2)
    disc_opt = Adam(disc.parameters(), lr=schedule.disc_lr,
                    beta1=schedule.adam_beta1, beta2=schedule.adam_beta2)
    seg_opt = SGD([p for p in student.parameters() if p.requires_grad],
                  lr=schedule.seg_lr, momentum=schedule.seg_momentum,
                  weight_decay=schedule.seg_weight_decay)
    cursor = BatchCursor(target_images.shape[0], schedule.batch_joint, rng)
    for it in range(schedule.iter_joint):
        idx = cursor.next()
        batch = target_images[idx]
        tr_logged, y_labels, y_confs, fake, mu_lv = translation_update(
            gen, disc, teacher, phi, batch, rng, weights, gen_opt, disc_opt,
            "joint", it)
        seg_logged, seg_lr = segmentation_update(
            gen, disc, student, teacher, phi, batch, y_labels, y_confs,
            fake.detach(), mu_lv, schedule, weights, seg_opt, it)
        if writer is not None and it % schedule.log_interval == 0:
            writer.log_train(it, "joint", seg_lr, {**tr_logged, **seg_logged})
        if evaluator is not None and (it + 1) % eval_interval == 0 and it + 1 < schedule.iter_joint:
            report = evaluator(student)
            if writer is not None:
                writer.log_eval(it + 1, "eval-joint", report)
        if checkpoint_cb is not None and schedule.checkpoint_interval > 0 \
                and (it + 1) % schedule.checkpoint_interval == 0 and it + 1 < schedule.iter_joint:
            checkpoint_cb(it + 1)
    if state_hash(teacher.state_dict()) != teacher_hash_start:
        raise AssertionError("fixed teacher parameters changed during the joint phase")
    if state_hash(student.frozen_state_dict()) != frozen_hash_start:
        raise AssertionError("frozen student blocks changed during the joint phase")
    return gen, disc, student


# ----------------------------------------------------------- pipeline

PHASE_ORDER = ["generate-data", "pretrain", "warmup", "translation", "joint"]


def _manifest_path(config) -> str:
    return os.path.join(config.output_dir, "manifest.json")


def load_run_manifest(config) -> dict:
    path = _manifest_path(config)
    if os.path.exists(path):
        with open(path) as f:
            return json.load(f)
    return {"config_hash": config_hash(config), "seed": config.seed,
            "phases": {}, "hashes": {}, "probes": {}}


def save_run_manifest(config, manifest: dict):
    with open(_manifest_path(config), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def _init_run_dir(config) -> dict:
    os.makedirs(config.output_dir, exist_ok=True)
    os.makedirs(os.path.join(config.output_dir, "checkpoints"), exist_ok=True)
    cfg_path = os.path.join(config.output_dir, "config.json")
    if not os.path.exists(cfg_path):
        save_config(config, cfg_path)
    return load_run_manifest(config)


def _phase_guard(manifest: dict, phase: str, force: bool):
    entry = manifest["phases"].get(phase)
    if entry and entry.get("completed") and not force:
        raise RuntimeError(f"phase '{phase}' already completed in this run "
                           f"directory; rerun with --force to overwrite")


def _require(condition: bool, message: str):
    if not condition:
        raise FileNotFoundError(message)


def _ckpt(config, name: str) -> str:
    return os.path.join(config.output_dir, "checkpoints", f"{name}.ckpt")


def _writer(config) -> MetricsWriter:
    return MetricsWriter(os.path.join(config.output_dir, "metrics.csv"),
                         config.dataset.scene.num_classes)


def _subset(config):
    return config.eval.subset or None


def _make_evaluator(config, data_dir):
    manifest = synthdata.load_manifest(data_dir)
    imgs, labs = synthdata.load_split_with_labels(data_dir, manifest, "target")

    def evaluator(net):
        return evaluation.evaluate_segmenter(net, imgs, labs, subset=_subset(config))

    return evaluator


def run_phase_generate_data(config: ExperimentConfig, force: bool = False) -> dict:
    manifest = _init_run_dir(config)
    _phase_guard(manifest, "generate-data", force)
    t0 = time.time()
    ds_manifest = synthdata.build_dataset(config.dataset.scene, config.dataset.n_source,
                                          config.dataset.n_target, config.dataset.shift,
                                          config.data_dir)
    manifest["phases"]["generate-data"] = {
        "completed": True, "wall_time_s": round(time.time() - t0, 2),
        "n_source": config.dataset.n_source, "n_target": config.dataset.n_target,
        "data_dir": config.data_dir}
    save_run_manifest(config, manifest)
    return ds_manifest


def run_phase_pretrain(config: ExperimentConfig, force: bool = False):
    manifest = _init_run_dir(config)
    _phase_guard(manifest, "pretrain", force)
    data_dir = config.data_dir
    _require(os.path.exists(os.path.join(data_dir, "manifest.json")),
             f"missing dataset manifest {os.path.join(data_dir, 'manifest.json')}; "
             f"run generate-data first")
    ds = synthdata.load_manifest(data_dir)
    src_imgs, src_labs = synthdata.load_split_with_labels(data_dir, ds, "source")
    writer = _writer(config)
    t0 = time.time()
    net = SegNet(config.dataset.scene.num_classes, seed=config.seed)
    pretrain_source(net, src_imgs, src_labs, config.schedule, seed=config.seed,
                    writer=writer)
    source_report = evaluation.evaluate_segmenter(net, src_imgs, src_labs,
                                                  subset=_subset(config))
    baseline_report = _make_evaluator(config, data_dir)(net)
    writer.log_eval(0, "eval-source", source_report)
    writer.log_eval(0, "eval-baseline", baseline_report)
    nets.save_checkpoint(_ckpt(config, "pretrain"), {"seg": net},
                         {"phase": "pretrain", "iteration": 0,
                          "miou": baseline_report.miou,
                          "config_hash": config_hash(config),
                          "arch": {"num_classes": net.num_classes, "seed": net.seed}})
    manifest["phases"]["pretrain"] = {
        "completed": True, "wall_time_s": round(time.time() - t0, 2),
        "source_miou": source_report.miou, "baseline_target_miou": baseline_report.miou,
        "checkpoint": _ckpt(config, "pretrain")}
    save_run_manifest(config, manifest)
    return manifest


def _load_segnet(config, ckpt_name: str) -> SegNet:
    path = _ckpt(config, ckpt_name)
    _require(os.path.exists(path), f"missing checkpoint {path}; run the "
             f"'{ckpt_name}' phase first")
    _, tensors = nets.load_checkpoint(path)
    net = SegNet(config.dataset.scene.num_classes, seed=config.seed)
    nets.load_into(net, tensors, "seg")
    return net.eval()


def run_phase_warmup(config: ExperimentConfig, force: bool = False):
    manifest = _init_run_dir(config)
    _phase_guard(manifest, "warmup", force)
    data_dir = config.data_dir
    net = _load_segnet(config, "pretrain")
    freeze_partial(net)
    frozen_start = state_hash(net.frozen_state_dict())
    ds = synthdata.load_manifest(data_dir)
    tgt_imgs = synthdata.load_split_images(data_dir, ds, "target")
    writer = _writer(config)
    t0 = time.time()
    warmup_selftrain(net, tgt_imgs, config.schedule, seed=config.seed, writer=writer)
    frozen_end = state_hash(net.frozen_state_dict())
    if frozen_end != frozen_start:
        raise AssertionError("frozen blocks changed during warm-up")
    report = _make_evaluator(config, data_dir)(net)
    writer.log_eval(0, "eval-warmup", report)
    nets.save_checkpoint(_ckpt(config, "warmup"), {"seg": net},
                         {"phase": "warmup", "iteration": 0, "miou": report.miou,
                          "config_hash": config_hash(config),
                          "arch": {"num_classes": net.num_classes, "seed": net.seed}})
    manifest["phases"]["warmup"] = {
        "completed": True, "wall_time_s": round(time.time() - t0, 2),
        "post_warmup_miou": report.miou, "checkpoint": _ckpt(config, "warmup")}
    manifest["hashes"]["frozen_blocks"] = frozen_start
    save_run_manifest(config, manifest)
    return manifest


def run_phase_translation(config: ExperimentConfig, force: bool = False):
    manifest = _init_run_dir(config)
    _phase_guard(manifest, "translation", force)
    data_dir = config.data_dir
    teacher = _load_segnet(config, "warmup")
    teacher.requires_grad_(False)
    teacher_hash = state_hash(teacher.state_dict())
    ds = synthdata.load_manifest(data_dir)
    tgt_imgs = synthdata.load_split_images(data_dir, ds, "target")
    C = config.dataset.scene.num_classes
    gen = TranslationGenerator(C, seed=config.seed)
    disc = MultiScalePatchDiscriminator(seed=config.seed)
    probe_imgs, _ = synthdata.make_probe_batch(
        config.dataset.scene, config.dataset.shift, config.dataset.n_source,
        config.dataset.n_target, count=config.schedule.probe_count)
    writer = _writer(config)
    t0 = time.time()
    gen, disc, probes = train_translation(
        gen, disc, teacher, tgt_imgs, config.schedule, config.loss,
        seed=config.seed, writer=writer, probe_images=probe_imgs)
    if state_hash(teacher.state_dict()) != teacher_hash:
        raise AssertionError("fixed teacher changed during translation phase")
    nets.save_checkpoint(_ckpt(config, "translation"), {"gen": gen, "disc": disc},
                         {"phase": "translation", "iteration": config.schedule.iter_tr,
                          "miou": None, "config_hash": config_hash(config),
                          "arch": {"num_classes": C, "seed": config.seed,
                                   "latent_dim": gen.latent_dim}})
    manifest["phases"]["translation"] = {
        "completed": True, "wall_time_s": round(time.time() - t0, 2),
        "iterations": config.schedule.iter_tr,
        "checkpoint": _ckpt(config, "translation")}
    manifest["probes"]["translation_consistency"] = probes
    manifest["hashes"]["teacher"] = teacher_hash
    save_run_manifest(config, manifest)
    return manifest


def run_phase_joint(config: ExperimentConfig, force: bool = False):
    manifest = _init_run_dir(config)
    _phase_guard(manifest, "joint", force)
    data_dir = config.data_dir
    tr_path = _ckpt(config, "translation")
    _require(os.path.exists(tr_path),
             f"missing translation checkpoint {tr_path}; run train-translation first")
    teacher = _load_segnet(config, "warmup")
    teacher.requires_grad_(False)
    student = _load_segnet(config, "warmup")
    freeze_partial(student)
    C = config.dataset.scene.num_classes
    _, tr_tensors = nets.load_checkpoint(tr_path)
    gen = TranslationGenerator(C, seed=config.seed)
    disc = MultiScalePatchDiscriminator(seed=config.seed)
    nets.load_into(gen, tr_tensors, "gen")
    nets.load_into(disc, tr_tensors, "disc")
    ds = synthdata.load_manifest(data_dir)
    tgt_imgs = synthdata.load_split_images(data_dir, ds, "target")
    evaluator = _make_evaluator(config, data_dir)
    writer = _writer(config)

    def checkpoint_cb(iteration: int):
        nets.save_checkpoint(_ckpt(config, f"joint_iter{iteration:06d}"),
                             {"seg": student, "gen": gen, "disc": disc},
                             {"phase": "joint", "iteration": iteration, "miou": None,
                              "config_hash": config_hash(config),
                              "arch": {"num_classes": C, "seed": config.seed}})

    t0 = time.time()
    train_joint(gen, disc, student, teacher, tgt_imgs, config.schedule, config.loss,
                seed=config.seed, writer=writer, evaluator=evaluator,
                eval_interval=config.eval.eval_interval, checkpoint_cb=checkpoint_cb)
    report = evaluator(student)
    writer.log_eval(config.schedule.iter_joint, "eval-joint", report)
    nets.save_checkpoint(_ckpt(config, "joint"), {"seg": student, "gen": gen, "disc": disc},
                         {"phase": "joint", "iteration": config.schedule.iter_joint,
                          "miou": report.miou, "config_hash": config_hash(config),
                          "arch": {"num_classes": C, "seed": config.seed}})
    manifest["phases"]["joint"] = {
        "completed": True, "wall_time_s": round(time.time() - t0, 2),
        "iterations": config.schedule.iter_joint,
        "post_joint_miou": report.miou, "checkpoint": _ckpt(config, "joint")}
    manifest["hashes"]["teacher_after_joint"] = state_hash(teacher.state_dict())
    manifest["hashes"]["frozen_blocks_after_joint"] = state_hash(student.frozen_state_dict())
    if manifest["hashes"].get("teacher") and \
            manifest["hashes"]["teacher_after_joint"] != manifest["hashes"]["teacher"]:
        raise AssertionError("teacher hash changed between translation and joint phases")
    if manifest["hashes"].get("frozen_blocks") and \
            manifest["hashes"]["frozen_blocks_after_joint"] != manifest["hashes"]["frozen_blocks"]:
        raise AssertionError("frozen block hash changed between warm-up and joint end")
    save_run_manifest(config, manifest)
    return manifest


def run_phase_evaluate(config: ExperimentConfig, checkpoint: str) -> dict:
    """Evaluate an arbitrary checkpoint on both splits; the pretrain phase is
    reported as the 'baseline' model."""
    _require(os.path.exists(checkpoint), f"missing checkpoint {checkpoint}")
    meta, tensors = nets.load_checkpoint(checkpoint)
    net = SegNet(config.dataset.scene.num_classes, seed=config.seed)
    nets.load_into(net, tensors, "seg")
    net.eval()
    data_dir = config.data_dir
    ds = synthdata.load_manifest(data_dir)
    phase = {"pretrain": "baseline"}.get(meta.get("phase"), meta.get("phase"))
    out = {"phase": phase, "checkpoint": checkpoint,
           "config_hash": config_hash(config)}
    src_imgs, src_labs = synthdata.load_split_with_labels(data_dir, ds, "source")
    if src_imgs.shape[0]:
        out["source"] = evaluation.evaluate_segmenter(
            net, src_imgs, src_labs, subset=_subset(config)).to_json_dict()
    tgt_imgs, tgt_labs = synthdata.load_split_with_labels(data_dir, ds, "target")
    if tgt_imgs.shape[0]:
        out["target"] = evaluation.evaluate_segmenter(
            net, tgt_imgs, tgt_labs, subset=_subset(config)).to_json_dict()
    path = os.path.join(config.output_dir, f"eval-{phase}.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=1, sort_keys=True)
        f.write("\n")
    return out


def run_phase_report(config: ExperimentConfig) -> dict:
    return evaluation.emit_report(config.output_dir, config)


def run_all(config: ExperimentConfig, force: bool = False) -> dict:
    run_phase_generate_data(config, force)
    run_phase_pretrain(config, force)
    run_phase_warmup(config, force)
    run_phase_translation(config, force)
    run_phase_joint(config, force)
    run_phase_evaluate(config, _ckpt(config, "pretrain"))
    return run_phase_report(config)
