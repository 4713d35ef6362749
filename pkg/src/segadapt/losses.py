"""Training objectives: perceptual distance, semantic consistency (masked
cross-entropy), discriminator feature matching, latent KL divergence, hinge
adversarial terms, and the two weighted composites used by the trainer."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .labelops import IGNORE_INDEX, one_hot

PERCEPTUAL_LAYER_WEIGHTS = (1 / 32, 1 / 16, 1 / 8, 1 / 4, 1.0)


@dataclass
class LossWeights:
    # translation objective
    lambda_c: float = 3.0
    lambda_p: float = 2.0
    lambda_f: float = 1.0
    lambda_kld: float = 0.05
    lambda_adv: float = 1.0
    # segmentation objective
    lambda_tgt: float = 1.0
    lambda_gen: float = 3.0
    lambda_pseg: float = 10.0
    lambda_f_seg: float = 1.0
    lambda_kld_seg: float = 0.05
    # perceptual layer weights
    w_perceptual: tuple = field(default_factory=lambda: PERCEPTUAL_LAYER_WEIGHTS)

    def validate(self):
        values = [self.lambda_c, self.lambda_p, self.lambda_f, self.lambda_kld,
                  self.lambda_adv, self.lambda_tgt, self.lambda_gen,
                  self.lambda_pseg, self.lambda_f_seg, self.lambda_kld_seg]
        if any(v < 0 for v in values):
            raise ValueError("loss weights must be >= 0")
        if len(self.w_perceptual) != 5:
            raise ValueError("w_perceptual must have length 5")


def _tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (np.ndarray, np.generic)):
        return Tensor(x)  # keep caller dtype (float64 for FD checks)
    return Tensor(np.asarray(x, dtype=np.float32))


def _mean_l1(a: Tensor, b: Tensor) -> Tensor:
    return ad.mean(ad.abs_(a - b))


def perceptual_loss(phi, a, b, weights=PERCEPTUAL_LAYER_WEIGHTS) -> Tensor:
    """Sum_i w_i * mean|phi_i(a) - phi_i(b)|. phi is any callable returning
    the per-stage feature list; the caller controls which side carries
    gradients."""
    a, b = _tensor(a), _tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"perceptual loss inputs differ in shape: {a.shape} vs {b.shape}")
    feats_a = phi(a)
    feats_b = phi(b)
    if len(feats_a) != len(weights):
        raise ValueError(f"{len(feats_a)} feature stages vs {len(weights)} layer weights")
    total = None
    for w, fa, fb in zip(weights, feats_a, feats_b):
        term = _mean_l1(fa, fb) * float(w)
        total = term if total is None else total + term
    return total


def semantic_consistency_loss(probs, labels, ignore_index: int = IGNORE_INDEX) -> Tensor:
    """Mean over non-ignore pixels of -log p(correct class). probs is
    (C,H,W) or (N,C,H,W); labels matches without the channel axis."""
    probs = _tensor(probs)
    labels = np.asarray(labels)
    if probs.ndim == 3:
        probs = ad.reshape(probs, (1,) + probs.shape)
    if labels.ndim == 2:
        labels = labels[None]
    if probs.shape[0] != labels.shape[0] or probs.shape[2:] != labels.shape[1:]:
        raise ValueError(f"probs {probs.shape} / labels {labels.shape} shape mismatch")
    C = probs.shape[1]
    mask = labels != ignore_index
    n_valid = int(mask.sum())
    if n_valid == 0:
        warnings.warn("semantic consistency loss: every pixel is ignore, returning 0")
        return Tensor(np.zeros((), dtype=probs.dtype))
    onehot = np.stack([one_hot(lab, C, ignore_index, dtype=probs.dtype) for lab in labels])
    logp = ad.log(probs + 1e-12)
    picked = ad.sum_(logp * Tensor(onehot))
    return picked * (-1.0 / n_valid)


def feature_match_from_outputs(real_out, fake_out) -> Tensor:
    """Sum of per-layer mean L1 feature distances given the discriminator's
    per-scale (features, logits) outputs; real features are detached."""
    total = None
    for (rf, _), (ff, _) in zip(real_out, fake_out):
        for r, f in zip(rf, ff):
            term = _mean_l1(f, r.detach())
            total = term if total is None else total + term
    return total


def feature_matching_loss(disc, real, fake) -> Tensor:
    """L1 distance between discriminator features of real vs fake, summed
    over scales and the 3 layers per scale. The real branch is detached so
    gradients reach only the fake image."""
    real, fake = _tensor(real), _tensor(fake)
    if real.shape != fake.shape:
        raise ValueError(f"feature matching inputs differ in shape: {real.shape} vs {fake.shape}")
    return feature_match_from_outputs(disc(real.detach()), disc(fake))


def kld_loss(mu, logvar) -> Tensor:
    """0.5 * sum_d(mu_d^2 + exp(logvar_d) - 1 - logvar_d), averaged over the
    batch axis when present. Zero iff mu=0 and logvar=0."""
    mu, logvar = _tensor(mu), _tensor(logvar)
    if mu.shape != logvar.shape:
        raise ValueError(f"mu {mu.shape} / logvar {logvar.shape} shape mismatch")
    per = mu * mu + ad.exp(logvar) - 1.0 - logvar
    if per.ndim <= 1:
        return ad.sum_(per) * 0.5
    return ad.mean(ad.sum_(per, axis=1)) * 0.5


def _as_logit_list(logits):
    if isinstance(logits, (list, tuple)):
        return [_tensor(l) for l in logits]
    return [_tensor(logits)]


def hinge_d_loss(real_logits, fake_logits) -> Tensor:
    """mean(relu(1 - D(real))) + mean(relu(1 + D(fake))), averaged over
    scales; accepts a single logit map or a per-scale list."""
    reals = _as_logit_list(real_logits)
    fakes = _as_logit_list(fake_logits)
    total = None
    for r, f in zip(reals, fakes):
        term = ad.mean(ad.relu(1.0 - r)) + ad.mean(ad.relu(1.0 + f))
        total = term if total is None else total + term
    return total * (1.0 / len(reals))


def hinge_g_loss(fake_logits) -> Tensor:
    """-mean(D(fake)), averaged over scales."""
    fakes = _as_logit_list(fake_logits)
    total = None
    for f in fakes:
        term = ad.mean(f) * -1.0
        total = term if total is None else total + term
    return total * (1.0 / len(fakes))


def _weighted(components: list[tuple[str, object, float]]):
    """Combine (name, value, weight) triples; disabled/missing terms count 0.
    Returns (total Tensor, {name: unweighted float}) for logging."""
    total = None
    logged = {}
    for name, value, weight in components:
        if value is None:
            logged[name] = 0.0
            continue
        v = _tensor(value)
        logged[name] = float(v.data)
        if weight == 0.0:
            continue
        term = v * float(weight)
        total = term if total is None else total + term
    if total is None:
        total = Tensor(np.zeros((), dtype=np.float32))
    return total, logged


def translation_loss(perceptual, semantic, kld, feat_match, adversarial,
                     weights: LossWeights):
    """lambda_p*L_p + lambda_c*L_c + lambda_KLD*L_KLD + lambda_f*L_f plus the
    generator hinge term. Returns (total, per-component dict)."""
    return _weighted([
        ("perceptual", perceptual, weights.lambda_p),
        ("semantic", semantic, weights.lambda_c),
        ("kld", kld, weights.lambda_kld),
        ("feat_match", feat_match, weights.lambda_f),
        ("adversarial", adversarial, weights.lambda_adv),
    ])


def segmentation_loss(ce_target, ce_generated, perceptual, feat_match, kld,
                      weights: LossWeights):
    """lambda_tgt*L_c(X_tgt,Y'') + lambda_gen*L_c(X'_tgt,Y') +
    lambda_pseg*L_p + lambda_f*L_f + lambda_KLD*L_KLD, each toggleable via
    its weight. Returns (total, per-component dict)."""
    return _weighted([
        ("ce_target", ce_target, weights.lambda_tgt),
        ("ce_generated", ce_generated, weights.lambda_gen),
        ("perceptual", perceptual, weights.lambda_pseg),
        ("feat_match", feat_match, weights.lambda_f_seg),
        ("kld", kld, weights.lambda_kld_seg),
    ])
