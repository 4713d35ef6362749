"""Desk-scale networks: segmentation U-net (teacher/student), label-conditioned
translation generator with a VAE-style latent branch, multi-scale patch
discriminator, and a frozen random perceptual feature stack."""
from __future__ import annotations

import copy
import hashlib
import json
import struct

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, stream)))


class ConvBNRelu(nn.Module):
    def __init__(self, in_ch, out_ch, rng, stride=1):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, rng, stride=stride)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return ad.relu(self.bn(self.conv(x)))


class SegNet(nn.Module):
    """Encoder (3 down-sampling stages, 16/32/64 channels) + skip-connected
    decoder back to full resolution + 1×1 classifier head."""

    def __init__(self, num_classes: int, seed: int = 0):
        super().__init__()
        self.num_classes = num_classes
        self.seed = seed
        r = _rng(seed, 100)
        self.stem = ConvBNRelu(3, 16, r)
        self.enc1 = ConvBNRelu(16, 16, r, stride=2)
        self.enc2 = ConvBNRelu(16, 32, r, stride=2)
        self.enc3 = ConvBNRelu(32, 64, r, stride=2)
        self.dec3 = ConvBNRelu(64 + 32, 32, r)
        self.dec2 = ConvBNRelu(32 + 16, 16, r)
        self.dec1 = ConvBNRelu(16 + 16, 16, r)
        self.head = nn.Conv2d(16, num_classes, r, kernel=1, gain=1.0)
        # everything before dec1 is frozen by freeze_partial
        self.frozen_block_names = ["stem", "enc1", "enc2", "enc3", "dec3", "dec2"]
        self.partially_frozen = False

    def forward(self, x):
        s = self.stem(x)
        e1 = self.enc1(s)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        d3 = self.dec3(ad.concat([ad.upsample_nearest2d(e3), e2], axis=1))
        d2 = self.dec2(ad.concat([ad.upsample_nearest2d(d3), e1], axis=1))
        d1 = self.dec1(ad.concat([ad.upsample_nearest2d(d2), s], axis=1))
        return self.head(d1)

    def frozen_state_dict(self) -> dict:
        out = {}
        for name in self.frozen_block_names:
            block = getattr(self, name)
            for pname, p in block.named_parameters(f"{name}."):
                out[pname] = p.data
            for bname, b in block.named_buffers(f"{name}."):
                out[bname] = b.data
        return out


def seg_forward(net: SegNet, img) -> tuple[Tensor, Tensor]:
    """Run the segmenter; returns (probabilities, logits), both C×H×W per item."""
    data = img.data if isinstance(img, Tensor) else img
    H, W = data.shape[-2], data.shape[-1]
    if H % 8 or W % 8:
        raise ValueError(f"spatial size {H}x{W} must be divisible by 8")
    x = img if isinstance(img, Tensor) else Tensor(np.asarray(img, dtype=np.float32))
    if x.ndim == 3:
        x = ad.reshape(x, (1,) + x.shape)
    logits = net(x)
    return ad.softmax(logits, axis=1), logits


def freeze_partial(net: SegNet) -> SegNet:
    """Freeze every block except the final decoder block and the classifier
    head: frozen parameters drop out of gradient computation and frozen
    batch-norm layers stop updating their running statistics."""
    for name in net.frozen_block_names:
        block = getattr(net, name)
        block.requires_grad_(False)
        for m in block.modules():
            if isinstance(m, nn.BatchNorm2d):
                m.frozen = True
    net.partially_frozen = True
    return net


def clone_net(net):
    return copy.deepcopy(net)


class ResBlock(nn.Module):
    def __init__(self, ch, rng):
        super().__init__()
        self.c1 = nn.Conv2d(ch, ch, rng)
        self.n1 = nn.InstanceNorm2d(ch)
        self.c2 = nn.Conv2d(ch, ch, rng)
        self.n2 = nn.InstanceNorm2d(ch)

    def forward(self, x):
        h = ad.relu(self.n1(self.c1(x)))
        h = self.n2(self.c2(h))
        return x + h


class LatentEncoder(nn.Module):
    def __init__(self, latent_dim, rng):
        super().__init__()
        self.c1 = nn.Conv2d(3, 16, rng, stride=2)
        self.c2 = nn.Conv2d(16, 32, rng, stride=2)
        self.c3 = nn.Conv2d(32, 64, rng, stride=2)
        self.fc_mu = nn.Linear(64, latent_dim, rng)
        self.fc_logvar = nn.Linear(64, latent_dim, rng)

    def forward(self, x):
        h = ad.leaky_relu(self.c1(x))
        h = ad.leaky_relu(self.c2(h))
        h = ad.leaky_relu(self.c3(h))
        pooled = ad.mean(h, axis=(2, 3))
        return self.fc_mu(pooled), self.fc_logvar(pooled)


class TranslationGenerator(nn.Module):
    """Content-stream generator: renders a 3×H×W image in [-1,1] from a
    C-channel (one-hot or soft) label map, modulated by a 64-d latent code
    produced by a small image encoder (mu, logvar)."""

    def __init__(self, num_classes: int, seed: int = 0, latent_dim: int = 64):
        super().__init__()
        self.num_classes = num_classes
        self.latent_dim = latent_dim
        self.seed = seed
        r = _rng(seed, 200)
        self.enc0 = nn.Conv2d(num_classes, 32, r)
        self.in0 = nn.InstanceNorm2d(32)
        self.enc1 = nn.Conv2d(32, 64, r, stride=2)
        self.in1 = nn.InstanceNorm2d(64)
        self.enc2 = nn.Conv2d(64, 64, r, stride=2)
        self.in2 = nn.InstanceNorm2d(64)
        self.film = nn.Linear(latent_dim, 128, r)
        self.res = [ResBlock(64, r) for _ in range(4)]
        self.dec1 = nn.Conv2d(64, 32, r)
        self.din1 = nn.InstanceNorm2d(32)
        self.dec2 = nn.Conv2d(32, 16, r)
        self.din2 = nn.InstanceNorm2d(16)
        self.dec3 = nn.Conv2d(16, 16, r)
        self.din3 = nn.InstanceNorm2d(16)
        self.out = nn.Conv2d(16, 3, r, gain=1.0)
        self.latent_enc = LatentEncoder(latent_dim, r)

    def forward(self, label_input, z):
        x = ad.relu(self.in0(self.enc0(label_input)))
        x = ad.relu(self.in1(self.enc1(x)))
        x = ad.relu(self.in2(self.enc2(x)))
        mod = self.film(z)
        n = mod.shape[0]
        gamma = ad.reshape(mod[:, :64], (n, 64, 1, 1))
        beta = ad.reshape(mod[:, 64:], (n, 64, 1, 1))
        x = x * (1.0 + gamma) + beta
        for block in self.res:
            x = block(x)
        x = ad.relu(self.din1(self.dec1(ad.upsample_nearest2d(x))))
        x = ad.relu(self.din2(self.dec2(x)))
        x = ad.relu(self.din3(self.dec3(ad.upsample_nearest2d(x))))
        return ad.tanh(self.out(x))


def translate(gen: TranslationGenerator, label_input, latent) -> Tensor:
    """Generate an image from label conditioning. `latent` is an (N,64)
    array/Tensor, typically a prior sample or the reparameterized posterior."""
    x = label_input if isinstance(label_input, Tensor) else Tensor(np.asarray(label_input, dtype=np.float32))
    if x.ndim == 3:
        x = ad.reshape(x, (1,) + x.shape)
    if x.shape[1] != gen.num_classes:
        raise ValueError(f"label input has {x.shape[1]} channels, generator expects {gen.num_classes}")
    z = latent if isinstance(latent, Tensor) else Tensor(np.asarray(latent, dtype=np.float32))
    if z.ndim == 1:
        z = ad.reshape(z, (1,) + z.shape)
    return gen(x, z)


def encode_latent(gen: TranslationGenerator, img) -> tuple[Tensor, Tensor]:
    x = img if isinstance(img, Tensor) else Tensor(np.asarray(img, dtype=np.float32))
    if x.ndim == 3:
        x = ad.reshape(x, (1,) + x.shape)
    return gen.latent_enc(x)


def reparameterize(mu: Tensor, logvar: Tensor, eps) -> Tensor:
    """z = mu + exp(logvar/2) * eps; pass eps=0 for the posterior mean."""
    if isinstance(eps, (int, float)) and eps == 0:
        return mu
    e = eps if isinstance(eps, Tensor) else Tensor(np.asarray(eps, dtype=mu.dtype))
    return mu + ad.exp(logvar * 0.5) * e


class _DiscScale(nn.Module):
    def __init__(self, rng):
        super().__init__()
        self.c1 = nn.Conv2d(3, 16, rng, stride=2)
        self.c2 = nn.Conv2d(16, 32, rng, stride=2)
        self.n2 = nn.InstanceNorm2d(32)
        self.c3 = nn.Conv2d(32, 64, rng, stride=2)
        self.n3 = nn.InstanceNorm2d(64)
        self.out = nn.Conv2d(64, 1, rng, gain=1.0)

    def forward(self, x):
        f1 = ad.leaky_relu(self.c1(x))
        f2 = ad.leaky_relu(self.n2(self.c2(f1)))
        f3 = ad.leaky_relu(self.n3(self.c3(f2)))
        return [f1, f2, f3], self.out(f3)


class MultiScalePatchDiscriminator(nn.Module):
    """Two patch discriminators, one on the full image and one on a 2×
    average-pooled copy; each exposes its three intermediate feature maps."""

    NUM_LAYERS = 3

    def __init__(self, seed: int = 0):
        super().__init__()
        r = _rng(seed, 300)
        self.scales = [_DiscScale(r), _DiscScale(r)]

    def forward(self, x):
        outputs = []
        cur = x
        for i, scale in enumerate(self.scales):
            if i > 0:
                cur = ad.avg_pool2d(cur, 2)
            outputs.append(scale(cur))
        return outputs


def discriminate(disc: MultiScalePatchDiscriminator, img) -> list:
    x = img if isinstance(img, Tensor) else Tensor(np.asarray(img, dtype=np.float32))
    if x.ndim == 3:
        x = ad.reshape(x, (1,) + x.shape)
    return disc(x)


class PerceptualExtractor(nn.Module):
    """Five frozen conv stages (8,16,32,64,64 channels; stride-2 between
    stages) with weights drawn once from a seeded stream. Acts as a fixed
    feature space for the perceptual distance."""

    CHANNELS = (8, 16, 32, 64, 64)

    def __init__(self, seed: int = 0):
        super().__init__()
        self.seed = seed
        r = _rng(seed, 400)
        chans = (3,) + self.CHANNELS
        self.stages = [
            nn.Conv2d(chans[i], chans[i + 1], r, stride=1 if i == 0 else 2)
            for i in range(5)
        ]
        self.requires_grad_(False)

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = ad.relu(stage(x))
            feats.append(x)
        return feats


def extract_features(phi: PerceptualExtractor, img) -> list:
    x = img if isinstance(img, Tensor) else Tensor(np.asarray(img, dtype=np.float32))
    if x.ndim == 3:
        x = ad.reshape(x, (1,) + x.shape)
    return phi(x)


# ------------------------------------------------------------- checkpoints

MAGIC = b"SACKPT01"


def save_checkpoint(path: str, nets: dict, meta: dict | None = None):
    """Binary container: magic, u32 header length, JSON header, then raw
    little-endian float32 tensor data. The header stores per-tensor name,
    shape, dtype and offset plus caller metadata (arch, config hash, phase)."""
    tensors = []
    blobs = []
    offset = 0
    for net_name, net in nets.items():
        for tname, arr in net.state_dict().items():
            raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            tensors.append({"name": f"{net_name}.{tname}", "shape": list(arr.shape),
                            "dtype": "<f4", "offset": offset, "nbytes": len(raw)})
            blobs.append(raw)
            offset += len(raw)
    header = dict(meta or {})
    header["format"] = 1
    header["tensors"] = tensors
    hbytes = json.dumps(header, sort_keys=True).encode()
    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", len(hbytes)))
            f.write(hbytes)
            for raw in blobs:
                f.write(raw)
    except OSError as e:
        raise RuntimeError(f"failed to write checkpoint {path}: {e}") from e


def load_checkpoint(path: str) -> tuple[dict, dict]:
    """Returns (meta header, {tensor name: array})."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path} is not a checkpoint (bad magic {magic!r})")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        data = f.read()
    tensors = {}
    for t in header.pop("tensors"):
        raw = data[t["offset"]:t["offset"] + t["nbytes"]]
        tensors[t["name"]] = np.frombuffer(raw, dtype=t["dtype"]).reshape(t["shape"]).copy()
    return header, tensors


def load_into(net, tensors: dict, prefix: str):
    state = {k[len(prefix) + 1:]: v for k, v in tensors.items()
             if k.startswith(prefix + ".")}
    if not state:
        raise KeyError(f"checkpoint holds no tensors for '{prefix}'")
    net.load_state_dict(state)
    return net


def state_hash(state: dict) -> str:
    """Order-independent digest of a {name: array} mapping."""
    h = hashlib.sha256()
    for name in sorted(state):
        h.update(name.encode())
        h.update(np.ascontiguousarray(state[name], dtype="<f4").tobytes())
    return h.hexdigest()
