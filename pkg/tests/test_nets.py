import numpy as np
import pytest

from segadapt import autodiff as ad
from segadapt import nets
from segadapt.autodiff import Tensor
from segadapt.optim import SGD


@pytest.fixture(scope="module")
def segnet():
    return nets.SegNet(num_classes=5, seed=0)


def test_seg_forward_shapes_and_normalization(segnet):
    rng = np.random.default_rng(0)
    img = rng.normal(0, 0.5, (1, 3, 64, 64)).astype(np.float32)
    segnet.eval()
    probs, logits = nets.seg_forward(segnet, img)
    assert probs.shape == (1, 5, 64, 64)
    assert logits.shape == (1, 5, 64, 64)
    np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-5)


def test_seg_forward_rejects_indivisible(segnet):
    with pytest.raises(ValueError):
        nets.seg_forward(segnet, np.zeros((1, 3, 60, 60), dtype=np.float32))


def test_teacher_clone_matches_student():
    rng = np.random.default_rng(1)
    img = rng.normal(0, 0.5, (1, 3, 32, 32)).astype(np.float32)
    student = nets.SegNet(5, seed=3).eval()
    teacher = nets.clone_net(student)
    p1, _ = nets.seg_forward(student, img)
    p2, _ = nets.seg_forward(teacher, img)
    np.testing.assert_array_equal(p1.data, p2.data)


def test_freeze_partial_contract():
    rng = np.random.default_rng(2)
    net = nets.freeze_partial(nets.SegNet(5, seed=1))
    frozen_before = {k: v.copy() for k, v in net.frozen_state_dict().items()}
    trainable = [p for p in net.parameters() if p.requires_grad]
    total = list(net.named_parameters())
    assert 0 < len(trainable) < len(total)
    head_before = net.head.weight.data.copy()
    # a few training steps move only dec1/head
    opt = SGD(net.parameters(), lr=0.05, momentum=0.9)
    for _ in range(3):
        img = rng.normal(0, 0.5, (2, 3, 32, 32)).astype(np.float32)
        probs, logits = nets.seg_forward(net, img)
        loss = ad.mean(logits * logits)
        opt.zero_grad()
        loss.backward()
        # frozen tensors never receive gradient
        for name in net.frozen_block_names:
            for _, p in getattr(net, name).named_parameters():
                assert p.grad is None
        opt.step()
    frozen_after = net.frozen_state_dict()
    for k in frozen_before:
        np.testing.assert_array_equal(frozen_before[k], frozen_after[k])
    assert not np.array_equal(net.head.weight.data, head_before)
    assert nets.state_hash(frozen_before) == nets.state_hash(frozen_after)


def test_translate_deterministic_and_bounded():
    gen = nets.TranslationGenerator(5, seed=0).eval()
    rng = np.random.default_rng(0)
    onehot = np.zeros((1, 5, 32, 32), dtype=np.float32)
    onehot[0, rng.integers(0, 5, (32, 32)), np.arange(32)[:, None], np.arange(32)] = 1
    z = rng.normal(0, 1, (1, 64)).astype(np.float32)
    out1 = nets.translate(gen, onehot, z)
    out2 = nets.translate(gen, onehot, z)
    np.testing.assert_array_equal(out1.data, out2.data)
    assert out1.shape == (1, 3, 32, 32)
    assert out1.data.min() >= -1 and out1.data.max() <= 1
    # soft conditioning shares the same pathway/contract
    soft = rng.random((1, 5, 32, 32)).astype(np.float32)
    soft /= soft.sum(axis=1, keepdims=True)
    out3 = nets.translate(gen, soft, z)
    assert out3.shape == (1, 3, 32, 32)


def test_translate_rejects_channel_mismatch():
    gen = nets.TranslationGenerator(5, seed=0)
    with pytest.raises(ValueError):
        nets.translate(gen, np.zeros((1, 4, 32, 32), dtype=np.float32), np.zeros(64, dtype=np.float32))


def test_encode_latent_dims_and_reparam():
    gen = nets.TranslationGenerator(5, seed=0)
    rng = np.random.default_rng(3)
    img = rng.normal(0, 0.5, (2, 3, 32, 32)).astype(np.float32)
    mu, logvar = nets.encode_latent(gen, img)
    assert mu.shape == (2, 64) and logvar.shape == (2, 64)
    z = nets.reparameterize(mu, logvar, 0)
    np.testing.assert_array_equal(z.data, mu.data)
    eps = rng.normal(0, 1, (2, 64)).astype(np.float32)
    z2 = nets.reparameterize(mu, logvar, eps)
    np.testing.assert_allclose(z2.data, mu.data + np.exp(0.5 * logvar.data) * eps, rtol=1e-5)


def test_reparam_gradient_of_z_wrt_mu_is_identity():
    # finite differences on a single latent coordinate
    gen = nets.TranslationGenerator(3, seed=1).astype(np.float64)
    img = np.random.default_rng(0).normal(0, 0.5, (1, 3, 16, 16))
    mu, logvar = nets.encode_latent(gen, img)
    eps = np.random.default_rng(1).normal(0, 1, (1, 64))
    mu_leaf = Tensor(mu.data.copy(), requires_grad=True)
    z = nets.reparameterize(mu_leaf, Tensor(logvar.data.copy()), eps)
    z_sum = ad.sum_(z)
    z_sum.backward()
    np.testing.assert_allclose(mu_leaf.grad, np.ones_like(mu_leaf.data))


def test_discriminator_structure():
    disc = nets.MultiScalePatchDiscriminator(seed=0)
    img = np.random.default_rng(0).normal(0, 0.5, (1, 3, 64, 64)).astype(np.float32)
    outputs = nets.discriminate(disc, img)
    assert len(outputs) == 2
    for feats, logits in outputs:
        assert len(feats) == disc.NUM_LAYERS == 3
        assert logits.shape[2] < 64 and logits.shape[3] < 64
    out2 = nets.discriminate(disc, img)
    for (f1, l1), (f2, l2) in zip(outputs, out2):
        np.testing.assert_array_equal(l1.data, l2.data)
        for a, b in zip(f1, f2):
            np.testing.assert_array_equal(a.data, b.data)


def test_perceptual_extractor_frozen_and_stable():
    phi1 = nets.PerceptualExtractor(seed=5)
    phi2 = nets.PerceptualExtractor(seed=5)
    for (n1, p1), (n2, p2) in zip(phi1.named_parameters(), phi2.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)
        assert not p1.requires_grad
    img = np.random.default_rng(0).normal(0, 0.5, (1, 3, 64, 64)).astype(np.float32)
    feats = nets.extract_features(phi1, img)
    assert [f.shape[2] for f in feats] == [64, 32, 16, 8, 4]
    assert [f.shape[1] for f in feats] == list(nets.PerceptualExtractor.CHANNELS)


def test_network_forward_finite_difference():
    # differentiability of each net wrt trainable parameters on a 3x8x8 input
    rng = np.random.default_rng(0)
    x64 = rng.normal(0, 0.5, (1, 3, 8, 8))

    def fd_check(net, run, param, h=1e-5, n_coords=4):
        idx = [tuple(rng.integers(0, s) for s in param.data.shape) for _ in range(n_coords)]
        loss = run()
        net.zero_grad()
        loss.backward()
        ana = param.grad
        for coord in idx:
            orig = param.data[coord]
            param.data[coord] = orig + h
            fp = run().item()
            param.data[coord] = orig - h
            fm = run().item()
            param.data[coord] = orig
            num = (fp - fm) / (2 * h)
            assert abs(ana[coord] - num) <= 1e-3 * max(1.0, abs(num)), (coord, ana[coord], num)

    seg = nets.SegNet(4, seed=0).astype(np.float64).eval()
    fd_check(seg, lambda: ad.mean(nets.seg_forward(seg, x64)[1] ** 2), seg.dec1.conv.weight)

    gen = nets.TranslationGenerator(4, seed=0).astype(np.float64)
    oh = np.zeros((1, 4, 8, 8))
    oh[0, 0] = 1
    z = rng.normal(0, 1, (1, 64))
    fd_check(gen, lambda: ad.mean(nets.translate(gen, oh, z) ** 2), gen.res[0].c1.weight)

    disc = nets.MultiScalePatchDiscriminator(seed=0).astype(np.float64)
    fd_check(disc, lambda: ad.mean(nets.discriminate(disc, x64)[0][1] ** 2), disc.scales[0].c1.weight)

    def latent_loss():
        mu, logvar = nets.encode_latent(gen, x64)
        return ad.mean(mu * mu) + ad.mean(logvar * logvar)

    fd_check(gen, latent_loss, gen.latent_enc.c1.weight)


def test_checkpoint_roundtrip(tmp_path):
    seg = nets.SegNet(5, seed=0)
    gen = nets.TranslationGenerator(5, seed=0)
    path = str(tmp_path / "state.ckpt")
    nets.save_checkpoint(path, {"seg": seg, "gen": gen},
                         {"phase": "pretrain", "iteration": 12, "config_hash": "abc", "miou": 0.5,
                          "arch": {"num_classes": 5}})
    meta, tensors = nets.load_checkpoint(path)
    assert meta["phase"] == "pretrain" and meta["iteration"] == 12
    seg2 = nets.SegNet(5, seed=99)
    nets.load_into(seg2, tensors, "seg")
    img = np.random.default_rng(0).normal(0, 0.5, (1, 3, 32, 32)).astype(np.float32)
    p1, _ = nets.seg_forward(seg.eval(), img)
    p2, _ = nets.seg_forward(seg2.eval(), img)
    np.testing.assert_array_equal(p1.data, p2.data)
    with pytest.raises(KeyError):
        nets.load_into(seg2, tensors, "nonexistent")


def test_state_hash_sensitivity():
    seg = nets.SegNet(5, seed=0)
    h1 = nets.state_hash(seg.state_dict())
    assert h1 == nets.state_hash(seg.state_dict())
    seg.head.weight.data[0, 0, 0, 0] += 1e-3
    assert nets.state_hash(seg.state_dict()) != h1
