import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from csiaug.errors import ConfigError, ShapeError
from csiaug.vit import (
    ClassifierMetrics,
    SimpleViTFi,
    ViTConfig,
    downsample,
    load_classifier,
    parameter_count,
    patchify,
    plot_confusion,
    predict,
    save_classifier,
    train_classifier,
)
from csiaug.vit.train import build_classifier, logits_for


def small_config(**kw):
    d = dict(num_classes=3, input_shape=(4, 16, 32), token_dim=16, depth=1, heads=2, mlp_dim=32, seed=0)
    d.update(kw)
    return ViTConfig(**d)


# ---------------------------------------------------------------- geometry


def test_table_config_geometry():
    c = ViTConfig()
    assert c.downsampled_shape == (4, 128, 128)
    assert c.patch_shape == (4, 128, 8)
    assert c.patch_size == 4096
    assert c.num_patches * c.patch_shape[2] == 128


def test_parameter_count_closed_form():
    for c in (ViTConfig(), small_config(), ViTConfig(num_classes=6, input_shape=(4, 32, 32))):
        model = SimpleViTFi(c)
        assert sum(p.numel() for p in model.parameters()) == parameter_count(c)
    assert parameter_count(ViTConfig(num_classes=21)) == 331157


def test_summary_lists_table_values():
    text = SimpleViTFi(ViTConfig()).summary()
    assert "16 x (4, 128, 8)" in text
    assert "(4, 128, 128)" in text
    for key, value in [("token dim", 64), ("depth", 2), ("heads", 4), ("mlp dim", 128)]:
        assert any(line.split() == key.split() + [str(value)] for line in text.splitlines()), key


@pytest.mark.parametrize("bad", [dict(input_shape=(4, 15, 32)), dict(input_shape=(4, 16, 30)),
                                 dict(token_dim=10, heads=4), dict(num_classes=1)])
def test_config_rejects_bad_geometry(bad):
    with pytest.raises(ConfigError):
        small_config(**bad)


def test_downsample_cases():
    x = np.full((4, 256, 256), 0.37)
    np.testing.assert_array_equal(downsample(x), np.full((4, 128, 128), 0.37))
    k, t = np.indices((256, 256))
    checker = np.broadcast_to((k + t) % 2, (4, 256, 256)).astype(float)
    np.testing.assert_array_equal(downsample(checker), np.full((4, 128, 128), 0.5))
    rng = np.random.default_rng(0)
    r = rng.normal(size=(2, 3, 8, 6))
    brute = np.zeros((2, 3, 4, 3))
    for i in range(4):
        for j in range(3):
            brute[..., i, j] = (r[..., 2 * i, 2 * j] + r[..., 2 * i + 1, 2 * j]
                                + r[..., 2 * i, 2 * j + 1] + r[..., 2 * i + 1, 2 * j + 1]) / 4
    np.testing.assert_allclose(downsample(r), brute, atol=1e-12)
    torch.testing.assert_close(downsample(torch.tensor(r, dtype=torch.float64)), torch.tensor(brute), atol=1e-6, rtol=0)
    with pytest.raises(ShapeError):
        downsample(np.zeros((4, 5, 6)))


def test_patchify_slab_locality_and_order():
    x = torch.randn(1, 4, 128, 128)
    base = patchify(x, 16)
    assert base.shape == (1, 16, 4096)
    # flattening is (channel, subcarrier, time-in-slab)
    assert torch.equal(base[0, 3], x[0, :, :, 24:32].reshape(-1))
    for col in (0, 37, 127):
        y = x.clone()
        y[0, 2, 50, col] += 1.0
        changed = (patchify(y, 16) != base).any(-1)[0]
        assert changed.nonzero().flatten().tolist() == [col // 8]


def test_embed_zero_input_gives_position_embeddings():
    model = SimpleViTFi(small_config())
    with torch.no_grad():
        model.proj.bias.zero_()
    tokens = model.embed(torch.zeros(2, 4, 16, 32))
    assert torch.equal(tokens, model.pos_embedding.expand(2, -1, -1))


def test_identity_projection_passes_slabs_through():
    # slabs of 2 x 2 x 2 values projected to an 8-dim token
    cfg = ViTConfig(num_classes=2, input_shape=(2, 4, 64), token_dim=8, depth=1, heads=2, mlp_dim=8)
    assert cfg.patch_size == 8
    model = SimpleViTFi(cfg)
    with torch.no_grad():
        model.proj.weight.copy_(torch.eye(8))
        model.proj.bias.zero_()
        model.pos_embedding.zero_()
    x = torch.randn(3, 2, 4, 64)
    torch.testing.assert_close(model.embed(x), model.slabs(x))


# ---------------------------------------------------------------- encoder and head


def test_attention_rows_sum_to_one():
    model = SimpleViTFi(ViTConfig(num_classes=5)).eval()
    tokens = torch.randn(2, 16, 64)
    _, maps = model.encode(tokens, return_attention=True)
    assert len(maps) == 2
    for attn in maps:
        assert attn.shape == (2, 4, 16, 16)
        assert (attn.sum(-1) - 1).abs().max().item() < 1e-6


def test_joint_permutation_leaves_pooled_output_unchanged():
    torch.manual_seed(0)
    model = SimpleViTFi(ViTConfig(num_classes=5)).eval()
    slabs = torch.randn(2, 16, 4096)
    perm = torch.randperm(16)
    with torch.no_grad():
        a = model.encode(model.proj(slabs) + model.pos_embedding)
        b = model.encode(model.proj(slabs[:, perm]) + model.pos_embedding[perm])
    assert (a - b).abs().max().item() < 1e-5


def test_eval_mode_is_deterministic_and_train_mode_is_not():
    model = SimpleViTFi(small_config(dropout=0.5))
    x = torch.randn(4, 4, 16, 32)
    model.eval()
    assert torch.equal(model(x), model(x))
    model.train()
    assert not torch.equal(model(x), model(x))


def test_head_cases():
    model = SimpleViTFi(small_config()).eval()
    with torch.no_grad():
        const = model.classify(torch.full((2, 16), 3.2))
        torch.testing.assert_close(const, model.head.bias.expand(2, -1), atol=1e-6, rtol=0)
        z = torch.randn(5, 16)
        z = z / z.norm(dim=1, keepdim=True) * 4
        assert (model.classify(10 * z) - model.classify(z)).abs().max().item() < 1e-4
        logits = model(torch.randn(6, 4, 16, 32))
    probs = torch.softmax(logits, -1)
    assert (probs.sum(-1) - 1).abs().max().item() < 1e-6


def test_predict_breaks_ties_low():
    assert predict([[0.2, 0.7, 0.7], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]).tolist() == [1, 0, 0]


def test_classifier_gradient_matches_finite_differences():
    cfg = ViTConfig(num_classes=3, input_shape=(2, 8, 32), token_dim=8, depth=1, heads=2, mlp_dim=16, dropout=0.0)
    torch.manual_seed(0)
    model = SimpleViTFi(cfg).double()
    g = torch.Generator().manual_seed(1)
    x = torch.randn(5, 2, 8, 32, generator=g, dtype=torch.float64)
    y = torch.tensor([0, 1, 2, 1, 0])

    def loss():
        return F.cross_entropy(model(x), y)

    model.zero_grad()
    loss().backward()
    flat = [(p, i) for p in model.parameters() for i in range(p.numel())]
    pick = np.random.default_rng(2).choice(len(flat), 20, replace=False)
    h = 1e-6
    with torch.no_grad():
        for k in pick:
            p, i = flat[k]
            analytic = p.grad.view(-1)[i].item()
            orig = p.view(-1)[i].item()
            p.view(-1)[i] = orig + h
            up = loss().item()
            p.view(-1)[i] = orig - h
            down = loss().item()
            p.view(-1)[i] = orig
            numeric = (up - down) / (2 * h)
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            assert rel <= 1e-3, (k, analytic, numeric)


def test_first_batch_loss_near_log_classes():
    cfg = ViTConfig(num_classes=21)
    model = build_classifier(cfg).train()
    g = torch.Generator().manual_seed(0)
    x = torch.rand(32, 4, 256, 256, generator=g) * 2 - 1
    y = torch.randint(0, 21, (32,), generator=g)
    loss = F.cross_entropy(model(x), y).item()
    assert abs(loss - math.log(21)) < 0.2 * math.log(21)


# ---------------------------------------------------------------- training


def separable(n_per_class=32, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.1, (2 * n_per_class, 4, 16, 32)).astype(np.float32)
    y = np.repeat([0, 1], n_per_class)
    x[y == 0] += 0.5
    x[y == 1] -= 0.5
    return x, y


def test_separable_toy_reaches_full_train_accuracy():
    x, y = separable()
    cfg = small_config(num_classes=2, token_dim=64, depth=2, heads=4, mlp_dim=128, epochs=50)
    trained = train_classifier(cfg, x, y, x, y)
    assert trained.metrics.overall_accuracy == 1.0
    assert trained.epoch_losses[-1] < trained.epoch_losses[0]
    assert abs(trained.first_batch_loss - math.log(2)) < 0.2 * math.log(2)


def test_training_is_deterministic_and_checkpoints_round_trip(tmp_path):
    x, y = separable(8)
    cfg = small_config(num_classes=2, epochs=2)
    a = train_classifier(cfg, x, y, x, y)
    b = train_classifier(cfg, x, y, x, y)
    assert a.epoch_losses == b.epoch_losses
    path = save_classifier(tmp_path / "vit.npz", a)
    back = load_classifier(path)
    np.testing.assert_array_equal(logits_for(back, x), logits_for(a.model, x))


def test_training_errors():
    x, y = separable(4)
    cfg = small_config(num_classes=2, epochs=1)
    with pytest.raises(ConfigError):
        train_classifier(cfg, x[:0], y[:0])
    with pytest.raises(ConfigError):
        train_classifier(cfg, x, y, x[:0], y[:0])
    with pytest.raises(ConfigError):
        train_classifier(cfg, x, y + 1)
    with pytest.raises(ShapeError):
        SimpleViTFi(cfg)(torch.zeros(1, 4, 16, 16))


# ---------------------------------------------------------------- metrics


def test_metrics_invariants(tmp_path):
    rng = np.random.default_rng(0)
    y_true = rng.integers(0, 4, 200)
    y_pred = np.where(rng.random(200) < 0.7, y_true, rng.integers(0, 4, 200))
    m = ClassifierMetrics.from_predictions(y_true, y_pred, 5)
    np.testing.assert_array_equal(m.confusion.sum(1), np.bincount(y_true, minlength=5))
    acc = m.per_class_accuracy
    for i in range(4):
        assert acc[i] == m.confusion[i, i] / m.confusion[i].sum()
    assert np.isnan(acc[4])
    assert m.overall_accuracy == np.mean(y_true == y_pred)
    assert m.mean_accuracy([0, 2]) == pytest.approx((acc[0] + acc[2]) / 2)
    back = ClassifierMetrics.read_json(m.write_json(tmp_path / "m.json"))
    np.testing.assert_array_equal(back.confusion, m.confusion)
    png = plot_confusion(m, tmp_path / "cm.png", title="t", highlight=[1, 3])
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
