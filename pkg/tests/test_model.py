import numpy as np
import pytest

from aesthete import autodiff as ad
from aesthete.autodiff import Tape, Tensor, backward
from aesthete.model import (
    ATTRIBUTE_NAMES,
    AestheticModel,
    CheckpointError,
    ModelConfig,
    load_checkpoint,
    save_checkpoint,
)

TINY = ModelConfig(
    image_size=16,
    feature_size=4,
    feature_channels=8,
    conv_channels=(4, 6),
    attention_hidden=8,
    attr_hidden=4,
    hyper_hidden=(6, 5),
)


@pytest.fixture(scope="module")
def model():
    return AestheticModel(TINY)


@pytest.fixture(scope="module")
def image():
    return ad.default_rng(1).random((16, 16, 3)).astype(np.float32)


def test_config_defaults():
    cfg = ModelConfig()
    assert cfg.k == 11
    assert cfg.hyper_hidden == (102, 19)
    assert cfg.attribute_names == ATTRIBUTE_NAMES
    assert cfg.sigma == 0.1


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(sigma=0.0)
    with pytest.raises(ValueError):
        ModelConfig(attribute_names=("a", "b"))
    with pytest.raises(ValueError):
        ModelConfig(image_size=60)  # not a power-of-two multiple of feature size
    with pytest.raises(ValueError):
        ModelConfig(conv_channels=(8, 16))  # needs 3 halvings for 64 -> 8


def test_extract_features_shape_and_purity(model, image):
    f1 = model.extract_features(Tensor(image[None]))
    f2 = model.extract_features(Tensor(image[None]))
    assert f1.shape == (1, 4, 4, 8)
    np.testing.assert_array_equal(f1.data, f2.data)


def test_extract_features_zero_image_finite(model):
    feats = model.extract_features(Tensor(np.zeros((1, 16, 16, 3), dtype=np.float32)))
    assert np.isfinite(feats.data).all()


def test_extract_features_default_shape():
    big = AestheticModel(ModelConfig())
    feats = big.extract_features(Tensor(np.zeros((1, 64, 64, 3), dtype=np.float32)))
    assert feats.shape == (1, 8, 8, 64)


def test_extract_features_rejects_wrong_dims(model):
    with pytest.raises(ValueError):
        model.extract_features(Tensor(np.zeros((1, 8, 8, 3), dtype=np.float32)))


def test_attention_mask_sums_to_one(model, image):
    feats = model.extract_features(Tensor(image[None]))
    for i in (0, 5, 10):
        mask = model.attend(feats, i)
        assert mask.data.min() >= 0
        assert abs(mask.data.sum() - 1.0) < 1e-5


def test_attention_uniform_when_final_layer_zeroed(image):
    m = AestheticModel(TINY)
    m.params["att0_w2"].data[:] = 0
    m.params["att0_b2"].data[:] = 0
    feats = m.extract_features(Tensor(image[None]))
    mask = m.attend(feats, 0)
    np.testing.assert_allclose(mask.data, np.full((1, 16), 1 / 16), atol=1e-7)


def test_attend_index_out_of_range(model, image):
    feats = model.extract_features(Tensor(image[None]))
    with pytest.raises(IndexError):
        model.attend(feats, 11)


def test_attention_gradient_stays_in_own_head(model, image):
    probe = Tensor(ad.default_rng(7).standard_normal((1, 16)).astype(np.float32))
    tape = Tape()
    with tape:
        feats = model.extract_features(Tensor(image[None]))
        mask = model.attend(feats, 2)
        loss = ad.reduce_sum(ad.mul(mask, probe))
    backward(tape, loss)
    assert np.abs(model.params["att2_w2"].grad).max() > 0
    assert np.abs(model.params["att2_w1"].grad).max() > 0
    for i in (0, 1, 3):
        g = model.params[f"att{i}_w2"].grad
        assert g is None or not g.any()


def test_apply_mask_matches_loop(model, image):
    rng = ad.default_rng(2)
    feats = Tensor(rng.random((1, 4, 4, 8)).astype(np.float32))
    mask_data = rng.random((1, 16)).astype(np.float32)
    mask_data /= mask_data.sum()
    out = model.apply_mask(feats, Tensor(mask_data)).data[0]
    expected = np.empty_like(out)
    m2 = mask_data.reshape(4, 4)
    for h in range(4):
        for w in range(4):
            for c in range(8):
                expected[h, w, c] = feats.data[0, h, w, c] * m2[h, w]
    np.testing.assert_allclose(out, expected, atol=1e-6)


def test_apply_mask_uniform_scales(model):
    feats = Tensor(np.ones((1, 4, 4, 8), dtype=np.float32))
    uniform = Tensor(np.full((1, 16), 1 / 16, dtype=np.float32))
    out = model.apply_mask(feats, uniform)
    np.testing.assert_allclose(out.data, 1 / 16, atol=1e-7)


def test_apply_mask_one_hot(model):
    feats = Tensor(np.ones((1, 4, 4, 8), dtype=np.float32))
    hot = np.zeros((1, 16), dtype=np.float32)
    hot[0, 5] = 1.0  # cell (1, 1)
    out = model.apply_mask(feats, Tensor(hot)).data[0]
    assert out[1, 1].sum() == pytest.approx(8.0)
    out[1, 1] = 0
    assert not out.any()


def test_estimate_attribute_range_and_zero_head(model, image):
    feats = model.extract_features(Tensor(image[None]))
    mask = model.attend(feats, 3)
    mean = model.estimate_attribute(model.apply_mask(feats, mask), 3)
    assert abs(mean.item()) < 1.0

    zeroed = AestheticModel(TINY)
    zeroed.params["attr3_w2"].data[:] = 0
    zeroed.params["attr3_b2"].data[:] = 0
    mean0 = zeroed.estimate_attribute(zeroed.apply_mask(feats, mask), 3)
    assert mean0.item() == 0.0


def test_posterior_ignores_mask_and_is_permutation_invariant(model, image):
    feats = model.extract_features(Tensor(image[None]))
    q1 = model.posterior_estimate(feats, 4).data
    # posterior never sees a mask; permuting spatial cells leaves the pooled input unchanged
    perm = ad.default_rng(3).permutation(16)
    permuted = feats.data[0].reshape(16, 8)[perm].reshape(1, 4, 4, 8)
    q2 = model.posterior_estimate(Tensor(permuted), 4).data
    np.testing.assert_allclose(q1, q2, atol=1e-6)


def test_mix_weights_uniform_when_zeroed(image):
    m = AestheticModel(TINY)
    m.params["hyper_w3"].data[:] = 0
    m.params["hyper_b3"].data[:] = 0
    feats = m.extract_features(Tensor(image[None]))
    w = m.mix_weights(feats)
    np.testing.assert_allclose(w.data, np.full((1, 11), 1 / 11), atol=1e-7)


def test_mix_weights_sum_to_one(model, image):
    feats = model.extract_features(Tensor(image[None]))
    w = model.mix_weights(feats)
    assert abs(w.data.sum() - 1.0) < 1e-6
    assert w.data.min() >= 0


def test_mix_weights_gradient_reaches_hyper_params(model, image):
    tape = Tape()
    with tape:
        out = model.forward_batch(Tensor(image[None]))
        loss = ad.reduce_sum(out["overall"])
    backward(tape, loss)
    for name in ("hyper_w1", "hyper_w2", "hyper_w3"):
        assert np.abs(model.params[name].grad).max() > 0


def test_overall_score_examples():
    one_hot = Tensor(np.array([[0.0, 1.0, 0.0]]))
    scores = Tensor(np.array([[0.5, -0.2, 0.9]]))
    assert AestheticModel.overall_score(one_hot, scores).item() == pytest.approx(-0.2)

    w = Tensor(np.array([[0.5, 0.3, 0.2]]))
    s = Tensor(np.array([[0.8, -0.2, 0.4]]))
    assert AestheticModel.overall_score(w, s).item() == pytest.approx(0.42, abs=1e-6)

    any_w = Tensor(np.array([[0.2, 0.5, 0.3]]))
    const = Tensor(np.full((1, 3), 0.7))
    assert AestheticModel.overall_score(any_w, const).item() == pytest.approx(0.7, abs=1e-6)

    with pytest.raises(ValueError):
        AestheticModel.overall_score(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 4))))


def test_evaluate_report_invariants(model, image):
    r1 = model.evaluate(image)
    r2 = model.evaluate(image)
    assert r1.overall == r2.overall
    assert [a.score for a in r1.attributes] == [a.score for a in r2.attributes]

    weights = np.array([a.weight for a in r1.attributes])
    scores = np.array([a.score for a in r1.attributes])
    assert abs(r1.overall - weights @ scores) < 1e-5
    assert abs(weights.sum() - 1.0) < 1e-6
    assert len(r1.attributes) == 11
    assert all(weights[i] >= weights[i + 1] for i in range(10))
    for a in r1.attributes:
        assert abs(a.mask.sum() - 1.0) < 1e-5
        assert -1 < a.score < 1
    assert -1 < r1.overall < 1


def test_evaluate_rejects_bad_shape(model):
    with pytest.raises(ValueError):
        model.evaluate(np.zeros((16, 16), dtype=np.float32))


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path, model, image):
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded, opt = load_checkpoint(path)
    assert opt is None
    r1 = model.evaluate(image)
    r2 = loaded.evaluate(image)
    assert r1.overall == r2.overall
    for a, b in zip(r1.attributes, r2.attributes):
        assert a.name == b.name and a.score == b.score and a.weight == b.weight
        np.testing.assert_array_equal(a.mask, b.mask)


def test_checkpoint_round_trip_with_optimizer(tmp_path, model):
    state = ad.AdamState(model.parameters())
    state.step = 7
    state.m[0][:] = 0.5
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path, optimizer_state=state)
    _, loaded_state = load_checkpoint(path)
    assert loaded_state.step == 7
    np.testing.assert_allclose(loaded_state.m[0], state.m[0])


def test_checkpoint_truncated_file(tmp_path, model):
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_bad_magic(tmp_path, model):
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_config_mismatch(tmp_path, model):
    import json
    import struct

    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    head_len = struct.unpack("<I", raw[8:12])[0]
    header = json.loads(raw[12 : 12 + head_len])
    header["config"]["attribute_names"] = header["config"]["attribute_names"][:9]  # K != 11
    new_head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path.write_bytes(raw[:8] + struct.pack("<I", len(new_head)) + new_head + raw[12 + head_len :])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


# ---------------------------------------------------------------------------
# end-to-end differentiability


def test_gradients_reach_every_parameter_group():
    model = AestheticModel(TINY)
    rng = ad.default_rng(4)
    image = rng.random((2, 16, 16, 3)).astype(np.float32)
    y = rng.uniform(-0.5, 0.5, 2).astype(np.float32)
    ya = rng.uniform(-0.5, 0.5, (2, 11)).astype(np.float32)

    from aesthete.train import TrainingConfig, batch_losses

    tape = Tape()
    with tape:
        losses = batch_losses(model, image, y, ya, TrainingConfig())
    backward(tape, losses["total"])
    for group, params in model.parameter_groups().items():
        total = sum(float(np.abs(p.grad).sum()) for p in params if p.grad is not None)
        assert total > 0, f"no gradient reached group {group}"
