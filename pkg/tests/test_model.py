import numpy as np
import pytest
from numpy.testing import assert_allclose

from groupopt.blocks import ParamBlock, make_rng
from groupopt.model import (
    EMBEDDING,
    ModelConfig,
    backward,
    forward,
    init_params,
    load_checkpoint,
    logloss,
    predict_proba,
    save_checkpoint,
    sigmoid,
)
from groupopt.optimizers import GroupOptimizer, MomentSchedule, RegConfig


def numeric_gradient(blocks, name, ids, labels, config, h=1e-5):
    """Central finite differences of the mean logistic loss."""
    values = blocks[name].values
    grad = np.zeros_like(values)
    for i in range(values.size):
        orig = values[i]
        values[i] = orig + h
        hi = logloss(forward(blocks, ids, config).logits, labels)
        values[i] = orig - h
        lo = logloss(forward(blocks, ids, config).logits, labels)
        values[i] = orig
        grad[i] = (hi - lo) / (2 * h)
    return grad


def small_config(seed=0):
    return ModelConfig(num_features=12, embed_dim=3, num_fields=2,
                       hidden_dims=(5,), seed=seed)


def random_batch(rng, config, batch=6):
    ids = rng.integers(0, config.num_features, size=(batch, config.num_fields))
    labels = (rng.random(batch) < 0.5).astype(np.float64)
    return ids, labels


class TestForward:
    def test_zero_network_predicts_half(self):
        config = small_config()
        blocks = init_params(config)
        for block in blocks.values():
            block.values[:] = 0.0
        ids = np.zeros((4, config.num_fields), dtype=np.int64)
        assert_allclose(predict_proba(blocks, ids, config), np.full(4, 0.5))

    def test_hand_computed_logit(self):
        # one field, one-dim embedding, single linear layer, no hidden relu
        config = ModelConfig(num_features=2, embed_dim=1, num_fields=1,
                             hidden_dims=(), seed=0)
        blocks = {
            EMBEDDING: ParamBlock(EMBEDDING, np.array([0.5, -2.0]), group_size=1),
            "dense0_w": ParamBlock("dense0_w", np.array([3.0])),
            "dense0_b": ParamBlock("dense0_b", np.array([0.25])),
        }
        cache = forward(blocks, np.array([[0], [1]]), config)
        assert_allclose(cache.logits, [1.75, -5.75])

    def test_relu_masks_negative_preactivations(self):
        config = ModelConfig(num_features=2, embed_dim=1, num_fields=1,
                             hidden_dims=(1,), seed=0)
        blocks = {
            EMBEDDING: ParamBlock(EMBEDDING, np.array([1.0, -1.0]), group_size=1),
            "dense0_w": ParamBlock("dense0_w", np.array([2.0])),
            "dense0_b": ParamBlock("dense0_b", np.array([0.0])),
            "dense1_w": ParamBlock("dense1_w", np.array([5.0])),
            "dense1_b": ParamBlock("dense1_b", np.array([0.5])),
        }
        cache = forward(blocks, np.array([[0], [1]]), config)
        assert_allclose(cache.logits, [10.5, 0.5])

    def test_id_out_of_range(self):
        config = small_config()
        blocks = init_params(config)
        with pytest.raises(ValueError):
            forward(blocks, np.array([[0, config.num_features]]), config)


class TestLoss:
    def test_hand_value(self):
        # logit 0 -> log 2; label 1 with logit 0 -> log 2 as well
        val = logloss(np.array([0.0, 0.0]), np.array([0.0, 1.0]))
        assert_allclose(val, np.log(2.0), rtol=1e-12)

    def test_sigmoid_stability(self):
        out = sigmoid(np.array([-800.0, 0.0, 800.0]))
        assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-12)
        assert np.all(np.isfinite(out))


class TestBackward:
    def test_matches_central_differences(self):
        rng = make_rng(5)
        for seed in range(3):
            config = small_config(seed)
            blocks = init_params(config)
            # move off init scale so relus have both signs active
            for block in blocks.values():
                block.values += rng.normal(scale=0.05, size=block.values.size)
            ids, labels = random_batch(rng, config)
            cache = forward(blocks, ids, config)
            grads = backward(cache, labels, blocks)
            for name in blocks:
                numeric = numeric_gradient(blocks, name, ids, labels, config)
                scale = np.maximum(np.abs(numeric), 1e-3)
                rel = np.max(np.abs(grads[name] - numeric) / scale)
                assert rel <= 1e-6, f"{name}: rel err {rel}"

    def test_duplicate_ids_accumulate(self):
        config = ModelConfig(num_features=3, embed_dim=1, num_fields=2,
                             hidden_dims=(), seed=0)
        blocks = {
            EMBEDDING: ParamBlock(EMBEDDING, np.array([0.1, 0.2, 0.3]), group_size=1),
            "dense0_w": ParamBlock("dense0_w", np.array([1.0, 1.0])),
            "dense0_b": ParamBlock("dense0_b", np.array([0.0])),
        }
        ids = np.array([[1, 1]])
        labels = np.array([0.0])
        cache = forward(blocks, ids, config)
        grads = backward(cache, labels, blocks)
        emb = grads[EMBEDDING]
        p = sigmoid(cache.logits)[0]
        assert_allclose(emb, [0.0, 2.0 * p, 0.0], rtol=1e-12)

    def test_labels_shape_checked(self):
        config = small_config()
        blocks = init_params(config)
        ids, labels = random_batch(make_rng(0), config)
        cache = forward(blocks, ids, config)
        with pytest.raises(ValueError):
            backward(cache, labels[:-1], blocks)


class TestTrainingBehavior:
    def test_loss_decreases_over_an_epoch(self):
        rng = make_rng(13)
        config = ModelConfig(num_features=40, embed_dim=4, num_fields=3,
                             hidden_dims=(8,), seed=1)
        blocks = init_params(config)
        ids = rng.integers(0, config.num_features, size=(256, config.num_fields))
        weights = rng.normal(size=config.num_features)
        logits_true = weights[ids].sum(axis=1)
        labels = (rng.random(256) < sigmoid(logits_true)).astype(np.float64)

        opt = GroupOptimizer(MomentSchedule(kind="adam"), 0.01, RegConfig())
        before = logloss(forward(blocks, ids, config).logits, labels)
        for lo in range(0, 256, 32):
            batch = slice(lo, lo + 32)
            cache = forward(blocks, ids[batch], config)
            grads = backward(cache, labels[batch], blocks)
            for name, block in blocks.items():
                opt.step(block, grads[name])
        after = logloss(forward(blocks, ids, config).logits, labels)
        assert after < before

    def test_untouched_zeroed_rows_stay_exactly_zero(self):
        config = ModelConfig(num_features=10, embed_dim=2, num_fields=1,
                             hidden_dims=(4,), seed=3)
        blocks = init_params(config)
        table = blocks[EMBEDDING].values.reshape(config.num_features, config.embed_dim)
        table[5:] = 0.0
        reg = RegConfig(lambda21=1e-3, apply_to=frozenset({EMBEDDING}))
        opt = GroupOptimizer(MomentSchedule(kind="adam"), 0.01, reg)
        rng = make_rng(4)
        ids = rng.integers(0, 5, size=(64, 1))
        labels = (rng.random(64) < 0.5).astype(np.float64)
        for lo in range(0, 64, 16):
            batch = slice(lo, lo + 16)
            cache = forward(blocks, ids[batch], config)
            grads = backward(cache, labels[batch], blocks)
            for name, block in blocks.items():
                opt.step(block, grads[name])
        table = blocks[EMBEDDING].values.reshape(config.num_features, config.embed_dim)
        assert np.all(table[5:] == 0.0)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        config = small_config(seed=9)
        blocks = init_params(config)
        path = tmp_path / "model.json"
        save_checkpoint(path, config, blocks)
        loaded_config, loaded = load_checkpoint(path)
        assert loaded_config == config
        assert set(loaded) == set(blocks)
        for name in blocks:
            assert np.array_equal(loaded[name].values, blocks[name].values)
            assert loaded[name].group_size == blocks[name].group_size
