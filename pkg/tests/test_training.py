"""Dice loss, Adam, the fit loop, and checkpoint round-trips."""

import numpy as np
import pytest

from lfranet.autodiff import Parameter, Tensor
from lfranet.checkpoint import load_checkpoint, save_checkpoint, serialize
from lfranet.errors import (
    CheckpointVersionError,
    CorruptCheckpointError,
    ShapeMismatchError,
)
from lfranet.gradcheck import finite_diff_check
from lfranet.model import ModelConfig, build_model
from lfranet.synthetic import make_dataset
from lfranet.training import Adam, TrainConfig, dice_loss, fit

TINY = dict(channel_plan=(2, 3, 4), dropout_p=0.0)


def t64(a):
    return Tensor(np.asarray(a, np.float64))


class TestDiceLoss:
    def test_perfect_prediction_approaches_zero(self):
        mask = (np.arange(16).reshape(1, 1, 4, 4) % 3 == 0).astype(np.float64)
        loss = dice_loss(t64(mask), t64(mask), epsilon=1e-9)
        assert loss.item() < 1e-9

    def test_disjoint_supports_approach_one(self):
        pred = np.zeros((1, 1, 2, 2))
        pred[0, 0, 0, 0] = 1.0
        gt = np.zeros((1, 1, 2, 2))
        gt[0, 0, 1, 1] = 1.0
        loss = dice_loss(t64(pred), t64(gt), epsilon=1e-9)
        assert loss.item() > 1.0 - 1e-8

    def test_half_overlap_hand_case(self):
        pred = t64([[[[1.0, 1.0, 0.0, 0.0]]]])
        gt = t64([[[[1.0, 0.0, 1.0, 0.0]]]])
        loss = dice_loss(pred, gt, epsilon=1e-12)
        assert abs(loss.item() - 0.5) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            dice_loss(t64(np.zeros((1, 1, 2, 2))), t64(np.zeros((1, 1, 2, 3))))

    def test_range_property(self, rng):
        for _ in range(50):
            pred = Tensor(rng.random((1, 1, 5, 5)))
            gt = Tensor((rng.random((1, 1, 5, 5)) > 0.5).astype(np.float64))
            loss = dice_loss(pred, gt, epsilon=1.0).item()
            assert 0.0 < loss < 1.0

    def test_gradcheck(self, rng):
        gt = Tensor((rng.random((1, 1, 6, 6)) > 0.5).astype(np.float64))
        x = Tensor(rng.standard_normal((1, 1, 6, 6)))
        from lfranet import ops

        err = finite_diff_check(lambda v: dice_loss(ops.sigmoid(v), gt), x)
        assert err <= 1e-4

    def test_neutral_weight_matches_plain(self, rng):
        pred = Tensor(rng.random((1, 1, 4, 4)))
        gt = Tensor((rng.random((1, 1, 4, 4)) > 0.5).astype(np.float64))
        assert dice_loss(pred, gt).item() == dice_loss(pred, gt, fg_weight=1.0).item()
        assert dice_loss(pred, gt, fg_weight=2.0).item() != dice_loss(pred, gt).item()


class TestAdam:
    def test_first_step_is_signed_lr(self, rng):
        data = rng.standard_normal(32).astype(np.float32)
        p = Parameter(data.copy())
        grad = rng.standard_normal(32).astype(np.float32)
        grad[np.abs(grad) < 0.1] = 0.5  # keep |g| >> adam eps
        p.grad[...] = grad
        opt = Adam([p], lr=0.002)
        opt.step()
        update = p.data - data
        assert np.allclose(update, -0.002 * np.sign(grad), rtol=1e-3)

    def test_zero_grad_leaves_parameter(self):
        p = Parameter(np.ones(4, np.float32))
        opt = Adam([p], lr=0.1)
        opt.step()
        assert np.array_equal(p.data, np.ones(4, np.float32))

    def test_two_runs_identical(self, rng):
        updates = []
        for _ in range(2):
            p = Parameter(np.ones(8, np.float32))
            opt = Adam([p], lr=0.01)
            g_rng = np.random.default_rng(5)
            for _ in range(10):
                p.zero_grad()
                p.grad[...] = g_rng.standard_normal(8).astype(np.float32)
                opt.step()
            updates.append(p.data.copy())
        assert np.array_equal(updates[0], updates[1])

    def test_untrainable_params_skipped(self):
        p = Parameter(np.ones(4, np.float32), trainable=False)
        opt = Adam([p], lr=0.1)
        p.grad[...] = 1.0
        opt.step()
        assert np.array_equal(p.data, np.ones(4, np.float32))


class TestFit:
    def test_loss_decreases_on_single_sample(self):
        net = build_model(ModelConfig(**TINY, seed=0))
        samples = make_dataset(1, size=32, seed=0)
        cfg = TrainConfig(lr=0.002, batch_size=1, epochs=40, seed=0)
        log = fit(net, samples, [], cfg)
        assert log.records[-1].train_loss < log.records[0].train_loss

    def test_zero_epochs_no_change(self):
        net = build_model(ModelConfig(**TINY, seed=0))
        before = [p.data.copy() for p in net.parameters()]
        log = fit(net, make_dataset(1, size=16), [], TrainConfig(epochs=0, seed=0))
        assert log.records == []
        for p, b in zip(net.parameters(), before):
            assert np.array_equal(p.data, b)

    def test_empty_train_set_rejected(self):
        net = build_model(ModelConfig(**TINY, seed=0))
        with pytest.raises(ValueError, match="non-empty"):
            fit(net, [], [], TrainConfig(epochs=1))

    def test_fixed_seed_identical_loss_trajectory(self):
        logs = []
        for _ in range(2):
            net = build_model(ModelConfig(channel_plan=(2, 3, 4), seed=7, dropout_p=0.3))
            samples = make_dataset(3, size=16, seed=1)
            logs.append(fit(net, samples[:2], samples[2:], TrainConfig(epochs=3, seed=7, batch_size=2)))
        assert logs[0].to_csv() == logs[1].to_csv()

    def test_validation_samples_not_mutated(self):
        net = build_model(ModelConfig(**TINY, seed=0))
        samples = make_dataset(2, size=16, seed=2)
        val_before = (samples[1].image.copy(), samples[1].mask.copy())
        fit(net, samples[:1], samples[1:], TrainConfig(epochs=2, seed=0))
        assert np.array_equal(samples[1].image, val_before[0])
        assert np.array_equal(samples[1].mask, val_before[1])

    def test_invalid_train_config(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


class TestCheckpoint:
    def _net(self, seed=0):
        return build_model(ModelConfig(**TINY, seed=seed))

    def test_round_trip_bit_identical(self, tmp_path):
        net = self._net(seed=3)
        path = tmp_path / "model.ckpt"
        save_checkpoint(net, path)
        again = load_checkpoint(path)
        for (na, pa), (nb, pb) in zip(net.named_parameters(), again.named_parameters()):
            assert na == nb and np.array_equal(pa.data, pb.data)
        for (na, ba), (nb, bb) in zip(net.named_buffers(), again.named_buffers()):
            assert na == nb and np.array_equal(ba, bb)
        assert again.config == net.config

    def test_forward_identical_after_reload(self, tmp_path):
        net = self._net(seed=4)
        x = Tensor(np.random.default_rng(0).random((1, 3, 16, 16), dtype=np.float32))
        expected = net.forward(x).data
        save_checkpoint(net, tmp_path / "m.ckpt")
        again = load_checkpoint(tmp_path / "m.ckpt")
        assert np.array_equal(again.forward(x).data, expected)

    def test_truncated_blob_rejected(self, tmp_path):
        payload = serialize(self._net())
        path = tmp_path / "trunc.ckpt"
        path.write_bytes(payload[:-20])
        with pytest.raises(CorruptCheckpointError):
            load_checkpoint(path)

    def test_flipped_byte_rejected(self, tmp_path):
        payload = bytearray(serialize(self._net()))
        payload[-1] ^= 0xFF
        path = tmp_path / "bad.ckpt"
        path.write_bytes(bytes(payload))
        with pytest.raises(CorruptCheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_wrong_version_tag(self, tmp_path):
        payload = serialize(self._net()).replace(b"lfra-ckpt-v1", b"lfra-ckpt-v9", 1)
        path = tmp_path / "v9.ckpt"
        path.write_bytes(payload)
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(path)

    def test_best_checkpoint_written_by_fit(self, tmp_path):
        net = self._net(seed=5)
        samples = make_dataset(3, size=16, seed=3)
        ckpt = tmp_path / "best.ckpt"
        fit(net, samples[:2], samples[2:], TrainConfig(epochs=2, seed=0, checkpoint_path=str(ckpt)))
        assert ckpt.exists()
        load_checkpoint(ckpt)  # must parse cleanly
