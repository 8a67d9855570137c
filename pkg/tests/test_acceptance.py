"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.  Criterion 6 trains the full model three times and
dominates the runtime (several minutes on CPU).
"""

import json
import time

import numpy as np
import pytest

from conftest import write_png_dataset
from lfranet import cli, ops
from lfranet.attention import FocalModulation, RegionAwareAttention
from lfranet.autodiff import Tensor
from lfranet.blocks import DownsampleBlock, MSConvBlock, UpsampleBlock
from lfranet.checkpoint import serialize
from lfranet.data import augment
from lfranet.evaluation import ConfusionCounts, binarize, confusion_counts, segmentation_metrics
from lfranet.model import ABLATION_PRESETS, ModelConfig, ablation_variant, build_model
from lfranet.selfcheck import END_TO_END_TOLERANCE, OP_TOLERANCE, gradient_check_suite
from lfranet.synthetic import make_dataset, make_vessel_sample
from lfranet.training import Adam, dice_loss


def report(num, name, ok, detail, t0):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num} ({name}): {detail} [{time.time() - t0:.1f}s]"
    print(line, flush=True)
    assert ok, line


def test_criterion_1_gradient_oracle():
    t0 = time.time()
    results = gradient_check_suite(seed=0)
    worst = max(results, key=lambda r: r.error / r.tolerance)
    ok = all(r.passed for r in results) and time.time() - t0 < 120
    report(1, "gradient oracle",
           ok, f"{len(results)} checks, worst {worst.name} err={worst.error:.2e} "
               f"(tol {OP_TOLERANCE:g} per-op, {END_TO_END_TOLERANCE:g} end-to-end)", t0)


def test_criterion_2_complexity_reproduction():
    t0 = time.time()
    net = build_model(ModelConfig(seed=0))
    params = net.param_count()
    flops = net.flops(512, 512)
    ckpt_bytes = len(serialize(net))
    ok = (155_000 <= params <= 185_000
          and 8.0e9 <= flops <= 13.0e9
          and 500_000 <= ckpt_bytes <= 1_000_000
          and time.time() - t0 < 10)
    report(2, "complexity reproduction", ok,
           f"params={params} (band [155k,185k]), flops={flops / 1e9:.2f}G (band [8,13]), "
           f"checkpoint={ckpt_bytes / 1e6:.2f}MB (band [0.5,1.0])", t0)


def test_criterion_3_ablation_structure():
    t0 = time.time()
    counts = {name: build_model(ablation_variant(name)).param_count()
              for name in ABLATION_PRESETS}
    base_order = counts["LU-NS"] < counts["MLU-NS"] <= counts["MLU"]
    attention = [n for n in ABLATION_PRESETS if n not in ("LU-NS", "MLU-NS", "MLU")]
    attention_order = all(counts["MLU"] < counts[n] for n in attention)
    ok = len(counts) == 10 and base_order and attention_order and time.time() - t0 < 30
    report(3, "ablation structure", ok,
           f"10 presets; LU-NS={counts['LU-NS']} < MLU-NS={counts['MLU-NS']} <= "
           f"MLU={counts['MLU']} < attention variants (min "
           f"{min(counts[n] for n in attention)})", t0)


def test_criterion_4_adjoint_and_shape_suites():
    t0 = time.time()
    rng = np.random.default_rng(0)
    worst_adjoint = 0.0
    for _ in range(20):
        n, cin, cout = (int(v) for v in rng.integers(1, 4, size=3))
        k = int(rng.choice([1, 3]))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        h = int(rng.integers(k + 2, k + 9))
        w = int(rng.integers(k + 2, k + 9))
        x = rng.standard_normal((n, cin, h, w))
        wgt = rng.standard_normal((cout, cin, k, k))
        out = ops.conv2d(Tensor(x), Tensor(wgt), stride=stride, padding=pad)
        y = rng.standard_normal(out.shape)
        opad = tuple((e + 2 * pad - k) % stride for e in (h, w))
        back = ops.conv_transpose2d(Tensor(y), Tensor(wgt), stride=stride, padding=pad,
                                    output_padding=opad)
        lhs = float((out.data * y).sum())
        rhs = float((x * back.data).sum())
        worst_adjoint = max(worst_adjoint, abs(lhs - rhs) / max(1.0, abs(lhs)))

    shape_cases = 0
    for _ in range(100):
        cin = int(rng.integers(1, 5))
        cout = int(rng.integers(1, 6))
        h = int(rng.integers(1, 5)) * 8
        w = int(rng.integers(1, 5)) * 8
        x32 = Tensor(rng.random((1, cin, h, w)).astype(np.float32))
        seed_rng = np.random.default_rng(shape_cases)
        assert MSConvBlock(cin, cout, seed_rng).forward(x32).shape == (1, cout, h, w)
        assert DownsampleBlock(cin, cout, seed_rng).forward(x32).shape == (1, cout, h // 2, w // 2)
        assert UpsampleBlock(cin, cout, seed_rng).forward(x32).shape == (1, cout, 2 * h, 2 * w)
        assert FocalModulation(cin, seed_rng).forward(x32).shape == x32.shape
        assert RegionAwareAttention(cin, seed_rng).forward(x32).shape == x32.shape
        shape_cases += 1
    ok = worst_adjoint <= 1e-10 and shape_cases == 100 and time.time() - t0 < 60
    report(4, "adjoint + shape suites", ok,
           f"adjoint worst rel err {worst_adjoint:.2e} (<=1e-10); "
           f"{shape_cases}x5 shape contracts", t0)


def test_criterion_5_metric_oracle():
    t0 = time.time()
    rng = np.random.default_rng(0)
    mismatches = 0
    worst_identity = 0.0
    for _ in range(1000):
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 9))
        pred = (rng.random((h, w)) > rng.random()).astype(np.float32)
        gt = (rng.random((h, w)) > rng.random()).astype(np.float32)
        tp = fp = fn = tn = 0
        for p, g in zip(pred.reshape(-1), gt.reshape(-1)):  # brute-force pixel loop
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
            else:
                tn += 1
        fast = confusion_counts(pred, gt)
        if (fast.tp, fast.fp, fast.fn, fast.tn) != (tp, fp, fn, tn):
            mismatches += 1
            continue
        m = segmentation_metrics(fast)
        oracle = segmentation_metrics(ConfusionCounts(tp, fp, fn, tn))
        if m != oracle:
            mismatches += 1
        if 2 * tp + fp + fn > 0:
            worst_identity = max(worst_identity, abs(m.jaccard - m.dice / (2.0 - m.dice)))
    ok = mismatches == 0 and worst_identity <= 1e-12 and time.time() - t0 < 30
    report(5, "metric oracle", ok,
           f"1000 masks, {mismatches} mismatches; J=D/(2-D) worst dev {worst_identity:.1e}", t0)


@pytest.mark.slow
def test_criterion_6_learning_smoke():
    t0 = time.time()
    details = []
    ok = True
    for seed in (1, 2, 3):
        sample = make_vessel_sample(size=128, seed=seed)
        net = build_model(ModelConfig(seed=seed))
        x = Tensor(sample.image[None])
        y = Tensor(sample.mask[None])
        opt = Adam(net.parameters(), lr=0.002)
        first_loss = None
        last_loss = None
        best_dice = 0.0
        for step in range(1, 501):
            pred = net.forward(x, train=True)
            loss = dice_loss(pred, y)
            net.zero_grad()
            loss.backward()
            opt.step()
            last_loss = loss.item()
            if first_loss is None:
                first_loss = last_loss
            if step % 10 == 0 or step == 1:
                counts = confusion_counts(binarize(pred.data[0, 0]), sample.mask[0])
                best_dice = max(best_dice, segmentation_metrics(counts).dice)
                if best_dice >= 0.98:  # already comfortably past the bar
                    pass
        seed_ok = best_dice >= 0.90 and last_loss < first_loss
        ok = ok and seed_ok
        details.append(f"seed{seed}: dice {best_dice:.3f}, loss {first_loss:.3f}->{last_loss:.3f}")
    elapsed_ok = time.time() - t0 < 900
    report(6, "learning smoke", ok and elapsed_ok, "; ".join(details), t0)


def test_criterion_7_attention_analytic_fixtures(rng):
    t0 = time.time()
    # constant-ones pathway: attention map is exactly 1, skip passes through
    raam = RegionAwareAttention(4, np.random.default_rng(0))
    raam.pre_conv.weight.data = np.zeros_like(raam.pre_conv.weight.data)
    raam.pre_conv.bias.data = np.ones_like(raam.pre_conv.bias.data)
    raam.bn.running_mean[...] = 0.0
    raam.bn.running_var[...] = 1.0 - raam.bn.eps
    att = raam.attention_map(Tensor(np.ones((1, 32, 16, 16), np.float32)))
    skip = Tensor(rng.random((1, 4, 16, 16), dtype=np.float32))
    out = raam.forward(skip, train=False)
    raam_ok = np.all(att.data == 1.0) and np.array_equal(out.data, skip.data)

    fmam = FocalModulation(4, np.random.default_rng(1))
    fmam.gate_proj.weight.data = np.zeros_like(fmam.gate_proj.weight.data)
    fmam.gate_proj.bias.data = np.zeros_like(fmam.gate_proj.bias.data)
    fmam.h.bias.data = np.zeros_like(fmam.h.bias.data)
    fout = fmam.forward(Tensor(rng.random((1, 4, 8, 8), dtype=np.float32)))
    fmam_ok = np.all(fout.data == 0.0)
    ok = raam_ok and fmam_ok and time.time() - t0 < 10
    report(7, "attention analytic fixtures", ok,
           f"Att_M==1 and F_out==skip bit-exact: {raam_ok}; zero-gate output==0: {fmam_ok}", t0)


@pytest.mark.slow
def test_criterion_8_cmd_train_determinism(tmp_path):
    t0 = time.time()
    root = tmp_path / "data"
    write_png_dataset(root, make_dataset(4, size=48, seed=0))
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps({"model_overrides": {"channel_plan": [2, 3, 4]}}))
    blobs = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        code = cli.main(["train", "--dataset-root", str(root), "--out", str(out),
                         "--config", str(cfg), "--seed", "13", "--epochs", "2",
                         "--batch-size", "2", "--image-size", "48"])
        assert code == 0
        manifest = (out / "manifest.txt").read_text()
        stable = [l for l in manifest.splitlines()
                  if not l.startswith("artifact config.json")]  # embeds the out path
        blobs.append(((out / "logs" / "train.csv").read_bytes(),
                      (out / "ckpt" / "best.ckpt").read_bytes(),
                      stable))
    logs_equal = blobs[0][0] == blobs[1][0]
    ckpts_equal = blobs[0][1] == blobs[1][1]
    manifests_equal = blobs[0][2] == blobs[1][2]
    ok = logs_equal and ckpts_equal and manifests_equal and time.time() - t0 < 300
    report(8, "training determinism", ok,
           f"logs identical: {logs_equal}, checkpoints identical: {ckpts_equal}, "
           f"stable manifest lines identical: {manifests_equal}", t0)


def test_criterion_9_augmentation_counts():
    t0 = time.time()
    samples = make_dataset(20, size=24, seed=0)
    out_a = augment(samples, 1080, seed=3)
    out_b = augment(samples, 1080, seed=3)
    same = all(a.id == b.id and np.array_equal(a.image, b.image) and
               np.array_equal(a.mask, b.mask) for a, b in zip(out_a, out_b))
    ok = len(out_a) == 1080 and same and time.time() - t0 < 60
    report(9, "augmentation counts", ok,
           f"20 -> {len(out_a)} samples, deterministic: {same}", t0)
