"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one ``ACCEPTANCE <name>: PASS/FAIL`` line (run with ``-s``
to see them live).  The toy-training fixtures are module-scoped because two
full 2000-step runs back the three training criteria.
"""

import time

import numpy as np
import pytest

from midframe.data import SyntheticSpec, generate_synthetic
from midframe.engine import Tensor, neg, no_grad
from midframe.gradsuite import run_gradient_suite
from midframe.losses import LossConfig
from midframe.metrics import ArchitectureSpec, count_flops, count_params, frame_average, psnr
from midframe.synthesis import Interpolator, split_features, synthesize, warp
from midframe.training import TrainConfig, train

from test_synthesis import shift_oracle

TOY_TEXTURES = ("noise_blobs", "checker")
TOY_SIZE = 64
TOY_MAX_SHIFT = 4.0
TOY_STEPS = 2000
TOY_BATCH = 8


def criterion(name, ok, detail=""):
    print("ACCEPTANCE %s: %s  %s" % (name, "PASS" if ok else "FAIL", detail))
    assert ok, "%s: %s" % (name, detail)


# ----------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def toy_data():
    train_set = generate_synthetic(
        SyntheticSpec(height=TOY_SIZE, width=TOY_SIZE, count=500, max_shift=TOY_MAX_SHIFT, seed=11, textures=TOY_TEXTURES)
    )
    val_set = generate_synthetic(
        SyntheticSpec(height=TOY_SIZE, width=TOY_SIZE, count=50, max_shift=TOY_MAX_SHIFT, seed=12, textures=TOY_TEXTURES)
    )
    baseline = float(np.mean([psnr(frame_average(t.first, t.last), t.middle) for t in val_set]))
    return train_set, val_set, baseline


def toy_config(kind, **kw):
    defaults = dict(
        arch=ArchitectureSpec(kind),
        loss=LossConfig(perceptual_weight=0.0, gan_mode="off"),
        learning_rate=1e-3,
        batch_size=TOY_BATCH,
        crop=TOY_SIZE,
        patience=10,
        max_epochs=64,
        max_steps=TOY_STEPS,
        seed=5,
        dtype="float32",
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


@pytest.fixture(scope="module")
def ms_result(toy_data):
    train_set, val_set, _ = toy_data
    return train(toy_config("ms"), train_set, val_set)


@pytest.fixture(scope="module")
def msrefine_result(toy_data):
    train_set, val_set, _ = toy_data
    return train(toy_config("ms-refine"), train_set, val_set)


# ------------------------------------------------- complexity reproduction


def test_flops_reproduction():
    targets = {"ms": 6.1e9, "ms-refine": 25e9, "baseline": 57e9}
    details = []
    ok = True
    for kind, target in targets.items():
        got = count_flops(ArchitectureSpec(kind), 360, 640).total_flops
        rel = abs(got - target) / target
        ok = ok and rel < 0.02
        details.append("%s=%.4gG (%.2f%% off %s)" % (kind, got / 1e9, 100 * rel, "%.3gG" % (target / 1e9)))
    criterion("complexity/flops-within-2%", ok, "; ".join(details))


def test_param_reproduction():
    expected = {"ms": 120585, "ms-refine": 161068, "baseline": 122851}
    got = {kind: count_params(ArchitectureSpec(kind)) for kind in expected}
    exact = got == expected
    cross = all(
        Interpolator(ArchitectureSpec(kind)).params.count() == expected[kind] for kind in ("ms", "ms-refine")
    )
    criterion(
        "complexity/param-counts-exact",
        exact and cross,
        "counts=%s, instantiated tensors agree=%s" % (got, cross),
    )


def test_flops_ratios():
    f = {k: count_flops(ArchitectureSpec(k), 360, 640).total_flops for k in ("ms", "ms-refine", "baseline")}
    r1 = f["baseline"] / f["ms"]
    r2 = f["ms-refine"] / f["ms"]
    criterion(
        "complexity/ratios",
        9.0 <= r1 <= 9.5 and 4.0 <= r2 <= 4.2,
        "baseline/ms=%.3f, refine/ms=%.3f" % (r1, r2),
    )


# ------------------------------------------------- numerical correctness


def test_gradient_suite_ten_seeds():
    t0 = time.time()
    result = run_gradient_suite(seeds=range(10), epsilon=1e-4, tolerance=1e-4)
    elapsed = time.time() - t0
    criterion(
        "numerics/finite-difference-suite",
        result.passed and elapsed < 300.0,
        "%d checks, worst rel err %.2e, %.0fs" % (len(result.reports), result.max_rel_error, elapsed),
    )


def test_warp_oracle_equivalence(rng):
    ok = True
    details = []
    # integer-shift flows reproduce brute-force shifts exactly on the interior
    for dx, dy in ((1, 0), (-2, 1), (0, 2)):
        img = rng.random((1, 3, 12, 14))
        h, w = img.shape[2:]
        flow = np.zeros((1, 2, h, w))
        flow[:, 0] = dx / w
        flow[:, 1] = dy / h
        # warp samples at +flow: content shifts by -flow
        out = warp(Tensor(img), Tensor(flow)).data[0]
        expected = shift_oracle(img[0], -dx, -dy)
        m = 3
        interior = (slice(None), slice(m, h - m), slice(m, w - m))
        exact = np.array_equal(out[interior], expected[interior])
        ok = ok and exact
        details.append("shift(%d,%d)=%s" % (dx, dy, "exact" if exact else "MISMATCH"))
    # linear-motion midpoint: 2 px triplet, 1 px features, weight 0.5
    base = rng.random((3, 12, 16))
    w = base.shape[2]
    i1 = shift_oracle(base, 2.0, 0.0)
    gamma = np.zeros((1, 3, 12, 16))
    gamma[:, 0] = 1.0 / w
    out = synthesize(Tensor(base[None]), Tensor(i1[None]), Tensor(gamma)).data[0]
    expected = shift_oracle(base, 1.0, 0.0)
    interior = (slice(None), slice(3, -3), slice(3, w - 3))
    mid_err = float(np.max(np.abs(out[interior] - expected[interior])))
    mid_ok = mid_err < 1e-12
    ok = ok and mid_ok
    details.append("midpoint max err %.1e" % mid_err)
    criterion("numerics/warp-oracle-equivalence", ok, "; ".join(details))


def test_convex_bound_and_feature_range_1000_passes():
    rng = np.random.default_rng(77)
    model = None
    bound_ok = True
    range_ok = True
    for i in range(1000):
        if i % 25 == 0:
            model = Interpolator(ArchitectureSpec("ms", levels=2, width=6, depth=3)).initialize(int(rng.integers(2**31)))
            for block in [model.coarse] + model.residuals:
                block.biases[-1].data = rng.uniform(-0.4, 0.4, size=3)
        i0 = Tensor(rng.random((1, 3, 16, 16)))
        i1 = Tensor(rng.random((1, 3, 16, 16)))
        with no_grad():
            out = model.interpolate(i0, i1)
            for gamma in out.scale_features:
                if np.any(np.abs(gamma.data) > 1.0):
                    range_ok = False
            gamma = out.features
            flow, _ = split_features(gamma)
            a = warp(i0, neg(flow)).data
            b = warp(i1, flow).data
            frame = out.scale_frames[0].data
        lo = np.minimum(a, b) - 1e-9
        hi = np.maximum(a, b) + 1e-9
        if not (np.all(frame >= lo) and np.all(frame <= hi)):
            bound_ok = False
    criterion(
        "numerics/convex-bound-and-feature-range",
        bound_ok and range_ok,
        "1000 passes; convex bound=%s, features in [-1,1]=%s" % (bound_ok, range_ok),
    )


# --------------------------------------------------------- toy training


def test_toy_training_beats_baseline(toy_data, ms_result):
    _, _, baseline = toy_data
    margin = ms_result.best_psnr - baseline
    criterion(
        "training/ms-beats-frame-average",
        margin >= 3.0 and ms_result.total_steps <= TOY_STEPS,
        "val %.2f dB vs baseline %.2f dB (margin %+.2f, %d steps)"
        % (ms_result.best_psnr, baseline, margin, ms_result.total_steps),
    )


def test_toy_refinement_not_worse(ms_result, msrefine_result):
    delta = msrefine_result.best_psnr - ms_result.best_psnr
    criterion(
        "training/refinement-within-0.1dB",
        delta >= -0.1,
        "ms-refine %.2f dB vs ms %.2f dB (delta %+.3f)" % (msrefine_result.best_psnr, ms_result.best_psnr, delta),
    )


def test_toy_coarse_scales_beat_baseline(toy_data, ms_result):
    _, val_set, baseline = toy_data
    model = ms_result.model
    per = {2: [], 3: []}
    with no_grad():
        for start in range(0, len(val_set), TOY_BATCH):
            chunk = val_set[start : start + TOY_BATCH]
            i0 = np.stack([t.first for t in chunk]).astype(model.params.dtype)
            i1 = np.stack([t.last for t in chunk]).astype(model.params.dtype)
            out = model.interpolate(Tensor(i0), Tensor(i1))
            for j in (2, 3):
                clamped = np.clip(out.scale_frames[j - 1].data, 0.0, 1.0)
                for k, t in enumerate(chunk):
                    per[j].append(psnr(clamped[k], t.middle))
    means = {j: float(np.mean(v)) for j, v in per.items()}
    criterion(
        "training/coarse-scales-beat-baseline",
        all(means[j] > baseline for j in (2, 3)),
        "scale2 %.2f dB, scale3 %.2f dB vs baseline %.2f dB" % (means[2], means[3], baseline),
    )


# ------------------------------------------------------------- GAN smoke


def test_gan_stability_smoke(toy_data):
    train_set, val_set, _ = toy_data
    config = toy_config(
        "ms",
        loss=LossConfig(perceptual_weight=0.0, gan_mode="non_saturating", adversarial_weight=0.0001),
        crop=32,
        max_steps=200,
        max_epochs=8,
    )
    result = train(config, train_set, val_set)
    rows = result.steps
    finite = all(np.isfinite(r["total"]) and np.isfinite(r["gan_d"]) for r in rows)
    inside = all(
        0.0 < r["d_real_min"] and r["d_real_max"] < 1.0 and 0.0 < r["d_fake_min"] and r["d_fake_max"] < 1.0
        for r in rows
    )
    init_d = rows[0]["gan_d"]
    target = 2.0 * np.log(2.0)
    init_ok = abs(init_d - target) / target < 0.10
    criterion(
        "gan/stability-smoke",
        len(rows) == 200 and finite and inside and init_ok,
        "%d steps, finite=%s, outputs inside (0,1)=%s, initial d-loss %.4f vs 2ln2=%.4f"
        % (len(rows), finite, inside, init_d, target),
    )


# ------------------------------------------------------------ determinism


def test_cli_train_determinism(tmp_path):
    from midframe.cli import main
    from midframe.data import save_dataset

    spec = lambda count, seed: SyntheticSpec(height=16, width=16, count=count, max_shift=2.0, seed=seed, textures=TOY_TEXTURES)
    save_dataset(generate_synthetic(spec(8, 41)), tmp_path / "train")
    save_dataset(generate_synthetic(spec(4, 42)), tmp_path / "val")
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(
        "arch = ms\nlevels = 2\nwidth = 6\ndepth = 3\nperceptual_weight = 0\n"
        "learning_rate = 0.001\nbatch_size = 4\ncrop = 16\nmax_epochs = 2\nseed = 9\ndtype = float32\n"
    )
    args = ["train", "--config", str(cfg), "--data", str(tmp_path / "train"), "--val", str(tmp_path / "val")]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    same_hist = (tmp_path / "r1/history.tsv").read_bytes() == (tmp_path / "r2/history.tsv").read_bytes()
    same_steps = (tmp_path / "r1/steps.tsv").read_bytes() == (tmp_path / "r2/steps.tsv").read_bytes()
    criterion(
        "determinism/identical-history-files",
        same_hist and same_steps,
        "history identical=%s, step log identical=%s" % (same_hist, same_steps),
    )
