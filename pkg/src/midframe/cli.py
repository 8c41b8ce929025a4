"""Command-line surface: train, interpolate, eval, flops, gradcheck, synth, extract.

Every command is reproducible from (command line + config file + seed).
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data as dataio
from . import report
from .checkpoint import load_checkpoint, load_model, require_matching_arch, save_model
from .engine import Tensor, no_grad
from .errors import DivergenceError
from .gradsuite import run_gradient_suite
from .losses import FeatureExtractor, LossConfig
from .metrics import ArchitectureSpec, count_flops, frame_average, psnr
from .training import TrainConfig, train


def parse_config_file(path):
    """Flat ``key = value`` text; '#' starts a comment."""
    mapping = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("bad config line: %r" % raw)
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


_CONFIG_KEYS = {
    "arch": str,
    "levels": int,
    "width": int,
    "depth": int,
    "perceptual_weight": float,
    "perceptual_seed": int,
    "finest_scale_weight": float,
    "coarse_scale_weight": float,
    "adversarial_weight": float,
    "gan_mode": str,
    "learning_rate": float,
    "batch_size": int,
    "crop": int,
    "patience": int,
    "max_epochs": int,
    "max_steps": int,
    "seed": int,
    "dtype": str,
}


def build_train_config(mapping):
    values = {}
    for key, raw in mapping.items():
        if key not in _CONFIG_KEYS:
            raise ValueError("unknown config key %r" % key)
        values[key] = _CONFIG_KEYS[key](raw)
    arch = ArchitectureSpec(
        kind=values.get("arch", "ms"),
        levels=values.get("levels", 3),
        width=values.get("width", 32),
        depth=values.get("depth", 6),
    )
    dtype = values.get("dtype", "float32")
    extractor = None
    if values.get("perceptual_weight", 0.001) > 0:
        extractor = FeatureExtractor(seed=values.get("perceptual_seed", 0), dtype=np.dtype(dtype))
    loss = LossConfig(
        perceptual_weight=values.get("perceptual_weight", 0.001),
        finest_scale_weight=values.get("finest_scale_weight", 1.0),
        coarse_scale_weight=values.get("coarse_scale_weight", 0.5),
        adversarial_weight=values.get("adversarial_weight", 0.0001),
        gan_mode=values.get("gan_mode", "off"),
        feature_extractor=extractor,
    )
    return TrainConfig(
        arch=arch,
        loss=loss,
        learning_rate=values.get("learning_rate", 0.0001),
        batch_size=values.get("batch_size", 8),
        crop=values.get("crop", 128),
        patience=values.get("patience", 10),
        max_epochs=values.get("max_epochs", 100),
        max_steps=values.get("max_steps"),
        seed=values.get("seed", 0),
        dtype=dtype,
    )


def _train_meta(result, config):
    return {
        "best_psnr": result.best_psnr,
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "steps_run": result.total_steps,
        "stopped_early": result.stopped_early,
        "seed": config.seed,
        "train_state": {
            "epoch": len(result.history),
            "step": result.total_steps,
            "best_psnr": result.best_psnr,
            "best_epoch": result.best_epoch,
            "history": result.history,
        },
    }


def cmd_train(args):
    mapping = parse_config_file(args.config) if args.config else {}
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.max_steps is not None:
        mapping["max_steps"] = str(args.max_steps)
    config = build_train_config(mapping)

    train_set = dataio.load_dataset(args.data)
    val_set = dataio.load_dataset(args.val)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    resume = None
    if args.resume:
        arch, groups, meta = load_checkpoint(args.resume)
        require_matching_arch(config.arch, arch)
        if config.loss.gan_mode != "off":
            raise RuntimeError("--resume is only supported with gan_mode=off")
        state = meta["train_state"]
        resume = {
            "epoch": state["epoch"],
            "step": state["step"],
            "best_psnr": state["best_psnr"],
            "best_epoch": state["best_epoch"],
            "history": state["history"],
            "params": groups["last_params"],
            "opt_g": groups["opt"],
            "best_params": groups["params"],
        }

    try:
        result = train(config, train_set, val_set, resume=resume)
    except DivergenceError as exc:
        dump_path = out_dir / "divergence_dump.npz"
        np.savez(dump_path, **{k: v for k, v in exc.dump.items() if isinstance(v, np.ndarray)})
        print("training aborted: %s (batch dumped to %s)" % (exc, dump_path), file=sys.stderr)
        return 1

    report.write_history(out_dir / "history.tsv", result.history)
    report.write_step_log(out_dir / "steps.tsv", result.steps)
    report.plot_history(out_dir / "history.png", result.history, result.steps)

    extra = {"last_params": result.last_params, "opt": result.opt_state}
    save_model(
        out_dir / "checkpoint.zip",
        result.model,
        discriminator=result.discriminator,
        meta=_train_meta(result, config),
        extra_groups=extra,
    )

    comp = count_flops(config.arch, 360, 640)
    (out_dir / "complexity.txt").write_text(comp.as_text() + "\n")
    report.write_complexity_tsv(out_dir / "complexity.tsv", comp)
    report.plot_complexity(out_dir / "complexity.png", comp)
    print("trained %d epochs (%d steps); best validation PSNR %.3f dB at epoch %d" % (
        len(result.history),
        result.total_steps,
        result.best_psnr,
        result.best_epoch,
    ))
    print("checkpoint: %s" % (out_dir / "checkpoint.zip"))
    return 0


def cmd_interpolate(args):
    model, groups, _ = load_model(args.checkpoint)
    a = dataio.read_frame(args.a)
    b = dataio.read_frame(args.b)
    with no_grad():
        out = model.interpolate(
            Tensor(a[None].astype(model.params.dtype)), Tensor(b[None].astype(model.params.dtype))
        )
    dataio.write_frame(out.display_frame()[0], args.out)
    if args.dump_flow:
        gamma = out.features.data[0]
        dataio.write_frame(report.features_to_image(gamma), args.dump_flow + ".png")
        dataio.write_flow(gamma[0:2], args.dump_flow + ".bin")
    if args.dump_scales:
        for j, frame in enumerate(out.scale_frames, start=1):
            dataio.write_frame(np.clip(frame.data[0], 0.0, 1.0), "%s_x%d.png" % (args.dump_scales, 2 ** j))
    print("wrote %s" % args.out)
    return 0


def cmd_eval(args):
    model, _, _ = load_model(args.checkpoint)
    dataset = dataio.load_dataset(args.data)
    rows = []
    with no_grad():
        for i, t in enumerate(dataset):
            out = model.interpolate(
                Tensor(t.first[None].astype(model.params.dtype)),
                Tensor(t.last[None].astype(model.params.dtype)),
            )
            rows.append(
                {
                    "index": i,
                    "source": t.source,
                    "psnr": psnr(out.display_frame()[0], t.middle),
                    "baseline_psnr": psnr(frame_average(t.first, t.last), t.middle),
                }
            )
    mean_model = float(np.mean([r["psnr"] for r in rows]))
    mean_baseline = float(np.mean([r["baseline_psnr"] for r in rows]))
    report_path = Path(args.report)
    report.write_eval_report(report_path, rows, mean_model, mean_baseline)
    report.plot_eval_report(report_path.with_suffix(".png"), rows)
    print("mean PSNR %.3f dB (frame-average baseline %.3f dB) over %d triplets" % (
        mean_model,
        mean_baseline,
        len(rows),
    ))
    return 0


def cmd_flops(args):
    spec = ArchitectureSpec(kind=args.arch)
    comp = count_flops(spec, args.height, args.width)
    print(comp.as_text())
    if args.report:
        prefix = Path(args.report)
        report.write_complexity_tsv(prefix.with_suffix(".tsv"), comp)
        report.plot_complexity(prefix.with_suffix(".png"), comp)
    return 0


def cmd_gradcheck(args):
    seeds = range(args.seed, args.seed + args.seeds)
    result = run_gradient_suite(seeds=seeds, tolerance=args.tolerance, progress=lambda r: print(r))
    for line in result.summary_lines()[-1:]:
        print(line)
    return 0 if result.passed else 1


def cmd_synth(args):
    spec = dataio.SyntheticSpec(
        height=args.height,
        width=args.width,
        count=args.count,
        max_shift=args.max_shift,
        textures=tuple(args.textures.split(",")),
        seed=args.seed,
    )
    triplets = dataio.generate_synthetic(spec)
    dataio.save_dataset(triplets, args.out)
    print("wrote %d synthetic triplets to %s" % (len(triplets), args.out))
    return 0


def cmd_extract(args):
    triplets, decisions = dataio.extract_triplets(args.frames, args.dedup_threshold, args.stride)
    out = dataio.save_dataset(triplets, args.out)
    lines = ["window\tstatus\tdetail"]
    lines += ["%d\t%s\t%s" % d for d in decisions]
    (Path(out) / "extraction.tsv").write_text("\n".join(lines) + "\n")
    kept = sum(1 for _, s, _ in decisions if s == "kept")
    print("kept %d / %d windows -> %s" % (kept, len(decisions), out))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="midframe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an interpolation model")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--val", required=True, help="validation dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--max-steps", type=int, dest="max_steps", help="override step cap")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("interpolate", help="synthesize the middle frame of a pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--a", required=True, help="first frame")
    p.add_argument("--b", required=True, help="second frame")
    p.add_argument("--out", required=True, help="output frame path")
    p.add_argument("--dump-flow", dest="dump_flow", help="prefix for flow visualization + raw flow")
    p.add_argument("--dump-scales", dest="dump_scales", help="prefix for per-scale syntheses")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("eval", help="PSNR report over a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="output report path (.tsv; figure written alongside)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flops", help="analytic complexity report")
    p.add_argument("--arch", choices=("baseline", "ms", "ms-refine"), default="ms")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=360)
    p.add_argument("--report", help="also write .tsv and .png reports with this prefix")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=10, help="number of seeds per op")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic translation dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--max-shift", type=float, default=4.0, dest="max_shift")
    p.add_argument("--textures", default="noise_blobs,ramps,checker")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract deduplicated triplets from a frame directory")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dedup-threshold", type=float, default=1e-4, dest="dedup_threshold")
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_extract)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KeyboardInterrupt,):
        return 1
    except Exception as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
