"""Command-line interface.

Subcommands: make-data, train, evaluate, sample, visualize-flow. All share
the same config format (YAML/JSON with preset inheritance). Human-readable
text goes to stderr; stdout carries only machine-readable artifact paths.

Exit codes: 0 success, 2 invalid config or arguments, 3 unwritable output
path, 4 non-finite training loss, 5 checkpoint/dataset/config mismatch.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import manifest as mf
from .data.glyphs import synthetic_digits
from .data.idx import parse_idx
from .data.moving_mnist import generate_moving_mnist
from .data.store import (
    BatchStream,
    ClipStore,
    ClipSubset,
    dataset_fingerprint,
    split_indices,
    write_dataset,
)
from .metrics import best_of_n_eval, diversity_average
from .model.checkpoint import CheckpointError, load_checkpoint
from .model.network import VideoPredictor, parameter_count
from .rollout import generate, train_rollout
from .runconfig import (
    ConfigError,
    build_generator_config,
    build_model_config,
    build_rollout_config,
    build_train_config,
    config_fingerprint,
    load_config,
)
from .training import NonFiniteLossError, compute_elbo, train_loop
from .viz import metric_curve_figure, rollout_grid, save_png, to_rgb

DATA_ROOT_ENV = "FLOWCAST_DATA_ROOT"

EXIT_CONFIG = 2
EXIT_UNWRITABLE = 3
EXIT_NONFINITE = 4
EXIT_MISMATCH = 5


def _say(msg):
    print(msg, file=sys.stderr)


def _emit(path):
    print(path, file=sys.stdout)


def _resolve_data(path):
    p = Path(path)
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _ensure_outdir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise CommandError(EXIT_UNWRITABLE, f"cannot write to {out}: {e}")
    return out


def _load_store(path):
    path = _resolve_data(path)
    try:
        return ClipStore(path)
    except FileNotFoundError as e:
        raise CommandError(EXIT_CONFIG, f"no dataset at {path}: {e}")
    except ValueError as e:
        raise CommandError(EXIT_CONFIG, f"broken dataset at {path}: {e}")


def _splits(store, cfg):
    ratios = cfg["data"].get("ratios", [0.8, 0.1, 0.1])
    try:
        return split_indices(len(store), ratios, store.header.get("seed", 0))
    except ValueError as e:
        raise CommandError(EXIT_CONFIG, f"bad split: {e}")


def _load_model(checkpoint_path):
    try:
        return load_checkpoint(_resolve_data(checkpoint_path))
    except CheckpointError as e:
        raise CommandError(EXIT_MISMATCH, str(e))


def _check_compat(model, store, rollout_cfg):
    h = store.header
    c = model.config
    if h["height"] != c.image_size or h["width"] != c.image_size:
        raise CommandError(
            EXIT_MISMATCH,
            f"dataset frames are {h['height']}x{h['width']}, model expects "
            f"{c.image_size}x{c.image_size}",
        )
    if h["channels"] != c.channels:
        raise CommandError(
            EXIT_MISMATCH,
            f"dataset has {h['channels']} channels, model expects {c.channels}",
        )
    if h["frames"] < rollout_cfg.length:
        raise CommandError(
            EXIT_MISMATCH,
            f"clips have {h['frames']} frames, rollout needs {rollout_cfg.length}",
        )


def cmd_make_data(args):
    cfg = load_config(args.config, preset=args.preset)
    gen_cfg = build_generator_config(cfg)
    out = _ensure_outdir(_resolve_data(args.out))
    started = mf.utc_now()

    d = cfg["data"]
    if d.get("idx_path"):
        idx_path = _resolve_data(d["idx_path"])
        try:
            digits = parse_idx(idx_path.read_bytes())
        except (OSError, ValueError) as e:
            raise CommandError(EXIT_CONFIG, f"cannot read digits from {idx_path}: {e}")
    else:
        digits = synthetic_digits(d.get("glyph_size", 12))

    count = int(d.get("clips", 320))
    if count < 1:
        raise CommandError(EXIT_CONFIG, f"data.clips must be positive, got {count}")
    _say(f"generating {count} clips of {gen_cfg.num_frames} frames "
         f"at {gen_cfg.canvas_size}x{gen_cfg.canvas_size}")
    clips = []
    for i in range(count):
        video = generate_moving_mnist(gen_cfg, digits, args.seed * 1_000_003 + i)
        clips.append(video.frames)
    write_dataset(out, clips, seed=args.seed, fmt=d.get("format", "f32"),
                  extra_meta={"generator": gen_cfg.to_dict(),
                              "config_hash": config_fingerprint(cfg)})

    fingerprint = dataset_fingerprint(out)
    manifest = mf.build_manifest(
        "make-data", cfg, args.seed,
        {"dataset": out, "fingerprint": fingerprint}, started)
    mf.write_manifest(out, manifest)
    _say(f"dataset fingerprint {fingerprint}")
    _emit(out)
    return 0


def cmd_train(args):
    cfg = load_config(args.config, preset=args.preset)
    if args.variant:
        cfg["model"]["variant"] = args.variant
    model_cfg = build_model_config(cfg)
    rollout_cfg = build_rollout_config(cfg, variant=model_cfg.variant)
    train_cfg = build_train_config(cfg, seed=args.seed)

    store = _load_store(args.data)
    train_ix, val_ix, _ = _splits(store, cfg)

    resume_opt, resume_step = None, 0
    if args.resume:
        model, resume_opt, resume_step, _ = _load_model(args.resume)
        if model.config.to_dict() != model_cfg.to_dict():
            raise CommandError(
                EXIT_MISMATCH,
                "checkpoint model config differs from the requested config; "
                "pass the same config/variant to resume",
            )
        _say(f"resuming from {args.resume} at step {resume_step}")
    else:
        torch.manual_seed(args.seed)
        model = VideoPredictor(model_cfg)
    _check_compat(model, store, rollout_cfg)

    if args.dry_run:
        batch = torch.from_numpy(
            np.stack([store[int(i)] for i in train_ix[: min(2, len(train_ix))]])
        )
        gen = torch.Generator().manual_seed(args.seed)
        out = train_rollout(model, batch, rollout_cfg, gen)
        targets = [batch[:, t] for t in out.target_indices]
        loss = compute_elbo(model, out, targets, train_cfg.kl_beta,
                            train_cfg.recon_weights)
        loss.total.backward()
        _say(f"dry run ok; loss {float(loss.total.detach()):.4f}")
        _emit(parameter_count(model))
        return 0

    out_dir = _ensure_outdir(args.out)
    started = mf.utc_now()
    train_stream = BatchStream(store, train_ix, train_cfg.batch_size,
                               shuffle=True, seed=args.seed, drop_last=True)
    val_clips = ClipSubset(store, val_ix)

    try:
        result = train_loop(model, train_stream, val_clips, rollout_cfg,
                            train_cfg, out_dir=out_dir,
                            resume_optimizer=resume_opt,
                            resume_step=resume_step)
    except NonFiniteLossError as e:
        diag = out_dir / "diagnostic.json"
        diag.write_text(json.dumps(e.snapshot, indent=1))
        _say(f"aborted: {e}")
        _emit(diag)
        return EXIT_NONFINITE

    artifacts = {"log": out_dir / "train_log.ndjson"}
    if result.best_path:
        artifacts["best_checkpoint"] = result.best_path
    if result.last_path:
        artifacts["last_checkpoint"] = result.last_path
    manifest = mf.build_manifest(
        "train", cfg, args.seed, artifacts, started,
        extra={"global_step": result.global_step,
               "best_val_psnr": result.best_val_psnr,
               "best_step": result.best_step})
    mf.write_manifest(out_dir, manifest)
    _say(f"trained {result.global_step} steps; best val PSNR "
         f"{result.best_val_psnr:.3f} dB at step {result.best_step}")
    _emit(result.best_path or result.last_path)
    return 0


def cmd_evaluate(args):
    cfg = load_config(args.config, preset=args.preset)
    model, _, step, _ = _load_model(args.checkpoint)
    n = args.n_samples if args.n_samples else cfg.get("eval", {}).get("n_samples", 100)
    t_pred = cfg.get("eval", {}).get("t_pred")
    rollout_cfg = build_rollout_config(cfg, variant=model.config.variant,
                                       t_pred=t_pred)
    store = _load_store(args.data)
    _check_compat(model, store, rollout_cfg)
    _, _, test_ix = _splits(store, cfg)
    test_clips = ClipSubset(store, test_ix)

    out_dir = _ensure_outdir(args.out)
    started = mf.utc_now()
    _say(f"evaluating {len(test_clips)} clips, best of {n} samples")
    report = best_of_n_eval(model, test_clips, rollout_cfg, n_samples=n,
                            seed=args.seed)
    report.extra.update(
        checkpoint=str(args.checkpoint),
        checkpoint_hash=mf.file_fingerprint(_resolve_data(args.checkpoint)),
        checkpoint_step=step,
        variant=model.config.variant,
    )
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=1))
    figure_path = metric_curve_figure(report.curves, out_dir / "curves.png",
                                      rollout_cfg.t_cond)

    manifest = mf.build_manifest(
        "evaluate", cfg, args.seed,
        {"report": report_path, "figure": figure_path}, started)
    mf.write_manifest(out_dir, manifest)
    for name, curve in report.curves.items():
        _say(f"{name}: {curve.mean:.4f} over {rollout_cfg.t_pred} frames")
    _emit(report_path)
    return 0


def _load_clip(store, index):
    if not 0 <= index < len(store):
        raise CommandError(EXIT_CONFIG,
                           f"clip {index} out of range [0, {len(store)})")
    return np.asarray(store[index], dtype=np.float32)


def cmd_sample(args):
    cfg = load_config(args.config, preset=args.preset)
    model, _, _, _ = _load_model(args.checkpoint)
    t_pred = cfg.get("eval", {}).get("t_pred")
    rollout_cfg = build_rollout_config(cfg, variant=model.config.variant,
                                       t_pred=t_pred)
    store = _load_store(args.data)
    _check_compat(model, store, rollout_cfg)
    clip = _load_clip(store, args.clip)

    out_dir = _ensure_outdir(args.out)
    started = mf.utc_now()
    video = torch.from_numpy(clip).unsqueeze(0)
    n = max(1, args.n_samples or 1)
    artifacts = {}
    futures = []
    with torch.no_grad():
        for si in range(n):
            gen = torch.Generator().manual_seed(args.seed * 7919 + si)
            frames, out = generate(model, video, rollout_cfg, gen)
            futures.append(frames[0].numpy())
            grid = rollout_grid(clip[: rollout_cfg.length], out, rollout_cfg.t_cond)
            path = save_png(out_dir / f"sample_{si:03d}.png", grid)
            artifacts[f"sample_{si:03d}"] = path
    if n > 1:
        mean, var = diversity_average(futures)
        strip = np.concatenate([to_rgb(f) for f in mean], axis=1)
        artifacts["diversity_mean"] = save_png(out_dir / "diversity_mean.png", strip)
        vmax = var.max()
        vstrip = np.concatenate(
            [to_rgb(f / vmax if vmax > 0 else f) for f in var], axis=1)
        artifacts["diversity_var"] = save_png(out_dir / "diversity_var.png", vstrip)

    manifest = mf.build_manifest("sample", cfg, args.seed, artifacts, started,
                                 extra={"clip": args.clip, "n_samples": n})
    mf.write_manifest(out_dir, manifest)
    _emit(out_dir)
    return 0


def cmd_visualize_flow(args):
    cfg = load_config(args.config, preset=args.preset)
    model, _, _, _ = _load_model(args.checkpoint)
    if not model.config.has_motion:
        raise CommandError(
            EXIT_MISMATCH,
            f"variant {model.config.variant!r} predicts no flow to visualize",
        )
    t_pred = cfg.get("eval", {}).get("t_pred")
    rollout_cfg = build_rollout_config(cfg, variant=model.config.variant,
                                       t_pred=t_pred)
    store = _load_store(args.data)
    _check_compat(model, store, rollout_cfg)
    clip = _load_clip(store, args.clip)

    out_dir = _ensure_outdir(args.out)
    started = mf.utc_now()
    video = torch.from_numpy(clip).unsqueeze(0)
    gen = torch.Generator().manual_seed(args.seed)
    with torch.no_grad():
        _, out = generate(model, video, rollout_cfg, gen)

    from .metrics import flow_to_color

    flows = [f[0].numpy() for f in out.flows]
    max_mag = max(float(np.abs(f).max()) for f in flows) or None
    artifacts = {}
    colored = []
    for t, flow in zip(out.target_indices, flows):
        img = flow_to_color(flow, max_mag)
        colored.append(img)
        artifacts[f"flow_{t:03d}"] = save_png(out_dir / f"flow_{t:03d}.png", img)
    artifacts["strip"] = save_png(out_dir / "flow_strip.png",
                                  np.concatenate(colored, axis=1))
    manifest = mf.build_manifest("visualize-flow", cfg, args.seed, artifacts,
                                 started, extra={"clip": args.clip})
    mf.write_manifest(out_dir, manifest)
    _emit(out_dir)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flowcast",
        description="Stochastic video prediction with appearance and motion "
                    "latents: data generation, training, evaluation, sampling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--config", default=None, help="YAML/JSON config file")
        p.add_argument("--preset", default=None,
                       help="named preset (smmnist-desk, smmnist-paper)")
        p.add_argument("--seed", type=int, default=0)
        if out_default is not None:
            p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("make-data", help="generate a bouncing-digit dataset")
    common(p, out_default="dataset")
    p.set_defaults(fn=cmd_make_data)

    p = sub.add_parser("train", help="train a model")
    common(p, out_default="run")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--variant", choices=["baseline", "slamp", "appearance"],
                   default=None, help="override the model variant")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--dry-run", action="store_true",
                   help="one forward/backward, print parameter count, exit")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="best-of-N metrics on the test split")
    common(p, out_default="eval")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-samples", type=int, default=None,
                   help="samples per clip (default from config)")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sample", help="render predicted futures for one clip")
    common(p, out_default="samples")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--clip", type=int, default=0)
    p.add_argument("--n-samples", type=int, default=1)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("visualize-flow", help="false-color predicted flow")
    common(p, out_default="flow")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--clip", type=int, default=0)
    p.set_defaults(fn=cmd_visualize_flow)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CommandError as e:
        _say(f"error: {e}")
        return e.code
    except ConfigError as e:
        _say(f"config error: {e}")
        return EXIT_CONFIG


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
