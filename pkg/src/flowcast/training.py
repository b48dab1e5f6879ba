"""Optimization loop: Adam on the variational objective with scheduled
sampling, NDJSON logging, validation-driven checkpointing, and resume."""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .losses import elbo_baseline, elbo_slamp
from .metrics import psnr
from .model.checkpoint import save_checkpoint
from .rollout import generate, scheduled_sampling_prob, train_rollout


@dataclass
class TrainConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 32
    kl_beta: float = 1e-4
    epochs: int = 300
    updates_per_epoch: int = 1000
    grad_clip: float = 10.0
    scheduled_sampling: bool = True
    ss_k: float = 3000.0
    recon_weights: tuple = (1.0, 1.0, 1.0)
    seed: int = 0

    def validate(self):
        if self.lr < 0:
            raise ValueError(f"lr must be nonnegative, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"Adam decay rates must be in [0, 1), got "
                             f"{self.beta1}, {self.beta2}")
        if self.batch_size < 1 or self.epochs < 1 or self.updates_per_epoch < 1:
            raise ValueError("batch_size, epochs, updates_per_epoch must be positive")
        if self.kl_beta < 0:
            raise ValueError(f"kl_beta must be nonnegative, got {self.kl_beta}")
        if self.ss_k <= 0:
            raise ValueError(f"ss_k must be positive, got {self.ss_k}")
        if len(self.recon_weights) != 3:
            raise ValueError("recon_weights needs (combined, appearance, motion)")


class NonFiniteLossError(RuntimeError):
    """Training hit a NaN/Inf objective; carries a diagnostic snapshot."""

    def __init__(self, snapshot):
        super().__init__(
            f"non-finite loss at step {snapshot.get('step')}: "
            f"total={snapshot.get('total')}"
        )
        self.snapshot = snapshot


@dataclass
class TrainResult:
    records: list = field(default_factory=list)
    best_val_psnr: float = float("-inf")
    best_step: int = -1
    best_path: str = None
    last_path: str = None
    global_step: int = 0
    stopped_early: bool = False


def compute_elbo(model, out, targets, kl_beta, recon_weights):
    """Dispatch the objective for the model's variant on rollout outputs."""
    variant = model.config.variant
    if variant == "slamp":
        return elbo_slamp(out.combined, out.appearance, out.motion, targets,
                          out.posterior_pixel, out.prior_pixel,
                          out.posterior_flow, out.prior_flow,
                          kl_beta, recon_weights)
    motion = out.motion if variant == "baseline" else None
    return elbo_baseline(out.combined, out.appearance, motion, targets,
                         out.posterior_pixel, out.prior_pixel,
                         kl_beta, recon_weights)


def validation_psnr(model, clips, rollout_config, generator):
    """Mean fused-prediction PSNR over clips and predicted frames."""
    arr = np.stack([np.asarray(c, dtype=np.float32) for c in clips])
    video = torch.from_numpy(arr)
    t0, t1 = rollout_config.t_cond, rollout_config.t_cond + rollout_config.t_pred
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            frames, _ = generate(model, video, rollout_config, generator)
    finally:
        if was_training:
            model.train()
    pred = frames.numpy()
    gt = arr[:, t0:t1]
    vals = [psnr(pred[i, t], gt[i, t])
            for i in range(pred.shape[0]) for t in range(pred.shape[1])]
    return float(np.mean(vals))


def train_loop(model, train_stream, val_clips, rollout_config, config,
               out_dir=None, resume_optimizer=None, resume_step=0,
               epoch_callback=None):
    """Run Adam updates on the ELBO; returns a TrainResult.

    train_stream: re-iterable yielding (B, T, C, H, W) float32 batches.
    val_clips: indexable clips for the per-epoch validation PSNR; pass an
    empty list to skip validation (last checkpoint still written).
    epoch_callback(info) may return True to stop early; info carries epoch,
    step, val_psnr and the model.
    """
    config.validate()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr,
                                 betas=(config.beta1, config.beta2))
    if resume_optimizer is not None:
        optimizer.load_state_dict(resume_optimizer)

    L = rollout_config.length
    noise = torch.Generator().manual_seed(config.seed)
    ss_rng = np.random.default_rng((config.seed, 17))

    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "train_log.ndjson",
                      "a" if resume_step else "w", encoding="utf-8")

    result = TrainResult(global_step=resume_step)
    start_epoch = resume_step // config.updates_per_epoch
    started = time.monotonic()
    model.train()

    def batches():
        while True:
            for batch in train_stream:
                yield batch

    batch_source = batches()
    try:
        for epoch in range(start_epoch, config.epochs):
            for _ in range(config.updates_per_epoch):
                batch = torch.from_numpy(next(batch_source))
                eps = scheduled_sampling_prob(result.global_step, config.ss_k)
                flags = None
                if config.scheduled_sampling:
                    flags = ss_rng.random((batch.shape[0], L)) > eps

                out = train_rollout(model, batch, rollout_config, noise, flags)
                targets = [batch[:, t] for t in out.target_indices]
                loss = compute_elbo(model, out, targets, config.kl_beta,
                                    config.recon_weights)

                record = loss.to_dict()
                record.update(step=result.global_step, epoch=epoch,
                              epsilon=eps if config.scheduled_sampling else 1.0,
                              wall_time=time.monotonic() - started)
                if not np.isfinite(record["total"]):
                    raise NonFiniteLossError(record)

                optimizer.zero_grad()
                loss.total.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                optimizer.step()
                result.global_step += 1
                result.records.append(record)
                if log_fh is not None:
                    log_fh.write(json.dumps(record) + "\n")

            if log_fh is not None:
                log_fh.flush()

            val_psnr = None
            if len(val_clips) > 0:
                gen = torch.Generator().manual_seed(config.seed * 100003 + epoch)
                val_psnr = validation_psnr(model, val_clips, rollout_config, gen)
                if val_psnr > result.best_val_psnr:
                    result.best_val_psnr = val_psnr
                    result.best_step = result.global_step
                    if out_dir is not None:
                        result.best_path = str(out_dir / "best.ckpt")
                        save_checkpoint(result.best_path, model, optimizer,
                                        result.global_step,
                                        extra={"val_psnr": val_psnr})
            if out_dir is not None:
                result.last_path = str(out_dir / "last.ckpt")
                save_checkpoint(result.last_path, model, optimizer,
                                result.global_step,
                                extra={"val_psnr": val_psnr})

            if epoch_callback is not None:
                info = {"epoch": epoch, "step": result.global_step,
                        "val_psnr": val_psnr, "model": model}
                if epoch_callback(info):
                    result.stopped_early = True
                    break
    finally:
        if log_fh is not None:
            log_fh.close()

    return result
