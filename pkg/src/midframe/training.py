"""Optimization: Adam, the epoch loop, early stopping, GAN alternation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import Discriminator, DiscriminatorSpec, Parameters
from .data import make_batches
from .engine import Tensor, no_grad
from .errors import ContractError, DivergenceError
from .losses import LossConfig, gan_losses, generator_gan_loss, total_loss
from .metrics import ArchitectureSpec, psnr
from .synthesis import Interpolator


class Adam:
    """Bias-corrected adaptive-moment optimizer over a list of parameter tensors."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params.tensors() if isinstance(params, Parameters) else params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ContractError("adam step with unpopulated gradient")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

    def state_arrays(self, names):
        out = {"step": np.array([self.step_count], dtype=np.float64)}
        for name, m, v in zip(names, self.m, self.v):
            out["%s.m" % name] = m
            out["%s.v" % name] = v
        return out

    def load_state(self, names, arrays):
        self.step_count = int(arrays["step"][0])
        for i, name in enumerate(names):
            self.m[i] = np.asarray(arrays["%s.m" % name], dtype=self.m[i].dtype).copy()
            self.v[i] = np.asarray(arrays["%s.v" % name], dtype=self.v[i].dtype).copy()


class EarlyStopper:
    """Stops after ``patience`` epochs without strict improvement; remembers the best epoch."""

    def __init__(self, patience):
        if patience < 1:
            raise ContractError("patience must be >= 1")
        self.patience = patience
        self.best_value = -np.inf
        self.best_epoch = -1

    def update(self, epoch, value):
        """Record an epoch's metric; returns True when training should stop."""
        if value > self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            return False
        return epoch - self.best_epoch >= self.patience


@dataclass
class TrainConfig:
    arch: ArchitectureSpec = field(default_factory=lambda: ArchitectureSpec("ms"))
    loss: LossConfig = field(default_factory=LossConfig)
    learning_rate: float = 0.0001
    batch_size: int = 8  # desk-scale default; the reference full-scale value is 128
    crop: int = 128
    patience: int = 10
    max_epochs: int = 100
    max_steps: int | None = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dtype: str = "float32"  # training precision; gradient checking always runs float64

    def __post_init__(self):
        div = 2 ** self.arch.levels if self.arch.kind != "baseline" else 1
        if self.crop % div:
            raise ContractError("crop %d must be divisible by %d" % (self.crop, div))
        if self.loss.gan_mode != "off":
            red = DiscriminatorSpec().spatial_reduction()
            if self.crop % red:
                raise ContractError("GAN training needs crop divisible by %d, got %d" % (red, self.crop))
        if self.patience < 1:
            raise ContractError("patience must be >= 1")


@dataclass
class TrainResult:
    model: Interpolator
    discriminator: Discriminator | None
    history: list  # per-epoch dicts
    steps: list  # per-step loss breakdown dicts
    best_psnr: float
    best_epoch: int
    stopped_early: bool
    total_steps: int
    last_params: dict | None = None  # final-epoch weights (the model holds the best epoch's)
    opt_state: dict | None = None


def validate(model, val_set, batch_size=8):
    """Mean PSNR of the displayed (clamped) output over full validation frames."""
    scores = []
    with no_grad():
        for start in range(0, len(val_set), batch_size):
            chunk = val_set[start : start + batch_size]
            i0 = np.stack([t.first for t in chunk]).astype(model.params.dtype)
            i1 = np.stack([t.last for t in chunk]).astype(model.params.dtype)
            out = model.interpolate(Tensor(i0), Tensor(i1))
            pred = out.display_frame()
            for k, t in enumerate(chunk):
                scores.append(psnr(pred[k], t.middle))
    return float(np.mean(scores))


def _check_finite(value, epoch, step, batch):
    if np.isfinite(value):
        return
    dump = {
        "epoch": epoch,
        "step": step,
        "loss": value,
        "batch_first": batch.first,
        "batch_middle": batch.middle,
        "batch_last": batch.last,
    }
    raise DivergenceError("loss diverged to %r at epoch %d step %d" % (value, epoch, step), dump)


def train(config, train_set, val_set, step_callback=None, resume=None):
    """Run the full optimization protocol and return the best-validation model.

    Epochs iterate shuffled one-crop-per-triplet batches.  With a GAN mode
    active, each batch takes one discriminator step (real middle frames vs
    generator outputs detached from generator gradients) followed by one
    generator step.  Validation PSNR is tracked per epoch with early stopping;
    the returned model carries the best epoch's weights.
    """
    if not train_set or not val_set:
        raise ContractError("train and validation sets must be nonempty")
    dtype = np.dtype(config.dtype)
    model = Interpolator(config.arch, dtype=dtype)
    model.initialize(config.seed)

    gan_on = config.loss.gan_mode != "off"
    disc = None
    opt_d = None
    if gan_on:
        disc_params = Parameters(dtype=dtype)
        disc = Discriminator(DiscriminatorSpec(), disc_params)
        disc.initialize(np.random.default_rng(np.random.SeedSequence([config.seed, 0xD15C])))
        opt_d = Adam(disc_params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)

    opt_g = Adam(model.params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    stopper = EarlyStopper(config.patience)
    history = []
    step_rows = []
    best_weights = model.params.snapshot()
    best_buffers = {k: v.copy() for k, v in disc.buffers().items()} if disc else None

    start_epoch = 0
    global_step = 0
    if resume is not None:
        start_epoch = resume["epoch"]
        global_step = resume["step"]
        model.params.load_state(resume["params"])
        opt_g.load_state(model.params.names(), resume["opt_g"])
        stopper.best_value = resume["best_psnr"]
        stopper.best_epoch = resume["best_epoch"]
        best_weights = {k: v.copy() for k, v in resume["best_params"].items()}
        history = list(resume.get("history", []))

    stopped_early = False
    for epoch in range(start_epoch, config.max_epochs):
        if config.max_steps is not None and global_step >= config.max_steps:
            break
        epoch_losses = []
        for batch in make_batches(train_set, config.crop, config.batch_size, config.seed, epoch, dtype):
            if config.max_steps is not None and global_step >= config.max_steps:
                break
            i0 = Tensor(batch.first)
            i1 = Tensor(batch.last)
            target = Tensor(batch.middle)

            d_loss_val = 0.0
            d_range = None
            if gan_on:
                with no_grad():
                    fake = model.interpolate(i0, i1).frame
                opt_d.zero_grad()
                d_real = disc(target, training=True, update_stats=True)
                d_fake = disc(Tensor(fake.data), training=True, update_stats=True)
                d_loss, _ = gan_losses(d_real, d_fake, config.loss.gan_mode)
                d_loss.backward()
                opt_d.step()
                d_loss_val = float(d_loss.data)
                d_range = {
                    "d_real_min": float(d_real.data.min()),
                    "d_real_max": float(d_real.data.max()),
                    "d_fake_min": float(d_fake.data.min()),
                    "d_fake_max": float(d_fake.data.max()),
                }

            outputs = model.interpolate(i0, i1)
            gan_term = None
            if gan_on:
                d_on_fake = disc(outputs.frame, training=True, update_stats=False)
                gan_term = generator_gan_loss(d_on_fake, config.loss.gan_mode)
            loss, parts = total_loss(outputs, target, config.loss, gan_term)
            _check_finite(float(loss.data), epoch, global_step, batch)
            opt_g.zero_grad()
            loss.backward()
            opt_g.step()

            parts["gan_d"] = d_loss_val
            if d_range is not None:
                parts.update(d_range)
            parts["step"] = global_step
            parts["epoch"] = epoch
            step_rows.append(parts)
            epoch_losses.append(parts["total"])
            if step_callback is not None:
                step_callback(parts)
            global_step += 1

        if not epoch_losses:
            break
        val_psnr = validate(model, val_set, config.batch_size)
        row = {
            "epoch": epoch,
            "steps": global_step,
            "train_loss": float(np.mean(epoch_losses)),
            "val_psnr": val_psnr,
        }
        history.append(row)
        improved = val_psnr > stopper.best_value
        should_stop = stopper.update(epoch, val_psnr)
        if improved:
            best_weights = model.params.snapshot()
            if disc:
                best_buffers = {k: v.copy() for k, v in disc.buffers().items()}
        if should_stop:
            stopped_early = True
            break

    last_params = model.params.snapshot()
    opt_state = opt_g.state_arrays(model.params.names())
    model.params.load_state(best_weights)
    if disc and best_buffers:
        disc.load_buffers(best_buffers)
    return TrainResult(
        model=model,
        discriminator=disc,
        history=history,
        steps=step_rows,
        best_psnr=stopper.best_value,
        best_epoch=stopper.best_epoch,
        stopped_early=stopped_early,
        total_steps=global_step,
        last_params=last_params,
        opt_state=opt_state,
    )
