"""Denoising score-matching trainer.

The model learns the score of the diffused interference distribution
under the variance-preserving schedule beta(t) = beta_min +
(beta_max - beta_min) t, matching the sampler's forward process: with
alpha^2(t) = exp(-integral beta), a segment x0 is perturbed to
x_t = alpha x0 + CN(0, 2(1 - alpha^2) I), and the network regresses the
conditional score -(x_t - alpha x0) / (2(1 - alpha^2)) at t drawn
uniformly from [t_min, 1].  The loss is the plain unweighted mean-square
score error; t_min keeps the regression target finite (the conditional
score diverges as t -> 0) and sits below the sampler's smallest grid
time for its usual step counts.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, FormatError, NumericError
from .formats import read_cbin, write_dmsc
from .network import ScoreModel, export_layers


@dataclass
class TrainingLog:
    """Training history.

    `loss` is the raw per-iteration mean-square score error and `ratio`
    divides it by the zero-predictor loss E||target||^2 of the same
    batch.  Neither is a clean progress signal: both are dominated by
    each batch's smallest t draws, where the conditional score is mostly
    unexplainable noise.  `probe` tracks (iteration, loss) on one frozen
    batch with t spread over [0.15, 0.95], evaluated every log_every
    iterations — the number to watch.
    """

    loss: list
    ratio: list
    probe: list


@dataclass
class TrainingConfig:
    dataset: str
    out: str
    iterations: int = 20000
    batch_size: int = 32
    lr: float = 1e-3
    beta_min: float = 0.1
    beta_max: float = 20.0
    t_min: float = 0.01
    seed: int = 0
    # architecture
    width: int = 32
    blocks: int = 8
    kernel: int = 5
    emb_dim: int = 64
    # pipeline
    crop: int = 0               # 0 trains on full segments
    ema_decay: float = 0.999    # 0 disables the weight average
    checkpoint: str = ""        # default: <out>.ckpt
    checkpoint_every: int = 500
    log_every: int = 500
    quiet: bool = False

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 < self.beta_min < self.beta_max:
            raise ConfigError(
                f"need 0 < beta_min < beta_max, got {self.beta_min}, {self.beta_max}"
            )
        if not 0 < self.t_min < 1:
            raise ConfigError(f"t_min must be in (0, 1), got {self.t_min}")
        if self.crop < 0:
            raise ConfigError(f"crop must be >= 0, got {self.crop}")
        if not 0 <= self.ema_decay < 1:
            raise ConfigError(f"ema_decay must be in [0, 1), got {self.ema_decay}")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ConfigError("checkpoint_every and log_every must be >= 1")

    @property
    def checkpoint_path(self):
        return self.checkpoint or str(self.out) + ".ckpt"


def load_segments(path):
    """Read all .cbin segments under `path` into an (n, M) complex array."""
    files = sorted(Path(path).glob("*.cbin"))
    if not files:
        raise ConfigError(f"no .cbin segments found under {path}")
    segs = [read_cbin(f) for f in files]
    lengths = {s.size for s in segs}
    if len(lengths) != 1:
        raise ConfigError(f"segments differ in length: {sorted(lengths)}")
    return np.stack(segs)


def kernel_moments(t, beta_min, beta_max):
    """(alpha, v): signal gain and complex per-sample kernel variance."""
    t = np.asarray(t, dtype=np.float64)
    b = beta_min * t + 0.5 * (beta_max - beta_min) * t * t
    alpha2 = np.exp(-b)
    return np.sqrt(alpha2), 2.0 * (1.0 - alpha2)


def _save_checkpoint(path, model, ema_state, iteration):
    torch.save({
        "arch": {"width": model.width, "blocks": model.blocks,
                 "kernel": model.kernel, "emb_dim": model.emb_dim},
        "state": model.state_dict(),
        "ema": ema_state,
        "iteration": iteration,
    }, path)


def train(cfg, data=None):
    """Run the score-matching loop; writes cfg.out and returns (model, log).

    Exports the EMA weights when ema_decay > 0, the raw weights otherwise;
    the returned model carries the exported weights either way.  A
    non-finite loss aborts with the last finite-loss checkpoint left on
    disk at cfg.checkpoint_path.
    """
    if data is None:
        data = load_segments(cfg.dataset)
    data = np.asarray(data, dtype=np.complex128)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ConfigError(f"dataset must be (n, M) segments, got {data.shape}")
    m = data.shape[1]
    window = cfg.crop if 0 < cfg.crop < m else m
    if window < cfg.kernel:
        raise ConfigError(f"crop {window} is shorter than the kernel {cfg.kernel}")

    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed + 1)
    model = ScoreModel(cfg.width, cfg.blocks, cfg.kernel,
                       cfg.emb_dim).reset_parameters(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    # cosine decay to a tenth of the base rate; flat when iterations is tiny
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, lambda i: 0.55 + 0.45 * math.cos(math.pi * i / max(cfg.iterations, 1)))
    ema = None
    if cfg.ema_decay > 0:
        ema = {k: v.detach().clone() for k, v in model.state_dict().items()}

    ckpt = cfg.checkpoint_path
    _save_checkpoint(ckpt, model, ema, 0)

    # frozen probe batch on a fixed t grid; separate streams keep the
    # training trajectory independent of the probe
    probe_rng = np.random.default_rng(cfg.seed + 2)
    probe_gen = torch.Generator().manual_seed(cfg.seed + 3)
    p_idx = probe_rng.integers(0, data.shape[0], cfg.batch_size)
    if window < m:
        p_starts = probe_rng.integers(0, m - window + 1, cfg.batch_size)
        p_x0c = np.stack([data[j, s:s + window] for j, s in zip(p_idx, p_starts)])
    else:
        p_x0c = data[p_idx]
    p_x0 = torch.from_numpy(
        np.stack([p_x0c.real, p_x0c.imag], axis=1)).to(torch.float32)
    p_t = np.linspace(0.15, 0.95, cfg.batch_size)
    p_alpha, p_v = kernel_moments(p_t, cfg.beta_min, cfg.beta_max)
    p_a = torch.from_numpy(p_alpha).to(torch.float32)[:, None, None]
    p_vt = torch.from_numpy(p_v).to(torch.float32)[:, None, None]
    p_noise = torch.randn(p_x0.shape, generator=probe_gen) * torch.sqrt(p_vt / 2.0)
    p_xt = p_a * p_x0 + p_noise
    p_target = -p_noise / p_vt

    def probe_loss():
        with torch.no_grad():
            return float(torch.mean((model(p_xt, p_t) - p_target) ** 2))

    log = TrainingLog(loss=[], ratio=[], probe=[(0, probe_loss())])
    window_sum, window_n = 0.0, 0
    for i in range(cfg.iterations):
        idx = rng.integers(0, data.shape[0], cfg.batch_size)
        if window < m:
            starts = rng.integers(0, m - window + 1, cfg.batch_size)
            x0c = np.stack([data[j, s:s + window] for j, s in zip(idx, starts)])
        else:
            x0c = data[idx]
        x0 = torch.from_numpy(
            np.stack([x0c.real, x0c.imag], axis=1)).to(torch.float32)

        t = rng.uniform(cfg.t_min, 1.0, cfg.batch_size)
        alpha, v = kernel_moments(t, cfg.beta_min, cfg.beta_max)
        a_t = torch.from_numpy(alpha).to(torch.float32)[:, None, None]
        v_t = torch.from_numpy(v).to(torch.float32)[:, None, None]
        noise = torch.randn(x0.shape, generator=gen) * torch.sqrt(v_t / 2.0)
        x_t = a_t * x0 + noise
        target = -noise / v_t

        pred = model(x_t, t)
        loss = torch.mean((pred - target) ** 2)
        if not torch.isfinite(loss):
            raise NumericError(
                f"non-finite loss at iteration {i}; "
                f"last-good checkpoint kept at {ckpt}"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        if ema is not None:
            with torch.no_grad():
                for k, p in model.state_dict().items():
                    ema[k].mul_(cfg.ema_decay).add_(p, alpha=1 - cfg.ema_decay)

        loss_val = float(loss.detach())
        log.loss.append(loss_val)
        log.ratio.append(loss_val / float(np.mean(1.0 / (2.0 * v))))
        window_sum += loss_val
        window_n += 1
        done = i + 1
        if done % cfg.log_every == 0:
            log.probe.append((done, probe_loss()))
            if not cfg.quiet:
                print(f"iter {done}/{cfg.iterations}"
                      f"  loss {window_sum / window_n:.5f}"
                      f"  probe {log.probe[-1][1]:.5f}")
            window_sum, window_n = 0.0, 0
        if done % cfg.checkpoint_every == 0:
            _save_checkpoint(ckpt, model, ema, done)

    if cfg.iterations % cfg.log_every != 0:
        log.probe.append((cfg.iterations, probe_loss()))
    _save_checkpoint(ckpt, model, ema, cfg.iterations)
    if ema is not None:
        model.load_state_dict(ema)
    write_dmsc(cfg.out, export_layers(model))
    return model, log


def export_checkpoint(ckpt_path, out_path):
    """Convert a training checkpoint to .dmsc (EMA weights when present)."""
    try:
        saved = torch.load(ckpt_path, map_location="cpu")
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"{ckpt_path}: not a readable checkpoint ({exc})") from exc
    try:
        arch, state = saved["arch"], saved["state"]
        ema = saved.get("ema")
    except (TypeError, KeyError) as exc:
        raise FormatError(f"{ckpt_path}: missing checkpoint fields") from exc
    model = ScoreModel(**arch)
    model.load_state_dict(ema if ema is not None else state)
    write_dmsc(out_path, export_layers(model))
