"""Losses per decoder kind, the optimizer step with layer freezing, and a synthetic overfit set."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from ..errors import NonFiniteLoss
from . import autograd as ag
from .model import ToyModel
from .schedule import WarmupSchedule, active_layers, lr_at


@dataclass
class Utterance:
    utt_id: str
    feats: np.ndarray
    labels: list


@dataclass
class TrainConfig:
    lam: float = 0.8                 # weight of CE (attention) or RNN-T term vs encoder CTC
    smoothing: float = 0.1
    rnnt_ctc_mode: str = "joint"     # joint | sequential | none
    ctc_pretrain_epochs: float = 0.5  # sequential mode: CTC only before this epoch
    layerwise: bool = True
    lr_scale: float = 1.0
    schedule: WarmupSchedule = field(default_factory=WarmupSchedule)


def utterance_loss(model: ToyModel, utt: Utterance, tcfg: TrainConfig, n_active=None, epoch: float = 0.0):
    """Scalar training loss of one utterance for the model's decoder kind."""
    h = model.encode(utt.feats, n_active)
    ctc_logits = model.ctc_logits(h)
    kind = model.cfg.decoder.kind
    if kind == "rnnt":
        rnnt = ag.rnnt_loss(model.joint_lattice(h, utt.labels), utt.labels)
        mode = tcfg.rnnt_ctc_mode
        if mode == "none":
            return rnnt
        ctc = ag.ctc_loss(ctc_logits, utt.labels)
        if mode == "sequential":
            return ctc if epoch < tcfg.ctc_pretrain_epochs else rnnt
        return tcfg.lam * rnnt + (1.0 - tcfg.lam) * ctc
    logits, _ = model.attention_forward(h, utt.labels)
    ce = ag.smoothed_ce(logits, list(utt.labels) + [model.cfg.eos], tcfg.smoothing)
    ctc = ag.ctc_loss(ctc_logits, utt.labels)
    return tcfg.lam * ce + (1.0 - tcfg.lam) * ctc


def inactive_parameters(model: ToyModel, n_active: int):
    names = []
    for i in range(n_active, model.cfg.encoder.num_layers):
        names += model.encoder_layer_names(i)
    return names


def train_step(batch: Sequence[Utterance], model: ToyModel, optimizer: torch.optim.Optimizer, lr: float,
               tcfg: TrainConfig = TrainConfig(), n_active: int | None = None, epoch: float = 0.0) -> float:
    """One Adam update on the mean utterance loss; returns the loss before the update.

    Layers beyond ``n_active`` are left out of the graph, so their gradient
    is zero and Adam does not touch them.
    """
    n_active = model.cfg.encoder.num_layers if n_active is None else n_active
    frozen = set(inactive_parameters(model, n_active))
    optimizer.zero_grad(set_to_none=True)
    total = 0.0
    for utt in batch:
        loss = utterance_loss(model, utt, tcfg, n_active, epoch) / len(batch)
        if not torch.isfinite(loss):
            optimizer.zero_grad(set_to_none=True)
            raise NonFiniteLoss(utt.utt_id)
        loss.backward()
        total += float(loss.detach())
    for name, t in model.named_tensors():
        if name in frozen:
            t.grad = None
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()
    return total


def make_optimizer(model: ToyModel, lr: float = 1e-3):
    return torch.optim.Adam(model.parameters(), lr=lr)


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    layers: list = field(default_factory=list)
    losses: list = field(default_factory=list)


def train(model: ToyModel, data: Sequence[Utterance], steps: int, tcfg: TrainConfig = TrainConfig(),
          batch_size: int | None = None, lr_fn: Callable[[float], float] | None = None,
          steps_per_epoch: int | None = None, log_every: int = 0, seed: int = 0) -> TrainLog:
    """Train for ``steps`` updates.

    Epochs advance by batch_size / len(data) per step unless
    ``steps_per_epoch`` is given. With ``lr_fn`` unset the warm-up schedule
    (times ``tcfg.lr_scale``) drives the learning rate and, when
    ``tcfg.layerwise`` is on, the active encoder depth.
    """
    batch_size = batch_size or len(data)
    steps_per_epoch = steps_per_epoch or max(1, math.ceil(len(data) / batch_size))
    rng = np.random.default_rng(seed)
    opt = make_optimizer(model)
    log = TrainLog()
    model.train()
    order = rng.permutation(len(data))
    pos = 0
    for step in range(steps):
        epoch = step / steps_per_epoch
        if lr_fn is None:
            lr = tcfg.lr_scale * lr_at(epoch, tcfg.schedule)
        else:
            lr = lr_fn(epoch)
        n_active = active_layers(epoch, tcfg.schedule) if tcfg.layerwise else model.cfg.encoder.num_layers
        n_active = min(n_active, model.cfg.encoder.num_layers)
        if pos + batch_size > len(data):
            order, pos = rng.permutation(len(data)), 0
        batch = [data[i] for i in order[pos:pos + batch_size]]
        pos += batch_size
        loss = train_step(batch, model, opt, lr, tcfg, n_active, epoch)
        log.steps.append(step)
        log.epochs.append(epoch)
        log.lrs.append(lr)
        log.layers.append(n_active)
        log.losses.append(loss)
        if log_every and step % log_every == 0:
            print(f"step {step:5d}  epoch {epoch:6.3f}  layers {n_active}  lr {lr:.2e}  loss {loss:.4f}")
    model.eval()
    return log


def synthetic_utterances(n: int = 16, vocab_size: int = 6, seed: int = 0, min_len: int = 2, max_len: int = 4,
                         frames_per_token: tuple = (4, 6), feat_dim: int = 40, noise: float = 0.05):
    """Feature-level toy corpus: each token is a fixed random spectral prototype held for a few frames."""
    rng = np.random.default_rng(seed)
    protos = rng.uniform(0.2, 1.0, size=(vocab_size, feat_dim))
    silence = np.full(feat_dim, 0.05)
    out = []
    for k in range(n):
        labels = rng.integers(0, vocab_size, size=int(rng.integers(min_len, max_len + 1))).tolist()
        frames = [silence] * 2
        for y in labels:
            frames += [protos[y]] * int(rng.integers(frames_per_token[0], frames_per_token[1] + 1))
            frames += [silence]
        frames += [silence] * 2
        feats = np.array(frames) + noise * rng.standard_normal((len(frames), feat_dim))
        out.append(Utterance(f"syn{k:03d}", np.abs(feats), labels))
    return out
