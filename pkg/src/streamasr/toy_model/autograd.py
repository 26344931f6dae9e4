"""torch.autograd wrappers around the numpy loss and attention kernels."""

from __future__ import annotations

import numpy as np
import torch

from .. import mocha_attention as mocha
from .. import seq_losses


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().astype(np.float64)


def _like(a: np.ndarray, ref: torch.Tensor) -> torch.Tensor:
    return torch.as_tensor(a, dtype=ref.dtype, device=ref.device)


class _LossFn(torch.autograd.Function):
    @staticmethod
    def forward(ctx, logits, kernel, labels):
        out = kernel(_np(logits), labels)
        ctx.save_for_backward(_like(out.grad, logits))
        return logits.new_tensor(out.loss)

    @staticmethod
    def backward(ctx, g):
        (grad,) = ctx.saved_tensors
        return g * grad, None, None


def rnnt_loss(logits: torch.Tensor, labels) -> torch.Tensor:
    return _LossFn.apply(logits, seq_losses.rnnt_loss, list(labels))


def ctc_loss(logits: torch.Tensor, labels) -> torch.Tensor:
    return _LossFn.apply(logits, seq_losses.ctc_loss, list(labels))


def smoothed_ce(logits: torch.Tensor, targets, smoothing: float = 0.1) -> torch.Tensor:
    return _LossFn.apply(logits, lambda x, y: seq_losses.smoothed_ce(x, y, smoothing), list(targets))


class MonotonicStep(torch.autograd.Function):
    @staticmethod
    def forward(ctx, alpha_prev, p):
        p_np = _np(p)
        alpha, q = mocha.monotonic_step(_np(alpha_prev), p_np)
        ctx.p, ctx.q = p_np, q
        return _like(alpha, p)

    @staticmethod
    def backward(ctx, g):
        g_prev, g_p = mocha.monotonic_step_backward(_np(g), ctx.p, ctx.q)
        return _like(g_prev, g), _like(g_p, g)


class ChunkWeights(torch.autograd.Function):
    @staticmethod
    def forward(ctx, alpha, u, w):
        a, uu = _np(alpha), _np(u)
        ctx.a, ctx.u, ctx.w = a, uu, w
        return _like(mocha.chunk_weights(a, uu, w).reshape(alpha.shape), alpha)

    @staticmethod
    def backward(ctx, g):
        g_a, g_u = mocha.chunk_weights_backward(_np(g), ctx.a, ctx.u, ctx.w)
        return _like(g_a.reshape(g.shape), g), _like(g_u.reshape(g.shape), g), None


def monotonic_step(alpha_prev, p):
    return MonotonicStep.apply(alpha_prev, p)


def chunk_weights(alpha, u, w: int):
    return ChunkWeights.apply(alpha, u, w)
