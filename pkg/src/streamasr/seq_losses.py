"""Log-domain CTC / RNN-T losses with analytic gradients, smoothed CE and the joint loss.

All losses take unnormalized logits (the blank symbol is the last index of
the vocabulary axis) and return a :class:`LossOutput` whose ``grad`` is the
derivative of the loss with respect to those logits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BadSmoothing, DimensionMismatch, InfeasibleLength, LabelOutOfVocab, LambdaOutOfRange

NEG_INF = -np.inf


@dataclass
class LossOutput:
    loss: float
    grad: object  # ndarray, or a tuple of ndarrays for joint_loss


@dataclass
class AlignmentGrid:
    """Forward/backward log-variables of a transducer lattice, shape (T, U+1)."""

    log_alpha: np.ndarray
    log_beta: np.ndarray

    @property
    def log_likelihood(self) -> float:
        return float(self.log_beta[0, 0])


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    z = x - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def logsumexp(x, axis=None):
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else float(out.reshape(()))


def _softmax_backward(grad_logp: np.ndarray, logp: np.ndarray) -> np.ndarray:
    # d/dz of f(log_softmax(z)) given df/dlogp
    return grad_logp - np.exp(logp) * grad_logp.sum(axis=-1, keepdims=True)


def _scan_logaddexp(x: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Solve a[0] = x[0], a[u] = logaddexp(x[u], a[u-1] + step[u-1]) in one pass.

    ``step`` has length len(x) - 1. Uses a cumulative offset so the scan
    reduces to ``np.logaddexp.accumulate``; steps must be finite.
    """
    c = np.concatenate(([0.0], np.cumsum(step)))
    return np.logaddexp.accumulate(x - c) + c


def _check_labels(labels, vocab_size):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= vocab_size):
        raise LabelOutOfVocab(f"labels must lie in [0, {vocab_size}), got {labels.tolist()}")
    return labels


def rnnt_alignment(logits: np.ndarray, labels: Sequence[int]):
    """Return (log_probs, AlignmentGrid) for a T x (U+1) x (V+1) joint lattice."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3:
        raise DimensionMismatch(f"RNN-T logits must be 3-D (T, U+1, V+1), got shape {logits.shape}")
    t_len, u1, v1 = logits.shape
    blank = v1 - 1
    labels = _check_labels(labels, blank)
    if u1 != labels.size + 1:
        raise DimensionMismatch(f"logits have U+1={u1} but {labels.size} labels were given")
    if t_len < 1:
        raise DimensionMismatch("need T >= 1")
    logp = log_softmax(logits)
    blank_lp = logp[:, :, blank]                                   # (T, U+1)
    label_lp = logp[:, np.arange(u1 - 1), labels]                  # (T, U)

    alpha = np.empty((t_len, u1))
    alpha[0] = _scan_logaddexp(np.concatenate(([0.0], np.full(u1 - 1, NEG_INF))), label_lp[0])
    for t in range(1, t_len):
        alpha[t] = _scan_logaddexp(alpha[t - 1] + blank_lp[t - 1], label_lp[t])

    beta = np.empty((t_len, u1))
    # reversed scan: b[u] = logaddexp(from_below[u], b[u+1] + label[u])
    last = np.full(u1, NEG_INF)
    last[-1] = blank_lp[-1, -1]
    beta[-1] = _scan_logaddexp((last)[::-1], label_lp[-1][::-1])[::-1]
    for t in range(t_len - 2, -1, -1):
        beta[t] = _scan_logaddexp((beta[t + 1] + blank_lp[t])[::-1], label_lp[t][::-1])[::-1]
    return logp, AlignmentGrid(alpha, beta)


def rnnt_loss(logits: np.ndarray, labels: Sequence[int]) -> LossOutput:
    """Transducer loss -ln P(y|x) over all monotonic alignments.

    Parameters
    ----------
    logits : array, shape (T, U+1, V+1)
        Joint-network outputs; index V is blank.
    labels : sequence of U ids in [0, V)
    """
    logp, grid = rnnt_alignment(logits, labels)
    alpha, beta = grid.log_alpha, grid.log_beta
    t_len, u1, v1 = logp.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    log_like = beta[0, 0]

    g = np.zeros_like(logp)
    # blank moves (t,u) -> (t+1,u); the final blank at (T-1,U) leaves the lattice
    nxt = np.vstack([beta[1:], np.full((1, u1), NEG_INF)])
    nxt[-1, -1] = 0.0
    g[:, :, -1] = -np.exp(alpha + logp[:, :, -1] + nxt - log_like)
    if u1 > 1:
        u_idx = np.arange(u1 - 1)
        g[:, u_idx, labels] = -np.exp(alpha[:, :-1] + logp[:, u_idx, labels] + beta[:, 1:] - log_like)
    return LossOutput(float(-log_like), _softmax_backward(g, logp))


def _ctc_extend(labels, blank):
    ext = np.full(2 * labels.size + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def ctc_min_frames(labels: Sequence[int]) -> int:
    labels = list(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def ctc_loss(logits: np.ndarray, labels: Sequence[int]) -> LossOutput:
    """Connectionist temporal classification loss for a T x (V+1) logit matrix (blank = V)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise DimensionMismatch(f"CTC logits must be 2-D (T, V+1), got shape {logits.shape}")
    t_len, v1 = logits.shape
    blank = v1 - 1
    labels = _check_labels(labels, blank)
    if t_len < ctc_min_frames(labels.tolist()):
        raise InfeasibleLength(f"T={t_len} frames cannot emit {labels.size} labels with "
                               f"{ctc_min_frames(labels.tolist()) - labels.size} repeats")
    logp = log_softmax(logits)
    ext = _ctc_extend(labels, blank)
    s_len = ext.size
    # skip transition s-2 -> s allowed for non-blank s differing from s-2
    skip = np.zeros(s_len, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    emit = logp[:, ext]                                            # (T, S)

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]

    beta = np.full((t_len, s_len), NEG_INF)
    beta[-1, -1] = emit[-1, -1]
    if s_len > 1:
        beta[-1, -2] = emit[-1, -2]
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + emit[t]

    ends = alpha[-1, -1] if s_len == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    log_like = float(ends)
    # occupancy: alpha and beta both include the emission at t
    occ = np.exp(alpha + beta - emit - log_like)
    g = np.zeros_like(logp)
    for s in range(s_len):
        g[:, ext[s]] -= occ[:, s]
    return LossOutput(-log_like, _softmax_backward(g, logp))


def smoothed_ce(log_probs: np.ndarray, target, smoothing: float = 0.1) -> LossOutput:
    """Cross-entropy against (1 - s) * onehot(target) + s / V.

    ``log_probs`` may be a single distribution (V,) or a batch (N, V) with
    ``target`` of length N (losses are summed). Inputs are renormalized with
    log-softmax, which leaves valid log-probabilities unchanged, and the
    returned gradient is taken with respect to the inputs read as logits.
    """
    if not 0.0 <= smoothing < 1.0:
        raise BadSmoothing(f"smoothing must lie in [0, 1), got {smoothing}")
    x = np.asarray(log_probs, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    targets = np.atleast_1d(np.asarray(target, dtype=np.int64))
    n, v = x2.shape
    if targets.size != n:
        raise DimensionMismatch(f"{n} distributions but {targets.size} targets")
    if targets.min() < 0 or targets.max() >= v:
        raise LabelOutOfVocab(f"targets must lie in [0, {v})")
    logp = log_softmax(x2)
    q = np.full((n, v), smoothing / v)
    q[np.arange(n), targets] += 1.0 - smoothing
    loss = float(-(q * logp).sum())
    grad = np.exp(logp) - q
    return LossOutput(loss, grad[0] if single else grad)


def joint_loss(ce: LossOutput, ctc: LossOutput, lam: float = 0.8) -> LossOutput:
    """Convex combination lam * CE + (1 - lam) * CTC.

    The gradient is a pair ``(lam * ce.grad, (1 - lam) * ctc.grad)`` since
    the two terms are generally taken w.r.t. different logit tensors.
    """
    if not 0.0 <= lam <= 1.0:
        raise LambdaOutOfRange(f"lambda must lie in [0, 1], got {lam}")
    loss = lam * ce.loss + (1.0 - lam) * ctc.loss
    return LossOutput(float(loss), (lam * np.asarray(ce.grad), (1.0 - lam) * np.asarray(ctc.grad)))
