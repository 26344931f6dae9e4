"""Monotonic chunkwise attention over precomputed energy matrices.

Training uses the expected (soft) alignment: with selection probabilities
``p = sigmoid(e)``, output step ``l`` starts scanning at the previous step's
stop frame (inclusive) and stops at frame ``t`` with probability ``p[l, t]``.
The chunk energies then spread each stop over the ``w`` most recent frames.
At inference the scan is hard: stop at the first frame with ``p >= 0.5``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ATTEND_THRESHOLD = 0.5


@dataclass
class MonotonicEnergies:
    e: np.ndarray
    u: np.ndarray
    chunk_size: int = 4

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.e.shape != self.u.shape or self.e.ndim != 2:
            raise ValueError(f"e and u must be L x T of equal shape, got {self.e.shape}, {self.u.shape}")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if not (np.all(np.isfinite(self.e)) and np.all(np.isfinite(self.u))):
            raise ValueError("energies must be finite")


@dataclass
class AttentionPosterior:
    alpha: np.ndarray
    beta: np.ndarray
    contexts: np.ndarray | None = None


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def initial_alignment(t_len: int) -> np.ndarray:
    """Alignment of the virtual step before the first output: all mass on frame 0."""
    a = np.zeros(t_len)
    a[0] = 1.0
    return a


def monotonic_step(alpha_prev: np.ndarray, p: np.ndarray):
    """One output step of the expected alignment.

    q[t] = (1 - p[t-1]) q[t-1] + alpha_prev[t];  alpha[t] = p[t] q[t].
    Returns ``(alpha, q)``; ``q`` is kept for the backward pass.
    """
    t_len = p.shape[-1]
    q = np.empty(t_len)
    carry = 0.0
    for t in range(t_len):
        carry = carry + alpha_prev[t]
        q[t] = carry
        carry = carry * (1.0 - p[t])
    alpha = np.clip(p * q, 0.0, 1.0)
    return alpha, q


def monotonic_step_backward(g_alpha: np.ndarray, p: np.ndarray, q: np.ndarray):
    """Reverse-mode pass of :func:`monotonic_step`: returns (g_alpha_prev, g_p)."""
    t_len = p.shape[-1]
    g_p = g_alpha * q
    g_q = g_alpha * p
    g_prev = np.empty(t_len)
    carry = 0.0   # gradient flowing into q[t] from q[t+1]
    for t in range(t_len - 1, -1, -1):
        gq = g_q[t] + carry
        g_prev[t] = gq
        if t > 0:
            carry = gq * (1.0 - p[t - 1])
            g_p[t - 1] -= gq * q[t - 1]
    return g_prev, g_p


def expected_alignment(energies: MonotonicEnergies, p: np.ndarray | None = None) -> np.ndarray:
    """Expected stop distribution alpha (L x T) for sigmoid(e) selection probabilities."""
    if p is None:
        p = sigmoid(energies.e)
    n_out, t_len = p.shape
    alpha = np.zeros((n_out, t_len))
    prev = initial_alignment(t_len)
    for l in range(n_out):
        alpha[l], _ = monotonic_step(prev, p[l])
        prev = alpha[l]
    return alpha


def _stable_exp(u):
    return np.exp(u - np.max(u, axis=-1, keepdims=True))


def chunk_weights(alpha: np.ndarray, u: np.ndarray, w: int = 4) -> np.ndarray:
    """Spread each stop probability over the w frames ending at the stop.

    beta[l, j] = sum_{k=j}^{j+w-1} alpha[l, k] * exp(u[l, j]) / sum_{m=k-w+1}^{k} exp(u[l, m])
    """
    if w < 1:
        raise ValueError("chunk size must be >= 1")
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    ex = _stable_exp(u)
    t_len = ex.shape[-1]
    denom = np.zeros_like(ex)
    for d in range(min(w, t_len)):  # denom[k] = sum_{m=k-d} ex[m]
        denom[:, d:] += ex[:, :t_len - d]
    ratio = alpha / denom
    acc = np.zeros_like(ex)
    for d in range(min(w, t_len)):  # acc[j] = sum_{k=j+d} ratio[k]
        acc[:, :t_len - d] += ratio[:, d:]
    return ex * acc


def chunk_weights_backward(g_beta, alpha, u, w: int = 4):
    """Reverse-mode pass of :func:`chunk_weights`: returns (g_alpha, g_u)."""
    alpha = np.atleast_2d(alpha)
    g_beta = np.atleast_2d(g_beta)
    ex = _stable_exp(np.atleast_2d(u))
    t_len = ex.shape[-1]
    denom = np.zeros_like(ex)
    for d in range(min(w, t_len)):
        denom[:, d:] += ex[:, :t_len - d]
    ratio = alpha / denom
    acc = np.zeros_like(ex)
    for d in range(min(w, t_len)):
        acc[:, :t_len - d] += ratio[:, d:]
    gb_ex = g_beta * ex
    # s[k] = sum_{j=k-w+1}^{k} g_beta[j] ex[j]
    s = np.zeros_like(ex)
    for d in range(min(w, t_len)):
        s[:, d:] += gb_ex[:, :t_len - d]
    g_alpha = s / denom
    g_denom = -s * ratio / denom
    g_ex = g_beta * acc
    for d in range(min(w, t_len)):  # denom[k] depends on ex[k-d]
        g_ex[:, :t_len - d] += g_denom[:, d:]
    return g_alpha, g_ex * ex


def expected_context(energies: MonotonicEnergies, enc: np.ndarray):
    """Full training-time forward: returns AttentionPosterior with contexts = beta @ enc."""
    alpha = expected_alignment(energies)
    beta = chunk_weights(alpha, energies.u, energies.chunk_size)
    return AttentionPosterior(alpha, beta, beta @ np.asarray(enc, dtype=np.float64))


def expected_context_backward(g_ctx: np.ndarray, energies: MonotonicEnergies, enc: np.ndarray):
    """Gradients of sum(g_ctx * contexts) w.r.t. (e, u, enc)."""
    enc = np.asarray(enc, dtype=np.float64)
    p = sigmoid(energies.e)
    n_out, t_len = p.shape
    alphas, qs = [], []
    prev = initial_alignment(t_len)
    for l in range(n_out):
        a, q = monotonic_step(prev, p[l])
        alphas.append(a)
        qs.append(q)
        prev = a
    alpha = np.array(alphas)
    beta = chunk_weights(alpha, energies.u, energies.chunk_size)
    g_beta = g_ctx @ enc.T
    g_enc = beta.T @ g_ctx
    g_alpha, g_u = chunk_weights_backward(g_beta, alpha, energies.u, energies.chunk_size)
    g_p = np.zeros_like(p)
    carry = np.zeros(t_len)
    for l in range(n_out - 1, -1, -1):
        g_prev, g_p[l] = monotonic_step_backward(g_alpha[l] + carry, p[l], qs[l])
        carry = g_prev
    return g_p * p * (1.0 - p), g_u, g_enc


def hard_attend_step(p_lt: float, threshold: float = ATTEND_THRESHOLD) -> bool:
    """True means attend (stop here); ties at the threshold attend."""
    return bool(p_lt >= threshold)


def hard_scan(p_row: np.ndarray, start: int, threshold: float = ATTEND_THRESHOLD):
    """First frame >= start whose probability passes the threshold, or None."""
    for t in range(start, len(p_row)):
        if hard_attend_step(p_row[t], threshold):
            return t
    return None


def hard_alignment(p: np.ndarray, threshold: float = ATTEND_THRESHOLD):
    """Inference-time stop positions per output step; None once the input is exhausted."""
    stops = []
    start = 0
    for row in np.asarray(p):
        t = hard_scan(row, start, threshold)
        stops.append(t)
        if t is None:
            break
        start = t
    stops.extend([None] * (len(p) - len(stops)))
    return stops


def heatmap_pixels(matrix: np.ndarray) -> np.ndarray:
    m = np.clip(np.asarray(matrix, dtype=np.float64), 0.0, 1.0)
    return np.round(255.0 * m).astype(np.uint8)


def render_heatmap(matrix: np.ndarray, out_prefix, png: bool = False):
    """Write ``<prefix>.pgm`` (binary P5, output steps as rows) and ``<prefix>.csv``.

    Values are clipped to [0, 1] and quantized as round(255 * value). With
    ``png=True`` a matplotlib rendering is written as well. Returns the list
    of written paths.
    """
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    pix = heatmap_pixels(matrix)
    rows, cols = pix.shape
    pgm = out_prefix.with_suffix(".pgm")
    pgm.write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + pix.tobytes())
    csv_path = out_prefix.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["output_step"] + [f"t{j}" for j in range(cols)])
        for i, row in enumerate(np.asarray(matrix, dtype=np.float64)):
            writer.writerow([i] + [repr(float(v)) for v in row])
    written = [pgm, csv_path]
    if png:
        from .plotting import plot_attention_heatmap

        written.append(plot_attention_heatmap(matrix, out_prefix.with_suffix(".png")))
    return written


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    cols, rows = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)
