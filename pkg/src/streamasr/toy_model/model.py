"""Desk-scale streaming models: LSTM encoder with a MoChA / full-attention decoder or an RNN-T head."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..errors import ShapeMismatch
from . import autograd as ag
from .config import ModelConfig, param_shapes


def lstm_cell(x, h, c, W, b):
    gates = torch.cat([x, h], dim=-1) @ W.T + b
    i, f, g, o = gates.chunk(4, dim=-1)
    c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
    h = torch.sigmoid(o) * torch.tanh(c)
    return h, c


def lstm_layer(x, W, b, reverse=False):
    """Run one LSTM over a (T, D) sequence; returns (T, H)."""
    hidden = W.shape[0] // 4
    if W.shape[1] != x.shape[-1] + hidden:
        raise ShapeMismatch(f"LSTM weight expects input dim {W.shape[1] - hidden}, got {x.shape[-1]}")
    h = x.new_zeros(hidden)
    c = x.new_zeros(hidden)
    # input projection for all steps at once; recurrence adds the hidden part
    W_x, W_h = W[:, : x.shape[-1]], W[:, x.shape[-1]:]
    proj = x @ W_x.T + b
    steps = range(x.shape[0] - 1, -1, -1) if reverse else range(x.shape[0])
    outs = [None] * x.shape[0]
    for t in steps:
        i, f, g, o = (proj[t] + W_h @ h).chunk(4)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        outs[t] = h
    return torch.stack(outs)


class ToyModel(nn.Module):
    """Parameters are stored flat under their layout names (``encoder.l0.W`` ...)."""

    def __init__(self, cfg: ModelConfig, dtype=torch.float64):
        super().__init__()
        self.cfg = cfg
        self.shapes = param_shapes(cfg)
        gen = torch.Generator().manual_seed(cfg.seed)
        self.params = nn.ParameterDict()
        for _, name, shape in self.shapes:
            t = (torch.rand(shape, generator=gen, dtype=torch.float64) * 2 - 1) * cfg.init_scale
            if name.endswith(".b") and (name.startswith("encoder.") or ".lstm." in name):
                hid = shape[0] // 4
                t[hid:2 * hid] = cfg.forget_bias
            self.params[self._key(name)] = nn.Parameter(t.to(dtype))
        self.noise_gen = torch.Generator().manual_seed(cfg.seed + 1)

    @staticmethod
    def _key(name):
        return name.replace(".", "__")

    def p(self, name) -> torch.Tensor:
        return self.params[self._key(name)]

    def named_tensors(self):
        """(name, tensor) in layout order."""
        return [(name, self.p(name)) for _, name, _ in self.shapes]

    def block_of(self, name):
        for block, n, _ in self.shapes:
            if n == name:
                return block
        raise KeyError(name)

    # -- encoder ---------------------------------------------------------------

    def encoder_layer_names(self, i):
        enc = self.cfg.encoder
        dirs = ("fwd", "bwd") if enc.bidirectional else (None,)
        out = []
        for d in dirs:
            pre = f"encoder.l{i}" + (f".{d}" if d else "")
            out += [pre + ".W", pre + ".b"]
        return out

    def encode(self, feats, n_active: int | None = None) -> torch.Tensor:
        """Stacked LSTM over (T, 40) features using the first ``n_active`` layers."""
        enc = self.cfg.encoder
        x = torch.as_tensor(np.asarray(feats), dtype=self.dtype) if not torch.is_tensor(feats) else feats.to(self.dtype)
        if x.ndim != 2 or x.shape[1] != enc.input_dim:
            raise ShapeMismatch(f"features must be (T, {enc.input_dim}), got {tuple(x.shape)}")
        n_active = enc.num_layers if n_active is None else n_active
        for i in range(n_active):
            if enc.bidirectional:
                f = lstm_layer(x, self.p(f"encoder.l{i}.fwd.W"), self.p(f"encoder.l{i}.fwd.b"))
                b = lstm_layer(x, self.p(f"encoder.l{i}.bwd.W"), self.p(f"encoder.l{i}.bwd.b"), reverse=True)
                x = torch.cat([f, b], dim=-1)
            else:
                x = lstm_layer(x, self.p(f"encoder.l{i}.W"), self.p(f"encoder.l{i}.b"))
            if self.training and self.cfg.dropout > 0:
                x = nn.functional.dropout(x, self.cfg.dropout, training=True)
        return x

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def ctc_logits(self, h_enc):
        return h_enc @ self.p("ctc.W").T + self.p("ctc.b")

    # -- RNN-T -------------------------------------------------------------------

    def pred_step(self, token: int, state=None):
        """Advance the prediction network by one non-blank label (SOS = blank id)."""
        hid = self.cfg.decoder.decoder_hidden
        if state is None:
            state = (torch.zeros(hid, dtype=self.dtype), torch.zeros(hid, dtype=self.dtype))
        emb = self.p("pred.embed")[token]
        return lstm_cell(emb, state[0], state[1], self.p("pred.lstm.W"), self.p("pred.lstm.b"))

    def prediction(self, labels):
        """h_pred for prefixes of length 0..U, shape (U+1, P)."""
        state = self.pred_step(self.cfg.sos)
        outs = [state[0]]
        for y in labels:
            state = self.pred_step(int(y), state)
            outs.append(state[0])
        return torch.stack(outs)

    def joint(self, h_enc, h_pred):
        """z = W_out tanh(W_e h_enc + W_p h_pred + b); broadcasts over leading dims."""
        if h_enc.shape[-1] != self.p("joint.enc").shape[1] or h_pred.shape[-1] != self.p("joint.pred").shape[1]:
            raise ShapeMismatch(f"joint expects encoder dim {self.p('joint.enc').shape[1]} and prediction dim "
                                f"{self.p('joint.pred').shape[1]}, got {h_enc.shape[-1]} and {h_pred.shape[-1]}")
        pre = h_enc @ self.p("joint.enc").T + h_pred @ self.p("joint.pred").T + self.p("joint.b")
        return torch.tanh(pre) @ self.p("joint.out").T

    def joint_lattice(self, h_enc, labels):
        h_pred = self.prediction(labels)
        return self.joint(h_enc[:, None, :], h_pred[None, :, :])

    # -- attention decoders ------------------------------------------------------

    def dec_step(self, prev_token: int, prev_ctx, state=None):
        """Decoder state s_l from y_{l-1}, c_{l-1} and s_{l-1}."""
        hid = self.cfg.decoder.decoder_hidden
        if state is None:
            state = (torch.zeros(hid, dtype=self.dtype), torch.zeros(hid, dtype=self.dtype))
        x = torch.cat([self.p("dec.embed")[prev_token], prev_ctx])
        return lstm_cell(x, state[0], state[1], self.p("dec.lstm.W"), self.p("dec.lstm.b"))

    def energy(self, prefix, s, h_enc):
        pre = s @ self.p(f"{prefix}.W_s").T + h_enc @ self.p(f"{prefix}.W_h").T + self.p(f"{prefix}.b")
        e = torch.tanh(pre) @ self.p(f"{prefix}.v")
        if prefix == "mono":
            e = e + self.p("mono.r")
        return e

    def output_logits(self, s, prev_token, ctx):
        x = torch.cat([s, self.p("dec.embed")[prev_token], ctx], dim=-1)
        return x @ self.p("out.W").T + self.p("out.b")

    def attention_forward(self, h_enc, labels, noise: bool | None = None):
        """Teacher-forced decoder logits for labels + EOS, shape (U+1, V+1).

        Also returns the (U+1, T) expected alignment (MoChA) or attention weights.
        """
        cfg = self.cfg
        noise = self.training if noise is None else noise
        t_len = h_enc.shape[0]
        inputs = [cfg.sos] + [int(y) for y in labels]
        ctx = h_enc.new_zeros(h_enc.shape[1])
        alpha_prev = h_enc.new_zeros(t_len)
        alpha_prev[0] = 1.0
        state = None
        logits, weights = [], []
        for prev in inputs:
            state = self.dec_step(prev, ctx, state)
            s = state[0]
            if cfg.decoder.kind == "mocha":
                e = self.energy("mono", s, h_enc)
                if noise and cfg.mocha_noise_std > 0:
                    e = e + cfg.mocha_noise_std * torch.randn(t_len, generator=self.noise_gen, dtype=e.dtype)
                alpha = ag.monotonic_step(alpha_prev, torch.sigmoid(e))
                u = self.energy("chunk", s, h_enc)
                w = ag.chunk_weights(alpha, u, cfg.decoder.chunk_size)
                alpha_prev = alpha
                weights.append(alpha)
            else:
                w = torch.softmax(self.energy("attn", s, h_enc), dim=0)
                weights.append(w)
            ctx = w @ h_enc
            logits.append(self.output_logits(s, prev, ctx))
        return torch.stack(logits), torch.stack(weights)
