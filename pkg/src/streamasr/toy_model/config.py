"""Model configuration and the named parameter layout shared by the model, checkpoints and counters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

DECODER_KINDS = ("mocha", "full_attention", "rnnt")


@dataclass
class EncoderConfig:
    num_layers: int = 2
    hidden: int = 32
    bidirectional: bool = False
    input_dim: int = 40

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden < 1:
            raise ValueError("encoder needs num_layers >= 1 and hidden >= 1")

    @property
    def output_dim(self) -> int:
        return self.hidden * (2 if self.bidirectional else 1)


@dataclass
class DecoderConfig:
    kind: str = "mocha"
    chunk_size: int = 4
    decoder_hidden: int = 32
    embed_dim: int = 16
    attention_dim: int = 16
    joint_dim: int = 32

    def __post_init__(self):
        if self.kind not in DECODER_KINDS:
            raise ValueError(f"decoder kind must be one of {DECODER_KINDS}, got {self.kind!r}")
        if self.kind == "mocha" and self.chunk_size < 1:
            raise ValueError("MoChA chunk_size must be >= 1")


@dataclass
class ModelConfig:
    """``vocab_size`` counts output tokens; index ``vocab_size`` is blank (CTC/RNN-T) or EOS (attention)."""

    vocab_size: int = 8
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    dropout: float = 0.1
    mocha_noise_std: float = 1.0
    init_scale: float = 0.05
    forget_bias: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        enc = EncoderConfig(**d.pop("encoder", {}))
        dec = DecoderConfig(**d.pop("decoder", {}))
        return cls(encoder=enc, decoder=dec, **d)

    @property
    def blank(self) -> int:
        return self.vocab_size

    eos = blank
    sos = blank


def lstm_shapes(prefix, in_dim, hidden):
    # gates stacked as [input, forget, cell, output]; one bias per gate
    return [(f"{prefix}.W", (4 * hidden, in_dim + hidden)), (f"{prefix}.b", (4 * hidden,))]


def param_shapes(cfg: ModelConfig):
    """Ordered (block, name, shape) triples for every parameter of the model."""
    enc = cfg.encoder
    dec = cfg.decoder
    v1 = cfg.vocab_size + 1
    e_out = enc.output_dim
    out = []

    def add(block, items):
        out.extend((block, name, shape) for name, shape in items)

    in_dim = enc.input_dim
    for i in range(enc.num_layers):
        if enc.bidirectional:
            add("encoder", lstm_shapes(f"encoder.l{i}.fwd", in_dim, enc.hidden))
            add("encoder", lstm_shapes(f"encoder.l{i}.bwd", in_dim, enc.hidden))
        else:
            add("encoder", lstm_shapes(f"encoder.l{i}", in_dim, enc.hidden))
        in_dim = e_out
    add("ctc_head", [("ctc.W", (v1, e_out)), ("ctc.b", (v1,))])

    if dec.kind == "rnnt":
        p = dec.decoder_hidden
        add("prediction", [("pred.embed", (v1, dec.embed_dim))])
        add("prediction", lstm_shapes("pred.lstm", dec.embed_dim, p))
        add("joint", [("joint.enc", (dec.joint_dim, e_out)), ("joint.pred", (dec.joint_dim, p)),
                      ("joint.b", (dec.joint_dim,)), ("joint.out", (v1, dec.joint_dim))])
        return out

    s = dec.decoder_hidden
    a = dec.attention_dim
    add("decoder", [("dec.embed", (v1, dec.embed_dim))])
    add("decoder", lstm_shapes("dec.lstm", dec.embed_dim + e_out, s))
    energy = [("W_s", (a, s)), ("W_h", (a, e_out)), ("b", (a,)), ("v", (a,))]
    if dec.kind == "mocha":
        add("attention", [(f"mono.{n}", sh) for n, sh in energy] + [("mono.r", (1,))])
        add("attention", [(f"chunk.{n}", sh) for n, sh in energy])
    else:
        add("attention", [(f"attn.{n}", sh) for n, sh in energy])
    add("output", [("out.W", (v1, s + dec.embed_dim + e_out)), ("out.b", (v1,))])
    return out


def full_scale_config(kind: str, bidirectional: bool = False) -> ModelConfig:
    """Full sizes: 6 x 1024 LSTM encoder, 10025 BPE units, MoChA decoder 1000, prediction 1024."""
    enc = EncoderConfig(num_layers=6, hidden=1024, bidirectional=bidirectional)
    hidden = 1024 if kind == "rnnt" else 1000
    dec = DecoderConfig(kind=kind, chunk_size=4, decoder_hidden=hidden, embed_dim=512,
                        attention_dim=1024, joint_dim=1024)
    return ModelConfig(vocab_size=10025, encoder=enc, decoder=dec)
