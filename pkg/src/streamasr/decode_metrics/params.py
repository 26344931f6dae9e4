"""Parameter and model-size accounting from the named layout."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

from ..toy_model.checkpoint import header_bytes
from ..toy_model.config import ModelConfig, full_scale_config, param_shapes

MIB = 1024 * 1024


def lstm_param_count(in_dim: int, hidden: int) -> int:
    return 4 * (in_dim * hidden + hidden * hidden + hidden)


@dataclass
class ParamCount:
    per_block: OrderedDict
    total: int
    serialized_bytes: int

    def __iter__(self):
        return iter((self.per_block, self.total, self.serialized_bytes))


def count_params(model_or_cfg, state: dict | None = None) -> ParamCount:
    """Counts per block, the total, and the exact checkpoint size in bytes."""
    cfg = model_or_cfg if isinstance(model_or_cfg, ModelConfig) else model_or_cfg.cfg
    blocks = OrderedDict()
    for block, _, shape in param_shapes(cfg):
        blocks[block] = blocks.get(block, 0) + math.prod(shape)
    total = sum(blocks.values())
    return ParamCount(blocks, total, 4 * total + header_bytes(cfg, state))


TABLE_ROWS = (
    ("BFA", "full_attention", True),
    ("UFA", "full_attention", False),
    ("MoChA", "mocha", False),
    ("RNN-T", "rnnt", False),
)


def full_scale_table():
    """(label, params in millions, size in MiB) for the four full-size architectures."""
    rows = []
    for label, kind, bidir in TABLE_ROWS:
        pc = count_params(full_scale_config(kind, bidir))
        rows.append((label, pc.total / 1e6, pc.serialized_bytes / MIB))
    return rows


def format_table(rows) -> str:
    lines = [f"{'model':<8}{'params (M)':>12}{'size (MiB)':>12}"]
    lines += [f"{label:<8}{m:>12.1f}{mib:>12.1f}" for label, m, mib in rows]
    return "\n".join(lines)
