"""Layer-wise pretraining schedule: active encoder depth and the warm-up learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

_EPS = 1e-9


@dataclass(frozen=True)
class WarmupSchedule:
    base_lr: float = 1e-4
    peak_lr: float = 3e-4
    first_layer_epochs: float = 0.5
    per_layer_epochs: float = 0.25
    total_warmup_end: float = 2.5
    num_layers: int = 6
    # ramps start one logging step after each reset, as in the reference curve
    ramp_offset: float = 0.05

    def __post_init__(self):
        if not self.base_lr < self.peak_lr:
            raise ValueError("base_lr must be below peak_lr")
        if self.first_layer_epochs <= self.ramp_offset or self.per_layer_epochs <= self.ramp_offset:
            raise ValueError("segments must be longer than ramp_offset")

    def segments(self):
        """(start, end) epochs of each warm-up ramp."""
        segs = [(0.0, self.first_layer_epochs)]
        start = self.first_layer_epochs
        while start < self.total_warmup_end - _EPS:
            end = min(start + self.per_layer_epochs, self.total_warmup_end)
            segs.append((start, end))
            start = end
        return segs

    @property
    def all_layers_epoch(self) -> float:
        return self.first_layer_epochs + (self.num_layers - 1) * self.per_layer_epochs


def lr_at(epoch: float, schedule: WarmupSchedule = WarmupSchedule()) -> float:
    """Piecewise-linear warm-up: base_lr right after each reset, peak_lr at each segment end.

    Segment boundaries belong to the segment they end (the reset happens just
    after). Past the warm-up the rate stays at peak_lr.
    """
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if epoch >= schedule.total_warmup_end - _EPS:
        return schedule.peak_lr
    for start, end in schedule.segments():
        if epoch <= end + _EPS and (epoch > start + _EPS or start == 0.0):
            ramp_start = start + schedule.ramp_offset
            if epoch <= ramp_start:
                return schedule.base_lr
            # slope expressed per ramp_offset step; snapping on-grid epochs keeps
            # the reference breakpoints exact in floating point
            n_steps = round((end - ramp_start) / schedule.ramp_offset)
            steps = (epoch - ramp_start) / schedule.ramp_offset
            if abs(steps - round(steps)) < 1e-9:
                steps = round(steps)
            return schedule.base_lr + steps * ((schedule.peak_lr - schedule.base_lr) / n_steps)
    return schedule.peak_lr


def active_layers(epoch: float, schedule: WarmupSchedule = WarmupSchedule()) -> int:
    """Encoder depth in use: one layer until first_layer_epochs, then +1 every per_layer_epochs."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if epoch < schedule.first_layer_epochs - _EPS:
        return 1
    added = 1 + math.floor((epoch - schedule.first_layer_epochs) / schedule.per_layer_epochs + _EPS)
    return min(schedule.num_layers, 1 + added)
