"""Input-frame selection around target time steps.

Frame indices are 1-based throughout this module; raw selections are
clamped into [1, T], which preserves the input arity V at sequence
boundaries at the cost of duplicated frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import Camera


@dataclass
class InputSelection:
    indices: list          # V clamped 1-based frame indices, non-decreasing
    center_position: int   # position of t_i within the list
    center_clamped: bool   # True when clamping displaced the middle raw index


@dataclass
class TargetSpec:
    """Ordered (t_i, camera) pairs plus the dilation schedule."""

    entries: list = field(default_factory=list)   # list of (t: int, Camera)
    dilations: list = field(default_factory=lambda: [1])

    def __post_init__(self):
        if len(self.dilations) > 1:
            for a, b in zip(self.dilations, self.dilations[1:]):
                if b >= a:
                    raise ConfigError("dilations must be strictly decreasing")

    def times(self):
        return [t for t, _ in self.entries]

    def to_json(self) -> dict:
        return {
            "targets": [{"t": int(t), "camera": cam.to_json()} for t, cam in self.entries],
            "dilations": list(self.dilations),
        }

    @staticmethod
    def from_json(obj: dict) -> "TargetSpec":
        entries = [(int(e["t"]), Camera.from_json(e["camera"])) for e in obj["targets"]]
        return TargetSpec(entries=entries, dilations=list(obj.get("dilations", [1])))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1)

    @staticmethod
    def load(path) -> "TargetSpec":
        with open(path) as f:
            return TargetSpec.from_json(json.load(f))


def select_inputs(t_i: int, d: int, V: int, T: int) -> InputSelection:
    """V frame indices {t_i - kd, ..., t_i, ..., t_i + kd} clamped to [1, T]."""
    if V < 1 or V % 2 == 0:
        raise ConfigError(f"V must be odd and >= 1, got {V}")
    if d < 1:
        raise ConfigError(f"dilation must be >= 1, got {d}")
    if not (1 <= t_i <= T):
        raise ConfigError(f"target time {t_i} outside [1, {T}]")
    half = (V - 1) // 2
    raw = [t_i + k * d for k in range(-half, half + 1)]
    clamped = [min(max(r, 1), T) for r in raw]
    return InputSelection(indices=clamped, center_position=half,
                          center_clamped=clamped[half] != raw[half])


def validate_target_spec(spec: TargetSpec, T: int):
    """None when valid, else the (0-based) index of the first violation.

    Consecutive target times must satisfy t_i in {t_{i-1}-1, t_{i-1}, t_{i-1}+1}
    and every t_i must lie in [1, T]. Bullet-time (constant t) and synchronous
    (t_i = i) specs are both valid.
    """
    times = spec.times()
    if not times:
        raise ConfigError("empty target spec")
    for i, t in enumerate(times):
        if not (1 <= t <= T):
            return i
        if i > 0 and abs(t - times[i - 1]) > 1:
            return i
    return None


def iteration_passes(spec: TargetSpec):
    """Full pass schedule: [(dilation, pass_index), ...] in execution order.

    Within a pass the recurrence runs over all targets in order; the hidden
    state carries over across passes.
    """
    if not spec.dilations:
        raise ConfigError("empty dilation list")
    return [(d, k) for k, d in enumerate(spec.dilations)]
