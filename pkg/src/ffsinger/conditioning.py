"""Frame-level conditioning: alignment expansion, F0 coarse coding, and
cyclical note-position encoding.

The duration plan is turned into a per-frame index into the encoder's
phoneme states (hard alignment by repetition). Log-F0 is coarse coded with
triangular basis functions whose width equals the center spacing, so inside
the pitch range the code is a partition of unity; unvoiced frames code to
zeros. Position within the duration group is encoded with K equally spaced
cosine phases, which makes the representation cyclical (the end of a note
meets the start of the next).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .duration import DurationPlan
from .numerics import mean_pool_rows
from .score import ValidationError

__all__ = [
    "F0Track",
    "F0CoderConfig",
    "FrameConditioning",
    "LengthMismatch",
    "K_POS",
    "expand_states",
    "code_f0",
    "code_f0_track",
    "code_position",
    "position_codes",
    "build_conditioning",
    "group_frames",
]

# Dimension of the cyclical position code.
K_POS = 4


class LengthMismatch(ValueError):
    """Frame-indexed inputs that must cover the same span do not."""


@dataclass(frozen=True)
class F0Track:
    """Per-frame fundamental frequency in Hz; 0 marks unvoiced frames."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValidationError(f"F0 track must be 1-d, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValidationError("F0 values must be finite and >= 0")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class F0CoderConfig:
    """Log-domain triangular coder over the singer's pitch range."""

    f_min: float = 80.0
    f_max: float = 800.0
    k: int = 4

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ValidationError(f"need 0 < f_min < f_max, got {self.f_min}, {self.f_max}")
        if self.k < 2:
            raise ValidationError(f"coder needs k >= 2 basis functions, got {self.k}")

    @property
    def centers(self) -> np.ndarray:
        return np.linspace(np.log(self.f_min), np.log(self.f_max), self.k)

    @property
    def width(self) -> float:
        return float((np.log(self.f_max) - np.log(self.f_min)) / (self.k - 1))


@dataclass(frozen=True)
class FrameConditioning:
    """Per-frame model conditioning: which phoneme state each frame belongs
    to, plus the F0 and position codes."""

    state_index: np.ndarray   # int, length T
    f0_code: np.ndarray       # T x K_f0 in [0,1]
    pos_code: np.ndarray      # T x K_pos in [0,1]

    def __post_init__(self):
        t = len(self.state_index)
        if self.f0_code.shape[0] != t or self.pos_code.shape[0] != t:
            raise LengthMismatch("conditioning fields cover different frame counts")

    def __len__(self) -> int:
        return len(self.state_index)


def expand_states(plan: DurationPlan) -> np.ndarray:
    """Repeat state i for its planned duration; output length is the plan's
    total frame count and run-length encoding inverts it exactly."""
    return np.repeat(np.arange(plan.phoneme_count), plan.flat_durations())


def code_f0(f0: float, cfg: F0CoderConfig) -> np.ndarray:
    """Triangular coarse code of one F0 value; zero vector when unvoiced."""
    return code_f0_track(np.array([f0]), cfg)[0]


def code_f0_track(values: np.ndarray, cfg: F0CoderConfig) -> np.ndarray:
    """Vectorized coder: rows are frames, columns the K_f0 basis responses."""
    values = np.asarray(values, dtype=np.float64)
    voiced = values > 0
    x = np.zeros_like(values)
    np.log(values, out=x, where=voiced)
    x = np.clip(x, np.log(cfg.f_min), np.log(cfg.f_max))
    code = np.maximum(0.0, 1.0 - np.abs(x[:, None] - cfg.centers[None, :]) / cfg.width)
    code[~voiced] = 0.0
    return code


def position_codes(t_note: int, k_pos: int = K_POS) -> np.ndarray:
    """Codes for every frame of one group: v_k = cos(2pi p - 2pi (k-1)/K)/2 + 1/2
    with p = t/T half-open, so p=0 and the limit p->1 coincide."""
    if t_note < 1:
        raise ValidationError(f"group length must be >= 1, got {t_note}")
    if k_pos < 1:
        raise ValidationError(f"position code needs k >= 1, got {k_pos}")
    p = np.arange(t_note) / t_note
    phases = 2.0 * np.pi * (np.arange(k_pos)) / k_pos
    return 0.5 * np.cos(2.0 * np.pi * p[:, None] - phases[None, :]) + 0.5


def code_position(t_local: int, t_note: int, k_pos: int = K_POS) -> np.ndarray:
    if not 0 <= t_local < t_note:
        raise ValidationError(f"frame {t_local} outside group of {t_note} frames")
    return position_codes(t_note, k_pos)[t_local]


def build_conditioning(plan: DurationPlan, f0: F0Track, cfg: F0CoderConfig,
                       k_pos: int = K_POS) -> FrameConditioning:
    """Assemble the three per-frame conditioning fields for one phrase."""
    if len(f0) != plan.total_frames:
        raise LengthMismatch(
            f"F0 track has {len(f0)} frames, duration plan covers {plan.total_frames}")
    pos = np.concatenate([position_codes(g.total, k_pos) for g in plan.groups])
    return FrameConditioning(
        state_index=expand_states(plan),
        f0_code=code_f0_track(f0.values, cfg),
        pos_code=pos,
    )


# Reduction-factor input grouping is plain row pooling; re-exported here so
# callers that only assemble conditioning need not import the autodiff core.
group_frames = mean_pool_rows
