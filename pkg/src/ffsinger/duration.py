"""Average-phoneme-duration alignment model.

Given a score, onset consonants shift into the preceding note or silence
(the note onset is the vowel onset), mean phoneme durations come from a
look-up table, and the per-group durations are adjusted so consonants scale
down before the vowel absorbs the remainder: the vowel keeps at least half
of the group and every phoneme keeps at least one frame, while the group
total is matched exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .score import PhonemeInventory, Score, ValidationError

__all__ = [
    "DurationTable",
    "NoteGroup",
    "PlanGroup",
    "DurationPlan",
    "InsufficientFrames",
    "VOWEL_RATIO",
    "rint",
    "shift_onset_consonants",
    "consonant_scale",
    "adjust_durations",
    "plan_from_table",
    "parse_duration_table",
    "serialize_plan",
    "parse_plan",
]

# Minimum fraction of a group reserved for its vowel nucleus.
VOWEL_RATIO = 0.5


class InsufficientFrames(ValueError):
    """A group is shorter than its phoneme count, so the one-frame-minimum
    rule cannot hold."""

    def __init__(self, message: str, note_index: int | None = None):
        self.note_index = note_index
        super().__init__(message)


def rint(x: float) -> int:
    """Round half away from zero (0.5 -> 1, 1.5 -> 2, -0.5 -> -1)."""
    if x >= 0:
        return int(math.floor(x + 0.5))
    return -int(math.floor(-x + 0.5))


@dataclass(frozen=True)
class DurationTable:
    """Mean phoneme durations in frames, keyed by symbol."""

    means: dict[str, float]

    def __post_init__(self):
        for symbol, mean in self.means.items():
            if mean <= 0:
                raise ValidationError(f"duration mean for {symbol!r} must be positive, got {mean}")

    def check_covers(self, inventory: PhonemeInventory) -> None:
        missing = [s for s in inventory.symbols if s not in self.means]
        if missing:
            raise ValidationError(f"duration table missing symbols: {', '.join(missing)}")

    def to_text(self) -> str:
        return "".join(f"{s} {m:g}\n" for s, m in self.means.items())


def parse_duration_table(text: str | bytes) -> DurationTable:
    """Parse `<symbol> <mean_frames>` lines; `#` starts a comment."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    means: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValidationError(f"line {lineno}: expected `<symbol> <mean_frames>`, got {raw!r}")
        try:
            means[parts[0]] = float(parts[1])
        except ValueError:
            raise ValidationError(f"line {lineno}: bad duration value {parts[1]!r}") from None
    if not means:
        raise ValidationError("duration table is empty")
    return DurationTable(means)


@dataclass(frozen=True)
class NoteGroup:
    """One vowel-onset-to-vowel-onset span after consonant shifting.

    phonemes[0] is the vowel (or silence) nucleus; the rest are the note's
    codas followed by the next note's shifted onset consonants. note_index
    is -1 for implicit silence gaps.
    """

    note_index: int
    start_frame: int
    d_n: int
    phonemes: tuple[str, ...]
    raw_durations: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.d_n < 1:
            raise ValidationError("group must span at least one frame")
        if not self.phonemes:
            raise ValidationError("group needs at least one phoneme")


@dataclass(frozen=True)
class PlanGroup:
    note_index: int
    phonemes: tuple[str, ...]
    durations: tuple[int, ...]

    def __post_init__(self):
        if len(self.phonemes) != len(self.durations):
            raise ValidationError("plan group phoneme/duration lengths differ")
        if any(d < 1 for d in self.durations):
            raise ValidationError("plan durations must all be >= 1")

    @property
    def total(self) -> int:
        return sum(self.durations)


@dataclass(frozen=True)
class DurationPlan:
    """Integer frame durations per phoneme, partitioned by group; group sums
    match the group extents exactly, so the plan tiles [0, total_frames)."""

    groups: tuple[PlanGroup, ...]

    @property
    def total_frames(self) -> int:
        return sum(g.total for g in self.groups)

    @property
    def phoneme_count(self) -> int:
        return sum(len(g.phonemes) for g in self.groups)

    def flat_symbols(self) -> tuple[str, ...]:
        return tuple(p for g in self.groups for p in g.phonemes)

    def flat_durations(self) -> tuple[int, ...]:
        return tuple(d for g in self.groups for d in g.durations)


def shift_onset_consonants(score: Score, inventory: PhonemeInventory) -> list[NoteGroup]:
    """Split the score timeline into duration groups.

    Implicit gaps become silence groups, every note's maximal consonant
    prefix moves to the group before it, and each group spans from its
    nucleus onset to the next group's onset. A first note starting at frame
    0 with onset consonants has nowhere to shift them and is rejected.
    """
    sil = inventory.silence_symbol
    segments: list[tuple[int, int, int, list[str]]] = []  # (note_index, start, end, phonemes)
    cursor = 0
    for i, note in enumerate(score.notes):
        if note.onset_frames > cursor:
            segments.append((-1, cursor, note.onset_frames, [sil]))
        phonemes = [sil] if note.is_rest else list(note.phonemes)
        segments.append((i, note.onset_frames, note.end_frames, phonemes))
        cursor = note.end_frames
    if cursor < score.total_frames:
        segments.append((-1, cursor, score.total_frames, [sil]))

    def is_silence_segment(phonemes: list[str]) -> bool:
        return inventory.is_silence(phonemes[0])

    for k, (note_index, _start, _end, phonemes) in enumerate(segments):
        if is_silence_segment(phonemes):
            continue
        prefix_len = 0
        while prefix_len < len(phonemes) and inventory.is_consonant(phonemes[prefix_len]):
            prefix_len += 1
        if prefix_len == 0:
            continue
        if k == 0:
            raise ValidationError(
                f"note {note_index} starts at frame 0 with onset consonants and has no "
                "preceding region to shift them into", (note_index,))
        segments[k - 1][3].extend(phonemes[:prefix_len])
        del phonemes[:prefix_len]

    return [NoteGroup(note_index, start, end - start, tuple(phonemes))
            for note_index, start, end, phonemes in segments]


def consonant_scale(d_n: int, raw: list[float] | tuple[float, ...], r_v: float = VOWEL_RATIO) -> float:
    """Scale factor applied to consonant durations so the vowel keeps at
    least the r_v share of the group; 1 for a lone nucleus."""
    n = len(raw)
    if n < 1:
        raise ValueError("need at least one phoneme duration")
    if any(d <= 0 for d in raw):
        raise ValueError("raw phoneme durations must be positive")
    if d_n < n:
        raise InsufficientFrames(f"group of {n} phonemes cannot fit in {d_n} frames")
    if n == 1:
        return 1.0
    available = d_n - rint(r_v * d_n)
    return min(1.0, available / sum(raw[1:]))


def adjust_durations(d_n: int, raw: list[float] | tuple[float, ...], r_v: float = VOWEL_RATIO) -> list[int]:
    """Integer per-phoneme durations summing exactly to d_n.

    Consonants get max(1, rint(r_c * d_i)); the vowel takes the remainder.
    If rounding pushed the remainder below one frame, frames are stolen one
    at a time from the longest consonant (ties resolved toward the latest
    index) until the vowel has one.
    """
    r_c = consonant_scale(d_n, raw, r_v)
    consonants = [max(1, rint(r_c * d)) for d in raw[1:]]
    vowel = d_n - sum(consonants)
    while vowel < 1:
        j = max(range(len(consonants)), key=lambda i: (consonants[i], i))
        consonants[j] -= 1
        vowel += 1
    return [vowel, *consonants]


def serialize_plan(plan: DurationPlan) -> str:
    """Text form of a plan, one `group <note_index> <sym>=<frames>...` line
    per group; used as the ground-truth-durations sidecar file."""
    lines = []
    for g in plan.groups:
        pairs = " ".join(f"{s}={d}" for s, d in zip(g.phonemes, g.durations))
        lines.append(f"group {g.note_index} {pairs}")
    return "\n".join(lines) + "\n"


def parse_plan(text: str | bytes) -> DurationPlan:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    groups = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "group" or len(parts) < 3:
            raise ValidationError(f"line {lineno}: expected `group <note_index> <sym>=<frames>...`")
        try:
            note_index = int(parts[1])
            symbols, durations = zip(*(p.split("=", 1) for p in parts[2:]))
            durations = tuple(int(d) for d in durations)
        except ValueError:
            raise ValidationError(f"line {lineno}: malformed group entry {raw!r}") from None
        groups.append(PlanGroup(note_index, tuple(symbols), durations))
    if not groups:
        raise ValidationError("duration plan file has no groups")
    return DurationPlan(tuple(groups))


def plan_from_table(score: Score, table: DurationTable, inventory: PhonemeInventory) -> DurationPlan:
    """Shift, look up raw means, and adjust every group of the score."""
    table.check_covers(inventory)
    groups = shift_onset_consonants(score, inventory)
    plan_groups = []
    for group in groups:
        raw = tuple(table.means[p] for p in group.phonemes)
        group = replace(group, raw_durations=raw)
        try:
            adjusted = adjust_durations(group.d_n, raw)
        except InsufficientFrames as exc:
            raise InsufficientFrames(
                f"note {group.note_index}: {exc}", group.note_index) from None
        plan_groups.append(PlanGroup(group.note_index, group.phonemes, tuple(adjusted)))
    return DurationPlan(tuple(plan_groups))
