"""Musical-score data model, phoneme inventory, and the score file parser.

Scores are line-oriented UTF-8: a `version 1` header, an `inventory <path>`
line naming the phoneme inventory file, then one `note` line per note with
frame-quantized onset/duration (10 ms hop), a MIDI pitch or `R` for rests,
and a `+`-joined phoneme group. `#` starts a comment.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

__all__ = [
    "PhonemeInventory",
    "Note",
    "Score",
    "ScoreParseError",
    "ValidationError",
    "REST_PITCH",
    "HOP_MS",
    "parse_inventory",
    "parse_score",
    "load_score_file",
    "serialize_score",
    "validate_against_inventory",
]

HOP_MS = 10
REST_PITCH = -1  # internal marker for the `R` pitch field

_CLASSES = ("vowel", "consonant", "silence")


class ScoreParseError(ValueError):
    """Malformed score or inventory text; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(ValueError):
    """Structurally parseable score that violates a semantic invariant."""

    def __init__(self, message: str, note_indices: tuple[int, ...] = (), line: int | None = None):
        self.note_indices = note_indices
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class PhonemeInventory:
    """Dense symbol table with a class (vowel/consonant/silence) per symbol."""

    symbols: tuple[str, ...]
    classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.symbols) != len(set(self.symbols)):
            raise ValidationError("duplicate phoneme symbols in inventory")
        for cls in self.classes:
            if cls not in _CLASSES:
                raise ValidationError(f"unknown phoneme class {cls!r}")
        silences = [s for s, c in zip(self.symbols, self.classes) if c == "silence"]
        if len(silences) != 1:
            raise ValidationError(f"inventory must designate exactly one silence symbol, found {len(silences)}")

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.symbols

    def id_of(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise KeyError(symbol) from None

    def class_of(self, symbol: str) -> str:
        return self.classes[self.id_of(symbol)]

    def is_vowel(self, symbol: str) -> bool:
        return self.class_of(symbol) == "vowel"

    def is_consonant(self, symbol: str) -> bool:
        return self.class_of(symbol) == "consonant"

    def is_silence(self, symbol: str) -> bool:
        return self.class_of(symbol) == "silence"

    @property
    def silence_symbol(self) -> str:
        return self.symbols[self.classes.index("silence")]

    def to_text(self) -> str:
        return "".join(f"{s} {c}\n" for s, c in zip(self.symbols, self.classes))


@dataclass(frozen=True)
class Note:
    """One score note: frame-quantized onset/duration, MIDI pitch (REST_PITCH
    for rests), and the note's full syllable as written."""

    onset_frames: int
    duration_frames: int
    pitch: int
    phonemes: tuple[str, ...]

    def __post_init__(self):
        if self.onset_frames < 0:
            raise ValidationError(f"note onset must be >= 0, got {self.onset_frames}")
        if self.duration_frames < 1:
            raise ValidationError(f"note duration must be >= 1, got {self.duration_frames}")
        if self.pitch != REST_PITCH and not 0 <= self.pitch <= 127:
            raise ValidationError(f"pitch must be MIDI 0-127 or rest, got {self.pitch}")
        if not self.phonemes:
            raise ValidationError("note needs at least one phoneme")

    @property
    def is_rest(self) -> bool:
        return self.pitch == REST_PITCH

    @property
    def end_frames(self) -> int:
        return self.onset_frames + self.duration_frames


@dataclass(frozen=True)
class Score:
    notes: tuple[Note, ...]
    total_frames: int
    hop_ms: int = HOP_MS

    def __post_init__(self):
        if self.total_frames < 1:
            raise ValidationError("score must span at least one frame")
        for note in self.notes:
            if note.end_frames > self.total_frames:
                raise ValidationError("note extends past total_frames")


def parse_inventory(text: str | bytes) -> PhonemeInventory:
    """Parse inventory lines of the form `<symbol> <vowel|consonant|silence>`."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    symbols, classes = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ScoreParseError(f"expected `<symbol> <class>`, got {raw!r}", lineno)
        symbol, cls = parts
        if cls not in _CLASSES:
            raise ScoreParseError(f"unknown phoneme class {cls!r}", lineno)
        symbols.append(symbol)
        classes.append(cls)
    if not symbols:
        raise ScoreParseError("inventory file defines no symbols")
    return PhonemeInventory(tuple(symbols), tuple(classes))


def _meaningful_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_score(text: bytes | str, base_dir: str | os.PathLike = ".") -> tuple[Score, PhonemeInventory]:
    """Parse and validate a score file. The inventory path named inside is
    resolved relative to base_dir."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")

    lines = _meaningful_lines(text)
    try:
        lineno, line = next(lines)
    except StopIteration:
        raise ScoreParseError("empty score file") from None
    if line != "version 1":
        raise ScoreParseError(f"expected `version 1` header, got {line!r}", lineno)

    try:
        lineno, line = next(lines)
    except StopIteration:
        raise ScoreParseError("missing `inventory <path>` line") from None
    parts = line.split(maxsplit=1)
    if len(parts) != 2 or parts[0] != "inventory":
        raise ScoreParseError(f"expected `inventory <path>`, got {line!r}", lineno)
    inv_path = os.path.join(os.fspath(base_dir), parts[1])
    try:
        with open(inv_path, "rb") as fh:
            inventory = parse_inventory(fh.read())
    except OSError as exc:
        raise ScoreParseError(f"cannot read inventory file {parts[1]!r}: {exc}", lineno) from exc

    notes: list[Note] = []
    note_lines: list[int] = []
    for lineno, line in lines:
        fields = line.split()
        if fields[0] != "note":
            raise ScoreParseError(f"expected a `note` line, got {line!r}", lineno)
        if len(fields) != 5:
            raise ScoreParseError("note needs `<onset> <duration> <pitch|R> <phonemes>`", lineno)
        try:
            onset = int(fields[1])
            duration = int(fields[2])
        except ValueError:
            raise ScoreParseError(f"onset/duration must be integer frame counts, got {line!r}", lineno) from None
        if fields[3] == "R":
            pitch = REST_PITCH
        else:
            try:
                pitch = int(fields[3])
            except ValueError:
                raise ScoreParseError(f"pitch must be a MIDI number or `R`, got {fields[3]!r}", lineno) from None
        phonemes = tuple(p for p in fields[4].split("+") if p)
        if not phonemes:
            raise ScoreParseError(f"empty phoneme group in {line!r}", lineno)
        try:
            notes.append(Note(onset, duration, pitch, phonemes))
        except ValidationError as exc:
            raise ValidationError(str(exc), (len(notes),), lineno) from None
        note_lines.append(lineno)

    if not notes:
        raise ScoreParseError("score contains no notes")

    for i in range(1, len(notes)):
        if notes[i].onset_frames < notes[i - 1].end_frames:
            raise ValidationError(
                f"note {i} overlaps or precedes note {i - 1}",
                (i,), note_lines[i])

    total_frames = max(n.end_frames for n in notes)
    score = Score(tuple(notes), total_frames)
    validate_against_inventory(score, inventory, note_lines)
    return score, inventory


def load_score_file(path: str | os.PathLike) -> tuple[Score, PhonemeInventory]:
    with open(path, "rb") as fh:
        text = fh.read()
    return parse_score(text, base_dir=os.path.dirname(os.fspath(path)) or ".")


def validate_against_inventory(score: Score, inventory: PhonemeInventory,
                               note_lines: list[int] | None = None) -> None:
    """Check every note against the inventory: all symbols known, non-rest
    notes carry a vowel, rests are a single silence phoneme. Raises one
    ValidationError listing every offending note index."""
    problems: list[str] = []
    offenders: list[int] = []
    for i, note in enumerate(score.notes):
        where = f"note {i}" + (f" (line {note_lines[i]})" if note_lines else "")
        unknown = [p for p in note.phonemes if p not in inventory]
        if unknown:
            problems.append(f"{where}: unknown phoneme symbol(s) {', '.join(map(repr, unknown))}")
            offenders.append(i)
            continue
        if note.is_rest:
            if len(note.phonemes) != 1 or not inventory.is_silence(note.phonemes[0]):
                problems.append(f"{where}: rest must carry exactly the silence phoneme")
                offenders.append(i)
        elif not any(inventory.is_vowel(p) for p in note.phonemes):
            problems.append(f"{where}: non-rest note has no vowel phoneme")
            offenders.append(i)
    if problems:
        raise ValidationError("; ".join(problems), tuple(offenders))


def serialize_score(score: Score, inventory_ref: str) -> str:
    """Canonical text form; parse(serialize(parse(x))) is a fixed point."""
    out = ["version 1", f"inventory {inventory_ref}"]
    for note in score.notes:
        pitch = "R" if note.is_rest else str(note.pitch)
        out.append(f"note {note.onset_frames} {note.duration_frames} {pitch} {'+'.join(note.phonemes)}")
    return "\n".join(out) + "\n"
