"""Optimization recipe and the synthetic corpus that stands in for real
singing data.

The objective is a plain mean-absolute-error over feature frames. Batches
are formed by summing per-phrase absolute errors and dividing by the total
element count, which is arithmetically identical to padding the batch and
masking the pad frames. Adam (b1=0.9, b2=0.98, eps=1e-9) runs under a
warm-up schedule normalized so the learning rate peaks at base_lr exactly
at the warm-up step, and a Polyak shadow of every parameter (decay 0.995)
is used for validation and synthesis.

The corpus generator emits random valid scores, piecewise-constant F0 with
a slow random walk of jitter, and target features built from per-phoneme
templates plus a scaled normalized-log-F0 offset, smoothed with a 5-frame
moving average so phoneme boundaries blur the way coarticulation would.
Ground-truth per-phoneme durations are kept alongside each phrase, so
models can be trained against the true alignment or the table-based one.
"""

from __future__ import annotations

import hashlib
import json
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .conditioning import F0CoderConfig, F0Track
from .decoder import DecoderConfig
from .duration import (
    DurationPlan,
    DurationTable,
    PlanGroup,
    adjust_durations,
    parse_duration_table,
    plan_from_table,
    shift_onset_consonants,
)
from .encoder import EncoderConfig
from .model import ModelConfig, SingingModel
from .numerics import (
    Rng,
    STREAM_BATCH,
    STREAM_DATA,
    STREAM_DROPOUT,
    ShapeMismatch,
    Tensor,
    abs_,
    mean_,
    sub,
    sum_,
)
from .score import Note, PhonemeInventory, REST_PITCH, Score, parse_inventory

__all__ = [
    "InvalidStep",
    "NonFiniteGradient",
    "NonFiniteLoss",
    "CheckpointError",
    "MissingVariant",
    "ABLATION_VARIANTS",
    "l1_loss",
    "noam_lr",
    "OptimizerState",
    "adam_step",
    "PolyakShadow",
    "polyak_update",
    "use_polyak",
    "default_inventory",
    "default_table",
    "CorpusConfig",
    "Phrase",
    "SyntheticCorpus",
    "generate_corpus",
    "render_targets",
    "moving_average",
    "midi_to_hz",
    "TrainConfig",
    "TrainResult",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
    "run_ablation",
    "ablation_report",
    "export_phrases",
]


class InvalidStep(ValueError):
    """Schedule queried before the first optimizer step."""


class NonFiniteGradient(ArithmeticError):
    """A parameter gradient contains NaN or infinity."""


class NonFiniteLoss(ArithmeticError):
    """Training loss went non-finite; carries the last good state."""

    def __init__(self, message: str, step: int, checkpoint: bytes | None = None):
        self.step = step
        self.checkpoint = checkpoint
        super().__init__(message)


class CheckpointError(ValueError):
    """Corrupt, truncated, or incompatible checkpoint file."""


class MissingVariant(KeyError):
    """Ablation report requested without all required variants."""


# --------------------------------------------------------------------------
# objective and schedule

def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error over all elements; scalar graph output."""
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=np.float64))
    if pred.data.shape != target.data.shape:
        raise ShapeMismatch(f"loss shapes differ: {pred.data.shape} vs {target.data.shape}")
    return mean_(abs_(sub(pred, target)))


def noam_lr(step: int, base_lr: float = 1e-3, warmup: int = 4000) -> float:
    """Linear warm-up to base_lr at `warmup`, then inverse-sqrt decay:
    base_lr * min(step/warmup, sqrt(warmup/step))."""
    if step < 1:
        raise InvalidStep(f"schedule starts at step 1, got {step}")
    return base_lr * min(step / warmup, np.sqrt(warmup / step))


# --------------------------------------------------------------------------
# Adam and Polyak averaging

@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: dict[str, int] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], opt: OptimizerState, lr: float) -> None:
    """Bias-corrected Adam update in place. Parameters whose gradient is
    absent or identically zero are left untouched (their moments and step
    counts do not advance), so a zero-gradient step is the identity."""
    for name, p in params.items():
        g = p.grad
        if g is None or not g.any():
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient of {name} is not finite")
        m = opt.m.setdefault(name, np.zeros_like(p.data))
        v = opt.v.setdefault(name, np.zeros_like(p.data))
        t = opt.t.get(name, 0) + 1
        opt.t[name] = t
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        m_hat = m / (1.0 - opt.beta1 ** t)
        v_hat = v / (1.0 - opt.beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + opt.eps)


@dataclass
class PolyakShadow:
    """Exponential moving average of every parameter, for eval/synthesis."""

    decay: float = 0.995
    values: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def of(cls, params: dict[str, Tensor], decay: float = 0.995) -> "PolyakShadow":
        return cls(decay, {k: p.data.copy() for k, p in params.items()})


def polyak_update(shadow: PolyakShadow, params: dict[str, Tensor]) -> None:
    d = shadow.decay
    for name, p in params.items():
        s = shadow.values[name]
        s *= d
        s += (1.0 - d) * p.data


@contextmanager
def use_polyak(params: dict[str, Tensor], shadow: PolyakShadow | None):
    """Temporarily swap averaged weights into the model."""
    if shadow is None:
        yield
        return
    saved = {k: p.data for k, p in params.items()}
    for k, p in params.items():
        p.data = shadow.values[k].copy()
    try:
        yield
    finally:
        for k, p in params.items():
            p.data = saved[k]


# --------------------------------------------------------------------------
# packaged defaults

def default_inventory() -> PhonemeInventory:
    text = resources.files("ffsinger.data").joinpath("inventory.txt").read_text("utf-8")
    return parse_inventory(text)


def default_table() -> DurationTable:
    text = resources.files("ffsinger.data").joinpath("duration_table.txt").read_text("utf-8")
    return parse_duration_table(text)


# --------------------------------------------------------------------------
# synthetic corpus

@dataclass(frozen=True)
class CorpusConfig:
    min_notes: int = 2
    max_notes: int = 8
    min_note_frames: int = 20
    max_note_frames: int = 80
    rest_prob: float = 0.15
    gap_prob: float = 0.2
    out_dim: int = 64
    f0_jitter: float = 0.002
    f0_level: float = 0.2
    smooth_frames: int = 5
    pitch_lo: int = 48
    pitch_hi: int = 72
    coder: F0CoderConfig = field(default_factory=F0CoderConfig)


@dataclass(frozen=True)
class Phrase:
    name: str
    score: Score
    f0: F0Track
    target: np.ndarray
    gt_plan: DurationPlan


@dataclass(frozen=True)
class SyntheticCorpus:
    seed: int
    phrases: tuple[Phrase, ...]

    def __len__(self) -> int:
        return len(self.phrases)


def midi_to_hz(pitch: int) -> float:
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


def moving_average(x: np.ndarray, win: int) -> np.ndarray:
    """Centered moving average with shrinking windows at the edges, so a
    constant signal stays exactly constant."""
    t = x.shape[0]
    c = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    half = win // 2
    lo = np.maximum(0, np.arange(t) - half)
    hi = np.minimum(t, np.arange(t) + half + 1)
    return (c[hi] - c[lo]) / (hi - lo)[:, None]


def _random_syllable(rng: Rng, vowels: list[str], consonants: list[str],
                     allow_onset: bool) -> tuple[str, ...]:
    n_onset = int(rng.integers(0, 3)) if allow_onset else 0
    onset = [consonants[int(rng.integers(0, len(consonants)))] for _ in range(n_onset)]
    vowel = vowels[int(rng.integers(0, len(vowels)))]
    coda = [consonants[int(rng.integers(0, len(consonants)))]] if rng.random() < 0.4 else []
    return tuple(onset + [vowel] + coda)


def _random_score(rng: Rng, inventory: PhonemeInventory, cfg: CorpusConfig) -> Score:
    vowels = [s for s in inventory.symbols if inventory.is_vowel(s)]
    consonants = [s for s in inventory.symbols if inventory.is_consonant(s)]
    sil = inventory.silence_symbol
    notes = []
    cursor = int(rng.integers(5, 16))  # leading silence receives shifted onsets
    n_notes = int(rng.integers(cfg.min_notes, cfg.max_notes + 1))
    for i in range(n_notes):
        duration = int(rng.integers(cfg.min_note_frames, cfg.max_note_frames + 1))
        if rng.random() < cfg.rest_prob:
            notes.append(Note(cursor, duration, REST_PITCH, (sil,)))
        else:
            pitch = int(rng.integers(cfg.pitch_lo, cfg.pitch_hi + 1))
            notes.append(Note(cursor, duration, pitch, _random_syllable(
                rng, vowels, consonants, allow_onset=True)))
        cursor += duration
        # gaps only between notes: the score text format recomputes the
        # total span from the last note, so a trailing gap would not
        # survive a serialize/parse round trip
        if i < n_notes - 1 and rng.random() < cfg.gap_prob:
            cursor += int(rng.integers(5, 21))
    return Score(tuple(notes), cursor)


def _ground_truth_plan(rng: Rng, score: Score, inventory: PhonemeInventory,
                       table: DurationTable) -> DurationPlan:
    """The "true" alignment: table means jittered per phoneme, then fitted
    to each group the same way the deterministic planner fits them."""
    groups = []
    for g in shift_onset_consonants(score, inventory):
        raw = [table.means[p] * float(rng.uniform(0.6, 1.6)) for p in g.phonemes]
        groups.append(PlanGroup(g.note_index, g.phonemes,
                                tuple(adjust_durations(g.d_n, raw))))
    return DurationPlan(tuple(groups))


def _render_f0(rng: Rng, score: Score, cfg: CorpusConfig) -> F0Track:
    values = np.zeros(score.total_frames)
    for note in score.notes:
        if note.is_rest:
            continue
        base = midi_to_hz(note.pitch)
        walk = np.clip(np.cumsum(rng.normal(note.duration_frames, std=cfg.f0_jitter)),
                       -0.03, 0.03)
        values[note.onset_frames:note.end_frames] = np.clip(
            base * (1.0 + walk), cfg.coder.f_min, cfg.coder.f_max)
    return F0Track(values)


def render_targets(plan: DurationPlan, f0: F0Track, templates: dict[str, np.ndarray],
                   cfg: CorpusConfig) -> np.ndarray:
    """Per-frame template of the aligned phoneme, plus a normalized-log-F0
    offset, smoothed over phoneme boundaries."""
    symbols = plan.flat_symbols()
    rows = np.repeat(np.stack([templates[s] for s in symbols]),
                     plan.flat_durations(), axis=0)
    log_span = np.log(cfg.coder.f_max) - np.log(cfg.coder.f_min)
    voiced = f0.values > 0
    nlf = np.zeros(len(f0))
    np.log(f0.values, out=nlf, where=voiced)
    nlf[voiced] = np.clip((nlf[voiced] - np.log(cfg.coder.f_min)) / log_span, 0.0, 1.0)
    return moving_average(rows + cfg.f0_level * nlf[:, None], cfg.smooth_frames)


def generate_corpus(seed: int, num_phrases: int, inventory: PhonemeInventory | None = None,
                    table: DurationTable | None = None,
                    cfg: CorpusConfig = CorpusConfig()) -> SyntheticCorpus:
    """Deterministic synthetic phrases; same seed, same bytes."""
    inventory = inventory or default_inventory()
    table = table or default_table()
    rng = Rng(seed, STREAM_DATA)
    templates = {s: rng.normal(cfg.out_dim) for s in inventory.symbols}
    phrases = []
    for i in range(num_phrases):
        score = _random_score(rng, inventory, cfg)
        gt_plan = _ground_truth_plan(rng, score, inventory, table)
        f0 = _render_f0(rng, score, cfg)
        target = render_targets(gt_plan, f0, templates, cfg)
        phrases.append(Phrase(f"phrase{i:03d}", score, f0, target, gt_plan))
    return SyntheticCorpus(seed, tuple(phrases))


# --------------------------------------------------------------------------
# training loop

@dataclass(frozen=True)
class TrainConfig:
    updates: int = 2000
    batch_size: int = 8
    base_lr: float = 1e-3
    warmup: int = 4000
    seed: int = 0
    alignment: str = "gt"  # or "table"
    val_count: int = 0
    val_every: int = 200

    def __post_init__(self):
        if self.alignment not in ("gt", "table"):
            raise ValueError(f"alignment must be 'gt' or 'table', got {self.alignment!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.updates < 0:
            raise ValueError("updates must be >= 0")


@dataclass
class TrainResult:
    model: SingingModel
    shadow: PolyakShadow
    metrics: list[dict]
    final_train_l1: float | None
    final_val_l1: float | None


def _phrase_plans(phrases, model: SingingModel, table: DurationTable, alignment: str):
    if alignment == "gt":
        return [p.gt_plan for p in phrases]
    return [plan_from_table(p.score, table, model.inventory) for p in phrases]


def evaluate(model: SingingModel, phrases, table: DurationTable, alignment: str = "table",
             shadow: PolyakShadow | None = None) -> np.ndarray:
    """Eval-mode per-phrase mean L1, with Polyak weights when given."""
    plans = _phrase_plans(phrases, model, table, alignment)
    out = np.empty(len(plans))
    with use_polyak(model.params(), shadow):
        for i, (phrase, plan) in enumerate(zip(phrases, plans)):
            pred = model.forward(plan, phrase.f0).data
            out[i] = float(np.abs(pred - phrase.target).mean())
    return out


def train(phrases, model: SingingModel, cfg: TrainConfig,
          table: DurationTable | None = None) -> TrainResult:
    """Run the optimization loop over a phrase list.

    The last cfg.val_count phrases are held out and scored with Polyak
    weights every cfg.val_every updates; the rest are sampled uniformly
    into batches. Raises NonFiniteLoss carrying the last finite state."""
    if not phrases:
        raise ValueError("cannot train on an empty phrase list")
    table = table or default_table()
    if cfg.val_count >= len(phrases):
        raise ValueError("val_count must leave at least one training phrase")
    train_phrases = phrases[:len(phrases) - cfg.val_count]
    val_phrases = phrases[len(phrases) - cfg.val_count:]

    params = model.params()
    plans = _phrase_plans(train_phrases, model, table, cfg.alignment)
    opt = OptimizerState()
    shadow = PolyakShadow.of(params)
    batch_rng = Rng(cfg.seed, STREAM_BATCH)
    drop_rng = Rng(cfg.seed, STREAM_DROPOUT)
    metrics: list[dict] = []
    val_l1 = None

    for step in range(1, cfg.updates + 1):
        lr = noam_lr(step, cfg.base_lr, cfg.warmup)
        batch = batch_rng.integers(0, len(train_phrases), cfg.batch_size)
        total = sum(train_phrases[i].target.size for i in batch)
        model.zero_grads()
        loss_sum = 0.0
        for i in batch:
            phrase = train_phrases[i]
            pred = model.forward(plans[i], phrase.f0, mode="train", rng=drop_rng)
            err = sum_(abs_(sub(pred, Tensor(phrase.target))))
            if not np.isfinite(err.data):
                raise NonFiniteLoss(
                    f"loss went non-finite at update {step} on {phrase.name}",
                    step, save_checkpoint_bytes(model, shadow, table))
            # seeding each phrase graph with 1/total makes the batch exactly
            # a padded-and-masked mean over all frames
            err.backward(seed=1.0 / total)
            loss_sum += float(err.data)
        try:
            adam_step(params, opt, lr)
        except NonFiniteGradient as exc:
            raise NonFiniteLoss(str(exc), step,
                                save_checkpoint_bytes(model, shadow, table)) from exc
        polyak_update(shadow, params)

        row = {"step": step, "lr": lr, "train_l1": loss_sum / total}
        if val_phrases and cfg.val_every and step % cfg.val_every == 0:
            val_l1 = float(evaluate(model, val_phrases, table, cfg.alignment, shadow).mean())
            row["val_l1"] = val_l1
        metrics.append(row)

    final_train = metrics[-1]["train_l1"] if metrics else None
    if val_phrases:
        val_l1 = float(evaluate(model, val_phrases, table, cfg.alignment, shadow).mean())
    return TrainResult(model, shadow, metrics, final_train, val_l1)


# --------------------------------------------------------------------------
# checkpoints

_CKPT_MAGIC = b"FFCK"
_CKPT_VERSION = 1


def _model_meta(model: SingingModel, table: DurationTable | None) -> dict:
    cfg = model.cfg
    return {
        "encoder": vars(cfg.encoder).copy(),
        "decoder": vars(cfg.decoder).copy(),
        "f0_coder": vars(cfg.f0_coder).copy(),
        "seed": model.seed,
        "inventory": model.inventory.to_text(),
        "duration_table": table.to_text() if table else None,
        "params": [[name, list(p.data.shape)] for name, p in model.params().items()],
    }


def save_checkpoint_bytes(model: SingingModel, shadow: PolyakShadow,
                          table: DurationTable | None = None) -> bytes:
    """Self-contained container: config + inventory + table JSON manifest,
    raw then averaged parameters as little-endian float64, sha256 trailer."""
    meta = json.dumps(_model_meta(model, table), sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += _CKPT_MAGIC
    blob += struct.pack("<II", _CKPT_VERSION, len(meta))
    blob += meta
    params = model.params()
    for name in params:
        blob += params[name].data.astype("<f8").tobytes(order="C")
    for name in params:
        blob += shadow.values[name].astype("<f8").tobytes(order="C")
    blob += hashlib.sha256(bytes(blob)).digest()
    return bytes(blob)


def save_checkpoint(path, model: SingingModel, shadow: PolyakShadow,
                    table: DurationTable | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(save_checkpoint_bytes(model, shadow, table))


def load_checkpoint_bytes(blob: bytes) -> tuple[SingingModel, PolyakShadow, DurationTable | None]:
    if len(blob) < 44 or blob[:4] != _CKPT_MAGIC:
        raise CheckpointError("not a checkpoint (bad magic or truncated)")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch, file corrupt")
    version, meta_len = struct.unpack_from("<II", blob, 4)
    if version != _CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(blob[12:12 + meta_len].decode("utf-8"))
        cfg = ModelConfig(
            encoder=EncoderConfig(**meta["encoder"]),
            decoder=DecoderConfig(**meta["decoder"]),
            f0_coder=F0CoderConfig(**meta["f0_coder"]),
        )
        inventory = parse_inventory(meta["inventory"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad checkpoint metadata: {exc}") from exc

    model = SingingModel(inventory, cfg, meta["seed"])
    params = model.params()
    manifest = meta["params"]
    if [m[0] for m in manifest] != list(params):
        raise CheckpointError("parameter manifest does not match the model")
    offset = 12 + meta_len
    arrays = []
    for _pass in range(2):
        for name, shape in manifest:
            n = int(np.prod(shape)) if shape else 1
            end = offset + 8 * n
            if end > len(body):
                raise CheckpointError("checkpoint payload truncated")
            arrays.append(np.frombuffer(blob[offset:end], dtype="<f8")
                          .astype(np.float64).reshape(shape))
            offset = end
    if offset != len(body):
        raise CheckpointError("trailing bytes after parameter payload")

    names = list(params)
    for name, arr in zip(names, arrays[:len(names)]):
        if params[name].data.shape != arr.shape:
            raise CheckpointError(f"shape mismatch for {name}")
        params[name].data = arr.copy()
    shadow = PolyakShadow(values={name: arr.copy()
                                  for name, arr in zip(names, arrays[len(names):])})
    table = parse_duration_table(meta["duration_table"]) if meta.get("duration_table") else None
    return model, shadow, table


def load_checkpoint(path) -> tuple[SingingModel, PolyakShadow, DurationTable | None]:
    with open(path, "rb") as fh:
        return load_checkpoint_bytes(fh.read())


# --------------------------------------------------------------------------
# ablation analogue

# variant -> (self-attention on, train/eval alignment, model/run seed offset)
ABLATION_VARIANTS: dict[str, tuple[bool, str, int]] = {
    "full": (True, "table", 0),
    "no_self_attention": (False, "table", 1),
    "gt_durations": (True, "gt", 2),
    "avg_durations": (True, "table", 3),
}


def run_ablation(phrases, base_cfg: ModelConfig, train_cfg: TrainConfig,
                 inventory: PhonemeInventory | None = None,
                 table: DurationTable | None = None) -> dict[str, dict]:
    """Train the four comparison variants and collect validation L1.

    `full` and `avg_durations` share a configuration and differ only by
    seed, bracketing seed variance around the headline number; the other
    two toggle self-attention and the alignment source."""
    inventory = inventory or default_inventory()
    table = table or default_table()
    results = {}
    for name, (attention, alignment, offset) in ABLATION_VARIANTS.items():
        dec = vars(base_cfg.decoder).copy()
        dec["self_attention"] = attention
        cfg = ModelConfig(encoder=base_cfg.encoder, decoder=DecoderConfig(**dec),
                          f0_coder=base_cfg.f0_coder)
        run = TrainConfig(**{**vars(train_cfg),
                             "alignment": alignment, "seed": train_cfg.seed + offset})
        model = SingingModel(inventory, cfg, seed=run.seed)
        result = train(list(phrases), model, run, table)
        results[name] = {
            "train_l1": result.final_train_l1,
            "val_l1": result.final_val_l1,
        }
    return results


def ablation_report(results: dict[str, dict]) -> str:
    """CSV rows in canonical variant order; every variant must be present."""
    missing = [v for v in ABLATION_VARIANTS if v not in results]
    if missing:
        raise MissingVariant(", ".join(missing))
    lines = ["variant,train_l1,val_l1"]
    for name in ABLATION_VARIANTS:
        row = results[name]
        val = "" if row.get("val_l1") is None else f"{row['val_l1']:.6f}"
        lines.append(f"{name},{row['train_l1']:.6f},{val}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# phrase export (for cmd_eval and cmd_synth fixtures)

def export_phrases(phrases, out_dir, inventory: PhonemeInventory) -> str:
    """Write each phrase's score, F0, target, and ground-truth durations
    into a directory plus a manifest listing them; returns manifest path."""
    import os

    from .duration import serialize_plan
    from .featureio import write_features
    from .score import serialize_score

    os.makedirs(out_dir, exist_ok=True)
    inv_name = "inventory.txt"
    with open(os.path.join(out_dir, inv_name), "w", encoding="utf-8") as fh:
        fh.write(inventory.to_text())
    manifest_lines = []
    for p in phrases:
        score_name = f"{p.name}.score"
        f0_name = f"{p.name}.f0.ffsv"
        target_name = f"{p.name}.target.ffsv"
        dur_name = f"{p.name}.durations.txt"
        with open(os.path.join(out_dir, score_name), "w", encoding="utf-8") as fh:
            fh.write(serialize_score(p.score, inv_name))
        write_features(os.path.join(out_dir, f0_name), p.f0.values)
        write_features(os.path.join(out_dir, target_name), p.target)
        with open(os.path.join(out_dir, dur_name), "w", encoding="utf-8") as fh:
            fh.write(serialize_plan(p.gt_plan))
        manifest_lines.append(f"{score_name} {f0_name} {target_name} {dur_name}")
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest_lines) + "\n")
    return manifest
