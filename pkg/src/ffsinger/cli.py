"""Command-line entry points: align, train, synth, eval, ablate.

Configuration is a UTF-8 key=value file with a documented key set; unknown
keys are a hard error so typos cannot silently fall back to defaults. Exit
codes are stable: 0 success, 2 user/input error, 3 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .conditioning import F0CoderConfig, F0Track, LengthMismatch
from .decoder import DecoderConfig
from .duration import (
    DurationTable,
    InsufficientFrames,
    adjust_durations,
    consonant_scale,
    parse_duration_table,
    parse_plan,
    plan_from_table,
    shift_onset_consonants,
)
from .encoder import EncoderConfig, UnknownPhoneme
from .featureio import FeatureFileError, read_features, write_features
from .model import ModelConfig, SingingModel
from .numerics import NonFiniteValue
from .score import (
    PhonemeInventory,
    ScoreParseError,
    ValidationError,
    load_score_file,
    parse_inventory,
    validate_against_inventory,
)
from .training import (
    CheckpointError,
    NonFiniteGradient,
    NonFiniteLoss,
    Phrase,
    TrainConfig,
    ablation_report,
    default_inventory,
    default_table,
    evaluate,
    generate_corpus,
    load_checkpoint,
    run_ablation,
    save_checkpoint,
    train,
    use_polyak,
)

__all__ = ["main", "ConfigError", "RunConfig", "EXIT_OK", "EXIT_USAGE", "EXIT_RUNTIME"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    """Unknown key, malformed line, or bad value in a run config."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (caster, default); paths default to "" meaning the packaged file
_CONFIG_KEYS: dict[str, tuple] = {
    # encoder
    "embed_dim": (int, 256),
    "enc_channels": (int, 64),
    "enc_kernel": (int, 3),
    "enc_blocks": (int, 1),
    # decoder
    "d_model": (int, 256),
    "num_layers": (int, 6),
    "kernel": (int, 3),
    "r": (int, 2),
    "out_dim": (int, 64),
    "dropout": (float, 0.1),
    "sigma_init": (float, 30.0),
    "self_attention": (_parse_bool, True),
    # F0 coder
    "f_min": (float, 80.0),
    "f_max": (float, 800.0),
    "k_f0": (int, 4),
    # optimization
    "updates": (int, 2000),
    "batch_size": (int, 8),
    "base_lr": (float, 1e-3),
    "warmup": (int, 4000),
    "seed": (int, 0),
    "alignment": (str, "gt"),
    "val_count": (int, 0),
    "val_every": (int, 200),
    # data
    "corpus_seed": (int, 0),
    "corpus_phrases": (int, 16),
    "manifest": (str, ""),
    "inventory": (str, ""),
    "table": (str, ""),
    # outputs
    "out_dir": (str, "."),
}


class RunConfig:
    """Validated key=value configuration with typed accessors."""

    def __init__(self, values: dict | None = None):
        self.values = {k: default for k, (_, default) in _CONFIG_KEYS.items()}
        for key, value in (values or {}).items():
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            self.values[key] = value

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def parse(cls, text: str, base_dir: str = ".") -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            caster = _CONFIG_KEYS[key][0]
            try:
                values[key] = caster(val)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        cfg = cls(values)
        cfg.base_dir = base_dir
        return cfg

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read(), base_dir=os.path.dirname(path) or ".")

    def _resolve(self, key: str) -> str:
        path = self.values[key]
        if not path:
            return ""
        base = getattr(self, "base_dir", ".")
        return path if os.path.isabs(path) else os.path.join(base, path)

    def model_config(self) -> ModelConfig:
        v = self.values
        try:
            return ModelConfig(
                encoder=EncoderConfig(embed_dim=v["embed_dim"], glu_channels=v["enc_channels"],
                                      kernel=v["enc_kernel"], num_blocks=v["enc_blocks"],
                                      dropout_p=v["dropout"]),
                decoder=DecoderConfig(d_model=v["d_model"], num_layers=v["num_layers"],
                                      kernel=v["kernel"], r=v["r"], out_dim=v["out_dim"],
                                      dropout_p=v["dropout"], sigma_init=v["sigma_init"],
                                      self_attention=v["self_attention"],
                                      enc_channels=v["enc_channels"], k_f0=v["k_f0"]),
                f0_coder=F0CoderConfig(f_min=v["f_min"], f_max=v["f_max"], k=v["k_f0"]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self, seed_override: int | None = None) -> TrainConfig:
        v = self.values
        try:
            return TrainConfig(updates=v["updates"], batch_size=v["batch_size"],
                               base_lr=v["base_lr"], warmup=v["warmup"],
                               seed=v["seed"] if seed_override is None else seed_override,
                               alignment=v["alignment"], val_count=v["val_count"],
                               val_every=v["val_every"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def inventory(self) -> PhonemeInventory:
        path = self._resolve("inventory")
        if not path:
            return default_inventory()
        with open(path, "rb") as fh:
            return parse_inventory(fh.read())

    def table(self) -> DurationTable:
        path = self._resolve("table")
        if not path:
            return default_table()
        with open(path, "rb") as fh:
            return parse_duration_table(fh.read())


def _load_manifest(manifest_path: str) -> list[Phrase]:
    """Phrase list file: `<score> <f0> <target> [<durations>]` per line,
    paths relative to the manifest."""
    base = os.path.dirname(manifest_path) or "."
    phrases = []
    with open(manifest_path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ConfigError(
                f"{manifest_path}:{lineno}: expected `<score> <f0> <target> [<durations>]`")
        score, inv = load_score_file(os.path.join(base, parts[0]))
        f0_values, _ = read_features(os.path.join(base, parts[1]))
        target, _ = read_features(os.path.join(base, parts[2]))
        if len(parts) == 4:
            with open(os.path.join(base, parts[3]), "r", encoding="utf-8") as fh:
                gt_plan = parse_plan(fh.read())
        else:
            gt_plan = plan_from_table(score, default_table(), inv)
        name = os.path.splitext(os.path.basename(parts[0]))[0]
        phrases.append(Phrase(name, score, F0Track(f0_values[:, 0]), target, gt_plan))
    if not phrases:
        raise ConfigError(f"{manifest_path}: empty phrase list")
    return phrases


def _get_phrases(cfg: RunConfig):
    manifest = cfg._resolve("manifest")
    if manifest:
        return _load_manifest(manifest)
    corpus = generate_corpus(cfg["corpus_seed"], cfg["corpus_phrases"],
                             cfg.inventory(), cfg.table())
    return list(corpus.phrases)


def _write_metrics_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,lr,train_l1,val_l1\n")
        for row in rows:
            val = row.get("val_l1")
            fh.write(f"{row['step']},{row['lr']:.10g},{row['train_l1']:.10g},"
                     f"{'' if val is None else format(val, '.10g')}\n")


# --------------------------------------------------------------------------
# commands

def cmd_align(args) -> int:
    score, inventory = load_score_file(args.score)
    if args.table:
        with open(args.table, "rb") as fh:
            table = parse_duration_table(fh.read())
    else:
        table = default_table()
    table.check_covers(inventory)
    groups = shift_onset_consonants(score, inventory)
    print(f"score {args.score}: total_frames={score.total_frames} groups={len(groups)}")
    for i, g in enumerate(groups):
        raw = [table.means[p] for p in g.phonemes]
        r_c = consonant_scale(g.d_n, raw)
        adjusted = adjust_durations(g.d_n, raw)
        note = "rest/gap" if g.note_index < 0 else f"note {g.note_index}"
        print(f"group {i}: {note} start={g.start_frame} frames={g.d_n} "
              f"phonemes={'+'.join(g.phonemes)} "
              f"raw=[{','.join(format(v, 'g') for v in raw)}] "
              f"r_c={r_c:g} adjusted=[{','.join(map(str, adjusted))}]")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    inventory = cfg.inventory()
    table = cfg.table()
    phrases = _get_phrases(cfg)
    seed = args.seed if args.seed is not None else cfg["seed"]
    model = SingingModel(inventory, cfg.model_config(), seed=seed)
    out_dir = cfg._resolve("out_dir") or "."
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "checkpoint.ffck")
    try:
        result = train(phrases, model, cfg.train_config(seed_override=seed), table)
    except NonFiniteLoss as exc:
        if exc.checkpoint is not None:
            with open(ckpt_path, "wb") as fh:
                fh.write(exc.checkpoint)
            print(f"aborted: {exc} (last good checkpoint at {ckpt_path})", file=sys.stderr)
        raise
    save_checkpoint(ckpt_path, result.model, result.shadow, table)
    _write_metrics_csv(os.path.join(out_dir, "metrics.csv"), result.metrics)
    final = "n/a" if result.final_train_l1 is None else f"{result.final_train_l1:.6f}"
    print(f"trained {len(result.metrics)} updates, final train L1 {final}, "
          f"checkpoint {ckpt_path}")
    if result.final_val_l1 is not None:
        print(f"validation L1 (averaged weights): {result.final_val_l1:.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    model, shadow, table = load_checkpoint(args.checkpoint)
    if table is None:
        table = default_table()
    score, score_inv = load_score_file(args.score)
    validate_against_inventory(score, model.inventory)
    f0_values, hop_ms = read_features(args.f0)
    if f0_values.shape[1] != 1:
        raise FeatureFileError(f"{args.f0}: F0 files carry one value per frame, "
                               f"got dim {f0_values.shape[1]}")
    f0 = F0Track(f0_values[:, 0])
    if len(f0) != score.total_frames:
        raise ValidationError(f"F0 has {len(f0)} frames, score spans {score.total_frames}")
    if args.gt_durations:
        with open(args.gt_durations, "r", encoding="utf-8") as fh:
            plan = parse_plan(fh.read())
        if plan.total_frames != score.total_frames:
            raise ValidationError(
                f"duration sidecar covers {plan.total_frames} frames, "
                f"score spans {score.total_frames}")
    else:
        plan = plan_from_table(score, table, model.inventory)
    with use_polyak(model.params(), shadow):
        frames = model.synthesize(score, table, f0, plan=plan)
    write_features(args.out, frames, hop_ms=score.hop_ms)
    print(f"wrote {frames.shape[0]} frames x {frames.shape[1]} to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, shadow, table = load_checkpoint(args.checkpoint)
    if table is None:
        table = default_table()
    phrases = _load_manifest(args.manifest)
    alignment = "gt" if args.gt_durations else "table"
    per_phrase = evaluate(model, phrases, table, alignment, shadow)
    lines = ["phrase,l1"]
    for phrase, l1 in zip(phrases, per_phrase):
        lines.append(f"{phrase.name},{l1:.6f}")
    lines.append(f"mean,{per_phrase.mean():.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = RunConfig.load(args.config)
    inventory = cfg.inventory()
    table = cfg.table()
    phrases = _get_phrases(cfg)
    seed = args.seed if args.seed is not None else cfg["seed"]
    results = run_ablation(phrases, cfg.model_config(),
                           cfg.train_config(seed_override=seed), inventory, table)
    report = ablation_report(results)
    out_dir = cfg._resolve("out_dir") or "."
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "ablation.csv")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report)
    print(report, end="")
    gt, avg = results["gt_durations"]["val_l1"], results["avg_durations"]["val_l1"]
    noattn = results["no_self_attention"]["val_l1"]
    if None not in (gt, avg, noattn):
        ordered = gt <= avg <= noattn
        print(f"# direction gt<=avg<=no_attention: "
              f"{'observed' if ordered else 'not observed'} "
              f"({gt:.4f} / {avg:.4f} / {noattn:.4f})")
    print(f"# report written to {report_path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing and dispatch

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ffsinger",
        description="Feed-forward singing synthesizer: duration alignment, "
                    "training, and feature-file synthesis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="dump duration-model groups for a score")
    p.add_argument("--score", required=True, help="score file")
    p.add_argument("--table", default=None, help="duration table (default: packaged)")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True, help="key=value run config file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="synthesize feature frames for a score")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--score", required=True)
    p.add_argument("--f0", required=True, help="F0 feature file (dim 1, Hz)")
    p.add_argument("--out", required=True, help="output feature file")
    p.add_argument("--gt-durations", default=None,
                   help="duration-plan sidecar overriding the table alignment")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score a checkpoint against a phrase list")
    p.add_argument("manifest", help="phrase list: `<score> <f0> <target> [<durations>]`")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="also write the CSV here")
    p.add_argument("--gt-durations", action="store_true",
                   help="align with each phrase's duration sidecar instead of the table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare the four model variants")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_ablate)

    return parser


_USAGE_ERRORS = (ConfigError, ScoreParseError, ValidationError, InsufficientFrames,
                 FeatureFileError, CheckpointError, UnknownPhoneme, LengthMismatch,
                 OSError)
_RUNTIME_ERRORS = (NonFiniteLoss, NonFiniteGradient, NonFiniteValue)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
