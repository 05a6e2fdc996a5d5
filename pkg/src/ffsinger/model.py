"""The full synthesizer: encoder + aligner + decoder behind one interface.

A phrase flows through as: phoneme symbols from the duration plan are
encoded to one hidden row each, the plan expands those rows to frame rate,
F0 and note-position codes are attached, and the decoder emits the acoustic
feature frames. Everything is deterministic given the seed; dropout only
fires in train mode with an explicit Rng.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditioning import F0CoderConfig, F0Track, build_conditioning
from .decoder import Decoder, DecoderConfig
from .duration import DurationPlan, DurationTable, plan_from_table
from .encoder import Encoder, EncoderConfig
from .numerics import Rng, STREAM_INIT, Tensor
from .score import PhonemeInventory, Score

__all__ = ["ModelConfig", "SingingModel"]


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    f0_coder: F0CoderConfig = field(default_factory=F0CoderConfig)

    def __post_init__(self):
        if self.decoder.enc_channels != self.encoder.glu_channels:
            raise ValueError("decoder enc_channels must equal encoder glu_channels")
        if self.decoder.k_f0 != self.f0_coder.k:
            raise ValueError("decoder k_f0 must equal the F0 coder dimension")

    @staticmethod
    def desk(**decoder_overrides) -> "ModelConfig":
        """Small CI-friendly model; full-scale constants stay the default."""
        dec = dict(d_model=64, num_layers=2, r=2, out_dim=64)
        dec.update(decoder_overrides)
        return ModelConfig(decoder=DecoderConfig(**dec))


class SingingModel:
    """Score-plus-F0 to acoustic feature frames."""

    def __init__(self, inventory: PhonemeInventory, cfg: ModelConfig = ModelConfig(),
                 seed: int = 0):
        self.inventory = inventory
        self.cfg = cfg
        self.seed = seed
        init = Rng(seed, STREAM_INIT)
        self.encoder = Encoder(inventory, cfg.encoder, init)
        self.decoder = Decoder(cfg.decoder, init)

    def params(self) -> dict[str, Tensor]:
        out = {f"encoder.{k}": v for k, v in self.encoder.params().items()}
        out.update({f"decoder.{k}": v for k, v in self.decoder.params().items()})
        return out

    def zero_grads(self) -> None:
        for p in self.params().values():
            p.zero_grad()

    def forward(self, plan: DurationPlan, f0: F0Track, mode: str = "eval",
                rng: Rng | None = None, attention_out: list | None = None) -> Tensor:
        """Feature frames [T x out_dim] for one phrase under a fixed plan."""
        cond = build_conditioning(plan, f0, self.cfg.f0_coder, self.cfg.decoder.k_pos)
        enc = self.encoder.encode(plan.flat_symbols(), mode, rng)
        return self.decoder.decode(enc, cond, mode, rng, attention_out)

    def synthesize(self, score: Score, table: DurationTable, f0: F0Track,
                   plan: DurationPlan | None = None) -> np.ndarray:
        """Eval-mode synthesis; pass an explicit plan to override the table
        alignment (the ground-truth-durations path)."""
        if plan is None:
            plan = plan_from_table(score, table, self.inventory)
        return self.forward(plan, f0).data
