"""Phoneme encoder: embeddings, a gated convolutional block over the
phoneme axis, and a monophone residual.

Embeddings are 256-d; a learned projection takes them to the block width
(64) because the two dims differ. The gated block convolves to twice its
width and gates one half with the sigmoid of the other, so each output row
sees a local phoneme context (kernel 3 per block). A second projection of
the raw embeddings is added back afterwards, keeping a context-free
("monophone") path to every state.

Initialization is variance-preserving: gated conv layers draw from
N(0, 4(1 - p_dropout)/fan_in) to compensate for the halving gate and input
dropout, plain linear maps from N(0, 1/fan_in), embeddings from N(0, 0.1^2),
and biases start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    Rng,
    ShapeMismatch,
    Tensor,
    add,
    conv1d,
    dropout,
    embedding,
    linear,
    mul,
    sigmoid,
    slice_cols,
)
from .score import PhonemeInventory

__all__ = ["EncoderConfig", "Encoder", "UnknownPhoneme", "glu_block"]


class UnknownPhoneme(KeyError):
    """Symbol absent from the inventory the encoder was built for."""


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 256
    glu_channels: int = 64
    kernel: int = 3
    num_blocks: int = 1
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        if min(self.embed_dim, self.glu_channels, self.num_blocks) < 1:
            raise ValueError("dims and block count must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")


def glu_block(x: Tensor, w: Tensor, b: Tensor, dropout_p: float, mode: str,
              rng: Rng | None) -> Tensor:
    """Gated conv unit: dropout on the input, convolve to 2C channels, then
    A * sigmoid(B) over the two channel halves."""
    c2 = w.data.shape[2]
    if c2 % 2 != 0:
        raise ShapeMismatch(f"gated conv needs an even channel count, got {c2}")
    h = conv1d(dropout(x, dropout_p, mode, rng), w, b)
    a = slice_cols(h, 0, c2 // 2)
    gate = slice_cols(h, c2 // 2, c2)
    return mul(a, sigmoid(gate))


class Encoder:
    """Maps a phoneme symbol sequence to one hidden row per phoneme."""

    def __init__(self, inventory: PhonemeInventory, cfg: EncoderConfig = EncoderConfig(),
                 rng: Rng | None = None):
        self.inventory = inventory
        self.cfg = cfg
        rng = rng or Rng(0)
        c, e = cfg.glu_channels, cfg.embed_dim
        glu_std = np.sqrt(4.0 * (1.0 - cfg.dropout_p) / (cfg.kernel * c))
        self._params: dict[str, Tensor] = {
            "embed": Tensor(rng.normal((len(inventory), e), std=0.1), requires_grad=True),
            "in_proj.w": Tensor(rng.normal((e, c), std=np.sqrt(1.0 / e)), requires_grad=True),
            "in_proj.b": Tensor(np.zeros(c), requires_grad=True),
            "mono_proj.w": Tensor(rng.normal((e, c), std=np.sqrt(1.0 / e)), requires_grad=True),
            "mono_proj.b": Tensor(np.zeros(c), requires_grad=True),
        }
        for i in range(cfg.num_blocks):
            self._params[f"block{i}.w"] = Tensor(
                rng.normal((cfg.kernel, c, 2 * c), std=glu_std), requires_grad=True)
            self._params[f"block{i}.b"] = Tensor(np.zeros(2 * c), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return self._params

    def ids_of(self, phonemes) -> np.ndarray:
        try:
            return np.array([self.inventory.id_of(p) for p in phonemes], dtype=np.int64)
        except KeyError as exc:
            raise UnknownPhoneme(*exc.args) from None

    def encode(self, phonemes, mode: str = "eval", rng: Rng | None = None) -> Tensor:
        """One 64-d row per phoneme; `phonemes` is a symbol sequence."""
        if not len(phonemes):
            raise ValueError("cannot encode an empty phoneme sequence")
        p = self._params
        e = embedding(p["embed"], self.ids_of(phonemes))
        h = linear(e, p["in_proj.w"], p["in_proj.b"])
        for i in range(self.cfg.num_blocks):
            h = glu_block(h, p[f"block{i}.w"], p[f"block{i}.b"],
                          self.cfg.dropout_p, mode, rng)
        return add(h, linear(e, p["mono_proj.w"], p["mono_proj.b"]))
