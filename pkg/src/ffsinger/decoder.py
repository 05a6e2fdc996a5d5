"""Feed-forward decoder: Gaussian-biased single-head self-attention layers
interleaved with gated convolutions, operating at a reduced frame rate.

Per frame, the aligned encoder state is concatenated with the F0 and
position codes and projected to the model width; frames are then grouped by
the reduction factor r (mean pooling), each decoder step covering r output
frames. Attention scores QK'/sqrt(d_model) are biased toward the diagonal
by M[j,k] = -(j-k)^2 / (2 sigma^2) before the softmax, with one learned
sigma per layer kept positive through a softplus. Sub-layers use pre-norm
residuals: x + Drop(Attn(LN(x))), then y + Drop(GLU(LN(y))). The output
projection produces out_dim * r channels per step, unfolded back to frame
rate with any trailing padding dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditioning import FrameConditioning, K_POS
from .numerics import (
    Rng,
    Tensor,
    add,
    concat_cols,
    div,
    dropout,
    embedding,
    layer_norm,
    linear,
    matmul,
    mean_pool_rows,
    mul,
    reshape,
    slice_rows,
    softmax_rows,
    softplus,
    softplus_inv,
    transpose,
)
from .encoder import glu_block

__all__ = ["DecoderConfig", "Decoder", "gaussian_bias"]


@dataclass(frozen=True)
class DecoderConfig:
    d_model: int = 256
    num_layers: int = 6
    kernel: int = 3
    r: int = 2
    out_dim: int = 64
    dropout_p: float = 0.1
    sigma_init: float = 30.0
    self_attention: bool = True
    enc_channels: int = 64
    k_f0: int = 4
    k_pos: int = K_POS

    def __post_init__(self):
        if self.r < 1 or self.num_layers < 1 or self.d_model < 1 or self.out_dim < 1:
            raise ValueError("decoder dims must be positive")
        if self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.sigma_init <= 0:
            raise ValueError(f"sigma_init must be positive, got {self.sigma_init}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @property
    def in_width(self) -> int:
        return self.enc_channels + self.k_f0 + self.k_pos


def gaussian_bias(t: int, sigma: Tensor) -> Tensor:
    """Bias matrix -(j-k)^2/(2 sigma^2): zero diagonal, symmetric, <= 0.
    Built from autodiff ops so the loss gradient reaches sigma."""
    idx = np.arange(t, dtype=np.float64)
    neg_half_dist2 = Tensor(-0.5 * (idx[:, None] - idx[None, :]) ** 2)
    return div(neg_half_dist2, mul(sigma, sigma))


class Decoder:
    """Stack of biased-attention + gated-conv layers over reduced frames."""

    def __init__(self, cfg: DecoderConfig = DecoderConfig(), rng: Rng | None = None):
        self.cfg = cfg
        rng = rng or Rng(0)
        d = cfg.d_model
        lin_std = np.sqrt(1.0 / d)
        glu_std = np.sqrt(4.0 * (1.0 - cfg.dropout_p) / (cfg.kernel * d))
        raw_sigma = softplus_inv(cfg.sigma_init)

        p: dict[str, Tensor] = {
            "in_proj.w": Tensor(rng.normal((cfg.in_width, d), std=np.sqrt(1.0 / cfg.in_width)),
                                requires_grad=True),
            "in_proj.b": Tensor(np.zeros(d), requires_grad=True),
        }
        for i in range(cfg.num_layers):
            L = f"layer{i}"
            if cfg.self_attention:
                p[f"{L}.ln1.g"] = Tensor(np.ones(d), requires_grad=True)
                p[f"{L}.ln1.b"] = Tensor(np.zeros(d), requires_grad=True)
                for name in ("wq", "wk", "wv", "wo"):
                    p[f"{L}.attn.{name}"] = Tensor(rng.normal((d, d), std=lin_std),
                                                   requires_grad=True)
                    p[f"{L}.attn.{name[1]}b"] = Tensor(np.zeros(d), requires_grad=True)
                p[f"{L}.attn.sigma_raw"] = Tensor(np.array([raw_sigma]), requires_grad=True)
            p[f"{L}.ln2.g"] = Tensor(np.ones(d), requires_grad=True)
            p[f"{L}.ln2.b"] = Tensor(np.zeros(d), requires_grad=True)
            p[f"{L}.conv.w"] = Tensor(rng.normal((cfg.kernel, d, 2 * d), std=glu_std),
                                      requires_grad=True)
            p[f"{L}.conv.b"] = Tensor(np.zeros(2 * d), requires_grad=True)
        p["out_proj.w"] = Tensor(rng.normal((d, cfg.out_dim * cfg.r), std=lin_std),
                                 requires_grad=True)
        p["out_proj.b"] = Tensor(np.zeros(cfg.out_dim * cfg.r), requires_grad=True)
        self._params = p

    def params(self) -> dict[str, Tensor]:
        return self._params

    def sigmas(self) -> list[float]:
        """Current per-layer attention widths (after the softplus)."""
        if not self.cfg.self_attention:
            return []
        return [float(np.logaddexp(0.0, self._params[f"layer{i}.attn.sigma_raw"].data[0]))
                for i in range(self.cfg.num_layers)]

    def assemble_input(self, enc_rows: Tensor, cond: FrameConditioning) -> Tensor:
        """[aligned enc row | f0 code | pos code] -> d_model, then pool by r."""
        frames = embedding(enc_rows, cond.state_index)
        cat = concat_cols([frames, Tensor(cond.f0_code), Tensor(cond.pos_code)])
        h = linear(cat, self._params["in_proj.w"], self._params["in_proj.b"])
        return mean_pool_rows(h, self.cfg.r)

    def _attention(self, x: Tensor, layer: int) -> tuple[Tensor, Tensor]:
        p, d = self._params, self.cfg.d_model
        L = f"layer{layer}"
        q = linear(x, p[f"{L}.attn.wq"], p[f"{L}.attn.qb"])
        k = linear(x, p[f"{L}.attn.wk"], p[f"{L}.attn.kb"])
        v = linear(x, p[f"{L}.attn.wv"], p[f"{L}.attn.vb"])
        sigma = softplus(p[f"{L}.attn.sigma_raw"])
        scores = add(div(matmul(q, transpose(k)), np.sqrt(d)),
                     gaussian_bias(x.data.shape[0], sigma))
        probs = softmax_rows(scores)
        out = linear(matmul(probs, v), p[f"{L}.attn.wo"], p[f"{L}.attn.ob"])
        return out, probs

    def _layer(self, x: Tensor, layer: int, mode: str, rng: Rng | None,
               attention_out: list | None = None) -> Tensor:
        p, cfg = self._params, self.cfg
        L = f"layer{layer}"
        if cfg.self_attention:
            normed = layer_norm(x, p[f"{L}.ln1.g"], p[f"{L}.ln1.b"])
            attn, probs = self._attention(normed, layer)
            if attention_out is not None:
                attention_out.append(probs)
            x = add(x, dropout(attn, cfg.dropout_p, mode, rng))
        normed = layer_norm(x, p[f"{L}.ln2.g"], p[f"{L}.ln2.b"])
        gated = glu_block(normed, p[f"{L}.conv.w"], p[f"{L}.conv.b"], cfg.dropout_p, mode, rng)
        return add(x, dropout(gated, cfg.dropout_p, mode, rng))

    def decode(self, enc_rows: Tensor, cond: FrameConditioning, mode: str = "eval",
               rng: Rng | None = None, attention_out: list | None = None) -> Tensor:
        """Full decode to T x out_dim frames; pass attention_out=[] to also
        collect each layer's probability matrix."""
        cfg = self.cfg
        h = self.assemble_input(enc_rows, cond)
        for i in range(cfg.num_layers):
            h = self._layer(h, i, mode, rng, attention_out)
        out = linear(h, self._params["out_proj.w"], self._params["out_proj.b"])
        t_red = out.data.shape[0]
        frames = reshape(out, (t_red * cfg.r, cfg.out_dim))
        return slice_rows(frames, 0, len(cond))
