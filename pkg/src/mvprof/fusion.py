"""Multi-view fusion blocks and the proficiency classification head.

``CrossViewFusion`` fuses one pooled vector per view into a single vector for
classification. ``AttentiveGatedProjector`` fuses views at every temporal position
and maps the result into the language model's embedding space.
"""

from __future__ import annotations

import math

import numpy as np

from .core import tensor as T
from .core.tensor import Tensor
from .errors import ConfigError, DimensionError
from .nn import FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, _param
from .rng import SplitMix64
from .textio import ProficiencyLabel

MAX_VIEWS = 5
SOFTPLUS_ONE = math.log(math.e - 1.0)


class CrossViewFusion(Module):
    """Normalise views, attend across them, gate, average, refine and calibrate.

    For views ``x[v]`` of shape ``[..., V, D]``::

        a      = attention(layer_norm(x))            # across the V axis
        f      = mean_v(sigmoid(view_gate[v]) * a[v])
        h      = ffn(f)
        z      = g * h + (1 - g) * f,   g = sigmoid(blend_gate)
        out    = (z - calib_mu) / (softplus(calib_sigma_raw) + eps) * calib_scale + calib_shift
    """

    def __init__(self, d: int, heads: int, rng: SplitMix64, max_views: int = MAX_VIEWS,
                 ffn_hidden: int | None = None, lora_rank: int = 0, lora_alpha: float = 8.0,
                 calib_eps: float = 1e-5):
        self.norm = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads, rng, lora_rank, lora_alpha)
        self.view_gate_logits = _param(np.zeros(max_views))
        self.ffn = FeedForward(d, ffn_hidden or 2 * d, rng)
        self.blend_gate_logits = _param(np.zeros(d))
        self.calib_mu = _param(np.zeros(d))
        self.calib_sigma_raw = _param(np.full(d, SOFTPLUS_ONE))
        self.calib_scale = _param(np.ones(d))
        self.calib_shift = _param(np.zeros(d))
        self.d, self.max_views, self.calib_eps = d, max_views, calib_eps

    def __call__(self, views: Tensor) -> Tensor:
        if views.ndim < 2 or views.shape[-1] != self.d:
            raise DimensionError(f"expected [..., V, {self.d}] views, got {list(views.shape)}")
        V = views.shape[-2]
        if not 1 <= V <= self.max_views:
            raise ConfigError(f"{V} views but the gate table holds {self.max_views}")
        attended = self.attn(self.norm(views))
        gates = T.sigmoid(T.slice_axis(self.view_gate_logits, 0, 0, V))
        gates = T.broadcast_to(T.reshape(gates, (V, 1)), (V, self.d))
        fused = T.mean_axis(T.mul(attended, gates), axis=-2)

        g = T.sigmoid(self.blend_gate_logits)
        blended = T.add(fused, T.mul(g, T.sub(self.ffn(fused), fused)))

        sigma = T.add(T.softplus(self.calib_sigma_raw), self.calib_eps)
        out = T.div(T.sub(blended, self.calib_mu), sigma)
        return T.add(T.mul(out, self.calib_scale), self.calib_shift)


class AttentiveGatedProjector(Module):
    """Per-timestep cross-view fusion projected to ``d_lm`` video-token embeddings.

    Input ``[..., V, T, D_vis]``, output ``[..., T, D_lm]``. At each position ``t``
    the views are normalised and attended, mean-pooled to ``u_t``, refined as
    ``r_t = u_t + ffn(u_t)``, scaled by the scalar gate ``sigmoid(token_gate(u_t))``,
    projected and layer-normalised.
    """

    def __init__(self, d_vis: int, d_lm: int, heads: int, rng: SplitMix64,
                 ffn_hidden: int | None = None):
        self.norm = LayerNorm(d_vis)
        self.attn = MultiHeadAttention(d_vis, heads, rng)
        self.ffn = FeedForward(d_vis, ffn_hidden or 2 * d_vis, rng)
        self.token_gate = Linear(d_vis, 1, rng)
        self.out_proj = Linear(d_vis, d_lm, rng)
        self.out_norm = LayerNorm(d_lm)
        self.d_vis, self.d_lm = d_vis, d_lm

    def __call__(self, bundle: Tensor) -> Tensor:
        if bundle.ndim < 3 or bundle.shape[-1] != self.d_vis:
            raise DimensionError(
                f"expected [..., V, T, {self.d_vis}] features, got {list(bundle.shape)}"
            )
        n = bundle.ndim
        axes = tuple(range(n - 3)) + (n - 2, n - 3, n - 1)
        per_step = T.transpose(bundle, axes)
        pooled = T.mean_axis(self.attn(self.norm(per_step)), axis=-2)
        refined = T.add(pooled, self.ffn(pooled))
        gate = T.sigmoid(self.token_gate(pooled))
        gated = T.mul(refined, T.broadcast_to(gate, refined.shape))
        return self.out_norm(self.out_proj(gated))


class ProficiencyClassifier(Module):
    """Per-view temporal mean pool, cross-view fusion and a 4-way linear head."""

    def __init__(self, d: int, heads: int, rng: SplitMix64, max_views: int = MAX_VIEWS,
                 ffn_hidden: int | None = None, lora_rank: int = 4, lora_alpha: float = 8.0):
        self.fusion = CrossViewFusion(d, heads, rng, max_views, ffn_hidden, lora_rank, lora_alpha)
        self.head = Linear(d, len(ProficiencyLabel), rng)

    def __call__(self, bundle: Tensor) -> Tensor:
        return self.head(self.fusion(T.mean_axis(bundle, axis=-2)))

    def predict(self, bundle: Tensor) -> list[ProficiencyLabel]:
        logits = self(bundle).data.reshape(-1, len(ProficiencyLabel))
        return [ProficiencyLabel(int(i)) for i in logits.argmax(axis=1)]


def cross_view_fuse(block: CrossViewFusion, views: Tensor) -> Tensor:
    return block(views)


def agp_project(block: AttentiveGatedProjector, bundle: Tensor) -> Tensor:
    return block(bundle)


def classify(head: Linear, fused: Tensor) -> Tensor:
    return head(fused)
