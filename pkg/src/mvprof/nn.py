"""Parameterised layers built on :mod:`mvprof.core`.

Parameters are plain :class:`Tensor` attributes; :meth:`Module.named_parameters`
walks attributes in definition order, which fixes the hierarchical names used by
checkpoints (``fusion.attn.q.A``, ``agp.out_norm.gain``, ...).
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .core import tensor as T
from .core.tensor import Tensor
from .errors import ConfigError, DimensionError
from .rng import SplitMix64


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, val in vars(self).items():
            if isinstance(val, Tensor):
                yield prefix + name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{name}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self, trainable_only: bool = True) -> list[Tensor]:
        return [p for _, p in self.named_parameters() if p.requires_grad or not trainable_only]

    def param_dict(self, trainable_only: bool = False) -> dict[str, Tensor]:
        return {n: p for n, p in self.named_parameters() if p.requires_grad or not trainable_only}

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    def count_parameters(self) -> dict[str, int]:
        trainable = sum(p.size for p in self.parameters(True))
        total = sum(p.size for p in self.parameters(False))
        return {"trainable": trainable, "frozen": total - trainable, "total": total}

    def freeze(self) -> "Module":
        for _, p in self.named_parameters():
            p.requires_grad = False
        return self


def _param(data: np.ndarray, trainable: bool = True) -> Tensor:
    return Tensor(np.ascontiguousarray(data, dtype=np.float64), requires_grad=trainable)


def _right_multiply(x: Tensor, w: Tensor) -> Tensor:
    """``x @ w.T`` for ``x`` of shape ``[..., d_in]``, including a bare vector."""
    if x.ndim == 1:
        return T.reshape(T.matmul(T.reshape(x, (1, x.shape[0])), T.swap_last(w)), (w.shape[0],))
    return T.matmul(x, T.swap_last(w))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: SplitMix64, bias: bool = True,
                 trainable: bool = True):
        self.weight = _param(rng.normals((d_out, d_in), 1.0 / math.sqrt(d_in)), trainable)
        self.bias = _param(np.zeros(d_out), trainable) if bias else None
        self.d_in, self.d_out = d_in, d_out

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"Linear expects trailing dim {self.d_in}, got {list(x.shape)}")
        y = _right_multiply(x, self.weight)
        return y if self.bias is None else T.add(y, self.bias)


class LoraLinear(Module):
    """Frozen base map plus a trainable rank-``r`` correction ``(alpha / r) * B @ A``.

    ``B`` starts at zero, so a fresh layer reproduces its base exactly.
    """

    def __init__(self, d_in: int, d_out: int, rng: SplitMix64, rank: int = 4,
                 alpha: float = 8.0, base: Linear | None = None):
        if rank < 1:
            raise ConfigError(f"LoRA rank must be >= 1, got {rank}")
        base = base or Linear(d_in, d_out, rng)
        self.base_weight = _param(base.weight.data, trainable=False)
        self.base_bias = _param(
            base.bias.data if base.bias is not None else np.zeros(d_out), trainable=False
        )
        self.A = _param(rng.normals((rank, d_in), 1.0 / math.sqrt(d_in)))
        self.B = _param(np.zeros((d_out, rank)))
        self.rank, self.alpha = rank, float(alpha)
        self.d_in, self.d_out = d_in, d_out

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def effective_weight(self) -> np.ndarray:
        return self.base_weight.data + self.scaling * (self.B.data @ self.A.data)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise DimensionError(
                f"LoraLinear expects trailing dim {self.d_in}, got {list(x.shape)}"
            )
        base = T.add(_right_multiply(x, self.base_weight), self.base_bias)
        low = _right_multiply(_right_multiply(x, self.A), self.B)
        return T.add(base, T.scale(low, self.scaling))


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gain = _param(np.ones(d))
        self.bias = _param(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
    def __init__(self, d: int, hidden: int, rng: SplitMix64):
        self.fc1 = Linear(d, hidden, rng)
        self.fc2 = Linear(hidden, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


def make_projection(d_in: int, d_out: int, rng: SplitMix64, lora_rank: int = 0,
                    lora_alpha: float = 8.0, bias: bool = True) -> Linear | LoraLinear:
    if lora_rank > 0:
        return LoraLinear(d_in, d_out, rng, lora_rank, lora_alpha, Linear(d_in, d_out, rng, bias))
    return Linear(d_in, d_out, rng, bias)


class MultiHeadAttention(Module):
    """Scaled dot-product attention over the second-to-last axis of ``[..., L, D]``."""

    def __init__(self, d: int, heads: int, rng: SplitMix64, lora_rank: int = 0,
                 lora_alpha: float = 8.0):
        if heads < 1 or d % heads:
            raise ConfigError(f"model width {d} is not divisible by {heads} heads")
        self.q = make_projection(d, d, rng, lora_rank, lora_alpha)
        # a key bias shifts every score of a query equally, so softmax ignores it
        self.k = make_projection(d, d, rng, lora_rank, lora_alpha, bias=False)
        self.v = make_projection(d, d, rng, lora_rank, lora_alpha)
        self.o = make_projection(d, d, rng, lora_rank, lora_alpha)
        self.d, self.heads = d, heads

    def __call__(self, x: Tensor, causal: bool = False) -> Tensor:
        return self.extend(x, None, causal)[0]

    def extend(self, x: Tensor, past: tuple[Tensor, Tensor] | None,
               causal: bool = True) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        """Attend from new positions ``x`` over cached keys/values plus their own.

        ``past`` holds per-head keys and values ``[..., heads, P, D / heads]`` of the
        ``P`` earlier positions. Returns the output and the extended cache.
        """
        if x.ndim < 2 or x.shape[-1] != self.d:
            raise DimensionError(f"attention expects [..., L, {self.d}], got {list(x.shape)}")
        lead, L = x.shape[:-2], x.shape[-2]
        h, dh = self.heads, self.d // self.heads
        n = len(lead)
        to_heads = tuple(range(n)) + (n + 1, n, n + 2)

        def split(t: Tensor) -> Tensor:
            return T.transpose(T.reshape(t, lead + (L, h, dh)), to_heads)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        P = 0
        if past is not None:
            P = past[0].shape[-2]
            k, v = T.concat([past[0], k], axis=-2), T.concat([past[1], v], axis=-2)
        scores = T.scale(T.matmul(q, T.swap_last(k)), 1.0 / math.sqrt(dh))
        mask = np.tril(np.ones((L, P + L), dtype=bool), k=P) if causal else None
        ctx = T.matmul(T.softmax_lastdim(scores, mask), v)
        ctx = T.reshape(T.transpose(ctx, to_heads), lead + (L, self.d))
        return self.o(ctx), (k, v)


def multihead_attention(seq: Tensor, params: MultiHeadAttention, causal_mask: bool = False) -> Tensor:
    return params(seq, causal=causal_mask)


def lora_forward(layer: LoraLinear, x: Tensor) -> Tensor:
    return layer(x)
