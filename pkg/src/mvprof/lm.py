"""Character-level causal decoder with video-token slots.

A prompt carries ``<vid>`` markers; each marker becomes one position whose input
embedding is replaced by a projected video token. Training targets are the next
symbols, and only positions that predict response symbols contribute to the loss.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import tensor as T
from .core.tensor import Tensor
from .errors import ContractError, DimensionError, InputError, LengthError
from .nn import FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, _param
from .rng import SplitMix64

PAD, BOS, EOS, VID = 0, 1, 2, 3
VID_MARKER = "<vid>"
DEFAULT_ALPHABET = string.ascii_letters + string.digits + " .,:;'-!?()/"


class Vocab:
    """Bijective character table; ids 0-3 are PAD, BOS, EOS and the video slot."""

    specials = ("<pad>", "<bos>", "<eos>", VID_MARKER)

    def __init__(self, alphabet: str = DEFAULT_ALPHABET):
        chars = sorted(set(alphabet))
        self.symbols = list(self.specials) + chars
        self._ids = {c: i + len(self.specials) for i, c in enumerate(chars)}

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def alphabet(self) -> set[str]:
        return set(self._ids)

    def encode(self, text: str) -> list[int]:
        ids, i = [], 0
        while i < len(text):
            if text.startswith(VID_MARKER, i):
                ids.append(VID)
                i += len(VID_MARKER)
                continue
            try:
                ids.append(self._ids[text[i]])
            except KeyError:
                raise InputError(f"character {text[i]!r} is not in the vocabulary") from None
            i += 1
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i == VID:
                out.append(VID_MARKER)
            elif i >= len(self.specials):
                out.append(self.symbols[i])
        return "".join(out)


@dataclass
class SequencePlan:
    """One assembled sequence.

    ``token_ids[i]`` is the input symbol at position ``i`` (``VID`` at video slots),
    ``targets[i]`` the symbol to predict there, and ``loss_mask[i]`` is True when
    that target belongs to the response (its closing ``EOS`` included).
    """

    token_ids: np.ndarray
    targets: np.ndarray
    loss_mask: np.ndarray
    video_positions: np.ndarray
    video_tokens: Tensor | None

    def __len__(self) -> int:
        return len(self.token_ids)


def assemble_sequence(prompt: str, video_tokens: Tensor | None, response: str, vocab: Vocab,
                      max_len: int = 256) -> SequencePlan:
    prompt_ids = vocab.encode(prompt)
    n_video = 0 if video_tokens is None else video_tokens.shape[0]
    slots = [i + 1 for i, t in enumerate(prompt_ids) if t == VID]
    if len(slots) != n_video:
        raise ContractError(f"prompt has {len(slots)} video markers for {n_video} video tokens")
    resp_ids = vocab.encode(response) + [EOS] if response else []
    if VID in resp_ids:
        raise ContractError("response text may not contain video markers")
    ids = np.array([BOS] + prompt_ids + resp_ids, dtype=np.int64)
    if len(ids) > max_len:
        raise LengthError(f"sequence of {len(ids)} symbols exceeds the limit {max_len}")
    targets = np.append(ids[1:], PAD)
    mask = np.zeros(len(ids), dtype=bool)
    if resp_ids:
        mask[len(ids) - 1 - len(resp_ids): len(ids) - 1] = True
    return SequencePlan(ids, targets, mask, np.array(slots, dtype=np.int64), video_tokens)


class DecoderBlock(Module):
    def __init__(self, d: int, heads: int, rng: SplitMix64, ffn_hidden: int):
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.ffn = FeedForward(d, ffn_hidden, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.extend(x, None)[0]

    def extend(self, x: Tensor, past) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        a, cache = self.attn.extend(self.ln1(x), past, causal=True)
        x = T.add(x, a)
        return T.add(x, self.ffn(self.ln2(x))), cache


class TinyDecoder(Module):
    """Pre-norm decoder with learned positions and an untied output head."""

    def __init__(self, vocab_size: int, d: int, heads: int, layers: int, rng: SplitMix64,
                 max_len: int = 256, ffn_hidden: int | None = None):
        self.tok_emb = _param(rng.normals((vocab_size, d), 0.1))
        self.pos_emb = _param(rng.normals((max_len, d), 0.1))
        self.blocks = [DecoderBlock(d, heads, rng, ffn_hidden or 4 * d) for _ in range(layers)]
        self.ln_f = LayerNorm(d)
        self.head = Linear(d, vocab_size, rng)
        self.d, self.max_len, self.vocab_size = d, max_len, vocab_size

    def forward_ids(self, ids: np.ndarray, video: Tensor | None = None,
                    video_positions: np.ndarray | None = None) -> Tensor:
        """Logits ``[B, L, vocab]`` for token ids ``[B, L]``.

        ``video`` is ``[B, n, d]`` and replaces the embeddings at ``video_positions``
        (shared by every row of the batch).
        """
        return self.extend_ids(ids, video, video_positions)[0]

    def extend_ids(self, ids: np.ndarray, video: Tensor | None = None,
                   video_positions: np.ndarray | None = None, past: list | None = None
                   ) -> tuple[Tensor, list]:
        """Like :meth:`forward_ids` for ids that continue a cached prefix.

        ``past`` is the per-block key/value cache returned by an earlier call (None
        for a fresh sequence); video positions index into the new ids. Returns the
        logits of the new positions and the extended cache.
        """
        ids = np.asarray(ids, dtype=np.int64)
        B, L = ids.shape
        offset = 0 if past is None else past[0][0].shape[-2]
        if offset + L > self.max_len:
            raise LengthError(
                f"sequence of {offset + L} positions exceeds the limit {self.max_len}"
            )
        x = T.getitem(self.tok_emb, ids)
        if video is not None and video.shape[1] > 0:
            if video.shape != (B, len(video_positions), self.d):
                raise DimensionError(
                    f"video tokens {list(video.shape)} for {len(video_positions)} slots, width {self.d}"
                )
            src = np.arange(L)
            src[video_positions] = L + np.arange(len(video_positions))
            both = T.concat([x, video], axis=1)
            x = T.getitem(both, (np.arange(B)[:, None], src[None, :]))
        x = T.add(x, T.slice_axis(self.pos_emb, 0, offset, offset + L))
        caches = []
        for i, block in enumerate(self.blocks):
            x, c = block.extend(x, None if past is None else past[i])
            caches.append(c)
        return self.head(self.ln_f(x)), caches


def collate(plans: Sequence[SequencePlan]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-pad plans into ``ids``, ``targets`` and ``mask`` arrays of shape ``[B, L]``."""
    L = max(len(p) for p in plans)
    ids = np.full((len(plans), L), PAD, dtype=np.int64)
    targets = np.full((len(plans), L), PAD, dtype=np.int64)
    mask = np.zeros((len(plans), L), dtype=bool)
    for b, p in enumerate(plans):
        ids[b, : len(p)] = p.token_ids
        targets[b, : len(p)] = p.targets
        mask[b, : len(p)] = p.loss_mask
    return ids, targets, mask


def lm_forward(model: TinyDecoder, plan: SequencePlan) -> Tensor:
    video = None
    if plan.video_tokens is not None and plan.video_tokens.shape[0]:
        video = T.reshape(plan.video_tokens, (1,) + plan.video_tokens.shape)
    logits = model.forward_ids(plan.token_ids[None, :], video, plan.video_positions)
    return T.reshape(logits, logits.shape[1:])


def masked_next_token_loss(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Cross-entropy averaged over the positions selected by ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if logits.shape[:-1] != mask.shape:
        raise DimensionError(f"logits {list(logits.shape)} vs mask {list(mask.shape)}")
    if not mask.any():
        raise ContractError("loss mask selects no positions")
    flat = T.reshape(logits, (-1, logits.shape[-1]))
    rows = np.flatnonzero(mask.reshape(-1))
    return T.cross_entropy(T.take(flat, rows), np.asarray(targets).reshape(-1)[rows])


def lm_loss(logits: Tensor, plan: SequencePlan) -> Tensor:
    return masked_next_token_loss(logits, plan.targets, plan.loss_mask)


def generate_greedy(model: TinyDecoder, prompt: str, video_tokens: Tensor | None,
                    max_len: int, vocab: Vocab) -> str:
    """Argmax decoding until ``EOS`` or ``max_len`` symbols; ties go to the lowest id."""
    video = None
    if video_tokens is not None:
        video = Tensor(video_tokens.data[None])
    return generate_greedy_batch(model, prompt, video, max_len, vocab, batch=1)[0]


def generate_greedy_batch(model: TinyDecoder, prompt: str, video: Tensor | None, max_len: int,
                          vocab: Vocab, batch: int | None = None) -> list[str]:
    """Greedy decoding of several rows that share ``prompt``.

    ``video`` is ``[B, n, d]``. Each row stops at its own ``EOS``; finished rows
    keep running in the batch but their output is frozen. Rows do not interact,
    so a row decodes as it would alone up to floating-point summation order.
    """
    n_video = 0 if video is None else video.shape[1]
    slots = None if video is None else Tensor(np.zeros((n_video, model.d)))
    plan = assemble_sequence(prompt, slots, "", vocab, model.max_len)
    if len(plan) + max_len > model.max_len:
        raise LengthError(
            f"prefix of {len(plan)} plus {max_len} new symbols exceeds {model.max_len}"
        )
    B = video.shape[0] if video is not None else (batch or 1)
    if n_video == 0:
        video = None
    ids = np.tile(plan.token_ids, (B, 1))
    done = np.zeros(B, dtype=bool)
    out: list[list[int]] = [[] for _ in range(B)]
    past = None
    video_positions = plan.video_positions
    for _ in range(max_len):
        logits, past = model.extend_ids(ids, video, video_positions, past)
        video, video_positions = None, None
        nxt = np.argmax(logits.data[:, -1], axis=-1)
        for b in range(B):
            if not done[b]:
                if nxt[b] == EOS:
                    done[b] = True
                else:
                    out[b].append(int(nxt[b]))
        if done.all():
            break
        ids = nxt[:, None]
    return [vocab.decode(o) for o in out]
