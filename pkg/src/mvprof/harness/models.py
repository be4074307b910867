"""Model bundles for the two pipelines."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core.tensor import Tensor
from ..errors import ConfigError, InputError
from ..fusion import MAX_VIEWS, AttentiveGatedProjector, ProficiencyClassifier
from ..lm import (VID_MARKER, TinyDecoder, Vocab, assemble_sequence, collate,
                  generate_greedy_batch, masked_next_token_loss)
from ..nn import Linear, Module
from ..rng import SplitMix64
from ..textio import StructuredResponse, format_target
from .config import RunConfig


def build_classifier(cfg: RunConfig, rng: SplitMix64) -> ProficiencyClassifier:
    m = cfg.model
    return ProficiencyClassifier(cfg.data.feature_dim, m.heads, rng, MAX_VIEWS,
                                 m.fusion_ffn_hidden, m.lora_rank, m.lora_alpha)


class GenerativeModel(Module):
    """Frozen feature projection, AGP and decoder.

    ``backbone`` stands in for the last layer of a pretrained video encoder and is
    never trained, so view features reaching the AGP are fixed.
    """

    def __init__(self, cfg: RunConfig, rng: SplitMix64):
        m, d_vis = cfg.model, cfg.data.feature_dim
        self.backbone = Linear(d_vis, d_vis, rng, trainable=False)
        self.agp = AttentiveGatedProjector(d_vis, m.d_lm, m.agp_heads, rng, m.agp_ffn_hidden)
        self.decoder = TinyDecoder(len(Vocab()), m.d_lm, m.lm_heads, m.lm_layers, rng,
                                   m.lm_max_len, m.lm_ffn_hidden)
        self.vocab = Vocab()
        self.prompt = VID_MARKER * cfg.data.token_count + " " + cfg.prompt
        self.max_new_tokens = cfg.max_new_tokens
        try:
            self.vocab.encode(cfg.prompt)
        except InputError as exc:
            raise ConfigError(f"prompt: {exc}") from None

    def video_tokens(self, bundles: np.ndarray) -> Tensor:
        """``[B, V, T, D_vis]`` view features to ``[B, T, d_lm]`` video tokens."""
        return self.agp(self.backbone(Tensor(bundles)))

    def loss(self, samples: Sequence) -> Tensor:
        video = self.video_tokens(np.stack([s.bundle for s in samples]))
        plans = []
        # the prompt, and so the video slots, are shared by every row of the batch
        for s in samples:
            target = format_target(StructuredResponse(s.label, s.commentary))
            plans.append(assemble_sequence(self.prompt, video.detach()[0], target,
                                           self.vocab, self.decoder.max_len))
        ids, targets, mask = collate(plans)
        logits = self.decoder.forward_ids(ids, video, plans[0].video_positions)
        return masked_next_token_loss(logits, targets, mask)

    def respond(self, sample) -> str:
        return self.respond_batch([sample])[0]

    def respond_batch(self, samples: Sequence, batch_size: int = 64) -> list[str]:
        out = []
        for i in range(0, len(samples), batch_size):
            chunk = samples[i: i + batch_size]
            video = self.video_tokens(np.stack([s.bundle for s in chunk]))
            out += generate_greedy_batch(self.decoder, self.prompt, video,
                                         self.max_new_tokens, self.vocab)
        return out

