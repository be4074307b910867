"""Synthetic multi-view proficiency data.

Every sample owns a random stream keyed by its index, so labels, domains, split
membership and latent frames do not depend on which sampler later picks frames.

Class evidence is split across views: the informative views take turns carrying
bit 0 or bit 1 of the label, so any single view is ambiguous between two classes
and only the combination of views identifies all four.

The fixed frame encoder maps a sampled frame ``i_t`` of a view with latent
sequence ``x`` to ``[x(i_t), (x(i_t) - x(i_p))**2 / |i_t - i_p|]`` where ``i_p`` is
the previous sampled frame (the next one for ``t = 0``). The second half is a
motion-energy feature, which is where oscillatory burst evidence shows up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import SplitMix64
from ..sampler import FramePlan, pats_plan, uniform_plan
from ..textio import DOMAINS, ProficiencyLabel, synth_commentary
from .config import SynthConfig

_WORLD_KEY = 0
_SAMPLE_KEY = 1 << 20


@dataclass
class SynthSample:
    bundle: np.ndarray
    label: ProficiencyLabel
    domain_id: int
    commentary: str
    frame_plan: FramePlan
    index: int


@dataclass
class SynthDataset:
    train: list[SynthSample]
    val: list[SynthSample]
    test: list[SynthSample]

    def split(self, name: str) -> list[SynthSample]:
        return {"train": self.train, "val": self.val, "test": self.test}[name]


def frame_plan(cfg: SynthConfig) -> FramePlan:
    if cfg.sampler == "uniform":
        return uniform_plan(cfg.video_length, cfg.token_count)
    return pats_plan(cfg.video_length, cfg.sampler_config())


def encode_frames(latent: np.ndarray, plan: FramePlan) -> np.ndarray:
    """Features ``[V, T, 2 * C]`` for latent frames ``[V, F, C]`` at the planned indices."""
    idx = np.asarray(plan.indices, dtype=np.int64)
    if len(idx) > 1:
        prev = np.concatenate([idx[1:2], idx[:-1]])
    else:
        prev = idx
    gap = np.maximum(np.abs(idx - prev), 1).astype(np.float64)
    current = latent[:, idx]
    motion = (current - latent[:, prev]) ** 2 / gap[None, :, None]
    return np.concatenate([current, motion], axis=-1)


def informative_views(cfg: SynthConfig) -> list[int]:
    return [v for v in range(cfg.view_count) if v not in set(cfg.uninformative_view_ids)]


def class_bits(label: int) -> tuple[int, int]:
    return label & 1, (label >> 1) & 1


class _World:
    """Fixed prototypes shared by every sample of a dataset."""

    def __init__(self, cfg: SynthConfig):
        rng = SplitMix64(cfg.seed).child(_WORLD_KEY)
        c = cfg.feature_dim // 2
        self.prototypes = rng.normals((cfg.view_count, 2, c), cfg.signal_amplitude)
        self.domains = rng.normals((len(DOMAINS), c), cfg.domain_amplitude)


def _latent(cfg: SynthConfig, world: _World, rng: SplitMix64, label: int,
            domain_id: int) -> np.ndarray:
    V, F, c = cfg.view_count, cfg.video_length, cfg.feature_dim // 2
    # fixed draw order so every configuration consumes the stream identically
    appearance = rng.normals((V, 1, c), cfg.appearance_std)
    drift = np.cumsum(rng.normals((V, F, c), cfg.drift_std), axis=1)
    frame_noise = rng.normals((V, F, c), cfg.frame_noise_std)
    starts = [rng.randbelow(F - cfg.burst_length + 1) for _ in range(cfg.burst_count)]
    phases = rng.uniforms(cfg.burst_count) * 2 * np.pi

    x = cfg.noise_std * (appearance + drift + frame_noise)
    if cfg.signal == "static":
        profile = np.ones(F)
    else:
        profile = np.zeros(F)
        steps = np.arange(cfg.burst_length)
        for s, phi in zip(starts, phases):
            profile[s: s + cfg.burst_length] += np.sin(2 * np.pi * steps / cfg.burst_period + phi)
    bits = class_bits(label)
    for k, v in enumerate(informative_views(cfg)):
        x[v] += profile[:, None] * world.prototypes[v, bits[k % 2]][None, :]
        x[v] += world.domains[domain_id][None, :]
    return x


def generate_dataset(cfg: SynthConfig) -> SynthDataset:
    """Build train/val/test splits; sample ``i`` of the concatenated splits uses stream ``i``."""
    cfg.validate()
    world = _World(cfg)
    plan = frame_plan(cfg)
    root = SplitMix64(cfg.seed)
    counts = (cfg.train_samples, cfg.val_samples, cfg.test_samples)
    splits: list[list[SynthSample]] = [[], [], []]
    index = 0
    for split, n in zip(splits, counts):
        for _ in range(n):
            rng = root.child(_SAMPLE_KEY + index)
            label = ProficiencyLabel(rng.randbelow(cfg.class_count))
            domain_id = rng.randbelow(len(DOMAINS))
            commentary = synth_commentary(label, domain_id, rng.next_u64())
            latent = _latent(cfg, world, rng, int(label), domain_id)
            split.append(SynthSample(encode_frames(latent, plan), label, domain_id,
                                     commentary, plan, index))
            index += 1
    return SynthDataset(*splits)


def stack_bundles(samples: list[SynthSample]) -> np.ndarray:
    return np.stack([s.bundle for s in samples])
