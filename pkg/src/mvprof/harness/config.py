"""Run configuration: dataclasses loaded from JSON with dotted ``key=value`` overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..fusion import MAX_VIEWS
from ..sampler import SamplerConfig


@dataclass
class SynthConfig:
    """Synthetic multi-view dataset.

    Each sample is a latent per-view sequence of ``video_length`` frames with
    ``feature_dim // 2`` channels; the sampler picks ``token_count`` frames and a
    fixed encoder turns each into ``feature_dim`` features. ``signal`` selects
    where the class evidence lives: ``static`` adds it to every frame, ``burst``
    adds an oscillation along the class direction inside a few short bursts.
    """

    view_count: int = 4
    token_count: int = 8
    feature_dim: int = 32
    class_count: int = 4
    train_samples: int = 1024
    val_samples: int = 128
    test_samples: int = 256
    noise_std: float = 1.0
    uninformative_view_ids: list[int] = field(default_factory=lambda: [3])
    video_length: int = 300
    sampler: str = "pats"
    n_segments: int = 2
    segment_duration: int = 32
    signal: str = "static"
    signal_amplitude: float = 1.0
    domain_amplitude: float = 1.0
    appearance_std: float = 0.75
    drift_std: float = 0.05
    frame_noise_std: float = 1.0
    burst_count: int = 6
    burst_length: int = 30
    burst_period: float = 7.0
    seed: int = 42

    def validate(self) -> None:
        if not 1 <= self.view_count <= MAX_VIEWS:
            raise ConfigError(f"view_count must be in [1, {MAX_VIEWS}], got {self.view_count}")
        if self.class_count != 4:
            raise ConfigError(f"class_count must be 4, got {self.class_count}")
        if self.feature_dim < 2 or self.feature_dim % 2:
            raise ConfigError(f"feature_dim must be even and >= 2, got {self.feature_dim}")
        if self.token_count < 1:
            raise ConfigError(f"token_count must be >= 1, got {self.token_count}")
        for name in ("train_samples", "val_samples", "test_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        bad = [v for v in self.uninformative_view_ids if not 0 <= v < self.view_count]
        if bad:
            raise ConfigError(f"uninformative view ids {bad} outside [0, {self.view_count})")
        if len(set(self.uninformative_view_ids)) >= self.view_count:
            raise ConfigError("at least one view must be informative")
        if self.sampler not in ("pats", "uniform"):
            raise ConfigError(f"sampler must be 'pats' or 'uniform', got {self.sampler!r}")
        if self.signal not in ("static", "burst"):
            raise ConfigError(f"signal must be 'static' or 'burst', got {self.signal!r}")
        if self.video_length < 1:
            raise ConfigError(f"video_length must be >= 1, got {self.video_length}")
        for name in ("noise_std", "appearance_std", "drift_std", "frame_noise_std",
                     "signal_amplitude", "domain_amplitude"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.burst_count < 0 or not 1 <= self.burst_length <= self.video_length:
            raise ConfigError("bursts must have 1 <= burst_length <= video_length")
        if self.burst_period <= 0:
            raise ConfigError("burst_period must be positive")
        self.sampler_config()

    def sampler_config(self) -> SamplerConfig:
        if self.sampler == "uniform":
            return SamplerConfig(self.token_count)
        return SamplerConfig(self.token_count, self.n_segments, self.segment_duration)


@dataclass
class ModelConfig:
    heads: int = 4
    fusion_ffn_hidden: int = 64
    lora_rank: int = 4
    lora_alpha: float = 8.0
    d_lm: int = 32
    lm_heads: int = 4
    lm_layers: int = 2
    lm_ffn_hidden: int = 128
    lm_max_len: int = 256
    agp_heads: int = 4
    agp_ffn_hidden: int = 64

    def validate(self) -> None:
        for name in ("heads", "lm_heads", "agp_heads", "lm_layers", "d_lm", "lm_max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_lm % self.lm_heads:
            raise ConfigError(f"d_lm {self.d_lm} is not divisible by {self.lm_heads} heads")
        if self.lora_rank < 0:
            raise ConfigError("lora_rank must be >= 0")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    optimizer: str = "adam"
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    grad_clip: float = 1.0
    seed: int = 7

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.grad_clip < 0:
            raise ConfigError("grad_clip must be non-negative (0 disables clipping)")


@dataclass
class RunConfig:
    data: SynthConfig = field(default_factory=SynthConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    prompt: str = "Rate this skill."
    max_new_tokens: int = 160

    def validate(self) -> "RunConfig":
        self.data.validate()
        self.model.validate()
        self.train.validate()
        if not isinstance(self.prompt, str):
            raise ConfigError("prompt must be a string")
        if not isinstance(self.max_new_tokens, int) or self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        obj = dict(obj)
        sections = {"data": SynthConfig, "model": ModelConfig, "train": TrainConfig}
        kwargs = {}
        for key, kind in sections.items():
            kwargs[key] = _build(kind, obj.pop(key, {}), key)
        top = {f.name for f in dataclasses.fields(cls)} - set(sections)
        unknown = sorted(set(obj) - top)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**kwargs, **obj).validate()


def _build(kind, values, section: str):
    if not isinstance(values, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {unknown}")
    obj = kind(**values)
    defaults = kind()
    for name in values:
        want, got = type(getattr(defaults, name)), values[name]
        ok = isinstance(got, want) and not (want is int and isinstance(got, bool))
        if want is float and isinstance(got, int) and not isinstance(got, bool):
            setattr(obj, name, float(got))
            ok = True
        if want is list:
            ok = isinstance(got, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in got)
        if not ok:
            raise ConfigError(f"{section}.{name} must be {want.__name__}, got {got!r}")
    return obj


def load_config(path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    """Read a JSON config (defaults when ``path`` is None) and apply ``key=value`` overrides.

    Keys are dotted (``data.noise_std=0``, ``train.learning_rate=1e-3``); a bare
    key is looked up in whichever section defines it. Values are parsed as JSON
    literals, falling back to the raw string.
    """
    if path is None:
        obj = {}
    else:
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    base = RunConfig.from_dict(obj).to_dict()
    for item in overrides:
        apply_override(base, item)
    return RunConfig.from_dict(base)


def apply_override(tree: dict, item: str) -> None:
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    path = key.split(".")
    if len(path) == 1:
        owners = [s for s in ("data", "model", "train") if key in tree[s]]
        if key in tree and not isinstance(tree[key], dict):
            owners.append(None)
        if len(owners) != 1:
            raise ConfigError(f"override key {key!r} is unknown or ambiguous; use section.key")
        path = [key] if owners[0] is None else [owners[0], key]
    node = tree
    for part in path[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown config section in {key!r}")
        node = node[part]
    if path[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[path[-1]] = value
