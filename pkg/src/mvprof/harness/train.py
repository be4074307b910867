"""Training loops for the discriminative and generative pipelines.

Both loops are single-threaded and seeded: the same ``RunConfig`` gives the same
batches, parameters, checkpoints and reports.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import tensor as T
from ..core.optim import OptimizerState, clip_grad_norm, optimizer_step
from ..core.tensor import Graph, Tensor, backward
from ..errors import NumericError
from ..metrics import EvalReport, evaluate_generative, evaluate_labels
from ..nn import Module
from ..rng import SplitMix64
from .checkpoint import encode_checkpoint
from .config import RunConfig
from .data import SynthDataset, generate_dataset, stack_bundles
from .models import GenerativeModel, build_classifier

_INIT_KEY = 1
_SHUFFLE_KEY = 2


@dataclass
class RunResult:
    pipeline: str
    model: Module
    report: EvalReport
    history: dict = field(default_factory=dict)
    checkpoint: bytes = b""

    def report_dict(self, config: RunConfig) -> dict:
        return {
            "pipeline": self.pipeline,
            "test": self.report.to_dict(),
            "history": self.history,
            "parameters": self.model.count_parameters(),
            "config": config.to_dict(),
        }

    def write(self, out_dir: str | Path, config: RunConfig) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt, rep = out / "checkpoint.skf", out / "report.json"
        ckpt.write_bytes(self.checkpoint)
        rep.write_text(dump_report(self.report_dict(config)), encoding="utf-8")
        return ckpt, rep


def dump_report(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def checkpoint_config(pipeline: str, cfg: RunConfig) -> dict:
    return {"pipeline": pipeline, "config": cfg.to_dict()}


def param_checksum(params) -> str:
    h = hashlib.sha256()
    for p in params:
        h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return h.hexdigest()


def _snapshot(model: Module) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in model.named_parameters()}


def _restore(model: Module, snap: dict[str, np.ndarray]) -> None:
    for k, p in model.named_parameters():
        p.data = snap[k].copy()


def _make_optimizer(cfg: RunConfig, params) -> OptimizerState:
    t = cfg.train
    return OptimizerState.for_params(params, t.optimizer, learning_rate=t.learning_rate,
                                     beta1=t.beta1, beta2=t.beta2, epsilon=t.epsilon)


def _step(loss_fn, params, opt: OptimizerState, grad_clip: float) -> float:
    for p in params:
        p.grad = None
    with Graph() as g:
        loss = loss_fn()
    value = float(loss.item())
    if not np.isfinite(value):
        raise NumericError(f"training loss became {value}")
    backward(loss, g)
    grads = [p.grad for p in params]
    if grad_clip > 0:
        clip_grad_norm(grads, grad_clip)
    optimizer_step(opt, params, grads)
    return value


def _batches(n: int, size: int, rng: SplitMix64) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i: i + size] for i in range(0, n, size)]


def classifier_predict(model, samples, batch_size: int = 256) -> list:
    preds = []
    for i in range(0, len(samples), batch_size):
        preds += model.predict(Tensor(stack_bundles(samples[i: i + batch_size])))
    return preds


def train_discriminative(cfg: RunConfig, dataset: SynthDataset | None = None) -> RunResult:
    """Adam on the LoRA adapters, fusion block and head; keeps the best validation epoch."""
    cfg.validate()
    data = dataset or generate_dataset(cfg.data)
    root = SplitMix64(cfg.train.seed)
    model = build_classifier(cfg, root.child(_INIT_KEY))
    params = model.parameters()
    opt = _make_optimizer(cfg, params)
    shuffle = root.child(_SHUFFLE_KEY)
    bundles = stack_bundles(data.train)
    labels = np.array([int(s.label) for s in data.train])

    best, best_epoch, snap = -1.0, 0, _snapshot(model)
    history = {"train_loss": [], "val_top1": []}
    for epoch in range(cfg.train.epochs):
        losses = []
        for idx in _batches(len(data.train), cfg.train.batch_size, shuffle):
            x = Tensor(bundles[idx])
            losses.append(_step(lambda: T.cross_entropy(model(x), labels[idx]),
                                params, opt, cfg.train.grad_clip))
        val = evaluate_labels(classifier_predict(model, data.val), data.val).top1
        history["train_loss"].append(float(np.mean(losses)))
        history["val_top1"].append(val)
        if val > best:
            best, best_epoch, snap = val, epoch, _snapshot(model)
    _restore(model, snap)
    history["best_epoch"] = best_epoch
    report = evaluate_labels(classifier_predict(model, data.test), data.test)
    ckpt = encode_checkpoint(_snapshot(model), checkpoint_config("discriminative", cfg))
    return RunResult("discriminative", model, report, history, ckpt)


def generative_val_loss(model: GenerativeModel, samples, batch_size: int) -> float:
    total, count = 0.0, 0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i: i + batch_size]
        total += model.loss(chunk).item() * len(chunk)
        count += len(chunk)
    return total / count


def train_generative(cfg: RunConfig, dataset: SynthDataset | None = None,
                     eval_split: str = "test") -> RunResult:
    """Adam on the AGP and decoder; the feature projection stays frozen.

    The best epoch is chosen by teacher-forced validation loss, then the chosen
    split is decoded greedily and scored.
    """
    cfg.validate()
    data = dataset or generate_dataset(cfg.data)
    root = SplitMix64(cfg.train.seed)
    model = GenerativeModel(cfg, root.child(_INIT_KEY))
    params = model.parameters()
    opt = _make_optimizer(cfg, params)
    shuffle = root.child(_SHUFFLE_KEY)
    frozen = model.backbone.parameters(trainable_only=False)
    frozen_sum = param_checksum(frozen)

    best, best_epoch, snap = np.inf, 0, _snapshot(model)
    history = {"train_loss": [], "val_loss": []}
    for epoch in range(cfg.train.epochs):
        losses = []
        for idx in _batches(len(data.train), cfg.train.batch_size, shuffle):
            chunk = [data.train[i] for i in idx]
            losses.append(_step(lambda: model.loss(chunk), params, opt, cfg.train.grad_clip))
        val = generative_val_loss(model, data.val, cfg.train.batch_size)
        if param_checksum(frozen) != frozen_sum:
            raise NumericError("frozen feature projection changed during training")
        history["train_loss"].append(float(np.mean(losses)))
        history["val_loss"].append(val)
        if val < best:
            best, best_epoch, snap = val, epoch, _snapshot(model)
    _restore(model, snap)
    history["best_epoch"] = best_epoch
    history["frozen_checksum"] = frozen_sum
    report = evaluate_generative(model, data.split(eval_split))
    ckpt = encode_checkpoint(_snapshot(model), checkpoint_config("generative", cfg))
    return RunResult("generative", model, report, history, ckpt)
