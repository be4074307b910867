"""Finite-difference gradient suites over seeded random instances.

Each family builds small random instances (a loss function plus the tensors to
perturb) and runs :func:`mvprof.core.gradcheck` on them. Inputs to ``relu`` are
kept away from its kink and divisors away from zero, where central differences
are not meaningful.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from ..core import tensor as T
from ..core.gradient_check import gradcheck
from ..core.tensor import Tensor
from ..fusion import AttentiveGatedProjector, CrossViewFusion
from ..lm import TinyDecoder, Vocab, assemble_sequence, lm_forward, lm_loss
from ..nn import LoraLinear, MultiHeadAttention, Module
from ..rng import SplitMix64

TOLERANCE = 1e-5
FAMILIES = ("core", "lora", "fusion", "agp", "lm")

Case = tuple[str, Callable, dict]


@dataclass
class FamilyResult:
    family: str
    instances: int
    max_relative_error: float
    worst_case: str
    seconds: float

    def passed(self, tolerance: float = TOLERANCE) -> bool:
        return self.max_relative_error < tolerance

    def line(self) -> str:
        status = "ok" if self.passed() else "FAIL"
        return (f"{self.family:7s} instances={self.instances:4d} "
                f"max_rel_err={self.max_relative_error:.3e} ({self.worst_case}) "
                f"{self.seconds:.1f}s {status}")


def _leaf(a: np.ndarray) -> Tensor:
    return Tensor(a, requires_grad=True)


def _probe_sum(out: Tensor, rng: SplitMix64) -> Callable[[Tensor], Tensor]:
    w = Tensor(rng.normals(out.shape))
    return lambda y: T.sum(T.mul(y, w))


def _op_case(name: str, rng: SplitMix64, shapes, op, transform=None) -> Case:
    params = {}
    for i, shape in enumerate(shapes):
        x = rng.normals(shape)
        params[f"x{i}"] = _leaf(transform(x) if transform else x)
    probe = _probe_sum(op(*params.values()), rng)
    return name, lambda p: probe(op(*p.values())), params


def _away_from_zero(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * (0.2 + np.abs(x)) + (x == 0) * 0.2


def _core_cases(rng: SplitMix64) -> Iterator[Case]:
    def dim(hi: int = 4) -> int:
        return 1 + rng.randbelow(hi)

    a, b, c = dim(), dim(), dim()
    s = (a, b)
    yield _op_case("add", rng, [s, s], T.add)
    yield _op_case("add_suffix", rng, [(2, a, b), (b,)], T.add)
    yield _op_case("sub", rng, [s, (b,)], T.sub)
    yield _op_case("mul", rng, [(2, a, b), s], T.mul)
    yield _op_case("div", rng, [s, s], T.div)
    yield _op_case("div_denominator", rng, [s], lambda x: T.div(Tensor(np.ones(s)), x),
                   _away_from_zero)
    yield _op_case("scale", rng, [s], lambda x: T.scale(x, -1.7))
    yield _op_case("sigmoid", rng, [s], T.sigmoid)
    yield _op_case("tanh", rng, [s], T.tanh)
    yield _op_case("relu", rng, [s], T.relu, _away_from_zero)
    yield _op_case("gelu", rng, [s], T.gelu)
    yield _op_case("softplus", rng, [s], T.softplus)
    yield _op_case("matmul", rng, [(a, b), (b, c)], T.matmul)
    yield _op_case("matmul_shared", rng, [(2, a, b), (b, c)], T.matmul)
    yield _op_case("matmul_batched", rng, [(2, a, b), (2, b, c)], T.matmul)
    yield _op_case("transpose", rng, [(a, b, c)], lambda x: T.transpose(x, (2, 0, 1)))
    yield _op_case("reshape", rng, [(a, b * c)], lambda x: T.reshape(x, (a * b, c)))
    yield _op_case("broadcast_to", rng, [(b, 1)], lambda x: T.broadcast_to(x, (a, b, c)))
    yield _op_case("sum", rng, [(a, b, c)], lambda x: T.sum(x, axis=1, keepdims=True))
    yield _op_case("mean_axis", rng, [(a, b, c)], lambda x: T.mean_axis(x, axis=-2))
    yield _op_case("concat", rng, [(a, c), (b, c)], lambda x, y: T.concat([x, y], axis=0))
    rows = np.array([rng.randbelow(a + 1) for _ in range(3)])
    yield _op_case("getitem", rng, [(a + 1, 3)], lambda x: T.getitem(x, (rows, slice(1, 3))))
    yield _op_case("slice_take", rng, [(a + 2, b)],
                   lambda x: T.take(T.slice_axis(x, 0, 1, a + 2), rows, axis=0))
    mask = np.tril(np.ones((b, b), dtype=bool))
    yield _op_case("softmax", rng, [(a, b, b)], lambda x: T.softmax_lastdim(x, mask))
    d = dim(5) + 2  # at width 2 the normalised output is ±1 and its input gradient vanishes
    yield _op_case("layer_norm", rng, [(a, d), (d,), (d,)], T.layer_norm)
    targets = np.array([rng.randbelow(c + 1) for _ in range(a)])
    yield _op_case("cross_entropy", rng, [(a, c + 1)],
                   lambda x: T.scale(T.cross_entropy(x, targets), float(a)))


def _randomize(module: Module, rng: SplitMix64, std: float = 0.5) -> None:
    """Replace constant-initialised tensors (zero LoRA ``B``, gates, biases, norms).

    At their initial values some gradients vanish identically or coincide, which
    would leave those paths unchecked.
    """
    for _, p in module.named_parameters():
        if p.requires_grad and p.size and np.all(p.data == p.data.reshape(-1)[0]):
            p.data = p.data + rng.normals(p.shape, std)


def _module_case(name: str, module: Module, x: np.ndarray, rng: SplitMix64,
                 forward=None) -> Case:
    _randomize(module, rng)
    xt = _leaf(x)
    forward = forward or (lambda inp: module(inp))
    probe = _probe_sum(forward(xt), rng)
    params = {"input": xt, **{k: p for k, p in module.named_parameters() if p.requires_grad}}
    return name, lambda p: probe(forward(xt)), params


def _lora_cases(rng: SplitMix64) -> Iterator[Case]:
    d_in, d_out, r = 2 + rng.randbelow(4), 2 + rng.randbelow(4), 1 + rng.randbelow(3)
    layer = LoraLinear(d_in, d_out, rng, rank=r, alpha=2.0 * r)
    yield _module_case("lora", layer, rng.normals((2, d_in)), rng)


def _fusion_cases(rng: SplitMix64) -> Iterator[Case]:
    V = 1 + rng.randbelow(3)
    block = CrossViewFusion(4, 2, rng, max_views=3, ffn_hidden=6, lora_rank=2, lora_alpha=4.0)
    yield _module_case("fusion", block, rng.normals((2, V, 4)), rng)
    attn = MultiHeadAttention(4, 2, rng)
    yield _module_case("attention_causal", attn, rng.normals((3, 4)), rng,
                       lambda inp: attn(inp, causal=True))


def _agp_cases(rng: SplitMix64) -> Iterator[Case]:
    block = AttentiveGatedProjector(8, 8, 2, rng, ffn_hidden=8)
    yield _module_case("agp", block, rng.normals((2, 3, 8)), rng)


def _lm_cases(rng: SplitMix64) -> Iterator[Case]:
    vocab = Vocab("ab")
    dec = TinyDecoder(len(vocab), 8, 2, 2, rng, max_len=5, ffn_hidden=8)
    _randomize(dec, rng)
    plan = assemble_sequence("a", None, "ba", vocab, dec.max_len)
    params = dict(dec.named_parameters())
    yield "decoder", lambda p: lm_loss(lm_forward(dec, plan), plan), params

    agp = AttentiveGatedProjector(4, 8, 2, rng, ffn_hidden=4)
    dec = TinyDecoder(len(vocab), 8, 2, 2, rng, max_len=6, ffn_hidden=8)
    _randomize(agp, rng)
    _randomize(dec, rng)
    feats = _leaf(rng.normals((2, 2, 4)))

    def pipeline(p):
        video = agp(feats)
        plan = assemble_sequence("<vid><vid>", video, "ab", vocab, dec.max_len)
        return lm_loss(lm_forward(dec, plan), plan)

    params = {"features": feats,
              **{f"agp.{k}": v for k, v in agp.named_parameters()},
              **{f"decoder.{k}": v for k, v in dec.named_parameters()}}
    yield "agp_decoder", pipeline, params


_BUILDERS = {"core": _core_cases, "lora": _lora_cases, "fusion": _fusion_cases,
             "agp": _agp_cases, "lm": _lm_cases}
DEFAULT_SEEDS = {"core": 4, "lora": 100, "fusion": 10, "agp": 10, "lm": 2}


def run_family(family: str, seeds: int | None = None, base_seed: int = 2024) -> FamilyResult:
    n = DEFAULT_SEEDS[family] if seeds is None else seeds
    start = time.perf_counter()
    worst, where, count = 0.0, "-", 0
    for seed in range(n):
        rng = SplitMix64(base_seed).child(seed)
        for name, fn, params in _BUILDERS[family](rng):
            report = gradcheck(fn, params)
            count += 1
            if report.max_relative_error >= worst:
                worst = report.max_relative_error
                where = f"{name} seed={seed} {report.offending_parameter}{list(report.offending_index or ())}"
    return FamilyResult(family, count, worst, where, time.perf_counter() - start)


def run_suites(module: str = "all") -> list[FamilyResult]:
    families = FAMILIES if module == "all" else (module,)
    return [run_family(f) for f in families]
