"""Label accuracy and text-overlap metrics.

Text metrics work on lowercase whitespace tokens. METEOR here is the exact-match
variant: no stemming or synonym stages, only the harmonic mean and the
fragmentation penalty.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

from .errors import ContractError, DimensionError, ParseError


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def top1(preds: Sequence, golds: Sequence) -> float:
    if len(preds) != len(golds):
        raise DimensionError(f"{len(preds)} predictions for {len(golds)} references")
    if not golds:
        raise ContractError("top1 over an empty set")
    return sum(p == g for p, g in zip(preds, golds)) / len(golds)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    if not reference:
        raise ContractError("ROUGE-L needs a non-empty reference")
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(candidate), lcs / len(reference)
    return 2 * p * r / (p + r)


def align_exact(candidate: Sequence[str], reference: Sequence[str]) -> list[tuple[int, int]]:
    """One-to-one exact unigram alignment, greedy in reference order.

    Each reference token takes the earliest still-unused equal candidate token.
    Returns ``(candidate_pos, reference_pos)`` pairs sorted by candidate position.
    """
    used = [False] * len(candidate)
    pairs = []
    for j, tok in enumerate(reference):
        for i, cand in enumerate(candidate):
            if not used[i] and cand == tok:
                used[i] = True
                pairs.append((i, j))
                break
    return sorted(pairs)


def count_chunks(pairs: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    for k, (i, j) in enumerate(pairs):
        if k == 0 or not (i == pairs[k - 1][0] + 1 and j == pairs[k - 1][1] + 1):
            chunks += 1
    return chunks


def meteor_exact(candidate: Sequence[str], reference: Sequence[str]) -> float:
    if not reference:
        raise ContractError("METEOR needs a non-empty reference")
    pairs = align_exact(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    p, r = m / len(candidate), m / len(reference)
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (count_chunks(pairs) / m) ** 3
    return f_mean * (1 - penalty)


@dataclass
class EvalReport:
    """Evaluation summary. Text metrics are ``None`` for label-only pipelines.

    ``top1`` counts unparseable generations as wrong; ``top1_parsed`` excludes them.
    Text metrics are averaged over parseable samples only.
    """

    top1: float
    sample_count: int
    per_domain: dict[str, float] = field(default_factory=dict)
    per_domain_counts: dict[str, int] = field(default_factory=dict)
    parse_success_rate: float | None = None
    lenient_parse_rate: float | None = None
    top1_parsed: float | None = None
    rouge_l: float | None = None
    meteor_exact: float | None = None

    def check(self) -> None:
        for name in ("top1", "parse_success_rate", "lenient_parse_rate", "top1_parsed",
                     "rouge_l", "meteor_exact"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ContractError(f"{name}={v} outside [0, 1]")
        if sum(self.per_domain_counts.values()) != self.sample_count:
            raise ContractError("per-domain counts do not sum to sample_count")

    def to_dict(self) -> dict:
        return asdict(self)


def per_domain_top1(preds, golds, domains) -> tuple[dict[str, float], dict[str, int]]:
    hits: dict[int, list[int]] = {}
    for p, g, d in zip(preds, golds, domains):
        hits.setdefault(int(d), []).append(int(p == g))
    keys = sorted(hits)
    return ({str(k): sum(hits[k]) / len(hits[k]) for k in keys},
            {str(k): len(hits[k]) for k in keys})


def evaluate_labels(preds, samples) -> EvalReport:
    """Report for a label-only (classification head) pipeline."""
    golds = [s.label for s in samples]
    domains = [s.domain_id for s in samples]
    per, counts = per_domain_top1(preds, golds, domains)
    report = EvalReport(top1=top1(preds, golds), sample_count=len(samples),
                        per_domain=per, per_domain_counts=counts)
    report.check()
    return report


def evaluate_generative(model, dataset) -> EvalReport:
    """Generate, parse and score every sample.

    ``model.respond(sample)`` returns the generated text; a model that also has
    ``respond_batch(samples)`` is called once with the whole set instead. Parsing tries the strict
    grammar first and falls back to lenient; samples that fail both count as wrong
    for ``top1`` and are left out of ``top1_parsed`` and the text metrics.
    """
    from .textio import parse_output

    samples = list(dataset)
    if not samples:
        raise ContractError("evaluate_generative needs at least one sample")
    preds, strict_ok, lenient_ok = [], 0, 0
    parsed_hits, rouge, meteor = [], [], []
    if hasattr(model, "respond_batch"):
        texts = model.respond_batch(samples)
    else:
        texts = [model.respond(s) for s in samples]
    for s, text in zip(samples, texts):
        resp = None
        try:
            resp = parse_output(text)
            strict_ok += 1
        except ParseError:
            try:
                resp = parse_output(text, lenient=True)
            except ParseError:
                resp = None
        if resp is None:
            preds.append(None)
            continue
        lenient_ok += 1
        preds.append(resp.label)
        parsed_hits.append(resp.label == s.label)
        ref = tokenize(s.commentary)
        cand = tokenize(resp.commentary)
        rouge.append(rouge_l(cand, ref))
        meteor.append(meteor_exact(cand, ref))

    golds = [s.label for s in samples]
    per, counts = per_domain_top1(preds, golds, [s.domain_id for s in samples])
    n = len(samples)
    report = EvalReport(
        top1=top1(preds, golds),
        sample_count=n,
        per_domain=per,
        per_domain_counts=counts,
        parse_success_rate=strict_ok / n,
        lenient_parse_rate=lenient_ok / n,
        top1_parsed=sum(parsed_hits) / len(parsed_hits) if parsed_hits else None,
        rouge_l=sum(rouge) / len(rouge) if rouge else None,
        meteor_exact=sum(meteor) / len(meteor) if meteor else None,
    )
    report.check()
    return report
