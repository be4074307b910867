"""Response grammar: ``Proficiency Level: <label>; Proficiency Commentary: <feedback>``.

Strict parsing accepts optional leading whitespace, case-insensitive keywords and
labels, and whitespace around the label and the ``;`` separator. Lenient parsing
falls back to the first label mentioned anywhere in the text.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import ContractError, InputError, ParseError
from .rng import SplitMix64

DELIMITER = "; Proficiency Commentary:"


class ProficiencyLabel(enum.IntEnum):
    NOVICE = 0
    EARLY_EXPERT = 1
    INTERMEDIATE_EXPERT = 2
    LATE_EXPERT = 3

    @property
    def text(self) -> str:
        return _CANONICAL[self]

    @classmethod
    def from_text(cls, text: str) -> "ProficiencyLabel":
        key = " ".join(text.split()).lower()
        for label, canon in _CANONICAL.items():
            if canon.lower() == key:
                return label
        raise ParseError(f"unknown proficiency label {text!r}")


_CANONICAL = {
    ProficiencyLabel.NOVICE: "Novice",
    ProficiencyLabel.EARLY_EXPERT: "Early Expert",
    ProficiencyLabel.INTERMEDIATE_EXPERT: "Intermediate Expert",
    ProficiencyLabel.LATE_EXPERT: "Late Expert",
}
_LABEL_ALT = "|".join(re.escape(c) for c in _CANONICAL.values())
_STRICT = re.compile(
    rf"\s*proficiency level:\s*({_LABEL_ALT})\s*;\s*proficiency commentary:(.*)\Z",
    re.IGNORECASE | re.DOTALL,
)
_ANY_LABEL = re.compile(_LABEL_ALT, re.IGNORECASE)


@dataclass(frozen=True)
class StructuredResponse:
    label: ProficiencyLabel
    commentary: str


def format_target(resp: StructuredResponse) -> str:
    commentary = resp.commentary
    if not commentary.strip():
        raise ContractError("commentary is empty")
    if DELIMITER.lower() in commentary.lower():
        raise ContractError(f"commentary contains the delimiter {DELIMITER!r}")
    return f"Proficiency Level: {resp.label.text}; Proficiency Commentary: {commentary}"


def parse_output(text: str | bytes, lenient: bool = False) -> StructuredResponse:
    """Parse a generated response.

    In lenient mode a failed strict parse falls back to the earliest label occurring
    anywhere in the text; the commentary is whatever follows the first ``:`` or ``;``
    after that label, or the rest of the text when no such separator follows. A
    lenient commentary may therefore be empty.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    m = _STRICT.match(text)
    if m:
        commentary = m.group(2).strip()
        if commentary:
            return StructuredResponse(ProficiencyLabel.from_text(m.group(1)), commentary)
        strict_reason = "empty commentary"
    else:
        strict_reason = "text does not match 'Proficiency Level: <label>; Proficiency Commentary: <feedback>'"
    if not lenient:
        raise ParseError(strict_reason)

    hit = _ANY_LABEL.search(text)
    if hit is None:
        raise ParseError("no proficiency label found")
    rest = text[hit.end():]
    sep = re.search(r"[:;]", rest)
    commentary = rest[sep.end():] if sep else rest
    return StructuredResponse(ProficiencyLabel.from_text(hit.group(0)), commentary.strip())


DOMAINS = ("cooking", "basketball", "soccer", "dancing", "music", "bouldering")

_VERDICTS = {
    ProficiencyLabel.NOVICE: "still building basic control",
    ProficiencyLabel.EARLY_EXPERT: "solid basics but inconsistent",
    ProficiencyLabel.INTERMEDIATE_EXPERT: "steady and mostly efficient",
    ProficiencyLabel.LATE_EXPERT: "fluid, precise and confident",
}
_SKILLS = ("knife work", "shot release", "first touch", "beat timing",
           "finger phrasing", "foot placement")
_VARIATIONS = ("keep practicing", "review your footage", "focus on one cue",
               "slow down a bit")


def synth_commentary(label: ProficiencyLabel, domain_id: int, rng_seed: int) -> str:
    """Templated expert-style feedback: verdict, domain skill, seeded variation."""
    if not 0 <= domain_id < len(DOMAINS):
        raise InputError(f"domain_id must be in [0, {len(DOMAINS) - 1}], got {domain_id}")
    variation = _VARIATIONS[SplitMix64(rng_seed).randbelow(len(_VARIATIONS))]
    return f"{_VERDICTS[ProficiencyLabel(label)]}, watch the {_SKILLS[domain_id]}, {variation}."


def corpus_alphabet() -> set[str]:
    """Every character the commentary templates and response grammar can emit."""
    chars = set(DELIMITER) | set("Proficiency Level: ")
    for text in (*_VERDICTS.values(), *_SKILLS, *_VARIATIONS, *_CANONICAL.values()):
        chars |= set(text)
    return chars | set(", watch the .")


def write_corpus(path, rows) -> None:
    """Write ``label<TAB>commentary`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for label, commentary in rows:
            fh.write(f"{ProficiencyLabel(label).text}\t{commentary}\n")


def read_corpus(path) -> list[StructuredResponse]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            label, sep, commentary = line.partition("\t")
            if not sep:
                raise ParseError(f"line {lineno}: missing tab separator")
            out.append(StructuredResponse(ProficiencyLabel.from_text(label), commentary))
    return out
