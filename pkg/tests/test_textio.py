import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvprof.errors import ContractError, InputError, ParseError
from mvprof.lm import Vocab
from mvprof.rng import SplitMix64
from mvprof.textio import (
    DELIMITER,
    DOMAINS,
    ProficiencyLabel,
    StructuredResponse,
    corpus_alphabet,
    format_target,
    parse_output,
    read_corpus,
    synth_commentary,
    write_corpus,
)

N, E, I, L = (ProficiencyLabel.NOVICE, ProficiencyLabel.EARLY_EXPERT,
              ProficiencyLabel.INTERMEDIATE_EXPERT, ProficiencyLabel.LATE_EXPERT)

# (text, strict result or None, lenient result or None); None means ParseError.
FIXTURES = [
    ("Proficiency Level: Intermediate Expert; Proficiency Commentary: solid footwork",
     (I, "solid footwork"), (I, "solid footwork")),
    ("proficiency level:  novice ;Proficiency Commentary:ok", (N, "ok"), (N, "ok")),
    ("Level Late Expert stuff", None, (L, "stuff")),
    ("Proficiency Level: Novice; Proficiency Commentary: keep elbows in",
     (N, "keep elbows in"), (N, "keep elbows in")),
    ("Proficiency Level: Late Expert; Proficiency Commentary: x", (L, "x"), (L, "x")),
    ("Proficiency Level: Early Expert; Proficiency Commentary: a; b: c",
     (E, "a; b: c"), (E, "a; b: c")),
    ("   \n\tProficiency Level: Novice; Proficiency Commentary: lead ws", (N, "lead ws"),
     (N, "lead ws")),
    ("PROFICIENCY LEVEL: LATE EXPERT; PROFICIENCY COMMENTARY: LOUD", (L, "LOUD"), (L, "LOUD")),
    ("Proficiency Level:Early Expert;Proficiency Commentary:tight", (E, "tight"), (E, "tight")),
    ("Proficiency Level: \t Intermediate Expert \t ; \t Proficiency Commentary:  padded  ",
     (I, "padded"), (I, "padded")),
    ("Proficiency Level: Novice; Proficiency Commentary: two\nlines", (N, "two\nlines"),
     (N, "two\nlines")),
    ("Proficiency Level: Novice; Proficiency Commentary: trailing\n\n", (N, "trailing"),
     (N, "trailing")),
    ("Proficiency Level: novice; proficiency commentary: lower", (N, "lower"), (N, "lower")),
    ("Proficiency Level: eArLy ExPeRt; Proficiency Commentary: mixed", (E, "mixed"), (E, "mixed")),
    # empty commentary fails strict; lenient takes text after the first ':' or ';'
    ("Proficiency Level: Novice; Proficiency Commentary:", None, (N, "Proficiency Commentary:")),
    ("Proficiency Level: Novice; Proficiency Commentary:   ", None, (N, "Proficiency Commentary:")),
    ("Proficiency Level: Expert; Proficiency Commentary: no such label", None, None),
    ("Proficiency Level: Master; Proficiency Commentary: nope", None, None),
    ("Proficiency Level: Early  Expert; Proficiency Commentary: two spaces", None, None),
    ("Proficiency Level Novice; Proficiency Commentary: missing colon", None,
     (N, "Proficiency Commentary: missing colon")),
    ("Proficiency Level: Novice, Proficiency Commentary: comma", None,
     (N, "comma")),
    ("Proficiency Level: Novice Proficiency Commentary: no semicolon", None,
     (N, "no semicolon")),
    ("Proficiency Level: Novice; Commentary: short key", None, (N, "Commentary: short key")),
    ("Level: Novice; Proficiency Commentary: short level key", None,
     (N, "Proficiency Commentary: short level key")),
    ("xProficiency Level: Novice; Proficiency Commentary: prefix junk", None,
     (N, "Proficiency Commentary: prefix junk")),
    ("", None, None),
    ("   ", None, None),
    ("novice", None, (N, "")),
    ("Late Expert", None, (L, "")),
    ("the verdict is Early Expert: nice balance", None, (E, "nice balance")),
    ("I'd say intermediate expert; clean", None, (I, "clean")),
    ("late expert overall. Novice moments: few", None, (L, "few")),
    ("Novice then Late Expert; which?", None, (N, "which?")),
    ("expert", None, None),
    ("Intermediate", None, None),
    ("novices: many", None, (N, "many")),
    ("Proficiency Commentary: first; Proficiency Level: Novice", None, (N, "")),
    ("Proficiency Level: Late Expert; Proficiency Commentary: Novice mistakes",
     (L, "Novice mistakes"), (L, "Novice mistakes")),
    ("Proficiency Level: Late Expert; Proficiency Commentary: see; Proficiency Commentary: again",
     (L, "see; Proficiency Commentary: again"), (L, "see; Proficiency Commentary: again")),
    ("Proficiency Level: Novice; Proficiency Commentary: ünïcode ok", (N, "ünïcode ok"),
     (N, "ünïcode ok")),
    ("Proficiency Level: Novice; Proficiency Commentary: nbsp", (N, "nbsp"), (N, "nbsp")),
    ("\x00Proficiency Level: Novice; Proficiency Commentary: nul", None,
     (N, "Proficiency Commentary: nul")),
    ("Proficiency Level: Intermediate Expert;; Proficiency Commentary: double", None,
     (I, "; Proficiency Commentary: double")),
    ("Proficiency Level: Late Expert ; Proficiency Commentary : spaced key", None,
     (L, "Proficiency Commentary : spaced key")),
    ("Proficiency  Level: Novice; Proficiency Commentary: wide key", None,
     (N, "Proficiency Commentary: wide key")),
    ("Proficiency Level:\nNovice\n;\nProficiency Commentary:\nnewlines", (N, "newlines"),
     (N, "newlines")),
    ("EARLY EXPERT", None, (E, "")),
    ("earlyexpert: joined", None, None),
    ("late-expert: hyphen", None, None),
    ("Proficiency Level: Early Expert; Proficiency Commentary: .", (E, "."), (E, ".")),
]


def _resp(pair):
    return None if pair is None else StructuredResponse(*pair)


def test_fixture_table_has_fifty_cases():
    assert len(FIXTURES) == 50
    assert len({t for t, _, _ in FIXTURES}) == 50


@pytest.mark.parametrize("text,strict,lenient", FIXTURES)
def test_fixture_strict(text, strict, lenient):
    if strict is None:
        with pytest.raises(ParseError):
            parse_output(text)
    else:
        assert parse_output(text) == _resp(strict)


@pytest.mark.parametrize("text,strict,lenient", FIXTURES)
def test_fixture_lenient(text, strict, lenient):
    if lenient is None:
        with pytest.raises(ParseError):
            parse_output(text, lenient=True)
    else:
        assert parse_output(text, lenient=True) == _resp(lenient)


def test_parse_error_carries_reason():
    with pytest.raises(ParseError) as info:
        parse_output("nothing here")
    assert info.value.reason


class TestFormat:
    def test_template(self):
        assert (format_target(StructuredResponse(N, "keep elbows in"))
                == "Proficiency Level: Novice; Proficiency Commentary: keep elbows in")
        assert (format_target(StructuredResponse(L, "x"))
                == "Proficiency Level: Late Expert; Proficiency Commentary: x")

    def test_rejects_delimiter_and_empty(self):
        with pytest.raises(ContractError):
            format_target(StructuredResponse(N, "a" + DELIMITER + " b"))
        with pytest.raises(ContractError):
            format_target(StructuredResponse(N, "  "))

    def test_round_trip_four_labels_twenty_commentaries(self):
        rng = SplitMix64(99)
        alphabet = sorted(Vocab().alphabet)
        for label in ProficiencyLabel:
            for _ in range(20):
                n = 1 + rng.randbelow(40)
                text = "".join(alphabet[rng.randbelow(len(alphabet))] for _ in range(n)).strip()
                text = text or "x"
                resp = StructuredResponse(label, text)
                assert parse_output(format_target(resp)) == resp

    @given(st.sampled_from(list(ProficiencyLabel)),
           st.text(st.characters(min_codepoint=32, max_codepoint=0x2FF), min_size=1))
    def test_round_trip_property(self, label, commentary):
        commentary = commentary.strip()
        if not commentary or DELIMITER.lower() in commentary.lower():
            return
        resp = StructuredResponse(label, commentary)
        assert parse_output(format_target(resp)) == resp


class TestTotality:
    @given(st.binary(max_size=200))
    def test_bytes_never_crash(self, data):
        for lenient in (False, True):
            try:
                out = parse_output(data, lenient=lenient)
            except ParseError:
                continue
            assert out.label in set(ProficiencyLabel)

    @given(st.text(max_size=200))
    def test_text_never_crash(self, text):
        try:
            out = parse_output(text, lenient=True)
        except ParseError:
            return
        assert isinstance(out.label, ProficiencyLabel)

    def test_exactly_four_labels(self):
        assert len(ProficiencyLabel) == 4
        assert len({l.text for l in ProficiencyLabel}) == 4
        with pytest.raises(ParseError):
            ProficiencyLabel.from_text("Expert")


class TestSynthCommentary:
    def test_deterministic(self):
        assert synth_commentary(N, 0, 7) == synth_commentary(N, 0, 7)

    def test_distinct_verdicts_per_label(self):
        texts = [synth_commentary(label, 2, 5) for label in ProficiencyLabel]
        verdicts = {t.split(",")[0] for t in texts}
        assert len(verdicts) == 4

    def test_variation_takes_four_values(self):
        seen = {synth_commentary(N, 0, s).rsplit(", ", 1)[1] for s in range(200)}
        assert len(seen) == 4

    def test_alphabet_within_vocab(self):
        vocab = Vocab().alphabet
        assert corpus_alphabet() <= vocab
        rng = SplitMix64(1)
        for _ in range(1000):
            label = ProficiencyLabel(rng.randbelow(4))
            text = synth_commentary(label, rng.randbelow(len(DOMAINS)), rng.next_u64())
            assert set(text) <= vocab
            assert set(format_target(StructuredResponse(label, text))) <= vocab

    def test_bad_domain(self):
        with pytest.raises(InputError):
            synth_commentary(N, 6, 0)


def test_corpus_file_round_trip(tmp_path):
    rows = [(label, synth_commentary(label, d, s)) for label in ProficiencyLabel
            for d, s in ((0, 1), (5, 2))]
    path = tmp_path / "corpus.tsv"
    write_corpus(path, rows)
    back = read_corpus(path)
    assert back == [StructuredResponse(ProficiencyLabel(l), c) for l, c in rows]
    path.write_text("Novice no tab\n")
    with pytest.raises(ParseError):
        read_corpus(path)
