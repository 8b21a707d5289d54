import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subpool.corpus import (
    CannotSatisfySizesError, Example, MorphTaskSpec, ParseError, ProbeDataset,
    RawSentence, bio_is_wellformed, load_morph_tasks, parse_bio_tsv, parse_conllu,
    repair_bio, sample_morph, sample_tagging, serialize_bio_tsv, serialize_conllu,
)

CONLLU_BLOCK = """\
# sent_id = 1
1\tHe\the\tPRON\t_\tCase=Nom\t_\t_\t_\t_
2\truns\trun\tVERB\t_\tTense=Pres|VerbForm=Fin\t_\t_\t_\t_
3\t.\t.\tPUNCT\t_\t_\t_\t_\t_\t_
"""


def test_parse_conllu_empty():
    assert parse_conllu("") == []


def test_parse_conllu_basic():
    (s,) = parse_conllu(CONLLU_BLOCK)
    assert s.tokens == ["He", "runs", "."]
    assert s.upos == ["PRON", "VERB", "PUNCT"]
    assert s.feats == [{"Case": "Nom"}, {"Tense": "Pres", "VerbForm": "Fin"}, {}]


def test_parse_conllu_skips_ranges_and_empty_nodes():
    text = (
        "1\tA\t_\tDET\t_\t_\t_\t_\t_\t_\n"
        "3-4\tdu\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "3\tde\t_\tADP\t_\t_\t_\t_\t_\t_\n"
        "4\tle\t_\tDET\t_\t_\t_\t_\t_\t_\n"
        "4.1\tghost\t_\tX\t_\t_\t_\t_\t_\t_\n"
    )
    (s,) = parse_conllu(text)
    assert s.tokens == ["A", "de", "le"]


def test_parse_conllu_bad_columns():
    with pytest.raises(ParseError, match="line 1"):
        parse_conllu("1\tonly\tthree")


def test_conllu_roundtrip():
    sents = parse_conllu(CONLLU_BLOCK)
    assert parse_conllu(serialize_conllu(sents)) == sents


def test_parse_bio_basic():
    (s,) = parse_bio_tsv("John\tB-PER\nran\tO\n")
    assert s.tokens == ["John", "ran"]
    assert s.ner == ["B-PER", "O"]


def test_parse_bio_repairs_orphan_inside():
    (s,) = parse_bio_tsv("Paris\tI-LOC\nis\tO\nnice\tI-ORG\n")
    assert s.ner == ["B-LOC", "O", "B-ORG"]
    assert bio_is_wellformed(s.ner)


def test_parse_bio_strips_lang_prefix():
    (s,) = parse_bio_tsv("en:Paris\tB-LOC\n")
    assert s.tokens == ["Paris"]


def test_parse_bio_missing_tab():
    with pytest.raises(ParseError, match="line 2"):
        parse_bio_tsv("a\tO\nbroken line\n")


def test_bio_roundtrip():
    sents = parse_bio_tsv("John\tB-PER\nSmith\tI-PER\n\nParis\tB-LOC\n")
    assert parse_bio_tsv(serialize_bio_tsv(sents)) == sents


def test_repair_bio_type_switch():
    assert repair_bio(["B-PER", "I-LOC"]) == ["B-PER", "B-LOC"]
    assert repair_bio(["O", "I-PER", "I-PER"]) == ["O", "B-PER", "I-PER"]


def test_raw_sentence_length_mismatch():
    with pytest.raises(ParseError):
        RawSentence(["a", "b"], upos=["X"])


# ---------------------------------------------------------------- sampling

def synthetic_corpus(n=600, n_forms=200, labels=("A", "B", "C"), seed=0,
                     weights=(1, 1, 1)):
    rng = random.Random(seed)
    sents = []
    for i in range(n):
        form = f"word{rng.randrange(n_forms)}"
        label = rng.choices(labels, weights=weights)[0]
        sents.append(
            RawSentence(
                tokens=["the", form, "runs"],
                upos=["DET", "NOUN", "VERB"],
                feats=[{}, {"Case": label}, {}],
            )
        )
    return sents


SPEC = MorphTaskSpec("Synthetic", "Case", "NOUN")


def test_sample_morph_sizes_and_constraints():
    ds = sample_morph(synthetic_corpus(), SPEC, (100, 30, 30), seed=1)
    assert ds.sizes == {"train": 100, "dev": 30, "test": 30}
    train_forms = {e.tokens[e.target_index].lower() for e in ds.splits["train"]}
    for split in ("dev", "test"):
        forms = {e.tokens[e.target_index].lower() for e in ds.splits[split]}
        assert not train_forms & forms
    for split, examples in ds.splits.items():
        counts = {}
        for e in examples:
            counts[e.label] = counts.get(e.label, 0) + 1
        assert max(counts.values()) <= 3 * min(counts.values())


def test_sample_morph_deterministic():
    corpus = synthetic_corpus()
    a = sample_morph(corpus, SPEC, (60, 20, 20), seed=5)
    b = sample_morph(corpus, SPEC, (60, 20, 20), seed=5)
    assert a == b


def test_sample_morph_seed_changes_dataset():
    corpus = synthetic_corpus(n=5000, n_forms=1500)
    a = sample_morph(corpus, SPEC, (2000, 200, 200), seed=1)
    b = sample_morph(corpus, SPEC, (2000, 200, 200), seed=2)
    assert a != b
    for ds in (a, b):
        assert ds.sizes == {"train": 2000, "dev": 200, "test": 200}


def test_sample_morph_same_form_same_split():
    # one form with two different labels: both instances must share a split
    sents = [
        RawSentence(["okapi"], ["NOUN"], [{"Case": "A"}]),
        RawSentence(["okapi"], ["NOUN"], [{"Case": "B"}]),
    ]
    sents += synthetic_corpus(n=200, n_forms=80, seed=3)
    ds = sample_morph(sents, SPEC, (50, 20, 20), seed=0)
    holding = [
        split
        for split, exs in ds.splits.items()
        for e in exs
        if e.tokens[e.target_index].lower() == "okapi"
    ]
    assert len(set(holding)) <= 1


def test_sample_morph_imbalance_cap():
    # labels 90:10 -> at most 3:1 kept
    corpus = synthetic_corpus(n=400, n_forms=300, labels=("A", "B"), weights=(9, 1))
    ds = sample_morph(corpus, SPEC, (40, 8, 8), seed=0)
    for split, exs in ds.splits.items():
        counts = {}
        for e in exs:
            counts[e.label] = counts.get(e.label, 0) + 1
        assert max(counts.values()) <= 3 * min(counts.values())


def test_sample_morph_insufficient_data():
    with pytest.raises(CannotSatisfySizesError, match="cannot satisfy sizes"):
        sample_morph(synthetic_corpus(n=50), SPEC, (2000, 200, 200), seed=0)


def test_sample_morph_no_candidates():
    sents = [RawSentence(["x"], ["VERB"], [{}])]
    with pytest.raises(CannotSatisfySizesError):
        sample_morph(sents, SPEC, (10, 2, 2), seed=0)


def tagging_corpus(n, seed=0, length=5):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        toks = [f"t{i}_{j}" for j in range(length)]
        out.append(RawSentence(toks, upos=[rng.choice("AB") for _ in toks]))
    return out


def test_sample_tagging_length_filter_errors():
    sents = tagging_corpus(50, length=41)
    with pytest.raises(CannotSatisfySizesError):
        sample_tagging(sents, 40, 10, 5, 5, dedup=False, seed=0)


def test_sample_tagging_dedup():
    base = tagging_corpus(60)
    dup = base + [RawSentence(list(s.tokens), upos=list(s.upos)) for s in base]
    ds = sample_tagging(dup, 40, 30, 10, 10, dedup=True, seed=0)
    seen = set()
    for split in ds.splits.values():
        for e in split:
            key = tuple(e.tokens)
            assert key not in seen
            seen.add(key)


def test_sample_tagging_exact_disjoint_splits():
    sents = tagging_corpus(12000)
    ds = sample_tagging(sents, 40, 10000, 1000, 1000, dedup=False, seed=0)
    assert ds.sizes == {"train": 10000, "dev": 1000, "test": 1000}
    ids = [tuple(e.tokens) for split in ds.splits.values() for e in split]
    assert len(ids) == len(set(ids))


def test_sample_tagging_deterministic():
    sents = tagging_corpus(200)
    a = sample_tagging(sents, 40, 100, 30, 30, dedup=False, seed=9)
    b = sample_tagging(sents, 40, 100, 30, 30, dedup=False, seed=9)
    assert a == b


def test_jsonl_roundtrip(tmp_path):
    ds = sample_morph(synthetic_corpus(), SPEC, (40, 10, 10), seed=0)
    path = tmp_path / "train.jsonl"
    ds.write_jsonl("train", path)
    loaded = ProbeDataset.read_jsonl(path)
    assert loaded == ds.splits["train"]
    rec = json.loads(path.read_text().splitlines()[0])
    assert set(rec) == {"tokens", "target_index", "label"}


def test_load_morph_tasks_fixture():
    tasks = load_morph_tasks()
    assert len(tasks) == 14
    spec, n_classes = tasks["finnish_case_noun"]
    assert (spec.language, spec.tag, spec.pos) == ("Finnish", "Case", "NOUN")
    assert n_classes == 12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_sampling_determinism_property(seed):
    corpus = synthetic_corpus(n=300, n_forms=120, seed=7)
    a = sample_morph(corpus, SPEC, (60, 15, 15), seed=seed)
    b = sample_morph(corpus, SPEC, (60, 15, 15), seed=seed)
    assert a == b
