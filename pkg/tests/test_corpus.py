"""Corpus model tests: taxonomy shape, rollup against a one-hop-at-a-time
oracle, content hashing, history replay and file round-trips."""

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from credloop.corpus import (
    Code,
    Dataset,
    Experience,
    RevisionEvent,
    Taxonomy,
    ValidationError,
    build_dataset,
    dataset_hash,
    ingest,
    initial_annotations,
    read_taxonomy,
    reference_taxonomy,
    replay_history,
    rollup,
    write_corpus,
    write_taxonomy,
)
from oracles import brute_rollup


def test_reference_taxonomy_shape():
    tax = reference_taxonomy()
    assert len(tax.level1) == 8
    assert len(tax.level2) == 39
    assert len(tax.level3) == 152
    # every level-2 group has at least one leaf
    assert all(tax.children(c.id) for c in tax.level2)
    assert tax.level_of("L2_01") == 2
    assert tax.level2_parent["L3_001"] == "L2_01"


def test_rollup_identity_at_level_3(tiny_taxonomy):
    assert rollup({"C1", "C5"}, 3, tiny_taxonomy) == frozenset({"C1", "C5"})


def test_rollup_union_semantics(tiny_taxonomy):
    assert rollup({"C1", "C2"}, 2, tiny_taxonomy) == frozenset({"M1"})
    assert rollup({"C1", "C3", "C5"}, 2, tiny_taxonomy) == frozenset({"M1", "M2", "M3"})
    assert rollup({"C1", "C3"}, 1, tiny_taxonomy) == frozenset({"T1"})
    assert rollup(set(), 2, tiny_taxonomy) == frozenset()


def test_rollup_rejects_unknown_codes_and_levels(tiny_taxonomy):
    with pytest.raises(ValidationError, match="unknown level-3"):
        rollup({"C1", "NOPE"}, 2, tiny_taxonomy)
    with pytest.raises(ValidationError, match="level"):
        rollup({"C1"}, 4, tiny_taxonomy)


def test_rollup_matches_oracle_on_100_random_sets():
    tax = reference_taxonomy()
    leaves = list(tax.ids(3))
    rng = random.Random(7)
    for _ in range(100):
        codes = set(rng.sample(leaves, rng.randint(0, 12)))
        level = rng.choice([1, 2, 3])
        assert rollup(codes, level, tax) == frozenset(brute_rollup(codes, level, tax))


@given(
    a=st.sets(st.sampled_from([f"L3_{i:03d}" for i in range(1, 153)]), max_size=8),
    b=st.sets(st.sampled_from([f"L3_{i:03d}" for i in range(1, 153)]), max_size=8),
    level=st.sampled_from([1, 2]),
)
@settings(max_examples=100, deadline=None)
def test_rollup_commutes_with_union(a, b, level):
    tax = reference_taxonomy()
    assert rollup(a | b, level, tax) == rollup(a, level, tax) | rollup(b, level, tax)


def test_taxonomy_validation():
    with pytest.raises(ValidationError, match="duplicate"):
        Taxonomy(level1=(Code("A", "a"), Code("A", "b")), level2=(), level3=())
    with pytest.raises(ValidationError, match="unknown parent"):
        Taxonomy(level1=(Code("A", "a"),), level2=(Code("B", "b", "X"),), level3=())
    with pytest.raises(ValidationError, match="unknown parent"):
        Taxonomy(
            level1=(Code("A", "a"),),
            level2=(Code("B", "b", "A"),),
            level3=(Code("C", "c", "X"),),
        )


def test_experience_validation():
    with pytest.raises(ValidationError, match="non-empty"):
        Experience(id="e", user_id="u", text="", demographics={}, annotations=frozenset())
    with pytest.raises(ValidationError, match="unknown revision action"):
        RevisionEvent(iteration=1, code_id="C1", action="toggled", annotator_id="a")
    with pytest.raises(ValidationError, match=">= 1"):
        RevisionEvent(iteration=0, code_id="C1", action="added", annotator_id="a")
    with pytest.raises(ValidationError, match="non-decreasing"):
        Experience(
            id="e", user_id="u", text="some text", demographics={},
            annotations=frozenset(),
            annotation_history=(
                RevisionEvent(2, "C1", "added", "a"),
                RevisionEvent(1, "C1", "removed", "a"),
            ),
        )


def test_dataset_validation(tiny_taxonomy):
    e = Experience(id="e1", user_id="u", text="text here", demographics={},
                   annotations=frozenset({"C1"}))
    with pytest.raises(ValidationError, match="duplicate experience id"):
        Dataset(experiences=(e, e), taxonomy=tiny_taxonomy, demographic_attributes=())
    bad = Experience(id="e2", user_id="u", text="text here", demographics={},
                     annotations=frozenset({"NOPE"}))
    with pytest.raises(ValidationError, match="unknown code id"):
        Dataset(experiences=(bad,), taxonomy=tiny_taxonomy, demographic_attributes=())


def test_by_id_and_group_defaults(tiny_dataset):
    assert tiny_dataset.by_id("e1").user_id == "u1"
    with pytest.raises(ValidationError, match="unknown experience id"):
        tiny_dataset.by_id("missing")
    # e11 had no race recorded; build_dataset normalises it
    assert tiny_dataset.by_id("e11").group("race") == "undisclosed"
    assert tiny_dataset.by_id("e1").group("unrecorded-attr") == "undisclosed"


def test_user_submission_counts(tiny_dataset):
    counts = tiny_dataset.user_submission_counts()
    assert counts == {"u1": 5, "u2": 5, "u3": 1}


def test_dataset_hash_tracks_annotations_not_history(tiny_dataset):
    h0 = dataset_hash(tiny_dataset)
    assert h0 == dataset_hash(tiny_dataset)

    e1 = tiny_dataset.by_id("e1")
    import dataclasses
    with_history = dataclasses.replace(
        e1,
        annotation_history=(RevisionEvent(1, "C2", "added", "ann", "why"),
                            RevisionEvent(1, "C2", "removed", "ann", "undo")),
    )
    same = tiny_dataset.with_experiences(
        [with_history if e.id == "e1" else e for e in tiny_dataset.experiences]
    )
    assert dataset_hash(same) == h0

    changed = tiny_dataset.with_experiences(
        [dataclasses.replace(e, annotations=e.annotations | {"C6"}) if e.id == "e1" else e
         for e in tiny_dataset.experiences]
    )
    assert dataset_hash(changed) != h0


def test_replay_history_round_trip():
    history = (
        RevisionEvent(1, "C1", "added", "a"),
        RevisionEvent(1, "C2", "added", "a"),
        RevisionEvent(2, "C1", "removed", "b"),
    )
    assert replay_history(set(), history) == frozenset({"C2"})
    with pytest.raises(ValidationError, match="already-present"):
        replay_history({"C1"}, (RevisionEvent(1, "C1", "added", "a"),))
    with pytest.raises(ValidationError, match="absent"):
        replay_history(set(), (RevisionEvent(1, "C1", "removed", "a"),))


def test_initial_annotations_inverts_history():
    e = Experience(
        id="e", user_id="u", text="some text", demographics={},
        annotations=frozenset({"C2", "C3"}),
        annotation_history=(
            RevisionEvent(1, "C1", "removed", "a"),
            RevisionEvent(1, "C2", "added", "a"),
        ),
    )
    start = initial_annotations(e)
    assert start == frozenset({"C1", "C3"})
    assert replay_history(start, e.annotation_history) == e.annotations


def test_corpus_file_round_trip(tmp_path, tiny_dataset):
    corpus = tmp_path / "corpus.jsonl"
    taxpath = tmp_path / "taxonomy.json"
    write_corpus(tiny_dataset, corpus)
    write_taxonomy(tiny_dataset.taxonomy, taxpath)

    back = ingest(corpus, "jsonl", taxonomy=read_taxonomy(taxpath),
                  demographic_attributes=["race"])
    assert dataset_hash(back) == dataset_hash(tiny_dataset)
    assert [e.id for e in back.experiences] == [e.id for e in tiny_dataset.experiences]


def test_ingest_csv(tmp_path, tiny_taxonomy):
    path = tmp_path / "corpus.csv"
    path.write_text(
        "id,user_id,text,annotations,race\n"
        'e1,u1,"planned the work, then worked the plan",C1|C2,alpha\n'
        "e2,u2,collected the data,C6,\n",
        encoding="utf-8",
    )
    ds = ingest(path, "csv", taxonomy=tiny_taxonomy, demographic_attributes=["race"])
    assert len(ds) == 2
    assert ds.by_id("e1").annotations == frozenset({"C1", "C2"})
    assert ds.by_id("e2").group("race") == "undisclosed"


def test_ingest_rejects_bad_rows(tmp_path, tiny_taxonomy):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"id": "e1", "user_id": "u"}) + "\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 1"):
        ingest(path, "jsonl", taxonomy=tiny_taxonomy)

    path.write_text(
        json.dumps({"id": "e1", "user_id": "u", "text": "ok text", "annotations": ["C1", "C1"]})
        + "\n",
        encoding="utf-8",
    )
    with pytest.raises(ValidationError, match="duplicate annotation"):
        ingest(path, "jsonl", taxonomy=tiny_taxonomy)


def test_text_length_warning(caplog):
    import logging
    with caplog.at_level(logging.WARNING, logger="credloop.corpus"):
        Experience(id="e", user_id="u", text="tiny", demographics={}, annotations=frozenset())
    assert any("outside expected range" in r.message for r in caplog.records)
