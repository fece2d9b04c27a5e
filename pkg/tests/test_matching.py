from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from opportune.errors import MatchingError
from opportune.knowledge import annotate_ontology
from opportune.matching import (
    Corpus,
    MatchConfig,
    align_classes,
    concept_tokens,
    cosine_similarity,
    filter_similar,
    position_type,
    selected_ontologies,
    soft_tfidf,
    term_bag,
)
from opportune.ontology import Concept, Ontology, OntologyRepository
from opportune.text import tokenize
from oracles import oracle_jaro_winkler


@pytest.fixture()
def enriched(enriched_nphi):
    return enriched_nphi


@pytest.fixture()
def enriched_repo(enriched_repository):
    return enriched_repository


def test_tokenizer_rules():
    assert tokenize("Jimmy_Glass_Jazz_bar") == ("jimmy", "glass", "jazz", "bar")
    assert tokenize("boutiqueHotel") == ("boutique", "hotel")
    assert tokenize("a-x") == ()  # single characters are dropped
    assert tokenize("Route66 map") == ("route66", "map")


def test_term_bag_root_only():
    ontology = Ontology("solo", {"object": Concept("object", None)}, "object")
    assert term_bag(ontology) == {"object": 1.0}


def test_term_bag_weights_sum_to_one(enriched):
    bag = term_bag(enriched)
    assert sum(bag.values()) == pytest.approx(1.0, abs=1e-9)
    assert all(w > 0 for w in bag.values())


def test_enriched_bag_contains_imported_terms(enriched):
    bag = term_bag(enriched)
    assert "repulsion" in bag
    assert "disneyland" in bag


def test_cosine_hand_values():
    assert cosine_similarity({"a": 0.5, "b": 0.5}, {"a": 0.5, "b": 0.5}) == pytest.approx(
        1.0, abs=1e-9
    )
    assert cosine_similarity({"a": 1.0}, {"b": 1.0}) == 0.0
    assert cosine_similarity({}, {"a": 1.0}) == 0.0
    assert cosine_similarity({"a": 0.5, "b": 0.5}, {"a": 0.5, "c": 0.5}) == pytest.approx(
        0.5, abs=1e-12
    )


@settings(max_examples=60, deadline=None)
@given(
    st.dictionaries(st.sampled_from("abcdef"), st.floats(0.01, 1.0), max_size=6),
    st.dictionaries(st.sampled_from("abcdef"), st.floats(0.01, 1.0), max_size=6),
)
def test_cosine_bounds_and_symmetry(bag_a, bag_b):
    score = cosine_similarity(bag_a, bag_b)
    assert 0.0 <= score <= 1.0
    assert score == cosine_similarity(bag_b, bag_a)


def test_filter_similar_self_copy_ranks_first(enriched):
    clone = Ontology("clone", dict(enriched.concepts), enriched.root)
    repo = OntologyRepository((clone,))
    entries = filter_similar(enriched, repo, threshold=0.5)
    assert entries[0].ontology.id == "clone"
    assert entries[0].score == pytest.approx(1.0, abs=1e-9)
    assert entries[0].selected


def test_filter_similar_selects_the_three_tourism_fixtures(enriched, enriched_repo):
    entries = filter_similar(enriched, enriched_repo, threshold=0.5)
    selected = {o.id for o in selected_ontologies(entries)}
    assert selected == {"city_breaks", "heritage_walks", "weekend_guide"}
    by_id = {e.ontology.id: e.score for e in entries}
    assert by_id["courier_express"] < 0.1
    assert by_id["parcel_routes"] < 0.1
    scores = [e.score for e in entries]
    assert scores == sorted(scores, reverse=True)


def test_filter_similar_threshold_above_one_selects_nothing(enriched, enriched_repo):
    entries = filter_similar(enriched, enriched_repo, threshold=1.01)
    assert not selected_ontologies(entries)


def test_jaro_winkler_against_oracle():
    rng = random.Random(7)
    alphabet = "abcdefgh"
    from opportune._kernels import jaro_winkler_similarity

    assert jaro_winkler_similarity("attraction", "attractions") == pytest.approx(
        0.9818, abs=1e-4
    )
    for _ in range(300):
        s1 = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 10)))
        s2 = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 10)))
        assert jaro_winkler_similarity(s1, s2) == pytest.approx(
            oracle_jaro_winkler(s1, s2), abs=1e-12
        )


def test_soft_tfidf_identity_and_disjoint():
    corpus = Corpus([("alpha", "beta"), ("gamma", "delta"), ("alpha", "gamma")])
    assert soft_tfidf(("alpha", "beta"), ("alpha", "beta"), corpus) == pytest.approx(
        1.0, abs=1e-9
    )
    assert soft_tfidf(("alpha", "beta"), ("gamma", "delta"), corpus) == 0.0
    assert soft_tfidf((), ("alpha",), corpus) == 0.0


def test_soft_tfidf_edit_relaxation():
    corpus = Corpus([("attraction",), ("attractions",), ("unrelated",)])
    score = soft_tfidf(("attraction",), ("attractions",), corpus, inner_theta=0.9)
    assert score > 0.9
    strict = soft_tfidf(("attraction",), ("attractions",), corpus, inner_theta=0.99)
    assert strict == 0.0


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.sampled_from(["alpha", "beta", "gamma", "alphas"]), max_size=5),
    st.lists(st.sampled_from(["alpha", "beta", "gamma", "alphas"]), max_size=5),
)
def test_soft_tfidf_bounds(doc_s, doc_t):
    corpus = Corpus([tuple(doc_s), tuple(doc_t), ("alpha", "beta", "gamma")])
    score = soft_tfidf(tuple(doc_s), tuple(doc_t), corpus)
    assert 0.0 <= score <= 1.0


def test_align_lexically_identical_concept(enriched, enriched_repo):
    weekend = enriched_repo.get("weekend_guide")
    plaza = weekend.concepts["plaza"]
    base = enriched.add_concept("plaza", "attraction", plaza.labels, plaza.annotations)
    corpus = Corpus.from_ontologies(base, weekend)
    matches, _ = align_classes(base, [plaza], corpus)
    assert matches[0].target == "plaza"
    assert matches[0].score == pytest.approx(1.0, abs=1e-9)


def test_align_must_see_to_attraction(enriched, enriched_repo):
    heritage = enriched_repo.get("heritage_walks")
    corpus = Corpus.from_ontologies(enriched, heritage)
    matches, _ = align_classes(enriched, [heritage.concepts["must_see"]], corpus)
    assert matches and matches[0].target == "attraction"
    assert matches[0].score >= 0.85


def test_align_delivery_fragment_finds_nothing(enriched, enriched_repo):
    courier = enriched_repo.get("courier_express")
    fragment = [courier.concepts[c] for c in ("parcel_kind", "cargo_bike", "sorting_hub")]
    corpus = Corpus.from_ontologies(enriched, courier)
    matches, rejected = align_classes(enriched, fragment, corpus)
    assert not matches
    assert len(rejected) == 3


def test_align_is_one_to_one(enriched, enriched_repo):
    weekend = enriched_repo.get("weekend_guide")
    base = enriched.add_concept(
        "plaza",
        "attraction",
        annotations=enriched_repo.get("heritage_walks").concepts["plaza"].annotations,
    )
    corpus = Corpus.from_ontologies(base, weekend)
    fragment = [weekend.concepts[c] for c in weekend.children("venue")]
    matches, _ = align_classes(base, fragment, corpus)
    assert len({m.source for m in matches}) == len(matches)
    assert len({m.target for m in matches}) == len(matches)


def test_position_rule1_equivalent(store):
    base = Ontology(
        "galleries",
        {
            "object": Concept("object", None),
            "exhibition": Concept("exhibition", "object"),
            "garden": Concept("garden", "object"),
        },
        "object",
    )
    other = Ontology(
        "feed",
        {"stuff": Concept("stuff", None), "artexhibit": Concept("artexhibit", "stuff")},
        "stuff",
    )
    outcome = position_type(
        annotate_ontology(base, store), annotate_ontology(other, store), "artexhibit"
    )
    assert outcome.kind == "equivalent"
    assert outcome.target == "exhibition"
    assert outcome.rule == 1


def test_position_rule2_parent_match(enriched, enriched_repo):
    outcome = position_type(enriched, enriched_repo.get("heritage_walks"), "plaza")
    assert outcome.kind == "new_child"
    assert outcome.target == "attraction"
    assert outcome.rule == 2
    assert outcome.correspondences[0].source == "must_see"
    assert outcome.target in enriched.concepts


def test_position_rule3_sibling_agreement(enriched, enriched_repo):
    heritage = enriched_repo.get("heritage_walks")
    base = enriched.add_concept(
        "plaza",
        "attraction",
        heritage.concepts["plaza"].labels,
        heritage.concepts["plaza"].annotations,
    )
    outcome = position_type(base, enriched_repo.get("weekend_guide"), "jazz_bar")
    assert outcome.kind == "new_child"
    assert outcome.target == "attraction"
    assert outcome.rule == 3
    matched = {c.source for c in outcome.correspondences}
    assert matched == {"plaza", "green_park", "old_monument"}


def test_position_rule4_unplaced(enriched):
    other = Ontology(
        "isolated",
        {
            "orphan_root": Concept("orphan_root", None),
            "mystery_kind": Concept("mystery_kind", "orphan_root"),
        },
        "orphan_root",
    )
    outcome = position_type(enriched, other, "mystery_kind")
    assert outcome.kind == "unplaced"
    assert outcome.rule == 4
    assert outcome.reason


def test_position_rejects_contract_violations(enriched, enriched_repo):
    with pytest.raises(MatchingError):
        position_type(enriched, enriched_repo.get("heritage_walks"), "ghost_concept")
    base_with_plaza = enriched.add_concept("plaza", "attraction")
    with pytest.raises(MatchingError):
        position_type(base_with_plaza, enriched_repo.get("heritage_walks"), "plaza")


def test_renaming_keeps_best_match_stable(enriched, enriched_repo):
    heritage = enriched_repo.get("heritage_walks")
    must_see = heritage.concepts["must_see"]
    renamed = Concept("top_sights", "travel_thing", must_see.labels, must_see.annotations)
    concepts = dict(heritage.concepts)
    del concepts["must_see"]
    concepts["top_sights"] = renamed
    for cid, c in list(concepts.items()):
        if c.parent == "must_see":
            concepts[cid] = Concept(cid, "top_sights", c.labels, c.annotations)
    variant = Ontology("heritage_renamed", concepts, heritage.root)
    corpus = Corpus.from_ontologies(enriched, variant)
    matches, _ = align_classes(enriched, [renamed], corpus)
    assert matches and matches[0].target == "attraction"
    assert matches[0].score >= 0.85
