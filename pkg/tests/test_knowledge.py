from __future__ import annotations

import http.server
import json
import threading

import pytest

from opportune.errors import KnowledgeFetchError, KnowledgeStoreError
from opportune.knowledge import (
    KnowledgeEdge,
    KnowledgeStore,
    annotate_concept,
    annotate_ontology,
    fetch_term,
    load_edges,
    lookup_terms,
)
from opportune.ontology import Concept, Ontology

FIGURE_ROWS = """\
antonym\tattraction\trepulsion\t1.0
atLocation\tattraction\tdisneyland\t1.0
causesDesire\tattraction\tflirt\t1.0
"""


@pytest.fixture()
def figure_store(tmp_path):
    path = tmp_path / "edges.tsv"
    path.write_text(FIGURE_ROWS, encoding="utf-8")
    return load_edges(path)


def test_load_edges_indexes_both_endpoints(figure_store):
    assert len(figure_store) == 3
    by_attraction = figure_store.edges_for_term("attraction")
    assert {e.relation for e in by_attraction} == {"antonym", "atLocation", "causesDesire"}
    assert figure_store.edges_for_term("repulsion")[0].start == "attraction"


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("# only a comment\n\n", encoding="utf-8")
    assert len(load_edges(path)) == 0


def test_unknown_relation_skipped_and_counted(tmp_path):
    path = tmp_path / "edges.tsv"
    path.write_text(
        "frobnicates\tattraction\twidget\t1.0\nantonym\tattraction\trepulsion\t1.0\n",
        encoding="utf-8",
    )
    store = load_edges(path)
    assert len(store) == 1
    assert len(store.skipped) == 1
    assert "line 1" in store.skipped[0]


def test_unreadable_file():
    with pytest.raises(KnowledgeStoreError):
        load_edges("/nonexistent/edges.tsv")


def test_annotate_concept_figure_rows(figure_store):
    concept = Concept("attraction", "object")
    enriched = annotate_concept(concept, figure_store)
    assert set(enriched.annotations) == {
        ("antonym", "repulsion"),
        ("atLocation", "disneyland"),
        ("causesDesire", "flirt"),
    }


def test_annotate_concept_without_edges_is_identity(figure_store):
    concept = Concept("warehouse", "object")
    assert annotate_concept(concept, figure_store) is concept


def test_lookup_terms_cover_phrase_and_tokens():
    concept = Concept("must_see", "root")
    assert lookup_terms(concept) == ("must see", "must", "see")


def test_shared_neighbor_gives_common_annotations(store):
    a = annotate_concept(Concept("attraction", None), store)
    b = annotate_concept(Concept("must_see", None), store)
    terms_a = {value for _, value in a.annotations}
    terms_b = {value for _, value in b.annotations}
    assert terms_a & terms_b


def test_annotate_ontology_idempotent_and_monotone(nphi, store):
    once = annotate_ontology(nphi, store)
    twice = annotate_ontology(once, store)
    assert once == twice
    for cid, concept in nphi.concepts.items():
        enriched = once.concepts[cid]
        assert set(concept.annotations) <= set(enriched.annotations)
        assert concept.labels == enriched.labels


def test_annotate_ontology_preserves_structure(nphi, store):
    enriched = annotate_ontology(nphi, store)
    assert enriched.root == nphi.root
    assert enriched.individuals == nphi.individuals
    for cid, concept in enriched.concepts.items():
        assert concept.parent == nphi.concepts[cid].parent


def test_every_tourism_concept_gains_annotations(repository, store):
    for oid in ("city_breaks", "heritage_walks", "weekend_guide"):
        enriched = annotate_ontology(repository.get(oid), store)
        for cid, concept in enriched.concepts.items():
            assert concept.annotations, f"{oid}/{cid} gained no annotations"


CONCEPTNET_DOC = {
    "edges": [
        {
            "rel": {"label": "Antonym"},
            "start": {"label": "attraction"},
            "end": {"label": "repulsion"},
            "weight": 2.0,
        },
        {
            "rel": {"label": "AtLocation"},
            "start": {"label": "attraction"},
            "end": {"label": "Disneyland"},
            "weight": 1.0,
        },
        {
            "rel": {"label": "ExternalURL"},
            "start": {"label": "attraction"},
            "end": {"label": "http://example.org"},
            "weight": 1.0,
        },
    ]
}


class _Handler(http.server.BaseHTTPRequestHandler):
    def do_GET(self):
        if self.path.endswith("/c/en/attraction"):
            body = json.dumps(CONCEPTNET_DOC).encode()
        else:
            body = json.dumps({"edges": []}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def endpoint():
    server = http.server.HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_fetch_term_parses_and_filters(endpoint, tmp_path):
    cache = tmp_path / "cache.tsv"
    edges = fetch_term(endpoint, "attraction", cache_path=cache)
    assert edges == [
        KnowledgeEdge("antonym", "attraction", "repulsion", 2.0),
        KnowledgeEdge("atLocation", "attraction", "disneyland", 1.0),
    ]
    cached = load_edges(cache)
    assert set(cached.edges) == set(edges)
    # a second fetch must not duplicate cache rows
    fetch_term(endpoint, "attraction", cache_path=cache)
    assert len(load_edges(cache)) == 2


def test_fetch_unknown_term_is_empty(endpoint):
    assert fetch_term(endpoint, "zzz_unseen") == []


def test_fetch_failure_raises_typed_error():
    with pytest.raises(KnowledgeFetchError):
        fetch_term("http://127.0.0.1:9", "attraction", timeout=0.2)


def test_fetch_failure_falls_back_to_local_store(figure_store):
    # the documented pattern: online lookup fails, the local store answers
    try:
        edges = fetch_term("http://127.0.0.1:9", "attraction", timeout=0.2)
    except KnowledgeFetchError:
        edges = figure_store.edges_for_term("attraction")
    assert len(edges) == 3


def test_store_merge_deduplicates(figure_store):
    extra = KnowledgeEdge("antonym", "attraction", "repulsion", 1.0)
    merged = figure_store.merged_with([extra])
    assert len(merged) == 3
