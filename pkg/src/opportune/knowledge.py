"""Concept enrichment from a ConceptNet-style knowledge graph.

Concepts from differently-named ontologies end up sharing vocabulary once
both are annotated with the relations and terms of their label tokens, which
is what makes the bag-of-terms similarity and the class alignment work.

The bundled TSV store is authoritative; the HTTP client is an opt-in
convenience that falls back to the local store on any failure.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import requests

from opportune.errors import KnowledgeFetchError, KnowledgeStoreError
from opportune.ontology import Concept, Ontology
from opportune.text import phrase, tokenize

log = logging.getLogger(__name__)

# Closed class of 36 relations, mirroring the usual knowledge-graph vocabulary.
RELATIONS = frozenset(
    {
        "antonym",
        "atLocation",
        "capableOf",
        "causes",
        "causesDesire",
        "createdBy",
        "definedAs",
        "derivedFrom",
        "desires",
        "distinctFrom",
        "entails",
        "etymologicallyRelatedTo",
        "formOf",
        "hasA",
        "hasContext",
        "hasFirstSubevent",
        "hasLastSubevent",
        "hasPrerequisite",
        "hasProperty",
        "hasSubevent",
        "instanceOf",
        "isA",
        "locatedNear",
        "madeOf",
        "mannerOf",
        "motivatedByGoal",
        "notCapableOf",
        "notDesires",
        "notHasProperty",
        "partOf",
        "receivesAction",
        "relatedTo",
        "similarTo",
        "symbolOf",
        "synonym",
        "usedFor",
    }
)

_RELATION_BY_LOWER = {r.lower(): r for r in RELATIONS}

_cache_write_lock = threading.Lock()


@dataclass(frozen=True)
class KnowledgeEdge:
    relation: str
    start: str
    end: str
    weight: float = 1.0

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise KnowledgeStoreError(f"unknown relation {self.relation!r}")
        if not self.start or not self.end:
            raise KnowledgeStoreError("edge terms must be non-empty")
        if self.weight < 0:
            raise KnowledgeStoreError("edge weight must be non-negative")


@dataclass
class KnowledgeStore:
    """Edges indexed by both endpoints; read-only after loading."""

    edges: tuple[KnowledgeEdge, ...] = ()
    skipped: tuple[str, ...] = ()  # diagnostics for rejected rows
    _by_term: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for edge in self.edges:
            self._index(edge)

    def _index(self, edge: KnowledgeEdge):
        self._by_term.setdefault(edge.start, []).append(edge)
        if edge.end != edge.start:
            self._by_term.setdefault(edge.end, []).append(edge)

    def __len__(self):
        return len(self.edges)

    def edges_for_term(self, term: str) -> tuple[KnowledgeEdge, ...]:
        return tuple(self._by_term.get(term.lower(), ()))

    def merged_with(self, extra: Iterable[KnowledgeEdge]) -> "KnowledgeStore":
        seen = set(self.edges)
        new = [e for e in extra if not (e in seen or seen.add(e))]
        return KnowledgeStore(self.edges + tuple(new), self.skipped)


def _normalize_term(term: str) -> str:
    return " ".join(term.strip().lower().split())


def load_edges(path: str | Path) -> KnowledgeStore:
    """Load a relation<TAB>start<TAB>end<TAB>weight file; '#' starts a comment.

    Rows with unknown relations are skipped and counted, not fatal.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise KnowledgeStoreError(f"cannot read knowledge store {path}: {exc}") from None
    edges: list[KnowledgeEdge] = []
    skipped: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#")[0].rstrip()
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            skipped.append(f"line {lineno}: expected 4 tab-separated fields")
            continue
        relation_raw, start, end, weight_raw = parts
        relation = _RELATION_BY_LOWER.get(relation_raw.strip().lower())
        if relation is None:
            skipped.append(f"line {lineno}: unknown relation {relation_raw.strip()!r}")
            continue
        try:
            weight = float(weight_raw)
        except ValueError:
            skipped.append(f"line {lineno}: bad weight {weight_raw.strip()!r}")
            continue
        start, end = _normalize_term(start), _normalize_term(end)
        if not start or not end:
            skipped.append(f"line {lineno}: empty term")
            continue
        edges.append(KnowledgeEdge(relation, start, end, weight))
    for warning in skipped:
        log.warning("%s: %s", path, warning)
    return KnowledgeStore(tuple(edges), tuple(skipped))


def lookup_terms(concept: Concept) -> tuple[str, ...]:
    """Terms used to query the store for a concept: the normalized phrase of
    each label (the id when unlabelled) plus every individual token."""
    sources = concept.labels if concept.labels else (concept.id,)
    terms: list[str] = []
    for source in sources:
        full = phrase(source)
        if full and full not in terms:
            terms.append(full)
        for token in tokenize(source):
            if token not in terms:
                terms.append(token)
    return tuple(terms)


def annotate_concept(concept: Concept, store: KnowledgeStore) -> Concept:
    """Append one (relation, opposite endpoint) annotation per incident edge.

    Both edge directions count; duplicates collapse; labels are untouched.
    """
    terms = set(lookup_terms(concept))
    found: set[tuple[str, str]] = set()
    for term in sorted(terms):
        for edge in store.edges_for_term(term):
            other = edge.end if edge.start == term else edge.start
            found.add((edge.relation, other))
    if not found:
        return concept
    return concept.with_annotations(found)


def annotate_ontology(ontology: Ontology, store: KnowledgeStore) -> Ontology:
    """Pointwise concept enrichment; idempotent and structure-preserving."""
    return ontology.map_concepts(lambda c: annotate_concept(c, store))


def fetch_term(
    endpoint: str,
    term: str,
    timeout: float = 5.0,
    cache_path: str | Path | None = None,
) -> list[KnowledgeEdge]:
    """Query a ConceptNet-5-shaped endpoint for a term's edges.

    Edges outside the relation vocabulary are dropped. On success the edges
    are appended to ``cache_path`` (TSV) so later offline runs see them.
    Raises KnowledgeFetchError on network or response-shape problems.
    """
    url = f"{endpoint.rstrip('/')}/c/en/{_normalize_term(term).replace(' ', '_')}"
    try:
        response = requests.get(url, timeout=timeout)
        response.raise_for_status()
        payload = response.json()
    except (requests.RequestException, json.JSONDecodeError, ValueError) as exc:
        raise KnowledgeFetchError(f"lookup of {term!r} failed: {exc}") from None

    edges = []
    try:
        for entry in payload.get("edges", ()):
            label = entry["rel"]["label"]
            relation = _RELATION_BY_LOWER.get(label.lower())
            if relation is None:
                continue
            start = _normalize_term(entry["start"]["label"])
            end = _normalize_term(entry["end"]["label"])
            weight = float(entry.get("weight", 1.0))
            if start and end:
                edges.append(KnowledgeEdge(relation, start, end, weight))
    except (KeyError, TypeError) as exc:
        raise KnowledgeFetchError(f"malformed response for {term!r}: {exc}") from None

    if cache_path is not None and edges:
        _append_to_cache(Path(cache_path), edges)
    return edges


def _append_to_cache(path: Path, edges: Iterable[KnowledgeEdge]) -> None:
    with _cache_write_lock:
        existing = set()
        if path.exists():
            existing = set(load_edges(path).edges)
        rows = [
            f"{e.relation}\t{e.start}\t{e.end}\t{e.weight}\n"
            for e in edges
            if e not in existing
        ]
        if rows:
            with open(path, "a", encoding="utf-8") as fh:
                fh.writelines(rows)
