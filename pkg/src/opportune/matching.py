"""Ontology similarity filtering and class-level alignment.

Two layers:

* ontology level: each ontology is a bag of terms (concept ids, labels,
  annotation relations and values) compared by TF-weighted cosine, used to
  filter a repository down to the ontologies worth aligning against;
* class level: concepts are documents scored with SoftTFIDF (TF-IDF whose
  token equality is relaxed by Jaro-Winkler above a threshold), and an
  unknown class is positioned into the task ontology through its own match,
  its parent's match, or agreement among its matched siblings.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from opportune._kernels import jaro_winkler_similarity
from opportune.errors import MatchingError
from opportune.ontology import Concept, Ontology, OntologyRepository
from opportune.text import tokenize


@dataclass(frozen=True)
class MatchConfig:
    filter_threshold: float = 0.5  # ontology-level cosine cutoff
    class_threshold: float = 0.85  # SoftTFIDF score to count as a correspondence
    sibling_threshold: float = 0.5  # fraction of matched siblings required
    inner_theta: float = 0.9  # Jaro-Winkler floor for token equality


@dataclass(frozen=True)
class Correspondence:
    source: str
    target: str
    score: float


@dataclass(frozen=True)
class PositionOutcome:
    """Where an unknown class landed: equivalent to an existing concept, a
    new child of one, or unplaced (with the failing step recorded)."""

    kind: str  # "equivalent" | "new_child" | "unplaced"
    target: str | None
    rule: int  # 1 = own match, 2 = parent match, 3 = sibling agreement, 4 = unplaced
    correspondences: tuple[Correspondence, ...] = ()
    rejected: tuple[Correspondence, ...] = ()
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target": self.target,
            "rule": self.rule,
            "correspondences": [vars(c) for c in self.correspondences],
            "rejected": [vars(c) for c in self.rejected],
            "reason": self.reason,
        }


def concept_tokens(concept: Concept) -> tuple[str, ...]:
    """Document of a concept: tokens of its id, labels, annotation relation
    names and annotation values."""
    tokens = list(tokenize(concept.id))
    for label in concept.labels:
        tokens.extend(tokenize(label))
    for relation, value in concept.annotations:
        tokens.extend(tokenize(relation))
        tokens.extend(tokenize(value))
    return tuple(tokens)


def term_bag(ontology: Ontology) -> dict[str, float]:
    """TF-weighted bag over the whole ontology; weights sum to 1."""
    counts: Counter[str] = Counter()
    for concept in ontology.concepts.values():
        counts.update(concept_tokens(concept))
    total = sum(counts.values())
    if not total:
        return {}
    return {term: count / total for term, count in sorted(counts.items())}


def cosine_similarity(bag_a: dict[str, float], bag_b: dict[str, float]) -> float:
    if not bag_a or not bag_b:
        return 0.0
    # sorted shared terms keep the summation order, and thus the rounding,
    # identical under argument swap
    shared = sorted(set(bag_a) & set(bag_b))
    dot = math.fsum(bag_a[t] * bag_b[t] for t in shared)
    norm_a = math.sqrt(math.fsum(w * w for w in bag_a.values()))
    norm_b = math.sqrt(math.fsum(w * w for w in bag_b.values()))
    return min(dot / (norm_a * norm_b), 1.0)


@dataclass(frozen=True)
class SimilarityEntry:
    ontology: Ontology
    score: float
    selected: bool


def filter_similar(
    base: Ontology, repository: OntologyRepository, threshold: float = 0.5
) -> tuple[SimilarityEntry, ...]:
    """Score every repository member against ``base``; entries at or above
    ``threshold`` are selected. Sorted by descending score, ties by id."""
    base_bag = term_bag(base)
    entries = [
        SimilarityEntry(member, cosine_similarity(base_bag, term_bag(member)), False)
        for member in repository
    ]
    entries.sort(key=lambda e: (-e.score, e.ontology.id))
    return tuple(
        SimilarityEntry(e.ontology, e.score, e.score >= threshold) for e in entries
    )


def selected_ontologies(entries: tuple[SimilarityEntry, ...]) -> tuple[Ontology, ...]:
    return tuple(e.ontology for e in entries if e.selected)


class Corpus:
    """Document-frequency statistics for SoftTFIDF weighting."""

    def __init__(self, documents: list[tuple[str, ...]]):
        self.n_docs = len(documents)
        self.df: Counter[str] = Counter()
        for doc in documents:
            self.df.update(set(doc))

    @classmethod
    def from_ontologies(cls, *ontologies: Ontology) -> "Corpus":
        docs = []
        for ontology in ontologies:
            for cid in sorted(ontology.concepts):
                docs.append(concept_tokens(ontology.concepts[cid]))
        return cls(docs)

    def idf(self, term: str) -> float:
        df = max(self.df.get(term, 0), 1)
        return math.log(1.0 + self.n_docs / df)

    def normalized_weights(self, document: tuple[str, ...]) -> dict[str, float]:
        """L2-normalized log-TF x IDF weights per distinct token."""
        counts = Counter(document)
        raw = {
            term: math.log(count + 1.0) * self.idf(term)
            for term, count in counts.items()
        }
        norm = math.sqrt(sum(w * w for w in raw.values()))
        if norm == 0.0:
            return {}
        return {term: w / norm for term, w in sorted(raw.items())}


def soft_tfidf(
    doc_s: tuple[str, ...],
    doc_t: tuple[str, ...],
    corpus: Corpus,
    inner_theta: float = 0.9,
) -> float:
    """SoftTFIDF similarity in [0, 1].

    Sums, over source tokens having some target token within ``inner_theta``
    Jaro-Winkler similarity, the product of both normalized TF-IDF weights
    and the inner similarity of the best-matching target token. Clamped at 1
    (near-duplicate tokens can otherwise push the sum marginally above).
    """
    weights_s = corpus.normalized_weights(doc_s)
    weights_t = corpus.normalized_weights(doc_t)
    if not weights_s or not weights_t:
        return 0.0
    targets = list(weights_t)
    total = 0.0
    for token, weight in weights_s.items():
        best_sim = 0.0
        best_target = None
        for candidate in targets:
            sim = 1.0 if token == candidate else jaro_winkler_similarity(token, candidate)
            if sim >= inner_theta and sim > best_sim:
                best_sim = sim
                best_target = candidate
                if sim == 1.0:
                    break
        if best_target is not None:
            total += weight * weights_t[best_target] * best_sim
    return min(total, 1.0)


def align_classes(
    base: Ontology,
    fragment: list[Concept],
    corpus: Corpus | None = None,
    config: MatchConfig = MatchConfig(),
) -> tuple[tuple[Correspondence, ...], tuple[Correspondence, ...]]:
    """Best-scoring one-to-one correspondences from fragment concepts into
    ``base``, greedy by descending score.

    Returns (matches, rejected) where rejected holds the best candidate of
    every fragment concept that did not reach a match (diagnostics).
    """
    if corpus is None:
        corpus = Corpus.from_ontologies(base)
    scored: list[Correspondence] = []
    for concept in fragment:
        doc = concept_tokens(concept)
        for target_id in sorted(base.concepts):
            score = soft_tfidf(
                doc, concept_tokens(base.concepts[target_id]), corpus, config.inner_theta
            )
            if score > 0.0:
                scored.append(Correspondence(concept.id, target_id, score))
    scored.sort(key=lambda c: (-c.score, c.source, c.target))

    matches: list[Correspondence] = []
    used_sources: set[str] = set()
    used_targets: set[str] = set()
    for cand in scored:
        if cand.score < config.class_threshold:
            break
        if cand.source in used_sources or cand.target in used_targets:
            continue
        matches.append(cand)
        used_sources.add(cand.source)
        used_targets.add(cand.target)

    rejected: list[Correspondence] = []
    for concept in fragment:
        if concept.id in used_sources:
            continue
        best = next((c for c in scored if c.source == concept.id), None)
        rejected.append(best or Correspondence(concept.id, "", 0.0))
    return tuple(matches), tuple(rejected)


def position_type(
    base: Ontology,
    other: Ontology,
    concept_id: str,
    config: MatchConfig = MatchConfig(),
) -> PositionOutcome:
    """Position ``concept_id`` from ``other`` within ``base``.

    Rule 1: the concept itself matches an existing class (equivalent type).
    Rule 2: its parent matches, making the concept a new child of the match.
    Rule 3: enough of its siblings match and all matches agree on a single
    parent in ``base``; the concept becomes a new child of that parent.
    Otherwise the concept is unplaced and nothing may be mutated.
    """
    if concept_id not in other.concepts:
        raise MatchingError(f"concept {concept_id!r} not found in ontology {other.id!r}")
    if concept_id in base.concepts:
        raise MatchingError(
            f"concept {concept_id!r} already present in {base.id!r}; "
            "literal presence is handled before alignment"
        )
    corpus = Corpus.from_ontologies(base, other)
    concept = other.concepts[concept_id]
    rejected_all: list[Correspondence] = []

    # rule 1: the concept itself is semantically equivalent to an existing class
    matches, rejected = align_classes(base, [concept], corpus, config)
    rejected_all.extend(rejected)
    if matches:
        return PositionOutcome(
            "equivalent", matches[0].target, 1, matches, tuple(rejected_all)
        )

    # rule 2: the parent class matches
    parent_id = concept.parent
    if parent_id is not None:
        matches, rejected = align_classes(base, [other.concepts[parent_id]], corpus, config)
        rejected_all.extend(rejected)
        if matches:
            return PositionOutcome(
                "new_child", matches[0].target, 2, matches, tuple(rejected_all)
            )

    # rule 3: enough siblings match, under one common parent
    sibling_ids = other.siblings(concept_id)
    if sibling_ids:
        siblings = [other.concepts[sid] for sid in sibling_ids]
        matches, rejected = align_classes(base, siblings, corpus, config)
        rejected_all.extend(rejected)
        fraction = len(matches) / len(sibling_ids)
        if fraction >= config.sibling_threshold and matches:
            parents = {base.concepts[m.target].parent for m in matches}
            if len(parents) == 1:
                (common_parent,) = parents
                if common_parent is not None:
                    return PositionOutcome(
                        "new_child", common_parent, 3, matches, tuple(rejected_all)
                    )
                reason = "matched siblings sit at the root, which cannot be a family"
            else:
                reason = "matched siblings disagree on a parent"
        else:
            reason = (
                f"only {len(matches)}/{len(sibling_ids)} siblings matched "
                f"(threshold {config.sibling_threshold})"
            )
    elif parent_id is None:
        reason = "concept is the root of its ontology and nothing matched"
    else:
        reason = "no match for the concept or its parent, and it has no siblings"

    return PositionOutcome("unplaced", None, 4, (), tuple(rejected_all), reason)
