"""Taxonomy model, task-derived ontology construction, and semantic measures.

An ontology is a single-rooted tree of concepts plus individuals attached to
concepts. The two measures defined here drive ontology selection:

* semantic distance between two concepts: the log-scaled ratio of their
  non-common taxonomic ancestors to their total ancestors;
* semantic variance: the average squared distance from each non-root
  concept to the root, a proxy for how much taxonomic detail an ontology
  carries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from opportune.errors import OntologySchemaError
from opportune.task_model import PlanningTask, ROOT_TYPE


@dataclass(frozen=True)
class Concept:
    id: str
    parent: str | None
    labels: tuple[str, ...] = ()
    annotations: tuple[tuple[str, str], ...] = ()  # (relation, value) pairs

    def with_annotations(self, extra: Iterable[tuple[str, str]]) -> "Concept":
        merged = sorted(set(self.annotations) | set(extra))
        return replace(self, annotations=tuple(merged))


@dataclass(frozen=True)
class Ontology:
    id: str
    concepts: Mapping[str, Concept]
    root: str
    individuals: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.root not in self.concepts:
            raise OntologySchemaError(f"root concept {self.root!r} is not defined")
        if self.concepts[self.root].parent is not None:
            raise OntologySchemaError(f"root concept {self.root!r} must have no parent")
        for concept in self.concepts.values():
            if concept.id != self.root:
                if concept.parent is None:
                    raise OntologySchemaError(
                        f"ontology {self.id!r} has multiple roots: "
                        f"{self.root!r} and {concept.id!r}"
                    )
                if concept.parent not in self.concepts:
                    raise OntologySchemaError(
                        f"concept {concept.id!r} has undefined parent {concept.parent!r}"
                    )
        for individual, concept_id in self.individuals.items():
            if concept_id not in self.concepts:
                raise OntologySchemaError(
                    f"individual {individual!r} references undefined concept {concept_id!r}"
                )
        # a parent map without cycles is a tree once the single root is fixed
        for concept_id in self.concepts:
            self.ancestors(concept_id)

    def ancestors(self, concept_id: str) -> frozenset[str]:
        """The concept itself plus all transitive parents up to the root."""
        if concept_id not in self.concepts:
            raise OntologySchemaError(
                f"unknown concept {concept_id!r} in ontology {self.id!r}"
            )
        chain = []
        cur: str | None = concept_id
        seen = set()
        while cur is not None:
            if cur in seen:
                raise OntologySchemaError(
                    f"parent cycle through {cur!r} in ontology {self.id!r}"
                )
            seen.add(cur)
            chain.append(cur)
            cur = self.concepts[cur].parent
        return frozenset(chain)

    def children(self, concept_id: str) -> tuple[str, ...]:
        return tuple(
            sorted(c.id for c in self.concepts.values() if c.parent == concept_id)
        )

    def siblings(self, concept_id: str) -> tuple[str, ...]:
        parent = self.concepts[concept_id].parent
        if parent is None:
            return ()
        return tuple(c for c in self.children(parent) if c != concept_id)

    def concept_of(self, individual: str) -> str | None:
        return self.individuals.get(individual)

    def add_concept(
        self,
        concept_id: str,
        parent: str,
        labels: Iterable[str] = (),
        annotations: Iterable[tuple[str, str]] = (),
    ) -> "Ontology":
        if concept_id in self.concepts:
            raise OntologySchemaError(f"concept {concept_id!r} already defined")
        if parent not in self.concepts:
            raise OntologySchemaError(f"unknown parent concept {parent!r}")
        concept = Concept(concept_id, parent, tuple(labels), tuple(sorted(set(annotations))))
        return replace(self, concepts={**self.concepts, concept_id: concept})

    def add_individual(self, individual: str, concept_id: str) -> "Ontology":
        if individual in self.individuals:
            raise OntologySchemaError(f"individual {individual!r} already defined")
        if concept_id not in self.concepts:
            raise OntologySchemaError(f"unknown concept {concept_id!r}")
        return replace(self, individuals={**self.individuals, individual: concept_id})

    def map_concepts(self, fn) -> "Ontology":
        return replace(self, concepts={cid: fn(c) for cid, c in self.concepts.items()})


def from_task(task: PlanningTask, ontology_id: str = "task") -> Ontology:
    """Build the base ontology: one concept per type (same parent edges),
    one individual per object, rooted at the universal type."""
    concepts = {ROOT_TYPE: Concept(ROOT_TYPE, None)}
    for type_name, parent in task.types.entries.items():
        if type_name == ROOT_TYPE:
            continue
        concepts[type_name] = Concept(type_name, parent)
    individuals = dict(task.objects)
    return Ontology(ontology_id, concepts, ROOT_TYPE, individuals)


def semantic_distance(ontology: Ontology, c_i: str, c_j: str) -> float:
    """Distance in [0, 1): log2(1 + |non-common ancestors| / |all ancestors|)."""
    a_i = ontology.ancestors(c_i)
    a_j = ontology.ancestors(c_j)
    union = len(a_i | a_j)
    inter = len(a_i & a_j)
    return math.log2(1.0 + (union - inter) / union)


def semantic_variance(ontology: Ontology, squared: bool = True) -> float:
    """Average (squared) distance from each non-root concept to the root.

    A root-only ontology has no dispersion and scores 0. ``squared=False``
    switches to the plain-distance variant for comparison.
    """
    others = [cid for cid in ontology.concepts if cid != ontology.root]
    if not others:
        return 0.0
    total = 0.0
    for cid in others:
        d = semantic_distance(ontology, cid, ontology.root)
        total += d * d if squared else d
    return total / len(others)


def to_dict(ontology: Ontology) -> dict:
    return {
        "id": ontology.id,
        "root": ontology.root,
        "concepts": [
            {
                "id": c.id,
                "parent": c.parent,
                "labels": list(c.labels),
                "annotations": [{"rel": r, "val": v} for r, v in c.annotations],
            }
            for c in sorted(ontology.concepts.values(), key=lambda c: c.id)
        ],
        "individuals": [
            {"id": i, "concept": c} for i, c in sorted(ontology.individuals.items())
        ],
    }


def from_dict(data: dict) -> Ontology:
    try:
        concepts = {}
        for entry in data["concepts"]:
            concept = Concept(
                id=entry["id"],
                parent=entry.get("parent"),
                labels=tuple(entry.get("labels", ())),
                annotations=tuple(
                    sorted((a["rel"], a["val"]) for a in entry.get("annotations", ()))
                ),
            )
            if concept.id in concepts:
                raise OntologySchemaError(f"duplicate concept {concept.id!r}")
            concepts[concept.id] = concept
        return Ontology(
            id=data["id"],
            concepts=concepts,
            root=data["root"],
            individuals={e["id"]: e["concept"] for e in data.get("individuals", ())},
        )
    except (KeyError, TypeError) as exc:
        raise OntologySchemaError(f"malformed ontology document: {exc}") from None


def load(path: str | Path) -> Ontology:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise OntologySchemaError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)


def save(ontology: Ontology, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(ontology), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


@dataclass(frozen=True)
class OntologyRepository:
    """Ontologies loaded from a directory, ordered by id."""

    members: tuple[Ontology, ...]

    def __post_init__(self):
        ids = [o.id for o in self.members]
        if len(ids) != len(set(ids)):
            raise OntologySchemaError("duplicate ontology ids in repository")
        object.__setattr__(
            self, "members", tuple(sorted(self.members, key=lambda o: o.id))
        )

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def get(self, ontology_id: str) -> Ontology | None:
        for member in self.members:
            if member.id == ontology_id:
                return member
        return None


def load_repository(directory: str | Path) -> OntologyRepository:
    directory = Path(directory)
    members = [load(path) for path in sorted(directory.glob("*.json"))]
    return OntologyRepository(tuple(members))
