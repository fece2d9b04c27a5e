from __future__ import annotations

import pytest

from opportune.fixtures import fixture_path
from opportune.knowledge import load_edges
from opportune.ontology import from_task, load_repository
from opportune.task_model import parse_task


@pytest.fixture(scope="session")
def valencia_task():
    return parse_task(
        fixture_path("valencia", "domain.pddl").read_text(encoding="utf-8"),
        fixture_path("valencia", "problem.pddl").read_text(encoding="utf-8"),
    )


@pytest.fixture(scope="session")
def store():
    return load_edges(fixture_path("valencia", "knowledge.tsv"))


@pytest.fixture(scope="session")
def repository():
    return load_repository(fixture_path("valencia", "ontologies"))


@pytest.fixture(scope="session")
def nphi(valencia_task):
    return from_task(valencia_task, "valencia_task")


@pytest.fixture(scope="session")
def valencia_plan(valencia_task):
    from opportune.planner import PlannerConfig, solve

    result = solve(valencia_task, PlannerConfig())
    assert result.solved
    return result.plan


@pytest.fixture(scope="session")
def enriched_nphi(nphi, store):
    from opportune.knowledge import annotate_ontology

    return annotate_ontology(nphi, store)


@pytest.fixture(scope="session")
def enriched_repository(repository, store):
    from opportune.knowledge import annotate_ontology
    from opportune.ontology import OntologyRepository

    return OntologyRepository(tuple(annotate_ontology(o, store) for o in repository))
