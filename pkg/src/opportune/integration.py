"""Staged pipeline turning a discovered object into validated goal opportunities.

Given a proposition that mentions an object the task does not know, the
pipeline locates the object in the similarity-filtered ontology repository,
selects the ontology with the highest semantic variance, positions the
object's type inside the task ontology, instantiates the object's state
variables from a data provider, formulates candidate goals by analogy with
existing goals, and evaluates each candidate with the planner.

All mutations are transactional: unless a candidate goal is accepted, the
task, the task ontology, and the executing plan stay untouched.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from opportune.errors import OpportuneError, ProviderError
from opportune.execution import (
    ExogenousContext,
    HookDecision,
    TAG_OPPORTUNITY_KNOWN,
    TAG_OPPORTUNITY_NEW,
)
from opportune.facts import DataProvider, ObjectFacts, StaticProvider, LayeredProvider, walking_minutes
from opportune.knowledge import KnowledgeStore, annotate_ontology
from opportune.matching import (
    MatchConfig,
    PositionOutcome,
    filter_similar,
    position_type,
    selected_ontologies,
)
from opportune.ontology import Ontology, OntologyRepository, semantic_variance
from opportune.planner import PlannerConfig, solve
from opportune.task_model import (
    Atom,
    Literal,
    Plan,
    PlanningTask,
    ROOT_TYPE,
    format_atom,
    plan_to_text,
    type_compatible,
)
from opportune.text import tokenize


@dataclass(frozen=True)
class NoveltyReport:
    proposition: Atom
    unknown_objects: tuple[str, ...]
    arrival_time: int

    @classmethod
    def from_atom(cls, atom: Atom, task: PlanningTask, arrival_time: int) -> "NoveltyReport":
        unknown = tuple(arg for arg in atom[1:] if arg not in task.objects)
        return cls(atom, unknown, arrival_time)


@dataclass(frozen=True)
class CandidateGoal:
    atom: Atom
    provenance: Atom  # the existing goal whose argument types licensed it


@dataclass(frozen=True)
class OpportunityDecision:
    candidate: CandidateGoal
    verdict: str  # "accepted" | "rejected"
    reason: str
    metric: float | None = None
    plan: Plan | None = None
    variant_start: int = 0

    def to_dict(self) -> dict:
        return {
            "candidate": format_atom(self.candidate.atom),
            "provenance": format_atom(self.candidate.provenance),
            "verdict": self.verdict,
            "reason": self.reason,
            "metric": self.metric,
            "plan": plan_to_text(self.plan).splitlines() if self.plan else None,
            "variant_start": self.variant_start,
        }


@dataclass(frozen=True)
class IntegrationResult:
    status: str  # "existing_type" | "equivalent_type" | "new_type" | "unplaced"
    task: PlanningTask
    ontology: Ontology
    object_id: str
    type_name: str | None
    position: PositionOutcome | None = None


def locate_object(object_id: str, candidates: Iterable[Ontology]) -> tuple[Ontology, ...]:
    """Ontologies whose individuals contain the object, compared on
    normalized token sequences so spelling variants still match."""
    wanted = tokenize(object_id)
    found = []
    for ontology in candidates:
        if any(tokenize(individual) == wanted for individual in ontology.individuals):
            found.append(ontology)
    return tuple(found)


def select_ontology(candidates: Iterable[Ontology], squared: bool = True) -> Ontology:
    """The candidate with the highest semantic variance; ties break by id."""
    ranked = sorted(
        candidates, key=lambda o: (-semantic_variance(o, squared=squared), o.id)
    )
    if not ranked:
        raise OpportuneError("cannot select an ontology from an empty set")
    return ranked[0]


def _individual_concept(ontology: Ontology, object_id: str) -> str:
    wanted = tokenize(object_id)
    for individual, concept_id in sorted(ontology.individuals.items()):
        if tokenize(individual) == wanted:
            return concept_id
    raise OpportuneError(f"object {object_id!r} not found in ontology {ontology.id!r}")


def integrate_object(
    task: PlanningTask,
    base: Ontology,
    object_id: str,
    source: Ontology,
    config: MatchConfig = MatchConfig(),
) -> IntegrationResult:
    """Add the object (and, when needed, its type) to the task and its ontology.

    A literal type match only grows the object set; an equivalent type maps
    the object onto the existing concept; a positioned new type extends the
    hierarchy first. An unplaced type mutates nothing.
    """
    type_name = _individual_concept(source, object_id)

    if type_name in task.types:
        new_task = task.add_object(object_id, type_name)
        new_base = base.add_individual(object_id, type_name)
        return IntegrationResult("existing_type", new_task, new_base, object_id, type_name)

    outcome = position_type(base, source, type_name, config)
    if outcome.kind == "equivalent":
        existing = outcome.target
        new_task = task.add_object(object_id, existing)
        new_base = base.add_individual(object_id, existing)
        return IntegrationResult(
            "equivalent_type", new_task, new_base, object_id, existing, outcome
        )
    if outcome.kind == "new_child":
        parent = outcome.target
        template = source.concepts[type_name]
        new_task = task.add_type(type_name, parent).add_object(object_id, type_name)
        new_base = base.add_concept(
            type_name, parent, template.labels, template.annotations
        ).add_individual(object_id, type_name)
        return IntegrationResult(
            "new_type", new_task, new_base, object_id, type_name, outcome
        )
    return IntegrationResult("unplaced", task, base, object_id, None, outcome)


@dataclass(frozen=True)
class StateAdditions:
    """What instantiation contributed, kept separate so variant initial
    states can be assembled at any resume time."""

    fluents: Mapping[tuple, float] = field(default_factory=dict)
    timed_literals: tuple[tuple[int, Literal], ...] = ()
    atoms: tuple[Atom, ...] = ()

    def atoms_true_at(self, when: int) -> frozenset[Atom]:
        """Extra atoms plus scheduled additions that are true at ``when``."""
        state: set[Atom] = set(self.atoms)
        for t, literal in sorted(self.timed_literals, key=lambda tl: tl[0]):
            if t > when:
                break
            if literal.positive:
                state.add(literal.atom)
            else:
                state.discard(literal.atom)
        return frozenset(state)


class InsufficientDataError(ProviderError):
    """The provider lacks a fact the task schema requires for the object."""


def _window_literals(predicate: str, object_id: str, windows, t_end: int | None):
    out = []
    for start, end in windows:
        out.append((start, Literal((predicate, object_id))))
        if t_end is None or end <= t_end:
            out.append((end, Literal((predicate, object_id), positive=False)))
    return tuple(out)


def instantiate_variables(
    task: PlanningTask,
    object_id: str,
    provider: DataProvider,
    arrival_time: int,
    proposition: Atom | None = None,
) -> tuple[PlanningTask, StateAdditions]:
    """Fill in the state variables the schemas require for a new object.

    Required information is read off the declared schemas: binary functions
    already used between locations yield pairwise movement durations (from
    provider coordinates at walking speed, unless the provider overrides
    them); unary functions already used for peers yield per-object durations;
    unary predicates scheduled for peers yield opening windows. A missing
    required fact aborts with InsufficientDataError; nothing is guessed.
    """
    facts = provider.facts(object_id)
    if facts is None:
        raise InsufficientDataError(f"no facts available for {object_id!r}")
    obj_type = task.object_type(object_id)
    types = task.types
    t_start, t_end = task.instance.horizon

    new_fluents: dict[tuple, float] = {}
    new_timed: list[tuple[int, Literal]] = []
    new_atoms: list[Atom] = list(facts.extra_atoms)

    for name in sorted(task.domain.functions):
        schema = task.domain.functions[name]
        existing_uses = [key for key in task.instance.fluents if key[0] == name]
        if not existing_uses:
            continue
        if len(schema.params) == 2:
            (_, texpr_a), (_, texpr_b) = schema.params
            if not (
                type_compatible(obj_type, texpr_a, types)
                and type_compatible(obj_type, texpr_b, types)
            ):
                continue
            peers = sorted(
                {arg for key in existing_uses for arg in key[1:] if arg != object_id}
            )
            for peer in peers:
                minutes = facts.walking_minutes.get(peer)
                if minutes is None:
                    peer_facts = provider.facts(peer)
                    if (
                        facts.coordinates is None
                        or peer_facts is None
                        or peer_facts.coordinates is None
                    ):
                        raise InsufficientDataError(
                            f"no coordinates to derive ({name} {object_id} {peer})"
                        )
                    minutes = walking_minutes(facts.coordinates, peer_facts.coordinates)
                new_fluents[(name, object_id, peer)] = minutes
                new_fluents[(name, peer, object_id)] = minutes
        elif len(schema.params) == 1:
            if not type_compatible(obj_type, schema.params[0][1], types):
                continue
            if facts.visit_duration is None:
                raise InsufficientDataError(
                    f"no duration fact to instantiate ({name} {object_id})"
                )
            new_fluents[(name, object_id)] = facts.visit_duration

    scheduled_predicates = sorted(
        {literal.atom[0] for _, literal in task.instance.timed_literals}
    )
    for name in scheduled_predicates:
        schema = task.domain.predicates.get(name)
        if schema is None or len(schema.params) != 1:
            continue
        if not type_compatible(obj_type, schema.params[0][1], types):
            continue
        if not facts.open_windows:
            raise InsufficientDataError(
                f"no schedule windows to instantiate ({name} {object_id})"
            )
        new_timed.extend(_window_literals(name, object_id, facts.open_windows, t_end))

    additions = StateAdditions(new_fluents, tuple(new_timed), tuple(new_atoms))
    if proposition is not None and proposition not in additions.atoms_true_at(arrival_time):
        # the triggering observation itself becomes part of the task's state
        new_timed.append((arrival_time, Literal(proposition)))
        additions = StateAdditions(new_fluents, tuple(new_timed), tuple(new_atoms))

    new_instance = task.instance.extend_state(
        atoms=new_atoms, fluents=new_fluents, timed_literals=new_timed
    )
    return replace(task, instance=new_instance), additions


def _non_root_siblings(type_a: str, type_b: str, types) -> bool:
    if type_a == type_b:
        return False
    parent_a, parent_b = types.parent(type_a), types.parent(type_b)
    return parent_a == parent_b and parent_a is not None and parent_a != ROOT_TYPE


def formulate_goals(task: PlanningTask, object_id: str) -> tuple[CandidateGoal, ...]:
    """Candidate goals by analogy: place the object into goal-atom positions
    occupied by objects of its own type or a sibling type (sharing a parent
    below the root), or declared exactly as its type; other positions keep
    the template atom's arguments. Deduplicated; every atom type-checks.
    """
    obj_type = task.object_type(object_id)
    types = task.types
    out: dict[Atom, CandidateGoal] = {}
    for goal_atom in sorted(task.instance.goals):
        schema = task.domain.predicates.get(goal_atom[0])
        if schema is None:
            continue
        for position, arg in enumerate(goal_atom[1:]):
            arg_type = task.objects.get(arg)
            if arg_type is None:
                continue
            texpr = schema.params[position][1]
            licensed = (
                arg_type == obj_type
                or _non_root_siblings(arg_type, obj_type, types)
                or (len(texpr) == 1 and texpr[0] == obj_type)
            )
            if not licensed:
                continue
            if not type_compatible(obj_type, texpr, types):
                continue
            candidate = (
                goal_atom[0],
                *goal_atom[1 : position + 1],
                object_id,
                *goal_atom[position + 2 :],
            )
            if candidate in task.instance.goals or candidate in out:
                continue
            task.validate_atom(candidate)
            out[candidate] = CandidateGoal(candidate, goal_atom)
    return tuple(out[a] for a in sorted(out))


def build_variant(
    task: PlanningTask,
    goal: Atom,
    state_atoms: frozenset[Atom],
    state_fluents: Mapping[tuple, float],
    now: int,
) -> PlanningTask:
    """The modified task for one candidate: current state as init, start time
    at ``now``, goals extended with the candidate."""
    _, t_end = task.instance.horizon
    instance = replace(
        task.instance,
        init_atoms=frozenset(state_atoms),
        fluents=dict(state_fluents),
        timed_literals=tuple(
            (t, lit) for t, lit in task.instance.timed_literals if t > now
        ),
        goals=task.instance.goals | {goal},
        horizon=(now, t_end),
    )
    return replace(task, instance=instance)


def evaluate_opportunities(
    task: PlanningTask,
    candidates: Iterable[CandidateGoal],
    state_atoms: frozenset[Atom],
    state_fluents: Mapping[tuple, float],
    now: int,
    planner_config: PlannerConfig = PlannerConfig(),
) -> tuple[OpportunityDecision | None, tuple[OpportunityDecision, ...]]:
    """Solve one task variant per candidate; a candidate is accepted when a
    plan achieving all goals plus the candidate exists within the horizon.
    The winner has the best metric value (ties: lexicographic atom)."""
    metric = task.instance.metric or ("minimize", ("total-time",))
    direction = metric[0]
    decisions = []
    for candidate in sorted(candidates, key=lambda c: c.atom):
        variant = build_variant(task, candidate.atom, state_atoms, state_fluents, now)
        result = solve(variant, planner_config)
        if result.solved:
            decisions.append(
                OpportunityDecision(
                    candidate, "accepted", "plan found", result.metric, result.plan, now
                )
            )
        else:
            reason = "budget" if result.status == "budget" else "unsolvable"
            decisions.append(
                OpportunityDecision(candidate, "rejected", reason, variant_start=now)
            )
    accepted = [d for d in decisions if d.verdict == "accepted"]
    if not accepted:
        return None, tuple(decisions)
    accepted.sort(
        key=lambda d: (
            d.metric if direction == "minimize" else -d.metric,
            d.candidate.atom,
        )
    )
    return accepted[0], tuple(decisions)


@dataclass
class PipelineConfig:
    match: MatchConfig = field(default_factory=MatchConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sv_squared: bool = True
    charge_planning_time: bool = False


@dataclass(frozen=True)
class PipelineOutcome:
    accepted: bool
    task: PlanningTask
    ontology: Ontology
    plan: Plan | None
    report: dict


class OpportunityPipeline:
    """Wires the repository, knowledge store, provider and planner together.

    Holds the enriched task ontology across events, so types added by one
    accepted opportunity are visible to the next. ``hook`` adapts the
    pipeline to the execution monitor's exogenous-event callback.
    """

    def __init__(
        self,
        ontology: Ontology,
        repository: OntologyRepository,
        store: KnowledgeStore,
        provider: DataProvider | None = None,
        config: PipelineConfig | None = None,
    ):
        self.config = config or PipelineConfig()
        self.store = store
        self.ontology = annotate_ontology(ontology, store)
        self.repository = OntologyRepository(
            tuple(annotate_ontology(o, store) for o in repository)
        )
        self.provider = provider

    def hook(self, context: ExogenousContext) -> HookDecision | None:
        """Process the event's opportunity-tagged additions in order; the
        first accepted candidate wins (one winner per event)."""
        opportunity_atoms = [
            c.atom
            for c in context.classification
            if c.change == "added" and c.tag in (TAG_OPPORTUNITY_NEW, TAG_OPPORTUNITY_KNOWN)
        ]
        if not opportunity_atoms:
            return None
        reports = []
        for atom in opportunity_atoms:
            started = _time.monotonic()
            outcome = self.handle(
                task=context.task,
                proposition=atom,
                arrival_time=context.time,
                state_atoms=context.resume_atoms,
                state_fluents=context.resume_fluents,
                now=context.resume_time,
                event_facts=context.event.facts,
            )
            outcome = self._maybe_charge_planning_time(outcome, context, atom, started)
            reports.append(outcome.report)
            if outcome.accepted:
                self.ontology = outcome.ontology
                return HookDecision(
                    accepted=True,
                    task=outcome.task,
                    plan=outcome.plan,
                    report={"pipeline": reports},
                )
        return HookDecision(accepted=False, report={"pipeline": reports})

    def _maybe_charge_planning_time(self, outcome, context, atom, started):
        if not (self.config.charge_planning_time and outcome.accepted):
            return outcome
        charge = math.ceil((_time.monotonic() - started) * 1000 / 60000)
        if charge == 0:
            return outcome
        return self.handle(
            task=context.task,
            proposition=atom,
            arrival_time=context.time,
            state_atoms=context.resume_atoms,
            state_fluents=context.resume_fluents,
            now=context.resume_time + charge,
            event_facts=context.event.facts,
        )

    def handle(
        self,
        task: PlanningTask,
        proposition: Atom,
        arrival_time: int,
        state_atoms: frozenset[Atom],
        state_fluents: Mapping[tuple, float],
        now: int,
        event_facts: Mapping[str, ObjectFacts] | None = None,
    ) -> PipelineOutcome:
        """Run the full staged pipeline for one proposition."""
        novelty = NoveltyReport.from_atom(proposition, task, arrival_time)
        report: dict = {
            "proposition": format_atom(proposition),
            "unknown_objects": list(novelty.unknown_objects),
            "arrival_time": arrival_time,
            "resume_time": now,
        }
        provider: DataProvider = LayeredProvider(
            StaticProvider(event_facts or {}), self.provider
        )
        rejected = PipelineOutcome(False, task, self.ontology, None, report)

        work_task, work_ontology = task, self.ontology
        integrated_objects: list[str] = []

        if novelty.unknown_objects:
            entries = filter_similar(
                work_ontology, self.repository, self.config.match.filter_threshold
            )
            report["similar"] = [
                {"id": e.ontology.id, "score": round(e.score, 4), "selected": e.selected}
                for e in entries
            ]
            shortlist = selected_ontologies(entries)

            for object_id in novelty.unknown_objects:
                containing = locate_object(object_id, shortlist)
                report.setdefault("located", {})[object_id] = [o.id for o in containing]
                if not containing:
                    report["stopped"] = f"object {object_id!r} unknown to all ontologies"
                    return rejected
                chosen = select_ontology(containing, squared=self.config.sv_squared)
                report.setdefault("selected_ontology", {})[object_id] = {
                    "id": chosen.id,
                    "sv": {
                        o.id: round(semantic_variance(o, squared=self.config.sv_squared), 4)
                        for o in containing
                    },
                }
                integration = integrate_object(
                    work_task, work_ontology, object_id, chosen, self.config.match
                )
                report.setdefault("integration", {})[object_id] = {
                    "status": integration.status,
                    "type": integration.type_name,
                    "position": integration.position.to_dict()
                    if integration.position
                    else None,
                }
                if integration.status == "unplaced":
                    report["stopped"] = f"type of {object_id!r} could not be positioned"
                    return rejected
                work_task, work_ontology = integration.task, integration.ontology
                integrated_objects.append(object_id)
        else:
            # known objects: the proposition still needs to enter the state
            integrated_objects = [
                arg for arg in dict.fromkeys(proposition[1:]) if arg in task.objects
            ]

        additions = StateAdditions()
        for object_id in integrated_objects:
            try:
                work_task, object_additions = instantiate_variables(
                    work_task, object_id, provider, arrival_time, proposition
                )
            except InsufficientDataError as exc:
                if novelty.unknown_objects:
                    report["stopped"] = f"insufficient data: {exc}"
                    return rejected
                object_additions = StateAdditions()  # known objects keep current state
            additions = StateAdditions(
                {**additions.fluents, **object_additions.fluents},
                additions.timed_literals + object_additions.timed_literals,
                additions.atoms + object_additions.atoms,
            )

        candidates: list[CandidateGoal] = []
        for object_id in integrated_objects:
            candidates.extend(formulate_goals(work_task, object_id))
        seen = set()
        candidates = [
            c for c in candidates if not (c.atom in seen or seen.add(c.atom))
        ]
        report["candidates"] = [format_atom(c.atom) for c in candidates]
        if not candidates:
            report["stopped"] = "no candidate goals"
            return rejected

        variant_atoms = (
            frozenset(state_atoms)
            | additions.atoms_true_at(now)
            | frozenset([proposition])
        )
        variant_fluents = {**dict(state_fluents), **dict(additions.fluents)}
        best, decisions = evaluate_opportunities(
            work_task, candidates, variant_atoms, variant_fluents, now,
            self.config.planner,
        )
        report["decisions"] = [d.to_dict() for d in decisions]
        if best is None:
            report["stopped"] = "no candidate accepted"
            return rejected

        report["winner"] = format_atom(best.candidate.atom)
        final_task = replace(
            work_task,
            instance=work_task.instance.add_goal(best.candidate.atom),
        )
        return PipelineOutcome(True, final_task, work_ontology, best.plan, report)
