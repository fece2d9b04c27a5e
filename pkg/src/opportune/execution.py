"""Timeline-based plan execution simulator and monitor.

A plan expands into chronologically ordered timed events (action endpoints,
scheduled literals, a final goal check). The run loop interleaves exogenous
scenario events, maintains expected and observed states, reports each
discrepancy with its classification, and lets a hook swap in a new plan,
rebuilding the remaining timeline in place.

Events at the same minute process in a fixed order: scheduled literals,
exogenous events, action ends, action starts, goal check. Windows therefore
open before the actions needing them start, and an event arriving while an
action is in progress takes effect at that action's end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from opportune.errors import ScenarioError, TaskError
from opportune.facts import ObjectFacts, facts_from_dict
from opportune.planner import eval_expr, ground_action, validate
from opportune.task_model import (
    Atom,
    Literal,
    Plan,
    PlanStep,
    PlanningTask,
    format_atom,
    format_literal,
    parse_atom,
)

KIND_PRIORITY = {
    "til": 0,
    "exogenous": 1,
    "action_end": 2,
    "action_start": 3,
    "goal_check": 4,
}

TAG_CONFIRMATION = "confirmation"
TAG_FAILURE = "failure"
TAG_OPPORTUNITY_KNOWN = "opportunity_known_object"
TAG_OPPORTUNITY_NEW = "opportunity_new_object"


@dataclass(frozen=True)
class TimedEvent:
    time: int
    kind: str
    seq: int
    literals: tuple[Literal, ...] = ()
    numeric: tuple[tuple[str, tuple, object], ...] = ()  # (op, fluent key, expr)
    step: PlanStep | None = None
    step_index: int | None = None
    scenario: "ScenarioEvent | None" = None

    @property
    def order_key(self) -> tuple[int, int, int]:
        return (self.time, KIND_PRIORITY[self.kind], self.seq)


@dataclass(frozen=True)
class Timeline:
    task: PlanningTask
    plan: Plan
    events: tuple[TimedEvent, ...]


@dataclass(frozen=True)
class ScenarioEvent:
    time: int
    asserts: tuple[Atom, ...] = ()
    retracts: tuple[Atom, ...] = ()
    facts: Mapping[str, ObjectFacts] = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    events: tuple[ScenarioEvent, ...] = ()

    def __post_init__(self):
        times = [e.time for e in self.events]
        if times != sorted(times):
            raise ScenarioError("scenario events must be sorted by time")


@dataclass(frozen=True)
class DiscrepancySet:
    observed_not_expected: frozenset[Atom]
    expected_not_observed: frozenset[Atom]

    @property
    def empty(self) -> bool:
        return not self.observed_not_expected and not self.expected_not_observed

    def to_dict(self) -> dict:
        return {
            "observed_not_expected": sorted(map(format_atom, self.observed_not_expected)),
            "expected_not_observed": sorted(map(format_atom, self.expected_not_observed)),
        }


@dataclass(frozen=True)
class ClassifiedAtom:
    atom: Atom
    change: str  # "added" | "removed"
    tag: str

    def to_dict(self) -> dict:
        return {"atom": format_atom(self.atom), "change": self.change, "tag": self.tag}


@dataclass(frozen=True)
class HookDecision:
    """What an opportunity hook decided at an exogenous event."""

    accepted: bool
    task: PlanningTask | None = None  # extended task, when accepted
    plan: Plan | None = None  # replacement plan from the resume time
    report: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExogenousContext:
    """Everything a hook needs to evaluate an event."""

    task: PlanningTask
    plan: Plan
    time: int
    resume_time: int  # end of the in-progress action, or the event time
    resume_atoms: frozenset[Atom]  # observed state projected to resume_time
    resume_fluents: Mapping[tuple, float]
    event: ScenarioEvent
    discrepancy: DiscrepancySet
    classification: tuple[ClassifiedAtom, ...]


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict) or "events" not in data:
        raise ScenarioError("scenario document must contain an \"events\" list")
    events = []
    for i, entry in enumerate(data["events"]):
        try:
            facts = {
                object_id: facts_from_dict(object_id, payload)
                for object_id, payload in entry.get("facts", {}).items()
            }
            events.append(
                ScenarioEvent(
                    time=int(entry["time"]),
                    asserts=tuple(parse_atom(a) for a in entry.get("assert", ())),
                    retracts=tuple(parse_atom(a) for a in entry.get("retract", ())),
                    facts=facts,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"scenario event {i}: {exc}") from None
    return Scenario(tuple(events))


def discrepancies(expected: Iterable[Atom], observed: Iterable[Atom]) -> DiscrepancySet:
    """Exact set differences in both directions."""
    expected, observed = frozenset(expected), frozenset(observed)
    return DiscrepancySet(observed - expected, expected - observed)


def goal_relevant_predicates(task: PlanningTask) -> frozenset[str]:
    """Goal predicates plus the condition predicates of every action able to
    achieve one of them."""
    goal_preds = {atom[0] for atom in task.instance.goals}
    relevant = set(goal_preds)
    for action in task.domain.actions.values():
        achieves = {
            eff.literal.atom[0] for eff in action.effects if eff.literal.positive
        }
        if achieves & goal_preds:
            relevant.update(cond.literal.atom[0] for cond in action.conditions)
    return frozenset(relevant)


def _remaining_condition_atoms(task: PlanningTask, plan: Plan, now: int) -> frozenset[Atom]:
    """Positive condition atoms of plan steps that have not finished by ``now``."""
    atoms: set[Atom] = set()
    for step in plan.steps:
        if step.end <= now:
            continue
        schema = task.domain.actions.get(step.name)
        if schema is None:
            continue
        ground = ground_action(schema, step.args)
        for cond in (*ground.start_conditions, *ground.overall_conditions):
            if cond.positive:
                atoms.add(cond.atom)
    return frozenset(atoms)


def classify(
    disc: DiscrepancySet, task: PlanningTask, plan: Plan, now: int
) -> tuple[ClassifiedAtom, ...]:
    """Tag every discrepancy atom.

    Additions mentioning an object the task does not know are new-object
    opportunities; known-object additions on goal-relevant predicates are
    known-object opportunities; deletions that break a condition of a
    remaining plan step are failures; everything else confirms execution.
    """
    relevant = goal_relevant_predicates(task)
    needed = _remaining_condition_atoms(task, plan, now)
    out = []
    for atom in sorted(disc.observed_not_expected):
        if any(arg not in task.objects for arg in atom[1:]):
            tag = TAG_OPPORTUNITY_NEW
        elif atom[0] in relevant:
            tag = TAG_OPPORTUNITY_KNOWN
        else:
            tag = TAG_CONFIRMATION
        out.append(ClassifiedAtom(atom, "added", tag))
    for atom in sorted(disc.expected_not_observed):
        if atom in needed:
            tag = TAG_FAILURE
        elif any(arg not in task.objects for arg in atom[1:]):
            tag = TAG_OPPORTUNITY_NEW
        else:
            tag = TAG_CONFIRMATION
        out.append(ClassifiedAtom(atom, "removed", tag))
    return tuple(out)


def _plan_events(task: PlanningTask, plan: Plan, seq_start: int = 0):
    events = []
    seq = seq_start
    for index, step in enumerate(plan.steps):
        schema = task.domain.actions.get(step.name)
        if schema is None:
            raise TaskError(f"plan step {index} uses unknown action {step.name!r}")
        ground = ground_action(schema, step.args)
        events.append(
            TimedEvent(
                time=step.start,
                kind="action_start",
                seq=seq,
                literals=ground.start_effects,
                numeric=ground.start_numeric,
                step=step,
                step_index=index,
            )
        )
        seq += 1
        events.append(
            TimedEvent(
                time=step.end,
                kind="action_end",
                seq=seq,
                literals=ground.end_effects,
                numeric=ground.end_numeric,
                step=step,
                step_index=index,
            )
        )
        seq += 1
    return events, seq


def _til_events(task: PlanningTask, after: int, seq_start: int):
    by_time: dict[int, list[Literal]] = {}
    for t, literal in task.instance.timed_literals:
        if t > after:
            by_time.setdefault(t, []).append(literal)
    events = []
    seq = seq_start
    for t in sorted(by_time):
        events.append(TimedEvent(time=t, kind="til", seq=seq, literals=tuple(by_time[t])))
        seq += 1
    return events, seq


def build_timeline(task: PlanningTask, plan: Plan) -> Timeline:
    """Expand a validating plan into ordered timed events: every scheduled
    literal, every action endpoint, and a final goal check at plan end."""
    check = validate(plan, task)
    if not check.ok:
        raise TaskError(f"cannot build a timeline from an invalid plan: {check.violation}")
    t_start, _ = task.instance.horizon
    til_events, seq = _til_events(task, -1, 0)
    plan_events, seq = _plan_events(task, plan, seq)
    goal_time = plan.end_time if plan.end_time is not None else t_start
    goal_event = TimedEvent(time=goal_time, kind="goal_check", seq=seq)
    events = sorted(til_events + plan_events + [goal_event], key=lambda e: e.order_key)
    return Timeline(task, plan, tuple(events))


def replay(timeline: Timeline) -> tuple[frozenset[Atom], dict]:
    """Fold every event's effects from the initial state, without condition
    checks; the independent counterpart of plan validation."""
    atoms = set(timeline.task.instance.init_atoms)
    fluents = dict(timeline.task.instance.fluents)
    for event in timeline.events:
        _apply_event(atoms, fluents, event)
    return frozenset(atoms), fluents


def _apply_event(atoms: set, fluents: dict, event: TimedEvent) -> None:
    for literal in event.literals:
        if literal.positive:
            atoms.add(literal.atom)
        else:
            atoms.discard(literal.atom)
    for op, key, expr in event.numeric:
        value = eval_expr(expr, fluents)
        if op == "increase":
            fluents[key] = fluents.get(key, 0) + value
        elif op == "decrease":
            fluents[key] = fluents.get(key, 0) - value
        else:
            fluents[key] = value


@dataclass
class ExecutionResult:
    records: list[dict]
    report: dict

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
            for r in self.records
        )


Hook = Callable[[ExogenousContext], "HookDecision | None"]


def run(
    timeline: Timeline,
    scenario: Scenario = Scenario(),
    hook: Hook | None = None,
    on_failure: str = "halt",
) -> ExecutionResult:
    """Drive the timeline against a scenario.

    At every exogenous event the discrepancy set and its classification are
    logged and passed to the hook; an accepted decision swaps the task and
    plan, rebuilding the remaining timeline from the resume point. After each
    exogenous event the expected state is re-synchronized to the observed
    state, so each discrepancy is reported exactly once.
    """
    if on_failure not in ("halt", "continue"):
        raise TaskError(f"unknown failure mode {on_failure!r}")
    task, plan = timeline.task, timeline.plan
    expected = set(task.instance.init_atoms)
    observed = set(task.instance.init_atoms)
    exp_fluents = dict(task.instance.fluents)
    obs_fluents = dict(task.instance.fluents)

    events = list(timeline.events)
    seq = max((e.seq for e in events), default=0) + 1
    for sc_event in scenario.events:
        events.append(TimedEvent(time=sc_event.time, kind="exogenous", seq=seq, scenario=sc_event))
        seq += 1
    events.sort(key=lambda e: e.order_key)

    records: list[dict] = []
    plan_number = 1
    plans_adopted = ["plan-1"]
    halted = False
    goal_record: dict | None = None

    i = 0
    while i < len(events):
        event = events[i]
        i += 1
        plan_id = plans_adopted[-1]
        if event.kind == "til":
            _apply_event(expected, exp_fluents, event)
            _apply_event(observed, obs_fluents, event)
            records.append(
                {
                    "time": event.time,
                    "kind": "til",
                    "plan": plan_id,
                    "literals": sorted(format_literal(l) for l in event.literals),
                }
            )
        elif event.kind in ("action_start", "action_end"):
            record = {
                "time": event.time,
                "kind": event.kind,
                "plan": plan_id,
                "step": event.step_index,
                "action": format_atom((event.step.name, *event.step.args)),
                "status": "ok",
            }
            if (plan_id, event.step_index) in failed_steps:
                # the action never started; its end effects cannot happen
                record["status"] = "skipped"
                records.append(record)
                continue
            violation = _check_action_event(task, event, frozenset(observed))
            if violation is not None:
                record["status"] = "failure"
                record["violation"] = violation
                failed_steps.add((plan_id, event.step_index))
                records.append(record)
                if on_failure == "halt":
                    halted = True
                    break
                continue
            _apply_event(expected, exp_fluents, event)
            _apply_event(observed, obs_fluents, event)
            records.append(record)
        elif event.kind == "goal_check":
            missing = sorted(
                format_atom(g) for g in task.instance.goals if g not in observed
            )
            goal_record = {
                "time": event.time,
                "kind": "goal_check",
                "plan": plan_id,
                "satisfied": not missing,
                "missing": missing,
            }
            records.append(goal_record)
        else:  # exogenous
            sc = event.scenario
            for atom in sc.asserts:
                observed.add(atom)
            for atom in sc.retracts:
                observed.discard(atom)
            disc = discrepancies(expected, observed)
            tags = classify(disc, task, plan, event.time)
            record = {
                "time": event.time,
                "kind": "exogenous",
                "plan": plan_id,
                "assert": sorted(map(format_atom, sc.asserts)),
                "retract": sorted(map(format_atom, sc.retracts)),
                "discrepancy": disc.to_dict(),
                "classification": [c.to_dict() for c in tags],
                "decision": None,
                "plan_swapped": False,
            }
            decision = None
            if hook is not None and not disc.empty:
                context = _make_context(
                    task, plan, event, events[i:], frozenset(observed), obs_fluents, disc, tags
                )
                decision = hook(context)
            if decision is not None:
                record["decision"] = decision.report or None
                if decision.accepted:
                    record["plan_swapped"] = True
                    task = decision.task
                    plan = decision.plan
                    plan_number += 1
                    plans_adopted.append(f"plan-{plan_number}")
                    events, i = _rebuild_tail(events, i, task, plan, event.time)
            expected = set(observed)
            exp_fluents = dict(obs_fluents)
            records.append(record)

    report = _final_report(task, frozenset(observed), plans_adopted, goal_record, halted)
    return ExecutionResult(records, report)


def _check_action_event(task, event, observed: frozenset[Atom]) -> str | None:
    schema = task.domain.actions.get(event.step.name)
    if schema is None:
        return f"unknown action {event.step.name!r}"
    ground = ground_action(schema, event.step.args)
    conditions = (
        (*ground.start_conditions, *ground.overall_conditions)
        if event.kind == "action_start"
        else ground.overall_conditions
    )
    for cond in conditions:
        if (cond.atom in observed) != cond.positive:
            return f"condition {format_literal(cond)} does not hold"
    return None


def _make_context(task, plan, event, tail, observed, obs_fluents, disc, tags):
    """Project the observed state to the moment a new plan could take over:
    the end of the in-progress action, or the event time itself."""
    resume_time = event.time
    for step in plan.steps:
        if step.start < event.time <= step.end:
            resume_time = step.end
            break
    atoms = set(observed)
    fluents = dict(obs_fluents)
    for ev in tail:
        if ev.time > resume_time or ev.kind in ("exogenous", "goal_check"):
            continue
        # actions finishing after the resume point are superseded by the swap
        if ev.kind in ("action_start", "action_end") and ev.step.end > resume_time:
            continue
        _apply_event(atoms, fluents, ev)
    return ExogenousContext(
        task=task,
        plan=plan,
        time=event.time,
        resume_time=resume_time,
        resume_atoms=frozenset(atoms),
        resume_fluents=fluents,
        event=event.scenario,
        discrepancy=disc,
        classification=tags,
    )


def _rebuild_tail(events, i, task, plan, now):
    """Replace the unprocessed part of the event list after a plan swap.

    Keeps end events of actions already under way and future exogenous
    events; scheduled literals re-derive from the (possibly extended) task;
    the new plan contributes fresh action events and goal check.
    """
    processed = events[:i]
    kept = [
        e
        for e in events[i:]
        if e.kind == "exogenous"
        or (e.kind == "action_end" and e.step.start < now <= e.step.end)
    ]
    seq = max(e.seq for e in processed) + 1
    til_events, seq = _til_events(task, now, seq)
    plan_events, seq = _plan_events(task, plan, seq)
    goal_time = plan.end_time if plan.end_time is not None else now
    goal_event = TimedEvent(time=goal_time, kind="goal_check", seq=seq)
    tail = sorted(kept + til_events + plan_events + [goal_event], key=lambda e: e.order_key)
    return processed + tail, i


def _final_report(task, observed, plans_adopted, goal_record, halted):
    goal_preds = sorted({atom[0] for atom in task.instance.goals})
    counts = {
        pred: sum(1 for atom in observed if atom[0] == pred) for pred in goal_preds
    }
    satisfied = sorted(format_atom(g) for g in task.instance.goals if g in observed)
    missing = sorted(format_atom(g) for g in task.instance.goals if g not in observed)
    return {
        "plans_adopted": plans_adopted,
        "goal_predicate_counts": counts,
        "goals_satisfied": satisfied,
        "goals_missing": missing,
        "all_goals_satisfied": not missing,
        "final_goal_check": goal_record,
        "halted_on_failure": halted,
        "final_state": sorted(map(format_atom, observed)),
    }
