"""Serialization of tasks and plans back to their text formats.

``parse(serialize(x))`` must reproduce ``x`` under structural equality; the
round-trip property is part of the test suite.
"""

from __future__ import annotations

from opportune.task_model.model import (
    ActionSchema,
    Domain,
    Expr,
    Instance,
    Literal,
    Plan,
    PlanningTask,
    PredicateSchema,
    ROOT_TYPE,
)


def _format_type_expr(texpr) -> str:
    if len(texpr) == 1:
        return texpr[0]
    return "(either " + " ".join(texpr) + ")"


def _format_params(params) -> str:
    return " ".join(f"{name} - {_format_type_expr(texpr)}" for name, texpr in params)


def format_expr(expr: Expr) -> str:
    kind = expr[0]
    if kind == "num":
        return _format_number(expr[1])
    if kind == "total-time":
        return "(total-time)"
    if kind == "fluent":
        inner = " ".join(expr[1:])
        return f"({inner})"
    return f"({kind} {format_expr(expr[1])} {format_expr(expr[2])})"


def _format_number(value) -> str:
    return str(value)


def format_literal(literal: Literal) -> str:
    inner = "(" + " ".join(literal.atom) + ")"
    return inner if literal.positive else f"(not {inner})"


def format_atom(atom) -> str:
    return "(" + " ".join(atom) + ")"


def _format_predicate(schema: PredicateSchema) -> str:
    if not schema.params:
        return f"({schema.name})"
    return f"({schema.name} {_format_params(schema.params)})"


def _format_action(action: ActionSchema) -> list[str]:
    lines = [f"  (:durative-action {action.name}"]
    lines.append(f"    :parameters ({_format_params(action.params)})")
    lines.append(f"    :duration (= ?duration {format_expr(action.duration)})")
    cond_tags = {"start": "at start", "overall": "over all"}
    conds = [
        f"({cond_tags[c.when]} {format_literal(c.literal)})" for c in action.conditions
    ]
    lines.append("    :condition (and " + " ".join(conds) + ")")
    effs = [f"(at {e.when} {format_literal(e.literal)})" for e in action.effects]
    effs += [
        f"(at {n.when} ({n.op} {format_expr(n.fluent)} {format_expr(n.expr)}))"
        for n in action.numeric_effects
    ]
    lines.append("    :effect (and " + " ".join(effs) + "))")
    return lines


def domain_to_pddl(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append("  (:requirements " + " ".join(domain.requirements) + ")")
    type_decls = [
        f"{name} - {parent}"
        for name, parent in domain.types.entries.items()
        if name != ROOT_TYPE
    ]
    lines.append("  (:types " + " ".join(type_decls) + ")")
    if domain.predicates:
        lines.append("  (:predicates")
        for schema in domain.predicates.values():
            lines.append(f"    {_format_predicate(schema)}")
        lines.append("  )")
    if domain.functions:
        lines.append("  (:functions")
        for schema in domain.functions.values():
            lines.append(f"    {_format_predicate(schema)}")
        lines.append("  )")
    for action in domain.actions.values():
        lines.extend(_format_action(action))
    lines.append(")")
    return "\n".join(lines) + "\n"


def problem_to_pddl(instance: Instance) -> str:
    lines = [f"(define (problem {instance.name})", f"  (:domain {instance.domain_name})"]
    if instance.objects:
        decls = [f"{name} - {t}" for name, t in instance.objects.items()]
        lines.append("  (:objects " + " ".join(decls) + ")")
    lines.append("  (:init")
    for atom in sorted(instance.init_atoms):
        lines.append(f"    {format_atom(atom)}")
    for key, value in sorted(instance.fluents.items(), key=lambda kv: kv[0]):
        fluent = "(" + " ".join(key) + ")"
        lines.append(f"    (= {fluent} {_format_number(value)})")
    for time, literal in instance.timed_literals:
        lines.append(f"    (at {time} {format_literal(literal)})")
    lines.append("  )")
    goal_atoms = " ".join(format_atom(a) for a in sorted(instance.goals))
    lines.append(f"  (:goal (and {goal_atoms}))")
    if instance.metric:
        direction, expr = instance.metric
        lines.append(f"  (:metric {direction} {format_expr(expr)})")
    lines.append(")")
    return "\n".join(lines) + "\n"


def task_to_pddl(task: PlanningTask) -> tuple[str, str]:
    return domain_to_pddl(task.domain), problem_to_pddl(task.instance)


def plan_to_text(plan: Plan) -> str:
    lines = [
        f"{step.start}: ({' '.join((step.name, *step.args))}) [{step.duration}]"
        for step in plan.steps
    ]
    return "\n".join(lines) + ("\n" if lines else "")
