"""Temporal planner for sequential durative actions with time windows.

Actions execute one at a time. Scheduled literals (e.g. opening hours) flip
atoms at fixed times; an action may start at any minute at or after the
current state's time, so the search considers the earliest feasible start of
every ground action, which is always at a window boundary or now.

Invariant (`over all`) conditions are checked after the start effects, after
every scheduled literal falling inside the action's interval including its
end point, and thus hold across the whole closed interval under sequential
semantics.

The optimal strategy is depth-first branch and bound with visited-state
dominance; the greedy strategy is uniform-cost on elapsed time, returning
the first plan found.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
import subprocess
import tempfile
import time as _time
from dataclasses import dataclass
from pathlib import Path

from opportune.errors import TaskError
from opportune.task_model import (
    ActionSchema,
    Atom,
    Expr,
    Literal,
    Plan,
    PlanStep,
    PlanningTask,
    domain_to_pddl,
    parse_plan,
    problem_to_pddl,
    type_compatible,
)

DEFAULT_METRIC = ("minimize", ("total-time",))
ARITH_OPS = frozenset({"+", "-", "*", "/"})


@dataclass(frozen=True)
class PlannerConfig:
    node_budget: int = 1_000_000
    time_budget_ms: int = 60_000
    strategy: str = "optimal"  # "optimal" | "greedy"
    external_cmd: str = ""  # non-empty: shell out instead of searching

    def __post_init__(self):
        if self.node_budget <= 0 or self.time_budget_ms <= 0:
            raise TaskError("planner budgets must be positive")
        if self.strategy not in ("optimal", "greedy"):
            raise TaskError(f"unknown planner strategy {self.strategy!r}")


@dataclass(frozen=True)
class SolveResult:
    status: str  # "solved" | "unsolvable" | "budget"
    plan: Plan | None = None
    metric: float | None = None
    nodes: int = 0

    @property
    def solved(self) -> bool:
        return self.status == "solved"


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violation: str | None
    end_time: int
    final_atoms: frozenset[Atom]
    final_fluents: dict

    def __bool__(self) -> bool:
        return self.ok


def eval_expr(expr: Expr, fluents: dict, total_time: float | None = None):
    kind = expr[0]
    if kind == "num":
        return expr[1]
    if kind == "total-time":
        if total_time is None:
            raise TaskError("(total-time) is only defined in metric expressions")
        return total_time
    if kind == "fluent":
        key = tuple(expr[1:])
        if key not in fluents:
            raise TaskError(f"undefined fluent {key}")
        return fluents[key]
    left = eval_expr(expr[1], fluents, total_time)
    right = eval_expr(expr[2], fluents, total_time)
    if kind == "+":
        return left + right
    if kind == "-":
        return left - right
    if kind == "*":
        return left * right
    if right == 0:
        raise TaskError("division by zero in expression")
    return left / right


@dataclass(frozen=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    duration: Expr
    start_conditions: tuple[Literal, ...]
    overall_conditions: tuple[Literal, ...]
    start_effects: tuple[Literal, ...]
    end_effects: tuple[Literal, ...]
    start_numeric: tuple[tuple[str, tuple, Expr], ...]  # (op, fluent key, expr)
    end_numeric: tuple[tuple[str, tuple, Expr], ...]

    @property
    def key(self) -> tuple:
        return (self.name, self.args)


def _bind_expr(expr: Expr, binding: dict[str, str]) -> Expr:
    kind = expr[0]
    if kind in ("num", "total-time"):
        return expr
    if kind == "fluent":
        return ("fluent", expr[1], *(binding.get(a, a) for a in expr[2:]))
    return (kind, _bind_expr(expr[1], binding), _bind_expr(expr[2], binding))


def _bind_literal(literal: Literal, binding: dict[str, str]) -> Literal:
    atom = (literal.atom[0], *(binding.get(a, a) for a in literal.atom[1:]))
    return Literal(atom, literal.positive)


def ground_action(schema: ActionSchema, args: tuple[str, ...]) -> GroundAction:
    binding = {name: arg for (name, _), arg in zip(schema.params, args)}
    start_c, overall_c = [], []
    for cond in schema.conditions:
        target = start_c if cond.when == "start" else overall_c
        target.append(_bind_literal(cond.literal, binding))
    start_e, end_e = [], []
    for eff in schema.effects:
        target = start_e if eff.when == "start" else end_e
        target.append(_bind_literal(eff.literal, binding))
    start_n, end_n = [], []
    for num in schema.numeric_effects:
        bound = (num.op, tuple(_bind_expr(num.fluent, binding)[1:]), _bind_expr(num.expr, binding))
        (start_n if num.when == "start" else end_n).append(bound)
    return GroundAction(
        name=schema.name,
        args=args,
        duration=_bind_expr(schema.duration, binding),
        start_conditions=tuple(start_c),
        overall_conditions=tuple(overall_c),
        start_effects=tuple(start_e),
        end_effects=tuple(end_e),
        start_numeric=tuple(start_n),
        end_numeric=tuple(end_n),
    )


def ground_all_actions(task: PlanningTask) -> tuple[GroundAction, ...]:
    """All type-correct groundings, sorted by (name, args) for determinism."""
    out = []
    objects = sorted(task.objects)
    for name in sorted(task.domain.actions):
        schema = task.domain.actions[name]
        pools = []
        for _, texpr in schema.params:
            pool = [
                o for o in objects if type_compatible(task.objects[o], texpr, task.types)
            ]
            pools.append(pool)
        for combo in itertools.product(*pools):
            out.append(ground_action(schema, tuple(combo)))
    return tuple(out)


def apply_literals(atoms: frozenset[Atom], literals) -> frozenset[Atom]:
    """Deletes first, then adds (add wins when both mention one atom)."""
    removed = {lit.atom for lit in literals if not lit.positive}
    added = {lit.atom for lit in literals if lit.positive}
    return (atoms - removed) | added


def _apply_numeric(fluents: dict, effects) -> dict:
    if not effects:
        return fluents
    out = dict(fluents)
    for op, key, expr in effects:
        value = eval_expr(expr, out)
        if op == "increase":
            out[key] = out.get(key, 0) + value
        elif op == "decrease":
            out[key] = out.get(key, 0) - value
        else:
            out[key] = value
    return out


def _holds(literal: Literal, atoms: frozenset[Atom]) -> bool:
    return (literal.atom in atoms) == literal.positive


class _Timeline:
    """Scheduled-literal bookkeeping shared by search and validation."""

    def __init__(self, timed_literals):
        self.times = sorted({t for t, _ in timed_literals})
        self.by_time: dict[int, list[Literal]] = {}
        for t, literal in timed_literals:
            self.by_time.setdefault(t, []).append(literal)

    def advance(self, atoms: frozenset[Atom], after: int, upto: int) -> frozenset[Atom]:
        """Apply all scheduled literals with time in (after, upto]."""
        for t in self.times:
            if after < t <= upto:
                atoms = apply_literals(atoms, self.by_time[t])
            elif t > upto:
                break
        return atoms

    def times_between(self, after: int, upto: int) -> list[int]:
        return [t for t in self.times if after < t <= upto]


def _action_duration(action: GroundAction, fluents: dict) -> int | None:
    try:
        value = eval_expr(action.duration, fluents)
    except TaskError:
        return None
    if isinstance(value, float):
        if not value.is_integer():
            return None
        value = int(value)
    return value if value > 0 else None


def _try_start(action, atoms, fluents, timeline, now, start, duration, t_end):
    """Simulate starting ``action`` at ``start``; returns the successor state
    (atoms, fluents, end_time) or None if some condition fails."""
    end = start + duration
    if t_end is not None and end > t_end:
        return None
    cur = timeline.advance(atoms, now, start)
    if not all(_holds(c, cur) for c in action.start_conditions):
        return None
    cur = apply_literals(cur, action.start_effects)
    new_fluents = _apply_numeric(fluents, action.start_numeric)
    if not all(_holds(c, cur) for c in action.overall_conditions):
        return None
    last = start
    for t in timeline.times_between(start, end):
        cur = timeline.advance(cur, last, t)
        last = t
        if not all(_holds(c, cur) for c in action.overall_conditions):
            return None
    cur = apply_literals(cur, action.end_effects)
    new_fluents = _apply_numeric(new_fluents, action.end_numeric)
    return cur, new_fluents, end


def _earliest_start(action, atoms, fluents, timeline, now, t_end):
    """Earliest feasible (start, successor) at or after ``now``, or None.

    Feasibility is piecewise-constant between window boundaries, so only
    ``now``, scheduled times, and scheduled times minus the duration need
    checking.
    """
    duration = _action_duration(action, fluents)
    if duration is None:
        return None
    limit = t_end if t_end is not None else (timeline.times[-1] if timeline.times else now)
    candidates = {now}
    for t in timeline.times:
        if now < t <= limit:
            candidates.add(t)
        if now < t - duration <= limit:
            candidates.add(t - duration)
    for start in sorted(candidates):
        if t_end is not None and start + duration > t_end:
            continue
        result = _try_start(action, atoms, fluents, timeline, now, start, duration, t_end)
        if result is not None:
            return start, duration, result
    return None


def _fluents_key(fluents: dict) -> tuple:
    return tuple(sorted(fluents.items()))


def _schedule_only_atoms(task: PlanningTask, actions) -> frozenset[Atom]:
    """Atoms driven purely by scheduled literals (no action touches them).

    Their truth is a function of time alone, so dominance checks can ignore
    them: a state reached earlier can always wait into the later one.
    """
    scheduled = {literal.atom for _, literal in task.instance.timed_literals}
    touched = {
        literal.atom
        for action in actions
        for literal in (*action.start_effects, *action.end_effects)
    }
    return frozenset(scheduled - touched)


def _initial_state(task: PlanningTask, timeline: _Timeline):
    t_start, _ = task.instance.horizon
    atoms = timeline.advance(task.instance.init_atoms, -1, t_start)
    return atoms, dict(task.instance.fluents), t_start


def plan_metric(plan_end: int | None, t_start: int, fluents: dict, metric) -> float:
    direction, expr = metric
    total_time = 0 if plan_end is None else plan_end - t_start
    return eval_expr(expr, fluents, total_time)


def _better(a: float, b: float, direction: str) -> bool:
    return a < b if direction == "minimize" else a > b


class _Budget:
    def __init__(self, config: PlannerConfig):
        self.node_budget = config.node_budget
        self.deadline = _time.monotonic() + config.time_budget_ms / 1000.0
        self.nodes = 0

    def spend(self) -> bool:
        """Count one expansion; True while within budget."""
        self.nodes += 1
        if self.nodes > self.node_budget:
            return False
        if self.nodes % 256 == 0 and _time.monotonic() > self.deadline:
            return False
        return True


def _contains_total_time(expr: Expr) -> bool:
    if expr[0] == "total-time":
        return True
    if expr[0] in ARITH_OPS:
        return _contains_total_time(expr[1]) or _contains_total_time(expr[2])
    return False


def solve(task: PlanningTask, config: PlannerConfig = PlannerConfig()) -> SolveResult:
    """Plan for ``task``; under the optimal strategy the returned plan's
    metric is the exact optimum over all feasible sequential plans."""
    if config.external_cmd:
        return ExternalPlanner(config.external_cmd).solve(task, config)
    timeline = _Timeline(task.instance.timed_literals)
    actions = ground_all_actions(task)
    goals = task.instance.goals
    metric = task.instance.metric or DEFAULT_METRIC
    t_start, t_end = task.instance.horizon
    atoms0, fluents0, now0 = _initial_state(task, timeline)
    budget = _Budget(config)
    schedule_only = _schedule_only_atoms(task, actions)
    scheduled = {literal.atom for _, literal in task.instance.timed_literals}
    # atoms driven by both the schedule and action effects make state identity
    # time-dependent; the schedule progress index then joins the search key
    overlap = bool(scheduled - schedule_only)
    search = _Search(
        timeline, actions, goals, metric, t_start, t_end, schedule_only, overlap, budget
    )

    if config.strategy == "greedy":
        return search.greedy(atoms0, fluents0, now0)
    # Earliest-arrival-per-state search is exact when a later finish can
    # never score better: the default makespan metric, or metrics not
    # involving (total-time) at all, with no goal atom under pure schedule
    # control. Anything else gets the exhaustive branch and bound.
    makespan = metric == ("minimize", ("total-time",))
    time_free = not _contains_total_time(metric[1])
    if (makespan or time_free) and not (goals & schedule_only):
        return search.dijkstra(atoms0, fluents0, now0, early_exit=makespan)
    return search.exhaustive(atoms0, fluents0, now0)


class _Search:
    def __init__(self, timeline, actions, goals, metric, t_start, t_end,
                 schedule_only, overlap, budget):
        self.timeline = timeline
        self.actions = actions
        self.goals = goals
        self.metric = metric
        self.direction = metric[0]
        self.t_start = t_start
        self.t_end = t_end
        self.schedule_only = schedule_only
        self.overlap = overlap
        self.budget = budget

    def _key(self, atoms, fluents, now):
        progress = bisect.bisect_right(self.timeline.times, now) if self.overlap else 0
        return (atoms - self.schedule_only, _fluents_key(fluents), progress)

    def _successors(self, atoms, fluents, now):
        out = []
        for action in self.actions:
            found = _earliest_start(
                action, atoms, fluents, self.timeline, now, self.t_end
            )
            if found is None:
                continue
            start, duration, (n_atoms, n_fluents, end) = found
            step = PlanStep(start, action.name, action.args, duration)
            out.append((end, step, n_atoms, n_fluents))
        out.sort(key=lambda s: (s[0], s[1].name, s[1].args))
        return out

    def _value(self, now, fluents, steps):
        return plan_metric(now if steps else None, self.t_start, fluents, self.metric)

    def dijkstra(self, atoms0, fluents0, now0, early_exit: bool) -> SolveResult:
        """Pop states by time; the first pop of a state key is its earliest
        reachable time, so every key expands at most once."""
        counter = itertools.count()
        heap = [(now0, next(counter), atoms0, fluents0, ())]
        done: set[tuple] = set()
        best_plan, best_value = None, None
        while heap:
            now, _, atoms, fluents, steps = heapq.heappop(heap)
            key = self._key(atoms, fluents, now)
            if key in done:
                continue
            done.add(key)
            if not self.budget.spend():
                plan = Plan(best_plan) if best_plan is not None else None
                return SolveResult("budget", plan, best_value, self.budget.nodes)
            if self.goals <= atoms:
                value = self._value(now, fluents, steps)
                if early_exit:
                    return SolveResult("solved", Plan(steps), value, self.budget.nodes)
                if best_value is None or _better(value, best_value, self.direction):
                    best_plan, best_value = steps, value
            for end, step, n_atoms, n_fluents in self._successors(atoms, fluents, now):
                if self._key(n_atoms, n_fluents, end) not in done:
                    heapq.heappush(
                        heap, (end, next(counter), n_atoms, n_fluents, steps + (step,))
                    )
        if best_plan is not None:
            return SolveResult("solved", Plan(best_plan), best_value, self.budget.nodes)
        return SolveResult("unsolvable", None, None, self.budget.nodes)

    def exhaustive(self, atoms0, fluents0, now0) -> SolveResult:
        """Depth-first branch and bound over all action sequences, for
        metrics where arriving later could score better."""
        best_plan, best_value = None, None
        visited: dict[tuple, int] = {}
        stack = [(atoms0, fluents0, now0, ())]
        while stack:
            atoms, fluents, now, steps = stack.pop()
            key = self._key(atoms, fluents, now)
            seen = visited.get(key)
            if seen is not None and seen <= now:
                continue
            visited[key] = now
            if not self.budget.spend():
                plan = Plan(best_plan) if best_plan is not None else None
                return SolveResult("budget", plan, best_value, self.budget.nodes)
            if self.goals <= atoms:
                value = self._value(now, fluents, steps)
                if best_value is None or _better(value, best_value, self.direction):
                    best_plan, best_value = steps, value
            for end, step, n_atoms, n_fluents in reversed(
                self._successors(atoms, fluents, now)
            ):
                stack.append((n_atoms, n_fluents, end, steps + (step,)))
        if best_plan is not None:
            return SolveResult("solved", Plan(best_plan), best_value, self.budget.nodes)
        return SolveResult("unsolvable", None, None, self.budget.nodes)

    def greedy(self, atoms0, fluents0, now0) -> SolveResult:
        """Uniform-cost on elapsed time; returns the first plan that reaches
        the goals (valid, possibly suboptimal for non-makespan metrics)."""
        counter = itertools.count()
        heap = [(now0, next(counter), atoms0, fluents0, ())]
        done: set[tuple] = set()
        while heap:
            now, _, atoms, fluents, steps = heapq.heappop(heap)
            key = self._key(atoms, fluents, now)
            if key in done:
                continue
            done.add(key)
            if not self.budget.spend():
                return SolveResult("budget", None, None, self.budget.nodes)
            if self.goals <= atoms:
                value = self._value(now, fluents, steps)
                return SolveResult("solved", Plan(steps), value, self.budget.nodes)
            for end, step, n_atoms, n_fluents in self._successors(atoms, fluents, now):
                if self._key(n_atoms, n_fluents, end) not in done:
                    heapq.heappush(
                        heap, (end, next(counter), n_atoms, n_fluents, steps + (step,))
                    )
        return SolveResult("unsolvable", None, None, self.budget.nodes)


def validate(plan: Plan, task: PlanningTask) -> ValidationResult:
    """Check a plan step by step under the same timed semantics the search
    uses, and report the state at the end of the whole activity window.

    Violations are data, not exceptions: the first one is described.
    """
    timeline = _Timeline(task.instance.timed_literals)
    t_start, t_end = task.instance.horizon
    atoms, fluents, now = _initial_state(task, timeline)

    def fail(message: str) -> ValidationResult:
        return ValidationResult(False, message, now, atoms, fluents)

    for index, step in enumerate(plan.steps):
        schema = task.domain.actions.get(step.name)
        if schema is None:
            return fail(f"step {index}: unknown action {step.name!r}")
        if len(step.args) != len(schema.params):
            return fail(f"step {index}: {step.name} expects {len(schema.params)} arguments")
        for arg, (pname, texpr) in zip(step.args, schema.params):
            if arg not in task.objects:
                return fail(f"step {index}: unknown object {arg!r}")
            if not type_compatible(task.objects[arg], texpr, task.types):
                return fail(f"step {index}: {arg!r} incompatible with parameter {pname}")
        action = ground_action(schema, step.args)
        duration = _action_duration(action, fluents)
        if duration is None or duration != step.duration:
            return fail(
                f"step {index}: declared duration {step.duration} does not match "
                f"the duration expression"
            )
        if step.start < now:
            return fail(f"step {index}: starts at {step.start} before {now} (overlap)")
        if step.start < t_start or (t_end is not None and step.end > t_end):
            return fail(f"step {index}: outside the activity window")
        result = _try_start(
            action, atoms, fluents, timeline, now, step.start, duration, t_end
        )
        if result is None:
            violated = _first_violation(action, atoms, fluents, timeline, now, step)
            return fail(f"step {index}: {violated}")
        atoms, fluents, now = result

    plan_end = now
    goal_atoms = atoms
    for goal in sorted(task.instance.goals):
        if goal not in goal_atoms:
            return fail(f"goal {goal} unsatisfied at plan end ({plan_end})")

    # roll the remaining scheduled literals forward so the reported final
    # state is the end-of-window state (what an executor would observe)
    horizon_end = timeline.times[-1] if timeline.times else plan_end
    final_atoms = timeline.advance(atoms, plan_end, max(horizon_end, plan_end))
    final_time = max(horizon_end, plan_end)
    return ValidationResult(True, None, final_time, final_atoms, fluents)


def _first_violation(action, atoms, fluents, timeline, now, step) -> str:
    """Re-run a failed step to name the condition that broke."""
    cur = timeline.advance(atoms, now, step.start)
    for cond in action.start_conditions:
        if not _holds(cond, cur):
            return f"unmet at-start condition {cond.atom} of {action.name}"
    cur = apply_literals(cur, action.start_effects)
    last = step.start
    for t in [step.start] + timeline.times_between(step.start, step.end):
        cur = timeline.advance(cur, last, t)
        last = t
        for cond in action.overall_conditions:
            if not _holds(cond, cur):
                return f"invariant {cond.atom} of {action.name} broken at {t}"
    return "condition failure"


def metric_value(plan: Plan, task: PlanningTask) -> float:
    """Metric expression value at plan end; the plan must validate."""
    result = validate(plan, task)
    if not result.ok:
        raise TaskError(f"plan does not validate: {result.violation}")
    metric = task.instance.metric or DEFAULT_METRIC
    t_start, _ = task.instance.horizon
    return plan_metric(plan.end_time, t_start, result.final_fluents, metric)


class ExternalPlanner:
    """Adapter around any planner binary speaking the same plan text format.

    Invoked as ``cmd <domain-file> <problem-file>``; the plan is read from
    stdout lines of the form ``<start>: (<action> <args>) [<duration>]``.
    """

    def __init__(self, cmd: str):
        self.cmd = cmd

    def solve(self, task: PlanningTask, config: PlannerConfig) -> SolveResult:
        with tempfile.TemporaryDirectory(prefix="opportune-ext-") as tmp:
            domain_path = Path(tmp) / "domain.pddl"
            problem_path = Path(tmp) / "problem.pddl"
            domain_path.write_text(domain_to_pddl(task.domain), encoding="utf-8")
            problem_path.write_text(problem_to_pddl(task.instance), encoding="utf-8")
            try:
                proc = subprocess.run(
                    [*self.cmd.split(), str(domain_path), str(problem_path)],
                    capture_output=True,
                    text=True,
                    timeout=config.time_budget_ms / 1000.0,
                )
            except subprocess.TimeoutExpired:
                return SolveResult("budget")
        if proc.returncode != 0:
            return SolveResult("unsolvable")
        plan = parse_plan(proc.stdout)
        result = validate(plan, task)
        if not result.ok:
            raise TaskError(f"external planner produced an invalid plan: {result.violation}")
        return SolveResult("solved", plan, metric_value(plan, task), 0)
