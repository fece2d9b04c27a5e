from __future__ import annotations

import random
import stat

import pytest

from opportune.errors import TaskError
from opportune.fixtures import fixture_path
from opportune.planner import (
    PlannerConfig,
    metric_value,
    solve,
    validate,
)
from opportune.task_model import (
    Plan,
    PlanStep,
    parse_domain,
    parse_problem,
    parse_task,
    plan_to_text,
    PlanningTask,
)
from oracles import TourOracle, random_tour_problem_text


@pytest.fixture(scope="module")
def tour_domain():
    return parse_domain(fixture_path("valencia", "domain.pddl").read_text())


def make_task(tour_domain, problem_text) -> PlanningTask:
    return PlanningTask(tour_domain, parse_problem(problem_text, tour_domain))


def test_satisfied_goals_give_empty_plan(tour_domain):
    task = make_task(
        tour_domain,
        "(define (problem rest) (:domain city_tour)"
        " (:objects bob - person home - accommodation)"
        " (:init (be bob home)) (:goal (be bob home)))",
    )
    result = solve(task)
    assert result.solved
    assert result.plan.steps == ()
    assert result.metric == 0


def test_valencia_plan_shape(valencia_task, valencia_plan):
    names = [step.name for step in valencia_plan.steps]
    assert names.count("visit") == 5
    assert names.count("eat") == 1
    visited_first = next(s for s in valencia_plan.steps if s.name == "visit")
    assert visited_first.args == ("tourist", "Viveros_garden")
    last = valencia_plan.steps[-1]
    assert last.name == "move" and last.args[-1] == "Caro_hotel"
    assert validate(valencia_plan, valencia_task).ok


def test_three_poi_toy_matches_enumeration(tour_domain):
    rng = random.Random(99)
    problem = random_tour_problem_text(rng, 3)
    task = make_task(tour_domain, problem)
    result = solve(task)
    oracle_best = TourOracle(task).best_makespan()
    if oracle_best is None:
        assert result.status == "unsolvable"
    else:
        assert result.solved
        assert result.metric == oracle_best


def test_random_instances_match_oracle(tour_domain):
    rng = random.Random(20250810)
    solved = 0
    for i in range(25):
        problem = random_tour_problem_text(rng, rng.randint(2, 4))
        task = make_task(tour_domain, problem)
        result = solve(task)
        oracle_best = TourOracle(task).best_makespan()
        if oracle_best is None:
            assert result.status == "unsolvable", f"instance {i}"
        else:
            assert result.solved, f"instance {i}"
            assert result.metric == oracle_best, f"instance {i}"
            assert validate(result.plan, task).ok, f"instance {i}"
            solved += 1
    assert solved >= 10  # the generator must not trivialize the suite


def test_validate_empty_plan_with_satisfied_goals(tour_domain):
    task = make_task(
        tour_domain,
        "(define (problem rest) (:domain city_tour)"
        " (:objects bob - person home - accommodation)"
        " (:init (be bob home)) (:goal (be bob home)))",
    )
    assert validate(Plan(), task).ok


def test_validate_valencia_plan(valencia_task, valencia_plan):
    result = validate(valencia_plan, valencia_task)
    assert result.ok
    assert ("visited", "tourist", "Serrano_towers") in result.final_atoms


def test_validate_detects_missing_move(valencia_task, valencia_plan):
    broken = Plan(valencia_plan.steps[1:])
    result = validate(broken, valencia_task)
    assert not result.ok
    assert "be" in result.violation


def test_validate_rejects_wrong_duration(valencia_task, valencia_plan):
    last = valencia_plan.steps[-1]
    tampered = Plan(
        valencia_plan.steps[:-1]
        + (PlanStep(last.start, last.name, last.args, last.duration + 5),)
    )
    result = validate(tampered, valencia_task)
    assert not result.ok
    assert "duration" in result.violation


def test_metric_monotone_in_walk_length(tour_domain):
    base = (
        "(define (problem walkcmp) (:domain city_tour)"
        " (:objects bob - person home - accommodation shrine - religious_site)"
        " (:init (be bob home) (= (walking_time home shrine) {w})"
        " (= (walking_time shrine home) {w}) (= (visit_duration shrine) 10)"
        " (at 0 (open shrine)) (at 500 (not (open shrine)))"
        " (at 0 (active bob)) (at 600 (not (active bob))))"
        " (:goal (visited bob shrine)) (:metric minimize (total-time)))"
    )
    short = solve(make_task(tour_domain, base.format(w=5)))
    long = solve(make_task(tour_domain, base.format(w=9)))
    assert short.metric < long.metric


COUNTER_DOMAIN = """
(define (domain counted_tour)
  (:requirements :strips :typing :fluents :durative-actions :timed-initial-literals)
  (:types person - object stop - object)
  (:predicates (be ?p - person ?s - stop) (seen ?p - person ?s - stop)
               (linked ?a - stop ?b - stop))
  (:functions (hop_time ?a - stop ?b - stop) (stops_seen ?p - person))
  (:durative-action hop
    :parameters (?p - person ?a - stop ?b - stop)
    :duration (= ?duration (hop_time ?a ?b))
    :condition (and (at start (be ?p ?a)) (at start (linked ?a ?b))
                    (at start (not (seen ?p ?b))))
    :effect (and (at start (not (be ?p ?a))) (at end (be ?p ?b))
                 (at end (seen ?p ?b))
                 (at end (increase (stops_seen ?p) 1)))))
"""


def test_numeric_effects_and_counting_metric():
    domain = parse_domain(COUNTER_DOMAIN)
    problem = (
        "(define (problem count_stops) (:domain counted_tour)"
        " (:objects walker - person s0 s1 s2 - stop)"
        " (:init (be walker s0) (= (stops_seen walker) 0)"
        " (linked s0 s1) (linked s1 s2) (linked s1 s0) (linked s2 s1)"
        " (= (hop_time s0 s1) 5) (= (hop_time s1 s2) 5)"
        " (= (hop_time s1 s0) 5) (= (hop_time s2 s1) 5))"
        " (:goal (seen walker s1)) (:metric maximize (stops_seen walker)))"
    )
    task = PlanningTask(domain, parse_problem(problem, domain))
    result = solve(task)
    assert result.solved
    # without scheduled literals the horizon is open; the best count visits
    # every stop reachable without repeating a state
    assert result.metric >= 2
    short = Plan((PlanStep(0, "hop", ("walker", "s0", "s1"), 5),))
    longer = Plan(
        (
            PlanStep(0, "hop", ("walker", "s0", "s1"), 5),
            PlanStep(5, "hop", ("walker", "s1", "s2"), 5),
        )
    )
    assert metric_value(longer, task) == metric_value(short, task) + 1


def test_metric_value_requires_valid_plan(valencia_task):
    bogus = Plan((PlanStep(600, "visit", ("tourist", "Cathedral"), 45),))
    with pytest.raises(TaskError):
        metric_value(bogus, valencia_task)


def test_empty_plan_metric_is_zero(tour_domain):
    task = make_task(
        tour_domain,
        "(define (problem rest) (:domain city_tour)"
        " (:objects bob - person home - accommodation)"
        " (:init (be bob home)) (:goal (be bob home)) (:metric minimize (total-time)))",
    )
    assert metric_value(Plan(), task) == 0


def test_determinism_same_input_same_plan(valencia_task):
    a = solve(valencia_task, PlannerConfig())
    b = solve(valencia_task, PlannerConfig())
    assert plan_to_text(a.plan) == plan_to_text(b.plan)
    assert a.metric == b.metric


def test_unsolvable_window(tour_domain):
    task = make_task(
        tour_domain,
        "(define (problem hopeless) (:domain city_tour)"
        " (:objects bob - person home - accommodation shrine - religious_site)"
        " (:init (be bob home) (= (walking_time home shrine) 10)"
        " (= (walking_time shrine home) 10) (= (visit_duration shrine) 50)"
        " (at 100 (open shrine)) (at 120 (not (open shrine)))"
        " (at 0 (active bob)) (at 300 (not (active bob))))"
        " (:goal (visited bob shrine)))",
    )
    assert solve(task).status == "unsolvable"


def test_budget_exhaustion(valencia_task):
    result = solve(valencia_task, PlannerConfig(node_budget=3))
    assert result.status == "budget"


def test_greedy_strategy_validates(valencia_task):
    result = solve(valencia_task, PlannerConfig(strategy="greedy"))
    assert result.solved
    assert validate(result.plan, valencia_task).ok


def test_shrinking_horizon_never_improves_metric(tour_domain):
    base = (
        "(define (problem window) (:domain city_tour)"
        " (:objects bob - person home - accommodation shrine - religious_site)"
        " (:init (be bob home) (= (walking_time home shrine) 10)"
        " (= (walking_time shrine home) 10) (= (visit_duration shrine) 30)"
        " (at 50 (open shrine)) (at 500 (not (open shrine)))"
        " (at 0 (active bob)) (at {end} (not (active bob))))"
        " (:goal (and (visited bob shrine) (be bob home)))"
        " (:metric minimize (total-time)))"
    )
    wide = solve(make_task(tour_domain, base.format(end=600)))
    narrow = solve(make_task(tour_domain, base.format(end=120)))
    assert wide.solved
    assert narrow.status == "unsolvable" or narrow.metric >= wide.metric


def test_external_planner_adapter(tmp_path, tour_domain):
    task = make_task(
        tour_domain,
        "(define (problem tiny) (:domain city_tour)"
        " (:objects bob - person home - accommodation shrine - religious_site)"
        " (:init (be bob home) (= (walking_time home shrine) 10)"
        " (= (walking_time shrine home) 10) (= (visit_duration shrine) 30)"
        " (at 0 (open shrine)) (at 500 (not (open shrine)))"
        " (at 0 (active bob)) (at 600 (not (active bob))))"
        " (:goal (visited bob shrine)))",
    )
    script = tmp_path / "fake_planner"
    script.write_text(
        "#!/bin/sh\n"
        "echo '0: (move bob home shrine) [10]'\n"
        "echo '10: (visit bob shrine) [30]'\n",
        encoding="utf-8",
    )
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    result = solve(task, PlannerConfig(external_cmd=str(script)))
    assert result.solved
    assert validate(result.plan, task).ok
    assert len(result.plan.steps) == 2


def test_external_planner_invalid_output_raises(tmp_path, tour_domain):
    task = make_task(
        tour_domain,
        "(define (problem tiny) (:domain city_tour)"
        " (:objects bob - person home - accommodation)"
        " (:init (be bob home)) (:goal (be bob home)))",
    )
    script = tmp_path / "bad_planner"
    script.write_text("#!/bin/sh\necho '0: (fly bob) [5]'\n", encoding="utf-8")
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    with pytest.raises(TaskError):
        solve(task, PlannerConfig(external_cmd=str(script)))
