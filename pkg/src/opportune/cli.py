"""Command-line interface wiring all modules together.

Exit codes: 0 success, 1 input error, 2 task unsolvable, 3 planner budget
exhausted. All reports are machine-readable JSON; ``--pretty`` renders a
human summary instead. Wall-clock measurements live only under the
dedicated ``timings`` report key so repeated runs stay comparable.
"""

from __future__ import annotations

import json
import sys
import time as _time
from pathlib import Path

import click

from opportune import __version__
from opportune.config import Config, load_config
from opportune.errors import OpportuneError
from opportune.execution import Scenario, build_timeline, load_scenario, run
from opportune.facts import FileProvider
from opportune.integration import OpportunityPipeline
from opportune.knowledge import KnowledgeStore, annotate_ontology, load_edges
from opportune.matching import filter_similar, position_type
from opportune import ontology as ontology_mod
from opportune.ontology import OntologyRepository, from_task, load_repository, semantic_variance
from opportune.planner import PlannerConfig, solve
from opportune.task_model import parse_atom, parse_plan, parse_task, plan_to_text

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_UNSOLVABLE = 2
EXIT_BUDGET = 3


class Cli(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except OpportuneError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_INPUT)


def _config_options(fn):
    fn = click.option(
        "--config", "config_path", type=click.Path(), default=None,
        help="TOML config file (default: $OPPORTUNE_CONFIG).",
    )(fn)
    fn = click.option(
        "--set", "overrides", multiple=True, metavar="KEY=VALUE",
        help="Override a config key.",
    )(fn)
    return fn


def _load(config_path, overrides) -> Config:
    return load_config(config_path, list(overrides))


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OpportuneError(f"cannot read {path}: {exc}") from None


def _write_json(data: dict, path: str | None):
    text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _store_from(config: Config, store_path: str | None) -> KnowledgeStore:
    path = store_path or config["knowledge.store_path"]
    return load_edges(path) if path else KnowledgeStore()


def _repository_from(config: Config, repo_dir: str | None) -> OntologyRepository:
    directory = repo_dir or config["ontology.repository"]
    if not directory:
        return OntologyRepository(())
    return load_repository(directory)


@click.group(cls=Cli)
@click.version_option(__version__)
def main():
    """Extend a running planning task with newly discovered objects."""


@main.group()
def ontology():
    """Build, enrich, measure and compare ontologies."""


@ontology.command("build")
@click.argument("domain_file", type=click.Path(exists=True))
@click.argument("problem_file", type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--id", "ontology_id", default="task", show_default=True)
def ontology_build(domain_file, problem_file, output, ontology_id):
    """Derive the task ontology from a domain and problem."""
    task = parse_task(_read(domain_file), _read(problem_file))
    ontology_mod.save(from_task(task, ontology_id), output)
    click.echo(f"wrote {output}")


@ontology.command("enrich")
@click.argument("ontology_file", type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--store", "store_path", type=click.Path(exists=True), help="Edge TSV file.")
@_config_options
def ontology_enrich(ontology_file, output, store_path, config_path, overrides):
    """Annotate every concept with knowledge-graph edges."""
    config = _load(config_path, overrides)
    store = _store_from(config, store_path)
    enriched = annotate_ontology(ontology_mod.load(ontology_file), store)
    ontology_mod.save(enriched, output)
    click.echo(f"wrote {output} ({len(store)} edges consulted)")


@ontology.command("sv")
@click.argument("ontology_file", type=click.Path(exists=True))
@_config_options
def ontology_sv(ontology_file, config_path, overrides):
    """Print the semantic variance with 4 decimals."""
    config = _load(config_path, overrides)
    value = semantic_variance(
        ontology_mod.load(ontology_file), squared=config["ontology.sv_squared"]
    )
    click.echo(f"{value:.4f}")


@ontology.command("similar")
@click.argument("base_file", type=click.Path(exists=True))
@click.argument("repo_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--store", "store_path", type=click.Path(exists=True), help="Edge TSV file.")
@click.option("--pretty", is_flag=True, help="Table output instead of JSON.")
@_config_options
def ontology_similar(base_file, repo_dir, store_path, pretty, config_path, overrides):
    """Rank repository ontologies by bag-of-terms similarity to the base."""
    config = _load(config_path, overrides)
    store = _store_from(config, store_path)
    base = annotate_ontology(ontology_mod.load(base_file), store)
    repo = OntologyRepository(
        tuple(annotate_ontology(o, store) for o in load_repository(repo_dir))
    )
    entries = filter_similar(base, repo, config["match.filter_threshold"])
    ranking = [
        {"id": e.ontology.id, "score": round(e.score, 4), "selected": e.selected}
        for e in entries
    ]
    if pretty:
        width = max((len(r["id"]) for r in ranking), default=2)
        for r in ranking:
            mark = "*" if r["selected"] else " "
            click.echo(f"{mark} {r['id']:<{width}}  {r['score']:.4f}")
    else:
        _write_json({"ranking": ranking}, None)


@main.command()
@click.argument("base_file", type=click.Path(exists=True))
@click.argument("other_file", type=click.Path(exists=True))
@click.option("--concept", required=True, help="Concept of OTHER to position in BASE.")
@click.option("--store", "store_path", type=click.Path(exists=True), help="Edge TSV file.")
@click.option("-o", "--output", type=click.Path(), help="Report file (default stdout).")
@_config_options
def align(base_file, other_file, concept, store_path, output, config_path, overrides):
    """Position a concept from one ontology inside another."""
    config = _load(config_path, overrides)
    store = _store_from(config, store_path)
    base = annotate_ontology(ontology_mod.load(base_file), store)
    other = annotate_ontology(ontology_mod.load(other_file), store)
    outcome = position_type(base, other, concept, config.match_config())
    _write_json({"concept": concept, "outcome": outcome.to_dict()}, output)


@main.command()
@click.argument("domain_file", type=click.Path(exists=True))
@click.argument("problem_file", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), help="Plan file (default stdout).")
@click.option("--strategy", type=click.Choice(["optimal", "greedy"]), default=None)
@_config_options
@click.pass_context
def plan(ctx, domain_file, problem_file, output, strategy, config_path, overrides):
    """Solve a task; prints the metric value on success."""
    config = _load(config_path, overrides)
    if strategy:
        config.set("planner.strategy", strategy)
    task = parse_task(_read(domain_file), _read(problem_file))
    result = solve(task, config.planner_config())
    if result.status == "unsolvable":
        click.echo("unsolvable", err=True)
        ctx.exit(EXIT_UNSOLVABLE)
    if result.status == "budget":
        click.echo("budget exhausted", err=True)
        ctx.exit(EXIT_BUDGET)
    text = plan_to_text(result.plan)
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)
    click.echo(f"metric {result.metric}")


def _build_pipeline(task, config: Config, repo_dir, store_path, provider_path):
    store = _store_from(config, store_path)
    repo = _repository_from(config, repo_dir)
    provider_file = provider_path or config["provider.path"]
    provider = FileProvider(provider_file) if provider_file else None
    return OpportunityPipeline(
        from_task(task), repo, store, provider, config.pipeline_config()
    )


@main.command()
@click.argument("domain_file", type=click.Path(exists=True))
@click.argument("problem_file", type=click.Path(exists=True))
@click.option("--plan", "plan_file", type=click.Path(exists=True), help="Plan to execute (computed when omitted).")
@click.option("--scenario", "scenario_file", type=click.Path(exists=True), help="Exogenous events (default: none).")
@click.option("--repo", "repo_dir", type=click.Path(exists=True, file_okay=False), help="Ontology repository directory.")
@click.option("--store", "store_path", type=click.Path(exists=True), help="Edge TSV file.")
@click.option("--provider", "provider_path", type=click.Path(exists=True), help="Object facts JSON.")
@click.option("--log", "log_path", type=click.Path(), help="Execution log (JSON lines).")
@click.option("--report", "report_path", type=click.Path(), help="Final report JSON.")
@click.option("--pretty", is_flag=True, help="Human summary on stdout.")
@_config_options
@click.pass_context
def simulate(ctx, domain_file, problem_file, plan_file, scenario_file, repo_dir,
             store_path, provider_path, log_path, report_path, pretty,
             config_path, overrides):
    """Execute a plan in the simulator, handling scenario events."""
    started = _time.monotonic()
    config = _load(config_path, overrides)
    task = parse_task(_read(domain_file), _read(problem_file))
    if plan_file:
        the_plan = parse_plan(_read(plan_file))
    else:
        result = solve(task, config.planner_config())
        if result.status == "unsolvable":
            click.echo("unsolvable", err=True)
            ctx.exit(EXIT_UNSOLVABLE)
        if result.status == "budget":
            click.echo("budget exhausted", err=True)
            ctx.exit(EXIT_BUDGET)
        the_plan = result.plan
    scenario = load_scenario(scenario_file) if scenario_file else Scenario()
    pipeline = _build_pipeline(task, config, repo_dir, store_path, provider_path)
    timeline = build_timeline(task, the_plan)
    outcome = run(
        timeline, scenario, pipeline.hook, on_failure=config["execution.on_failure"]
    )
    if log_path:
        Path(log_path).write_text(outcome.to_jsonl(), encoding="utf-8")
    report = dict(outcome.report)
    report["timings"] = {"wall_ms": int((_time.monotonic() - started) * 1000)}
    if pretty:
        _echo_summary(report)
        if report_path:
            _write_json(report, report_path)
    else:
        _write_json(report, report_path)


def _echo_summary(report: dict):
    counts = report.get("goal_predicate_counts", {})
    parts = [f"{pred}: {count}" for pred, count in sorted(counts.items())]
    click.echo("plans adopted: " + " -> ".join(report["plans_adopted"]))
    click.echo("final state by goal predicate: " + ", ".join(parts))
    status = "all goals satisfied" if report["all_goals_satisfied"] else (
        "missing goals: " + ", ".join(report["goals_missing"])
    )
    click.echo(status)


@main.group()
def pipeline():
    """Run the opportunity pipeline outside the simulator."""


@pipeline.command("run")
@click.argument("domain_file", type=click.Path(exists=True))
@click.argument("problem_file", type=click.Path(exists=True))
@click.option("--event", "event_atom", required=True, help="Proposition, e.g. \"(open Plaza_Mayor)\".")
@click.option("--time", "event_time", required=True, type=int, help="Arrival minute.")
@click.option("--repo", "repo_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--store", "store_path", type=click.Path(exists=True))
@click.option("--provider", "provider_path", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), help="Report file (default stdout).")
@_config_options
def pipeline_run(domain_file, problem_file, event_atom, event_time, repo_dir,
                 store_path, provider_path, output, config_path, overrides):
    """Evaluate one discovered proposition against a task at rest."""
    config = _load(config_path, overrides)
    task = parse_task(_read(domain_file), _read(problem_file))
    the_pipeline = _build_pipeline(task, config, repo_dir, store_path, provider_path)
    atom = parse_atom(event_atom)
    # project the initial state to the event time along scheduled literals
    atoms = set(task.instance.init_atoms)
    for t, literal in task.instance.timed_literals:
        if t > event_time:
            break
        if literal.positive:
            atoms.add(literal.atom)
        else:
            atoms.discard(literal.atom)
    outcome = the_pipeline.handle(
        task=task,
        proposition=atom,
        arrival_time=event_time,
        state_atoms=frozenset(atoms),
        state_fluents=task.instance.fluents,
        now=event_time,
    )
    _write_json({"accepted": outcome.accepted, "report": outcome.report}, output)


if __name__ == "__main__":
    main()
