"""Command line entry points: validate, generate, search, compile, run, serve."""

from __future__ import annotations

import functools
import json
import logging
from pathlib import Path

import click

from .compiler import SQLITE_CAPABILITIES, compile_plan
from .errors import InfospaceError
from .executor import ExecutionResult, execute, open_readonly
from .fixtures import build_fixtures
from .labeling import DomainLabeling, parse_labeling, validate_against_database
from .plan import check_plan, parse_plan
from .questions import build_index
from .questions import search as rank_questions
from .service import create_app, default_corpus_path, load_domain
from .spacegen import GenerationCaps, enumerate_plans, read_corpus, write_corpus
from .taxonomy import BUILTIN_REGISTRY

log = logging.getLogger(__name__)

_EXISTING_FILE = click.Path(exists=True, dir_okay=False, path_type=Path)


def _user_errors(func):
    """Surface expected failures as one-line messages, never stack dumps."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except InfospaceError as exc:
            raise click.ClickException(str(exc)) from exc
        except OSError as exc:
            raise click.ClickException(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise click.ClickException(f"invalid JSON: {exc}") from exc

    return wrapper


def _load_labeling(path: Path) -> DomainLabeling:
    return parse_labeling(json.loads(path.read_text(encoding="utf-8")))


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Labeled-domain analytics: taxonomy-typed plans over relational data."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)


@main.command()
@click.argument("labeling", type=_EXISTING_FILE)
@click.option("--db", "db_path", required=True, envvar="INFOSPACE_DB", type=_EXISTING_FILE)
@_user_errors
def validate(labeling: Path, db_path: Path) -> None:
    """Check a labeling document against its database."""
    domain = _load_labeling(labeling)
    conn = open_readonly(db_path)
    try:
        report = validate_against_database(domain, conn)
    finally:
        conn.close()
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)
    if not report.ok:
        for issue in report.issues:
            click.echo(f"issue: {issue}", err=True)
        raise click.ClickException(f"{len(report.issues)} issue(s) found")
    click.echo(f"ok: labeling {domain.id!r} matches {db_path}")


@main.command()
@click.argument("labeling", type=_EXISTING_FILE)
@click.option("--db", "db_path", required=True, envvar="INFOSPACE_DB", type=_EXISTING_FILE)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--max-instances", default=200, show_default=True, type=click.IntRange(min=1))
@click.option("--max-per-template", default=50_000, show_default=True, type=click.IntRange(min=1))
@_user_errors
def generate(
    labeling: Path,
    db_path: Path,
    out_path: Path | None,
    max_instances: int,
    max_per_template: int,
) -> None:
    """Enumerate the question space and write it as a corpus file."""
    domain = _load_labeling(labeling)
    caps = GenerationCaps(max_per_template=max_per_template, max_instances=max_instances)
    out = out_path if out_path is not None else default_corpus_path(labeling)
    conn = open_readonly(db_path)
    try:
        count = write_corpus(out, enumerate_plans(domain, BUILTIN_REGISTRY, conn, caps=caps))
    finally:
        conn.close()
    click.echo(f"wrote {count} questions to {out}")


@main.command()
@click.argument("corpus", type=_EXISTING_FILE)
@click.argument("query")
@click.option("--limit", default=10, show_default=True, type=click.IntRange(min=1))
@_user_errors
def search(corpus: Path, query: str, limit: int) -> None:
    """Rank corpus questions against a query by shared tokens."""
    records = read_corpus(corpus)
    index = build_index((r.question_id, r.question_text) for r in records)
    hits = rank_questions(index, query, limit=limit)
    if not hits:
        click.echo("no matches", err=True)
        return
    for hit in hits:
        click.echo(f"{hit.score:>4}  {hit.question_id}  {hit.text}")


@main.command(name="compile")
@click.argument("labeling", type=_EXISTING_FILE)
@click.option("--plan", "plan_path", required=True, type=_EXISTING_FILE)
@_user_errors
def compile_cmd(labeling: Path, plan_path: Path) -> None:
    """Lower a plan file to SQL and print the query with its parameters."""
    domain = _load_labeling(labeling)
    plan = parse_plan(plan_path.read_text(encoding="utf-8"))
    check_plan(plan, BUILTIN_REGISTRY, domain)
    compiled = compile_plan(plan, BUILTIN_REGISTRY, domain, SQLITE_CAPABILITIES)
    click.echo(compiled.sql_text)
    click.echo()
    click.echo(f"parameters: {json.dumps(list(compiled.parameters))}")


def _cell(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _render_table(result: ExecutionResult) -> str:
    labels = [col.label for col in result.columns]
    rows = [[_cell(v) for v in row] for row in result.rows]
    widths = [len(label) for label in labels]
    for row in rows:
        for i, text in enumerate(row):
            widths[i] = max(widths[i], len(text))
    lines = ["  ".join(label.ljust(widths[i]) for i, label in enumerate(labels)).rstrip()]
    for row in rows:
        lines.append("  ".join(text.ljust(widths[i]) for i, text in enumerate(row)).rstrip())
    return "\n".join(lines)


@main.command()
@click.argument("labeling", type=_EXISTING_FILE)
@click.option("--db", "db_path", required=True, envvar="INFOSPACE_DB", type=_EXISTING_FILE)
@click.option("--plan", "plan_path", type=_EXISTING_FILE)
@click.option("--question-id", "question_id")
@click.option("--corpus", "corpus_path", type=_EXISTING_FILE)
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["table", "records"]),
    default="table",
    show_default=True,
)
@_user_errors
def run(
    labeling: Path,
    db_path: Path,
    plan_path: Path | None,
    question_id: str | None,
    corpus_path: Path | None,
    output_format: str,
) -> None:
    """Execute a plan file or a corpus question against the database."""
    if (plan_path is None) == (question_id is None):
        raise click.ClickException("provide exactly one of --plan or --question-id")
    domain = _load_labeling(labeling)
    if plan_path is not None:
        plan_text = plan_path.read_text(encoding="utf-8")
    else:
        if corpus_path is None:
            raise click.ClickException("--question-id requires --corpus")
        matches = [r for r in read_corpus(corpus_path) if r.question_id == question_id]
        if not matches:
            raise click.ClickException(f"question {question_id!r} not found in {corpus_path}")
        click.echo(matches[0].question_text, err=True)
        plan_text = matches[0].plan_text
    plan = parse_plan(plan_text)
    check_plan(plan, BUILTIN_REGISTRY, domain)
    compiled = compile_plan(plan, BUILTIN_REGISTRY, domain, SQLITE_CAPABILITIES)
    conn = open_readonly(db_path)
    try:
        result = execute(conn, compiled)
    finally:
        conn.close()
    if output_format == "records":
        labels = [col.label for col in result.columns]
        for row in result.rows:
            click.echo(json.dumps(dict(zip(labels, row)), ensure_ascii=False))
    else:
        click.echo(_render_table(result))
    if result.truncated:
        click.echo("(result truncated)", err=True)


@main.command()
@click.argument("labelings", nargs=-1, required=True, type=_EXISTING_FILE)
@click.option(
    "--db",
    "db_paths",
    multiple=True,
    required=True,
    envvar="INFOSPACE_DB",
    type=_EXISTING_FILE,
)
@click.option("--corpus", "corpus_paths", multiple=True, type=click.Path(path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, envvar="INFOSPACE_PORT", type=int)
@click.option(
    "--static",
    "static_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("frontend/dist"),
    show_default=True,
)
@_user_errors
def serve(
    labelings: tuple[Path, ...],
    db_paths: tuple[Path, ...],
    corpus_paths: tuple[Path, ...],
    host: str,
    port: int,
    static_dir: Path,
) -> None:
    """Serve one or more domains over HTTP, generating corpora when absent."""
    if len(db_paths) != len(labelings):
        raise click.ClickException("provide one --db per labeling")
    if corpus_paths and len(corpus_paths) != len(labelings):
        raise click.ClickException("provide one --corpus per labeling, or none")
    sessions = []
    for i, labeling_path in enumerate(labelings):
        corpus = corpus_paths[i] if corpus_paths else None
        sessions.append(load_domain(labeling_path, db_paths[i], corpus_path=corpus))
    app = create_app(sessions, static_dir=static_dir)
    import uvicorn

    click.echo(f"serving {len(sessions)} domain(s) on http://{host}:{port}", err=True)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command(name="fixtures")
@click.argument("output_dir", type=click.Path(file_okay=False, path_type=Path))
@_user_errors
def fixtures_cmd(output_dir: Path) -> None:
    """Write the bundled example domains (labelings, databases, plans) to a directory."""
    paths = build_fixtures(output_dir)
    for path in paths:
        click.echo(str(path))


if __name__ == "__main__":
    main()
