"""``mh`` command line: run scenarios, whole suites, list fixtures.

Exit codes: 0 when every outcome is the expected one, 2 when a run finds
a violation (or misses its expected outcome), 1 on execution errors.
"""
from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import __version__
from .io import csv_table, dumps, flatten, save_field
from .scenarios import bundled_dir, error_outcome, fixture_catalog, run_scenario, run_suite, suite_exit_code


def _workers(value):
    if value is not None:
        return value
    env = os.environ.get("MH_WORKERS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise click.BadParameter(f"MH_WORKERS={env!r} is not an integer") from None


def _resolve(target):
    """A path, or the id of a bundled scenario."""
    p = Path(target)
    if p.exists():
        return p
    bundled = bundled_dir() / f"{target}.json"
    if bundled.exists():
        return bundled
    return p


def _write_outcome(out_dir: Path, outcome):
    sid = outcome.report["scenario"]
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{sid}.json").write_text(dumps(outcome.report))
    (out_dir / f"{sid}.meta.json").write_text(dumps(outcome.meta))
    for name, text in sorted(outcome.tables.items()):
        (out_dir / f"{sid}.{name}.csv").write_text(text)
    for name, phi in sorted(outcome.fields.items()):
        save_field(out_dir / f"{sid}.{name}.npz", phi)


def _emit(report, fmt):
    if fmt == "json":
        click.echo(dumps(report), nl=False)
    else:
        click.echo(csv_table(["key", "value"], flatten(report)), nl=False)


@click.group()
@click.version_option(__version__, prog_name="mh")
def main():
    """Numerical checks of (m,h) sets, barriers, varifolds and forced flows."""


@main.command()
@click.argument("scenario")
@click.option("--seed", type=int, default=None, help="Override the scenario seed (default: scenario or 0).")
@click.option("--workers", type=int, default=None, help="Probe-search threads (fallback: MH_WORKERS).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Directory for the report, metadata, CSV tables and fields.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def run(scenario, seed, workers, out_dir, fmt):
    """Run one scenario file (or a bundled scenario id)."""
    path = _resolve(scenario)
    try:
        outcome = run_scenario(path, seed=seed, workers=_workers(workers))
    except Exception as exc:  # reported, never a traceback
        outcome = error_outcome(path.stem, exc)
    if out_dir is not None:
        _write_outcome(out_dir, outcome)
    if fmt == "csv" and "flow" in outcome.tables:
        click.echo(outcome.tables["flow"], nl=False)
    else:
        _emit(outcome.report, fmt)
    if outcome.exit_code == 1:
        click.echo(outcome.report["error"], err=True)
    sys.exit(outcome.exit_code)


@main.command()
@click.argument("directory", required=False, type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None, help="Scenarios run in parallel (fallback: MH_WORKERS).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def suite(directory, seed, workers, out_dir, fmt):
    """Run every scenario in DIRECTORY (default: the bundled suite)."""
    directory = bundled_dir() if directory is None else directory
    if not directory.is_dir():
        raise click.BadParameter(f"{directory} is not a directory")
    aggregate, outcomes = run_suite(directory, seed=seed, workers=_workers(workers))
    if out_dir is not None:
        for o in outcomes:
            _write_outcome(out_dir, o)
        _mk(out_dir).joinpath("suite.json").write_text(dumps(aggregate))
    if fmt == "json":
        click.echo(dumps(aggregate), nl=False)
    else:
        rows = [(s["scenario"], s["status"], s["verdict"], s["error"]) for s in aggregate["scenarios"]]
        click.echo(csv_table(["scenario", "status", "verdict", "error"], rows), nl=False)
    sys.exit(suite_exit_code(aggregate))


def _mk(path: Path):
    path.mkdir(parents=True, exist_ok=True)
    return path


@main.group()
def fixtures():
    """Inspect the fixture registry."""


@fixtures.command("list")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="csv")
def fixtures_list(fmt):
    """List closed-set, region, mesh and family fixtures and bundled scenarios."""
    cat = fixture_catalog()
    if fmt == "json":
        click.echo(dumps(cat), nl=False)
    else:
        rows = [(group, name) for group in sorted(cat) for name in cat[group]]
        click.echo(csv_table(["group", "name"], rows), nl=False)


if __name__ == "__main__":
    main()
