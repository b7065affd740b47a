"""Bundled example domains for tests, demos, and local development.

Each domain ships four artifacts under ``data/``:

* ``<domain>.labeling.json`` - the labeling document
* ``<domain>.seed.sql`` - DDL plus deterministic seed rows
* ``*.plan`` - example plans written against the labeling
* ``<domain>.manifest.jsonl`` - expected execution results, one JSON
  record per plan, frozen from direct SQL runs against the seed data
"""

from __future__ import annotations

import json
import sqlite3
from importlib import resources
from pathlib import Path

DOMAINS = ("emissions", "legal", "incidents")

# Plans are named independently of their domain so a domain can ship several.
PLANS_BY_DOMAIN = {
    "emissions": ("emissions",),
    "legal": ("legal_join",),
    "incidents": ("incidents_compare",),
}


def _read(filename: str) -> str:
    ref = resources.files(__package__).joinpath("data", filename)
    return ref.read_text(encoding="utf-8")


def labeling_text(domain: str) -> str:
    """Return the labeling document for ``domain`` as JSON text."""
    _check_domain(domain)
    return _read(f"{domain}.labeling.json")


def labeling_document(domain: str) -> dict:
    """Return the labeling document for ``domain`` as a parsed mapping."""
    return json.loads(labeling_text(domain))


def seed_sql(domain: str) -> str:
    _check_domain(domain)
    return _read(f"{domain}.seed.sql")


def plan_text(name: str) -> str:
    """Return the text of a bundled plan file by its bare name."""
    known = [p for plans in PLANS_BY_DOMAIN.values() for p in plans]
    if name not in known:
        raise KeyError(f"unknown fixture plan {name!r}; known: {', '.join(sorted(known))}")
    return _read(f"{name}.plan")


def manifest(domain: str) -> list[dict]:
    """Return the frozen expected results for ``domain``'s plans."""
    _check_domain(domain)
    text = _read(f"{domain}.manifest.jsonl")
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def create_database(domain: str, path: str | Path) -> None:
    """Create a SQLite database at ``path`` seeded with the domain data."""
    script = seed_sql(domain)
    conn = sqlite3.connect(str(path))
    try:
        conn.executescript(script)
        conn.commit()
    finally:
        conn.close()


def build_fixtures(output_dir: str | Path) -> list[Path]:
    """Materialise every domain's files under ``output_dir``.

    Writes ``<domain>.labeling.json``, ``<domain>.sqlite``,
    ``<domain>.manifest.jsonl``, and each of the domain's ``.plan`` files.
    Returns the written paths.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for domain in DOMAINS:
        labeling_path = out / f"{domain}.labeling.json"
        labeling_path.write_text(labeling_text(domain), encoding="utf-8")
        written.append(labeling_path)

        db_path = out / f"{domain}.sqlite"
        if db_path.exists():
            db_path.unlink()
        create_database(domain, db_path)
        written.append(db_path)

        manifest_path = out / f"{domain}.manifest.jsonl"
        manifest_path.write_text(_read(f"{domain}.manifest.jsonl"), encoding="utf-8")
        written.append(manifest_path)

        for plan_name in PLANS_BY_DOMAIN[domain]:
            plan_path = out / f"{plan_name}.plan"
            plan_path.write_text(plan_text(plan_name), encoding="utf-8")
            written.append(plan_path)
    return written


def _check_domain(domain: str) -> None:
    if domain not in DOMAINS:
        raise KeyError(f"unknown fixture domain {domain!r}; known: {', '.join(DOMAINS)}")
