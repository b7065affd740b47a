"""Domain labelings: the mapping from tables/columns/joins to entities, typed
attributes, and relationships.

A labeling document is a JSON tree with three sections: metadata (`id`, `name`,
`description`), the database schema (`dataSource`), and the abstraction layer
(`dataAbstraction`). See `parse_labeling` for the full field set.
"""

from __future__ import annotations

import difflib
import json
import sqlite3
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .errors import LabelingError
from .taxonomy import BASE_TYPES, AttributeType

STORAGE_TYPES = frozenset({"integer", "float", "text", "datetime", "boolean"})


def fallback_nicename(name: str) -> str:
    """Display-name fallback: underscores to spaces, lowercased."""
    return name.replace("_", " ").strip().lower()


@dataclass(frozen=True)
class TableSchema:
    name: str
    primary_key: str
    columns: tuple[tuple[str, str], ...]  # (column name, storage type)

    def column_type(self, column: str) -> str | None:
        for name, storage in self.columns:
            if name == column:
                return storage
        return None


@dataclass(frozen=True)
class JoinDef:
    name: str
    from_table: str
    to_table: str
    on: tuple[tuple[str, str], ...]  # (from column, to column) equality pairs

    def other_side(self, table: str) -> str | None:
        """The table this join reaches from `table`, or None if detached."""
        if table == self.from_table:
            return self.to_table
        if table == self.to_table:
            return self.from_table
        return None


@dataclass(frozen=True)
class AttributeDef:
    name: str
    nicename: str
    storage: str
    attribute_types: frozenset[AttributeType]
    source_table: str
    source_column: str
    units: str | None = None
    via_joins: tuple[str, ...] = ()


@dataclass(frozen=True)
class EntityDef:
    name: str
    nicename: str
    primary_table: str
    attributes: tuple[AttributeDef, ...]
    identifier_attribute: str | None = None

    def attribute(self, name: str) -> AttributeDef | None:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None


class Cardinality(Enum):
    ONE_TO_ONE = "o2o"
    ONE_TO_MANY = "o2m"
    MANY_TO_MANY = "m2m"


@dataclass(frozen=True)
class RelationshipDef:
    name: str
    from_entity: str
    to_entity: str
    cardinality: Cardinality
    join_chain: tuple[str, ...]

    def other_entity(self, entity: str) -> str | None:
        if entity == self.from_entity:
            return self.to_entity
        if entity == self.to_entity:
            return self.from_entity
        return None


@dataclass(frozen=True)
class DataSource:
    tables: tuple[TableSchema, ...]
    joins: tuple[JoinDef, ...]


@dataclass(frozen=True)
class DomainLabeling:
    id: str
    name: str
    description: str
    data_source: DataSource
    entities: tuple[EntityDef, ...]
    relationships: tuple[RelationshipDef, ...]

    def table(self, name: str) -> TableSchema | None:
        for t in self.data_source.tables:
            if t.name == name:
                return t
        return None

    def join(self, name: str) -> JoinDef | None:
        for j in self.data_source.joins:
            if j.name == name:
                return j
        return None

    def entity(self, name: str) -> EntityDef:
        for e in self.entities:
            if e.name == name:
                return e
        raise LabelingError(f"unknown entity {name!r}")


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()


def _expect_mapping(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise LabelingError("expected an object", path)
    return value


def _expect_list(value: Any, path: str) -> Sequence[Any]:
    if not isinstance(value, Sequence) or isinstance(value, (str, bytes)):
        raise LabelingError("expected a list", path)
    return value


def _check_fields(doc: Mapping[str, Any], required: set[str], optional: set[str], path: str) -> None:
    for key in required:
        if key not in doc:
            raise LabelingError(f"missing field {key!r}", path)
    for key in doc:
        if key not in required and key not in optional:
            raise LabelingError(f"unknown field {key!r}", path)


def _parse_table(doc: Any, path: str) -> TableSchema:
    doc = _expect_mapping(doc, path)
    _check_fields(doc, {"name", "primaryKey", "columns"}, set(), path)
    columns = []
    for i, col in enumerate(_expect_list(doc["columns"], f"{path}.columns")):
        col = _expect_mapping(col, f"{path}.columns[{i}]")
        _check_fields(col, {"name", "type"}, set(), f"{path}.columns[{i}]")
        if col["type"] not in STORAGE_TYPES:
            raise LabelingError(
                f"unknown storage type {col['type']!r}", f"{path}.columns[{i}].type"
            )
        columns.append((str(col["name"]), str(col["type"])))
    names = [n for n, _ in columns]
    if len(set(names)) != len(names):
        raise LabelingError("duplicate column names", f"{path}.columns")
    table = TableSchema(str(doc["name"]), str(doc["primaryKey"]), tuple(columns))
    if table.column_type(table.primary_key) is None:
        raise LabelingError(
            f"primary key {table.primary_key!r} is not a column", f"{path}.primaryKey"
        )
    return table


def _parse_join(doc: Any, tables: Mapping[str, TableSchema], path: str) -> JoinDef:
    doc = _expect_mapping(doc, path)
    _check_fields(doc, {"name", "from", "to", "on"}, set(), path)
    from_table, to_table = str(doc["from"]), str(doc["to"])
    for side, key in ((from_table, "from"), (to_table, "to")):
        if side not in tables:
            raise LabelingError(f"unknown table {side!r}", f"{path}.{key}")
    pairs = _expect_list(doc["on"], f"{path}.on")
    if not pairs:
        raise LabelingError("join must have at least one column pair", f"{path}.on")
    on = []
    for i, pair in enumerate(pairs):
        pair = _expect_list(pair, f"{path}.on[{i}]")
        if len(pair) != 2:
            raise LabelingError("expected [fromColumn, toColumn]", f"{path}.on[{i}]")
        from_col, to_col = str(pair[0]), str(pair[1])
        if tables[from_table].column_type(from_col) is None:
            raise LabelingError(
                f"column {from_col!r} not in table {from_table!r}", f"{path}.on[{i}]"
            )
        if tables[to_table].column_type(to_col) is None:
            raise LabelingError(f"column {to_col!r} not in table {to_table!r}", f"{path}.on[{i}]")
        on.append((from_col, to_col))
    return JoinDef(str(doc["name"]), from_table, to_table, tuple(on))


def _walk_chain(
    start: str, chain: Sequence[str], joins: Mapping[str, JoinDef], path: str
) -> str:
    """Follow a join chain from `start`, returning the final table reached."""
    current = start
    for i, join_name in enumerate(chain):
        join = joins.get(str(join_name))
        if join is None:
            raise LabelingError(f"unknown join {join_name!r}", f"{path}[{i}]")
        nxt = join.other_side(current)
        if nxt is None:
            raise LabelingError(
                f"join {join_name!r} does not touch table {current!r}", f"{path}[{i}]"
            )
        current = nxt
    return current


def _parse_attribute(
    doc: Any,
    entity_name: str,
    primary_table: str,
    tables: Mapping[str, TableSchema],
    joins: Mapping[str, JoinDef],
    path: str,
) -> AttributeDef:
    doc = _expect_mapping(doc, path)
    _check_fields(
        doc, {"name", "type", "isa", "source"}, {"nicename", "units", "viaJoins"}, path
    )
    name = str(doc["name"])
    storage = str(doc["type"])
    if storage not in STORAGE_TYPES:
        raise LabelingError(f"unknown storage type {storage!r}", f"{path}.type")
    isa = _expect_list(doc["isa"], f"{path}.isa")
    if not isa:
        raise LabelingError("attribute must carry at least one type", f"{path}.isa")
    attr_types = set()
    for i, type_name in enumerate(isa):
        try:
            attr_type = AttributeType.from_name(str(type_name))
        except Exception as exc:
            raise LabelingError(str(exc), f"{path}.isa[{i}]") from None
        if attr_type not in BASE_TYPES:
            raise LabelingError(
                f"{attr_type.value} is a derived type; labeling attributes take base types only",
                f"{path}.isa[{i}]",
            )
        attr_types.add(attr_type)
    source = _expect_mapping(doc["source"], f"{path}.source")
    _check_fields(source, {"table", "column"}, set(), f"{path}.source")
    source_table, source_column = str(source["table"]), str(source["column"])
    if source_table not in tables:
        raise LabelingError(f"unknown table {source_table!r}", f"{path}.source.table")
    column_storage = tables[source_table].column_type(source_column)
    if column_storage is None:
        raise LabelingError(
            f"column {source_column!r} not in table {source_table!r}", f"{path}.source.column"
        )
    if column_storage != storage:
        raise LabelingError(
            f"declared type {storage!r} does not match column type {column_storage!r}",
            f"{path}.type",
        )
    via = tuple(str(j) for j in doc.get("viaJoins", ()))
    reached = _walk_chain(primary_table, via, joins, f"{path}.viaJoins")
    if reached != source_table:
        raise LabelingError(
            f"viaJoins chain ends at {reached!r} but source table is {source_table!r}",
            f"{path}.viaJoins",
        )
    nicename = str(doc["nicename"]) if "nicename" in doc else fallback_nicename(name)
    units = str(doc["units"]) if "units" in doc else None
    return AttributeDef(name, nicename, storage, frozenset(attr_types), source_table, source_column, units, via)


def _parse_entity(
    doc: Any, tables: Mapping[str, TableSchema], joins: Mapping[str, JoinDef], path: str
) -> EntityDef:
    doc = _expect_mapping(doc, path)
    _check_fields(
        doc, {"name", "primaryTable", "attributes"}, {"nicename", "identifierAttribute"}, path
    )
    name = str(doc["name"])
    primary_table = str(doc["primaryTable"])
    if primary_table not in tables:
        raise LabelingError(f"unknown table {primary_table!r}", f"{path}.primaryTable")
    attributes = tuple(
        _parse_attribute(a, name, primary_table, tables, joins, f"{path}.attributes[{i}]")
        for i, a in enumerate(_expect_list(doc["attributes"], f"{path}.attributes"))
    )
    attr_names = [a.name for a in attributes]
    if len(set(attr_names)) != len(attr_names):
        raise LabelingError("duplicate attribute names", f"{path}.attributes")
    identifier = doc.get("identifierAttribute")
    if identifier is not None:
        identifier = str(identifier)
        match = next((a for a in attributes if a.name == identifier), None)
        if match is None:
            raise LabelingError(
                f"identifierAttribute {identifier!r} is not an attribute of {name!r}",
                f"{path}.identifierAttribute",
            )
        if AttributeType.IDENTIFIER not in match.attribute_types:
            raise LabelingError(
                f"identifierAttribute {identifier!r} is not typed Identifier",
                f"{path}.identifierAttribute",
            )
    nicename = str(doc["nicename"]) if "nicename" in doc else fallback_nicename(name)
    return EntityDef(name, nicename, primary_table, attributes, identifier)


def _parse_relationship(
    doc: Any,
    entities: Mapping[str, EntityDef],
    joins: Mapping[str, JoinDef],
    path: str,
) -> RelationshipDef:
    doc = _expect_mapping(doc, path)
    _check_fields(doc, {"name", "from", "to", "relation", "joinChain"}, set(), path)
    from_entity, to_entity = str(doc["from"]), str(doc["to"])
    for side, key in ((from_entity, "from"), (to_entity, "to")):
        if side not in entities:
            raise LabelingError(f"unknown entity {side!r}", f"{path}.{key}")
    try:
        cardinality = Cardinality(str(doc["relation"]))
    except ValueError:
        raise LabelingError(
            f"relation must be one of o2o, o2m, m2m; got {doc['relation']!r}", f"{path}.relation"
        ) from None
    chain = tuple(str(j) for j in _expect_list(doc["joinChain"], f"{path}.joinChain"))
    minimum = 2 if cardinality is Cardinality.MANY_TO_MANY else 1
    if len(chain) < minimum:
        raise LabelingError(
            f"{cardinality.value} relationship needs at least {minimum} join(s)",
            f"{path}.joinChain",
        )
    start = entities[from_entity].primary_table
    end = _walk_chain(start, chain, joins, f"{path}.joinChain")
    expected = entities[to_entity].primary_table
    if end != expected:
        raise LabelingError(
            f"join chain ends at {end!r} but {to_entity!r} has primary table {expected!r}",
            f"{path}.joinChain",
        )
    return RelationshipDef(str(doc["name"]), from_entity, to_entity, cardinality, chain)


def parse_labeling(document: str | Mapping[str, Any]) -> DomainLabeling:
    """Parse and validate a labeling document.

    Args:
        document: JSON text or the already-decoded mapping.

    Returns:
        A validated DomainLabeling; every reference (tables, columns, joins,
        entities) is resolved, every join chain connected.

    Raises:
        LabelingError: structural or referential problem, with a path into the
            document pinpointing the offending element.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise LabelingError(f"not valid JSON: {exc}") from None
    doc = _expect_mapping(document, "$")
    _check_fields(doc, {"id", "name", "description", "dataSource", "dataAbstraction"}, set(), "$")

    data_source = _expect_mapping(doc["dataSource"], "dataSource")
    _check_fields(data_source, {"tables", "joins"}, set(), "dataSource")
    tables = tuple(
        _parse_table(t, f"dataSource.tables[{i}]")
        for i, t in enumerate(_expect_list(data_source["tables"], "dataSource.tables"))
    )
    table_names = [t.name for t in tables]
    if len(set(table_names)) != len(table_names):
        raise LabelingError("duplicate table names", "dataSource.tables")
    tables_by_name = {t.name: t for t in tables}
    joins = tuple(
        _parse_join(j, tables_by_name, f"dataSource.joins[{i}]")
        for i, j in enumerate(_expect_list(data_source["joins"], "dataSource.joins"))
    )
    join_names = [j.name for j in joins]
    if len(set(join_names)) != len(join_names):
        raise LabelingError("duplicate join names", "dataSource.joins")
    joins_by_name = {j.name: j for j in joins}

    abstraction = _expect_mapping(doc["dataAbstraction"], "dataAbstraction")
    _check_fields(abstraction, {"entities", "relationships"}, set(), "dataAbstraction")
    entities = tuple(
        _parse_entity(e, tables_by_name, joins_by_name, f"dataAbstraction.entities[{i}]")
        for i, e in enumerate(_expect_list(abstraction["entities"], "dataAbstraction.entities"))
    )
    entity_names = [e.name for e in entities]
    if len(set(entity_names)) != len(entity_names):
        raise LabelingError("duplicate entity names", "dataAbstraction.entities")
    entities_by_name = {e.name: e for e in entities}
    relationships = tuple(
        _parse_relationship(
            r, entities_by_name, joins_by_name, f"dataAbstraction.relationships[{i}]"
        )
        for i, r in enumerate(
            _expect_list(abstraction["relationships"], "dataAbstraction.relationships")
        )
    )
    rel_names = [r.name for r in relationships]
    if len(set(rel_names)) != len(rel_names):
        raise LabelingError("duplicate relationship names", "dataAbstraction.relationships")

    return DomainLabeling(
        id=str(doc["id"]),
        name=str(doc["name"]),
        description=str(doc["description"]),
        data_source=DataSource(tables, joins),
        entities=entities,
        relationships=relationships,
    )


def serialize_labeling(labeling: DomainLabeling) -> dict[str, Any]:
    """Inverse of parse_labeling; parse(serialize(x)) == x."""
    return {
        "id": labeling.id,
        "name": labeling.name,
        "description": labeling.description,
        "dataSource": {
            "tables": [
                {
                    "name": t.name,
                    "primaryKey": t.primary_key,
                    "columns": [{"name": n, "type": s} for n, s in t.columns],
                }
                for t in labeling.data_source.tables
            ],
            "joins": [
                {"name": j.name, "from": j.from_table, "to": j.to_table, "on": [list(p) for p in j.on]}
                for j in labeling.data_source.joins
            ],
        },
        "dataAbstraction": {
            "entities": [
                {
                    "name": e.name,
                    "nicename": e.nicename,
                    "primaryTable": e.primary_table,
                    **({"identifierAttribute": e.identifier_attribute} if e.identifier_attribute else {}),
                    "attributes": [
                        {
                            "name": a.name,
                            "nicename": a.nicename,
                            **({"units": a.units} if a.units is not None else {}),
                            "type": a.storage,
                            "isa": sorted(t.value for t in a.attribute_types),
                            "source": {"table": a.source_table, "column": a.source_column},
                            **({"viaJoins": list(a.via_joins)} if a.via_joins else {}),
                        }
                        for a in e.attributes
                    ],
                }
                for e in labeling.entities
            ],
            "relationships": [
                {
                    "name": r.name,
                    "from": r.from_entity,
                    "to": r.to_entity,
                    "relation": r.cardinality.value,
                    "joinChain": list(r.join_chain),
                }
                for r in labeling.relationships
            ],
        },
    }


_AFFINITY_RULES = (
    ("BOOL", "boolean"),
    ("INT", "integer"),
    ("DATE", "datetime"),
    ("TIME", "datetime"),
    ("CHAR", "text"),
    ("CLOB", "text"),
    ("TEXT", "text"),
    ("REAL", "float"),
    ("FLOA", "float"),
    ("DOUB", "float"),
    ("NUM", "float"),
)


def _storage_of_declared(declared: str) -> str | None:
    upper = declared.upper()
    for fragment, storage in _AFFINITY_RULES:
        if fragment in upper:
            return storage
    return None


def validate_against_database(labeling: DomainLabeling, db: sqlite3.Connection) -> ValidationReport:
    """Check that every labeled table and column exists with a compatible type.

    Returns:
        ValidationReport with ok=True iff there are no discrepancies; missing
        columns report the closest existing column name.
    """
    issues: list[str] = []
    warnings: list[str] = []
    live_tables = {
        row[0] for row in db.execute("SELECT name FROM sqlite_master WHERE type = 'table'")
    }
    for table in labeling.data_source.tables:
        if table.name not in live_tables:
            issues.append(f"table {table.name!r} not found in database")
            continue
        live_columns = {
            row[1]: row[2] for row in db.execute(f'PRAGMA table_info("{table.name}")')
        }
        for column, storage in table.columns:
            if column not in live_columns:
                close = difflib.get_close_matches(column, live_columns.keys(), n=1, cutoff=0.6)
                hint = f"; closest existing column is {close[0]!r}" if close else ""
                issues.append(f"column {column!r} not found in table {table.name!r}{hint}")
                continue
            live_storage = _storage_of_declared(live_columns[column])
            if live_storage is not None and live_storage != storage:
                issues.append(
                    f"column {table.name}.{column} declared {storage!r} but database has "
                    f"{live_columns[column]!r}"
                )
    if not labeling.entities:
        warnings.append("no entities")
    return ValidationReport(ok=not issues, issues=tuple(issues), warnings=tuple(warnings))


def attributes_of_type(
    labeling: DomainLabeling, entity: str, wanted: Iterable[AttributeType]
) -> list[AttributeDef]:
    """Attributes of `entity` whose type set intersects `wanted`, in declaration order."""
    wanted = frozenset(wanted)
    if not wanted:
        raise LabelingError("empty type set")
    found = labeling.entity(entity)
    return [a for a in found.attributes if a.attribute_types & wanted]


def relationship_path(labeling: DomainLabeling, a: str, b: str) -> list[RelationshipDef]:
    """Shortest relationship path between two entities.

    The relationship graph is undirected. Ties among equally short paths break
    by lexicographically smallest sequence of relationship names, computed on
    the lexicographically canonical direction so that path(a, b) is always the
    reverse of path(b, a).

    Raises:
        LabelingError: unknown entity, or no path ("entities not connected").
    """
    labeling.entity(a)
    labeling.entity(b)
    if a == b:
        return []
    if a > b:
        return list(reversed(relationship_path(labeling, b, a)))

    adjacency: dict[str, list[RelationshipDef]] = {}
    for rel in labeling.relationships:
        adjacency.setdefault(rel.from_entity, []).append(rel)
        adjacency.setdefault(rel.to_entity, []).append(rel)

    # BFS by depth, keeping per node the lexicographically smallest name
    # sequence among shortest paths reaching it.
    best: dict[str, tuple[str, ...]] = {a: ()}
    paths: dict[str, list[RelationshipDef]] = {a: []}
    frontier = deque([a])
    while frontier and b not in best:
        next_best: dict[str, tuple[str, ...]] = {}
        next_paths: dict[str, list[RelationshipDef]] = {}
        for _ in range(len(frontier)):
            node = frontier.popleft()
            for rel in sorted(adjacency.get(node, ()), key=lambda r: r.name):
                neighbor = rel.other_entity(node)
                if neighbor is None or neighbor in best:
                    continue
                names = best[node] + (rel.name,)
                if neighbor not in next_best or names < next_best[neighbor]:
                    next_best[neighbor] = names
                    next_paths[neighbor] = paths[node] + [rel]
        best.update(next_best)
        paths.update(next_paths)
        frontier.extend(sorted(next_best))
    if b not in paths:
        raise LabelingError(f"entities not connected: {a!r} and {b!r}")
    return paths[b]
