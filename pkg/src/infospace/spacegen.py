"""Enumerate the type-valid question space of a labeled domain from plan templates."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .compiler import SQLITE_CAPABILITIES, compile_plan, quote_identifier
from .errors import CompileError, GenerationError, LabelingError, PlanCheckError, PlanSyntaxError
from .labeling import AttributeDef, DomainLabeling, EntityDef, relationship_path
from .plan import PlanGraph, canonical_text, check_plan, parse_plan
from .questions import render_question
from .taxonomy import AttributeType, OperationRegistry, types_accept

__all__ = [
    "GenerationCaps",
    "HarvestResult",
    "harvest_instances",
    "harvest_tokens",
    "SlotSpec",
    "entity_slot",
    "attribute_slot",
    "operation_slot",
    "instance_slot",
    "PlanTemplate",
    "builtin_templates",
    "GeneratedQuestion",
    "enumerate_plans",
    "CorpusRecord",
    "write_corpus",
    "read_corpus",
]

log = logging.getLogger(__name__)

_AR = AttributeType.ARITHMETIC
_CAT = AttributeType.CATEGORICAL
_DT = AttributeType.DATETIME
_DOC = AttributeType.DOCUMENT
_ID = AttributeType.IDENTIFIER
_ME = AttributeType.METRIC

_ALL_BASE = frozenset({_AR, _CAT, _DT, _DOC, _ID, _ME})
_DISCRETE = frozenset({_ID, _CAT})
_TEXTUAL = frozenset({_CAT, _DOC})

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class GenerationCaps:
    """Bounds on enumeration size; both are per slot or template, not global."""

    max_per_template: int = 50_000
    max_instances: int = 200


@dataclass(frozen=True)
class HarvestResult:
    values: tuple[Any, ...]
    truncated: bool


def harvest_instances(
    conn: sqlite3.Connection,
    labeling: DomainLabeling,
    attribute: AttributeDef,
    cap: int = 200,
) -> HarvestResult:
    """Distinct non-null values of an Identifier or Categorical attribute, ascending.

    Values beyond cap are dropped and the result is marked truncated.
    """
    del labeling  # the attribute carries its own storage coordinates
    if not types_accept(_DISCRETE, attribute.attribute_types):
        raise GenerationError(
            f"cannot harvest instances of {attribute.name!r}: "
            "only Identifier or Categorical attributes enumerate"
        )
    if cap < 1:
        raise GenerationError(f"instance cap must be positive, got {cap}")
    col = quote_identifier(attribute.source_column)
    sql = (
        f"SELECT DISTINCT {col} FROM {quote_identifier(attribute.source_table)} "
        f"WHERE {col} IS NOT NULL ORDER BY {col} ASC LIMIT {cap + 1}"
    )
    rows = conn.execute(sql).fetchall()
    truncated = len(rows) > cap
    return HarvestResult(tuple(r[0] for r in rows[:cap]), truncated)


def harvest_tokens(
    conn: sqlite3.Connection,
    attribute: AttributeDef,
    cap: int = 200,
) -> HarvestResult:
    """Distinct lowercase tokens (length >= 2) drawn from a textual attribute's values."""
    if not types_accept(_TEXTUAL, attribute.attribute_types):
        raise GenerationError(
            f"cannot harvest tokens of {attribute.name!r}: "
            "only Categorical or Document attributes tokenize"
        )
    if cap < 1:
        raise GenerationError(f"token cap must be positive, got {cap}")
    col = quote_identifier(attribute.source_column)
    sql = (
        f"SELECT DISTINCT {col} FROM {quote_identifier(attribute.source_table)} "
        f"WHERE {col} IS NOT NULL ORDER BY {col} ASC"
    )
    tokens: set[str] = set()
    truncated = False
    for (value,) in conn.execute(sql):
        tokens.update(t for t in _TOKEN.findall(str(value).lower()) if len(t) >= 2)
        if len(tokens) > cap:
            truncated = True
            break
    return HarvestResult(tuple(sorted(tokens))[:cap], truncated)


# -- templates -----------------------------------------------------------------

_PLACEHOLDER = re.compile(r"\$([a-z_][a-z0-9_]*)")


@dataclass(frozen=True)
class SlotSpec:
    """One enumerable hole in a template skeleton.

    kind selects the candidate pool:
        entity:    entities of the labeling (optionally only those connected
                   to the entity bound at connected_to).
        attribute: attributes of the entity bound at entity_slot whose types
                   intersect `types` (identifier_only narrows to the entity's
                   identifier attribute).
        operation: the fixed `operations` list.
        instance:  values harvested from the attribute bound at attribute_slot,
                   whole values (mode "exact") or lowercase tokens (mode "token").

    distinct_from skips fillings equal to an earlier slot's binding.
    """

    kind: str
    name: str
    types: frozenset[AttributeType] = frozenset()
    entity_slot: str | None = None
    attribute_slot: str | None = None
    operations: tuple[str, ...] = ()
    mode: str = "exact"
    connected_to: str | None = None
    identifier_only: bool = False
    distinct_from: str | None = None


def entity_slot(name: str, connected_to: str | None = None) -> SlotSpec:
    return SlotSpec("entity", name, connected_to=connected_to)


def attribute_slot(
    name: str,
    of: str,
    types: frozenset[AttributeType],
    identifier_only: bool = False,
    distinct_from: str | None = None,
) -> SlotSpec:
    return SlotSpec(
        "attribute",
        name,
        types=types,
        entity_slot=of,
        identifier_only=identifier_only,
        distinct_from=distinct_from,
    )


def operation_slot(name: str, operations: Sequence[str]) -> SlotSpec:
    return SlotSpec("operation", name, operations=tuple(operations))


def instance_slot(
    name: str, of: str, mode: str = "exact", distinct_from: str | None = None
) -> SlotSpec:
    return SlotSpec("instance", name, attribute_slot=of, mode=mode, distinct_from=distinct_from)


@dataclass(frozen=True)
class PlanTemplate:
    """A plan skeleton whose $name placeholders are filled from ordered slots."""

    id: str
    skeleton: str
    slots: tuple[SlotSpec, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        placeholders = set(_PLACEHOLDER.findall(self.skeleton))
        names = [s.name for s in self.slots]
        if len(set(names)) != len(names):
            raise GenerationError(f"template {self.id}: duplicate slot names")
        if placeholders != set(names):
            raise GenerationError(
                f"template {self.id}: placeholders {sorted(placeholders)} "
                f"do not match slots {sorted(names)}"
            )


_SINGLE_VALUE_AGGREGATIONS = (
    "average",
    "count",
    "count_unique",
    "get_one",
    "max",
    "median",
    "min",
    "standard_deviation",
    "string_aggregation",
    "sum",
)
_GROUPED_AGGREGATIONS = ("average", "count", "count_unique", "max", "median", "min", "sum")
_RANKED_AGGREGATIONS = ("average", "max", "min", "sum")

_VALUE_TYPES = frozenset({_AR, _ME, _DT})
_GROUP_TYPES = frozenset({_CAT, _DT})
_COUNTABLE_TYPES = frozenset({_AR, _ME})


def builtin_templates() -> tuple[PlanTemplate, ...]:
    """The stock template family; ids T1-T7, with *f variants adding an instance filter."""
    t1 = PlanTemplate(
        "T1",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$value")\n'
        '|3| retrieve_attribute(|1|, "$filter_attr")\n'
        "|4| exact(|3|, $instance)\n"
        "|5| $op(|2|)\n"
        "|6| collect(|5|)\n"
        "|7| return(|6|, |4|)",
        (
            entity_slot("entity"),
            attribute_slot("value", "entity", _VALUE_TYPES),
            operation_slot("op", _SINGLE_VALUE_AGGREGATIONS),
            attribute_slot("filter_attr", "entity", _DISCRETE),
            instance_slot("instance", "filter_attr"),
        ),
    )
    t2 = PlanTemplate(
        "T2",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$value")\n'
        '|3| retrieve_attribute(|1|, "$group")\n'
        "|4| groupby(|3|)\n"
        "|5| $op(|2|, |4|)\n"
        "|6| collect(|3|, |5|)\n"
        "|7| return(|6|)",
        (
            entity_slot("entity"),
            attribute_slot("value", "entity", _VALUE_TYPES),
            attribute_slot("group", "entity", _GROUP_TYPES, distinct_from="value"),
            operation_slot("op", _GROUPED_AGGREGATIONS),
        ),
    )
    t2f = PlanTemplate(
        "T2f",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$value")\n'
        '|3| retrieve_attribute(|1|, "$group")\n'
        "|4| groupby(|3|)\n"
        "|5| $op(|2|, |4|)\n"
        '|6| retrieve_entity("$filter_entity")\n'
        '|7| retrieve_attribute(|6|, "$filter_attr")\n'
        "|8| exact(|7|, $instance)\n"
        "|9| collect(|3|, |5|)\n"
        "|10| return(|9|, |8|)",
        (
            entity_slot("entity"),
            attribute_slot("value", "entity", _VALUE_TYPES),
            attribute_slot("group", "entity", _GROUP_TYPES, distinct_from="value"),
            operation_slot("op", _GROUPED_AGGREGATIONS),
            entity_slot("filter_entity", connected_to="entity"),
            attribute_slot("filter_attr", "filter_entity", _DISCRETE),
            instance_slot("instance", "filter_attr"),
        ),
    )
    t3 = PlanTemplate(
        "T3",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$value")\n'
        '|3| retrieve_attribute(|1|, "$id_attr")\n'
        "|4| exact(|3|, $instance)\n"
        "|5| collect(|2|)\n"
        "|6| return(|5|, |4|)",
        (
            entity_slot("entity"),
            attribute_slot("id_attr", "entity", _DISCRETE, identifier_only=True),
            attribute_slot("value", "entity", _ALL_BASE, distinct_from="id_attr"),
            instance_slot("instance", "id_attr"),
        ),
    )
    t4 = PlanTemplate(
        "T4",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$text_attr")\n'
        "|3| contains(|2|, $token)\n"
        '|4| retrieve_attribute(|1|, "$value")\n'
        "|5| $op(|4|)\n"
        "|6| collect(|5|)\n"
        "|7| return(|6|, |3|)",
        (
            entity_slot("entity"),
            attribute_slot("value", "entity", _COUNTABLE_TYPES),
            operation_slot("op", ("count", "count_unique")),
            attribute_slot("text_attr", "entity", frozenset({_CAT})),
            instance_slot("token", "text_attr", mode="token"),
        ),
    )
    t5 = PlanTemplate(
        "T5",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$text_attr")\n'
        "|3| contains(|2|, $token_a)\n"
        '|4| retrieve_attribute(|1|, "$value")\n'
        "|5| count_unique(|4|)\n"
        "|6| collect(|5|)\n"
        "|7| return(|6|, |3|)\n"
        '|8| retrieve_entity("$entity")\n'
        '|9| retrieve_attribute(|8|, "$text_attr")\n'
        "|10| contains(|9|, $token_b)\n"
        '|11| retrieve_attribute(|8|, "$value")\n'
        "|12| count_unique(|11|)\n"
        "|13| collect(|12|)\n"
        "|14| return(|13|, |10|)\n"
        '|15| retrieve_attribute(|7|, "count_unique_$value")\n'
        '|16| retrieve_attribute(|14|, "count_unique_$value")\n'
        "|17| greaterthan(|15|, |16|)\n"
        "|18| collect(|17|)\n"
        "|19| return(|18|)",
        (
            entity_slot("entity"),
            attribute_slot("value", "entity", _COUNTABLE_TYPES),
            attribute_slot("text_attr", "entity", frozenset({_CAT})),
            instance_slot("token_a", "text_attr", mode="token"),
            instance_slot("token_b", "text_attr", mode="token", distinct_from="token_a"),
        ),
    )
    t6 = PlanTemplate(
        "T6",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$x")\n'
        '|3| retrieve_attribute(|1|, "$y")\n'
        "|4| correlation(|2|, |3|)\n"
        "|5| collect(|4|)\n"
        "|6| return(|5|)",
        (
            entity_slot("entity"),
            attribute_slot("x", "entity", _VALUE_TYPES),
            attribute_slot("y", "entity", _VALUE_TYPES, distinct_from="x"),
        ),
    )
    t6f = PlanTemplate(
        "T6f",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$x")\n'
        '|3| retrieve_attribute(|1|, "$y")\n'
        "|4| correlation(|2|, |3|)\n"
        '|5| retrieve_entity("$filter_entity")\n'
        '|6| retrieve_attribute(|5|, "$filter_attr")\n'
        "|7| exact(|6|, $instance)\n"
        "|8| collect(|4|)\n"
        "|9| return(|8|, |7|)",
        (
            entity_slot("entity"),
            attribute_slot("x", "entity", _VALUE_TYPES),
            attribute_slot("y", "entity", _VALUE_TYPES, distinct_from="x"),
            entity_slot("filter_entity", connected_to="entity"),
            attribute_slot("filter_attr", "filter_entity", _DISCRETE),
            instance_slot("instance", "filter_attr"),
        ),
    )
    t7 = PlanTemplate(
        "T7",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$value")\n'
        '|3| retrieve_attribute(|1|, "$group")\n'
        "|4| groupby(|3|)\n"
        "|5| $op(|2|, |4|)\n"
        '|6| sort(|3|, "desc")\n'
        "|7| limit(10)\n"
        "|8| collect(|3|, |5|)\n"
        "|9| return(|8|, |6|, |7|)",
        (
            entity_slot("entity"),
            attribute_slot("value", "entity", _VALUE_TYPES),
            attribute_slot("group", "entity", _GROUP_TYPES, distinct_from="value"),
            operation_slot("op", _RANKED_AGGREGATIONS),
        ),
    )
    t7f = PlanTemplate(
        "T7f",
        '|1| retrieve_entity("$entity")\n'
        '|2| retrieve_attribute(|1|, "$value")\n'
        '|3| retrieve_attribute(|1|, "$group")\n'
        "|4| groupby(|3|)\n"
        "|5| $op(|2|, |4|)\n"
        '|6| sort(|3|, "desc")\n'
        "|7| limit(10)\n"
        '|8| retrieve_entity("$filter_entity")\n'
        '|9| retrieve_attribute(|8|, "$filter_attr")\n'
        "|10| exact(|9|, $instance)\n"
        "|11| collect(|3|, |5|)\n"
        "|12| return(|11|, |10|, |6|, |7|)",
        (
            entity_slot("entity"),
            attribute_slot("value", "entity", _VALUE_TYPES),
            attribute_slot("group", "entity", _GROUP_TYPES, distinct_from="value"),
            operation_slot("op", _RANKED_AGGREGATIONS),
            entity_slot("filter_entity", connected_to="entity"),
            attribute_slot("filter_attr", "filter_entity", _DISCRETE),
            instance_slot("instance", "filter_attr"),
        ),
    )
    return (t1, t2, t2f, t3, t4, t5, t6, t6f, t7, t7f)


# -- enumeration -----------------------------------------------------------------


@dataclass(frozen=True)
class GeneratedQuestion:
    question_id: str
    template_id: str
    question_text: str
    plan: PlanGraph


@dataclass(frozen=True)
class _Binding:
    fragment: str
    raw: Any


def _string_literal(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _instance_fragment(value: Any) -> str:
    if isinstance(value, bool):
        return _string_literal(str(value))
    if isinstance(value, (int, float)):
        return str(value)
    return _string_literal(str(value))


class _Enumerator:
    def __init__(
        self,
        labeling: DomainLabeling,
        registry: OperationRegistry,
        conn: sqlite3.Connection,
        caps: GenerationCaps,
    ) -> None:
        self.labeling = labeling
        self.registry = registry
        self.conn = conn
        self.caps = caps
        self._harvests: dict[tuple[str, str, str], HarvestResult] = {}
        self._connected: dict[tuple[str, str], bool] = {}

    def assignments(self, template: PlanTemplate) -> Iterator[dict[str, _Binding]]:
        yield from self._fill(template.slots, 0, {})

    def _fill(
        self, slots: tuple[SlotSpec, ...], index: int, bound: dict[str, _Binding]
    ) -> Iterator[dict[str, _Binding]]:
        if index == len(slots):
            yield dict(bound)
            return
        slot = slots[index]
        for binding in self._candidates(slot, bound):
            bound[slot.name] = binding
            yield from self._fill(slots, index + 1, bound)
        bound.pop(slot.name, None)

    def _candidates(self, slot: SlotSpec, bound: Mapping[str, _Binding]) -> Iterator[_Binding]:
        if slot.kind == "entity":
            for entity in self._entity_candidates(slot, bound):
                yield _Binding(entity.name, entity)
        elif slot.kind == "attribute":
            entity = bound[slot.entity_slot].raw
            for attr in self._attribute_candidates(slot, entity, bound):
                yield _Binding(attr.name, attr)
        elif slot.kind == "operation":
            for op in slot.operations:
                yield _Binding(op, op)
        elif slot.kind == "instance":
            attr = bound[slot.attribute_slot].raw
            for value in self._instance_values(slot, attr):
                if slot.distinct_from is not None and value == bound[slot.distinct_from].raw:
                    continue
                yield _Binding(_instance_fragment(value), value)
        else:
            raise GenerationError(f"unknown slot kind {slot.kind!r}")

    def _entity_candidates(
        self, slot: SlotSpec, bound: Mapping[str, _Binding]
    ) -> Iterator[EntityDef]:
        for entity in self.labeling.entities:
            if slot.connected_to is not None:
                base: EntityDef = bound[slot.connected_to].raw
                if entity.name != base.name and not self._are_connected(base.name, entity.name):
                    continue
            yield entity

    def _are_connected(self, a: str, b: str) -> bool:
        key = (a, b)
        if key not in self._connected:
            try:
                relationship_path(self.labeling, a, b)
                self._connected[key] = True
            except LabelingError:
                self._connected[key] = False
        return self._connected[key]

    def _attribute_candidates(
        self, slot: SlotSpec, entity: EntityDef, bound: Mapping[str, _Binding]
    ) -> Iterator[AttributeDef]:
        for attr in entity.attributes:
            if slot.identifier_only and attr.name != entity.identifier_attribute:
                continue
            if not types_accept(slot.types, attr.attribute_types):
                continue
            if slot.distinct_from is not None:
                other: AttributeDef = bound[slot.distinct_from].raw
                if attr.name == other.name:
                    continue
            yield attr

    def _instance_values(self, slot: SlotSpec, attr: AttributeDef) -> tuple[Any, ...]:
        key = (attr.source_table, attr.source_column, slot.mode)
        if key not in self._harvests:
            if slot.mode == "token":
                self._harvests[key] = harvest_tokens(self.conn, attr, self.caps.max_instances)
            else:
                self._harvests[key] = harvest_instances(
                    self.conn, self.labeling, attr, self.caps.max_instances
                )
        return self._harvests[key].values


def enumerate_plans(
    labeling: DomainLabeling,
    registry: OperationRegistry,
    conn: sqlite3.Connection,
    templates: Sequence[PlanTemplate] | None = None,
    caps: GenerationCaps | None = None,
) -> Iterator[GeneratedQuestion]:
    """Yield every type-valid, compilable filling of each template, in stable order.

    Fillings rejected by the plan checker or the compiler are skipped silently;
    hitting the per-template cap stops that template with a logged count.
    """
    caps = caps or GenerationCaps()
    templates = builtin_templates() if templates is None else tuple(templates)
    enumerator = _Enumerator(labeling, registry, conn, caps)
    for template in templates:
        emitted = skipped = 0
        for assignment in enumerator.assignments(template):
            fragments = {name: b.fragment for name, b in assignment.items()}
            text = _PLACEHOLDER.sub(lambda m: fragments[m.group(1)], template.skeleton)
            try:
                plan = parse_plan(text)
                typed = check_plan(plan, registry, labeling)
                compile_plan(plan, registry, labeling, SQLITE_CAPABILITIES)
            except (PlanSyntaxError, PlanCheckError, CompileError):
                skipped += 1
                continue
            question_text = render_question(plan, typed, labeling, registry)
            canonical = canonical_text(plan)
            digest = hashlib.sha256(f"{labeling.id}\n{canonical}".encode("utf-8"))
            yield GeneratedQuestion(digest.hexdigest()[:16], template.id, question_text, plan)
            emitted += 1
            if emitted >= caps.max_per_template:
                log.warning(
                    "template %s: emission cap %d reached, stopping early",
                    template.id,
                    caps.max_per_template,
                )
                break
        log.debug("template %s: emitted %d, skipped %d fillings", template.id, emitted, skipped)


# -- corpus persistence -----------------------------------------------------------


@dataclass(frozen=True)
class CorpusRecord:
    question_id: str
    template_id: str
    question_text: str
    plan_text: str


def write_corpus(path: str | Path, questions: Iterable[GeneratedQuestion]) -> int:
    """Write one JSON record per line, in input order; returns the count written.

    Duplicate question ids keep the first occurrence.
    """
    path = Path(path)
    seen: set[str] = set()
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for q in questions:
            if q.question_id in seen:
                log.debug("duplicate question id %s dropped", q.question_id)
                continue
            seen.add(q.question_id)
            record = {
                "question_id": q.question_id,
                "template_id": q.template_id,
                "question_text": q.question_text,
                "plan_text": canonical_text(q.plan),
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
            count += 1
    return count


_RECORD_KEYS = {"question_id", "template_id", "question_text", "plan_text"}


def read_corpus(path: str | Path) -> tuple[CorpusRecord, ...]:
    records: list[CorpusRecord] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GenerationError(f"corpus line {line_no}: invalid record: {exc}") from None
            if not isinstance(doc, dict) or set(doc) != _RECORD_KEYS:
                raise GenerationError(f"corpus line {line_no}: malformed record")
            records.append(
                CorpusRecord(
                    str(doc["question_id"]),
                    str(doc["template_id"]),
                    str(doc["question_text"]),
                    str(doc["plan_text"]),
                )
            )
    return tuple(records)
