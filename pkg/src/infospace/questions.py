"""Render plans as English questions and search question corpora by token overlap."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

from .labeling import DomainLabeling
from .plan import (
    COMPARISON_OPS,
    CONNECTIVE_OPS,
    NumberLit,
    PlanArg,
    PlanGraph,
    PlanStep,
    StepRef,
    StringLit,
    SubPlan,
    TypedValue,
    split_subplans,
)
from .taxonomy import AttributeType, OperationCategory, OperationRegistry

__all__ = [
    "FILTER_NICENAMES",
    "DIRECTION_WORDS",
    "render_question",
    "SearchHit",
    "QuestionIndex",
    "build_index",
    "tokenize",
    "search",
]

# Surface phrases for filter operations and sort directives. Filters render
# with these connectives, not with the operation language templates.
FILTER_NICENAMES: Mapping[str, str] = MappingProxyType(
    {
        "exact": "of",
        "greaterthan": "greater than",
        "greaterthan_eq": "greater than or equal to",
        "lessthan": "less than",
        "lessthan_eq": "less than or equal to",
        "contains": "containing",
        "not": "not",
        "and": "and",
        "or": "or",
    }
)

DIRECTION_WORDS: Mapping[str, str] = MappingProxyType({"asc": "ascending", "desc": "descending"})

_PLACEHOLDER = re.compile(r"\{(\d+)\}")


def _number_text(value: int | float) -> str:
    return str(value)


class _Renderer:
    """Stateful walk over one plan; produces phrases for steps and subplans."""

    def __init__(
        self,
        plan: PlanGraph,
        typed: Mapping[int, TypedValue],
        labeling: DomainLabeling,
        registry: OperationRegistry,
    ) -> None:
        self.typed = typed
        self.labeling = labeling
        self.registry = registry
        self.by_id: dict[int, PlanStep] = {s.id: s for s in plan.steps}
        self.subplans: dict[int, SubPlan] = {s.return_id: s for s in split_subplans(plan)}

    # -- step-level phrases --------------------------------------------------

    def attribute_nicename(self, step_id: int) -> str:
        tv = self.typed[step_id]
        if tv.attribute_ref is not None:
            entity_name, attr_name = tv.attribute_ref
            attr = self.labeling.entity(entity_name).attribute(attr_name)
            return attr.nicename
        # Pseudo attribute pulled from an earlier subplan: label is the only name.
        return (tv.label or "value").replace("_", " ")

    def render_arg(self, arg: PlanArg) -> str:
        if isinstance(arg, StringLit):
            return arg.value
        if isinstance(arg, NumberLit):
            return _number_text(arg.value)
        return self.render_value(arg.id)

    def render_value(self, step_id: int) -> str:
        """Phrase for a value-producing step (attribute, aggregation, arithmetic)."""
        step = self.by_id[step_id]
        sig = self.registry.operations[step.op]
        if step.op == "retrieve_attribute":
            first = step.args[0]
            if isinstance(first, StepRef) and first.id in self.subplans:
                return self.subplan_phrase(self.subplans[first.id])
            return self.attribute_nicename(step_id)
        if sig.category == OperationCategory.AGGREGATION:
            return self.aggregation_phrase(step)
        return self._fill_template(sig.language_template, list(step.args))

    def aggregation_phrase(self, step: PlanStep, include_grouping: bool = True) -> str:
        sig = self.registry.operations[step.op]
        value_args = [a for a in step.args if not self._is_grouping(a)]
        phrase = self._fill_template(sig.language_template, value_args)
        group_names = self.grouping_names(step) if include_grouping else []
        if group_names:
            phrase += " grouped by " + " and ".join(group_names)
        return phrase

    def _is_grouping(self, arg: PlanArg) -> bool:
        return isinstance(arg, StepRef) and AttributeType.GROUPING in self.typed[arg.id].types

    def grouping_names(self, step: PlanStep) -> list[str]:
        names: list[str] = []
        for arg in step.args:
            if self._is_grouping(arg):
                for inner in self.by_id[arg.id].args:
                    if isinstance(inner, StepRef):
                        names.append(self.attribute_nicename(inner.id))
        return names

    def grouping_attr_ids(self, step: PlanStep) -> set[int]:
        ids: set[int] = set()
        for arg in step.args:
            if self._is_grouping(arg):
                for inner in self.by_id[arg.id].args:
                    if isinstance(inner, StepRef):
                        ids.add(inner.id)
        return ids

    def _fill_template(self, template: str, args: list[PlanArg]) -> str:
        rendered = [self.render_arg(a) for a in args]
        indices = [int(m) for m in _PLACEHOLDER.findall(template)]
        count = max(indices) + 1 if indices else 0
        if count and len(rendered) > count:
            # Fold extra operands into the last placeholder: "a added to b and c".
            rendered = rendered[: count - 1] + [" and ".join(rendered[count - 1 :])]
        return _PLACEHOLDER.sub(lambda m: rendered[int(m.group(1))], template)

    # -- filter phrases ------------------------------------------------------

    def filter_phrase(self, step_id: int) -> str:
        step = self.by_id[step_id]
        nicename = FILTER_NICENAMES.get(step.op)
        if step.op in CONNECTIVE_OPS:
            if step.op == "not":
                return "not " + self.filter_phrase(_ref_id(step.args[0]))
            joiner = f" {nicename} "
            return joiner.join(self.filter_phrase(_ref_id(a)) for a in step.args)
        lhs, rhs = step.args[0], step.args[1]
        rhs_text = self.render_arg(rhs)
        if step.op == "contains":
            rhs_text = f'"{rhs_text}"'
        return f"{self.render_arg(lhs)} {nicename} {rhs_text}"

    # -- subplan assembly ----------------------------------------------------

    def classify_return(
        self, sub: SubPlan
    ) -> tuple[PlanStep, int | None, PlanStep | None, PlanStep | None]:
        ret = self.by_id[sub.return_id]
        collect = filter_id = sort = limit = None
        for arg in ret.args:
            types = self.typed[_ref_id(arg)].types
            if AttributeType.ATTRIBUTE_COLLECTION in types:
                collect = self.by_id[_ref_id(arg)]
            elif AttributeType.FILTER in types:
                filter_id = _ref_id(arg)
            elif AttributeType.SORT in types:
                sort = self.by_id[_ref_id(arg)]
            elif AttributeType.LIMIT in types:
                limit = self.by_id[_ref_id(arg)]
        assert collect is not None  # guaranteed by check_plan
        return collect, filter_id, sort, limit

    def body_text(
        self, sub: SubPlan, collect: PlanStep, sort: PlanStep | None, limit: PlanStep | None
    ) -> str:
        grouped_ids: set[int] = set()
        for step in sub.steps:
            if step.op == "groupby":
                grouped_ids.update(_ref_id(a) for a in step.args if isinstance(a, StepRef))
        sort_ids = _sort_attr_ids(sort)
        items: list[str] = []
        sort_folded = False
        for arg in collect.args:
            sid = _ref_id(arg)
            step = self.by_id[sid]
            if sid in grouped_ids and step.op == "retrieve_attribute":
                continue  # the grouped-by phrase already names it
            sig = self.registry.operations[step.op]
            if sig.category == OperationCategory.AGGREGATION:
                group_ids = self.grouping_attr_ids(step)
                sort_matches = bool(sort_ids) and sort_ids <= group_ids and not sort_folded
                if sort_matches and limit is not None:
                    # The prefix frame already says "for X sorted ...": naming
                    # the same attribute again as "grouped by X" reads twice.
                    phrase = self.aggregation_phrase(step, include_grouping=False)
                    sort_folded = True
                else:
                    phrase = self.aggregation_phrase(step)
                    if sort_matches:
                        direction = _sort_direction(sort)
                        phrase += f" in {DIRECTION_WORDS[direction]} order"
                        sort_folded = True
            else:
                phrase = self.render_value(sid)
            items.append(phrase)
        if not items:  # nothing but grouped attributes: name them anyway
            items = [self.render_value(_ref_id(a)) for a in collect.args]
        body = " and ".join(items)
        if sort is not None and not sort_folded and limit is None:
            direction = _sort_direction(sort)
            body += f" sorted by {self.sort_names(sort)} in {DIRECTION_WORDS[direction]} order"
        if limit is not None and sort is None:
            body += " limited to the top results"
        return body

    def subplan_phrase(self, sub: SubPlan) -> str:
        """Value phrase for a feeder subplan: body plus its filters, no frame."""
        collect, filter_id, sort, limit = self.classify_return(sub)
        body = self.body_text(sub, collect, sort, limit)
        if filter_id is not None:
            return f"{body} for {self.filter_phrase(filter_id)}"
        return body

    def question(self, sub: SubPlan) -> str:
        collect, filter_id, sort, limit = self.classify_return(sub)
        for arg in collect.args:
            sid = _ref_id(arg)
            if AttributeType.FILTER in self.typed[sid].types:
                return self._boolean_question(sid)
        body = self.body_text(sub, collect, sort, limit)
        tail = f" for {self.filter_phrase(filter_id)}" if filter_id is not None else ""
        if limit is not None and sort is not None:
            direction = DIRECTION_WORDS[_sort_direction(sort)]
            prefix = (
                f"For {self.sort_names(sort)} sorted in {direction} order "
                "and limited to the top results, "
            )
            return f"{prefix}what is the {body}{tail}?"
        return f"What is the {body}{tail}?"

    def sort_names(self, sort: PlanStep) -> str:
        """Names of the sort keys; aggregations surface without their grouping."""
        names: list[str] = []
        for sid in sort_ids_ordered(sort):
            step = self.by_id[sid]
            sig = self.registry.operations[step.op]
            if sig.category == OperationCategory.AGGREGATION:
                names.append(self.aggregation_phrase(step, include_grouping=False))
            else:
                names.append(self.render_value(sid))
        return " and ".join(names)

    def _boolean_question(self, comparison_id: int) -> str:
        step = self.by_id[comparison_id]
        nicename = FILTER_NICENAMES[step.op]
        lhs = self.render_arg(step.args[0])
        rhs = self.render_arg(step.args[1])
        return f"Is the {lhs} {nicename} {rhs}?"


def _ref_id(arg: PlanArg) -> int:
    if not isinstance(arg, StepRef):
        raise TypeError(f"expected step reference, got {arg!r}")
    return arg.id


def _sort_attr_ids(sort: PlanStep | None) -> set[int]:
    if sort is None:
        return set()
    return {a.id for a in sort.args if isinstance(a, StepRef)}


def sort_ids_ordered(sort: PlanStep) -> list[int]:
    return [a.id for a in sort.args if isinstance(a, StepRef)]


def _sort_direction(sort: PlanStep) -> str:
    last = sort.args[-1]
    assert isinstance(last, StringLit)
    return last.value.lower()


def render_question(
    plan: PlanGraph,
    typed: Mapping[int, TypedValue],
    labeling: DomainLabeling,
    registry: OperationRegistry,
) -> str:
    """English question for a checked plan.

    The final subplan picks the frame: a collected comparison renders as a
    yes/no question, anything else as a value question. Attributes surface
    as their nicenames, filters through FILTER_NICENAMES connectives, and
    aggregations through their language templates.
    """
    renderer = _Renderer(plan, typed, labeling, registry)
    subs = split_subplans(plan)
    return renderer.question(subs[-1])


# -- search ------------------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class _Entry:
    question_id: str
    text: str
    tokens: Counter


@dataclass(frozen=True)
class QuestionIndex:
    """Token-multiset index over (question_id, question_text) pairs."""

    entries: tuple[_Entry, ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SearchHit:
    question_id: str
    text: str
    score: int


def build_index(pairs: Iterable[tuple[str, str]]) -> QuestionIndex:
    entries = tuple(_Entry(qid, text, Counter(tokenize(text))) for qid, text in pairs)
    return QuestionIndex(entries)


def search(index: QuestionIndex, query: str, limit: int = 10) -> list[SearchHit]:
    """Rank by shared token count (multiset overlap); ties break to shorter text.

    An empty or non-matching query yields no hits; results never exceed limit.
    """
    query_tokens = Counter(tokenize(query))
    if not query_tokens or limit <= 0:
        return []
    scored: list[tuple[int, int, str, _Entry]] = []
    for entry in index.entries:
        score = sum((query_tokens & entry.tokens).values())
        if score > 0:
            scored.append((-score, len(entry.text), entry.question_id, entry))
    scored.sort(key=lambda item: item[:3])
    return [SearchHit(e.question_id, e.text, -neg) for neg, _, _, e in scored[:limit]]
