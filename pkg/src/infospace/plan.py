"""Analytic plan DAGs: textual grammar, parser, type checker, subplan split.

Grammar, one step per line::

    |1| retrieve_entity("CarbonEmission")
    |2| retrieve_attribute(|1|, "amount")   # trailing comments allowed
    |3| average(|2|)

Arguments are step references (`|n|`), double-quoted strings (escapes: \\" and
\\\\), or bare decimal numbers. Step ids are positive and strictly increasing;
references only point backward.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence, Union

from .errors import PlanCheckError, PlanSyntaxError
from .labeling import DomainLabeling
from .taxonomy import (
    AttributeType,
    OperationCategory,
    OperationRegistry,
    OperationSignature,
    signature_of,
    types_accept,
)
from .errors import UnknownOperationError


@dataclass(frozen=True)
class StepRef:
    id: int


@dataclass(frozen=True)
class StringLit:
    value: str


@dataclass(frozen=True)
class NumberLit:
    value: int | float


PlanArg = Union[StepRef, StringLit, NumberLit]

COMPARISON_OPS = frozenset(
    {"exact", "greaterthan", "greaterthan_eq", "lessthan", "lessthan_eq", "contains"}
)
CONNECTIVE_OPS = frozenset({"and", "or", "not"})


@dataclass(frozen=True)
class PlanStep:
    id: int
    op: str
    args: tuple[PlanArg, ...]

    def step_refs(self) -> list[int]:
        return [a.id for a in self.args if isinstance(a, StepRef)]


@dataclass(frozen=True)
class PlanGraph:
    steps: tuple[PlanStep, ...]
    returns: tuple[int, ...]

    def step(self, step_id: int) -> PlanStep:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise KeyError(step_id)


@dataclass(frozen=True)
class TypedValue:
    """Checked output of one plan step.

    Beyond the type set, carries the bookkeeping the compiler and the question
    renderer need: whether the value is the result of an aggregation, the
    column label a collect would give it, and per-collect label lists.
    """

    types: frozenset[AttributeType]
    origin: int
    entity_context: str | None = None
    attribute_ref: tuple[str, str] | None = None
    aggregated: bool = False
    label: str | None = None
    collected_labels: tuple[str, ...] | None = None


def _scan_string(text: str, pos: int, line_no: int) -> tuple[str, int]:
    # pos is at the opening quote.
    out = []
    i = pos + 1
    while i < len(text):
        ch = text[i]
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\\":
            if i + 1 >= len(text) or text[i + 1] not in ('"', "\\"):
                raise PlanSyntaxError("bad escape in string literal", line_no, i + 2)
            out.append(text[i + 1])
            i += 2
            continue
        out.append(ch)
        i += 1
    raise PlanSyntaxError("unterminated string literal", line_no, pos + 1)


def _scan_number(text: str, pos: int, line_no: int) -> tuple[NumberLit, int]:
    i = pos
    if text[i] in "+-":
        i += 1
    start_digits = i
    while i < len(text) and text[i].isdigit():
        i += 1
    if i == start_digits:
        raise PlanSyntaxError("expected a number", line_no, pos + 1)
    is_float = False
    if i < len(text) and text[i] == ".":
        is_float = True
        i += 1
        frac_start = i
        while i < len(text) and text[i].isdigit():
            i += 1
        if i == frac_start:
            raise PlanSyntaxError("digits required after decimal point", line_no, i + 1)
    raw = text[pos:i]
    return NumberLit(float(raw) if is_float else int(raw)), i


def _scan_step_ref(text: str, pos: int, line_no: int) -> tuple[int, int]:
    # pos is at '|'.
    i = pos + 1
    start = i
    while i < len(text) and text[i].isdigit():
        i += 1
    if i == start or i >= len(text) or text[i] != "|":
        raise PlanSyntaxError("malformed step reference, expected |<int>|", line_no, pos + 1)
    return int(text[start:i]), i + 1


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in " \t":
        pos += 1
    return pos


def _parse_line(line: str, line_no: int) -> PlanStep:
    pos = _skip_ws(line, 0)
    ref_id, pos = _scan_step_ref(line, pos, line_no)
    pos = _skip_ws(line, pos)
    start = pos
    while pos < len(line) and (line[pos].isalnum() or line[pos] == "_"):
        pos += 1
    op = line[start:pos]
    if not op:
        raise PlanSyntaxError("expected an operation name", line_no, pos + 1)
    pos = _skip_ws(line, pos)
    if pos >= len(line) or line[pos] != "(":
        raise PlanSyntaxError("expected '(' after operation name", line_no, pos + 1)
    pos += 1
    args: list[PlanArg] = []
    pos = _skip_ws(line, pos)
    if pos < len(line) and line[pos] == ")":
        pos += 1
    else:
        while True:
            pos = _skip_ws(line, pos)
            if pos >= len(line):
                raise PlanSyntaxError("unterminated argument list", line_no, pos)
            ch = line[pos]
            if ch == "|":
                ref, pos = _scan_step_ref(line, pos, line_no)
                args.append(StepRef(ref))
            elif ch == '"':
                value, pos = _scan_string(line, pos, line_no)
                args.append(StringLit(value))
            elif ch.isdigit() or ch in "+-":
                lit, pos = _scan_number(line, pos, line_no)
                args.append(lit)
            else:
                raise PlanSyntaxError(f"unexpected character {ch!r}", line_no, pos + 1)
            pos = _skip_ws(line, pos)
            if pos < len(line) and line[pos] == ",":
                pos += 1
                continue
            if pos < len(line) and line[pos] == ")":
                pos += 1
                break
            raise PlanSyntaxError("expected ',' or ')'", line_no, pos + 1)
    pos = _skip_ws(line, pos)
    if pos < len(line) and line[pos] != "#":
        raise PlanSyntaxError(f"trailing characters after step: {line[pos:]!r}", line_no, pos + 1)
    if ref_id < 1:
        raise PlanSyntaxError("step ids start at 1", line_no, 2)
    return PlanStep(ref_id, op, tuple(args))


def parse_plan(text: str) -> PlanGraph:
    """Parse plan text into a PlanGraph.

    Raises:
        PlanSyntaxError: bad syntax (with line/column), duplicate or
            non-increasing step ids, forward or dangling step references.
    """
    steps: list[PlanStep] = []
    seen: set[int] = set()
    last_id = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        step = _parse_line(raw, line_no)
        if step.id in seen:
            raise PlanSyntaxError(f"duplicate step id |{step.id}|", line_no)
        if step.id <= last_id:
            raise PlanSyntaxError(
                f"step ids must be strictly increasing; |{step.id}| follows |{last_id}|", line_no
            )
        for ref in step.step_refs():
            if ref not in seen:
                raise PlanSyntaxError(
                    f"reference |{ref}| does not point to an earlier step", line_no
                )
        seen.add(step.id)
        last_id = step.id
        steps.append(step)
    returns = tuple(s.id for s in steps if s.op == "return")
    return PlanGraph(tuple(steps), returns)


def _render_arg(arg: PlanArg) -> str:
    if isinstance(arg, StepRef):
        return f"|{arg.id}|"
    if isinstance(arg, StringLit):
        escaped = arg.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    value = arg.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_text(plan: PlanGraph) -> str:
    """Serialize a plan, preserving its step ids; inverse of parse_plan."""
    return "\n".join(
        f"|{s.id}| {s.op}({', '.join(_render_arg(a) for a in s.args)})" for s in plan.steps
    )


def canonical_text(plan: PlanGraph) -> str:
    """Serialize with step ids renumbered consecutively from 1.

    Used for stable question ids: two plans that differ only in step numbering
    canonicalize identically.
    """
    mapping = {s.id: i for i, s in enumerate(plan.steps, start=1)}
    renumbered = []
    for s in plan.steps:
        args = tuple(StepRef(mapping[a.id]) if isinstance(a, StepRef) else a for a in s.args)
        renumbered.append(PlanStep(mapping[s.id], s.op, args))
    return render_text(PlanGraph(tuple(renumbered), tuple(mapping[r] for r in plan.returns)))


def plan_warnings(plan: PlanGraph) -> list[str]:
    """Non-fatal plan diagnostics: no return step, unreachable steps."""
    warnings = []
    if not plan.returns:
        warnings.append("plan has no return step; nothing will be produced")
    reachable: set[int] = set()
    for return_id in plan.returns:
        reachable |= _backward_reachable(plan, return_id, stop_at_returns=False)
    dead = [s.id for s in plan.steps if s.id not in reachable and plan.returns]
    for step_id in dead:
        warnings.append(f"step |{step_id}| is not reachable from any return step")
    return warnings


def _literal_types(arg: PlanArg) -> frozenset[AttributeType]:
    if isinstance(arg, StringLit):
        return frozenset({AttributeType.STRING})
    return frozenset({AttributeType.ARITHMETIC})


def _match_slots(
    step: PlanStep,
    sig: OperationSignature,
    arg_types: list[frozenset[AttributeType]],
) -> list[list[int]]:
    """Assign argument indices to signature slots, greedily in declaration order.

    Returns one list of argument indices per slot.

    Raises:
        PlanCheckError: arity violation or type mismatch.
    """
    assigned: list[list[int]] = []
    remaining = list(range(len(step.args)))
    for slot_index, slot in enumerate(sig.input_slots):
        take: list[int] = []
        while len(take) < slot.arity.min_count:
            if not remaining:
                raise PlanCheckError(
                    f"{step.op} expects at least "
                    f"{sum(s.arity.min_count for s in sig.input_slots)} argument(s), "
                    f"got {len(step.args)}",
                    step.id,
                )
            candidate = remaining[0]
            if not types_accept(slot.types, arg_types[candidate]):
                raise PlanCheckError(
                    f"{step.op} argument {candidate + 1} has types "
                    f"{{{', '.join(sorted(t.value for t in arg_types[candidate]))}}} but slot "
                    f"{slot_index + 1} accepts {{{', '.join(sorted(t.value for t in slot.types))}}}",
                    step.id,
                )
            take.append(remaining.pop(0))
        while (
            remaining
            and (slot.arity.max_count is None or len(take) < slot.arity.max_count)
            and types_accept(slot.types, arg_types[remaining[0]])
        ):
            take.append(remaining.pop(0))
        assigned.append(take)
    if remaining:
        raise PlanCheckError(
            f"{step.op} got {len(step.args)} argument(s); "
            f"{len(remaining)} could not be matched to any slot",
            step.id,
        )
    return assigned


def _derived_label(op: str, labels: Sequence[str]) -> str:
    return "_".join([op, *labels]) if labels else op


def check_plan(
    plan: PlanGraph, registry: OperationRegistry, labeling: DomainLabeling
) -> dict[int, TypedValue]:
    """Type-check a parsed plan against the taxonomy and a labeling.

    Returns:
        Map from step id to its TypedValue.

    Raises:
        PlanCheckError: arity violation, type mismatch, unknown entity or
            attribute, bad sort direction or limit count.
    """
    checked: dict[int, TypedValue] = {}
    by_id = {s.id: s for s in plan.steps}
    for step in plan.steps:
        try:
            sig = signature_of(registry, step.op)
        except UnknownOperationError as exc:
            raise PlanCheckError(str(exc), step.id) from None
        arg_types = [
            checked[a.id].types if isinstance(a, StepRef) else _literal_types(a)
            for a in step.args
        ]
        if step.op == "groupby":
            for i, types in enumerate(arg_types):
                if not types_accept(sig.input_slots[0].types, types):
                    raise PlanCheckError(
                        "groupby requires Categorical or Datetime attributes; argument "
                        f"{i + 1} has {{{', '.join(sorted(t.value for t in types))}}}",
                        step.id,
                    )
        slots = _match_slots(step, sig, arg_types)
        checked[step.id] = _type_step(step, sig, slots, checked, by_id, labeling)
    return checked


def _type_step(
    step: PlanStep,
    sig: OperationSignature,
    slots: list[list[int]],
    checked: Mapping[int, TypedValue],
    by_id: Mapping[int, PlanStep],
    labeling: DomainLabeling,
) -> TypedValue:
    op = step.op
    args = step.args

    def ref_value(arg: PlanArg) -> TypedValue | None:
        return checked[arg.id] if isinstance(arg, StepRef) else None

    if op == "retrieve_entity":
        name = args[0].value  # slot matching guarantees a single StringLit
        try:
            labeling.entity(name)
        except Exception:
            known = [e.name for e in labeling.entities]
            close = difflib.get_close_matches(name, known, n=1, cutoff=0.6)
            hint = f" (did you mean {close[0]!r}?)" if close else ""
            raise PlanCheckError(f"unknown entity {name!r}{hint}", step.id) from None
        return TypedValue(
            frozenset({AttributeType.ENTITY}), step.id, entity_context=name
        )

    if op == "retrieve_attribute":
        context_arg = args[0]
        if not isinstance(context_arg, StepRef):
            raise PlanCheckError(
                "retrieve_attribute's first argument must reference a retrieve_entity "
                "or return step",
                step.id,
            )
        source = by_id[context_arg.id]
        attr_name = args[1].value
        if source.op == "retrieve_entity":
            entity_name = checked[context_arg.id].entity_context
            entity = labeling.entity(entity_name)
            attr = entity.attribute(attr_name)
            if attr is None:
                known = [a.name for a in entity.attributes]
                close = difflib.get_close_matches(attr_name, known, n=1, cutoff=0.6)
                hint = f" (did you mean {close[0]!r}?)" if close else ""
                raise PlanCheckError(
                    f"entity {entity_name!r} has no attribute {attr_name!r}{hint}", step.id
                )
            return TypedValue(
                frozenset({AttributeType.ATTRIBUTE}) | attr.attribute_types,
                step.id,
                entity_context=entity_name,
                attribute_ref=(entity_name, attr_name),
                label=attr.name,
            )
        if source.op == "return":
            collect_step = by_id[source.args[0].id]
            collect_value = checked[collect_step.id]
            labels = collect_value.collected_labels or ()
            if attr_name not in labels:
                raise PlanCheckError(
                    f"step |{source.id}| does not collect a column named {attr_name!r}; "
                    f"available: {', '.join(labels) or '(none)'}",
                    step.id,
                )
            item_value = checked[collect_step.args[labels.index(attr_name)].id]
            pseudo = f"sub_{source.id}"
            return TypedValue(
                item_value.types | frozenset({AttributeType.ATTRIBUTE}),
                step.id,
                entity_context=pseudo,
                attribute_ref=(pseudo, attr_name),
                aggregated=item_value.aggregated,
                label=attr_name,
            )
        raise PlanCheckError(
            "retrieve_attribute's first argument must reference a retrieve_entity "
            f"or return step, not {source.op}",
            step.id,
        )

    ref_values = [checked[a.id] for a in args if isinstance(a, StepRef)]

    if sig.category is OperationCategory.AGGREGATION:
        value_args = [args[i] for i in slots[0]]
        labels = [checked[a.id].label or f"step_{a.id}" for a in value_args if isinstance(a, StepRef)]
        return TypedValue(
            sig.output_types | frozenset({AttributeType.ATTRIBUTE}),
            step.id,
            aggregated=True,
            label=_derived_label(op, labels),
        )

    if sig.category is OperationCategory.ARITHMETIC:
        labels = [v.label or f"step_{v.origin}" for v in ref_values]
        return TypedValue(
            sig.output_types | frozenset({AttributeType.ATTRIBUTE}),
            step.id,
            aggregated=any(v.aggregated for v in ref_values),
            label=_derived_label(op, labels),
        )

    if op in COMPARISON_OPS:
        all_aggregated = bool(ref_values) and all(v.aggregated for v in ref_values)
        types = frozenset({AttributeType.FILTER})
        if all_aggregated:
            types |= frozenset({AttributeType.ATTRIBUTE})
        labels = [v.label or f"step_{v.origin}" for v in ref_values]
        return TypedValue(
            types,
            step.id,
            aggregated=any(v.aggregated for v in ref_values),
            label=_derived_label(op, labels),
        )

    if op in CONNECTIVE_OPS:
        return TypedValue(
            frozenset({AttributeType.FILTER}),
            step.id,
            aggregated=any(v.aggregated for v in ref_values),
        )

    if op == "groupby":
        return TypedValue(frozenset({AttributeType.GROUPING}), step.id)

    if op == "sort":
        direction = args[-1]
        if not isinstance(direction, StringLit) or direction.value not in ("asc", "desc"):
            raise PlanCheckError('sort direction must be "asc" or "desc"', step.id)
        return TypedValue(frozenset({AttributeType.SORT}), step.id)

    if op == "limit":
        count = args[0]
        if not isinstance(count, NumberLit) or isinstance(count.value, float) or count.value < 1:
            raise PlanCheckError("limit expects a positive integer count", step.id)
        return TypedValue(frozenset({AttributeType.LIMIT}), step.id)

    if op == "collect":
        labels: list[str] = []
        for arg in args:
            base = checked[arg.id].label or f"step_{arg.id}"
            label = base
            suffix = 2
            while label in labels:
                label = f"{base}_{suffix}"
                suffix += 1
            labels.append(label)
        return TypedValue(
            frozenset({AttributeType.ATTRIBUTE_COLLECTION}),
            step.id,
            collected_labels=tuple(labels),
        )

    if op == "return":
        return TypedValue(frozenset({AttributeType.ENTITY}), step.id)

    # An operation declared via load_registry but with no special handling:
    # type it by its signature alone.
    aggregated = sig.category is OperationCategory.AGGREGATION or any(
        v.aggregated for v in ref_values
    )
    labels = [v.label or f"step_{v.origin}" for v in ref_values]
    return TypedValue(
        sig.output_types, step.id, aggregated=aggregated, label=_derived_label(op, labels)
    )


def _backward_reachable(plan: PlanGraph, return_id: int, stop_at_returns: bool) -> set[int]:
    by_id = {s.id: s for s in plan.steps}
    seen: set[int] = set()
    stack = [return_id]
    while stack:
        current = stack.pop()
        if current in seen:
            continue
        seen.add(current)
        step = by_id[current]
        if stop_at_returns and step.op == "return" and current != return_id:
            continue
        stack.extend(step.step_refs())
    return seen


@dataclass(frozen=True)
class SubPlan:
    """The backward-reachable subgraph of one return step.

    References to earlier return steps are kept as boundary references (the
    referenced steps belong to their own subplans); depends_on lists them.
    """

    return_id: int
    steps: tuple[PlanStep, ...]
    depends_on: tuple[int, ...]

    def step(self, step_id: int) -> PlanStep:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise KeyError(step_id)


def split_subplans(plan: PlanGraph) -> list[SubPlan]:
    """One subplan per return step, in return-id order.

    Steps reachable from a return without crossing another return belong to
    that return's subplan; a reference to an earlier return marks a
    cross-subplan dependency (a derived-table source).
    """
    subplans = []
    for return_id in plan.returns:
        reachable = _backward_reachable(plan, return_id, stop_at_returns=True)
        own = [s for s in plan.steps if s.id in reachable]
        boundary = tuple(
            sorted(s.id for s in own if s.op == "return" and s.id != return_id)
        )
        steps = tuple(s for s in own if not (s.op == "return" and s.id != return_id))
        subplans.append(SubPlan(return_id, steps, boundary))
    return subplans
