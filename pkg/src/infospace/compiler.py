"""Lowering of checked plans to parameterized SQL plus client-side steps.

One query is produced per plan: the final return's subplan becomes the outer
query and earlier returns become derived tables in its FROM clause. Values a
dialect cannot compute natively (median, correlation, fallbacks for missing
functions, boolean verdicts) are described by a PostAggregation record that
the executor applies to the fetched rows.

All string and number literals are bound as ? parameters, in SQL text order.
The two exceptions are the LIMIT count and the sort direction, which are part
of the statement shape rather than data.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import CompileError
from .labeling import DomainLabeling, relationship_path
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
    _match_slots,
    check_plan,
    split_subplans,
)
from .taxonomy import (
    AttributeType,
    OperationCategory,
    OperationRegistry,
    OperationSignature,
    signature_of,
)


@dataclass(frozen=True)
class DialectCapabilities:
    """Which optional SQL functions the target engine provides.

    Anything switched off is computed client-side where possible.
    """

    group_concat: bool = True
    group_concat_separator: str = ", "
    sqrt: bool = False
    stddev: bool = False


SQLITE_CAPABILITIES = DialectCapabilities()


@dataclass(frozen=True)
class ColumnInfo:
    label: str
    types: frozenset[AttributeType]
    units: str | None = None


@dataclass(frozen=True)
class PostAggregation:
    """A computation the executor applies after fetching rows.

    kind:
        median / correlation / stddev_fallback / string_agg_fallback
            Grouping reductions over raw rows. ``inputs`` are the SQL column
            indices of the raw operands, ``group_cols`` the SQL columns that
            key the groups, and ``output_map`` gives, for every output column,
            the SQL column it copies from (None marks the reduced column).
        sqrt_fallback
            Row transform: square root applied in place to SQL column
            ``inputs[0]``.
        boolean_compare
            Row transform: ``op`` applied to ``operands``, each ("col", sql
            index) or ("lit", value); ``output_map`` places the verdict.
    """

    kind: str
    inputs: tuple[int, ...] = ()
    group_cols: tuple[int, ...] = ()
    output_map: tuple[int | None, ...] | None = None
    separator: str | None = None
    op: str | None = None
    operands: tuple[tuple[str, object], ...] = ()


@dataclass(frozen=True)
class ResolvedJoin:
    from_table: str
    to_table: str
    on: tuple[tuple[str, str], ...]  # (from column, to column) pairs


@dataclass(frozen=True)
class JoinPlan:
    root_table: str
    joins: tuple[ResolvedJoin, ...]


@dataclass(frozen=True)
class CompiledQuery:
    sql_text: str
    parameters: tuple
    columns: tuple[ColumnInfo, ...]
    post_aggregation: PostAggregation | None = None


_NATIVE_AGGREGATES = {
    "count": "COUNT({0})",
    "count_unique": "COUNT(DISTINCT {0})",
    "sum": "SUM({0})",
    "average": "AVG({0})",
    "max": "MAX({0})",
    "min": "MIN({0})",
    "get_one": "MIN({0})",
}

_REDUCTION_AGGREGATES = frozenset(
    {"median", "correlation", "standard_deviation", "string_aggregation"}
)

_COMPARISON_SQL = {
    "exact": "=",
    "greaterthan": ">",
    "greaterthan_eq": ">=",
    "lessthan": "<",
    "lessthan_eq": "<=",
}

_INFIX_ARITHMETIC = {"add": "+", "subtract": "-", "multiply": "*", "divide": "/"}

# Aggregations whose result is still in the input's units.
_UNITS_PRESERVING = frozenset(
    {"average", "sum", "max", "min", "median", "get_one", "standard_deviation"}
)


def quote_identifier(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def qualified(table: str, column: str) -> str:
    return f"{quote_identifier(table)}.{quote_identifier(column)}"


def escape_like_pattern(value: str) -> str:
    """Escape LIKE wildcards so ``value`` matches literally (ESCAPE '\\')."""
    out = value.replace("\\", "\\\\").replace("%", "\\%").replace("_", "\\_")
    return out


def lower_operation(
    op: str, operands: Sequence[str], capabilities: DialectCapabilities = SQLITE_CAPABILITIES
) -> str:
    """SQL text for one native operation over already-rendered operands.

    Raises:
        CompileError: the operation has no native form on this dialect.
    """
    if op in _NATIVE_AGGREGATES:
        return _NATIVE_AGGREGATES[op].format(operands[0])
    if op == "standard_deviation":
        if not capabilities.stddev:
            raise CompileError("standard_deviation has no native form on this dialect")
        return f"STDDEV({operands[0]})"
    if op == "string_aggregation":
        if not capabilities.group_concat:
            raise CompileError("string_aggregation has no native form on this dialect")
        separator = capabilities.group_concat_separator.replace("'", "''")
        return f"GROUP_CONCAT({operands[0]}, '{separator}')"
    if op == "square_root":
        if not capabilities.sqrt:
            raise CompileError("square_root has no native form on this dialect")
        return f"SQRT({operands[0]})"
    if op in _INFIX_ARITHMETIC:
        parts = list(operands)
        if op == "divide":
            parts[0] = f"CAST({parts[0]} AS REAL)"
        return "(" + f" {_INFIX_ARITHMETIC[op]} ".join(parts) + ")"
    if op == "percent_change":
        start, end = operands
        return f"(100.0 * ({end} - {start}) / {start})"
    if op in _COMPARISON_SQL:
        return f"{operands[0]} {_COMPARISON_SQL[op]} {operands[1]}"
    if op == "contains":
        return f"LOWER({operands[0]}) LIKE {operands[1]} ESCAPE '\\'"
    if op == "and":
        return "(" + " AND ".join(operands) + ")"
    if op == "or":
        return "(" + " OR ".join(operands) + ")"
    if op == "not":
        return f"NOT ({operands[0]})"
    raise CompileError(f"operation {op!r} has no SQL lowering")


@dataclass(frozen=True)
class _Expr:
    text: str
    params: tuple = ()
    contains_aggregate: bool = False
    units: str | None = None


@dataclass
class _Reduction:
    kind: str
    input_steps: tuple[int, ...]
    separator: str | None = None


def resolve_joins(
    labeling: DomainLabeling,
    entity_order: Sequence[str],
    used_attributes: Sequence[tuple[str, str]],
) -> JoinPlan:
    """Plan the FROM clause for the given entities and attribute usages.

    The first entity's primary table is the root. Attribute viaJoins chains
    come first (entities in retrieval order, attributes in first-use order),
    then the shortest relationship path between every pair of entities. A
    join is skipped once its target table is already present, so each table
    appears at most once.
    """
    if not entity_order:
        raise CompileError("nothing to select from: no entity is retrieved")
    root = labeling.entity(entity_order[0]).primary_table
    tables = {root}
    joins: list[ResolvedJoin] = []

    def walk(start_table: str, join_names: Sequence[str]) -> None:
        current = start_table
        for name in join_names:
            jd = labeling.join(name)
            if jd is None:
                raise CompileError(f"labeling references unknown join {name!r}")
            if jd.from_table == current:
                target, on = jd.to_table, jd.on
            elif jd.to_table == current:
                target = jd.from_table
                on = tuple((b, a) for a, b in jd.on)
            else:
                raise CompileError(
                    f"join {name!r} does not touch table {current!r}"
                )
            if target not in tables:
                tables.add(target)
                joins.append(ResolvedJoin(current, target, on))
            current = target

    for entity_name in entity_order:
        entity = labeling.entity(entity_name)
        for used_entity, attr_name in used_attributes:
            if used_entity != entity_name:
                continue
            attr = entity.attribute(attr_name)
            if attr is not None and attr.via_joins:
                walk(entity.primary_table, attr.via_joins)

    for a, b in itertools.combinations(entity_order, 2):
        current_entity = a
        current_table = labeling.entity(a).primary_table
        for rel in relationship_path(labeling, a, b):
            forward = rel.from_entity == current_entity
            chain = rel.join_chain if forward else tuple(reversed(rel.join_chain))
            walk(current_table, chain)
            current_entity = rel.other_entity(current_entity)
            current_table = labeling.entity(current_entity).primary_table

    return JoinPlan(root, tuple(joins))


class _SubplanCompiler:
    def __init__(
        self,
        subplan: SubPlan,
        typed: Mapping[int, TypedValue],
        by_id: Mapping[int, PlanStep],
        registry: OperationRegistry,
        labeling: DomainLabeling,
        capabilities: DialectCapabilities,
        dependencies: Mapping[int, CompiledQuery],
    ):
        self.subplan = subplan
        self.typed = typed
        self.by_id = by_id
        self.registry = registry
        self.labeling = labeling
        self.caps = capabilities
        self.deps = dependencies
        self._memo: dict[int, _Expr] = {}
        self._entity_order: list[str] = []
        self._used_attributes: list[tuple[str, str]] = []
        self._pseudo_order: list[int] = []
        self._has_native_aggregate = False

    def _slots(self, step: PlanStep, sig: OperationSignature) -> list[list[int]]:
        arg_types = [
            self.typed[a.id].types if isinstance(a, StepRef) else _literal_arg_types(a)
            for a in step.args
        ]
        return _match_slots(step, sig, arg_types)

    def _note_attribute(self, entity: str, attr: str) -> None:
        key = (entity, attr)
        if key not in self._used_attributes:
            self._used_attributes.append(key)

    def _note_entity(self, name: str) -> None:
        if name not in self._entity_order:
            self._entity_order.append(name)

    def _lower_literal(self, arg: PlanArg) -> _Expr:
        if isinstance(arg, StringLit):
            return _Expr("?", (arg.value,))
        assert isinstance(arg, NumberLit)
        return _Expr("?", (arg.value,))

    def _lower_arg(self, arg: PlanArg) -> _Expr:
        if isinstance(arg, StepRef):
            return self._lower(arg.id)
        return self._lower_literal(arg)

    def _lower(self, step_id: int) -> _Expr:
        if step_id in self._memo:
            return self._memo[step_id]
        expr = self._lower_step(self.by_id[step_id])
        self._memo[step_id] = expr
        return expr

    def _lower_step(self, step: PlanStep) -> _Expr:
        op = step.op
        value = self.typed[step.id]

        if op == "retrieve_attribute":
            entity_name, attr_name = value.attribute_ref
            if entity_name.startswith("sub_"):
                rid = int(entity_name[len("sub_") :])
                if rid not in self._pseudo_order:
                    self._pseudo_order.append(rid)
                inner = self.deps[rid]
                units = next(
                    (c.units for c in inner.columns if c.label == attr_name), None
                )
                return _Expr(qualified(entity_name, attr_name), units=units)
            entity = self.labeling.entity(entity_name)
            attr = entity.attribute(attr_name)
            self._note_entity(entity_name)
            self._note_attribute(entity_name, attr_name)
            return _Expr(
                qualified(attr.source_table, attr.source_column), units=attr.units
            )

        sig = signature_of(self.registry, op)

        if sig.category is OperationCategory.AGGREGATION:
            if op in _REDUCTION_AGGREGATES and not self._is_native(op):
                raise CompileError(
                    f"{op} requires client-side computation and can only appear "
                    "as a directly collected result column on this dialect",
                    step.id,
                )
            slots = self._slots(step, sig)
            operands = [self._lower_arg(step.args[i]) for i in slots[0]]
            if any(e.contains_aggregate for e in operands):
                raise CompileError("nested aggregate functions are not supported", step.id)
            text = lower_operation(op, [e.text for e in operands], self.caps)
            params = tuple(p for e in operands for p in e.params)
            units = operands[0].units if op in _UNITS_PRESERVING else None
            self._has_native_aggregate = True
            return _Expr(text, params, contains_aggregate=True, units=units)

        if sig.category is OperationCategory.ARITHMETIC:
            if op == "square_root" and not self.caps.sqrt:
                raise CompileError(
                    "square_root requires client-side computation and can only "
                    "appear as a directly collected result column on this dialect",
                    step.id,
                )
            operands = [self._lower_arg(a) for a in step.args]
            if op == "divide":
                for arg in step.args[1:]:
                    if isinstance(arg, NumberLit) and arg.value == 0:
                        raise CompileError("division by a constant zero", step.id)
            text = lower_operation(op, [e.text for e in operands], self.caps)
            params = self._params_for(op, operands)
            units = _arithmetic_units(op, step.args, operands)
            return _Expr(
                text,
                params,
                contains_aggregate=any(e.contains_aggregate for e in operands),
                units=units,
            )

        if op in _COMPARISON_SQL or op == "contains":
            operands = [self._lower_arg(a) for a in step.args]
            if op == "contains":
                needle = step.args[1]
                if not isinstance(needle, StringLit):
                    raise CompileError("contains expects a string literal", step.id)
                pattern = "%" + escape_like_pattern(needle.value.lower()) + "%"
                operands[1] = _Expr("?", (pattern,))
            text = lower_operation(op, [e.text for e in operands], self.caps)
            params = tuple(p for e in operands for p in e.params)
            return _Expr(
                text,
                params,
                contains_aggregate=any(e.contains_aggregate for e in operands),
            )

        if op in CONNECTIVE_OPS:
            operands = [self._lower_arg(a) for a in step.args]
            text = lower_operation(op, [e.text for e in operands], self.caps)
            params = tuple(p for e in operands for p in e.params)
            return _Expr(
                text,
                params,
                contains_aggregate=any(e.contains_aggregate for e in operands),
            )

        raise CompileError(f"operation {op!r} cannot be used as a value here", step.id)

    def _params_for(self, op: str, operands: list[_Expr]) -> tuple:
        # percent_change splices its first operand twice; repeat its params in
        # text order so positional binding stays aligned.
        if op == "percent_change":
            start, end = operands
            return tuple(end.params) + tuple(start.params) + tuple(start.params)
        return tuple(p for e in operands for p in e.params)

    def _is_native(self, op: str) -> bool:
        if op == "standard_deviation":
            return self.caps.stddev
        if op == "string_aggregation":
            return self.caps.group_concat
        return op in _NATIVE_AGGREGATES

    def _reduction_for(self, op: str) -> _Reduction | None:
        if op == "median":
            return _Reduction("median", ())
        if op == "correlation":
            return _Reduction("correlation", ())
        if op == "standard_deviation" and not self.caps.stddev:
            return _Reduction("stddev_fallback", ())
        if op == "string_aggregation" and not self.caps.group_concat:
            return _Reduction(
                "string_agg_fallback", (), separator=self.caps.group_concat_separator
            )
        return None

    def compile(self) -> CompiledQuery:
        return_step = self.by_id[self.subplan.return_id]
        collect_step = self.by_id[return_step.args[0].id]
        filter_step: PlanStep | None = None
        sort_step: PlanStep | None = None
        limit_step: PlanStep | None = None
        for arg in return_step.args[1:]:
            extra = self.by_id[arg.id]
            extra_types = self.typed[arg.id].types
            if AttributeType.FILTER in extra_types:
                filter_step = extra
            elif AttributeType.SORT in extra_types:
                sort_step = extra
            elif AttributeType.LIMIT in extra_types:
                limit_step = extra

        labels = self.typed[collect_step.id].collected_labels
        select_raw: list[str] = []  # expression text per SQL column
        select_alias: list[str | None] = []
        select_params: list[tuple] = []
        out_columns: list[ColumnInfo] = []
        out_source: list[int | None] = []
        reduction: tuple[str, tuple[int, ...], str | None] | None = None
        boolean: tuple[str, tuple[tuple[str, object], ...]] | None = None
        sqrt_cols: list[int] = []

        def add_sql_column(expr: _Expr, alias: str | None) -> int:
            select_raw.append(expr.text)
            select_alias.append(alias)
            select_params.append(tuple(expr.params))
            return len(select_raw) - 1

        def note_post_aggregation(kind: str) -> None:
            nonlocal post_agg_count
            post_agg_count += 1
            if post_agg_count > 1:
                raise CompileError(
                    "only one client-side computation is supported per query; "
                    f"{kind} does not fit"
                )

        post_agg_count = 0

        # Honor retrieval order for the join root even when the first entity's
        # attributes are only used later (in a filter, say).
        for step in self.subplan.steps:
            if step.op == "retrieve_entity":
                self._note_entity(self.typed[step.id].entity_context)

        for position, arg in enumerate(collect_step.args):
            label = labels[position]
            item = self.by_id[arg.id]
            item_value = self.typed[arg.id]
            sig = signature_of(self.registry, item.op)

            if item.op in COMPARISON_OPS and AttributeType.ATTRIBUTE in item_value.types:
                # A collected verdict: select the operands, compare client-side.
                note_post_aggregation("boolean_compare")
                operands: list[tuple[str, object]] = []
                for operand in item.args:
                    if isinstance(operand, StepRef):
                        expr = self._lower(operand.id)
                        idx = add_sql_column(expr, None)
                        operands.append(("col", idx))
                    else:
                        operands.append(("lit", operand.value))
                boolean = (item.op, tuple(operands))
                out_columns.append(ColumnInfo(label, item_value.types, None))
                out_source.append(None)
                continue

            wanted = (
                self._reduction_for(item.op)
                if sig.category is OperationCategory.AGGREGATION
                else None
            )
            if wanted is not None:
                note_post_aggregation(wanted.kind)
                slots = self._slots(item, sig)
                input_idxs = []
                units = None
                for slot_pos in slots[0]:
                    expr = self._lower_arg(item.args[slot_pos])
                    if expr.contains_aggregate:
                        raise CompileError(
                            "nested aggregate functions are not supported", item.id
                        )
                    input_idxs.append(add_sql_column(expr, None))
                    units = expr.units
                column_units = units if item.op in _UNITS_PRESERVING else None
                reduction = (wanted.kind, tuple(input_idxs), wanted.separator)
                out_columns.append(ColumnInfo(label, item_value.types, column_units))
                out_source.append(None)
                continue

            if item.op == "square_root" and not self.caps.sqrt:
                note_post_aggregation("sqrt_fallback")
                inner = self._lower_arg(item.args[0])
                if inner.contains_aggregate:
                    self._has_native_aggregate = True
                idx = add_sql_column(inner, label)
                sqrt_cols.append(idx)
                out_columns.append(ColumnInfo(label, item_value.types, None))
                out_source.append(idx)
                continue

            expr = self._lower(arg.id)
            idx = add_sql_column(expr, label)
            out_columns.append(ColumnInfo(label, item_value.types, expr.units))
            out_source.append(idx)

        # Grouping: the groupby steps that some aggregation takes as input.
        group_ids: list[int] = []
        for step in self.subplan.steps:
            if step.op == "groupby":
                continue
            for a in step.args:
                if (
                    isinstance(a, StepRef)
                    and self.by_id[a.id].op == "groupby"
                    and a.id not in group_ids
                ):
                    group_ids.append(a.id)
        group_exprs: list[_Expr] = []
        seen_group_texts: set[str] = set()
        for gid in group_ids:
            for garg in self.by_id[gid].args:
                expr = self._lower(garg.id)
                if expr.text not in seen_group_texts:
                    seen_group_texts.add(expr.text)
                    group_exprs.append(expr)

        if reduction is not None and self._has_native_aggregate:
            raise CompileError(
                "median, correlation, and client-side fallbacks cannot be mixed "
                "with native aggregate functions in one query"
            )

        # Filters.
        where_parts: list[_Expr] = []
        having_parts: list[_Expr] = []
        if filter_step is not None:
            conjuncts = (
                [self.by_id[a.id] for a in filter_step.args]
                if filter_step.op == "and"
                else [filter_step]
            )
            for conjunct in conjuncts:
                expr = self._lower(conjunct.id)
                if expr.contains_aggregate:
                    having_parts.append(expr)
                else:
                    where_parts.append(expr)
        if having_parts and not group_exprs:
            raise CompileError(
                "a filter over aggregated values requires grouping"
            )

        # Sorting.
        order_parts: list[_Expr] = []
        direction = "ASC"
        if sort_step is not None:
            direction = sort_step.args[-1].value.upper()
            for sarg in sort_step.args[:-1]:
                order_parts.append(self._lower(sarg.id))

        # Plain columns selected next to native aggregates must be grouped,
        # or the engine silently picks them from an arbitrary row.
        if self._has_native_aggregate:
            grouped_texts = {e.text for e in group_exprs}
            for idx, source in enumerate(out_source):
                if source is None or source in sqrt_cols:
                    continue
                item_expr = self._memo.get(collect_step.args[idx].id)
                if (
                    item_expr is not None
                    and not item_expr.contains_aggregate
                    and item_expr.text not in grouped_texts
                ):
                    raise CompileError(
                        f"column {out_columns[idx].label!r} is selected alongside "
                        "aggregates but not grouped"
                    )

        # FROM clause.
        if self._pseudo_order and self._entity_order:
            raise CompileError(
                "a query cannot mix retrieved entities with prior results"
            )
        from_params: list = []
        if self._pseudo_order:
            sources = []
            for rid in self._pseudo_order:
                inner = self.deps[rid]
                if inner.post_aggregation is not None:
                    raise CompileError(
                        "a result requiring client-side computation cannot be "
                        "used as input to another query"
                    )
                flat = " ".join(inner.sql_text.splitlines())
                sources.append(f"({flat}) AS {quote_identifier(f'sub_{rid}')}")
                from_params.extend(inner.parameters)
            from_clause = "FROM " + ", ".join(sources)
        else:
            join_plan = resolve_joins(
                self.labeling, self._entity_order, self._used_attributes
            )
            lines = [f"FROM {quote_identifier(join_plan.root_table)}"]
            for join in join_plan.joins:
                condition = " AND ".join(
                    f"{qualified(join.from_table, a)} = {qualified(join.to_table, b)}"
                    for a, b in join.on
                )
                lines.append(f"JOIN {quote_identifier(join.to_table)} ON {condition}")
            from_clause = "\n".join(lines)

        # Reductions need raw rows ordered by their group keys when no explicit
        # sort is given, so client-side grouping is deterministic.
        if reduction is not None and sort_step is None and group_exprs:
            order_parts = list(group_exprs)
            direction = "ASC"

        select_items = []
        for raw, alias in zip(select_raw, select_alias):
            select_items.append(
                f"{raw} AS {quote_identifier(alias)}" if alias is not None else raw
            )
        # A reduction reads raw rows: its group keys must be fetched too.
        group_cols: tuple[int, ...] = ()
        if reduction is not None:
            raw_by_text = {raw: i for i, raw in enumerate(select_raw)}
            key_idxs = []
            for expr in group_exprs:
                if expr.text in raw_by_text:
                    key_idxs.append(raw_by_text[expr.text])
                else:
                    idx = add_sql_column(expr, None)
                    select_items.append(expr.text)
                    key_idxs.append(idx)
            group_cols = tuple(key_idxs)

        lines = ["SELECT " + ", ".join(select_items)]
        params: list = []
        for p in select_params:
            params.extend(p)
        lines.append(from_clause)
        params.extend(from_params)
        if where_parts:
            lines.append("WHERE " + " AND ".join(e.text for e in where_parts))
            for e in where_parts:
                params.extend(e.params)
        if group_exprs and reduction is None:
            lines.append("GROUP BY " + ", ".join(e.text for e in group_exprs))
        if having_parts:
            lines.append("HAVING " + " AND ".join(e.text for e in having_parts))
            for e in having_parts:
                params.extend(e.params)
        if order_parts:
            rendered = ", ".join(f"{e.text} {direction}" for e in order_parts)
            lines.append("ORDER BY " + rendered)
            for e in order_parts:
                params.extend(e.params)
        if limit_step is not None:
            lines.append(f"LIMIT {int(limit_step.args[0].value)}")

        post = None
        if boolean is not None:
            post = PostAggregation(
                "boolean_compare",
                op=boolean[0],
                operands=boolean[1],
                output_map=tuple(out_source),
            )
        elif reduction is not None:
            kind, inputs, separator = reduction
            post = PostAggregation(
                kind,
                inputs=inputs,
                group_cols=group_cols,
                output_map=tuple(out_source),
                separator=separator,
            )
        elif sqrt_cols:
            post = PostAggregation("sqrt_fallback", inputs=tuple(sqrt_cols))

        return CompiledQuery(
            "\n".join(lines), tuple(params), tuple(out_columns), post
        )


def _literal_arg_types(arg: PlanArg) -> frozenset[AttributeType]:
    if isinstance(arg, StringLit):
        return frozenset({AttributeType.STRING})
    return frozenset({AttributeType.ARITHMETIC})


def _arithmetic_units(
    op: str, args: tuple[PlanArg, ...], operands: list[_Expr]
) -> str | None:
    if op not in ("add", "subtract"):
        return None
    units = {
        e.units
        for e, a in zip(operands, args)
        if isinstance(a, StepRef)
    }
    if len(units) == 1:
        return next(iter(units))
    return None


def compile_subplan(
    subplan: SubPlan,
    typed: Mapping[int, TypedValue],
    by_id: Mapping[int, PlanStep],
    registry: OperationRegistry,
    labeling: DomainLabeling,
    capabilities: DialectCapabilities = SQLITE_CAPABILITIES,
    dependencies: Mapping[int, CompiledQuery] | None = None,
) -> CompiledQuery:
    """Compile a single subplan; dependencies map return ids to their queries."""
    compiler = _SubplanCompiler(
        subplan, typed, by_id, registry, labeling, capabilities, dependencies or {}
    )
    return compiler.compile()


def compile_plan(
    plan: PlanGraph,
    registry: OperationRegistry,
    labeling: DomainLabeling,
    capabilities: DialectCapabilities = SQLITE_CAPABILITIES,
) -> CompiledQuery:
    """Check and lower a whole plan to one query for its final return step.

    Raises:
        PlanCheckError: the plan does not type-check.
        CompileError: the plan cannot be expressed on this dialect.
    """
    typed = check_plan(plan, registry, labeling)
    subplans = split_subplans(plan)
    if not subplans:
        raise CompileError("plan has no return step; nothing to compile")
    by_return = {sp.return_id: sp for sp in subplans}
    by_id = {s.id: s for s in plan.steps}
    memo: dict[int, CompiledQuery] = {}

    def build(return_id: int) -> CompiledQuery:
        if return_id in memo:
            return memo[return_id]
        sp = by_return[return_id]
        deps = {rid: build(rid) for rid in sp.depends_on}
        memo[return_id] = compile_subplan(
            sp, typed, by_id, registry, labeling, capabilities, deps
        )
        return memo[return_id]

    return build(subplans[-1].return_id)
