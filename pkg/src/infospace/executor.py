"""Run compiled queries against SQLite and apply client-side computations.

Connections are opened read-only; results are capped at ROW_CAP rows with a
truncation flag rather than an error. The PostAggregation attached to a
compiled query is applied here: row transforms (square root, boolean
verdicts) rewrite fetched rows in place, grouping reductions (median,
correlation, fallbacks) fold raw rows into one row per group, with groups in
first-appearance order. Null inputs are excluded from every reduction, the
same way SQL aggregate functions skip them.
"""

from __future__ import annotations

import math
import sqlite3
from dataclasses import dataclass
from pathlib import Path

from .compiler import ColumnInfo, CompiledQuery, PostAggregation
from .errors import ExecutionError

ROW_CAP = 10000


@dataclass(frozen=True)
class ExecutionResult:
    columns: tuple[ColumnInfo, ...]
    rows: tuple[tuple, ...]
    truncated: bool


def open_readonly(path: str | Path) -> sqlite3.Connection:
    """Open a SQLite database file read-only.

    Raises:
        ExecutionError: the file cannot be opened.
    """
    try:
        conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
        conn.execute("SELECT 1")
        return conn
    except sqlite3.Error as exc:
        raise ExecutionError(f"cannot open database {path}: {exc}", "", ()) from exc


def execute(conn: sqlite3.Connection, compiled: CompiledQuery) -> ExecutionResult:
    """Run one compiled query and return labeled rows.

    Raises:
        ExecutionError: the engine rejected the statement or parameters.
    """
    try:
        cursor = conn.execute(compiled.sql_text, compiled.parameters)
        fetched = cursor.fetchmany(ROW_CAP + 1)
    except sqlite3.Error as exc:
        raise ExecutionError(
            str(exc), compiled.sql_text, compiled.parameters
        ) from exc
    truncated = len(fetched) > ROW_CAP
    raw = [tuple(r) for r in fetched[:ROW_CAP]]

    post = compiled.post_aggregation
    if post is None:
        rows = raw
    elif post.kind == "sqrt_fallback":
        rows = [_apply_sqrt(row, post.inputs) for row in raw]
    elif post.kind == "boolean_compare":
        rows = [_apply_compare(row, post) for row in raw]
    else:
        rows = _reduce_groups(raw, post)
    return ExecutionResult(compiled.columns, tuple(rows), truncated)


def _apply_sqrt(row: tuple, cols: tuple[int, ...]) -> tuple:
    out = list(row)
    for idx in cols:
        value = out[idx]
        # Negative or non-numeric input yields null, matching the engine's
        # native function.
        if not _is_number(value) or value < 0:
            out[idx] = None
        else:
            out[idx] = math.sqrt(value)
    return tuple(out)


def _apply_compare(row: tuple, post: PostAggregation) -> tuple:
    values = []
    for kind, ref in post.operands:
        values.append(row[ref] if kind == "col" else ref)
    verdict = _compare(post.op, values)
    out = []
    for source in post.output_map:
        out.append(verdict if source is None else row[source])
    return tuple(out)


def _compare(op: str, values: list) -> bool | None:
    if any(v is None for v in values):
        return None
    a, b = values
    if op == "exact":
        return a == b
    if op == "greaterthan":
        return a > b
    if op == "greaterthan_eq":
        return a >= b
    if op == "lessthan":
        return a < b
    if op == "lessthan_eq":
        return a <= b
    if op == "contains":
        return str(b).lower() in str(a).lower()
    raise ExecutionError(f"unsupported comparison {op!r}", "", ())


def _reduce_groups(raw: list[tuple], post: PostAggregation) -> list[tuple]:
    groups: dict[tuple, list[tuple]] = {}
    order: list[tuple] = []
    for row in raw:
        key = tuple(row[i] for i in post.group_cols)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    # A global reduction over no rows still yields one row, like a bare
    # SQL aggregate; a grouped one yields none.
    if not order and not post.group_cols:
        order.append(())
        groups[()] = []

    out = []
    for key in order:
        members = groups[key]
        reduced = _reduce(post, members)
        first = members[0] if members else ()
        row = []
        for source in post.output_map:
            row.append(reduced if source is None else first[source])
        out.append(tuple(row))
    return out


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _reduce(post: PostAggregation, members: list[tuple]):
    if post.kind == "correlation":
        x_idx, y_idx = post.inputs
        # Non-numeric values (nulls, date text) drop the whole pair.
        pairs = [
            (row[x_idx], row[y_idx])
            for row in members
            if _is_number(row[x_idx]) and _is_number(row[y_idx])
        ]
        return pearson(pairs)
    (idx,) = post.inputs
    values = [row[idx] for row in members if row[idx] is not None]
    if post.kind == "median":
        return median(values)
    if post.kind == "stddev_fallback":
        return population_stddev([v for v in values if _is_number(v)])
    if post.kind == "string_agg_fallback":
        if not values:
            return None
        separator = post.separator if post.separator is not None else ", "
        return separator.join(str(v) for v in values)
    raise ExecutionError(f"unsupported computation {post.kind!r}", "", ())


def median(values: list):
    """Exact middle value; mean of the two middles for even counts.

    Values that cannot be averaged (date text) fall back to the lower middle.
    """
    if not values:
        return None
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2 == 1:
        return ordered[mid]
    low, high = ordered[mid - 1], ordered[mid]
    if _is_number(low) and _is_number(high):
        return (low + high) / 2
    return low


def pearson(pairs: list[tuple]) -> float | None:
    """Pearson correlation; null for fewer than two pairs or zero variance."""
    n = len(pairs)
    if n < 2:
        return None
    sum_x = sum(x for x, _ in pairs)
    sum_y = sum(y for _, y in pairs)
    sum_xy = sum(x * y for x, y in pairs)
    sum_xx = sum(x * x for x, _ in pairs)
    sum_yy = sum(y * y for _, y in pairs)
    denom_sq = (n * sum_xx - sum_x * sum_x) * (n * sum_yy - sum_y * sum_y)
    if denom_sq <= 0:
        return None
    return (n * sum_xy - sum_x * sum_y) / math.sqrt(denom_sq)


def population_stddev(values: list) -> float | None:
    if not values:
        return None
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
