"""Attribute-type vocabulary and the registry of analytic operation signatures.

The registry ships with a built-in catalogue of 33 operations (11 aggregation,
9 boolean, 6 arithmetic, 5 data operations, 2 retrieval) and can be extended or
overridden by operation-definition documents; see `load_registry`.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Sequence

from .errors import TaxonomyError, UnknownOperationError


class AttributeType(Enum):
    """Semantic classification of a value, base or derived.

    Base kinds annotate labeling attributes (columns); derived kinds only
    appear on operation slots and on values produced by operations.
    """

    ARITHMETIC = "Arithmetic"
    CATEGORICAL = "Categorical"
    DATETIME = "Datetime"
    DOCUMENT = "Document"
    IDENTIFIER = "Identifier"
    METRIC = "Metric"
    ENTITY = "Entity"
    ATTRIBUTE = "Attribute"
    ATTRIBUTE_COLLECTION = "AttributeCollection"
    GROUPING = "Grouping"
    FILTER = "Filter"
    SORT = "Sort"
    LIMIT = "Limit"
    STRING = "String"

    def __repr__(self) -> str:  # keep error messages compact
        return self.value

    @property
    def is_base(self) -> bool:
        return self in BASE_TYPES

    @classmethod
    def from_name(cls, name: str) -> "AttributeType":
        """Resolve a type from its name, case-insensitively.

        Raises:
            TaxonomyError: when the name matches no attribute type.
        """
        try:
            return _TYPES_BY_NAME[name.lower()]
        except KeyError:
            raise TaxonomyError(f"unknown attribute type {name!r}") from None


_TYPES_BY_NAME = {t.value.lower(): t for t in AttributeType}

BASE_TYPES = frozenset(
    {
        AttributeType.ARITHMETIC,
        AttributeType.CATEGORICAL,
        AttributeType.DATETIME,
        AttributeType.DOCUMENT,
        AttributeType.IDENTIFIER,
        AttributeType.METRIC,
    }
)

DERIVED_TYPES = frozenset(AttributeType) - BASE_TYPES

_ARITY_FORMS = ("1", "2", ">=1", ">=2", "<=1")


@dataclass(frozen=True)
class AritySpec:
    """How many arguments a slot takes: exactly(n), at_least(n), or at_most(n).

    at_most(1) marks an optional slot; the other forms are mandatory.
    """

    kind: str
    n: int

    def __post_init__(self) -> None:
        if self.kind not in ("exactly", "at_least", "at_most"):
            raise TaxonomyError(f"bad arity kind {self.kind!r}")
        if self.n < 1:
            raise TaxonomyError("arity bound must be a positive integer")

    @classmethod
    def exactly(cls, n: int) -> "AritySpec":
        return cls("exactly", n)

    @classmethod
    def at_least(cls, n: int) -> "AritySpec":
        return cls("at_least", n)

    @classmethod
    def at_most(cls, n: int) -> "AritySpec":
        return cls("at_most", n)

    @classmethod
    def parse(cls, text: str) -> "AritySpec":
        """Parse an arity surface form; only "1", "2", ">=1", ">=2", "<=1" are accepted."""
        text = text.strip()
        if text not in _ARITY_FORMS:
            raise TaxonomyError(
                f"malformed arity {text!r}; accepted forms: {', '.join(_ARITY_FORMS)}"
            )
        if text.startswith(">="):
            return cls.at_least(int(text[2:]))
        if text.startswith("<="):
            return cls.at_most(int(text[2:]))
        return cls.exactly(int(text))

    def render(self) -> str:
        if self.kind == "at_least":
            return f">={self.n}"
        if self.kind == "at_most":
            return f"<={self.n}"
        return str(self.n)

    @property
    def is_optional(self) -> bool:
        return self.kind == "at_most"

    @property
    def min_count(self) -> int:
        return 0 if self.kind == "at_most" else self.n

    @property
    def max_count(self) -> int | None:
        """Upper bound on accepted arguments, None when unbounded."""
        return None if self.kind == "at_least" else self.n

    def allows(self, count: int) -> bool:
        if count < self.min_count:
            return False
        return self.max_count is None or count <= self.max_count


@dataclass(frozen=True)
class Slot:
    """One typed argument position group of an operation signature."""

    arity: AritySpec
    types: frozenset[AttributeType]

    def __post_init__(self) -> None:
        if not self.types:
            raise TaxonomyError("slot type set must be non-empty")


class OperationCategory(Enum):
    AGGREGATION = "Aggregation"
    BOOLEAN = "Boolean"
    ARITHMETIC = "Arithmetic"
    DATA_OPERATION = "DataOperation"
    RETRIEVAL = "Retrieval"

    @classmethod
    def from_name(cls, name: str) -> "OperationCategory":
        for member in cls:
            if member.value.lower() == name.strip().lower().replace(" ", ""):
                return member
        raise TaxonomyError(f"unknown operation category {name!r}")


_PLACEHOLDER = re.compile(r"\{(\d+)\}")


@dataclass(frozen=True)
class OperationSignature:
    """Name, category, typed/arity-constrained slots, and language template.

    Args:
        name: lowercase canonical operation name.
        category: one of the five operation categories.
        input_slots: ordered argument slots.
        output_slots: ordered result slots.
        language_template: phrase pattern with positional placeholders {0}, {1}, ...
    """

    name: str
    category: OperationCategory
    input_slots: tuple[Slot, ...]
    output_slots: tuple[Slot, ...]
    language_template: str

    def __post_init__(self) -> None:
        if not self.name or self.name != self.name.lower():
            raise TaxonomyError(f"operation name must be lowercase: {self.name!r}")
        indices = sorted({int(m) for m in _PLACEHOLDER.findall(self.language_template)})
        if indices:
            if indices != list(range(len(indices))):
                raise TaxonomyError(
                    f"{self.name}: template placeholders must be dense from 0, got {indices}"
                )
            if indices[-1] > len(self.input_slots):
                raise TaxonomyError(
                    f"{self.name}: placeholder index {indices[-1]} out of range "
                    f"for {len(self.input_slots)} input slot(s)"
                )

    @property
    def mandatory_slots(self) -> tuple[Slot, ...]:
        return tuple(s for s in self.input_slots if not s.arity.is_optional)

    @property
    def output_types(self) -> frozenset[AttributeType]:
        return self.output_slots[0].types


@dataclass(frozen=True, eq=False)
class OperationRegistry:
    """Immutable name → OperationSignature map."""

    operations: Mapping[str, OperationSignature]

    def __post_init__(self) -> None:
        object.__setattr__(self, "operations", MappingProxyType(dict(self.operations)))

    def __contains__(self, name: str) -> bool:
        return name.lower() in self.operations

    def __iter__(self) -> Iterable[str]:
        return iter(self.operations)

    def __len__(self) -> int:
        return len(self.operations)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OperationRegistry):
            return NotImplemented
        return dict(self.operations) == dict(other.operations)

    def names(self) -> list[str]:
        return sorted(self.operations)

    def by_category(self, category: OperationCategory) -> list[OperationSignature]:
        return [s for _, s in sorted(self.operations.items()) if s.category == category]


def types_accept(
    slot_types: frozenset[AttributeType] | set[AttributeType],
    value_types: frozenset[AttributeType] | set[AttributeType],
) -> bool:
    """True iff the value carries at least one type the slot accepts.

    Acceptance is non-empty set intersection, not subset: an attribute typed
    {Arithmetic, Metric} fits a slot accepting {Arithmetic}. Both sets are
    expected to be non-empty.
    """
    return bool(frozenset(slot_types) & frozenset(value_types))


def signature_of(registry: OperationRegistry, name: str) -> OperationSignature:
    """Look up an operation by name, case-insensitively.

    Raises:
        UnknownOperationError: naming the closest lexical match, when any.
    """
    key = name.lower()
    sig = registry.operations.get(key)
    if sig is None:
        close = difflib.get_close_matches(key, registry.operations.keys(), n=1, cutoff=0.6)
        raise UnknownOperationError(name, close[0] if close else None)
    return sig


def _slot(arity: str, *types: AttributeType) -> Slot:
    return Slot(AritySpec.parse(arity), frozenset(types))


_AR = AttributeType.ARITHMETIC
_CAT = AttributeType.CATEGORICAL
_DT = AttributeType.DATETIME
_ID = AttributeType.IDENTIFIER
_ME = AttributeType.METRIC
_ATTR = AttributeType.ATTRIBUTE
_STR = AttributeType.STRING
_FIL = AttributeType.FILTER

_GROUP_SLOT = _slot("<=1", AttributeType.GROUPING)


def _agg(name: str, arity: str, in_types: tuple, out_types: tuple, template: str) -> OperationSignature:
    return OperationSignature(
        name=name,
        category=OperationCategory.AGGREGATION,
        input_slots=(_slot(arity, *in_types), _GROUP_SLOT),
        output_slots=(_slot("1", *out_types),),
        language_template=template,
    )


def _boolean(name: str, slots: tuple[Slot, ...], template: str) -> OperationSignature:
    return OperationSignature(
        name=name,
        category=OperationCategory.BOOLEAN,
        input_slots=slots,
        output_slots=(_slot("1", _FIL),),
        language_template=template,
    )


def _arith(name: str, arity: str, in_types: tuple, out_types: tuple, template: str) -> OperationSignature:
    return OperationSignature(
        name=name,
        category=OperationCategory.ARITHMETIC,
        input_slots=(_slot(arity, *in_types),),
        output_slots=(_slot("1", *out_types),),
        language_template=template,
    )


_BUILTIN_SIGNATURES: tuple[OperationSignature, ...] = (
    # Aggregations: one value slot plus an optional grouping slot.
    _agg("average", "1", (_AR, _ME), (_AR, _ME), "average {0}"),
    _agg("correlation", "2", (_AR, _ME, _DT), (_AR, _ME, _DT), "correlation between {0} and {1}"),
    _agg("count", "1", (_AR, _ME), (_AR, _ME), "count of {0}"),
    _agg("count_unique", "1", (_AR, _ME), (_AR, _ME), "count of unique {0}"),
    _agg("get_one", "1", (_AR, _ME, _DT), (_AR, _ME, _DT), "one value of {0}"),
    _agg("max", "1", (_AR, _ME, _DT), (_AR, _ME, _DT), "max {0}"),
    _agg("median", "1", (_AR, _ME, _DT), (_AR, _ME, _DT), "median {0}"),
    _agg("min", "1", (_AR, _ME, _DT), (_AR, _ME, _DT), "min {0}"),
    _agg("standard_deviation", "1", (_AR, _ME), (_AR, _ME), "standard deviation of {0}"),
    _agg("string_aggregation", "1", (_AR, _ME, _DT), (_AR, _ME, _DT), "list of {0}"),
    _agg("sum", "1", (_AR,), (_AR, _ME), "sum of {0}"),
    # Boolean operations, all producing a Filter.
    _boolean("and", (_slot(">=1", _FIL),), "{0} and {1}"),
    _boolean("contains", (_slot("1", _ATTR), _slot("1", _STR)), "{0} containing {1}"),
    _boolean("exact", (_slot("2", _AR, _ME, _CAT, _STR, _DT, _ID),), "{0} equal to {1}"),
    _boolean("greaterthan", (_slot("2", _AR, _ME, _DT),), "{0} greater than {1}"),
    _boolean("greaterthan_eq", (_slot("2", _AR, _ME, _DT),), "{0} greater than or equal to {1}"),
    _boolean("lessthan", (_slot("2", _AR, _ME, _DT),), "{0} less than {1}"),
    _boolean("lessthan_eq", (_slot("2", _AR, _ME, _DT),), "{0} less than or equal to {1}"),
    _boolean("not", (_slot("1", _FIL),), "not {0}"),
    _boolean("or", (_slot(">=1", _FIL),), "{0} or {1}"),
    # Arithmetic.
    _arith("add", ">=2", (_AR, _ME), (_AR, _ME, _DT), "{0} added to {1}"),
    _arith("divide", ">=2", (_AR, _ME), (_AR, _ME, _DT), "{0} divided by {1}"),
    _arith("multiply", ">=2", (_AR, _ME), (_AR, _ME, _DT), "{0} multiplied by {1}"),
    _arith("percent_change", "2", (_AR, _ME), (_AR, _ME), "percent change from {0} to {1}"),
    _arith("square_root", "1", (_AR, _ME, _DT), (_AR, _ME, _DT), "square root of {0}"),
    _arith("subtract", ">=2", (_AR, _ME, _DT), (_AR, _ME, _DT), "{0} minus {1}"),
    # Data operations.
    OperationSignature(
        "collect",
        OperationCategory.DATA_OPERATION,
        (_slot(">=1", _ATTR),),
        (_slot("1", AttributeType.ATTRIBUTE_COLLECTION),),
        "{0}",
    ),
    OperationSignature(
        "groupby",
        OperationCategory.DATA_OPERATION,
        (_slot(">=1", _CAT, _DT),),
        (_slot("1", AttributeType.GROUPING),),
        "grouped by {0}",
    ),
    OperationSignature(
        "limit",
        OperationCategory.DATA_OPERATION,
        (_slot("1", _AR),),
        (_slot("1", AttributeType.LIMIT),),
        "limited to the top results",
    ),
    OperationSignature(
        "return",
        OperationCategory.DATA_OPERATION,
        (
            _slot("1", AttributeType.ATTRIBUTE_COLLECTION),
            _slot("<=1", _FIL),
            _slot("<=1", AttributeType.SORT),
            _slot("<=1", AttributeType.LIMIT),
        ),
        (_slot("1", AttributeType.ENTITY),),
        "{0}",
    ),
    OperationSignature(
        "sort",
        OperationCategory.DATA_OPERATION,
        (_slot(">=1", _ATTR), _slot("1", _STR)),
        (_slot("1", AttributeType.SORT),),
        "sorted by {0}",
    ),
    # Retrieval.
    OperationSignature(
        "retrieve_attribute",
        OperationCategory.RETRIEVAL,
        (_slot("1", AttributeType.ENTITY), _slot("1", _STR)),
        (_slot("1", _ATTR),),
        "{1} of {0}",
    ),
    OperationSignature(
        "retrieve_entity",
        OperationCategory.RETRIEVAL,
        (_slot("1", _STR),),
        (_slot("1", AttributeType.ENTITY),),
        "{0}",
    ),
)

BUILTIN_REGISTRY = OperationRegistry({sig.name: sig for sig in _BUILTIN_SIGNATURES})


def _parse_slot(doc: Mapping[str, Any], where: str) -> Slot:
    if not isinstance(doc, Mapping) or "arity" not in doc or "types" not in doc:
        raise TaxonomyError(f"{where}: slot must carry 'arity' and 'types'")
    arity = AritySpec.parse(str(doc["arity"]))
    raw_types = doc["types"]
    if not isinstance(raw_types, Sequence) or isinstance(raw_types, str) or not raw_types:
        raise TaxonomyError(f"{where}: 'types' must be a non-empty list")
    return Slot(arity, frozenset(AttributeType.from_name(t) for t in raw_types))


def _parse_operation_document(doc: Mapping[str, Any]) -> OperationSignature:
    for key in ("name", "input_args", "output_args", "language_template"):
        if key not in doc:
            raise TaxonomyError(f"operation document missing {key!r}")
    name = str(doc["name"]).lower()
    category = (
        OperationCategory.from_name(str(doc["category"]))
        if "category" in doc
        else _infer_category(name)
    )
    inputs = tuple(
        _parse_slot(s, f"{name}.input_args[{i}]") for i, s in enumerate(doc["input_args"])
    )
    outputs = tuple(
        _parse_slot(s, f"{name}.output_args[{i}]") for i, s in enumerate(doc["output_args"])
    )
    if not inputs or not outputs:
        raise TaxonomyError(f"{name}: input_args and output_args must be non-empty")
    return OperationSignature(name, category, inputs, outputs, str(doc["language_template"]))


def _infer_category(name: str) -> OperationCategory:
    # Documents may omit the category when redefining a built-in.
    builtin = BUILTIN_REGISTRY.operations.get(name)
    if builtin is None:
        raise TaxonomyError(f"{name}: new operations must declare a 'category'")
    return builtin.category


def load_registry(config_documents: Sequence[Mapping[str, Any]] = ()) -> OperationRegistry:
    """Build a registry merging built-ins with operation-definition documents.

    Each document follows the structure::

        {"name": ..., "input_args": [{"arity": ..., "types": [...]}, ...],
         "output_args": [...], "language_template": ...}

    A document with a built-in's name replaces the built-in. Documents for new
    operations must additionally declare a "category".

    Raises:
        TaxonomyError: duplicate name among the documents, unknown attribute
            type, malformed arity, or out-of-range template placeholder.
    """
    merged = dict(BUILTIN_REGISTRY.operations)
    seen: set[str] = set()
    for doc in config_documents:
        sig = _parse_operation_document(doc)
        if sig.name in seen:
            raise TaxonomyError(f"duplicate operation name {sig.name!r} among documents")
        seen.add(sig.name)
        merged[sig.name] = sig
    return OperationRegistry(merged)
