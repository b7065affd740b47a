import pytest

from infospace.errors import TaxonomyError, UnknownOperationError
from infospace.taxonomy import (
    BASE_TYPES,
    BUILTIN_REGISTRY,
    DERIVED_TYPES,
    AritySpec,
    AttributeType,
    OperationCategory,
    load_registry,
    signature_of,
    types_accept,
)

AVERAGE_DOC = {
    "name": "average",
    "input_args": [
        {"arity": "1", "types": ["Arithmetic", "Metric"]},
        {"arity": ">=1", "types": ["Grouping"]},
    ],
    "output_args": [{"arity": "1", "types": ["Arithmetic", "Metric"]}],
    "language_template": "average {0}",
}


def test_type_vocabulary_is_closed():
    assert len(BASE_TYPES) == 6
    assert len(DERIVED_TYPES) == 8
    assert BASE_TYPES | DERIVED_TYPES == frozenset(AttributeType)
    with pytest.raises(TaxonomyError):
        AttributeType.from_name("Fraction")


def test_type_names_resolve_case_insensitively():
    assert AttributeType.from_name("arithmetic") is AttributeType.ARITHMETIC
    assert AttributeType.from_name("AttributeCollection") is AttributeType.ATTRIBUTE_COLLECTION


def test_builtin_registry_shape():
    assert len(BUILTIN_REGISTRY) == 33
    per_category = {
        OperationCategory.AGGREGATION: 11,
        OperationCategory.BOOLEAN: 9,
        OperationCategory.ARITHMETIC: 6,
        OperationCategory.DATA_OPERATION: 5,
        OperationCategory.RETRIEVAL: 2,
    }
    for category, expected in per_category.items():
        assert len(BUILTIN_REGISTRY.by_category(category)) == expected


def test_every_aggregation_has_optional_grouping_slot():
    for sig in BUILTIN_REGISTRY.by_category(OperationCategory.AGGREGATION):
        grouping = sig.input_slots[-1]
        assert grouping.types == {AttributeType.GROUPING}
        assert grouping.arity == AritySpec.at_most(1)


def test_output_types_stay_within_vocabulary():
    for sig in BUILTIN_REGISTRY.operations.values():
        for slot in sig.output_slots:
            assert slot.types <= frozenset(AttributeType)
            assert slot.types


ACCEPTED_ARITIES = ["1", "2", ">=1", ">=2", "<=1"]


@pytest.mark.parametrize("text", ACCEPTED_ARITIES)
def test_arity_surface_forms_round_trip(text):
    assert AritySpec.parse(text).render() == text


@pytest.mark.parametrize(
    "text", ["0", "3", ">=0", ">=3", "<=0", "<=2", "=1", "1..2", "", "one", ">= 1x"]
)
def test_malformed_arities_rejected(text):
    with pytest.raises(TaxonomyError, match="malformed arity"):
        AritySpec.parse(text)


def test_arity_allows_bounds():
    assert AritySpec.parse("1").allows(1) and not AritySpec.parse("1").allows(2)
    assert AritySpec.parse(">=2").allows(7) and not AritySpec.parse(">=2").allows(1)
    optional = AritySpec.parse("<=1")
    assert optional.allows(0) and optional.allows(1) and not optional.allows(2)
    assert optional.is_optional


def test_load_registry_empty_is_builtins():
    assert load_registry([]) == BUILTIN_REGISTRY
    assert load_registry() == BUILTIN_REGISTRY


def test_load_registry_is_idempotent():
    docs = [AVERAGE_DOC]
    assert load_registry(docs) == load_registry(docs)


def test_average_document_replaces_builtin():
    registry = load_registry([AVERAGE_DOC])
    sig = signature_of(registry, "average")
    assert sig.category is OperationCategory.AGGREGATION
    assert sig.input_slots[0].types == {AttributeType.ARITHMETIC, AttributeType.METRIC}
    assert sig.output_types == {AttributeType.ARITHMETIC, AttributeType.METRIC}
    # The document declares a mandatory grouping slot; it is loaded as written,
    # replacing the built-in's optional one.
    assert sig.input_slots[1].arity == AritySpec.at_least(1)
    assert sig.language_template == "average {0}"


def test_load_rejects_duplicate_document_names():
    with pytest.raises(TaxonomyError, match="duplicate"):
        load_registry([AVERAGE_DOC, AVERAGE_DOC])


def test_load_rejects_unknown_type_and_bad_arity():
    bad_type = {**AVERAGE_DOC, "input_args": [{"arity": "1", "types": ["Numberish"]}]}
    with pytest.raises(TaxonomyError, match="unknown attribute type"):
        load_registry([bad_type])
    bad_arity = {**AVERAGE_DOC, "input_args": [{"arity": "3", "types": ["Arithmetic"]}]}
    with pytest.raises(TaxonomyError, match="malformed arity"):
        load_registry([bad_arity])


def test_load_rejects_out_of_range_placeholder():
    doc = {**AVERAGE_DOC, "language_template": "average {0} by {3}"}
    with pytest.raises(TaxonomyError, match="placeholder"):
        load_registry([doc])


def test_new_operation_requires_category():
    doc = {
        "name": "variance",
        "input_args": [{"arity": "1", "types": ["Arithmetic", "Metric"]}],
        "output_args": [{"arity": "1", "types": ["Arithmetic", "Metric"]}],
        "language_template": "variance of {0}",
    }
    with pytest.raises(TaxonomyError, match="category"):
        load_registry([doc])
    registry = load_registry([{**doc, "category": "Aggregation"}])
    assert signature_of(registry, "variance").category is OperationCategory.AGGREGATION


def test_signature_of_sum_and_retrieve_entity():
    sum_sig = signature_of(BUILTIN_REGISTRY, "sum")
    assert sum_sig.input_slots[0].types == {AttributeType.ARITHMETIC}
    retrieve = signature_of(BUILTIN_REGISTRY, "retrieve_entity")
    assert retrieve.category is OperationCategory.RETRIEVAL
    assert retrieve.input_slots[0].arity == AritySpec.exactly(1)
    assert retrieve.input_slots[0].types == {AttributeType.STRING}
    assert retrieve.output_slots[0].types == {AttributeType.ENTITY}


def test_signature_lookup_is_case_insensitive():
    assert signature_of(BUILTIN_REGISTRY, "Average") is signature_of(BUILTIN_REGISTRY, "average")


def test_unknown_name_suggests_closest():
    with pytest.raises(UnknownOperationError) as excinfo:
        signature_of(BUILTIN_REGISTRY, "summ")
    assert excinfo.value.suggestion == "sum"
    with pytest.raises(UnknownOperationError) as excinfo:
        signature_of(BUILTIN_REGISTRY, "grupby")
    assert excinfo.value.suggestion == "groupby"


def test_types_accept_intersection_semantics():
    ar, me = AttributeType.ARITHMETIC, AttributeType.METRIC
    assert types_accept({ar, me}, {me})
    assert not types_accept({ar}, {me})


def test_types_accept_reflexive_and_symmetric():
    import itertools

    singles = [frozenset({t}) for t in AttributeType]
    pairs = [frozenset(p) for p in itertools.combinations(AttributeType, 2)]
    for s in singles + pairs:
        assert types_accept(s, s)
    for a, b in itertools.product(singles + pairs, repeat=2):
        assert types_accept(a, b) == types_accept(b, a)


def test_registry_mapping_is_read_only():
    with pytest.raises(TypeError):
        BUILTIN_REGISTRY.operations["sum"] = None  # type: ignore[index]
