import copy
import json
import sqlite3

import pytest

from infospace.errors import LabelingError
from infospace.labeling import (
    Cardinality,
    attributes_of_type,
    fallback_nicename,
    parse_labeling,
    relationship_path,
    serialize_labeling,
    validate_against_database,
)
from infospace.taxonomy import AttributeType

EMISSIONS_DOC = {
    "id": "emissions",
    "name": "Carbon emissions",
    "description": "Yearly carbon emission measurements by country.",
    "dataSource": {
        "tables": [
            {
                "name": "carbon_emissions",
                "primaryKey": "emission_id",
                "columns": [
                    {"name": "emission_id", "type": "integer"},
                    {"name": "country", "type": "text"},
                    {"name": "year", "type": "integer"},
                    {"name": "amount", "type": "float"},
                ],
            }
        ],
        "joins": [],
    },
    "dataAbstraction": {
        "entities": [
            {
                "name": "CarbonEmission",
                "nicename": "carbon emissions",
                "primaryTable": "carbon_emissions",
                "identifierAttribute": "emission_id",
                "attributes": [
                    {
                        "name": "emission_id",
                        "nicename": "emission id",
                        "type": "integer",
                        "isa": ["Identifier", "Arithmetic"],
                        "source": {"table": "carbon_emissions", "column": "emission_id"},
                    },
                    {
                        "name": "country",
                        "nicename": "country",
                        "type": "text",
                        "isa": ["Categorical"],
                        "source": {"table": "carbon_emissions", "column": "country"},
                    },
                    {
                        "name": "year",
                        "nicename": "year",
                        "type": "integer",
                        "isa": ["Categorical", "Arithmetic"],
                        "source": {"table": "carbon_emissions", "column": "year"},
                    },
                    {
                        "name": "amount",
                        "nicename": "amount of carbon emissions",
                        "units": "megatons",
                        "type": "float",
                        "isa": ["Arithmetic", "Metric"],
                        "source": {"table": "carbon_emissions", "column": "amount"},
                    },
                ],
            }
        ],
        "relationships": [],
    },
}


def make_legal_doc():
    return {
        "id": "legal",
        "name": "Judicial data",
        "description": "Judges and cases.",
        "dataSource": {
            "tables": [
                {
                    "name": "judges",
                    "primaryKey": "judge_id",
                    "columns": [
                        {"name": "judge_id", "type": "integer"},
                        {"name": "name", "type": "text"},
                        {"name": "gender", "type": "text"},
                    ],
                },
                {
                    "name": "cases",
                    "primaryKey": "case_id",
                    "columns": [
                        {"name": "case_id", "type": "integer"},
                        {"name": "case_type_id", "type": "integer"},
                        {"name": "year", "type": "integer"},
                        {"name": "duration", "type": "float"},
                    ],
                },
                {
                    "name": "case_type",
                    "primaryKey": "case_type_id",
                    "columns": [
                        {"name": "case_type_id", "type": "integer"},
                        {"name": "name", "type": "text"},
                    ],
                },
                {
                    "name": "judge_on_case",
                    "primaryKey": "entry_id",
                    "columns": [
                        {"name": "entry_id", "type": "integer"},
                        {"name": "judge_id", "type": "integer"},
                        {"name": "case_id", "type": "integer"},
                    ],
                },
            ],
            "joins": [
                {
                    "name": "casesTocase_type",
                    "from": "cases",
                    "to": "case_type",
                    "on": [["case_type_id", "case_type_id"]],
                },
                {
                    "name": "judgesTojudge_on_case",
                    "from": "judges",
                    "to": "judge_on_case",
                    "on": [["judge_id", "judge_id"]],
                },
                {
                    "name": "judge_on_caseTocases",
                    "from": "judge_on_case",
                    "to": "cases",
                    "on": [["case_id", "case_id"]],
                },
            ],
        },
        "dataAbstraction": {
            "entities": [
                {
                    "name": "Judge",
                    "primaryTable": "judges",
                    "identifierAttribute": "name",
                    "attributes": [
                        {
                            "name": "name",
                            "type": "text",
                            "isa": ["Identifier", "Categorical"],
                            "source": {"table": "judges", "column": "name"},
                        },
                        {
                            "name": "gender",
                            "type": "text",
                            "isa": ["Categorical"],
                            "source": {"table": "judges", "column": "gender"},
                        },
                    ],
                },
                {
                    "name": "Case",
                    "primaryTable": "cases",
                    "identifierAttribute": "case_id",
                    "attributes": [
                        {
                            "name": "case_id",
                            "nicename": "case id",
                            "type": "integer",
                            "isa": ["Identifier", "Arithmetic"],
                            "source": {"table": "cases", "column": "case_id"},
                        },
                        {
                            "name": "case_type",
                            "nicename": "case type",
                            "type": "text",
                            "isa": ["Categorical"],
                            "source": {"table": "case_type", "column": "name"},
                            "viaJoins": ["casesTocase_type"],
                        },
                        {
                            "name": "year",
                            "type": "integer",
                            "isa": ["Categorical", "Arithmetic"],
                            "source": {"table": "cases", "column": "year"},
                        },
                        {
                            "name": "duration",
                            "nicename": "case duration",
                            "units": "days",
                            "type": "float",
                            "isa": ["Arithmetic", "Metric"],
                            "source": {"table": "cases", "column": "duration"},
                        },
                    ],
                },
            ],
            "relationships": [
                {
                    "name": "CaseToJudge",
                    "from": "Judge",
                    "to": "Case",
                    "relation": "m2m",
                    "joinChain": ["judgesTojudge_on_case", "judge_on_caseTocases"],
                }
            ],
        },
    }


def test_parse_emissions_labeling():
    labeling = parse_labeling(EMISSIONS_DOC)
    assert labeling.id == "emissions"
    assert len(labeling.entities) == 1
    assert labeling.relationships == ()
    entity = labeling.entity("CarbonEmission")
    assert entity.identifier_attribute == "emission_id"
    amount = entity.attribute("amount")
    assert amount.units == "megatons"
    assert amount.attribute_types == {AttributeType.ARITHMETIC, AttributeType.METRIC}


def test_parse_accepts_json_text():
    labeling = parse_labeling(json.dumps(EMISSIONS_DOC))
    assert labeling.entity("CarbonEmission").nicename == "carbon emissions"


def test_parse_legal_labeling_m2m():
    labeling = parse_labeling(make_legal_doc())
    assert len(labeling.entities) == 2
    (rel,) = labeling.relationships
    assert rel.cardinality is Cardinality.MANY_TO_MANY
    assert len(rel.join_chain) == 2
    case_type = labeling.entity("Case").attribute("case_type")
    assert case_type.via_joins == ("casesTocase_type",)
    assert case_type.source_table == "case_type"


def test_nicename_fallback_applied():
    labeling = parse_labeling(make_legal_doc())
    assert labeling.entity("Judge").attribute("name").nicename == "name"
    assert labeling.entity("Case").attribute("duration").nicename == "case duration"
    assert fallback_nicename("incident_id") == "incident id"


def test_round_trip_is_lossless():
    for doc in (EMISSIONS_DOC, make_legal_doc()):
        labeling = parse_labeling(doc)
        again = parse_labeling(serialize_labeling(labeling))
        assert again == labeling


def test_unknown_join_reports_path():
    doc = make_legal_doc()
    doc["dataAbstraction"]["relationships"][0]["joinChain"] = ["nope", "judge_on_caseTocases"]
    with pytest.raises(LabelingError) as excinfo:
        parse_labeling(doc)
    assert "relationships[0].joinChain[0]" in str(excinfo.value)
    assert "nope" in str(excinfo.value)


def test_structural_errors():
    doc = copy.deepcopy(EMISSIONS_DOC)
    del doc["dataSource"]
    with pytest.raises(LabelingError, match="missing field 'dataSource'"):
        parse_labeling(doc)
    doc = copy.deepcopy(EMISSIONS_DOC)
    doc["extra"] = 1
    with pytest.raises(LabelingError, match="unknown field 'extra'"):
        parse_labeling(doc)


def test_referential_errors():
    doc = copy.deepcopy(EMISSIONS_DOC)
    doc["dataAbstraction"]["entities"][0]["primaryTable"] = "emissions_typo"
    with pytest.raises(LabelingError, match="entities\\[0\\].primaryTable"):
        parse_labeling(doc)

    doc = copy.deepcopy(EMISSIONS_DOC)
    doc["dataAbstraction"]["entities"][0]["attributes"][1]["source"]["column"] = "countri"
    with pytest.raises(LabelingError, match="source.column"):
        parse_labeling(doc)

    doc = copy.deepcopy(EMISSIONS_DOC)
    doc["dataAbstraction"]["entities"][0]["attributes"][3]["type"] = "integer"
    with pytest.raises(LabelingError, match="does not match column type"):
        parse_labeling(doc)


def test_derived_type_rejected_on_attributes():
    doc = copy.deepcopy(EMISSIONS_DOC)
    doc["dataAbstraction"]["entities"][0]["attributes"][1]["isa"] = ["Filter"]
    with pytest.raises(LabelingError, match="base types only"):
        parse_labeling(doc)


def test_relationship_chain_must_reach_target():
    doc = make_legal_doc()
    rel = doc["dataAbstraction"]["relationships"][0]
    rel["relation"] = "o2m"
    rel["joinChain"] = ["judgesTojudge_on_case"]
    with pytest.raises(LabelingError, match="ends at"):
        parse_labeling(doc)


def test_m2m_needs_two_joins():
    doc = make_legal_doc()
    rel = doc["dataAbstraction"]["relationships"][0]
    rel["relation"] = "m2m"
    rel["joinChain"] = ["judgesTojudge_on_case"]
    with pytest.raises(LabelingError, match="at least 2"):
        parse_labeling(doc)


def test_attributes_of_type():
    labeling = parse_labeling(make_legal_doc())
    metric = attributes_of_type(labeling, "Case", {AttributeType.METRIC})
    assert [a.name for a in metric] == ["duration"]
    categorical = attributes_of_type(labeling, "Judge", {AttributeType.CATEGORICAL})
    assert [a.name for a in categorical] == ["name", "gender"]
    for attr in categorical:
        assert attr.attribute_types & {AttributeType.CATEGORICAL}
    with pytest.raises(LabelingError, match="empty type set"):
        attributes_of_type(labeling, "Case", set())
    with pytest.raises(LabelingError, match="unknown entity"):
        attributes_of_type(labeling, "Docket", {AttributeType.METRIC})


def test_relationship_path_single_edge_and_identity():
    labeling = parse_labeling(make_legal_doc())
    path = relationship_path(labeling, "Judge", "Case")
    assert [r.name for r in path] == ["CaseToJudge"]
    assert relationship_path(labeling, "Case", "Case") == []


def make_chain_doc():
    """A-B-C chain plus a tie-breaking parallel route A-B via two edges."""
    tables = [
        {
            "name": t,
            "primaryKey": "id",
            "columns": [{"name": "id", "type": "integer"}, {"name": "b_id", "type": "integer"}],
        }
        for t in ("ta", "tb", "tc")
    ]
    joins = [
        {"name": "ab", "from": "ta", "to": "tb", "on": [["b_id", "id"]]},
        {"name": "aa", "from": "ta", "to": "tb", "on": [["b_id", "id"]]},
        {"name": "bc", "from": "tb", "to": "tc", "on": [["b_id", "id"]]},
    ]
    entities = [
        {
            "name": name,
            "primaryTable": table,
            "attributes": [
                {
                    "name": "id",
                    "type": "integer",
                    "isa": ["Identifier", "Arithmetic"],
                    "source": {"table": table, "column": "id"},
                }
            ],
        }
        for name, table in (("A", "ta"), ("B", "tb"), ("C", "tc"))
    ]
    relationships = [
        {"name": "zEdgeAB", "from": "A", "to": "B", "relation": "o2m", "joinChain": ["ab"]},
        {"name": "aEdgeAB", "from": "A", "to": "B", "relation": "o2m", "joinChain": ["aa"]},
        {"name": "edgeBC", "from": "B", "to": "C", "relation": "o2m", "joinChain": ["bc"]},
    ]
    return {
        "id": "chain",
        "name": "chain",
        "description": "three entities in a row",
        "dataSource": {"tables": tables, "joins": joins},
        "dataAbstraction": {"entities": entities, "relationships": relationships},
    }


def test_relationship_path_three_entity_chain():
    labeling = parse_labeling(make_chain_doc())
    path = relationship_path(labeling, "A", "C")
    assert [r.name for r in path] == ["aEdgeAB", "edgeBC"]  # lex tie-break on A-B


def test_relationship_path_symmetry():
    labeling = parse_labeling(make_chain_doc())
    for a, b in (("A", "C"), ("C", "A"), ("A", "B"), ("B", "A")):
        forward = [r.name for r in relationship_path(labeling, a, b)]
        backward = [r.name for r in relationship_path(labeling, b, a)]
        assert forward == list(reversed(backward))


def test_relationship_path_unconnected():
    doc = make_chain_doc()
    doc["dataAbstraction"]["relationships"] = []
    labeling = parse_labeling(doc)
    with pytest.raises(LabelingError, match="not connected"):
        relationship_path(labeling, "A", "C")


@pytest.fixture
def emissions_db():
    db = sqlite3.connect(":memory:")
    db.execute(
        "CREATE TABLE carbon_emissions ("
        "emission_id INTEGER PRIMARY KEY, country TEXT, year INTEGER, amount REAL)"
    )
    yield db
    db.close()


def test_validate_against_database_ok(emissions_db):
    labeling = parse_labeling(EMISSIONS_DOC)
    report = validate_against_database(labeling, emissions_db)
    assert report.ok
    assert report.issues == ()


def test_validate_reports_missing_column_with_closest_name(emissions_db):
    doc = copy.deepcopy(EMISSIONS_DOC)
    table = doc["dataSource"]["tables"][0]
    table["columns"][3]["name"] = "amout"
    doc["dataAbstraction"]["entities"][0]["attributes"][3]["source"]["column"] = "amout"
    labeling = parse_labeling(doc)
    report = validate_against_database(labeling, emissions_db)
    assert not report.ok
    assert any("amout" in issue and "amount" in issue for issue in report.issues)


def test_validate_reports_missing_table(emissions_db):
    doc = copy.deepcopy(make_legal_doc())
    labeling = parse_labeling(doc)
    report = validate_against_database(labeling, emissions_db)
    assert not report.ok
    assert any("judges" in issue for issue in report.issues)


def test_validate_empty_labeling_warns(emissions_db):
    doc = copy.deepcopy(EMISSIONS_DOC)
    doc["dataAbstraction"]["entities"] = []
    doc["dataAbstraction"]["relationships"] = []
    labeling = parse_labeling(doc)
    report = validate_against_database(labeling, emissions_db)
    assert report.ok
    assert "no entities" in report.warnings
