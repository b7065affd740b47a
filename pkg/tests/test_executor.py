import sqlite3
import statistics

import pytest

from infospace import fixtures
from infospace.compiler import DialectCapabilities, compile_plan
from infospace.errors import ExecutionError
from infospace.executor import (
    ROW_CAP,
    execute,
    median,
    open_readonly,
    pearson,
    population_stddev,
)
from infospace.fixtures import labeling_text, plan_text
from infospace.labeling import parse_labeling
from infospace.plan import parse_plan
from infospace.taxonomy import BUILTIN_REGISTRY


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("dbs")
    fixtures.build_fixtures(out)
    return out


@pytest.fixture(scope="module")
def emissions():
    return parse_labeling(labeling_text("emissions"))


@pytest.fixture(scope="module")
def incidents():
    return parse_labeling(labeling_text("incidents"))


def run_text(text, labeling, conn, capabilities=None):
    plan = parse_plan(text)
    if capabilities is None:
        compiled = compile_plan(plan, BUILTIN_REGISTRY, labeling)
    else:
        compiled = compile_plan(plan, BUILTIN_REGISTRY, labeling, capabilities)
    return execute(conn, compiled)


def test_median_exact_middle_and_mean_of_middles():
    assert median([3, 1, 2]) == 2
    assert median([4, 1, 3, 2]) == 2.5
    assert median([7]) == 7
    assert median([]) is None


def test_pearson_known_values():
    assert pearson([(1, 2), (2, 4), (3, 6)]) == pytest.approx(1.0)
    assert pearson([(1, 6), (2, 4), (3, 2)]) == pytest.approx(-1.0)
    assert pearson([(1, 1)]) is None
    assert pearson([(1, 5), (1, 9), (1, 2)]) is None  # zero variance in x
    assert pearson([]) is None


def test_population_stddev_known_value():
    assert population_stddev([2, 4, 4, 4, 5, 5, 7, 9]) == pytest.approx(2.0)
    assert population_stddev([5]) == 0.0
    assert population_stddev([]) is None


@pytest.mark.parametrize("domain", fixtures.DOMAINS)
def test_manifest_plans_execute_to_frozen_rows(built, domain):
    labeling = parse_labeling(labeling_text(domain))
    conn = open_readonly(built / f"{domain}.sqlite")
    try:
        for record in fixtures.manifest(domain):
            plan = parse_plan(plan_text(record["plan"][: -len(".plan")]))
            compiled = compile_plan(plan, BUILTIN_REGISTRY, labeling)
            result = execute(conn, compiled)
            assert [c.label for c in result.columns] == record["columns"]
            assert not result.truncated
            got = [list(r) for r in result.rows]
            expected = record["rows"]
            if not record["ordered"]:
                got = sorted(got)
                expected = sorted(expected)
            assert len(got) == len(expected)
            for got_row, expected_row in zip(got, expected):
                for got_value, expected_value in zip(got_row, expected_row):
                    if isinstance(expected_value, float):
                        assert got_value == pytest.approx(expected_value, rel=1e-9)
                    elif isinstance(expected_value, bool):
                        assert bool(got_value) is expected_value
                    else:
                        assert got_value == expected_value
    finally:
        conn.close()


def test_null_values_excluded_from_average(built, emissions):
    text = (
        '|1| retrieve_entity("CarbonEmission")\n'
        '|2| retrieve_attribute(|1|, "country")\n'
        '|3| retrieve_attribute(|1|, "amount")\n'
        '|4| exact(|2|, "China")\n'
        '|5| retrieve_attribute(|1|, "year")\n'
        "|6| groupby(|5|)\n"
        "|7| average(|3|, |6|)\n"
        '|8| sort(|5|, "asc")\n'
        "|9| collect(|5|, |7|)\n"
        "|10| return(|9|, |4|, |8|)"
    )
    conn = open_readonly(built / "emissions.sqlite")
    try:
        result = run_text(text, emissions, conn)
    finally:
        conn.close()
    rows = [tuple(r) for r in result.rows]
    # 2021 has amounts 114, 120, 126 and one null; the null must not drag
    # the average down.
    assert rows[0] == (2019, 100.0)
    assert rows[1] == (2020, 105.0)
    assert rows[2] == (2021, 120.0)


def test_grouped_median_matches_stdlib_oracle(built, emissions):
    text = (
        '|1| retrieve_entity("CarbonEmission")\n'
        '|2| retrieve_attribute(|1|, "country")\n'
        '|3| retrieve_attribute(|1|, "amount")\n'
        "|4| groupby(|2|)\n"
        "|5| median(|3|, |4|)\n"
        "|6| collect(|2|, |5|)\n"
        "|7| return(|6|)"
    )
    conn = open_readonly(built / "emissions.sqlite")
    try:
        result = run_text(text, emissions, conn)
        oracle = {}
        for country, amount in conn.execute(
            "SELECT country, amount FROM carbon_emissions WHERE amount IS NOT NULL"
        ):
            oracle.setdefault(country, []).append(amount)
    finally:
        conn.close()
    rows = [tuple(r) for r in result.rows]
    assert [r[0] for r in rows] == sorted(oracle)  # ordered by group key
    for country, value in rows:
        assert value == pytest.approx(statistics.median(oracle[country]), rel=1e-12)
    assert dict(rows)["United States of America"] == 12.0
    assert dict(rows)["India"] == 26.5


def test_global_correlation_matches_stdlib_oracle(built, emissions):
    text = (
        '|1| retrieve_entity("CarbonEmission")\n'
        '|2| retrieve_attribute(|1|, "country")\n'
        '|3| retrieve_attribute(|1|, "year")\n'
        '|4| retrieve_attribute(|1|, "amount")\n'
        '|5| exact(|2|, "China")\n'
        "|6| correlation(|3|, |4|)\n"
        "|7| collect(|6|)\n"
        "|8| return(|7|, |5|)"
    )
    conn = open_readonly(built / "emissions.sqlite")
    try:
        result = run_text(text, emissions, conn)
        pairs = conn.execute(
            "SELECT year, amount FROM carbon_emissions"
            " WHERE country = 'China' AND amount IS NOT NULL"
        ).fetchall()
    finally:
        conn.close()
    ((value,),) = result.rows
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    assert value == pytest.approx(statistics.correlation(xs, ys), rel=1e-9)
    assert result.columns[0].label == "correlation_year_amount"


def test_correlation_of_constant_column_is_null(built, emissions):
    text = (
        '|1| retrieve_entity("CarbonEmission")\n'
        '|2| retrieve_attribute(|1|, "country")\n'
        '|3| retrieve_attribute(|1|, "year")\n'
        '|4| retrieve_attribute(|1|, "emission_id")\n'
        '|5| exact(|3|, 2021)\n'
        '|6| exact(|2|, "India")\n'
        "|7| and(|5|, |6|)\n"
        "|8| correlation(|3|, |4|)\n"
        "|9| collect(|8|)\n"
        "|10| return(|9|, |7|)"
    )
    conn = open_readonly(built / "emissions.sqlite")
    try:
        result = run_text(text, emissions, conn)
    finally:
        conn.close()
    assert result.rows == ((None,),)


def test_string_aggregation_fallback_matches_native(built, emissions):
    text = (
        '|1| retrieve_entity("CarbonEmission")\n'
        '|2| retrieve_attribute(|1|, "amount")\n'
        '|3| retrieve_attribute(|1|, "year")\n'
        "|4| groupby(|3|)\n"
        "|5| string_aggregation(|2|, |4|)\n"
        "|6| collect(|3|, |5|)\n"
        "|7| return(|6|)"
    )
    conn = open_readonly(built / "emissions.sqlite")
    try:
        native = run_text(text, emissions, conn)
        fallback = run_text(
            text, emissions, conn, DialectCapabilities(group_concat=False)
        )
    finally:
        conn.close()

    def normalized(result):
        return {
            row[0]: sorted(row[1].split(", ")) for row in result.rows
        }

    assert normalized(native) == normalized(fallback)
    assert all("," in row[1] for row in native.rows)


def test_sqrt_fallback_matches_native_function(built, emissions):
    text = (
        '|1| retrieve_entity("CarbonEmission")\n'
        '|2| retrieve_attribute(|1|, "amount")\n'
        "|3| average(|2|)\n"
        "|4| square_root(|3|)\n"
        "|5| collect(|4|)\n"
        "|6| return(|5|)"
    )
    conn = open_readonly(built / "emissions.sqlite")
    try:
        fallback = run_text(text, emissions, conn)
        has_native_sqrt = True
        try:
            conn.execute("SELECT SQRT(4)")
        except sqlite3.OperationalError:
            has_native_sqrt = False
        if has_native_sqrt:
            native = run_text(text, emissions, conn, DialectCapabilities(sqrt=True))
            assert native.rows[0][0] == pytest.approx(fallback.rows[0][0], rel=1e-12)
        mean = conn.execute(
            "SELECT AVG(amount) FROM carbon_emissions"
        ).fetchone()[0]
    finally:
        conn.close()
    assert fallback.rows[0][0] == pytest.approx(mean ** 0.5, rel=1e-12)


def test_boolean_compare_against_literal(built, incidents):
    text = (
        '|1| retrieve_entity("Incident")\n'
        '|2| retrieve_attribute(|1|, "incident_id")\n'
        "|3| count_unique(|2|)\n"
        "|4| collect(|3|)\n"
        "|5| return(|4|)\n"
        '|6| retrieve_attribute(|5|, "count_unique_incident_id")\n'
        "|7| greaterthan(|6|, 5)\n"
        "|8| collect(|7|)\n"
        "|9| return(|8|)"
    )
    conn = open_readonly(built / "incidents.sqlite")
    try:
        result = run_text(text, incidents, conn)
    finally:
        conn.close()
    assert result.rows == ((True,),)


def test_row_cap_sets_truncated_flag(tmp_path):
    db = tmp_path / "wide.sqlite"
    conn = sqlite3.connect(db)
    conn.execute("CREATE TABLE points (point_id INTEGER PRIMARY KEY, value REAL)")
    conn.executemany(
        "INSERT INTO points VALUES (?, ?)",
        ((i, float(i % 7)) for i in range(1, ROW_CAP + 2)),
    )
    conn.commit()
    conn.close()
    labeling = parse_labeling(
        {
            "id": "points",
            "name": "points",
            "description": "",
            "dataSource": {
                "tables": [
                    {
                        "name": "points",
                        "primaryKey": "point_id",
                        "columns": [
                            {"name": "point_id", "type": "integer"},
                            {"name": "value", "type": "float"},
                        ],
                    }
                ],
                "joins": [],
            },
            "dataAbstraction": {
                "entities": [
                    {
                        "name": "Point",
                        "primaryTable": "points",
                        "attributes": [
                            {
                                "name": "point_id",
                                "type": "integer",
                                "isa": ["Arithmetic", "Identifier"],
                                "source": {"table": "points", "column": "point_id"},
                            },
                            {
                                "name": "value",
                                "type": "float",
                                "isa": ["Arithmetic"],
                                "source": {"table": "points", "column": "value"},
                            },
                        ],
                    }
                ],
                "relationships": [],
            },
        }
    )
    text = (
        '|1| retrieve_entity("Point")\n'
        '|2| retrieve_attribute(|1|, "point_id")\n'
        "|3| collect(|2|)\n"
        "|4| return(|3|)"
    )
    conn = open_readonly(db)
    try:
        result = run_text(text, labeling, conn)
    finally:
        conn.close()
    assert result.truncated
    assert len(result.rows) == ROW_CAP


def test_connection_is_read_only(built):
    conn = open_readonly(built / "emissions.sqlite")
    try:
        with pytest.raises(sqlite3.OperationalError, match="readonly"):
            conn.execute("INSERT INTO carbon_emissions VALUES (99, 'X', 2030, 1.0)")
    finally:
        conn.close()


def test_open_readonly_missing_file_raises(tmp_path):
    with pytest.raises(ExecutionError, match="cannot open database"):
        open_readonly(tmp_path / "missing.sqlite")


def test_execution_error_carries_statement(built, emissions):
    from infospace.compiler import CompiledQuery

    conn = open_readonly(built / "emissions.sqlite")
    bad = CompiledQuery("SELECT * FROM no_such_table", (), ())
    try:
        with pytest.raises(ExecutionError) as info:
            execute(conn, bad)
    finally:
        conn.close()
    assert info.value.sql_text == "SELECT * FROM no_such_table"


def test_sqlite_division_by_zero_column_yields_null(built, emissions):
    text = (
        '|1| retrieve_entity("CarbonEmission")\n'
        '|2| retrieve_attribute(|1|, "amount")\n'
        "|3| subtract(|2|, |2|)\n"
        "|4| divide(|2|, |3|)\n"
        '|5| retrieve_attribute(|1|, "emission_id")\n'
        "|6| exact(|5|, 1)\n"
        "|7| collect(|4|)\n"
        "|8| return(|7|, |6|)"
    )
    conn = open_readonly(built / "emissions.sqlite")
    try:
        result = run_text(text, emissions, conn)
    finally:
        conn.close()
    assert result.rows == ((None,),)
