"""Question rendering and token-overlap search."""

from infospace import fixtures
from infospace.labeling import parse_labeling
from infospace.plan import check_plan, parse_plan
from infospace.questions import (
    FILTER_NICENAMES,
    SearchHit,
    build_index,
    render_question,
    search,
    tokenize,
)
from infospace.taxonomy import BUILTIN_REGISTRY


def _render(domain: str, text: str) -> str:
    labeling = parse_labeling(fixtures.labeling_document(domain))
    plan = parse_plan(text)
    typed = check_plan(plan, BUILTIN_REGISTRY, labeling)
    return render_question(plan, typed, labeling, BUILTIN_REGISTRY)


def _render_fixture(domain: str, plan_name: str) -> str:
    return _render(domain, fixtures.plan_text(plan_name))


def test_carbon_question_renders_exactly():
    assert _render_fixture("emissions", "emissions") == (
        "What is the average amount of carbon emissions grouped by year "
        "in ascending order for country of United States of America?"
    )


def test_cross_entity_filter_question():
    assert _render_fixture("legal", "legal_join") == (
        "What is the average case duration grouped by year "
        "for name of colleen kollar-kotelly?"
    )


def test_boolean_question_quotes_contains_tokens():
    assert _render_fixture("incidents", "incidents_compare") == (
        'Is the count of unique incident id for weapon type containing "handgun" '
        'greater than count of unique incident id for weapon type containing "rifle"?'
    )


def test_grouped_question_without_filter():
    text = """
|1| retrieve_entity("Case")
|2| retrieve_attribute(|1|, "duration")
|3| retrieve_attribute(|1|, "case_type")
|4| groupby(|3|)
|5| average(|2|, |4|)
|6| collect(|3|, |5|)
|7| return(|6|)
"""
    assert _render("legal", text) == "What is the average case duration grouped by case type?"


def test_lookup_question_renders_value_nicename():
    text = """
|1| retrieve_entity("Incident")
|2| retrieve_attribute(|1|, "weapon_type")
|3| retrieve_attribute(|1|, "incident_id")
|4| exact(|3|, 101)
|5| collect(|2|)
|6| return(|5|, |4|)
"""
    assert _render("incidents", text) == "What is the weapon type for incident id of 101?"


def test_sorted_limited_question_uses_prefix_frame():
    text = """
|1| retrieve_entity("CarbonEmission")
|2| retrieve_attribute(|1|, "amount")
|3| retrieve_attribute(|1|, "year")
|4| groupby(|3|)
|5| average(|2|, |4|)
|6| sort(|3|, "desc")
|7| limit(10)
|8| retrieve_attribute(|1|, "country")
|9| exact(|8|, "China")
|10| collect(|3|, |5|)
|11| return(|10|, |9|, |6|, |7|)
"""
    assert _render("emissions", text) == (
        "For year sorted in descending order and limited to the top results, "
        "what is the average amount of carbon emissions for country of China?"
    )


def test_sort_on_ungrouped_attribute_renders_suffix():
    text = """
|1| retrieve_entity("CarbonEmission")
|2| retrieve_attribute(|1|, "amount")
|3| retrieve_attribute(|1|, "country")
|4| groupby(|3|)
|5| average(|2|, |4|)
|6| sort(|5|, "desc")
|7| collect(|3|, |5|)
|8| return(|7|, |6|)
"""
    assert _render("emissions", text) == (
        "What is the average amount of carbon emissions grouped by country "
        "sorted by average amount of carbon emissions in descending order?"
    )


def test_aggregate_filter_renders_comparison_phrase():
    text = """
|1| retrieve_entity("Case")
|2| retrieve_attribute(|1|, "case_id")
|3| retrieve_attribute(|1|, "case_type")
|4| groupby(|3|)
|5| count(|2|, |4|)
|6| greaterthan(|5|, 10)
|7| collect(|3|, |5|)
|8| return(|7|, |6|)
"""
    assert _render("legal", text) == (
        "What is the count of case id grouped by case type "
        "for count of case id grouped by case type greater than 10?"
    )


def test_conjunction_filter_joins_with_and():
    text = """
|1| retrieve_entity("CarbonEmission")
|2| retrieve_attribute(|1|, "amount")
|3| retrieve_attribute(|1|, "country")
|4| retrieve_attribute(|1|, "year")
|5| exact(|3|, "India")
|6| exact(|4|, 2020)
|7| and(|5|, |6|)
|8| sum(|2|)
|9| collect(|8|)
|10| return(|9|, |7|)
"""
    assert _render("emissions", text) == (
        "What is the sum of amount of carbon emissions "
        "for country of India and year of 2020?"
    )


def test_negated_filter_renders_not():
    text = """
|1| retrieve_entity("CarbonEmission")
|2| retrieve_attribute(|1|, "amount")
|3| retrieve_attribute(|1|, "country")
|4| exact(|3|, "India")
|5| not(|4|)
|6| sum(|2|)
|7| collect(|6|)
|8| return(|7|, |5|)
"""
    assert _render("emissions", text) == (
        "What is the sum of amount of carbon emissions for not country of India?"
    )


def test_filter_nicenames_cover_all_boolean_operations():
    expected = {
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
    assert dict(FILTER_NICENAMES) == expected


def test_tokenize_lowercases_and_splits_on_non_alphanumerics():
    assert tokenize('Is the COUNT of "9mm-handgun" rows > 5?') == [
        "is",
        "the",
        "count",
        "of",
        "9mm",
        "handgun",
        "rows",
        "5",
    ]


def _index():
    return build_index(
        [
            ("q1", "What is the average amount of carbon emissions grouped by year?"),
            ("q2", "What is the sum of amount of carbon emissions for country of China?"),
            ("q3", "What is the count of case id grouped by case type?"),
            ("q4", "What is the average case duration grouped by year?"),
        ]
    )


def test_search_ranks_by_shared_token_count():
    hits = search(_index(), "average amount of carbon emissions by year")
    assert [h.question_id for h in hits][:2] == ["q1", "q2"]
    assert hits[0].score > hits[1].score


def test_search_is_case_insensitive():
    upper = search(_index(), "AVERAGE CASE DURATION")
    lower = search(_index(), "average case duration")
    assert [(h.question_id, h.score) for h in upper] == [
        (h.question_id, h.score) for h in lower
    ]


def test_search_breaks_ties_by_shorter_text():
    index = build_index([("long", "alpha beta gamma delta epsilon"), ("short", "alpha beta")])
    hits = search(index, "alpha")
    assert [h.question_id for h in hits] == ["short", "long"]


def test_search_empty_query_returns_nothing():
    assert search(_index(), "") == []
    assert search(_index(), "   ?!  ") == []


def test_search_excludes_zero_scores_and_respects_limit():
    hits = search(_index(), "average", limit=1)
    assert len(hits) == 1
    assert all(isinstance(h, SearchHit) and h.score > 0 for h in hits)
    assert search(_index(), "zebra") == []


def test_search_counts_repeated_tokens_as_multiset_overlap():
    index = build_index([("rep", "amount amount amount"), ("one", "amount beta gamma")])
    hits = search(index, "amount amount")
    assert hits[0].question_id == "rep"
    assert hits[0].score == 2
    assert hits[1].score == 1
