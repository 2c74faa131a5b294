import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import risk_oracle
from policyflow.agents import DataFlow, FlowRecord
from policyflow.analyser import (FIRST_TOTAL, THIRD_TOTAL, FlowStats, RiskWeights, category_distribution,
                                 category_purpose_matrix, compute_flow_stats, compute_risk_scores, corpus_maxima,
                                 network_summary, report_csv, report_rows, report_text)
from policyflow.errors import EmptyCorpus
from policyflow.flow_parser import (FIRST_FAMILY, FLOW_CASES, INCOMPLETE, THIRD_FAMILY, USER_TO_FIRST,
                                    parse_records)
from policyflow.graph import build_graph


def rec(sender, dtype, receiver, category="Contact", purpose="Marketing", idx=0):
    return FlowRecord(DataFlow(sender, dtype, receiver, idx), category, "First Party", purpose, "Active")


def stats(pid, **freq):
    full = {c: 0.0 for c in FLOW_CASES}
    full.update(freq)
    return FlowStats(pid, 10, full)


def test_flow_stats_example():
    parsed = parse_records([rec("you", "name", "we"), rec("you", "email", "we"),
                            rec("we", "vin", "Google"), rec(None, "gps", "we")], "Honda")
    s = compute_flow_stats(parsed, "honda")
    assert s.total_flows == 4
    assert s.freq[USER_TO_FIRST] == 0.5 and s.freq["first_to_third"] == 0.25 and s.freq[INCOMPLETE] == 0.25
    assert sum(s.freq.values()) == pytest.approx(1.0)
    assert s.component(FIRST_TOTAL) == 0.5 and s.component(THIRD_TOTAL) == 0.25


def test_zero_flows():
    s = compute_flow_stats([], "empty")
    assert s.zero_flows and all(v == 0 for v in s.freq.values())


def test_stats_round_trip():
    s = stats("a", user_to_first=0.4, incomplete=0.6)
    assert FlowStats.from_dict(s.to_dict()) == s


def test_risk_example():
    a = stats("a", user_to_first=0.5, third_to_first=0.5)
    b = stats("b", user_to_first=1.0)
    ra, rb = compute_risk_scores([a, b])
    # first family maxima are (1.0, 0, 0.5)
    assert ra.first_party_score == pytest.approx((0.5 + 2.25 * 0.5) / (1.0 + 2.25 * 0.5))
    assert rb.first_party_score == pytest.approx(1.0 / (1.0 + 2.25 * 0.5))
    assert ra.third_party_score == 0.0


def test_zero_flow_policy_excluded_from_maxima():
    a = stats("a", user_to_first=0.5)
    empty = FlowStats("e", 0, {c: 0.0 for c in FLOW_CASES})
    assert corpus_maxima([a, empty])[USER_TO_FIRST] == 0.5
    ra, re_ = compute_risk_scores([a, empty])
    assert ra.first_party_score == 1.0 and re_.overall_score == 0.0


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        compute_risk_scores([])


def test_weights_validation():
    with pytest.raises(ValueError):
        RiskWeights(first_family=(1.0, 0.0, 1.0))


_freqs = st.lists(st.floats(0, 1), min_size=7, max_size=7)


@settings(max_examples=100, deadline=None)
@given(st.lists(_freqs, min_size=1, max_size=6), st.floats(0.01, 100))
def test_risk_matches_oracle_and_scale_invariant(rows, c):
    corpus = [FlowStats(f"p{i}", 5, dict(zip(FLOW_CASES, row))) for i, row in enumerate(rows)]
    w = RiskWeights()
    got = compute_risk_scores(corpus, w)
    scaled = compute_risk_scores(corpus, w.scaled(c))
    first = risk_oracle([[s.component(k) for k in FIRST_FAMILY] for s in corpus], w.first_family)
    third = risk_oracle([[s.component(k) for k in THIRD_FAMILY] for s in corpus], w.third_family)
    overall = risk_oracle([[s.component(k) for k in (FIRST_TOTAL, THIRD_TOTAL, INCOMPLETE)] for s in corpus],
                          w.overall)
    for r, r2, f, t, o in zip(got, scaled, first, third, overall):
        assert r.first_party_score == pytest.approx(f, abs=1e-12)
        assert r.third_party_score == pytest.approx(t, abs=1e-12)
        assert r.overall_score == pytest.approx(o, abs=1e-12)
        for k in ("first_party_score", "third_party_score", "overall_score"):
            assert abs(getattr(r, k) - getattr(r2, k)) <= 1e-12
            assert 0.0 <= getattr(r, k) <= 1.0 + 1e-12


def test_category_distribution():
    parsed = parse_records([rec("you", "GPS", "we", "Location"), rec("you", "gps", "Google", "Location"),
                            rec("you", "email", "we", "Contact")], "Honda")
    dist = category_distribution(parsed, ["Location", "Contact", "Finance"])
    assert dist == {"Location": 1, "Contact": 1, "Finance": 0}


def test_category_purpose_matrix():
    parsed = parse_records([rec("you", "gps", "we", "Location", "Marketing"),
                            rec("you", "gps", "Google", "Location", "Marketing"),
                            rec("you", "email", "we", "Contact", "Advertising")], "Honda")
    assert category_purpose_matrix(parsed) == {"Contact": {"Advertising": 1}, "Location": {"Marketing": 2}}


def test_network_summary():
    g = build_graph(parse_records([rec("you", "email", "we"), rec("we", "vin", "Google")], "Honda"), "h")
    assert network_summary(g) == {"edges": 4, "first_party_nodes": 1, "third_party_nodes": 1,
                                  "user_party_nodes": 1, "data_type_nodes": 2}


def _report():
    s = stats("a", user_to_first=1.0)
    return {
        "policies": [{"policy_id": "a", "flow_stats": s.to_dict(),
                      "network_summary": {"edges": 2, "first_party_nodes": 1, "third_party_nodes": 0,
                                          "user_party_nodes": 1, "data_type_nodes": 1},
                      "category_distribution": {"Contact": 1},
                      "top_nodes": {"degree": [["we", 1.0]]}}],
        "risk_scores": [r.to_dict() for r in compute_risk_scores([s])],
        "category_purpose_matrix": {"Contact": {"Marketing": 1}},
    }


def test_report_rows_aligned():
    header, row = report_rows(_report())
    assert len(header) == len(row)
    cols = dict(zip(header, row))
    assert cols["edges"] == "2" and cols["first_party_score"] == "1.00" and cols["category:Contact"] == "1"


def test_report_csv_and_text():
    assert report_csv(_report()).splitlines()[1].startswith("a,10,1.00")
    text = report_text(_report())
    for heading in ("Network summary", "Flow statistics", "Risk scores", "Category x purpose", "Top degree nodes: a"):
        assert heading in text
