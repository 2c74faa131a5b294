from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from policyflow.agents import DataFlow, FlowRecord
from policyflow.flow_parser import (FIRST_PARTY, FIRST_TO_FIRST, FIRST_TO_THIRD, INCOMPLETE, PARTY_ATTRIBUTES,
                                    THIRD_PARTY, THIRD_TO_FIRST, THIRD_TO_THIRD, UNKNOWN, USER_PARTY, USER_TO_FIRST,
                                    USER_TO_THIRD, EntityLexicon, SynonymTable, attribute_party, classify_flow_case,
                                    normalize_entity, parse_records)


@pytest.mark.parametrize("raw, want", [
    ("Customers", "customer"),
    ("  Email   Addresses. ", "email address"),
    ("Vehicle Identification Numbers", "vin"),
    ("internet protocol addresses", "ip address"),
    ("GPS", "gps"),
    ("we", "we"),
    ("usage data", "usage data"),
    ("service providers", "service provider"),
    ("Analytics", "analytics"),
    ("Honda’s partners", "honda's partner"),
])
def test_normalize_examples(raw, want):
    assert normalize_entity(raw) == want


def test_normalize_none_rejected():
    with pytest.raises(ValueError):
        normalize_entity(None)


def test_custom_synonyms():
    table = SynonymTable({"dtc": ["diagnostic trouble code"]})
    assert normalize_entity("Diagnostic Trouble Codes", table) == "dtc"


_text = st.text(alphabet="abcdefgs '.,-ABCS", min_size=1, max_size=25)


@settings(max_examples=300, deadline=None)
@given(_text)
def test_normalize_idempotent(text):
    once = normalize_entity(text)
    assert normalize_entity(once) == once


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([("vehicle identification number", "vehicle identification numbers"),
                        ("internet protocol address", "internet protocol addresses"),
                        ("diagnostic trouble code", "Diagnostic Trouble Codes"),
                        ("text message", "text messages")]))
def test_synonyms_fold_plurals(pair):
    singular, plural = pair
    assert normalize_entity(plural) == normalize_entity(singular)


HONDA = EntityLexicon("Honda")


@pytest.mark.parametrize("entity, want", [
    ("we", FIRST_PARTY),
    ("us", FIRST_PARTY),
    ("our website", FIRST_PARTY),
    ("the app", FIRST_PARTY),
    ("Honda", FIRST_PARTY),
    ("American Honda Motor Co.", FIRST_PARTY),
    ("you", USER_PARTY),
    ("customers", USER_PARTY),
    ("our users", USER_PARTY),
    ("Google", THIRD_PARTY),
    ("honda's partner", THIRD_PARTY),
    ("Honda dealers", FIRST_PARTY),  # org name in the head phrase
    ("partners of Honda", THIRD_PARTY),
    ("your app", THIRD_PARTY),
    ("google's website", THIRD_PARTY),
    (None, UNKNOWN),
    ("  ", UNKNOWN),
])
def test_attribution(entity, want):
    assert attribute_party(entity, HONDA) == want


def test_org_as_whole_word_only():
    assert attribute_party("Hondata Inc", HONDA) == THIRD_PARTY
    assert attribute_party("Renault Group", EntityLexicon("Renault")) == FIRST_PARTY


EXPECTED_CASES = {
    (USER_PARTY, FIRST_PARTY): USER_TO_FIRST,
    (FIRST_PARTY, FIRST_PARTY): FIRST_TO_FIRST,
    (THIRD_PARTY, FIRST_PARTY): THIRD_TO_FIRST,
    (USER_PARTY, THIRD_PARTY): USER_TO_THIRD,
    (FIRST_PARTY, THIRD_PARTY): FIRST_TO_THIRD,
    (THIRD_PARTY, THIRD_PARTY): THIRD_TO_THIRD,
    (FIRST_PARTY, USER_PARTY): FIRST_TO_THIRD,
    (THIRD_PARTY, USER_PARTY): THIRD_TO_THIRD,
    (USER_PARTY, USER_PARTY): INCOMPLETE,
}


@pytest.mark.parametrize("pair", list(product(PARTY_ATTRIBUTES, repeat=2)))
def test_case_table(pair):
    want = INCOMPLETE if UNKNOWN in pair else EXPECTED_CASES[pair]
    assert classify_flow_case(*pair) == want


def test_case_rejects_bad_attribute():
    with pytest.raises(ValueError):
        classify_flow_case("robot", FIRST_PARTY)


def rec(sender, dtype, receiver, idx=0, category="Contact", purpose="Marketing"):
    return FlowRecord(DataFlow(sender, dtype, receiver, idx), category, "First Party", purpose, "Active")


def test_parse_and_dedup():
    records = [
        rec("you", "Email Addresses", "we", 3),
        rec("You", "email address", "We", 1),
        rec("you", "email address", "we", 2, purpose="Analytics or Research"),
        rec(None, "VIN", "Honda dealers", 4),
    ]
    parsed = parse_records(records, "Honda")
    assert len(parsed) == 3
    first = parsed[0]
    assert (first.sender, first.data_type, first.receiver) == ("you", "email address", "we")
    assert first.segment_index == 1 and first.provenance == frozenset({1, 3})
    assert first.case == USER_TO_FIRST
    assert parsed[2].case == INCOMPLETE and parsed[2].sender is None
    assert parsed[2].data_type == "vin" and parsed[2].receiver_attr == FIRST_PARTY


def test_parsed_to_dict():
    (p,) = parse_records([rec("Google", "GPS", "us", 5)], "Honda")
    d = p.to_dict()
    assert d["flow_case"] == THIRD_TO_FIRST
    assert d["normalized"] == {"sender": "google", "data_type": "gps", "receiver": "us"}
    assert d["segments"] == [5]
