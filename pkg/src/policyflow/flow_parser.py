"""Clean up extracted flows: entity normalization, dedup, party attribution and flow cases."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence

import inflect

from .agents import FlowRecord

log = logging.getLogger(__name__)

FIRST_PARTY = "first_party"
THIRD_PARTY = "third_party"
USER_PARTY = "user_party"
UNKNOWN = "unknown"
PARTY_ATTRIBUTES = (FIRST_PARTY, THIRD_PARTY, USER_PARTY, UNKNOWN)

USER_TO_FIRST = "user_to_first"
FIRST_TO_FIRST = "first_to_first"
THIRD_TO_FIRST = "third_to_first"
USER_TO_THIRD = "user_to_third"
FIRST_TO_THIRD = "first_to_third"
THIRD_TO_THIRD = "third_to_third"
INCOMPLETE = "incomplete"
FIRST_FAMILY = (USER_TO_FIRST, FIRST_TO_FIRST, THIRD_TO_FIRST)
THIRD_FAMILY = (USER_TO_THIRD, FIRST_TO_THIRD, THIRD_TO_THIRD)
FLOW_CASES = FIRST_FAMILY + THIRD_FAMILY + (INCOMPLETE,)

DEFAULT_SYNONYMS = Path(__file__).parent / "data" / "synonyms.json"

_POSSESSIVES = frozenset({"my", "our", "your", "their", "its", "his", "her"})
_STOPWORDS = frozenset({"the", "a", "an", "and", "or", "etc", "such", "as", "other", "any", "all",
                        "certain", "some", "these", "those", "this", "that", "relevant", "selected"})
# words after which the head noun phrase is over ("partners in the eu" -> "partners")
_PHRASE_BREAKS = frozenset({"of", "in", "on", "at", "by", "for", "from", "to", "with", "within",
                            "outside", "inside", "located", "based", "who", "which", "that",
                            "acting", "including", "like", "via", "under"})
# tokens inflect mangles ("we" -> "I", "data" -> "datum", "gps" -> "gp")
_NO_SINGULAR = frozenset({"we", "us", "you", "they", "them", "it", "its", "data", "news", "gps",
                          "sms", "mms", "media", "series", "species", "lens", "this", "has",
                          "was", "does", "always", "perhaps", "whereas", "ids"})
_NO_SINGULAR_SUFFIX = ("ss", "us", "is", "ics", "ous", "'s")

_inflect = inflect.engine()
_WS = re.compile(r"\s+")
_EDGE_PUNCT = " \t\n\"'`.,;:!?()[]{}"


@lru_cache(maxsize=None)
def _singular(token: str) -> str:
    if (not token.isalpha() or len(token) < 3 or token in _NO_SINGULAR
            or token.endswith(_NO_SINGULAR_SUFFIX) or not token.endswith("s")):
        return token
    single = _inflect.singular_noun(token)
    if not single or _singular(single) != single:
        # keep only singular forms that are themselves stable, so that
        # normalizing twice gives the same string
        return token
    return single


class SynonymTable:
    """Alias phrases mapped onto a canonical form; JSON ``{"canonical": ["alias", ...]}``."""

    def __init__(self, mapping: Mapping[str, Sequence[str]]):
        pairs = []
        for canonical, aliases in mapping.items():
            canon = _WS.sub(" ", canonical.lower()).strip()
            for alias in aliases:
                alias = _WS.sub(" ", alias.lower()).strip()
                if alias and alias != canon:
                    pairs.append((alias, canon))
        # longest alias first so "vehicle identification number" wins over "identifier"
        pairs.sort(key=lambda p: (-len(p[0]), p[0]))
        self.pairs = pairs
        self._patterns = [(re.compile(rf"(?<![\w-]){re.escape(a)}(?![\w-])"), c) for a, c in pairs]

    @classmethod
    def load(cls, path=None) -> "SynonymTable":
        path = Path(path or DEFAULT_SYNONYMS)
        data = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
            raise ValueError(f"{path}: expected an object of alias lists")
        return cls(data)

    def apply(self, text: str) -> str:
        for pattern, canonical in self._patterns:
            text = pattern.sub(canonical, text)
        return text


@lru_cache(maxsize=1)
def default_synonyms() -> SynonymTable:
    return SynonymTable.load()


def normalize_entity(text: str, synonyms: Optional[SynonymTable] = None) -> str:
    """Lowercase, squeeze whitespace, singularize the last token, fold known abbreviations."""
    if text is None:
        raise ValueError("cannot normalize an absent entity")
    table = synonyms if synonyms is not None else default_synonyms()
    text = text.replace("’", "'").lower()
    text = _WS.sub(" ", text).strip(_EDGE_PUNCT)
    text = table.apply(text)
    tokens = text.split(" ")
    if tokens and tokens[-1]:
        tokens[-1] = _singular(tokens[-1])
    return table.apply(" ".join(tokens))


@dataclass(frozen=True)
class EntityLexicon:
    org_name: str = ""
    first_party_keywords: FrozenSet[str] = frozenset({"we", "us", "app", "website"})
    user_party_keywords: FrozenSet[str] = frozenset({"you", "user", "customer"})

    @property
    def org_token(self) -> str:
        tokens = re.findall(r"[a-z0-9]+", self.org_name.lower())
        return tokens[0] if tokens else ""

    def matches_org(self, token: str) -> bool:
        org = self.org_token
        return bool(org) and token.strip("'").removesuffix("'s") == org


def _head_phrase(tokens: List[str]) -> List[str]:
    out = []
    for tok in tokens:
        if tok in _PHRASE_BREAKS and out:
            break
        out.append(tok)
    return out


def split_entity(entity: str):
    """Return ``(root, possessive, head_tokens)`` for a normalized entity string."""
    tokens = [t.strip(",;:()") for t in entity.split()]
    tokens = [t for t in tokens if t]
    head = _head_phrase(tokens)
    possessive = None
    content = []
    for tok in head:
        if tok in _POSSESSIVES or tok.endswith("'s"):
            if possessive is None:
                possessive = tok
            continue
        if tok not in _STOPWORDS:
            content.append(tok)
    root = content[-1] if content else (possessive or "")
    return root, possessive, content


def attribute_party(entity: Optional[str], lexicon: EntityLexicon) -> str:
    if entity is None or not entity.strip():
        return UNKNOWN
    root, possessive, content = split_entity(normalize_entity(entity))
    if root in lexicon.user_party_keywords:
        return USER_PARTY
    head_is_first = root in lexicon.first_party_keywords or any(lexicon.matches_org(t) for t in content)
    if not head_is_first:
        return THIRD_PARTY
    if possessive is None:
        return FIRST_PARTY
    owner = possessive.removesuffix("'s")
    if possessive == "our" or owner in lexicon.first_party_keywords or lexicon.matches_org(possessive):
        return FIRST_PARTY
    # "your app", "google's website": a first-party word owned by someone else
    return THIRD_PARTY


def classify_flow_case(sender_attr: str, receiver_attr: str) -> str:
    for attr in (sender_attr, receiver_attr):
        if attr not in PARTY_ATTRIBUTES:
            raise ValueError(f"unknown party attribute {attr!r}")
    if UNKNOWN in (sender_attr, receiver_attr):
        return INCOMPLETE
    if sender_attr == USER_PARTY and receiver_attr == USER_PARTY:
        log.info("user-to-user flow counted as incomplete")
        return INCOMPLETE
    sender = {USER_PARTY: "user", FIRST_PARTY: "first", THIRD_PARTY: "third"}[sender_attr]
    # the user attribute only applies on the sending side; a user receiver
    # falls back to the first/third split, where it is never first party
    family = "first" if receiver_attr == FIRST_PARTY else "third"
    return f"{sender}_to_{family}"


@dataclass(frozen=True)
class ParsedRecord:
    record: FlowRecord
    sender: Optional[str]
    data_type: str
    receiver: Optional[str]
    sender_attr: str
    receiver_attr: str
    case: str
    provenance: FrozenSet[int] = field(default_factory=frozenset)

    @property
    def segment_index(self) -> int:
        return self.record.flow.segment_index

    @property
    def data_category(self) -> str:
        return self.record.data_category

    @property
    def purpose(self) -> str:
        return self.record.purpose

    @property
    def method(self) -> str:
        return self.record.method

    def key(self):
        return (self.sender, self.data_type, self.receiver, self.data_category, self.purpose, self.method)

    def to_dict(self) -> dict:
        d = self.record.to_dict()
        d.update({
            "normalized": {"sender": self.sender, "data_type": self.data_type, "receiver": self.receiver},
            "sender_party": self.sender_attr,
            "receiver_party": self.receiver_attr,
            "flow_case": self.case,
            "segments": sorted(self.provenance),
        })
        return d


def parse_record(record: FlowRecord, lexicon: EntityLexicon, synonyms: Optional[SynonymTable] = None) -> ParsedRecord:
    flow = record.flow
    sender = normalize_entity(flow.sender, synonyms) if flow.sender else None
    receiver = normalize_entity(flow.receiver, synonyms) if flow.receiver else None
    s_attr = attribute_party(sender, lexicon)
    r_attr = attribute_party(receiver, lexicon)
    return ParsedRecord(
        record, sender or None, normalize_entity(flow.data_type, synonyms), receiver or None,
        s_attr, r_attr, classify_flow_case(s_attr, r_attr), frozenset({flow.segment_index}),
    )


def dedup_records(records: Iterable[ParsedRecord]) -> List[ParsedRecord]:
    """Merge records with equal normalized identity, keeping first-seen order."""
    merged: Dict[tuple, ParsedRecord] = {}
    for rec in records:
        key = rec.key()
        have = merged.get(key)
        if have is None:
            merged[key] = rec
            continue
        keep = rec if rec.segment_index < have.segment_index else have
        merged[key] = replace(keep, provenance=have.provenance | rec.provenance)
    return list(merged.values())


def parse_records(records: Iterable[FlowRecord], org_name: str = "",
                  synonyms: Optional[SynonymTable] = None) -> List[ParsedRecord]:
    lexicon = EntityLexicon(org_name)
    return dedup_records(parse_record(r, lexicon, synonyms) for r in records)
