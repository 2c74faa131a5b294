"""Corpus statistics: flow-case frequencies, max-normalized risk scores, category tables."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import EmptyCorpus
from .flow_parser import (FIRST_FAMILY, FLOW_CASES, INCOMPLETE, THIRD_FAMILY, USER_PARTY, FIRST_PARTY,
                          THIRD_PARTY, ParsedRecord, normalize_entity)
from .graph import DATA_TYPE, PARTY, DataFlowGraph

REPORT_SCHEMA = 1
FIRST_TOTAL = "first_total"
THIRD_TOTAL = "third_total"
OVERALL_COMPONENTS = (FIRST_TOTAL, THIRD_TOTAL, INCOMPLETE)


@dataclass(frozen=True)
class FlowStats:
    policy_id: str
    total_flows: int
    freq: Mapping[str, float]

    @property
    def zero_flows(self) -> bool:
        return self.total_flows == 0

    def component(self, name: str) -> float:
        if name == FIRST_TOTAL:
            return sum(self.freq.get(c, 0.0) for c in FIRST_FAMILY)
        if name == THIRD_TOTAL:
            return sum(self.freq.get(c, 0.0) for c in THIRD_FAMILY)
        return self.freq.get(name, 0.0)

    def to_dict(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "total_flows": self.total_flows,
            "zero_flows": self.zero_flows,
            "freq": {c: self.freq.get(c, 0.0) for c in FLOW_CASES},
            FIRST_TOTAL: self.component(FIRST_TOTAL),
            THIRD_TOTAL: self.component(THIRD_TOTAL),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FlowStats":
        return cls(data["policy_id"], int(data["total_flows"]), {c: float(v) for c, v in data["freq"].items()})


def compute_flow_stats(records: Sequence[ParsedRecord], policy_id: str = "") -> FlowStats:
    counts = Counter(r.case for r in records)
    total = len(records)
    if total == 0:
        return FlowStats(policy_id, 0, {c: 0.0 for c in FLOW_CASES})
    return FlowStats(policy_id, total, {c: counts.get(c, 0) / total for c in FLOW_CASES})


@dataclass(frozen=True)
class RiskWeights:
    first_family: Tuple[float, float, float] = (1.0, 1.5, 2.25)
    third_family: Tuple[float, float, float] = (1.0, 1.5, 2.25)
    overall: Tuple[float, float, float] = (1.0, 1.5, 2.25)

    def __post_init__(self):
        for group in (self.first_family, self.third_family, self.overall):
            if len(group) != 3 or any(w <= 0 for w in group):
                raise ValueError("risk weights come in triples of positive numbers")

    def scaled(self, c: float) -> "RiskWeights":
        return RiskWeights(*(tuple(w * c for w in g) for g in (self.first_family, self.third_family, self.overall)))

    def groups(self):
        return (
            ("first_party_score", FIRST_FAMILY, self.first_family),
            ("third_party_score", THIRD_FAMILY, self.third_family),
            ("overall_score", OVERALL_COMPONENTS, self.overall),
        )

    def to_dict(self) -> dict:
        return {"first_family": dict(zip(FIRST_FAMILY, self.first_family)),
                "third_family": dict(zip(THIRD_FAMILY, self.third_family)),
                "overall": dict(zip(OVERALL_COMPONENTS, self.overall))}


@dataclass(frozen=True)
class RiskScores:
    policy_id: str
    first_party_score: float
    third_party_score: float
    overall_score: float

    def to_dict(self) -> dict:
        return {"policy_id": self.policy_id, "first_party_score": self.first_party_score,
                "third_party_score": self.third_party_score, "overall_score": self.overall_score}


def corpus_maxima(stats: Sequence[FlowStats]) -> Dict[str, float]:
    """Per-component maximum over the corpus; policies without flows do not count."""
    counted = [s for s in stats if not s.zero_flows]
    names = FLOW_CASES + (FIRST_TOTAL, THIRD_TOTAL)
    return {n: max((s.component(n) for s in counted), default=0.0) for n in names}


def compute_risk_scores(stats: Sequence[FlowStats], weights: Optional[RiskWeights] = None) -> List[RiskScores]:
    if not stats:
        raise EmptyCorpus("risk scores need at least one policy")
    weights = weights or RiskWeights()
    maxima = corpus_maxima(stats)
    out = []
    for s in stats:
        values = {}
        for name, components, w in weights.groups():
            denom = sum(wj * maxima[c] for wj, c in zip(w, components))
            num = sum(wj * s.component(c) for wj, c in zip(w, components))
            values[name] = num / denom if denom > 0 else 0.0
        out.append(RiskScores(s.policy_id, **values))
    return out


def category_distribution(records: Iterable[ParsedRecord], categories: Sequence[str] = ()) -> Dict[str, int]:
    """Distinct normalized data types per data category; listed categories default to 0."""
    seen: Dict[str, set] = {c: set() for c in categories}
    for r in records:
        seen.setdefault(r.data_category, set()).add(normalize_entity(r.data_type))
    return {c: len(v) for c, v in seen.items()}


def category_purpose_matrix(records: Iterable[ParsedRecord]) -> Dict[str, Dict[str, int]]:
    counts = Counter((r.data_category, r.purpose) for r in records)
    matrix: Dict[str, Dict[str, int]] = {}
    for (cat, purpose), n in sorted(counts.items()):
        matrix.setdefault(cat, {})[purpose] = n
    return matrix


def network_summary(graph: DataFlowGraph) -> Dict[str, int]:
    parties = Counter(n.attribute for n in graph.nodes if n.role == PARTY)
    return {
        "edges": len(graph.edges),
        "first_party_nodes": parties.get(FIRST_PARTY, 0),
        "third_party_nodes": parties.get(THIRD_PARTY, 0),
        "user_party_nodes": parties.get(USER_PARTY, 0),
        "data_type_nodes": sum(1 for n in graph.nodes if n.role == DATA_TYPE),
    }


# --- report rendering -------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.2f}"


def report_rows(report: dict) -> List[List[str]]:
    """Flatten a corpus report into one CSV row per policy."""
    policies = report["policies"]
    risk = {r["policy_id"]: r for r in report.get("risk_scores", [])}
    categories = sorted({c for p in policies for c in p.get("category_distribution", {})})
    net_keys = ["edges", "first_party_nodes", "third_party_nodes", "user_party_nodes", "data_type_nodes"]
    header = (["policy_id", "total_flows"] + list(FLOW_CASES) + [FIRST_TOTAL, THIRD_TOTAL]
              + ["first_party_score", "third_party_score", "overall_score"]
              + net_keys
              + [f"category:{c}" for c in categories])
    rows = [header]
    for p in policies:
        stats = p["flow_stats"]
        r = risk.get(p["policy_id"], {})
        net = p.get("network_summary", {})
        rows.append(
            [p["policy_id"], str(stats["total_flows"])]
            + [_fmt(stats["freq"][c]) for c in FLOW_CASES]
            + [_fmt(stats[FIRST_TOTAL]), _fmt(stats[THIRD_TOTAL])]
            + [_fmt(r[k]) if k in r else "" for k in ("first_party_score", "third_party_score", "overall_score")]
            + [str(net.get(k, "")) for k in net_keys]
            + [str(p.get("category_distribution", {}).get(c, 0)) for c in categories]
        )
    return rows


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(report_rows(report))
    return buf.getvalue()


def _table(rows: List[List[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def report_text(report: dict) -> str:
    policies = report["policies"]
    ids = [p["policy_id"] for p in policies]
    out = ["Network summary"]
    keys = ["edges", "first_party_nodes", "third_party_nodes", "user_party_nodes", "data_type_nodes"]
    out.append(_table([[""] + ids] + [[k] + [str(p["network_summary"][k]) for p in policies] for k in keys]))

    out += ["", "Flow statistics"]
    rows = [["", *ids], ["flows", *(str(p["flow_stats"]["total_flows"]) for p in policies)]]
    for c in FLOW_CASES:
        rows.append([c, *(_fmt(p["flow_stats"]["freq"][c]) for p in policies)])
    out.append(_table(rows))

    out += ["", "Risk scores"]
    risk = {r["policy_id"]: r for r in report.get("risk_scores", [])}
    rows = [["", *ids]]
    for k in ("first_party_score", "third_party_score", "overall_score"):
        rows.append([k, *(_fmt(risk[i][k]) if i in risk else "-" for i in ids)])
    out.append(_table(rows))

    out += ["", "Data categories (distinct data types)"]
    cats = sorted({c for p in policies for c in p["category_distribution"]})
    out.append(_table([["", *ids]] + [[c, *(str(p["category_distribution"].get(c, 0)) for p in policies)]
                                       for c in cats]))

    matrix = report.get("category_purpose_matrix", {})
    if matrix:
        purposes = sorted({pp for row in matrix.values() for pp in row})
        out += ["", "Category x purpose"]
        out.append(_table([["", *purposes]] + [[c, *(str(matrix[c].get(pp, 0)) for pp in purposes)]
                                               for c in sorted(matrix)]))

    for p in policies:
        for metric, ranked in p.get("top_nodes", {}).items():
            out += ["", f"Top {metric} nodes: {p['policy_id']}"]
            out.append(_table([[node, f"{score:.4f}"] for node, score in ranked] or [["(none)", ""]]))
    return "\n".join(out) + "\n"
