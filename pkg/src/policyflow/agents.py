"""LLM agents: screening, flow extraction and the four retrieval-augmented classifiers."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import knowledge as kb_mod
from .errors import BackendError, LabelOutOfVocabulary, ParseFailure
from .knowledge import KnowledgeBase, RetrievalPolicy, RetrievedContext
from .llm import ChatRequest, Gateway, RawFlow, parse_flow_output, parse_label_output
from .segmenter import PolicyDocument, Segment, neighbors, segment_html

log = logging.getLogger(__name__)

SCREENING = "screening"
FLOW = "flow"
AGENTS = (SCREENING, FLOW, kb_mod.DATA_CATEGORY, kb_mod.CONSUMER_TYPE, kb_mod.PURPOSE, kb_mod.METHOD)

UNDEFINED = "Undefined"
# label used when a classifier answers outside its vocabulary
REPAIR_LABEL = {
    kb_mod.DATA_CATEGORY: "Other",
    kb_mod.CONSUMER_TYPE: UNDEFINED,
    kb_mod.PURPOSE: "Unspecified",
    kb_mod.METHOD: "Unspecified",
}
LABEL_KEY = {
    kb_mod.DATA_CATEGORY: "DataCategory",
    kb_mod.CONSUMER_TYPE: "ConsumerType",
    kb_mod.PURPOSE: "Purpose",
    kb_mod.METHOD: "Method",
}
_CONTEXT_LABELS = {
    kb_mod.DATA_CATEGORY: ("Data category", "Data description", "Example data types"),
    kb_mod.CONSUMER_TYPE: ("Data consumer type", "Description", "Example entities"),
    kb_mod.PURPOSE: ("Data processing purpose", "Description", "Examples"),
    kb_mod.METHOD: ("Data processing method", "Description", "Examples"),
}

# model assignment mirrors the large/small split: big models for screening,
# extraction and data categories, a small one for the light classifiers
DEFAULT_MODELS = {
    SCREENING: "llama-3.3-70b-versatile",
    FLOW: "llama-3.3-70b-versatile",
    kb_mod.DATA_CATEGORY: "llama3-70b-8192",
    kb_mod.CONSUMER_TYPE: "llama-3.1-8b-instant",
    kb_mod.PURPOSE: "llama-3.1-8b-instant",
    kb_mod.METHOD: "llama-3.1-8b-instant",
}

TEMPLATE_DIR = Path(__file__).parent / "prompts"
PLACEHOLDERS = ("{TEXT_SEGMENT}", "{INPUT_DATA_TYPE}", "{DATA_FLOW}", "{CONTEXTS}", "{PREV}", "{NEXT}")


@dataclass(frozen=True)
class PromptTemplate:
    agent: str
    system_rules: str
    user_skeleton: str

    @classmethod
    def parse(cls, agent: str, text: str) -> "PromptTemplate":
        if "[system]" not in text or "[user]" not in text:
            raise ValueError(f"template for {agent} needs [system] and [user] sections")
        system = text.split("[system]", 1)[1].split("[user]", 1)[0].strip()
        user = text.split("[user]", 1)[1].strip()
        return cls(agent, system, user)

    @classmethod
    def load(cls, agent: str, template_dir=None) -> "PromptTemplate":
        path = Path(template_dir or TEMPLATE_DIR) / f"{agent}.txt"
        return cls.parse(agent, path.read_text(encoding="utf-8"))

    def render(self, **values: str) -> Tuple[str, str]:
        user = self.user_skeleton
        for name in PLACEHOLDERS:
            user = user.replace(name, values.get(name.strip("{}"), ""))
        system, user = self.system_rules.strip(), user.strip()
        if not system or not user:
            raise ValueError(f"{self.agent} prompt rendered empty")
        return system, user


@dataclass(frozen=True)
class DataFlow:
    sender: Optional[str]
    data_type: str
    receiver: Optional[str]
    segment_index: int

    def __post_init__(self):
        if not self.data_type or not self.data_type.strip():
            raise ValueError("data_type must be non-empty")

    def render(self) -> str:
        return f"{self.sender or '?'} → {self.data_type} → {self.receiver or '?'}"


@dataclass(frozen=True)
class Classification:
    label: str
    trace: Tuple[Tuple[str, float], ...]


@dataclass(frozen=True)
class FlowRecord:
    flow: DataFlow
    data_category: str
    consumer_type: str
    purpose: str
    method: str
    retrieval_trace: Dict[str, Tuple[Tuple[str, float], ...]] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "segment_index": self.flow.segment_index,
            "sender": self.flow.sender,
            "data_type": self.flow.data_type,
            "receiver": self.flow.receiver,
            "data_category": self.data_category,
            "consumer_type": self.consumer_type,
            "purpose": self.purpose,
            "method": self.method,
            "retrieval_trace": {
                agent: [[name, round(score, 6)] for name, score in self.retrieval_trace.get(agent, ())]
                for agent in LABEL_KEY
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FlowRecord":
        flow = DataFlow(data.get("sender"), data["data_type"], data.get("receiver"), int(data["segment_index"]))
        trace = {a: tuple((n, float(s)) for n, s in pairs) for a, pairs in data.get("retrieval_trace", {}).items()}
        return cls(flow, data["data_category"], data["consumer_type"], data["purpose"], data["method"], trace)


def _unique(items: Sequence[str]) -> List[str]:
    seen, out = set(), []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def expand_flows(raw_flows: Sequence[RawFlow], segment_index: int) -> List[DataFlow]:
    """Cartesian product senders x types x receivers; an empty side becomes ⊥ (None)."""
    flows = []
    for raw in raw_flows:
        senders = _unique(raw.senders) or [None]
        receivers = _unique(raw.receivers) or [None]
        for s, t, r in product(senders, _unique(raw.data_types), receivers):
            flows.append(DataFlow(s, t, r, segment_index))
    return flows


@dataclass
class AgentSettings:
    models: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MODELS))
    temperature: float = 0.5
    top_p: float = 0.5
    retrieval: RetrievalPolicy = field(default_factory=RetrievalPolicy)
    workers: int = 1


@dataclass
class SegmentOutcome:
    index: int
    status: str  # irrelevant | no_flows | processed | unprocessed
    records: List[FlowRecord] = field(default_factory=list)
    detail: str = ""


@dataclass
class PipelineResult:
    policy_id: str
    segments: List[Segment]
    outcomes: List[SegmentOutcome]

    @property
    def records(self) -> List[FlowRecord]:
        return [r for o in self.outcomes for r in o.records]


class Agents:
    """Holds the gateway, knowledge base and templates shared by all agents."""

    def __init__(self, gateway: Gateway, knowledge: KnowledgeBase, settings: Optional[AgentSettings] = None,
                 template_dir=None):
        self.gateway = gateway
        self.kb = knowledge
        self.settings = settings or AgentSettings()
        self.templates = {a: PromptTemplate.load(a, template_dir) for a in AGENTS}

    def _ask(self, agent: str, **values: str) -> str:
        system, user = self.templates[agent].render(**values)
        req = ChatRequest(system, user, self.settings.models.get(agent, DEFAULT_MODELS[agent]),
                          self.settings.temperature, self.settings.top_p, agent=agent)
        return self.gateway.complete(req).text

    # -- screening and extraction ------------------------------------------

    def screen(self, segment: Segment) -> bool:
        if not segment.text.strip():
            raise ValueError("cannot screen an empty segment")
        answer = self._ask(SCREENING, TEXT_SEGMENT=segment.text).strip().strip(".").upper()
        if answer not in ("YES", "NO"):
            log.warning("screening answer %r for segment %d is not YES/NO; treating as NO", answer, segment.index)
        return answer == "YES"

    def _extract(self, segment: Segment) -> List[DataFlow]:
        text = self._ask(FLOW, TEXT_SEGMENT=segment.text)
        return expand_flows(parse_flow_output(text), segment.index)

    def extract_flows(self, segment: Segment) -> List[DataFlow]:
        try:
            return self._extract(segment)
        except ParseFailure as exc:
            log.warning("segment %d left unprocessed: %s", segment.index, exc)
            return []

    # -- classifiers --------------------------------------------------------

    def _render_contexts(self, kind: str, contexts: Sequence[RetrievedContext], start: int) -> str:
        label, desc, examples = _CONTEXT_LABELS[kind]
        blocks = []
        for i, ctx in enumerate(contexts, start):
            lines = [f"[{i}] CONTEXT:", f"    {label}: {ctx.node.name}"]
            if ctx.node.description:
                lines.append(f"    {desc}: {ctx.node.description}")
            if ctx.node.examples:
                lines.append(f"    {examples}: {', '.join(ctx.node.examples)}")
            blocks.append("\n".join(lines))
        return "\n".join(blocks)

    def _classify(self, kind: str, query: str, policy: RetrievalPolicy, first_context: int,
                  allowed: Sequence[str], **values: str) -> Classification:
        contexts = self.kb[kind].retrieve(query, policy)
        trace = tuple((c.node.name, c.score) for c in contexts)
        values["CONTEXTS"] = self._render_contexts(kind, contexts, first_context)
        answer = self._ask(kind, **values)
        try:
            label = parse_label_output(answer, allowed, key=LABEL_KEY[kind])
        except (ParseFailure, LabelOutOfVocabulary) as exc:
            label = REPAIR_LABEL[kind]
            log.warning("%s answer repaired to %r: %s", kind, label, exc)
        return Classification(label, trace)

    def classify_data_category(self, flow: DataFlow, segment: Segment) -> Classification:
        return self._classify(
            kb_mod.DATA_CATEGORY, flow.data_type, self.settings.retrieval, 3,
            self.kb.vocabulary(kb_mod.DATA_CATEGORY),
            INPUT_DATA_TYPE=flow.data_type, TEXT_SEGMENT=segment.text,
        )

    def classify_consumer_type(self, flow: DataFlow, segment: Segment) -> Classification:
        query = f"{flow.render()}\n{segment.text}"
        return self._classify(
            kb_mod.CONSUMER_TYPE, query, self.settings.retrieval, 3,
            self.kb.vocabulary(kb_mod.CONSUMER_TYPE) + [UNDEFINED],
            DATA_FLOW=flow.render(), TEXT_SEGMENT=segment.text,
        )

    def classify_purpose(self, flow: DataFlow, segment: Segment) -> Classification:
        query = f"{flow.render()}\n{segment.text}"
        return self._classify(
            kb_mod.PURPOSE, query, self.settings.retrieval, 3,
            self.kb.vocabulary(kb_mod.PURPOSE),
            DATA_FLOW=flow.render(), TEXT_SEGMENT=segment.text,
        )

    def classify_method(self, flow: DataFlow, segment: Segment, prev: Optional[Segment],
                        nxt: Optional[Segment]) -> Classification:
        prev_text = prev.text if prev else ""
        next_text = nxt.text if nxt else ""
        query = "\n".join(t for t in (flow.render(), prev_text, segment.text, next_text) if t)
        # only the single best context is used for the method agent
        policy = RetrievalPolicy(self.settings.retrieval.threshold, 1)
        return self._classify(
            kb_mod.METHOD, query, policy, 5,
            self.kb.vocabulary(kb_mod.METHOD),
            DATA_FLOW=flow.render(), PREV=prev_text, TEXT_SEGMENT=segment.text, NEXT=next_text,
        )

    def annotate(self, flow: DataFlow, segments: Sequence[Segment]) -> FlowRecord:
        segment = segments[flow.segment_index]
        prev, nxt = neighbors(segments, flow.segment_index)
        results = {
            kb_mod.DATA_CATEGORY: self.classify_data_category(flow, segment),
            kb_mod.CONSUMER_TYPE: self.classify_consumer_type(flow, segment),
            kb_mod.PURPOSE: self.classify_purpose(flow, segment),
            kb_mod.METHOD: self.classify_method(flow, segment, prev, nxt),
        }
        return FlowRecord(
            flow,
            results[kb_mod.DATA_CATEGORY].label,
            results[kb_mod.CONSUMER_TYPE].label,
            results[kb_mod.PURPOSE].label,
            results[kb_mod.METHOD].label,
            {k: c.trace for k, c in results.items()},
        )

    # -- orchestration ------------------------------------------------------

    def process_segment(self, segments: Sequence[Segment], i: int) -> SegmentOutcome:
        segment = segments[i]
        try:
            if not self.screen(segment):
                return SegmentOutcome(i, "irrelevant")
            try:
                flows = self._extract(segment)
            except ParseFailure as exc:
                log.warning("segment %d left unprocessed: %s", i, exc)
                return SegmentOutcome(i, "unprocessed", detail=f"parse failure: {exc}")
            if not flows:
                return SegmentOutcome(i, "no_flows")
            records = [self.annotate(flow, segments) for flow in flows]
            return SegmentOutcome(i, "processed", records)
        except BackendError as exc:
            log.warning("segment %d skipped after backend error: %s", i, exc)
            return SegmentOutcome(i, "unprocessed", detail=f"backend error: {exc}")

    def run(self, doc: PolicyDocument) -> PipelineResult:
        segments = segment_html(doc)
        workers = max(1, self.settings.workers)
        if workers == 1:
            outcomes = [self.process_segment(segments, i) for i in range(len(segments))]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(lambda i: self.process_segment(segments, i), range(len(segments))))
        outcomes.sort(key=lambda o: o.index)
        return PipelineResult(doc.id, segments, outcomes)


def run_pipeline(doc: PolicyDocument, agents: Agents) -> List[FlowRecord]:
    return agents.run(doc).records
