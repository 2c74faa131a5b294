"""
Running the pipeline on recorded answers
========================================

The mock backend replays recorded model answers, so the whole pipeline
(screening, flow extraction, four classifiers, party attribution, graph and
statistics) runs offline and gives the same bytes every time. This demo
uses the two-policy corpus shipped with the tests.
"""
from pathlib import Path

from policyflow.agents import AgentSettings, Agents
from policyflow.analyser import compute_flow_stats, network_summary
from policyflow.flow_parser import parse_records
from policyflow.graph import build_graph, to_dot, top_k
from policyflow.knowledge import KnowledgeBase
from policyflow.llm import Gateway, MockBackend
from policyflow.segmenter import PolicyDocument

CORPUS = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "corpus"

agents = Agents(Gateway(MockBackend(CORPUS / "responses")), KnowledgeBase.load(), AgentSettings(workers=2))
html = (CORPUS / "policies" / "honda.html").read_text(encoding="utf-8")
result = agents.run(PolicyDocument("honda", "Honda", html))

# %%
# Each segment ends in one of four states; only ``processed`` ones yield flows.
for outcome in result.outcomes:
    print(outcome.index, outcome.status, len(outcome.records))

# %%
# Flows are normalized, attributed to parties and deduplicated.
parsed = parse_records(result.records, "Honda")
for rec in parsed:
    print(f"{rec.sender!s:28} {rec.data_type:24} {rec.receiver!s:14} {rec.case}")

# %%
# The flow graph alternates party and data-type nodes.
graph = build_graph(parsed, "honda")
print(network_summary(graph))
print(compute_flow_stats(parsed, "honda").to_dict()["freq"])
print("most central by betweenness:", top_k(graph, "betweenness", 3))

# %%
# The DOT export can be rendered with Graphviz (``dot -Tsvg``).
print(to_dot(graph)[:400])
