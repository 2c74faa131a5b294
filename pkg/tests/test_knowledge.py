import json
import math

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cosine, retrieval_oracle
from policyflow.errors import EmptyIndex, ProviderUnavailable, SchemaViolation, UnknownKind
from policyflow.knowledge import (DEFAULT_KB_DIR, KINDS, REQUIRED_NODES, SOCIAL_MEDIA_PURPOSE, HashingEmbedder,
                                  KnowledgeBase, KnowledgeNode, KnowledgeTypology, RemoteEmbedder, RetrievalPolicy,
                                  TypologyIndex, cosine_similarity, embed, load_typology, select_contexts,
                                  typology_from_dict)


class TableEmbedder:
    """Looks vectors up by exact text; used to force chosen cosine scores."""

    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.dim = len(next(iter(self.table.values())))

    def embed(self, text):
        return self.table[text]

    def embed_many(self, texts):
        return np.vstack([self.table[t] for t in texts])


def forced_index(scores):
    """Index whose node scores against the query "q" equal ``scores`` exactly."""
    nodes = tuple(KnowledgeNode(name, f"about {name}") for name in scores)
    table = {"q": [1.0, 0.0]}
    for node in nodes:
        s = scores[node.name]
        table[node.render()] = [s, math.sqrt(1 - s * s)]
    typology = KnowledgeTypology("method", "root", nodes)
    return TypologyIndex.build(typology, TableEmbedder(table))


@pytest.mark.parametrize("scores, expected", [
    ({"A": 0.9, "B": 0.7, "C": 0.3}, ["A", "B"]),
    ({"A": 0.5, "B": 0.4}, ["A"]),
    ({"A": 0.65, "B": 0.1}, ["A"]),
    ({"A": 0.61, "B": 0.95, "C": 0.8, "D": 0.7}, ["B", "C"]),
    ({"A": 0.6, "B": 0.2}, ["A"]),  # exactly at the threshold is not above it
])
def test_retrieve_rule(scores, expected):
    got = forced_index(scores).retrieve("q")
    assert [c.node.name for c in got] == expected
    for c in got:
        assert c.score == pytest.approx(scores[c.node.name], abs=1e-12)


def test_retrieve_tie_breaks_by_name():
    assert select_contexts([("b", 0.8), ("a", 0.8), ("c", 0.8)], RetrievalPolicy()) == [("a", 0.8), ("b", 0.8)]


def test_empty_index():
    idx = TypologyIndex.build(KnowledgeTypology("method", "root", ()))
    with pytest.raises(EmptyIndex):
        idx.retrieve("anything")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=6, unique=True),
       st.floats(0, 1), st.integers(1, 4))
def test_select_matches_oracle(raw, threshold, keep):
    names = [f"n{i}" for i in range(len(raw))]
    scored = list(zip(names, raw))
    vecs = {n: [s, math.sqrt(max(0.0, 1 - s * s))] for n, s in scored}
    want = retrieval_oracle([1.0, 0.0], vecs, threshold, keep)
    got = select_contexts([(n, cosine([1.0, 0.0], v)) for n, v in vecs.items()], RetrievalPolicy(threshold, keep))
    assert [n for n, _ in got] == [n for n, _ in want]
    assert got  # never empty for a non-empty index
    assert all(a[1] >= b[1] for a, b in zip(got, got[1:]))


# --- typologies -----------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_shipped_typologies_validate(kind):
    t = load_typology(DEFAULT_KB_DIR / f"{kind}.json")
    assert t.kind == kind
    assert tuple(t.names) == REQUIRED_NODES[kind]


def test_shipped_node_counts():
    counts = {k: len(load_typology(DEFAULT_KB_DIR / f"{k}.json").nodes) for k in KINDS}
    assert counts == {"data_category": 16, "consumer_type": 2, "purpose": 10, "method": 3}


def test_social_media_purpose_flag():
    t = load_typology(DEFAULT_KB_DIR / "purpose.json", social_media_purpose=True)
    assert len(t.nodes) == 11 and t.names[-1] == SOCIAL_MEDIA_PURPOSE


def _method_doc():
    return json.loads((DEFAULT_KB_DIR / "method.json").read_text())


def test_missing_field():
    doc = _method_doc()
    del doc["root"]
    with pytest.raises(SchemaViolation):
        typology_from_dict(doc)


def test_duplicate_node():
    doc = _method_doc()
    doc["nodes"].append(dict(doc["nodes"][0]))
    with pytest.raises(SchemaViolation, match="duplicate"):
        typology_from_dict(doc)


def test_unknown_kind():
    doc = _method_doc()
    doc["kind"] = "colour"
    with pytest.raises(UnknownKind):
        typology_from_dict(doc)


def test_description_required():
    doc = _method_doc()
    doc["nodes"][0]["description"] = ""
    with pytest.raises(SchemaViolation):
        typology_from_dict(doc)


def test_unspecified_may_lack_description():
    doc = _method_doc()
    for node in doc["nodes"]:
        if node["name"] == "Unspecified":
            node["description"] = ""
    assert typology_from_dict(doc).node("Unspecified").description == ""


def test_wrong_node_set():
    doc = _method_doc()
    doc["nodes"][0]["name"] = "Semi-active"
    with pytest.raises(SchemaViolation, match="missing"):
        typology_from_dict(doc)


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{nope")
    with pytest.raises(SchemaViolation):
        load_typology(p)


# --- embeddings -----------------------------------------------------------------

def test_embed_self_similarity():
    v = embed("vehicle location")
    assert cosine_similarity(v, embed("vehicle location")) == pytest.approx(1.0)
    assert v.shape == (256,)
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_embed_ordering():
    a = embed("location data")
    assert cosine_similarity(a, embed("location data history")) > cosine_similarity(a, embed("payment card number"))


def test_embed_empty():
    with pytest.raises(ValueError):
        embed("")


def test_index_scores_are_cosines(kb):
    idx = kb["data_category"]
    emb = HashingEmbedder()
    q = "GPS information"
    for ctx in idx.retrieve(q):
        assert ctx.score == pytest.approx(cosine_similarity(emb.embed(q), emb.embed(ctx.node.render())), abs=1e-9)


def test_index_matrix_read_only(kb):
    with pytest.raises(ValueError):
        kb["method"].matrix[0, 0] = 1.0


def test_remote_embedder_ok():
    def handler(request):
        body = json.loads(request.content)
        return httpx.Response(200, json={"data": [{"index": i, "embedding": [1.0, float(i)]}
                                                  for i in range(len(body["input"]))]})

    e = RemoteEmbedder("http://x", "m", transport=httpx.MockTransport(handler))
    assert e.embed_many(["a", "b"]).tolist() == [[1.0, 0.0], [1.0, 1.0]]


def test_remote_embedder_failure():
    e = RemoteEmbedder("http://x", "m", transport=httpx.MockTransport(lambda r: httpx.Response(503)))
    with pytest.raises(ProviderUnavailable):
        e.embed("a")


def test_knowledge_base_vocabulary(kb):
    assert kb.vocabulary("method") == ["Active", "Passive", "Unspecified"]
    assert isinstance(kb, KnowledgeBase)
