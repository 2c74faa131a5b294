"""Knowledge typologies, embeddings and threshold-based context retrieval."""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyIndex, ProviderUnavailable, SchemaViolation, UnknownKind

DATA_CATEGORY = "data_category"
CONSUMER_TYPE = "consumer_type"
PURPOSE = "purpose"
METHOD = "method"
KINDS = (DATA_CATEGORY, CONSUMER_TYPE, PURPOSE, METHOD)

SOCIAL_MEDIA_PURPOSE = "Social Media Integration"

# node names every shipped typology must carry, in order
REQUIRED_NODES: Dict[str, Tuple[str, ...]] = {
    DATA_CATEGORY: (
        "Demographics", "Contact", "Finance", "Health", "Location",
        "Personal Identity Identifier", "Online Identifier", "Device Information",
        "Biometric Information", "User Online Activities", "User Profile",
        "Criminal Records/Court Judgements", "Generic Personal Information",
        "Survey data", "Other", "Unspecified",
    ),
    CONSUMER_TYPE: ("First Party", "Third Party"),
    PURPOSE: (
        "Basic Service or Feature", "Additional Service or Feature", "Advertising",
        "Marketing", "Analytics or Research", "Personalisation or Customisation",
        "Operational Integrity and Security", "Legal requirement",
        "Merger/Acquisition", "Unspecified",
    ),
    METHOD: ("Active", "Passive", "Unspecified"),
}
_UNDESCRIBED = ("Other", "Unspecified")

DEFAULT_KB_DIR = Path(__file__).parent / "data" / "typologies"


@dataclass(frozen=True)
class KnowledgeNode:
    name: str
    description: str = ""
    examples: Tuple[str, ...] = ()

    def render(self) -> str:
        """Text that gets embedded for retrieval."""
        return f"{self.name}. {self.description}. {', '.join(self.examples)}"

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "examples": list(self.examples)}


@dataclass(frozen=True)
class KnowledgeTypology:
    kind: str
    root: str
    nodes: Tuple[KnowledgeNode, ...]

    @property
    def names(self) -> List[str]:
        return [n.name for n in self.nodes]

    def node(self, name: str) -> KnowledgeNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "root": self.root, "nodes": [n.to_dict() for n in self.nodes]}


def typology_from_dict(data, *, social_media_purpose: bool = False) -> KnowledgeTypology:
    if not isinstance(data, dict):
        raise SchemaViolation("typology must be a JSON object")
    for key in ("kind", "root", "nodes"):
        if key not in data:
            raise SchemaViolation(f"missing field {key!r}")
    kind = data["kind"]
    if kind not in KINDS:
        raise UnknownKind(f"unknown typology kind {kind!r}")
    if not isinstance(data["root"], str) or not data["root"].strip():
        raise SchemaViolation("root must be a non-empty string")
    if not isinstance(data["nodes"], list):
        raise SchemaViolation("nodes must be a list")

    nodes = []
    for i, raw in enumerate(data["nodes"]):
        if not isinstance(raw, dict):
            raise SchemaViolation(f"node {i} must be an object")
        for key in ("name", "description", "examples"):
            if key not in raw:
                raise SchemaViolation(f"node {i} missing field {key!r}")
        name, desc, examples = raw["name"], raw["description"], raw["examples"]
        if not isinstance(name, str) or not name.strip():
            raise SchemaViolation(f"node {i} has an empty name")
        if not isinstance(desc, str):
            raise SchemaViolation(f"node {name!r}: description must be a string")
        if not desc.strip() and name not in _UNDESCRIBED:
            raise SchemaViolation(f"node {name!r} needs a description")
        if not isinstance(examples, list) or not all(isinstance(e, str) for e in examples):
            raise SchemaViolation(f"node {name!r}: examples must be a list of strings")
        nodes.append(KnowledgeNode(name, desc, tuple(examples)))

    names = [n.name for n in nodes]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaViolation(f"duplicate node names: {dupes}")

    expected = set(REQUIRED_NODES[kind])
    if kind == PURPOSE and social_media_purpose:
        expected.add(SOCIAL_MEDIA_PURPOSE)
        if SOCIAL_MEDIA_PURPOSE not in names:
            nodes.append(KnowledgeNode(
                SOCIAL_MEDIA_PURPOSE,
                "Linking the service with social networks, e.g. signing in with or sharing to a social media account.",
                ("social login", "share to social media", "social plugins"),
            ))
            names.append(SOCIAL_MEDIA_PURPOSE)
    if set(names) != expected:
        missing = sorted(expected - set(names))
        extra = sorted(set(names) - expected)
        raise SchemaViolation(f"{kind} nodes differ from the required set: missing={missing} extra={extra}")
    return KnowledgeTypology(kind, data["root"], tuple(nodes))


def load_typology(path, *, social_media_purpose: bool = False) -> KnowledgeTypology:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{path}: invalid JSON ({exc})") from exc
    return typology_from_dict(data, social_media_purpose=social_media_purpose)


# --- embeddings -----------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9]+")


class HashingEmbedder:
    """Offline bag-of-words embedder: hashed token counts, L2-normalised.

    Token buckets come from BLAKE2b so vectors are stable across processes.
    """

    name = "hashing"

    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, text: str) -> np.ndarray:
        if not isinstance(text, str) or not text.strip():
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim)
        for token in _TOKEN.findall(text.lower()):
            vec[self._bucket(token)] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        return np.vstack([self.embed(t) for t in texts])


class RemoteEmbedder:
    """Client for an OpenAI-style ``/embeddings`` HTTP endpoint."""

    name = "remote"

    def __init__(self, base_url: str, model: str, api_key_env: str = "EMBEDDING_API_KEY",
                 *, timeout: float = 30.0, transport=None):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self.dim: Optional[int] = None

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        import httpx

        if any(not t or not t.strip() for t in texts):
            raise ValueError("cannot embed empty text")
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._client.post(f"{self.base_url}/embeddings", headers=headers,
                                     json={"model": self.model, "input": list(texts)})
            resp.raise_for_status()
            rows = sorted(resp.json()["data"], key=lambda r: r["index"])
            out = np.array([r["embedding"] for r in rows], dtype=float)
        except (httpx.HTTPError, KeyError, ValueError, TypeError) as exc:
            raise ProviderUnavailable(f"embedding endpoint failed: {exc}") from exc
        if out.ndim != 2 or len(out) != len(texts) or not np.all(np.isfinite(out)):
            raise ProviderUnavailable("embedding endpoint returned malformed vectors")
        if self.dim is not None and out.shape[1] != self.dim:
            raise ProviderUnavailable(f"dimension changed from {self.dim} to {out.shape[1]}")
        self.dim = out.shape[1]
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


# --- retrieval ------------------------------------------------------------

@dataclass(frozen=True)
class RetrievalPolicy:
    threshold: float = 0.6
    max_contexts: int = 2

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.max_contexts < 1:
            raise ValueError("max_contexts must be positive")


@dataclass(frozen=True)
class RetrievedContext:
    node: KnowledgeNode
    score: float
    typology_kind: str


def select_contexts(scored: Iterable[Tuple[str, float]], policy: RetrievalPolicy) -> List[Tuple[str, float]]:
    """Apply the threshold rule to ``(name, score)`` pairs.

    Above-threshold nodes are kept best-first up to ``max_contexts``; when none
    clears the threshold the single best node is returned instead.
    """
    ranked = sorted(scored, key=lambda p: (-p[1], p[0]))
    if not ranked:
        return []
    above = [p for p in ranked if p[1] > policy.threshold]
    if not above:
        return ranked[:1]
    return above[: policy.max_contexts]


@dataclass
class TypologyIndex:
    """Immutable linear-scan index over one typology's node embeddings."""

    typology: KnowledgeTypology
    embedder: object
    matrix: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, typology: KnowledgeTypology, embedder=None) -> "TypologyIndex":
        embedder = embedder or HashingEmbedder()
        if typology.nodes:
            matrix = np.asarray(embedder.embed_many([n.render() for n in typology.nodes]), dtype=float)
        else:
            matrix = np.zeros((0, getattr(embedder, "dim", None) or 1))
        matrix.setflags(write=False)
        return cls(typology, embedder, matrix)

    @property
    def kind(self) -> str:
        return self.typology.kind

    def scores(self, query: str) -> List[Tuple[str, float]]:
        q = np.asarray(self.embedder.embed(query), dtype=float)
        return [(node.name, cosine_similarity(q, row)) for node, row in zip(self.typology.nodes, self.matrix)]

    def retrieve(self, query: str, policy: Optional[RetrievalPolicy] = None) -> List[RetrievedContext]:
        if not self.typology.nodes:
            raise EmptyIndex(f"{self.kind} index has no nodes")
        if not query or not query.strip():
            raise ValueError("query must be non-empty")
        chosen = select_contexts(self.scores(query), policy or RetrievalPolicy())
        return [RetrievedContext(self.typology.node(name), score, self.kind) for name, score in chosen]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "embedder": getattr(self.embedder, "name", type(self.embedder).__name__),
            "dim": int(self.matrix.shape[1]) if self.matrix.size else 0,
            "nodes": [n.name for n in self.typology.nodes],
            "vectors": self.matrix.round(12).tolist(),
        }


def retrieve(index: TypologyIndex, query: str, policy: Optional[RetrievalPolicy] = None) -> List[RetrievedContext]:
    return index.retrieve(query, policy)


def embed(text: str, embedder=None) -> np.ndarray:
    return (embedder or HashingEmbedder()).embed(text)


class KnowledgeBase:
    """The four typology indices used by the classification agents."""

    def __init__(self, indices: Dict[str, TypologyIndex]):
        missing = [k for k in KINDS if k not in indices]
        if missing:
            raise SchemaViolation(f"knowledge base lacks typologies: {missing}")
        self.indices = dict(indices)

    @classmethod
    def load(cls, kb_dir=None, embedder=None, *, social_media_purpose: bool = False) -> "KnowledgeBase":
        kb_dir = Path(kb_dir) if kb_dir else DEFAULT_KB_DIR
        embedder = embedder or HashingEmbedder()
        indices = {}
        for kind in KINDS:
            path = kb_dir / f"{kind}.json"
            if not path.exists():
                raise SchemaViolation(f"missing typology file {path}")
            typology = load_typology(path, social_media_purpose=social_media_purpose)
            indices[kind] = TypologyIndex.build(typology, embedder)
        return cls(indices)

    def __getitem__(self, kind: str) -> TypologyIndex:
        return self.indices[kind]

    def vocabulary(self, kind: str) -> List[str]:
        return self.indices[kind].typology.names
