"""Command-line entry point.

Subcommands::

    policyflow segment POLICY.html [--format text|json] [-o FILE]
    policyflow kb validate [PATH]       ; one typology file or a directory of them
    policyflow kb build [DIR] -o INDEX.json
    policyflow analyze POLICY.html [POLICY.html ...] [--config run.ini] [overrides]
    policyflow compare REPORT.json REPORT.json [...] [-o FILE.csv]
    policyflow report REPORT.json [--format text|csv]

Configuration is an INI file; every key is optional and flags override it::

    [run]
    backend = mock            ; mock | live
    fixtures = fixtures/      ; recorded responses for the mock backend
    base_url = https://api.groq.com/openai/v1
    api_key_env = GROQ_API_KEY ; name of the variable holding the key
    temperature = 0.5
    top_p = 0.5
    kb_dir =                  ; defaults to the shipped typologies
    cache_dir =
    output_dir = out
    workers = 1
    max_in_flight = 4
    social_media_purpose = false

    [models]                  ; one entry per agent
    screening = llama-3.3-70b-versatile

    [retrieval]
    threshold = 0.6
    max_contexts = 2

    [weights]                 ; three comma-separated weights per group
    first_family = 1, 1.5, 2.25
    third_family = 1, 1.5, 2.25
    overall = 1, 1.5, 2.25

    [orgs]                    ; policy id (file stem) = organisation name
    honda = Honda

Relative paths in the file are resolved against the file's own directory.
The API key itself is only ever read from the environment.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .agents import AGENTS, DEFAULT_MODELS, Agents, AgentSettings
from .analyser import (REPORT_SCHEMA, FlowStats, RiskWeights, category_distribution, category_purpose_matrix,
                       compute_flow_stats, compute_risk_scores, corpus_maxima, network_summary, report_csv,
                       report_text)
from .errors import ConfigError, EmptyDocument, PolicyFlowError, SchemaMismatch, SchemaViolation
from .flow_parser import parse_records
from .graph import CENTRALITY_CONVENTIONS, METRICS, build_graph, export, top_k
from .knowledge import KINDS, DEFAULT_KB_DIR, KnowledgeBase, RetrievalPolicy, load_typology
from .llm import Gateway, LiveBackend, MockBackend, atomic_write_text
from .segmenter import PolicyDocument, segment_html

log = logging.getLogger("policyflow")


_PATH_KEYS = ("fixtures", "kb_dir", "cache_dir", "output_dir")


@dataclass
class RunConfig:
    backend: str = "mock"
    fixtures: Optional[str] = None
    base_url: str = "https://api.groq.com/openai/v1"
    api_key_env: str = "GROQ_API_KEY"
    models: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MODELS))
    temperature: float = 0.5
    top_p: float = 0.5
    kb_dir: Optional[str] = None
    cache_dir: Optional[str] = None
    output_dir: str = "out"
    workers: int = 1
    max_in_flight: int = 4
    social_media_purpose: bool = False
    threshold: float = 0.6
    max_contexts: int = 2
    weights: Dict[str, List[float]] = field(default_factory=lambda: {
        "first_family": [1.0, 1.5, 2.25], "third_family": [1.0, 1.5, 2.25], "overall": [1.0, 1.5, 2.25]})
    orgs: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_ini(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        parser.optionxform = str
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"cannot read config file {path}")
        cfg = cls()
        try:
            run = parser["run"] if parser.has_section("run") else {}
            base = Path(path).resolve().parent
            for key in ("backend", "fixtures", "base_url", "api_key_env", "kb_dir", "cache_dir", "output_dir"):
                if run.get(key, "").strip():
                    value = run[key].strip()
                    # relative paths are taken from the config file's directory
                    if key in _PATH_KEYS and not Path(value).is_absolute():
                        value = str(base / value)
                    setattr(cfg, key, value)
            for key in ("temperature", "top_p"):
                if key in run:
                    setattr(cfg, key, float(run[key]))
            for key in ("workers", "max_in_flight"):
                if key in run:
                    setattr(cfg, key, int(run[key]))
            if "social_media_purpose" in run:
                cfg.social_media_purpose = parser.getboolean("run", "social_media_purpose")
            if parser.has_section("models"):
                cfg.models.update({k: v.strip() for k, v in parser["models"].items()})
            if parser.has_section("retrieval"):
                sec = parser["retrieval"]
                cfg.threshold = float(sec.get("threshold", cfg.threshold))
                cfg.max_contexts = int(sec.get("max_contexts", cfg.max_contexts))
            if parser.has_section("weights"):
                for key, value in parser["weights"].items():
                    cfg.weights[key] = [float(x) for x in value.split(",")]
            if parser.has_section("orgs"):
                cfg.orgs.update({k: v.strip() for k, v in parser["orgs"].items()})
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cfg

    def validate(self) -> None:
        if self.backend not in ("mock", "live"):
            raise ConfigError(f"backend must be 'mock' or 'live', got {self.backend!r}")
        if self.backend == "mock" and not self.fixtures:
            raise ConfigError("the mock backend needs a fixtures directory")
        if self.backend == "mock" and not Path(self.fixtures).is_dir():
            raise ConfigError(f"fixtures directory {self.fixtures} does not exist")
        if self.backend == "live" and not os.environ.get(self.api_key_env):
            raise ConfigError(f"the live backend needs the {self.api_key_env} environment variable")
        unknown = set(self.models) - set(AGENTS)
        if unknown:
            raise ConfigError(f"unknown agents in [models]: {sorted(unknown)}")
        if set(self.weights) != {"first_family", "third_family", "overall"}:
            raise ConfigError("weights need first_family, third_family and overall")
        if self.workers < 1 or self.max_in_flight < 1:
            raise ConfigError("workers and max_in_flight must be positive")
        try:
            self.risk_weights()
            self.retrieval_policy()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def risk_weights(self) -> RiskWeights:
        return RiskWeights(*(tuple(self.weights[k]) for k in ("first_family", "third_family", "overall")))

    def retrieval_policy(self) -> RetrievalPolicy:
        return RetrievalPolicy(self.threshold, self.max_contexts)

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _dump(data) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2) + "\n"


def _read_html(path: Path) -> str:
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return path.read_text(encoding="utf-8", errors="replace")


# --- segment ------------------------------------------------------------------

def cmd_segment(args) -> int:
    path = Path(args.input)
    doc = PolicyDocument(path.stem, path.stem, _read_html(path), str(path))
    segments = segment_html(doc)
    if args.format == "json":
        lines = [json.dumps(s.to_dict(), ensure_ascii=False) for s in segments]
    else:
        # one segment per line; embedded newlines are escaped
        lines = [f"{s.index}\t{s.kind}\t" + s.text.replace("\\", "\\\\").replace("\n", "\\n") for s in segments]
    text = "\n".join(lines) + "\n"
    if args.output:
        atomic_write_text(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return 0


# --- kb -----------------------------------------------------------------------

def cmd_kb_validate(args) -> int:
    path = Path(args.path) if args.path else DEFAULT_KB_DIR
    if path.is_dir():
        files = [path / f"{kind}.json" for kind in KINDS]
    elif path.is_file():
        files = [path]
    else:
        raise FileNotFoundError(f"file not found: {path}")
    for f in files:
        if not f.is_file():
            raise FileNotFoundError(f"file not found: {f}")
        typology = load_typology(f, social_media_purpose=args.social_media_purpose)
        print(f"{typology.kind}: ok ({len(typology.nodes)} nodes)")
    return 0


def cmd_kb_build(args) -> int:
    if args.path and not Path(args.path).is_dir():
        raise FileNotFoundError(f"directory not found: {args.path}")
    kb = KnowledgeBase.load(args.path, social_media_purpose=args.social_media_purpose)
    payload = {kind: kb[kind].to_dict() for kind in KINDS}
    atomic_write_text(Path(args.output), _dump(payload))
    print(f"wrote {args.output}")
    return 0


# --- analyze ------------------------------------------------------------------

def _build_agents(cfg: RunConfig) -> Agents:
    if cfg.backend == "mock":
        backend = MockBackend(cfg.fixtures)
    else:
        backend = LiveBackend(cfg.base_url, cfg.api_key_env)
    gateway = Gateway(backend, cfg.cache_dir, cfg.max_in_flight)
    kb = KnowledgeBase.load(cfg.kb_dir, social_media_purpose=cfg.social_media_purpose)
    settings = AgentSettings(dict(cfg.models), cfg.temperature, cfg.top_p, cfg.retrieval_policy(), cfg.workers)
    return Agents(gateway, kb, settings)


def analyze(inputs: List[Path], cfg: RunConfig) -> dict:
    """Run the full pipeline over ``inputs`` and write every artifact; returns the corpus report."""
    cfg.validate()
    out_dir = Path(cfg.output_dir)
    agents = _build_agents(cfg)
    started = time.time()
    per_policy = []
    manifest_inputs = []

    ids = [p.stem for p in inputs]
    if len(set(ids)) != len(ids):
        raise ConfigError("input file names must be unique; they become policy ids")

    for path in inputs:
        html = _read_html(path)
        policy_id = path.stem
        org = cfg.orgs.get(policy_id, policy_id)
        t0 = time.time()
        result = agents.run(PolicyDocument(policy_id, org, html, str(path)))
        parsed = parse_records(result.records, org)
        graph = build_graph(parsed, policy_id)
        stats = compute_flow_stats(parsed, policy_id)
        per_policy.append({
            "policy_id": policy_id, "org_name": org, "parsed": parsed, "graph": graph, "stats": stats,
            "raw_flows": len(result.records),
        })
        statuses = [{"index": o.index, "status": o.status, "flows": len(o.records), **({"detail": o.detail} if o.detail else {})}
                    for o in result.outcomes]
        manifest_inputs.append({
            "policy_id": policy_id,
            "path": str(path),
            "sha256": hashlib.sha256(html.encode("utf-8")).hexdigest(),
            "segments": statuses,
            "counts": {
                "segments": len(result.segments),
                "unprocessed": sum(1 for s in statuses if s["status"] == "unprocessed"),
                "raw_flows": len(result.records),
                "flows": len(parsed),
            },
            "seconds": round(time.time() - t0, 3),
        })

    weights = cfg.risk_weights()
    all_stats = [p["stats"] for p in per_policy]
    risk = compute_risk_scores(all_stats, weights)
    maxima = corpus_maxima(all_stats)
    vocab = agents.kb.vocabulary("data_category")

    policy_reports = []
    for p, scores in zip(per_policy, risk):
        parsed, graph = p["parsed"], p["graph"]
        report = {
            "schema_version": REPORT_SCHEMA,
            "policy_id": p["policy_id"],
            "org_name": p["org_name"],
            "centrality_conventions": CENTRALITY_CONVENTIONS,
            "network_summary": network_summary(graph),
            "top_nodes": {m: [[n, s] for n, s in top_k(graph, m, 10)] if graph.nodes else [] for m in METRICS},
            "flow_stats": p["stats"].to_dict(),
            "risk_scores": scores.to_dict(),
            "corpus_maxima": maxima,
            "category_distribution": category_distribution(parsed, vocab),
            "category_purpose_matrix": category_purpose_matrix(parsed),
        }
        policy_reports.append(report)
        pdir = out_dir / p["policy_id"]
        flows = "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in parsed)
        atomic_write_text(pdir / "flows.jsonl", flows)
        for fmt in ("json", "dot", "html"):
            atomic_write_text(pdir / f"graph.{fmt}", export(graph, fmt).decode("utf-8"))
        atomic_write_text(pdir / "report.json", _dump(report))
        atomic_write_text(pdir / "report.csv", report_csv({"policies": [report], "risk_scores": [report["risk_scores"]]}))

    corpus = {
        "schema_version": REPORT_SCHEMA,
        "centrality_conventions": CENTRALITY_CONVENTIONS,
        "weights": weights.to_dict(),
        "corpus_maxima": maxima,
        "risk_scores": [r.to_dict() for r in risk],
        "category_purpose_matrix": category_purpose_matrix([r for p in per_policy for r in p["parsed"]]),
        "policies": policy_reports,
    }
    atomic_write_text(out_dir / "report.json", _dump(corpus))
    atomic_write_text(out_dir / "report.csv", report_csv(corpus))
    atomic_write_text(out_dir / "report.txt", report_text(corpus))

    manifest = {
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "config": asdict(cfg),
        "inputs": manifest_inputs,
        "seconds": round(time.time() - started, 3),
    }
    manifest_text = _dump(manifest)
    for p in per_policy:
        atomic_write_text(out_dir / p["policy_id"] / "manifest.json", manifest_text)
    atomic_write_text(out_dir / "manifest.json", manifest_text)
    return corpus


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.from_ini(args.config) if args.config else RunConfig()
    for key in ("backend", "fixtures", "base_url", "api_key_env", "kb_dir", "cache_dir", "output_dir",
                "workers", "max_in_flight", "temperature", "top_p", "threshold", "max_contexts"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    for item in args.org or []:
        if "=" not in item:
            raise ConfigError(f"--org expects ID=NAME, got {item!r}")
        key, value = item.split("=", 1)
        cfg.orgs[key.strip()] = value.strip()
    return cfg


def cmd_analyze(args) -> int:
    cfg = _config_from_args(args)
    corpus = analyze([Path(p) for p in args.inputs], cfg)
    print(f"analysed {len(corpus['policies'])} policies into {cfg.output_dir}")
    return 0


# --- compare / report -----------------------------------------------------------

def _load_report(path: Path) -> dict:
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("schema_version") != REPORT_SCHEMA:
        raise SchemaMismatch(f"{path}: report schema {data.get('schema_version')!r}, expected {REPORT_SCHEMA}")
    return data


def compare_reports(paths: List[Path], weights: Optional[RiskWeights] = None) -> dict:
    if len(paths) < 2:
        raise ValueError("need at least two reports to compare")
    policies = []
    for path in paths:
        data = _load_report(path)
        policies.extend(data["policies"] if "policies" in data else [data])
    # risk scores are relative to the compared set, so they are recomputed
    stats = [FlowStats.from_dict(p["flow_stats"]) for p in policies]
    risk = compute_risk_scores(stats, weights)
    return {"schema_version": REPORT_SCHEMA, "policies": policies, "risk_scores": [r.to_dict() for r in risk]}


def cmd_compare(args) -> int:
    merged = compare_reports([Path(p) for p in args.reports])
    text = report_csv(merged)
    if args.output:
        atomic_write_text(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    data = _load_report(Path(args.report))
    if "policies" not in data:
        data = {"policies": [data], "risk_scores": [data["risk_scores"]],
                "category_purpose_matrix": data.get("category_purpose_matrix", {})}
    sys.stdout.write(report_csv(data) if args.format == "csv" else report_text(data))
    return 0


# --- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="policyflow", description="Extract and analyse personal data flows from privacy policies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="split a policy HTML file into text segments")
    p.add_argument("input")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_segment)

    kb = sub.add_parser("kb", help="knowledge typology tools")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    for name, func in (("validate", cmd_kb_validate), ("build", cmd_kb_build)):
        k = kb_sub.add_parser(name)
        k.add_argument("path", nargs="?", help="typology file or directory (default: shipped typologies)")
        k.add_argument("--social-media-purpose", action="store_true",
                       help="add the optional eleventh purpose node")
        if name == "build":
            k.add_argument("-o", "--output", required=True)
        k.set_defaults(func=func)

    a = sub.add_parser("analyze", help="run the full pipeline over one or more policies")
    a.add_argument("inputs", nargs="+")
    a.add_argument("--config")
    a.add_argument("--backend", choices=("mock", "live"))
    a.add_argument("--fixtures")
    a.add_argument("--base-url", dest="base_url")
    a.add_argument("--api-key-env", dest="api_key_env")
    a.add_argument("--kb-dir", dest="kb_dir")
    a.add_argument("--cache-dir", dest="cache_dir")
    a.add_argument("--output-dir", "-o", dest="output_dir")
    a.add_argument("--workers", type=int)
    a.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    a.add_argument("--temperature", type=float)
    a.add_argument("--top-p", dest="top_p", type=float)
    a.add_argument("--threshold", type=float)
    a.add_argument("--max-contexts", dest="max_contexts", type=int)
    a.add_argument("--org", action="append", metavar="ID=NAME", help="organisation owning a policy")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("compare", help="merge per-policy reports into one table")
    c.add_argument("reports", nargs="+")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("report", help="print a report as a table")
    r.add_argument("report")
    r.add_argument("--format", choices=("text", "csv"), default="text")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EmptyDocument as exc:
        print(f"error: empty document: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, SchemaViolation, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (PolicyFlowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
