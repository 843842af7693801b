"""End-to-end orchestration: ingest, index, link, chain, evaluate.

Every stage reads and writes the file formats owned by its module, so each is
independently re-runnable from persisted artifacts. The expensive stages
(corpus load, indexing, linking) are prepared once into a runtime; ranking
runs per question on top of it and is pure given the shared immutable state,
which makes the thread-pool path produce output identical to the sequential
one and lets ablations and grid search share identical retrieval inputs.
"""

from __future__ import annotations

import logging
import shlex
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .chainer import (
    ABLATION_NO_CHAINER,
    ChainerParams,
    assemble_topk,
    rank_chains,
    serialize_chain,
)
from .corpus import CorpusStore, GoldAnnotation, load_corpus, load_gold
from .dense_index import DenseIndex, retrieve_first_hop
from .embed import (
    EmbeddingProvider,
    FileVectorProvider,
    ReferenceProvider,
    ServiceProvider,
)
from .linker import (
    EvidenceGraph,
    LinearTagger,
    build_evidence_graph,
    eval_links,
    train_tagger,
)
from .metrics import MetricReport, answer_recall_at_k, recall_at_k
from .qg_scorer import QgScorer, ReferenceQgScorer, ScoreCache, ServiceQgScorer
from .router import MULTI_HOP, LinearClassifier, route

logger = logging.getLogger(__name__)


def make_provider(spec: str, dim: int) -> EmbeddingProvider:
    """Provider from a config string: reference | vectors:<path> | external:<cmd>."""
    if spec == "reference":
        return ReferenceProvider(dim)
    if spec.startswith("vectors:"):
        return FileVectorProvider(spec.split(":", 1)[1])
    if spec.startswith("external:"):
        return ServiceProvider(shlex.split(spec.split(":", 1)[1]), dim)
    raise ValueError(f"unknown provider spec {spec!r}")


def make_scorer(spec: str) -> QgScorer:
    """Scorer from a config string: reference | external:<cmd>."""
    if spec == "reference":
        return ReferenceQgScorer()
    if spec.startswith("external:"):
        return ServiceQgScorer(shlex.split(spec.split(":", 1)[1]))
    raise ValueError(f"unknown scorer spec {spec!r}")


def toy_data_dir() -> Path:
    """Location of the bundled toy corpus."""
    return Path(str(resources.files("evchain").joinpath("data/toy")))


@dataclass
class PipelineConfig:
    passages: str
    tables: str
    gold: str | None = None
    params: ChainerParams = field(default_factory=ChainerParams)
    provider_spec: str = "reference"
    scorer_spec: str = "reference"
    dim: int = 64
    seed: int = 0
    threads: int = 1
    budget_words: int = 100
    use_linker: bool = True
    top_m: int = 1
    tag_threshold: float = 0.5
    tagger_epochs: int = 200
    tagger_lr: float = 5.0
    tagger_path: str | None = None
    links_path: str | None = None
    index_path: str | None = None
    router_path: str | None = None


@dataclass
class PipelineResult:
    records: list[dict]
    report: MetricReport
    failures: dict[str, str] = field(default_factory=dict)


def build_tagger_examples(
    store: CorpusStore, gold: list[GoldAnnotation], provider: EmbeddingProvider
) -> list[tuple[np.ndarray, list[int]]]:
    """Token states and mention labels for every chunk; gold links mark positives."""
    positive: dict[str, set[int]] = {}
    for ann in gold:
        for link in ann.gold_links:
            positive.setdefault(link.chunk_id, set()).update(range(link.start, link.end + 1))
    examples = []
    for chunk in store.chunks.values():
        states = provider.token_states(chunk.text)
        if len(states) == 0:
            continue
        marked = positive.get(chunk.chunk_id, set())
        labels = [1 if i in marked else 0 for i in range(len(states))]
        examples.append((states, labels))
    return examples


class PipelineRuntime:
    """Prepared corpus, index, link graph, and scorer shared by pipeline runs."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.store = load_corpus(config.passages, config.tables, config.budget_words)
        self.gold = load_gold(config.gold) if config.gold else None
        if self.gold:
            self.store.check_gold(self.gold)
        self.provider = make_provider(config.provider_spec, config.dim)
        self.scorer = make_scorer(config.scorer_spec)
        if config.index_path:
            self.index = DenseIndex.load(config.index_path)
        else:
            self.index = DenseIndex.build(self.provider, self.store.iter_docs("all"))
        self.graph = self._prepare_graph()
        self.router = (
            LinearClassifier.load(config.router_path) if config.router_path else None
        )
        self.cache = ScoreCache()
        self._empty_graph = EvidenceGraph()

    def _prepare_graph(self) -> EvidenceGraph:
        config = self.config
        if not config.use_linker:
            return EvidenceGraph()
        if config.links_path:
            return EvidenceGraph.load(config.links_path)
        if config.tagger_path:
            tagger = LinearTagger.load(config.tagger_path)
        elif self.gold:
            examples = build_tagger_examples(self.store, self.gold, self.provider)
            tagger = train_tagger(
                examples, self.provider.dim, config.tagger_epochs, config.tagger_lr, config.seed
            )
        else:
            logger.warning("no links file, tagger, or gold data: linker runs untrained")
            tagger = LinearTagger.zeros(self.provider.dim)
        passage_index = DenseIndex.build(self.provider, self.store.iter_docs("passages"))
        return build_evidence_graph(
            self.store, passage_index, self.provider, tagger, config.tag_threshold, config.top_m
        )

    def link_eval(self) -> tuple[float, float, float] | None:
        """Linker precision/recall/F1 against the gold links, when both exist."""
        if not self.gold or not self.config.use_linker:
            return None
        gold_links = [link for ann in self.gold for link in ann.gold_links]
        if not gold_links:
            return None
        return eval_links(self.graph, gold_links)

    def questions(self) -> list[tuple[str, str]]:
        """Questions to answer; records with empty question text are
        annotation-only (e.g. link inventories for linker training)."""
        if self.gold is None:
            raise ValueError("no gold file to take questions from")
        return [(ann.qid, ann.question) for ann in self.gold if ann.question.strip()]

    def run(
        self,
        params: ChainerParams | None = None,
        questions: list[tuple[str, str]] | None = None,
        with_linker: bool | None = None,
    ) -> PipelineResult:
        """Rank and serialize chains for every question; metrics where gold exists.

        A failure in one question is logged and skips that question only.
        """
        params = params if params is not None else self.config.params
        if questions is None:
            questions = self.questions()
        use_graph = self.config.use_linker if with_linker is None else with_linker
        graph = self.graph if use_graph else self._empty_graph
        by_qid = {ann.qid: ann for ann in self.gold} if self.gold else {}

        def answer_one(item: tuple[str, str]):
            qid, question = item
            try:
                hits = retrieve_first_hop(
                    self.index, self.provider, question, params.k1,
                    params.first_hop_scope, question_id=qid,
                )
                question_graph = graph
                if self.router is not None and use_graph:
                    q_vec = self.provider.embed_question(question, key=qid)
                    if route(q_vec, self.router) != MULTI_HOP:
                        question_graph = self._empty_graph
                chains = rank_chains(
                    qid, question, hits, question_graph, self.store,
                    self.scorer, params, self.cache,
                )
                entries = assemble_topk(chains, self.store, params)
                records = []
                for rank, entry in enumerate(entries, start=1):
                    reader = serialize_chain(question, entry, params.max_len)
                    records.append(
                        {
                            "qid": qid,
                            "rank": rank,
                            "total": reader.total,
                            "breakdown": reader.breakdown,
                            "hop1_id": reader.hop1_id,
                            "hop2_id": reader.hop2_id,
                            "reader_text": reader.text,
                        }
                    )
                return qid, records
            except Exception as exc:  # noqa: BLE001 - per-question isolation is the contract
                logger.warning("question %s failed: %s", qid, exc)
                return qid, f"{type(exc).__name__}: {exc}"

        if self.config.threads > 1:
            with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
                outcomes = list(pool.map(answer_one, questions))
        else:
            outcomes = [answer_one(q) for q in questions]

        records: list[dict] = []
        failures: dict[str, str] = {}
        report = MetricReport(config=_config_echo(params, use_graph, self.config.seed))
        for qid, outcome in outcomes:
            if isinstance(outcome, str):
                failures[qid] = outcome
                continue
            records.extend(outcome)
            ann = by_qid.get(qid)
            if ann is None:
                continue
            hop1_seq = first_seen_order([rec["hop1_id"] for rec in outcome])
            texts = [rec["reader_text"] for rec in outcome]
            values = {
                "R@20": recall_at_k(hop1_seq, ann.gold_chunks, 20) if ann.gold_chunks else 0,
                "R@100": recall_at_k(hop1_seq, ann.gold_chunks, 100) if ann.gold_chunks else 0,
            }
            if ann.answers:
                values["AR@20"] = answer_recall_at_k(texts, ann.answers, 20)
                values["AR@50"] = answer_recall_at_k(texts, ann.answers, 50)
            report.add(qid, values)

        return PipelineResult(records, report, failures)


def run_pipeline(
    config: PipelineConfig, questions: list[tuple[str, str]] | None = None
) -> PipelineResult:
    """Single-shot convenience wrapper: prepare a runtime and run it once."""
    return PipelineRuntime(config).run(questions=questions)


def first_seen_order(doc_ids: list[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for doc_id in doc_ids:
        if doc_id not in seen:
            seen.add(doc_id)
            out.append(doc_id)
    return out


def _config_echo(params: ChainerParams, use_linker: bool, seed: int) -> dict:
    return {
        "alpha": params.alpha,
        "beta": params.beta,
        "top_k": params.top_k,
        "k1": params.k1,
        "ablation": params.ablation,
        "profile": params.profile,
        "scope": params.first_hop_scope,
        "use_linker": use_linker,
        "seed": seed,
    }


def retriever_only_params(params: ChainerParams) -> ChainerParams:
    """Parameters for the no-linker, no-chainer retrieval baseline."""
    return replace(params, ablation=ABLATION_NO_CHAINER)


def grid_search(
    runtime: PipelineRuntime,
    alpha_range: tuple[int, int],
    beta_range: tuple[int, int],
    metric: str = "AR@50",
) -> tuple[float, float, float, list[dict]]:
    """Integer grid search for (alpha, beta) maximizing a dev answer-recall metric.

    Returns (best alpha, best beta, best value, full trace). Ties keep the
    first grid point in (alpha, beta) order. Retrieval, links, and cached
    scores are shared across all grid points.
    """
    best: tuple[float, float, float] | None = None
    trace: list[dict] = []
    for alpha in range(alpha_range[0], alpha_range[1] + 1):
        for beta in range(beta_range[0], beta_range[1] + 1):
            params = replace(runtime.config.params, alpha=float(alpha), beta=float(beta))
            result = runtime.run(params=params)
            value = result.report.aggregates.get(metric, 0.0)
            trace.append({"alpha": alpha, "beta": beta, metric: value})
            if best is None or value > best[2]:
                best = (float(alpha), float(beta), value)
    assert best is not None
    return best[0], best[1], best[2], trace
