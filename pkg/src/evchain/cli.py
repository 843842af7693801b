"""Command-line interface for the evidence-chain pipeline.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .chainer import ABLATIONS, PROFILES, ChainerParams
from .corpus import CorpusError, load_corpus, load_gold
from .dense_index import DenseIndex
from .embed import write_vectors
from .metrics import MetricReport, answer_recall_at_k, em_f1, format_ablation_table, recall_at_k
from .router import train_logistic
from .sparse_bm25 import MINING_STRATEGIES, build_negative_index, mine_hard_negatives

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _add_corpus_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--passages", required=True, help="passages.jsonl")
    p.add_argument("--tables", required=True, help="tables.jsonl")
    p.add_argument("--budget-words", type=int, default=100)


def _add_provider_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--provider",
        default="reference",
        help="reference | vectors:<file.cvec> | external:<command>",
    )
    p.add_argument("--dim", type=int, default=64)


def _add_chainer_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=sorted(PROFILES), default="ottqa")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--k", type=int, help="number of chains kept (top-K)")
    p.add_argument("--k1", type=int, help="first-hop retrieval depth")
    p.add_argument("--ablation", choices=ABLATIONS, default="full")
    p.add_argument("--sr-sign", choices=["logsoftmax", "paper-literal"], default="logsoftmax")
    p.add_argument("--max-len", type=int)
    p.add_argument("--scope", choices=["tables-only", "joint"])


def _params_from_args(args: argparse.Namespace) -> ChainerParams:
    overrides = {"ablation": args.ablation, "sr_sign": args.sr_sign}
    for name, attr in (
        ("alpha", "alpha"),
        ("beta", "beta"),
        ("top_k", "k"),
        ("k1", "k1"),
        ("max_len", "max_len"),
        ("first_hop_scope", "scope"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[name] = value
    return ChainerParams.for_profile(args.profile, **overrides)


def _write_records(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def _cmd_ingest(args) -> int:
    store = load_corpus(args.passages, args.tables, args.budget_words)
    if args.gold:
        gold = load_gold(args.gold)
        store.check_gold(gold)
    print(json.dumps(store.counts, sort_keys=True))
    return EXIT_OK


def _cmd_index_build(args) -> int:
    store = load_corpus(args.passages, args.tables, args.budget_words)
    provider = pl.make_provider(args.provider, args.dim)
    index = DenseIndex.build(provider, store.iter_docs(args.include))
    index.save(args.out)
    print(json.dumps({"docs": len(index), "dim": index.dim, "out": args.out}, sort_keys=True))
    return EXIT_OK


def _cmd_index_vectors(args) -> int:
    store = load_corpus(args.passages, args.tables, args.budget_words)
    provider = pl.make_provider(args.provider, args.dim)
    vectors = {
        doc_id: provider.embed_doc(text, key=doc_id)
        for doc_id, _, text in store.iter_docs(args.include)
    }
    write_vectors(args.out, vectors)
    print(json.dumps({"vectors": len(vectors), "out": args.out}, sort_keys=True))
    return EXIT_OK


def _cmd_link_build(args) -> int:
    config = pl.PipelineConfig(
        passages=args.passages,
        tables=args.tables,
        gold=args.gold,
        provider_spec=args.provider,
        dim=args.dim,
        seed=args.seed,
        budget_words=args.budget_words,
        top_m=args.top_m,
        tag_threshold=args.threshold,
        tagger_epochs=args.epochs,
        tagger_lr=args.lr,
        tagger_path=args.tagger,
    )
    runtime = pl.PipelineRuntime(config)
    runtime.graph.save(args.out)
    summary = {"chunks_with_links": len(runtime.graph.edges), "out": args.out}
    link_eval = runtime.link_eval()
    if link_eval:
        summary.update(
            {"precision": round(link_eval[0], 4), "recall": round(link_eval[1], 4), "f1": round(link_eval[2], 4)}
        )
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_negatives_mine(args) -> int:
    store = load_corpus(args.passages, args.tables, args.budget_words)
    gold = load_gold(args.gold)
    store.check_gold(gold)
    index = build_negative_index(store.passages.values(), args.strategy)
    records = []
    for ann in gold:
        for link in ann.gold_links:
            chunk = store.chunks[link.chunk_id]
            mention = " ".join(chunk.tokens()[link.start : link.end + 1])
            table_title = store.tables[chunk.table_id].title
            negatives = mine_hard_negatives(
                index, args.strategy, mention, table_title, args.n, link.passage_id
            )
            records.append(
                {
                    "chunk_id": link.chunk_id,
                    "start": link.start,
                    "end": link.end,
                    "negatives": negatives,
                }
            )
    _write_records(Path(args.out), records)
    print(json.dumps({"mentions": len(records), "out": args.out}, sort_keys=True))
    return EXIT_OK


def _cmd_chain(args) -> int:
    config = pl.PipelineConfig(
        passages=args.passages,
        tables=args.tables,
        gold=args.gold,
        params=_params_from_args(args),
        provider_spec=args.provider,
        scorer_spec=args.scorer,
        dim=args.dim,
        seed=args.seed,
        threads=args.threads,
        budget_words=args.budget_words,
        use_linker=args.links is not None,
        links_path=args.links,
        index_path=args.index,
        router_path=args.router,
    )
    result = pl.run_pipeline(config)
    _write_records(Path(args.out), result.records)
    if result.report.per_question:
        print(result.report.to_text())
    print(json.dumps({"records": len(result.records), "out": args.out}, sort_keys=True))
    return EXIT_OK


def _cmd_route_train(args) -> int:
    provider = pl.make_provider(args.provider, args.dim)
    embeddings = []
    labels = []
    for path, label in ((args.single_hop, 0), (args.multi_hop, 1)):
        for ann in load_gold(path):
            embeddings.append(provider.embed_question(ann.question, key=ann.qid))
            labels.append(label)
    classifier = train_logistic(
        np.asarray(embeddings), labels, epochs=args.epochs, lr=args.lr, seed=args.seed
    )
    classifier.save(args.out)
    print(json.dumps({"examples": len(labels), "out": args.out}, sort_keys=True))
    return EXIT_OK


def _cmd_eval_retrieval(args) -> int:
    gold = {ann.qid: ann for ann in load_gold(args.gold)}
    by_qid: dict[str, list[dict]] = {}
    with open(args.chains, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                by_qid.setdefault(rec["qid"], []).append(rec)
    ks = [int(k) for k in args.k.split(",")]
    report = MetricReport(config={"k": ks})
    for qid, recs in by_qid.items():
        ann = gold.get(qid)
        if ann is None:
            continue
        recs.sort(key=lambda r: r["rank"])
        hop1_seq = pl.first_seen_order([r["hop1_id"] for r in recs])
        texts = [r["reader_text"] for r in recs]
        values = {}
        for k in ks:
            if ann.gold_chunks:
                values[f"R@{k}"] = recall_at_k(hop1_seq, ann.gold_chunks, k)
            if ann.answers:
                values[f"AR@{k}"] = answer_recall_at_k(texts, ann.answers, k)
        report.add(qid, values)
    print(report.to_json() if args.json else report.to_text())
    return EXIT_OK


def _cmd_eval_answers(args) -> int:
    gold = {ann.qid: ann for ann in load_gold(args.gold)}
    report = MetricReport(config={})
    with open(args.pred, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            ann = gold.get(rec["qid"])
            if ann is None or not ann.answers:
                continue
            em, f1 = em_f1(rec["prediction"], ann.answers)
            report.add(rec["qid"], {"EM": em, "F1": f1})
    print(report.to_json() if args.json else report.to_text())
    return EXIT_OK


def _cmd_tune(args) -> int:
    config = pl.PipelineConfig(
        passages=args.passages,
        tables=args.tables,
        gold=args.gold,
        params=_params_from_args(args),
        provider_spec=args.provider,
        dim=args.dim,
        seed=args.seed,
        budget_words=args.budget_words,
        use_linker=args.links is not None,
        links_path=args.links,
    )
    runtime = pl.PipelineRuntime(config)
    alpha_lo, alpha_hi = (int(x) for x in args.alpha_range.split(":"))
    beta_lo, beta_hi = (int(x) for x in args.beta_range.split(":"))
    alpha, beta, value, trace = pl.grid_search(
        runtime, (alpha_lo, alpha_hi), (beta_lo, beta_hi), args.metric
    )
    if args.trace:
        _write_records(Path(args.trace), trace)
    print(json.dumps({"alpha": alpha, "beta": beta, args.metric: value}, sort_keys=True))
    return EXIT_OK


def _cmd_demo(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = pl.toy_data_dir()
    params = ChainerParams.for_profile(args.profile)
    config = pl.PipelineConfig(
        passages=str(data / "passages.jsonl"),
        tables=str(data / "tables.jsonl"),
        gold=str(data / "gold.jsonl"),
        params=params,
        dim=192,
        seed=args.seed,
        threads=args.threads,
        tagger_epochs=800,
        tagger_lr=15.0,
    )
    runtime = pl.PipelineRuntime(config)

    full = runtime.run()
    retriever_only = runtime.run(params=pl.retriever_only_params(params), with_linker=False)
    no_chainer = runtime.run(params=replace(params, ablation="no-chainer"))

    _write_records(out_dir / "chains.jsonl", full.records)
    _write_records(out_dir / "chains_retriever_only.jsonl", retriever_only.records)
    _write_records(out_dir / "chains_no_chainer.jsonl", no_chainer.records)

    reports = {
        "retriever-only": retriever_only.report,
        "no-chainer": no_chainer.report,
        "linker+chainer": full.report,
    }
    table = format_ablation_table(reports)
    lines = [table]
    link_eval = runtime.link_eval()
    if link_eval:
        lines.append(
            "linker P/R/F1: "
            f"{link_eval[0]:.3f}/{link_eval[1]:.3f}/{link_eval[2]:.3f}"
        )
    text = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    payload = {
        "aggregates": {mode: report.aggregates for mode, report in reports.items()},
        "config": full.report.config,
        "linker_eval": list(link_eval) if link_eval else None,
    }
    (out_dir / "report.json").write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evchain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate corpus files and report counts")
    _add_corpus_args(p)
    p.add_argument("--gold")
    p.set_defaults(func=_cmd_ingest)

    index = sub.add_parser("index", help="dense index commands")
    index_sub = index.add_subparsers(dest="subcommand", required=True)
    p = index_sub.add_parser("build", help="build and save a dense index")
    _add_corpus_args(p)
    _add_provider_args(p)
    p.add_argument("--include", choices=["table-chunks", "passages", "all"], default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index_build)
    p = index_sub.add_parser("vectors", help="export document vectors to a CVEC file")
    _add_corpus_args(p)
    _add_provider_args(p)
    p.add_argument("--include", choices=["table-chunks", "passages", "all"], default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index_vectors)

    link = sub.add_parser("link", help="linker commands")
    link_sub = link.add_subparsers(dest="subcommand", required=True)
    p = link_sub.add_parser("build", help="propose mentions and link them to passages")
    _add_corpus_args(p)
    _add_provider_args(p)
    p.add_argument("--gold", help="gold.jsonl used to train the mention tagger")
    p.add_argument("--tagger", help="load tagger weights instead of training")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--top-m", type=int, default=1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_link_build)

    negatives = sub.add_parser("negatives", help="hard-negative mining")
    negatives_sub = negatives.add_subparsers(dest="subcommand", required=True)
    p = negatives_sub.add_parser("mine", help="mine BM25 hard negatives for gold mentions")
    _add_corpus_args(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--strategy", choices=MINING_STRATEGIES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_negatives_mine)

    p = sub.add_parser("chain", help="run retrieval + linking + chaining end to end")
    _add_corpus_args(p)
    _add_provider_args(p)
    _add_chainer_args(p)
    p.add_argument("--gold", required=True, help="gold.jsonl (questions; metrics if answers)")
    p.add_argument("--links", help="links.jsonl from `link build`; omit to skip the linker")
    p.add_argument("--index", help="prebuilt CIDX index over all docs")
    p.add_argument("--router", help="CRTR router model; routes single-hop past the linker")
    p.add_argument("--scorer", default="reference", help="reference | external:<command>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_chain)

    route_cmd = sub.add_parser("route", help="question-type router")
    route_sub = route_cmd.add_subparsers(dest="subcommand", required=True)
    p = route_sub.add_parser("train", help="train the single/multi-hop classifier")
    _add_provider_args(p)
    p.add_argument("--single-hop", required=True, help="gold.jsonl of single-hop questions")
    p.add_argument("--multi-hop", required=True, help="gold.jsonl of multi-hop questions")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_route_train)

    eval_cmd = sub.add_parser("eval", help="evaluation commands")
    eval_sub = eval_cmd.add_subparsers(dest="subcommand", required=True)
    p = eval_sub.add_parser("retrieval", help="chunk recall and answer recall over chains")
    p.add_argument("--gold", required=True)
    p.add_argument("--chains", required=True)
    p.add_argument("--k", default="20,50,100", help="comma-separated cutoffs")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_eval_retrieval)
    p = eval_sub.add_parser("answers", help="EM/F1 of predictions against gold answers")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_eval_answers)

    p = sub.add_parser("tune", help="grid-search alpha/beta on dev answer recall")
    _add_corpus_args(p)
    _add_provider_args(p)
    _add_chainer_args(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--links")
    p.add_argument("--alpha-range", default="1:20")
    p.add_argument("--beta-range", default="1:20")
    p.add_argument("--metric", default="AR@50")
    p.add_argument("--trace", help="write per-grid-point results to this JSONL file")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("demo", help="run the bundled toy corpus end to end")
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=sorted(PROFILES), default="ottqa")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
