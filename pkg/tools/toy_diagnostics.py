#!/usr/bin/env python3
"""Diagnostics for the bundled demo corpus: run the pipeline, print per-question detail."""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))


def run_diagnostics(data_dir: Path) -> None:
    from evchain import pipeline as pl
    from evchain.chainer import ChainerParams
    from evchain.metrics import answer_recall_at_k

    params = ChainerParams.for_profile("ottqa")
    config = pl.PipelineConfig(
        passages=str(data_dir / "passages.jsonl"),
        tables=str(data_dir / "tables.jsonl"),
        gold=str(data_dir / "gold.jsonl"),
        params=params,
        dim=192,
        tagger_epochs=800,
        tagger_lr=15.0,
    )
    runtime = pl.PipelineRuntime(config)
    store = runtime.store
    print("counts:", store.counts, " chunks/table:", round(store.counts["chunks"] / store.counts["tables"], 2))

    link_eval = runtime.link_eval()
    print(f"linker P/R/F1: {link_eval[0]:.3f} {link_eval[1]:.3f} {link_eval[2]:.3f}"
          if link_eval else "no link eval")
    n_edges = sum(len(v) for v in runtime.graph.edges.values())
    print(f"graph: {len(runtime.graph.edges)} chunks with links, {n_edges} edges")

    full = runtime.run()
    retr = runtime.run(params=pl.retriever_only_params(params), with_linker=False)
    noch = runtime.run(params=replace(params, ablation="no-chainer"))

    print("\nmode aggregates:")
    for name, res in [("full", full), ("retriever-only", retr), ("no-chainer", noch)]:
        print(f"  {name:15s} {res.report.aggregates}")

    by_qid = {ann.qid: ann for ann in runtime.gold}
    print("\nper-question (AR@20/AR@50 per mode; gold passage entry pos in no-chainer):")
    for qid, _q in runtime.questions():
        ann = by_qid[qid]
        row = [qid.ljust(16)]
        for name, res in [("full", full), ("retr", retr), ("noch", noch)]:
            recs = [r for r in res.records if r["qid"] == qid]
            texts = [r["reader_text"] for r in recs]
            ar20 = answer_recall_at_k(texts, ann.answers, 20) if ann.answers else "-"
            ar50 = answer_recall_at_k(texts, ann.answers, 50) if ann.answers else "-"
            row.append(f"{name}:{ar20}/{ar50}")
        # where do the gold chunk and its passage land in the no-chainer entry list?
        recs = [r for r in res.records if r["qid"] == qid]
        noch_recs = [r for r in noch.records if r["qid"] == qid]
        gold_pids = {l.passage_id for l in ann.gold_links}
        gold_cids = set(ann.gold_chunks)
        pos_c = next((r["rank"] for r in noch_recs if r["hop1_id"] in gold_cids and r["hop2_id"] is None), None)
        pos_p = next((r["rank"] for r in noch_recs if r["hop2_id"] in gold_pids), None)
        full_recs = [r for r in full.records if r["qid"] == qid]
        fpos_p = next((r["rank"] for r in full_recs if r["hop2_id"] in gold_pids), None)
        row.append(f"noch chunk@{pos_c} passage@{pos_p} | full passage@{fpos_p}")
        print("  " + "  ".join(str(x) for x in row))

    print("\nhard-question gold chunk retrieval ranks (dense, tables-only):")
    from evchain.dense_index import retrieve_first_hop
    for qid, question in runtime.questions():
        ann = by_qid[qid]
        if not ann.gold_chunks:
            continue
        hits = retrieve_first_hop(runtime.index, runtime.provider, question, 200, "tables-only")
        ranks = {h.doc_id: h.rank for h in hits}
        print(f"  {qid.ljust(16)} " + ", ".join(f"{c}@{ranks.get(c)}" for c in ann.gold_chunks))


if __name__ == "__main__":
    run_diagnostics(Path(sys.argv[1]) if len(sys.argv) > 1 else REPO / "src/evchain/data/toy")
