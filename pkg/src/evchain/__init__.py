"""Evidence-chain retrieval over heterogeneous corpora of tables and passages.

The pipeline retrieves first-hop evidence with exact inner-product search,
links table entity mentions to passages to form an evidence graph, reranks
candidate chains with question-generation scores, and serializes the top-K
deduplicated chains for a downstream reader.
"""

from .chainer import (
    ChainerParams,
    CandidateChain,
    ReaderChain,
    assemble_topk,
    chain_score,
    rank_chains,
    s_r,
    serialize_chain,
    singleton_score,
)
from .corpus import (
    CorpusStore,
    GoldAnnotation,
    Passage,
    Table,
    TableChunk,
    chunk_table,
    flatten_table,
    load_corpus,
    load_gold,
)
from .dense_index import DenseIndex, SearchHit, retrieve_first_hop
from .embed import (
    EmbeddingProvider,
    FileVectorProvider,
    ReferenceProvider,
    entity_embedding,
    reference_token_vector,
)
from .linker import (
    EvidenceGraph,
    LinearTagger,
    LinkEdge,
    MentionSpan,
    bce_loss_and_grad,
    contrastive_loss_and_grad,
    eval_links,
    extract_spans,
    link_mentions,
    tag_probs,
)
from .metrics import MetricReport, answer_recall_at_k, em_f1, normalize_answer, recall_at_k
from .pipeline import PipelineConfig, PipelineRuntime, run_pipeline
from .qg_scorer import ReferenceQgScorer, ScoreCache, batch_score, format_prompt
from .router import LinearClassifier, route, train_logistic
from .sparse_bm25 import Bm25Index, mine_hard_negatives

__version__ = "0.1.0"
