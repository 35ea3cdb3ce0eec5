"""STAYKATE: hybrid static/dynamic in-context example selection for scientific NER.

Static examples are chosen once per data pool by predictive-entropy
representativeness over an unlabeled candidate pool; dynamic examples are
retrieved per test input by embedding similarity from a small labeled pool.
The package also ships prompt assembly, a record/replay chat-completion
client, and an entity-level evaluation harness with an error taxonomy.
"""

__version__ = "0.1.0"

from .corpus import (
    Dataset,
    EntitySpan,
    LabelScheme,
    NonEntityReport,
    PoolSplit,
    Sentence,
    Token,
    UnlabeledPool,
    bio_from_spans,
    load_corpus,
    load_dataset,
    non_entity_ratio,
    spans_from_bio,
    split_pools,
    validate_bio,
)
from .errors import (
    AuthenticationError,
    PoolDisciplineError,
    ReplayCacheMiss,
    StaykateError,
    TransportError,
    ValidationError,
)
from .selection_static import (
    EntropyStats,
    StaticSelection,
    TokenProbMatrix,
    entropy_stats,
    load_probability_file,
    pool_entropy_stats,
    r_score,
    select_from_entropies,
    select_static,
    sentence_entropy,
    token_entropy,
)
from .selection_dynamic import (
    EmbeddingIndex,
    EmbeddingRecord,
    cosine_similarity,
    knn_retrieve,
    load_embedding_file,
)
from .prompting import (
    Demonstration,
    PromptBundle,
    assemble_prompt,
    build_instructions,
    build_system_role,
    render_answer,
)
from .llm import (
    ChatRequest,
    ChatResponse,
    ExtractionResult,
    LiveTransport,
    RateLimiter,
    ReplayTransport,
    ResponseCache,
    complete,
    parse_extraction,
)
from .evaluation import (
    EvalReport,
    MatchReport,
    aggregate_runs,
    f1_scores,
    match_entities,
    normalize_surface,
    render_table,
)
from .config import ExperimentConfig, load_config, parse_config
from .pipeline import (
    RunArtifacts,
    allocate_k,
    build_prompts,
    pseudo_label,
    random_select,
    run_experiment,
)
from .seeding import derive_seed

__all__ = [name for name in dir() if not name.startswith("_")]
