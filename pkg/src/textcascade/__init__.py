"""Hawkes-scheduled text cascades: fitting, simulation, and drift diagnostics."""

from .backends import (
    EmbeddingVector,
    GenerationOptions,
    LocalInferenceClient,
    MockEmbedder,
    MockGenerator,
    mock_embed,
    mock_generate,
)
from .cascade import (
    CascadeRun,
    RunConfig,
    load_run,
    make_rng,
    run_cascade,
    sample_next_event,
    save_run,
    simulate_stream,
)
from .diagnostics import (
    DiagnosticsRecord,
    MatchResult,
    MatchWindow,
    RunSummary,
    TrendResult,
    aggregate_summaries,
    evaluate_run,
    global_drift,
    late_stage,
    local_drift,
    match_references,
    moving_average,
    semantic_alignment,
    summarize_run,
    trend,
)
from .errors import (
    CascadeError,
    DegenerateEmbeddingError,
    DegenerateOutputError,
    EmptyInputError,
    InputError,
    NoStableModelError,
    RateExtinctionError,
    SplitError,
    TaxonomyError,
    TransportError,
)
from .events import (
    Event,
    EventStream,
    NodeSpec,
    NodeTaxonomy,
    RawRecord,
    build_stream,
    chronological_split,
    deduplicate,
    fetch_articles,
    filter_language,
    parse_records,
    parse_timestamp,
)
from .hawkes import (
    DEFAULT_BETA_GRID,
    FitConfig,
    FitResult,
    HawkesExponentialEstimator,
    HawkesParams,
    compensator,
    excitation_matrix,
    fit,
    fit_grid,
    information_criteria,
    intensity,
    intensity_vector,
    log_likelihood,
    spectral_radius,
    total_intensity,
)
from .memory import (
    Memory,
    MemoryCandidate,
    MemoryItem,
    hawkes_memory,
    last_k_memory,
    make_policy,
    random_k_memory,
    score_candidates,
)
from .prompts import PromptSpec, build_prompt, prompt_hash

__version__ = "0.1.0"
