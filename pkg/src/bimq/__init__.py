"""Natural-language assistant over building-component databases.

Chains staged LLM prompts (intent, parameter, value, summary) to turn chat
questions into structured lookups against a schema'd object store, with an
offline evaluation harness and a chat service on top.
"""

from .errors import BimqError
from .fixture import FixtureSpec, generate_fixture
from .llm import (
    Cassette,
    FunctionBackend,
    GenerationRequest,
    GenerationResult,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    ScriptBackend,
    open_replay,
    record_cassette,
)
from .pipeline import Answer, PipelineConfig, PipelineStage, run_query
from .prompts import (
    ABLATION_ROWS,
    FULL,
    Catalog,
    FewShotExample,
    Intent,
    PromptComponentKind,
    PromptComposition,
    RenderedPrompt,
    enforce_budget,
)
from .store import (
    CategorySchema,
    ComponentRecord,
    QueryResult,
    Store,
    StructuredQuery,
    load_store,
    normalize,
)

__version__ = "0.1.0"

__all__ = [
    "ABLATION_ROWS",
    "Answer",
    "BimqError",
    "Cassette",
    "Catalog",
    "CategorySchema",
    "ComponentRecord",
    "FULL",
    "FewShotExample",
    "FixtureSpec",
    "FunctionBackend",
    "GenerationRequest",
    "GenerationResult",
    "Intent",
    "PipelineConfig",
    "PipelineStage",
    "PromptComponentKind",
    "PromptComposition",
    "QueryResult",
    "RecordingBackend",
    "RemoteBackend",
    "RenderedPrompt",
    "ReplayBackend",
    "ScriptBackend",
    "Store",
    "StructuredQuery",
    "enforce_budget",
    "generate_fixture",
    "load_store",
    "normalize",
    "open_replay",
    "record_cassette",
    "run_query",
]
