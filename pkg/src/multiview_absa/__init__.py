"""Multi-view aspect sentiment tuple prediction engine.

Element-order prompts steer a sequence-to-sequence backend to generate
sentiment tuples in several different orders; a constraint automaton
keeps every generation inside the target schema, and majority voting
over the views produces the final tuple set.
"""

from .aggregate import ViewPrediction, random_select, rank_select, single_view_order, vote
from .backend import Backend, BackendError, Capabilities, CapabilityError, TableBackend, UniformRandomBackend
from .data import (
    DatasetError,
    DatasetExample,
    TrainingPair,
    build_multitask,
    build_training_pairs,
    dataset_stats,
    load_dataset,
    load_dataset_auto,
    subsample,
    write_dataset,
)
from .decoding import ConstraintTables, DecoderState, GenerationResult, build_constraints, constrained_generate
from .evaluation import MatchCounts, aggregate_runs, match_counts, micro_f1
from .orders import OrderScore, enumerate_orders, rank_orders, score_order, select_orders
from .remote import RemoteBackend, RemoteConfig, remote_config
from .schema import (
    ElementKind,
    ElementOrder,
    ParseDiagnostics,
    SchemaError,
    SentimentTuple,
    TaskSpec,
    build_input,
    make_task,
    parse_target,
    serialize_target,
)
from .tokenizers import CharTokenizer, Tokenizer, WordTokenizer, load_tokenizer_artifact

__all__ = [
    "Backend",
    "BackendError",
    "Capabilities",
    "CapabilityError",
    "CharTokenizer",
    "ConstraintTables",
    "DatasetError",
    "DatasetExample",
    "DecoderState",
    "ElementKind",
    "ElementOrder",
    "GenerationResult",
    "MatchCounts",
    "OrderScore",
    "ParseDiagnostics",
    "RemoteBackend",
    "RemoteConfig",
    "SchemaError",
    "SentimentTuple",
    "TableBackend",
    "TaskSpec",
    "Tokenizer",
    "TrainingPair",
    "UniformRandomBackend",
    "ViewPrediction",
    "WordTokenizer",
    "aggregate_runs",
    "build_constraints",
    "build_input",
    "build_multitask",
    "build_training_pairs",
    "constrained_generate",
    "dataset_stats",
    "enumerate_orders",
    "load_dataset",
    "load_dataset_auto",
    "load_tokenizer_artifact",
    "make_task",
    "match_counts",
    "micro_f1",
    "parse_target",
    "random_select",
    "rank_orders",
    "rank_select",
    "remote_config",
    "score_order",
    "select_orders",
    "serialize_target",
    "single_view_order",
    "subsample",
    "vote",
    "write_dataset",
]

__version__ = "0.1.0"
