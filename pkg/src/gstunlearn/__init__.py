"""Graph scattering embeddings with certified removal of nodes, node features
and whole graphs from linear classifiers trained on them."""
from .classifier import LINEAR, LOGISTIC, LossModel, ModelState, predict, predict_ovr, train
from .errors import (
    BatchPreconditionError,
    BoundViolationError,
    CacheError,
    DegenerateGraphError,
    GSTUnlearnError,
    LabelError,
    ParameterError,
    ParseError,
    StaleRequestError,
    StructuralError,
    UnsupportedPathError,
)
from .graph import Dataset, Graph, load_dataset, remove_node, write_dataset, zero_feature
from .scattering import PowerCache, ScatteringConfig, embed, embed_dataset, embed_incremental
from .unlearn import BudgetLedger, RemovalRequest, UnlearnOutcome, Unlearner
from .wavelets import FilterBank, WaveletFamily, build_filter_bank

__version__ = "0.1.0"
