"""lmforge: a provider-agnostic language-model operations toolkit.

One factory (create_task / TaskFactory) hands out every component: the
streaming chat gateway with memory, LLM data labelling, embeddings, vector
search (flat + HNSW), reranking, BPE tokenizer training with dynamic
masking, embedding-head classification, and embedding-space distillation.
"""

from .core import (
    ModelConfig,
    TaskFactory,
    TokenizerConfig,
    TrainingConfig,
    create_task,
    split_training_config,
    validate_model_config,
)
from .errors import LmforgeError

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "LmforgeError",
    "ModelConfig",
    "TaskFactory",
    "TokenizerConfig",
    "TrainingConfig",
    "create_task",
    "split_training_config",
    "validate_model_config",
]
