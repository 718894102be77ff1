import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmforge.core import (
    TASK_KINDS,
    ModelConfig,
    TaskFactory,
    TokenizerConfig,
    TrainingConfig,
    create_task,
    split_training_config,
    validate_model_config,
)
from lmforge.errors import (
    ConfigError,
    HeadDivisibilityError,
    InvalidValueError,
    NonPositiveFieldError,
    UnknownKeyError,
    UnknownTaskKindError,
)

MOCK = {"provider_kind": "mock", "seed": 7, "dim": 16}
# trainer configs route non-provider keys to the training splitter, so the
# mock's knobs go through the provider_-prefixed aliases there
MOCK_TRAINER = {"provider_kind": "mock", "provider_seed": 7, "provider_dim": 16}


def test_every_kind_constructs():
    configs = {
        "generator": MOCK,
        "labeller": {**MOCK, "labels": {"a": "cond a", "b": "cond b"}},
        "embedder": MOCK,
        "searcher": {"index_type": "hnsw", "dim": 8},
        "reranker": {**MOCK, "backend": "embedding-fallback"},
        "mimicker": {**MOCK_TRAINER, "student": "linear", "in_dim": 8},
        "classifier": MOCK_TRAINER,
        "tokenizer-trainer": {"vocab_size": 300, "min_frequency": 2, "max_length": 64},
    }
    assert set(configs) == set(TASK_KINDS)
    for kind, config in configs.items():
        handle = create_task(kind, config)
        assert handle is not None


def test_unknown_kind_is_error():
    with pytest.raises(UnknownTaskKindError):
        create_task("summarizer", {})


def test_searcher_empty_hnsw():
    index = create_task("searcher", {"index_type": "hnsw", "dim": 8})
    assert len(index) == 0
    assert index.backend == "hnsw"


def test_factory_idempotence():
    for kind, config in [
        ("embedder", MOCK),
        ("generator", MOCK),
        ("labeller", {**MOCK, "labels": {"x": "cond", "y": "cond"}}),
        ("reranker", {**MOCK, "backend": "embedding-fallback"}),
        ("searcher", {"index_type": "hnsw", "dim": 8}),
        ("mimicker", {**MOCK_TRAINER, "student": "linear", "in_dim": 4}),
        ("classifier", MOCK_TRAINER),
        ("tokenizer-trainer", {"vocab_size": 300}),
    ]:
        first = create_task(kind, config)
        second = create_task(kind, config)
        assert first.describe() == second.describe(), kind


def test_factory_facade_static_methods():
    embedder = TaskFactory.create_embedder(MOCK)
    assert embedder.describe()["task"] == "embedder"
    searcher = TaskFactory.create_searcher({"index_type": "flat", "dim": 4})
    assert searcher.backend == "flat"


def test_factory_config_validation_surface():
    with pytest.raises(ConfigError):
        create_task("searcher", {"index_type": "hnsw"})  # dim missing
    with pytest.raises(ConfigError):
        create_task("searcher", {"index_type": "ivf", "dim": 4})
    with pytest.raises(ConfigError):
        create_task("reranker", {"backend": "http-scorer"})  # scorer_url missing
    with pytest.raises((ConfigError, ValueError)):
        create_task("labeller", {**MOCK, "labels": {"only": "one"}})


# --- training config splitter -------------------------------------------------------


def test_split_routes_keys():
    config = split_training_config({"learning_rate": 1e-4, "mlm_probability": 0.15})
    assert config.general == {"learning_rate": 1e-4}
    assert config.task_specific == {"mlm_probability": 0.15}


def test_split_empty():
    config = split_training_config({})
    assert config.general == {} and config.task_specific == {}


def test_split_rejects_out_of_range():
    with pytest.raises(InvalidValueError):
        split_training_config({"mlm_probability": 1.5})
    with pytest.raises(InvalidValueError):
        split_training_config({"learning_rate": -1.0})
    with pytest.raises(InvalidValueError):
        split_training_config({"eval_fraction": 1.0})
    with pytest.raises(InvalidValueError):
        split_training_config({"loss_weights": [0.7, 0.7]})


def test_split_rejects_unknown_key_by_name():
    with pytest.raises(UnknownKeyError) as excinfo:
        split_training_config({"learning_rate": 1e-3, "warmup_steps": 10})
    assert excinfo.value.field == "warmup_steps"


def test_split_key_sets_disjoint():
    config = split_training_config({
        "learning_rate": 0.1, "num_train_epochs": 2, "batch_size": 4,
        "seed": 0, "output_dir": "/tmp/x", "eval_fraction": 0.5,
        "mlm_probability": 0.2, "loss_weights": [0.3, 0.7],
    })
    assert not set(config.general) & set(config.task_specific)
    assert set(config.general) | set(config.task_specific) == {
        "learning_rate", "num_train_epochs", "batch_size", "seed",
        "output_dir", "eval_fraction", "mlm_probability", "loss_weights",
    }


GENERAL = {
    "learning_rate": st.floats(1e-6, 10, allow_nan=False),
    "num_train_epochs": st.integers(1, 100),
    "batch_size": st.integers(1, 512),
    "seed": st.integers(-1000, 1000),
    "eval_fraction": st.floats(0.01, 0.99),
}
TASK = {"mlm_probability": st.floats(0, 1)}


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_split_union_homomorphism(data):
    keys_a = data.draw(st.sets(st.sampled_from(sorted(GENERAL))))
    keys_b = data.draw(st.sets(st.sampled_from(sorted(TASK))))
    a = {k: data.draw(GENERAL[k]) for k in keys_a}
    b = {k: data.draw(TASK[k]) for k in keys_b}
    merged = split_training_config({**a, **b})
    split_a = split_training_config(a)
    split_b = split_training_config(b)
    assert merged.general == {**split_a.general, **split_b.general}
    assert merged.task_specific == {**split_a.task_specific, **split_b.task_specific}


def test_split_deterministic_regardless_of_order():
    items = [("learning_rate", 0.1), ("mlm_probability", 0.5), ("batch_size", 8)]
    forward = split_training_config(dict(items))
    backward = split_training_config(dict(reversed(items)))
    assert forward == backward


def test_training_config_round_trip():
    config = split_training_config({"learning_rate": 0.25, "loss_weights": [0.4, 0.6]})
    assert TrainingConfig.from_json(config.to_json()) == config


# --- model config -----------------------------------------------------------------


def test_model_config_roberta_base_values():
    config = ModelConfig(
        vocab_size=50265, max_position_embeddings=512, num_attention_heads=12,
        num_hidden_layers=12, hidden_size=768, intermediate_size=3072,
    )
    assert validate_model_config(config) is config
    assert config.hidden_size % config.num_attention_heads == 0


def test_model_config_head_divisibility():
    config = ModelConfig(50265, 512, 12, 12, 100, 3072)
    with pytest.raises(HeadDivisibilityError):
        validate_model_config(config)


def test_model_config_divisible_small():
    config = ModelConfig(
        vocab_size=1, max_position_embeddings=1, num_attention_heads=8,
        num_hidden_layers=1, hidden_size=64, intermediate_size=1,
    )
    assert validate_model_config(config) is config


def test_model_config_nonpositive():
    with pytest.raises(NonPositiveFieldError) as excinfo:
        validate_model_config(ModelConfig(0, 512, 12, 12, 768, 3072))
    assert excinfo.value.field == "vocab_size"


def test_model_config_round_trip():
    config = validate_model_config(ModelConfig(50265, 512, 12, 12, 768, 3072))
    assert ModelConfig.from_json(config.to_json()) == config


# --- tokenizer config --------------------------------------------------------------


def test_tokenizer_config_floor():
    TokenizerConfig(max_length=16, vocab_size=262, min_frequency=1)
    with pytest.raises(ConfigError):
        TokenizerConfig(max_length=16, vocab_size=261, min_frequency=1)


def test_tokenizer_config_positive_fields():
    with pytest.raises(NonPositiveFieldError):
        TokenizerConfig(max_length=0, vocab_size=300, min_frequency=1)
    with pytest.raises(NonPositiveFieldError):
        TokenizerConfig(max_length=4, vocab_size=300, min_frequency=0)


def test_tokenizer_config_round_trip():
    config = TokenizerConfig(max_length=64, vocab_size=300, min_frequency=3)
    assert TokenizerConfig.from_json(config.to_json()) == config
