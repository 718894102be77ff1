"""Byte-level BPE tokenizer training, encode/decode, and the dynamic
masking collator.

Words are split on whitespace (runs of whitespace collapse to single
spaces — the documented, lossy canonicalization) and carry an end-of-word
marker symbol. Base symbols are the 256 byte values rendered as latin-1
characters plus the marker; merges concatenate symbol strings. The marker
is U+2581, deliberately outside latin-1 so no sequence of byte symbols can
ever merge into a string that collides with it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import TokenizerConfig
from .errors import EmptyCorpusError, UnknownTokenIdError

__all__ = [
    "SPECIAL_TOKENS",
    "WORD_END",
    "TokenizerModel",
    "MaskingConfig",
    "TokenizerTrainer",
    "train_bpe",
    "encode",
    "decode",
    "mask_tokens",
    "save_tokenizer",
    "load_tokenizer",
]

SPECIAL_TOKENS = {"<pad>": 0, "<unk>": 1, "<bos>": 2, "<eos>": 3, "<mask>": 4}
PAD_ID, UNK_ID, BOS_ID, EOS_ID, MASK_ID = 0, 1, 2, 3, 4
NUM_SPECIALS = len(SPECIAL_TOKENS)
WORD_END = "▁"
IGNORE_INDEX = -100

_BYTE_CHARS = [chr(i) for i in range(256)]


@dataclass
class TokenizerModel:
    """Trained vocabulary + ordered merge rules. Immutable once trained."""

    vocab: dict[str, int]
    merges: list[tuple[str, str]]
    config: TokenizerConfig | None = None
    _merge_ranks: dict[tuple[str, str], int] = field(default_factory=dict, repr=False)
    _id_to_token: list[str] = field(default_factory=list, repr=False)
    _word_cache: dict[str, list[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._merge_ranks = {pair: rank for rank, pair in enumerate(self.merges)}
        self._id_to_token = [""] * len(self.vocab)
        for token, token_id in self.vocab.items():
            self._id_to_token[token_id] = token

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)


def _base_vocab() -> dict[str, int]:
    vocab = dict(SPECIAL_TOKENS)
    for ch in _BYTE_CHARS:
        vocab[ch] = len(vocab)
    vocab[WORD_END] = len(vocab)
    return vocab


def _word_symbols(word: str) -> tuple[str, ...]:
    return tuple(chr(b) for b in word.encode("utf-8")) + (WORD_END,)


def _count_words(corpus: Iterable[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for line in corpus:
        for word in line.split():
            counts[word] = counts.get(word, 0) + 1
    return counts


def train_bpe(corpus: Iterable[str], config: TokenizerConfig) -> TokenizerModel:
    """Iteratively merge the most frequent adjacent symbol pair.

    Frequency ties break toward the lexicographically smaller left symbol,
    then smaller right symbol. Merging stops once vocab_size is reached or
    no pair's frequency clears min_frequency. Deterministic for a fixed
    corpus and config.
    """
    word_counts = _count_words(corpus)
    if not word_counts:
        raise EmptyCorpusError()

    vocab = _base_vocab()
    merges: list[tuple[str, str]] = []
    words: list[tuple[tuple[str, ...], int]] = [
        (_word_symbols(w), c) for w, c in word_counts.items()
    ]

    while len(vocab) < config.vocab_size:
        pair_counts: dict[tuple[str, str], int] = {}
        for symbols, count in words:
            for i in range(len(symbols) - 1):
                pair = (symbols[i], symbols[i + 1])
                pair_counts[pair] = pair_counts.get(pair, 0) + count
        if not pair_counts:
            break
        best_pair = min(pair_counts, key=lambda p: (-pair_counts[p], p[0], p[1]))
        if pair_counts[best_pair] < config.min_frequency:
            break
        merged_symbol = best_pair[0] + best_pair[1]
        merges.append(best_pair)
        # Two pairs can concatenate to one surface form (or to a special
        # token string); the first id wins, the merge rule still applies.
        if merged_symbol not in vocab:
            vocab[merged_symbol] = len(vocab)
        words = [(_merge_word(symbols, best_pair, merged_symbol), count)
                 for symbols, count in words]

    return TokenizerModel(vocab=vocab, merges=merges, config=config)


def _merge_word(symbols: tuple[str, ...], pair: tuple[str, str], merged: str) -> tuple[str, ...]:
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def _encode_word(model: TokenizerModel, word: str) -> list[int]:
    cached = model._word_cache.get(word)
    if cached is not None:
        return cached
    symbols = list(_word_symbols(word))
    ranks = model._merge_ranks
    while len(symbols) > 1:
        best_rank = None
        best_index = -1
        for i in range(len(symbols) - 1):
            rank = ranks.get((symbols[i], symbols[i + 1]))
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
                best_index = i
        if best_rank is None:
            break
        pair = (symbols[best_index], symbols[best_index + 1])
        symbols = list(_merge_word(tuple(symbols), pair, pair[0] + pair[1]))
    ids = [model.vocab[s] for s in symbols]
    model._word_cache[word] = ids
    return ids


def encode(model: TokenizerModel, text: str, max_length: int | None = None) -> list[int]:
    """Tokenize text to ids with bos/eos; truncation keeps eos final."""
    ids: list[int] = [BOS_ID]
    for word in text.split():
        ids.extend(_encode_word(model, word))
    ids.append(EOS_ID)
    if max_length is None and model.config is not None:
        max_length = model.config.max_length
    if max_length is not None and len(ids) > max_length:
        ids = ids[:max_length - 1] + [EOS_ID]
    return ids


def decode(model: TokenizerModel, ids: Sequence[int]) -> str:
    """Inverse of encode up to whitespace canonicalization; specials dropped."""
    pieces: list[str] = []
    for token_id in ids:
        if not 0 <= token_id < model.vocab_size:
            raise UnknownTokenIdError(token_id)
        if token_id < NUM_SPECIALS:
            continue
        pieces.append(model._id_to_token[token_id])
    joined = "".join(pieces)
    words = [w.encode("latin-1").decode("utf-8", "replace") for w in joined.split(WORD_END)]
    return " ".join(w for w in words if w)


# --- dynamic masking collator -------------------------------------------------------


@dataclass(frozen=True)
class MaskingConfig:
    """Controls the masked-language-model data collator.

    Each non-special position is selected independently with probability
    mlm_probability; a second seeded draw realizes the replace/random/keep
    proportions per selected position. vocab_size bounds the random
    replacement draw (spec'd to a uniformly random non-special id).
    """

    mlm_probability: float
    vocab_size: int
    mask_token_id: int = MASK_ID
    rng_seed: int = 0
    proportions: tuple[float, float, float] = (0.8, 0.1, 0.1)  # mask, random, keep
    special_ids: tuple[int, ...] = tuple(range(NUM_SPECIALS))

    def __post_init__(self) -> None:
        if not 0 <= self.mlm_probability <= 1:
            raise ValueError("mlm_probability must lie in [0, 1]")
        if abs(sum(self.proportions) - 1.0) > 1e-9 or any(p < 0 for p in self.proportions):
            raise ValueError("proportions must be non-negative and sum to 1")
        if self.vocab_size <= NUM_SPECIALS:
            raise ValueError("vocab_size must exceed the special token count")


def mask_tokens(ids: Sequence[int], cfg: MaskingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return (input_ids, labels) for one sequence.

    labels hold the original id at selected positions and -100 elsewhere;
    special-token positions are never selected. Seed-deterministic.
    """
    input_ids = np.asarray(ids, dtype=np.int64).copy()
    n = input_ids.shape[0]
    labels = np.full(n, IGNORE_INDEX, dtype=np.int64)

    rng = np.random.default_rng(cfg.rng_seed)
    selectable = ~np.isin(input_ids, np.asarray(cfg.special_ids, dtype=np.int64))
    selected = (rng.random(n) < cfg.mlm_probability) & selectable

    action_draw = rng.random(n)
    random_ids = rng.integers(NUM_SPECIALS, cfg.vocab_size, size=n, dtype=np.int64)

    labels[selected] = input_ids[selected]
    p_mask, p_random, _p_keep = cfg.proportions
    mask_here = selected & (action_draw < p_mask)
    random_here = selected & (action_draw >= p_mask) & (action_draw < p_mask + p_random)
    input_ids[mask_here] = cfg.mask_token_id
    input_ids[random_here] = random_ids[random_here]
    return input_ids, labels


# --- persistence ---------------------------------------------------------------------

MERGES_HEADER = "#version: lmforge bpe 1"


def save_tokenizer(model: TokenizerModel, directory: str | Path) -> None:
    """Write vocab.json (token -> id, ordered by id) and merges.txt."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ordered = dict(sorted(model.vocab.items(), key=lambda kv: kv[1]))
    (directory / "vocab.json").write_text(
        json.dumps(ordered, ensure_ascii=True, indent=0), encoding="utf-8"
    )
    lines = [MERGES_HEADER]
    lines.extend(f"{left} {right}" for left, right in model.merges)
    (directory / "merges.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_tokenizer(directory: str | Path, config: TokenizerConfig | None = None) -> TokenizerModel:
    directory = Path(directory)
    vocab = json.loads((directory / "vocab.json").read_text(encoding="utf-8"))
    merges: list[tuple[str, str]] = []
    for line in (directory / "merges.txt").read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        left, right = line.split(" ", 1)
        merges.append((left, right))
    return TokenizerModel(vocab={k: int(v) for k, v in vocab.items()},
                          merges=merges, config=config)


class TokenizerTrainer:
    """Task handle: train a BPE tokenizer on a corpus per one config."""

    def __init__(self, config: TokenizerConfig):
        self.config = config

    def train(self, corpus: Iterable[str]) -> TokenizerModel:
        return train_bpe(corpus, self.config)

    def train_file(self, path: str | Path) -> TokenizerModel:
        with open(path, encoding="utf-8") as fh:
            return train_bpe(fh, self.config)

    def describe(self) -> dict:
        return {
            "task": "tokenizer-trainer",
            "max_length": self.config.max_length,
            "vocab_size": self.config.vocab_size,
            "min_frequency": self.config.min_frequency,
        }
