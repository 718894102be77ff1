"""Acceptance suite: every operative criterion at its stated tolerance,
one test per criterion, each printing a PASS line with its runtime.

Run with `pytest tests/test_acceptance.py -v -s`.
"""

import json
import random
import string
import time
from collections import Counter
from contextlib import contextmanager

import numpy as np
import pytest
from fastapi.testclient import TestClient

from lmforge.chat_service import ChatGateway, create_app
from lmforge.core import TokenizerConfig, split_training_config
from lmforge.errors import (
    CorruptIndexError,
    InvalidValueError,
    UnknownKeyError,
    UnknownLabelError,
    UnparsableResponseError,
    VersionMismatchError,
)
from lmforge.labeller import LabelFailure, LabelResult, LabelSchema, label_batch, label_text
from lmforge.providers import MockProvider
from lmforge.reranker import Reranker, RerankRequest, order_by_scores
from lmforge.tokenizer import (
    WORD_END,
    MaskingConfig,
    decode,
    encode,
    mask_tokens,
    train_bpe,
)
from lmforge.trainers import (
    classify,
    cross_entropy_loss_and_grads,
    hash_featurizer,
    load_model,
    mimic_loss_and_grads,
    save_model,
    train_classifier,
    train_mimicker,
)
from lmforge.vector_search import FlatIndex, HnswIndex, HnswParams, load_index


@contextmanager
def budget(criterion: str, seconds: float):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    print(f"PASS {criterion} ({elapsed:.2f}s < {seconds:.0f}s)")
    assert elapsed < seconds, f"{criterion} exceeded its {seconds}s runtime budget"


# --- 1. endpoint contract ------------------------------------------------------------


def test_criterion_01_endpoint_contract():
    with budget("1 endpoint contract", 5):
        provider = MockProvider(seed=1)
        gateway = ChatGateway(provider)
        client = TestClient(create_app(gateway))

        six_field_body = {
            "system_prompt": "You are helpful.",
            "memory_k": 0,
            "temperature": 0.7,
            "top_p": 0.9,
            "max_length": 64,
            "prompt": "echo: the full completion text",
        }
        with client.stream("POST", "/api/generate", json=six_field_body) as response:
            assert response.status_code == 200
            assert response.headers["content-type"].startswith("text/event-stream")
            raw = response.read().decode()
        events = [json.loads(line[6:]) for line in raw.splitlines()
                  if line.startswith("data: ")]
        assert events, "stream yielded no events"
        assert events[-1]["done"] is True
        assert [e.get("done", False) for e in events].count(True) == 1
        streamed = "".join(e.get("delta", "") for e in events)
        expected = MockProvider(seed=1).complete_text(
            [("system", "You are helpful."), ("user", "echo: the full completion text")],
            provider.chat_calls[0]["params"],
        )
        assert streamed == expected == "the full completion text"

        for memory_k in (0, 1, 2, 5):
            provider = MockProvider(seed=1)
            gateway = ChatGateway(provider)
            client = TestClient(create_app(gateway))
            conversation_id = None
            for turn in range(4):
                body = dict(six_field_body, prompt=f"echo: turn {turn}",
                            memory_k=memory_k)
                if conversation_id:
                    body["conversation_id"] = conversation_id
                expected_window = (
                    [(m.role, m.content)
                     for m in gateway.memory.window(conversation_id, memory_k)]
                    if conversation_id else []
                )
                reply = client.post("/api/generate", json=dict(body, stream=False))
                assert reply.status_code == 200
                conversation_id = reply.json()["conversation_id"]
                seen = provider.chat_calls[-1]["messages"]
                assert seen[0] == ("system", "You are helpful.")
                assert seen[1:-1] == expected_window, (memory_k, turn)
                assert seen[-1] == ("user", f"echo: turn {turn}")


# --- 2. flat-index exactness -----------------------------------------------------------


def brute_force_top_k(entries, query, k):
    scored = []
    for doc_id, vector in entries:
        dot = 0.0
        for a, b in zip(vector, query):
            dot += float(a) * float(b)
        scored.append((doc_id, dot))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


def test_criterion_02_flat_index_exactness():
    with budget("2 flat-index exactness (200 instances)", 30):
        rng = np.random.default_rng(20240)
        for instance in range(200):
            n = int(rng.integers(20, 501))
            dim = int(rng.integers(4, 65))
            k = int(rng.integers(1, 21))
            data = rng.standard_normal((n, dim))
            index = FlatIndex(dim=dim)
            entries = []
            for i in range(n):
                index.add_item(i, f"doc {i}", data[i])
                stored = (data[i] / np.linalg.norm(data[i])).astype(np.float32)
                entries.append((i, stored))
            query = rng.standard_normal(dim)
            query = query / np.linalg.norm(query)
            hits = index.search(query, k=k)
            expected = brute_force_top_k(entries, query, k)
            assert [h.doc_id for h in hits] == [d for d, _ in expected], instance
            for hit, (_, score) in zip(hits, expected):
                assert abs(hit.score - score) < 1e-6, instance


# --- 3. HNSW recall ---------------------------------------------------------------------


def test_criterion_03_hnsw_recall():
    with budget("3 HNSW recall@10 >= 0.95 (5000 vectors)", 60):
        rng = np.random.default_rng(123)
        n, dim = 5000, 32
        data = rng.standard_normal((n, dim))
        data /= np.linalg.norm(data, axis=1, keepdims=True)
        flat = FlatIndex(dim=dim)
        hnsw = HnswIndex(dim=dim, params=HnswParams(
            M=16, ef_construction=200, ef_search=100, rng_seed=1))
        for i in range(n):
            flat.add_item(i, f"doc {i}", data[i])
            hnsw.add_item(i, f"doc {i}", data[i])
        queries = rng.standard_normal((100, dim))
        recall = 0.0
        for query in queries:
            exact = {h.doc_id for h in flat.search(query, k=10)}
            approx = {h.doc_id for h in hnsw.search(query, k=10)}
            recall += len(exact & approx) / 10
        recall /= 100
        print(f"  mean recall@10 = {recall:.4f}")
        assert recall >= 0.95


# --- 4. index persistence ---------------------------------------------------------------


def test_criterion_04_index_persistence(tmp_path):
    with budget("4 index persistence", 30):
        rng = np.random.default_rng(7)
        for backend in ("flat", "hnsw"):
            if backend == "flat":
                index = FlatIndex(dim=16)
            else:
                index = HnswIndex(dim=16, params=HnswParams(
                    M=8, ef_construction=64, ef_search=48, rng_seed=3))
            for i in range(100):
                index.add_item(i, f"doc {i}", rng.standard_normal(16),
                               {"bucket": i % 3})
            path = tmp_path / f"{backend}.bin"
            index.save(path)
            loaded = load_index(path)
            for _ in range(20):
                query = rng.standard_normal(16)
                original = [(h.doc_id, h.score) for h in index.search(query, k=10)]
                reloaded = [(h.doc_id, h.score) for h in loaded.search(query, k=10)]
                assert original == reloaded  # bit-identical scores and order

            raw = path.read_bytes()
            truncated = tmp_path / f"{backend}-trunc.bin"
            truncated.write_bytes(raw[:len(raw) - 9])
            with pytest.raises(CorruptIndexError):
                load_index(truncated)
            magic = tmp_path / f"{backend}-magic.bin"
            magic.write_bytes(b"BADMAGIC" + raw[8:])
            with pytest.raises(VersionMismatchError):
                load_index(magic)


# --- 5. BPE oracle equivalence -----------------------------------------------------------


def bpe_oracle_merges(corpus_lines, budget_merges, min_frequency):
    words = Counter()
    for line in corpus_lines:
        for word in line.split():
            words[tuple(chr(b) for b in word.encode("utf-8")) + (WORD_END,)] += 1
    merges = []
    while len(merges) < budget_merges:
        pairs = Counter()
        for symbols, count in words.items():
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] += count
        if not pairs:
            break
        (left, right), frequency = sorted(
            pairs.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))[0]
        if frequency < min_frequency:
            break
        merged = left + right
        merges.append((left, right))
        rebuilt = Counter()
        for symbols, count in words.items():
            out, i = [], 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
                    out.append(merged)
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            rebuilt[tuple(out)] += count
        words = rebuilt
    return merges


def test_criterion_05_bpe_oracle_equivalence():
    with budget("5 BPE merge oracle + round trips", 10):
        base = 5 + 256 + 1
        corpora = [
            ["low low low lower lowest"],
            ["hug hug hugs hugging pug pugs pug"],
            ["ab ab abc abcd ab abc", "xyz xyz xy"],
        ]
        for corpus in corpora:
            config = TokenizerConfig(max_length=64, vocab_size=base + 8, min_frequency=2)
            model = train_bpe(corpus, config)
            assert model.merges == bpe_oracle_merges(corpus, 8, 2), corpus

        corpus = [
            "the quick brown fox jumps over the lazy dog",
            "the quick onyx goblin jumps over the lazy dwarf",
        ]
        model = train_bpe(corpus, TokenizerConfig(max_length=64, vocab_size=base + 40,
                                                  min_frequency=2))
        rng = random.Random(2024)
        for _ in range(1000):
            text = "".join(rng.choice(string.printable)
                           for _ in range(rng.randint(0, 50)))
            ids = encode(model, text, max_length=8192)
            assert decode(model, ids) == " ".join(text.split())


# --- 6. masking statistics ------------------------------------------------------------------


def test_criterion_06_masking_statistics():
    with budget("6 masking statistics (100k positions)", 5):
        n = 100_000
        rng = np.random.default_rng(123)
        ids = rng.integers(5, 1000, size=n).tolist()
        config = MaskingConfig(mlm_probability=0.15, vocab_size=1000, rng_seed=7)
        input_ids, labels = mask_tokens(ids, config)
        original = np.asarray(ids)

        selected = labels != -100
        assert abs(selected.mean() - 0.15) <= 0.005
        masked = selected & (input_ids == config.mask_token_id)
        kept = selected & (input_ids == original) & ~masked
        randomized = selected & ~masked & ~kept
        total = selected.sum()
        assert abs(masked.sum() / total - 0.8) <= 0.01
        assert abs(randomized.sum() / total - 0.1) <= 0.01
        assert abs(kept.sum() / total - 0.1) <= 0.01

        special_ids = list(range(5)) * 1000
        special_inputs, special_labels = mask_tokens(
            special_ids, MaskingConfig(mlm_probability=1.0, vocab_size=1000, rng_seed=1))
        assert special_inputs.tolist() == special_ids
        assert (special_labels == -100).all()

        identity_inputs, identity_labels = mask_tokens(
            ids, MaskingConfig(mlm_probability=0.0, vocab_size=1000, rng_seed=9))
        assert identity_inputs.tolist() == ids
        assert (identity_labels == -100).all()


# --- 7. gradient checks ------------------------------------------------------------------------


def test_criterion_07_gradient_checks():
    with budget("7 gradient checks (head + both students)", 5):
        eps = 1e-5

        def max_rel_error(analytic, numeric):
            denom = np.maximum.reduce([np.abs(analytic), np.abs(numeric),
                                       np.full_like(analytic, 1e-6)])
            return float((np.abs(analytic - numeric) / denom).max())

        rng = np.random.default_rng(0)
        W = rng.standard_normal((3, 4))
        b = rng.standard_normal(3)
        X = rng.standard_normal((8, 4))
        y = rng.integers(0, 3, size=8)
        _, dW, db = cross_entropy_loss_and_grads(W, b, X, y)
        numeric_W = np.zeros_like(W)
        for index in np.ndindex(*W.shape):
            plus, minus = W.copy(), W.copy()
            plus[index] += eps
            minus[index] -= eps
            numeric_W[index] = (cross_entropy_loss_and_grads(plus, b, X, y)[0]
                                - cross_entropy_loss_and_grads(minus, b, X, y)[0]) / (2 * eps)
        assert max_rel_error(dW, numeric_W) < 1e-4
        numeric_b = np.zeros_like(b)
        for i in range(3):
            plus, minus = b.copy(), b.copy()
            plus[i] += eps
            minus[i] -= eps
            numeric_b[i] = (cross_entropy_loss_and_grads(W, plus, X, y)[0]
                            - cross_entropy_loss_and_grads(W, minus, X, y)[0]) / (2 * eps)
        assert max_rel_error(db, numeric_b) < 1e-4

        student_shapes = {
            "linear": {"W": (5, 3), "b": (5,)},
            "mlp1": {"W1": (6, 3), "b1": (6,), "W2": (5, 6), "b2": (5,)},
        }
        for kind, shapes in student_shapes.items():
            params = {name: rng.standard_normal(shape) for name, shape in shapes.items()}
            Xs = rng.standard_normal((7, 3))
            Ts = rng.standard_normal((7, 5))
            _, grads = mimic_loss_and_grads(kind, params, Xs, Ts, 0.5, 0.5)
            for name, param in params.items():
                numeric = np.zeros_like(param)
                for index in np.ndindex(*param.shape):
                    plus = {k: v.copy() for k, v in params.items()}
                    minus = {k: v.copy() for k, v in params.items()}
                    plus[name][index] += eps
                    minus[name][index] -= eps
                    numeric[index] = (
                        mimic_loss_and_grads(kind, plus, Xs, Ts, 0.5, 0.5)[0]
                        - mimic_loss_and_grads(kind, minus, Xs, Ts, 0.5, 0.5)[0]
                    ) / (2 * eps)
                assert max_rel_error(grads[name], numeric) < 1e-4, (kind, name)


# --- 8. classifier pipeline ------------------------------------------------------------------


def test_criterion_08_classifier_pipeline(tmp_path):
    with budget("8 classifier pipeline", 10):
        texts = [f"good item {i}" for i in range(20)] + [f"bad item {i}" for i in range(20)]
        labels = ["pos"] * 20 + ["neg"] * 20
        provider = MockProvider(seed=7, dim=32)
        config = split_training_config({
            "learning_rate": 0.1, "num_train_epochs": 50, "seed": 1,
            "eval_fraction": 0.25,
        })
        head, report = train_classifier(texts, labels, provider, config)
        assert report.eval_accuracy == 1.0
        assert report.eval_macro_f1 == 1.0
        assert report.final_loss < report.initial_loss

        path = tmp_path / "clf.bin"
        save_model(head, path)
        loaded = load_model(path)
        rng = np.random.default_rng(0)
        probe = rng.standard_normal((100, 32))
        assert np.array_equal(head.predict_probs(probe), loaded.predict_probs(probe))
        fresh = MockProvider(seed=7, dim=32)
        before = [p.label for p in classify(head, texts, fresh)]
        after = [p.label for p in classify(loaded, texts, fresh)]
        assert before == after == labels


# --- 9. distillation convergence ----------------------------------------------------------------


def test_criterion_09_distillation_convergence():
    with budget("9 distillation convergence", 30):
        n, in_dim, out_dim = 500, 8, 16
        rng = np.random.default_rng(99)
        texts = [f"sample-{i} item" for i in range(n)]
        featurize = hash_featurizer(in_dim, seed=5)
        X = featurize(texts)
        teacher_map = rng.standard_normal((out_dim, in_dim))
        # seeded noise keeps the least-squares optimum nonzero, so the
        # 1.05x optimality-gap bound is a real statement
        targets = X @ teacher_map.T + 0.02 * rng.standard_normal((n, out_dim))
        lookup = {text: targets[i] for i, text in enumerate(texts)}

        def teacher(batch):
            return np.asarray([lookup[t] for t in batch])

        config = split_training_config({
            "learning_rate": 1e-2, "num_train_epochs": 300, "batch_size": 32,
            "seed": 3, "eval_fraction": 0.25, "loss_weights": [1.0, 0.0],
        })
        student, report = train_mimicker({"kind": "linear", "in_dim": in_dim},
                                         teacher, texts, featurizer=featurize,
                                         config=config)
        assert report.eval_mean_cosine >= 0.999

        split_rng = np.random.default_rng(3)
        _ = split_rng.standard_normal((out_dim, in_dim))  # trainer's init draw
        order = split_rng.permutation(n)
        train_idx = order[min(int(round(0.25 * n)), n - 1):]
        design = np.hstack([X[train_idx], np.ones((len(train_idx), 1))])
        solution, *_ = np.linalg.lstsq(design, targets[train_idx], rcond=None)
        lstsq_mse = float(((design @ solution - targets[train_idx]) ** 2).mean())
        print(f"  train MSE {report.train_mse:.6f} vs least-squares {lstsq_mse:.6f}")
        assert report.train_mse <= 1.05 * lstsq_mse


# --- 10. reranker contract ------------------------------------------------------------------------


def test_criterion_10_reranker_contract(http_fixture):
    with budget("10 reranker contract", 5):
        rng = np.random.default_rng(11)
        for _ in range(500):
            n = int(rng.integers(1, 25))
            scores = rng.standard_normal(n).tolist()
            ranking = order_by_scores([f"d{i}" for i in range(n)], scores)
            oracle = [i for i, _ in sorted(enumerate(scores), key=lambda t: (-t[1], t[0]))]
            assert [r.original_index for r in ranking] == oracle
            assert sorted(r.original_index for r in ranking) == list(range(n))

        def score(body):
            values = [0.3 if doc == body["query"] else 0.9 for doc in body["documents"]]
            return 200, "application/json", json.dumps({"scores": values}).encode()

        http_fixture.routes["/score"] = score
        reranker = Reranker(backend="http-scorer", scorer_url=http_fixture.url)
        result = reranker.rerank(RerankRequest.make(
            "Where is Mount Everest?",
            ["Where is Mount Everest?", "Mount Everest is in Nepal."],
        ))
        assert result.ranking[0].text == "Mount Everest is in Nepal."
        assert [r.original_index for r in result.ranking] == [1, 0]


# --- 11. labeller contract ------------------------------------------------------------------------


def test_criterion_11_labeller_contract():
    with budget("11 labeller contract", 5):
        schema = LabelSchema(labels={"positive": "expresses satisfaction",
                                     "negative": "expresses dissatisfaction"})
        provider = MockProvider(seed=0)
        provider.add_reply_rule("I love this product", '["positive"]')
        result = label_text(schema, "I love this product", provider)
        assert result.labels == {"positive"}

        multi_schema = LabelSchema(labels={"urgent": "needs action",
                                           "billing": "about invoices"},
                                   multi_label=True)
        provider.add_reply_rule("invoice overdue", '["urgent","billing"]')
        multi = label_text(multi_schema, "invoice overdue now", provider)
        assert multi.labels == {"urgent", "billing"}

        provider.add_reply_rule("unclear remark", "maybe positive?", '["positive"]')
        retried = label_text(schema, "an unclear remark", provider)
        assert retried.labels == {"positive"}

        provider.add_reply_rule("invent a label", '["sarcastic"]')
        with pytest.raises(UnknownLabelError):
            label_text(schema, "please invent a label", provider)

        provider.add_reply_rule("always broken", "not json ever")
        with pytest.raises(UnparsableResponseError):
            label_text(schema, "this is always broken", provider)

        batch_provider = MockProvider(seed=0)
        batch_provider.add_reply_rule("POISON", "never json")
        batch_provider.add_reply_rule("doc", '["negative"]')
        texts = [f"doc {i}" for i in range(9)] + ["POISON pill"]
        results = label_batch(schema, texts, batch_provider, concurrency=4)
        assert [r.text for r in results] == texts
        assert sum(isinstance(r, LabelResult) for r in results) == 9
        assert sum(isinstance(r, LabelFailure) for r in results) == 1


# --- 12. config splitter ------------------------------------------------------------------------


def test_criterion_12_config_splitter():
    with budget("12 config splitter", 1):
        config = split_training_config({
            "learning_rate": 1e-4, "num_train_epochs": 3, "mlm_probability": 0.15,
        })
        assert config.task_specific == {"mlm_probability": 0.15}
        assert config.general == {"learning_rate": 1e-4, "num_train_epochs": 3}

        with pytest.raises(UnknownKeyError) as unknown:
            split_training_config({"mlm_probabilty": 0.15})  # typo'd key
        assert unknown.value.field == "mlm_probabilty"
        with pytest.raises(InvalidValueError):
            split_training_config({"mlm_probability": 1.5})
