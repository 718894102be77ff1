"""Single lmforge entry point: one subcommand per task.

Precedence for every option: explicit flag > --config file key > default.
Exit codes: 0 success, 1 domain/data errors, 2 usage errors. Every
subcommand supports --json for machine-readable output.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import LmforgeError

logger = logging.getLogger(__name__)

PROVIDER_ENV_URL = "LMFORGE_PROVIDER_URL"
PROVIDER_ENV_MODEL = "LMFORGE_MODEL"


def _add_provider_flags(parser: argparse.ArgumentParser, include_model: bool = True) -> None:
    group = parser.add_argument_group("provider")
    group.add_argument("--provider", help=f"endpoint base URL (or ${PROVIDER_ENV_URL})")
    group.add_argument("--provider-kind",
                       choices=["openai-compatible", "ollama-compatible", "mock"])
    if include_model:
        group.add_argument("--model", dest="provider_model",
                           help=f"model identifier (or ${PROVIDER_ENV_MODEL})")
    else:
        group.add_argument("--provider-model", dest="provider_model",
                           help=f"model identifier (or ${PROVIDER_ENV_MODEL})")
    group.add_argument("--timeout", type=float)
    group.add_argument("--max-retries", type=int)
    group.add_argument("--seed", type=int, help="mock provider seed")
    group.add_argument("--dim", type=int, help="mock provider embedding dim")


def _provider_config(args, config: dict) -> dict:
    def pick(flag, key, env=None, default=None):
        value = getattr(args, flag, None)
        if value is None:
            value = config.get(key)
        if value is None and env:
            value = os.environ.get(env)
        return default if value is None else value

    cfg = {
        "provider_url": pick("provider", "provider_url", env=PROVIDER_ENV_URL, default=""),
        "provider_kind": pick("provider_kind", "provider_kind"),
        "model": pick("provider_model", "model", env=PROVIDER_ENV_MODEL, default=""),
        "timeout": pick("timeout", "timeout", default=30.0),
        "max_retries": pick("max_retries", "max_retries", default=2),
        "seed": pick("seed", "seed", default=0),
        "dim": pick("dim", "dim", default=32),
    }
    if cfg["provider_kind"] is None and not cfg["provider_url"]:
        cfg["provider_kind"] = "mock"
    return cfg


def _make_provider(args, config: dict):
    from .providers import make_provider

    return make_provider(_provider_config(args, config))


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _read_text_column(path: str, column: str) -> tuple[list[str], list[dict]]:
    """Read one CSV column as texts; remaining columns become metadata."""
    if path.endswith(".txt"):
        lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
        return lines, [{} for _ in lines]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            from .errors import MissingColumnError

            raise MissingColumnError(column)
        texts, metas = [], []
        for row in reader:
            text = (row.get(column) or "").strip()
            if not text:
                continue
            texts.append(text)
            metas.append({k: v for k, v in row.items() if k != column and v not in (None, "")})
        return texts, metas


def _training_config(args, config: dict):
    from .core import split_training_config

    raw = {}
    mapping = {
        "learning_rate": "learning_rate",
        "epochs": "num_train_epochs",
        "batch_size": "batch_size",
        "train_seed": "seed",
        "eval_fraction": "eval_fraction",
    }
    for flag, key in mapping.items():
        value = getattr(args, flag, None)
        if value is None:
            value = config.get(key)
        if value is not None:
            raw[key] = value
    if getattr(args, "loss_weights", None):
        raw["loss_weights"] = [float(x) for x in args.loss_weights.split(",")]
    elif config.get("loss_weights") is not None:
        raw["loss_weights"] = config["loss_weights"]
    return split_training_config(raw)


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--learning-rate", dest="learning_rate", type=float)
    group.add_argument("--epochs", dest="epochs", type=int)
    group.add_argument("--batch-size", dest="batch_size", type=int)
    group.add_argument("--train-seed", dest="train_seed", type=int)
    group.add_argument("--eval-fraction", dest="eval_fraction", type=float)


def _emit(args, payload, human: str | None = None) -> None:
    if args.json:
        print(json.dumps(payload, ensure_ascii=False))
    elif human is not None:
        print(human)
    else:
        print(json.dumps(payload, ensure_ascii=False, indent=2))


# --- subcommand handlers ---------------------------------------------------------


def _cmd_serve(args, config) -> int:
    from .chat_service import AuthPolicy, ChatGateway, serve
    from .memory import MemoryStore

    provider = _make_provider(args, config)
    memory = MemoryStore(journal_path=args.journal or config.get("journal"))
    gateway = ChatGateway(provider, memory=memory)
    auth = AuthPolicy(token_env=args.auth_token_env or config.get("auth_token_env")
                      or "LMFORGE_API_TOKEN")
    static_dir = args.static_dir or config.get("static_dir")
    host = args.host or config.get("host", "127.0.0.1")
    port = args.port if args.port is not None else int(config.get("port", 8000))
    serve(host, port, gateway, auth=auth, static_dir=static_dir)
    return 0


def _cmd_label(args, config) -> int:
    from .labeller import LabelFailure, LabelSchema, label_batch, write_labels_csv

    schema = LabelSchema.from_file(args.schema)
    if args.multi_label:
        schema = LabelSchema(labels=schema.labels, multi_label=True)
    provider = _make_provider(args, config)
    texts, _ = _read_text_column(args.infile, args.text_col)
    results = label_batch(schema, texts, provider, concurrency=args.concurrency)
    if args.out:
        write_labels_csv(args.out, results)
    failures = sum(isinstance(r, LabelFailure) for r in results)
    payload = [
        {"text": r.text, "labels": sorted(r.labels), "raw_response": r.raw_response}
        if not isinstance(r, LabelFailure) else {"text": r.text, "error": r.error}
        for r in results
    ]
    _emit(args, payload, f"labelled {len(results) - failures}/{len(results)} texts"
          + (f" -> {args.out}" if args.out else ""))
    return 0


def _cmd_embed(args, config) -> int:
    import struct

    from .embeddings import embed_batch

    provider = _make_provider(args, config)
    texts, _ = _read_text_column(args.infile, args.text_col)
    vectors = embed_batch(provider, texts, batch_size=args.batch_size)
    dim = vectors[0].shape[0]
    with open(args.out, "wb") as fh:
        fh.write(struct.pack("<IQ", dim, len(vectors)))
        fh.write(np.asarray(vectors, dtype="<f4").tobytes())
    _emit(args, {"count": len(vectors), "dim": dim, "out": args.out},
          f"embedded {len(vectors)} texts (dim {dim}) -> {args.out}")
    return 0


def _cmd_index(args, config) -> int:
    from .core import create_task
    from .embeddings import embed_batch
    from .vector_search import IndexedDocument

    provider = _make_provider(args, config)
    texts, metas = _read_text_column(args.infile, args.text_col)
    vectors = embed_batch(provider, texts, batch_size=args.batch_size)
    searcher_cfg = {"index_type": args.backend, "dim": int(vectors[0].shape[0])}
    for key in ("M", "ef_construction", "ef_search", "rng_seed"):
        if config.get(key) is not None:
            searcher_cfg[key] = config[key]
    if args.m is not None:
        searcher_cfg["M"] = args.m
    if args.ef_construction is not None:
        searcher_cfg["ef_construction"] = args.ef_construction
    if args.rng_seed is not None:
        searcher_cfg["rng_seed"] = args.rng_seed
    index = create_task("searcher", searcher_cfg)
    for i, (text, meta, vector) in enumerate(zip(texts, metas, vectors)):
        index.add(IndexedDocument(doc_id=i, text=text, vector=vector, metadata=meta))
    index.save(args.out)
    _emit(args, {"count": len(texts), "backend": args.backend, "out": args.out},
          f"indexed {len(texts)} docs ({args.backend}) -> {args.out}")
    return 0


def _cmd_search(args, config) -> int:
    from .vector_search import load_index

    index = load_index(args.index)
    provider = _make_provider(args, config)
    query_vec = provider.embed([args.query])[0]
    filter_spec = None
    if args.filter:
        filter_spec = {}
        for item in args.filter:
            key, _, value = item.partition("=")
            filter_spec[key] = value
    hits = index.search(query_vec, k=args.k, filter=filter_spec)
    payload = [
        {"doc_id": h.doc_id, "score": h.score, "text": h.text, "metadata": h.metadata}
        for h in hits
    ]
    _emit(args, payload,
          "\n".join(f"{h.doc_id}\t{h.score:.4f}\t{h.text}" for h in hits) or "(no hits)")
    return 0


def _cmd_rerank(args, config) -> int:
    from .reranker import Reranker, RerankRequest

    documents = [l for l in Path(args.docs).read_text(encoding="utf-8").splitlines()
                 if l.strip()]
    backend = args.backend or config.get("backend", "embedding-fallback")
    if backend == "embedding":
        backend = "embedding-fallback"
    reranker_cfg = dict(_provider_config(args, config))
    reranker_cfg["backend"] = backend
    if args.scorer_url or config.get("scorer_url"):
        reranker_cfg["scorer_url"] = args.scorer_url or config.get("scorer_url")
    reranker = Reranker.from_config(reranker_cfg)
    result = reranker.rerank(RerankRequest.make(args.query, documents, top_n=args.top_n))
    payload = [
        {"original_index": r.original_index, "score": r.score, "text": r.text}
        for r in result.ranking
    ]
    _emit(args, payload,
          "\n".join(f"{r.original_index}\t{r.score:.4f}\t{r.text}" for r in result.ranking))
    return 0


def _cmd_train_tokenizer(args, config) -> int:
    from .core import TokenizerConfig
    from .tokenizer import save_tokenizer, train_bpe

    tok_config = TokenizerConfig(
        max_length=args.max_length or int(config.get("max_length", 512)),
        vocab_size=args.vocab_size or int(config.get("vocab_size", 1024)),
        min_frequency=args.min_frequency or int(config.get("min_frequency", 2)),
    )
    with open(args.corpus, encoding="utf-8") as fh:
        model = train_bpe(fh, tok_config)
    save_tokenizer(model, args.out)
    _emit(args, {"vocab_size": model.vocab_size, "merges": len(model.merges), "out": args.out},
          f"trained tokenizer: {model.vocab_size} tokens, {len(model.merges)} merges -> {args.out}")
    return 0


def _cmd_mask(args, config) -> int:
    from .tokenizer import MaskingConfig, mask_tokens

    cfg = MaskingConfig(
        mlm_probability=args.mlm_probability,
        vocab_size=args.vocab_size,
        rng_seed=args.seed if args.seed is not None else int(config.get("seed", 0)),
    )
    lines_out = []
    for line in Path(args.infile).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        ids = [int(x) for x in line.split()]
        input_ids, labels = mask_tokens(ids, cfg)
        lines_out.append(json.dumps(
            {"input_ids": input_ids.tolist(), "labels": labels.tolist()}
        ))
    output = "\n".join(lines_out) + "\n"
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
        _emit(args, {"sequences": len(lines_out), "out": args.out},
              f"masked {len(lines_out)} sequences -> {args.out}")
    else:
        sys.stdout.write(output)
    return 0


def _cmd_train_classifier(args, config) -> int:
    from .trainers import load_dataset, save_model, train_classifier

    loaded = load_dataset(args.csv, args.text_col, args.label_col)
    provider = _make_provider(args, config)
    head, report = train_classifier(
        loaded.texts, loaded.label_names, provider, _training_config(args, config)
    )
    if args.out:
        save_model(head, args.out)
    payload = {
        "classes": list(head.encoder.classes),
        "n_train": report.n_train,
        "n_eval": report.n_eval,
        "dropped_rows": loaded.dropped_rows,
        "initial_loss": report.initial_loss,
        "final_loss": report.final_loss,
        "eval_accuracy": report.eval_accuracy,
        "eval_macro_f1": report.eval_macro_f1,
        "out": args.out,
    }
    _emit(args, payload,
          f"trained on {report.n_train} rows: eval acc {report.eval_accuracy:.3f}, "
          f"macro-F1 {report.eval_macro_f1:.3f}" + (f" -> {args.out}" if args.out else ""))
    return 0


def _cmd_classify(args, config) -> int:
    from .trainers import classify, load_model

    head = load_model(args.model)
    provider = _make_provider(args, config)
    texts, _ = _read_text_column(args.infile, args.text_col)
    predictions = classify(head, texts, provider)
    payload = [
        {"text": t, "label": p.label, "probs": p.probs,
         **({"warning": p.warning} if p.warning else {})}
        for t, p in zip(texts, predictions)
    ]
    _emit(args, payload,
          "\n".join(f"{p.label}\t{t}" for t, p in zip(texts, predictions)))
    return 0


def _cmd_distill(args, config) -> int:
    from .trainers import hash_featurizer, save_model, train_mimicker

    if args.teacher:
        args.provider = args.teacher
    teacher = _make_provider(args, config)
    texts, _ = _read_text_column(args.corpus, args.text_col)
    spec = {"kind": args.student, "in_dim": args.in_dim,
            "hidden_dim": args.hidden_dim or 0}
    featurizer = hash_featurizer(args.in_dim, seed=args.featurizer_seed)
    student, report = train_mimicker(
        spec, teacher, texts, featurizer=featurizer,
        config=_training_config(args, config),
    )
    if args.out:
        save_model(student, args.out)
    payload = {
        "kind": student.kind,
        "in_dim": student.in_dim,
        "out_dim": student.out_dim,
        "initial_loss": report.initial_loss,
        "final_loss": report.final_loss,
        "train_mse": report.train_mse,
        "eval_mse": report.eval_mse,
        "eval_mean_cosine": report.eval_mean_cosine,
        "out": args.out,
    }
    _emit(args, payload,
          f"distilled {student.kind} student: eval cosine {report.eval_mean_cosine:.5f}"
          + (f" -> {args.out}" if args.out else ""))
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmforge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lmforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file merged beneath flags")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("serve", help="run the chat inference service")
    common(p)
    _add_provider_flags(p)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--auth-token-env", dest="auth_token_env")
    p.add_argument("--static-dir", dest="static_dir")
    p.add_argument("--journal", help="memory journal file (JSONL)")
    p.set_defaults(handler=_cmd_serve)

    p = sub.add_parser("label", help="LLM-label a batch of texts")
    common(p)
    _add_provider_flags(p)
    p.add_argument("--schema", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out")
    p.add_argument("--text-col", dest="text_col", default="text")
    p.add_argument("--multi-label", dest="multi_label", action="store_true")
    p.add_argument("--concurrency", type=int, default=4)
    p.set_defaults(handler=_cmd_label)

    p = sub.add_parser("embed", help="embed texts to a binary vector file")
    common(p)
    _add_provider_flags(p)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--text-col", dest="text_col", default="text")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.set_defaults(handler=_cmd_embed)

    p = sub.add_parser("index", help="build a vector index from texts")
    common(p)
    _add_provider_flags(p)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=["flat", "hnsw"], default="flat")
    p.add_argument("--text-col", dest="text_col", default="text")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--m", type=int, help="HNSW M")
    p.add_argument("--ef-construction", dest="ef_construction", type=int)
    p.add_argument("--rng-seed", dest="rng_seed", type=int)
    p.set_defaults(handler=_cmd_index)

    p = sub.add_parser("search", help="query a saved index")
    common(p)
    _add_provider_flags(p)
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--filter", action="append", metavar="KEY=VALUE")
    p.set_defaults(handler=_cmd_search)

    p = sub.add_parser("rerank", help="rerank documents against a query")
    common(p)
    _add_provider_flags(p)
    p.add_argument("--query", required=True)
    p.add_argument("--docs", required=True, help="file with one document per line")
    p.add_argument("--backend",
                   choices=["embedding", "embedding-fallback", "http-scorer", "llm-judge"])
    p.add_argument("--scorer-url", dest="scorer_url")
    p.add_argument("--top-n", dest="top_n", type=int)
    p.set_defaults(handler=_cmd_rerank)

    p = sub.add_parser("train-tokenizer", help="train a BPE tokenizer on a corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", dest="vocab_size", type=int)
    p.add_argument("--min-frequency", dest="min_frequency", type=int)
    p.add_argument("--max-length", dest="max_length", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_train_tokenizer)

    p = sub.add_parser("mask", help="apply the masking collator to token id sequences")
    common(p)
    p.add_argument("--in", dest="infile", required=True,
                   help="file with one space-separated id sequence per line")
    p.add_argument("--mlm-probability", dest="mlm_probability", type=float, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=1024)
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_mask)

    p = sub.add_parser("train-classifier", help="train a softmax head over embeddings")
    common(p)
    _add_provider_flags(p)
    _add_training_flags(p)
    p.add_argument("--csv", required=True)
    p.add_argument("--text-col", dest="text_col", default="text")
    p.add_argument("--label-col", dest="label_col", default="label")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_train_classifier)

    p = sub.add_parser("classify", help="classify texts with a saved head")
    common(p)
    _add_provider_flags(p, include_model=False)
    p.add_argument("--model", required=True, help="saved classifier file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--text-col", dest="text_col", default="text")
    p.set_defaults(handler=_cmd_classify)

    p = sub.add_parser("distill", help="train a student to mimic teacher embeddings")
    common(p)
    _add_provider_flags(p)
    _add_training_flags(p)
    p.add_argument("--teacher", help="teacher endpoint base URL (alias for --provider)")
    p.add_argument("--student", choices=["linear", "mlp1"], default="linear")
    p.add_argument("--in-dim", dest="in_dim", type=int, required=True)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--featurizer-seed", dest="featurizer_seed", type=int, default=0)
    p.add_argument("--loss-weights", dest="loss_weights",
                   help="comma pair, e.g. 0.5,0.5")
    p.add_argument("--corpus", required=True)
    p.add_argument("--text-col", dest="text_col", default="text")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_distill)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config(args.config)
        return args.handler(args, config)
    except LmforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
