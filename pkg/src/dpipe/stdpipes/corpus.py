"""Synthetic multilingual corpus generation with known language labels.

Documents mix stopwords sampled from one bundled profile with gibberish
filler tokens (which hit no profile), so the true language is recoverable by
the detector and recorded in the ``true_lang`` column for checking. A seed
makes the output byte-reproducible; a duplicate rate injects exact text
copies under fresh doc ids for the dedup stage to find.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from ..spec_model import Schema
from .profiles import load_profiles

CORPUS_SCHEMA: Schema = (
    ("doc_id", "string"),
    ("text", "string"),
    ("true_lang", "string"),
)

_FILLER_ALPHABET = "bcdfghjklmnpqrstvwxz"


def _gibberish_token(rng: random.Random) -> str:
    # The trailing digit keeps filler tokens out of every stopword set.
    length = rng.randint(3, 8)
    return "".join(rng.choice(_FILLER_ALPHABET) for _ in range(length)) + str(rng.randint(0, 9))


def generate_corpus(
    doc_count: int,
    langs: list[str] | None = None,
    seed: int = 0,
    dup_rate: float = 0.05,
) -> list[tuple[str, str, str]]:
    """Build ``doc_count`` labeled documents as (doc_id, text, true_lang) rows."""
    profiles = {p.language_code: sorted(p.stopwords) for p in load_profiles()}
    if langs is None:
        langs = ["en", "de", "fr"]
    unknown = [code for code in langs if code not in profiles]
    if unknown:
        raise ValueError(f"no bundled profile for language(s): {unknown}")
    if doc_count < 0:
        raise ValueError("doc count must be >= 0")

    rng = random.Random(seed)
    docs: list[tuple[str, str, str]] = []
    unique_count = doc_count - int(doc_count * dup_rate) if doc_count else 0
    unique_count = max(min(unique_count, doc_count), min(1, doc_count))

    for i in range(unique_count):
        lang = langs[i % len(langs)]
        words = profiles[lang]
        n_tokens = rng.randint(8, 24)
        tokens = []
        for _ in range(n_tokens):
            if rng.random() < 0.65:
                token = rng.choice(words)
            else:
                token = _gibberish_token(rng)
            if rng.random() < 0.1:
                token = token.capitalize()
            if rng.random() < 0.08:
                token += rng.choice([",", ".", "!", "?"])
            tokens.append(token)
        docs.append((f"doc{i:06d}", " ".join(tokens), lang))

    for i in range(unique_count, doc_count):
        _, text, lang = docs[rng.randrange(unique_count)]
        docs.append((f"doc{i:06d}", text, lang))
    return docs


def write_corpus_ndjson(path: str | Path, docs: list[tuple[str, str, str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, text, true_lang in docs:
            fh.write(
                json.dumps(
                    {"doc_id": doc_id, "text": text, "true_lang": true_lang},
                    separators=(",", ":"),
                )
                + "\n"
            )


def make_langdetect_spec(
    input_path: str,
    output_dir: str,
    compute_delay_ms: int = 0,
    network_delay_ms: int = 0,
    integration: str = "embedded",
    parallelism: int | None = None,
) -> dict:
    """The five-pipe language-detection pipeline as a spec document.

    Stages: preprocess -> dedup (on text) -> language detect -> partition by
    language -> model scoring; the final anchor is a table directory, so the
    scored per-language partitions land on disk as part files.
    """

    def columns(*cols: tuple[str, str]) -> list[dict]:
        return [{"name": name, "type": col_type} for name, col_type in cols]

    base = [("doc_id", "string"), ("text", "string"), ("true_lang", "string")]
    with_tokens = base + [("tokens", "string")]
    with_lang = with_tokens + [("lang", "string")]
    with_score = with_lang + [("score", "float")]

    def pipe(inputs: list[str], transformer: str, output: str, params: dict | None = None) -> dict:
        decl: dict = {
            "inputDataId": inputs,
            "transformerType": transformer,
            "outputDataId": output,
        }
        if params:
            decl["params"] = params
        if parallelism is not None:
            decl["parallelism"] = parallelism
        return decl

    return {
        "data": [
            {
                "id": "RawDocs",
                "location": {"kind": "file", "path": input_path},
                "format": "ndjson",
                "schema": columns(*base),
            },
            {"id": "Tokenized", "location": {"kind": "memory"}, "schema": columns(*with_tokens)},
            {"id": "Deduped", "location": {"kind": "memory"}, "schema": columns(*with_tokens)},
            {"id": "Labeled", "location": {"kind": "memory"}, "schema": columns(*with_lang)},
            {"id": "Grouped", "location": {"kind": "memory"}, "schema": columns(*with_lang)},
            {
                "id": "Scored",
                "location": {"kind": "table", "path": output_dir},
                "format": "ndjson",
                "schema": columns(*with_score),
            },
        ],
        "pipes": [
            pipe(["RawDocs"], "PreprocessTransformer", "Tokenized"),
            pipe(["Tokenized"], "DedupTransformer", "Deduped", {"keys": "text"}),
            pipe(["Deduped"], "LanguageDetectTransformer", "Labeled"),
            pipe(["Labeled"], "PartitionByLanguageTransformer", "Grouped"),
            pipe(
                ["Grouped"],
                "ModelPredictionTransformer",
                "Scored",
                {
                    "integration": integration,
                    "computeDelayMillis": str(compute_delay_ms),
                    "networkDelayMillis": str(network_delay_ms),
                },
            ),
        ],
        "metrics": {"cadenceMillis": 30000, "sink": "null"},
    }
