"""The standard pipe library.

Five transformers cover the language-detection pipeline and the
embedded-vs-remote model integration comparison: text preprocessing, key
deduplication, stopword language detection, partition-by-language, and a
deterministic model-stub scorer with injected compute/network delays.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping

from ..dataio import Dataset
from ..engine import PipeRunContext
from ..errors import DpipeError
from ..kernel import busy_wait_ms, score01
from ..lifecycle import LifecycleScope
from ..registry import (
    ContractViolation,
    ParamSpec,
    Pipe,
    PipeContract,
    PipeFactory,
)
from ..spec_model import Schema
from .profiles import detect_language


class UnknownKeyColumn(DpipeError):
    pass


class BadIntegrationMode(DpipeError):
    pass


def _append_column(schema: Schema, name: str, col_type: str) -> Schema:
    if any(existing == name for existing, _ in schema):
        raise ContractViolation(f"input schema already has a '{name}' column")
    return tuple(schema) + ((name, col_type),)


def _parse_bool(raw: str) -> bool:
    return raw.strip().lower() != "false"


def record_fingerprint(record: tuple) -> bytes:
    """Stable, type-tagged byte serialization of a record for stub scoring."""
    parts = []
    for value in record:
        if value is None:
            parts.append("\x00")
        elif isinstance(value, bool):
            parts.append("b:t" if value else "b:f")
        elif isinstance(value, float):
            parts.append("f:" + repr(value))
        elif isinstance(value, int):
            parts.append("i:" + str(value))
        else:
            parts.append("s:" + str(value))
    return "\x1f".join(parts).encode()


# ---------------------------------------------------------------------------
# PreprocessTransformer
# ---------------------------------------------------------------------------


def tokenize(text: str | None, lowercase: bool = True) -> str:
    """Whitespace-split, strip non-alphanumerics per token, drop empties."""
    tokens = []
    for raw in (text or "").split():
        cleaned = "".join(ch for ch in raw if ch.isalnum())
        if cleaned:
            tokens.append(cleaned.lower() if lowercase else cleaned)
    return " ".join(tokens)


class PreprocessPipe(Pipe):
    def __init__(self, params: Mapping[str, str]):
        super().__init__()
        self._lowercase = _parse_bool(params.get("lowercase", "true"))

    def transform(self, inputs: list[Dataset], ctx: PipeRunContext) -> Dataset:
        ds = inputs[0]
        text_index = ds.column_index("text")
        lowercase = self._lowercase

        def run_partition(_index: int, records: tuple) -> tuple:
            return tuple(
                record + (tokenize(record[text_index], lowercase),) for record in records
            )

        parts = ctx.map_partitions(run_partition, ds)
        return Dataset(schema=_append_column(ds.schema, "tokens", "string"), partitions=tuple(parts))


# ---------------------------------------------------------------------------
# DedupTransformer
# ---------------------------------------------------------------------------


class DedupPipe(Pipe):
    """Keeps the first record (in concatenated partition order) per key tuple.

    Nulls compare equal for key purposes. Survivor identity is independent of
    the worker count: keys are extracted partition-parallel, the survivor
    scan is a single deterministic pass.
    """

    def __init__(self, params: Mapping[str, str]):
        super().__init__()
        self._keys = [k.strip() for k in params["keys"].split(",") if k.strip()]
        if not self._keys:
            raise UnknownKeyColumn("dedup 'keys' param names no columns")

    def transform(self, inputs: list[Dataset], ctx: PipeRunContext) -> Dataset:
        ds = inputs[0]
        try:
            key_indices = [ds.column_index(name) for name in self._keys]
        except KeyError as exc:
            raise UnknownKeyColumn(f"dedup key column {exc} is not in the input schema") from exc

        def extract_keys(_index: int, records: tuple) -> list[tuple]:
            return [tuple(record[i] for i in key_indices) for record in records]

        keys_per_partition = ctx.map_partitions(extract_keys, ds)

        seen: set[tuple] = set()
        keep_masks = []
        for part_keys in keys_per_partition:
            mask = []
            for key in part_keys:
                if key in seen:
                    mask.append(False)
                else:
                    seen.add(key)
                    mask.append(True)
            keep_masks.append(mask)

        parts = tuple(
            tuple(record for record, keep in zip(partition, mask) if keep)
            for partition, mask in zip(ds.partitions, keep_masks)
        )
        total_in = ds.record_count
        total_out = sum(len(p) for p in parts)
        ctx.counter("input_records", total_in)
        ctx.counter("output_records", total_out)
        ctx.counter("duplicates_removed", total_in - total_out)
        return Dataset(schema=ds.schema, partitions=parts)


# ---------------------------------------------------------------------------
# LanguageDetectTransformer
# ---------------------------------------------------------------------------


class LanguageDetectPipe(Pipe):
    def transform(self, inputs: list[Dataset], ctx: PipeRunContext) -> Dataset:
        ds = inputs[0]
        tokens_index = ds.column_index("tokens")

        def run_partition(_index: int, records: tuple) -> tuple:
            out = []
            for record in records:
                tokens = (record[tokens_index] or "").split()
                lang = detect_language(tokens)
                ctx.counter(f"docs_{lang}", 1)
                out.append(record + (lang,))
            return tuple(out)

        parts = ctx.map_partitions(run_partition, ds)
        return Dataset(schema=_append_column(ds.schema, "lang", "string"), partitions=tuple(parts))


# ---------------------------------------------------------------------------
# PartitionByLanguageTransformer
# ---------------------------------------------------------------------------


class PartitionByLanguagePipe(Pipe):
    """Stable-sorts by language and puts partition boundaries at the changes."""

    def transform(self, inputs: list[Dataset], ctx: PipeRunContext) -> Dataset:
        ds = inputs[0]
        lang_index = ds.column_index("lang")
        records = ds.records()
        ordered = sorted(records, key=lambda r: (r[lang_index] is not None, r[lang_index] or ""))

        groups: list[tuple] = []
        current: list[tuple] = []
        current_lang: object = object()
        counts: dict[str, int] = {}
        for record in ordered:
            lang = record[lang_index]
            counts[lang or ""] = counts.get(lang or "", 0) + 1
            if lang != current_lang:
                if current:
                    groups.append(tuple(current))
                current = [record]
                current_lang = lang
            else:
                current.append(record)
        if current:
            groups.append(tuple(current))
        for lang, count in counts.items():
            ctx.gauge(f"count_{lang or 'null'}", float(count))
        if not groups:
            groups = [()]
        return Dataset(schema=ds.schema, partitions=tuple(groups))


# ---------------------------------------------------------------------------
# ModelPredictionTransformer
# ---------------------------------------------------------------------------

INTEGRATION_EMBEDDED = "embedded"
INTEGRATION_REMOTE_SIM = "remote_sim"


@dataclass(frozen=True)
class ModelStub:
    """Deterministic scorer standing in for an embedded inference model.

    Scores are a pure hash of the record; the configured busy-work simulates
    inference compute. Loading happens once per worker lane via the
    instance-level lifecycle scope.
    """

    compute_delay_ms: float

    def score(self, record: tuple) -> float:
        if self.compute_delay_ms > 0:
            busy_wait_ms(self.compute_delay_ms)
        return score01(record_fingerprint(record))


class ModelPredictionPipe(Pipe):
    def __init__(self, params: Mapping[str, str]):
        super().__init__()
        integration = params["integration"]
        if integration not in (INTEGRATION_EMBEDDED, INTEGRATION_REMOTE_SIM):
            raise BadIntegrationMode(
                f"integration must be '{INTEGRATION_EMBEDDED}' or '{INTEGRATION_REMOTE_SIM}', "
                f"got '{integration}'"
            )
        self._integration = integration
        self._network_delay_ms = float(int(params.get("networkDelayMillis", "20")))
        self._compute_delay_ms = float(int(params.get("computeDelayMillis", "5")))
        if self._network_delay_ms < 0 or self._compute_delay_ms < 0:
            raise BadIntegrationMode("delays must be >= 0 milliseconds")

    def _model_key(self, ctx: PipeRunContext) -> str:
        return f"pipe[{ctx.pipe_index}].model"

    def _load_model(self, ctx: PipeRunContext) -> ModelStub:
        return ctx.get_or_init(
            LifecycleScope.INSTANCE,
            self._model_key(ctx),
            lambda: ModelStub(compute_delay_ms=self._compute_delay_ms),
        )

    def warmup(self, ctx: PipeRunContext) -> None:
        self._load_model(ctx)

    def transform(self, inputs: list[Dataset], ctx: PipeRunContext) -> Dataset:
        ds = inputs[0]
        remote = self._integration == INTEGRATION_REMOTE_SIM
        network_s = self._network_delay_ms / 1000.0

        def run_partition(_index: int, records: tuple) -> tuple[tuple, float]:
            model = self._load_model(ctx)
            started = time.perf_counter()
            out = []
            for record in records:
                if remote:
                    time.sleep(network_s)
                out.append(record + (model.score(record),))
            return tuple(out), time.perf_counter() - started

        results = ctx.map_partitions(run_partition, ds)
        parts = tuple(part for part, _ in results)
        busy_seconds = sum(elapsed for _, elapsed in results)
        scored = sum(len(part) for part in parts)
        ctx.counter("records_scored", scored)
        if scored:
            ctx.gauge("model_latency", busy_seconds * 1000.0 / scored)
        return Dataset(schema=_append_column(ds.schema, "score", "float"), partitions=parts)


# ---------------------------------------------------------------------------
# Contracts and factories
# ---------------------------------------------------------------------------


def _passthrough_schema(schemas, params) -> Schema:
    return tuple(schemas[0])


def standard_factories() -> list[PipeFactory]:
    return [
        PipeFactory(
            contract=PipeContract(
                type_name="PreprocessTransformer",
                input_schema_requirements=((("text", "string"),),),
                output_schema_fn=lambda schemas, params: _append_column(
                    tuple(schemas[0]), "tokens", "string"
                ),
                param_specs=(ParamSpec("lowercase", required=False, default="true"),),
            ),
            build=lambda params, ctx: PreprocessPipe(params),
        ),
        PipeFactory(
            contract=PipeContract(
                type_name="DedupTransformer",
                output_schema_fn=_passthrough_schema,
                param_specs=(ParamSpec("keys", required=True),),
            ),
            build=lambda params, ctx: DedupPipe(params),
        ),
        PipeFactory(
            contract=PipeContract(
                type_name="LanguageDetectTransformer",
                input_schema_requirements=((("tokens", "string"),),),
                output_schema_fn=lambda schemas, params: _append_column(
                    tuple(schemas[0]), "lang", "string"
                ),
            ),
            build=lambda params, ctx: LanguageDetectPipe(),
        ),
        PipeFactory(
            contract=PipeContract(
                type_name="PartitionByLanguageTransformer",
                input_schema_requirements=((("lang", "string"),),),
                output_schema_fn=_passthrough_schema,
            ),
            build=lambda params, ctx: PartitionByLanguagePipe(),
        ),
        PipeFactory(
            contract=PipeContract(
                type_name="ModelPredictionTransformer",
                output_schema_fn=lambda schemas, params: _append_column(
                    tuple(schemas[0]), "score", "float"
                ),
                param_specs=(
                    ParamSpec("integration", required=True),
                    ParamSpec("networkDelayMillis", required=False, default="20"),
                    ParamSpec("computeDelayMillis", required=False, default="5"),
                ),
            ),
            build=lambda params, ctx: ModelPredictionPipe(params),
        ),
    ]
