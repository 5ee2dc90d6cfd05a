"""Parsing, representation, and static validation of declarative pipeline specs.

A pipeline spec is a JSON document with three top-level keys:

* ``data``  -- dataset declarations ("anchors"): id, location, format,
  schema, encryption, persist.
* ``pipes`` -- transformation declarations: inputDataId (list),
  transformerType, outputDataId, params, parallelism.
* ``metrics`` -- cadenceMillis and sink for the async metrics publisher.

Parsing is strict: unknown keys are rejected, enum fields are checked, and
conditional fields (encryption keyId/keyField) must match their mode.
Relational rules (duplicate producers, dangling inputs, ...) are reported by
:func:`validate_spec` as data rather than raised.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DpipeError

LOCATION_KINDS = ("file", "memory", "table")
FORMATS = ("csv", "ndjson")
COLUMN_TYPES = ("string", "int", "float", "bool")
ENCRYPTION_MODES = ("none", "dataset", "record")
SINK_KINDS = ("stdout", "file", "null")

DEFAULT_CADENCE_MILLIS = 30_000

Schema = tuple[tuple[str, str], ...]


class SpecParseError(DpipeError):
    """Base for errors raised while parsing a pipeline spec document."""


class MalformedJson(SpecParseError):
    pass


class MissingField(SpecParseError):
    def __init__(self, field_name: str, context: str):
        super().__init__(f"missing required field '{field_name}' in {context}")
        self.field_name = field_name
        self.context = context


class BadEnumValue(SpecParseError):
    """A field holds a value outside its enum or expected type."""

    def __init__(self, field_name: str, value: object, context: str = ""):
        where = f" in {context}" if context else ""
        super().__init__(f"bad value for '{field_name}'{where}: {value!r}")
        self.field_name = field_name
        self.value = value


class UnknownField(SpecParseError):
    def __init__(self, field_name: str, context: str):
        super().__init__(f"unknown field '{field_name}' in {context}")
        self.field_name = field_name
        self.context = context


@dataclass(frozen=True)
class Location:
    kind: str
    path: str | None = None


@dataclass(frozen=True)
class EncryptionMode:
    mode: str = "none"
    key_id: str | None = None
    key_field: str | None = None


@dataclass(frozen=True)
class DataDeclaration:
    """A named dataset slot: where it lives, what shape it has, how it is stored."""

    id: str
    location: Location
    format: str | None
    schema: Schema
    encryption: EncryptionMode = EncryptionMode()
    persist: bool = False

    def column_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.schema)


@dataclass(frozen=True)
class PipeDeclaration:
    input_data_ids: tuple[str, ...]
    transformer_type: str
    output_data_id: str
    params: tuple[tuple[str, str], ...] = ()
    parallelism: int | None = None

    def params_dict(self) -> dict[str, str]:
        return dict(self.params)


@dataclass(frozen=True)
class MetricsConfig:
    cadence_millis: int = DEFAULT_CADENCE_MILLIS
    sink_kind: str = "stdout"
    sink_path: str | None = None


@dataclass(frozen=True)
class PipelineSpec:
    data: tuple[DataDeclaration, ...]
    pipes: tuple[PipeDeclaration, ...]
    metrics: MetricsConfig = MetricsConfig()

    def declaration(self, anchor_id: str) -> DataDeclaration:
        for decl in self.data:
            if decl.id == anchor_id:
                return decl
        raise KeyError(anchor_id)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    subject: str


@dataclass
class ValidationReport:
    """Static-analysis outcome: the spec is runnable iff ``errors`` is empty."""

    errors: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, code: str, message: str, subject: str) -> None:
        self.errors.append(Violation(code, message, subject))

    def warn(self, code: str, message: str, subject: str) -> None:
        self.warnings.append(Violation(code, message, subject))

    def extend(self, other: "ValidationReport") -> None:
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)

    def to_dict(self) -> dict:
        return {
            "errors": [vars(v) for v in self.errors],
            "warnings": [vars(v) for v in self.warnings],
        }


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _require_keys(obj: dict, allowed: set[str], required: set[str], context: str) -> None:
    for key in obj:
        if key not in allowed:
            raise UnknownField(key, context)
    for key in required:
        if key not in obj:
            raise MissingField(key, context)


def _string(obj: dict, key: str, context: str) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise BadEnumValue(key, value, context)
    return value


def _enum(obj: dict, key: str, choices: tuple[str, ...], context: str) -> str:
    value = _string(obj, key, context)
    if value not in choices:
        raise BadEnumValue(key, value, context)
    return value


def _parse_location(raw: object, context: str) -> Location:
    if not isinstance(raw, dict):
        raise BadEnumValue("location", raw, context)
    _require_keys(raw, {"kind", "path"}, {"kind"}, f"{context}.location")
    kind = _enum(raw, "kind", LOCATION_KINDS, f"{context}.location")
    if kind == "memory":
        if "path" in raw:
            raise UnknownField("path", f"{context}.location (memory anchors carry no path)")
        return Location(kind="memory")
    if "path" not in raw:
        raise MissingField("path", f"{context}.location")
    return Location(kind=kind, path=_string(raw, "path", f"{context}.location"))


def _parse_schema(raw: object, context: str) -> Schema:
    if not isinstance(raw, list):
        raise BadEnumValue("schema", raw, context)
    columns = []
    for i, col in enumerate(raw):
        col_ctx = f"{context}.schema[{i}]"
        if not isinstance(col, dict):
            raise BadEnumValue("schema", col, col_ctx)
        _require_keys(col, {"name", "type"}, {"name", "type"}, col_ctx)
        name = _string(col, "name", col_ctx)
        col_type = _enum(col, "type", COLUMN_TYPES, col_ctx)
        columns.append((name, col_type))
    return tuple(columns)


def _parse_encryption(raw: object, context: str) -> EncryptionMode:
    if not isinstance(raw, dict):
        raise BadEnumValue("encryption", raw, context)
    ctx = f"{context}.encryption"
    _require_keys(raw, {"mode", "keyId", "keyField"}, {"mode"}, ctx)
    mode = _enum(raw, "mode", ENCRYPTION_MODES, ctx)
    if mode == "dataset":
        if "keyId" not in raw:
            raise MissingField("keyId", ctx)
        if "keyField" in raw:
            raise UnknownField("keyField", ctx)
        return EncryptionMode(mode="dataset", key_id=_string(raw, "keyId", ctx))
    if mode == "record":
        if "keyField" not in raw:
            raise MissingField("keyField", ctx)
        if "keyId" in raw:
            raise UnknownField("keyId", ctx)
        return EncryptionMode(mode="record", key_field=_string(raw, "keyField", ctx))
    if "keyId" in raw or "keyField" in raw:
        raise UnknownField("keyId" if "keyId" in raw else "keyField", ctx)
    return EncryptionMode()


def _parse_data_declaration(raw: object, index: int) -> DataDeclaration:
    context = f"data[{index}]"
    if not isinstance(raw, dict):
        raise BadEnumValue("data", raw, context)
    _require_keys(
        raw,
        {"id", "location", "format", "schema", "encryption", "persist"},
        {"id", "location", "schema"},
        context,
    )
    anchor_id = _string(raw, "id", context)
    location = _parse_location(raw["location"], context)
    schema = _parse_schema(raw["schema"], context)

    fmt: str | None = None
    if location.kind == "memory":
        if "format" in raw:
            raise UnknownField("format", f"{context} (memory anchors carry no format)")
    else:
        if "format" not in raw:
            raise MissingField("format", context)
        fmt = _enum(raw, "format", FORMATS, context)

    encryption = EncryptionMode()
    if "encryption" in raw:
        encryption = _parse_encryption(raw["encryption"], context)

    persist = False
    if "persist" in raw:
        if not isinstance(raw["persist"], bool):
            raise BadEnumValue("persist", raw["persist"], context)
        persist = raw["persist"]

    return DataDeclaration(
        id=anchor_id,
        location=location,
        format=fmt,
        schema=schema,
        encryption=encryption,
        persist=persist,
    )


def _parse_pipe_declaration(raw: object, index: int) -> PipeDeclaration:
    context = f"pipes[{index}]"
    if not isinstance(raw, dict):
        raise BadEnumValue("pipes", raw, context)
    _require_keys(
        raw,
        {"inputDataId", "transformerType", "outputDataId", "params", "parallelism"},
        {"inputDataId", "transformerType", "outputDataId"},
        context,
    )
    inputs_raw = raw["inputDataId"]
    if not isinstance(inputs_raw, list) or not all(isinstance(x, str) for x in inputs_raw):
        raise BadEnumValue("inputDataId", inputs_raw, context)

    params: tuple[tuple[str, str], ...] = ()
    if "params" in raw:
        params_raw = raw["params"]
        if not isinstance(params_raw, dict):
            raise BadEnumValue("params", params_raw, context)
        for key, value in params_raw.items():
            if not isinstance(value, str):
                raise BadEnumValue(f"params.{key}", value, context)
        params = tuple(params_raw.items())

    parallelism = None
    if "parallelism" in raw:
        value = raw["parallelism"]
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise BadEnumValue("parallelism", value, context)
        parallelism = value

    return PipeDeclaration(
        input_data_ids=tuple(inputs_raw),
        transformer_type=_string(raw, "transformerType", context),
        output_data_id=_string(raw, "outputDataId", context),
        params=params,
        parallelism=parallelism,
    )


def _parse_metrics(raw: object) -> MetricsConfig:
    context = "metrics"
    if not isinstance(raw, dict):
        raise BadEnumValue("metrics", raw, context)
    _require_keys(raw, {"cadenceMillis", "sink"}, set(), context)

    cadence = DEFAULT_CADENCE_MILLIS
    if "cadenceMillis" in raw:
        value = raw["cadenceMillis"]
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise BadEnumValue("cadenceMillis", value, context)
        cadence = value

    sink_kind, sink_path = "stdout", None
    if "sink" in raw:
        sink = _string(raw, "sink", context)
        sink_kind, sink_path = parse_sink(sink)
    return MetricsConfig(cadence_millis=cadence, sink_kind=sink_kind, sink_path=sink_path)


def parse_sink(sink: str) -> tuple[str, str | None]:
    """Parse a sink descriptor: ``stdout``, ``null``, or ``file:<path>``."""
    if sink in ("stdout", "null"):
        return sink, None
    if sink.startswith("file:") and len(sink) > len("file:"):
        return "file", sink[len("file:"):]
    raise BadEnumValue("sink", sink, "metrics")


def parse_pipeline_spec(text: str) -> PipelineSpec:
    """Parse a JSON pipeline document into a :class:`PipelineSpec`.

    Declaration order is preserved; a pipe's index in ``pipes`` is its
    identity for planning and reporting. Optional fields take their
    documented defaults (persist=false, encryption mode=none,
    cadenceMillis=30000, sink=stdout).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"spec is not well-formed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedJson("spec document must be a JSON object")
    _require_keys(doc, {"data", "pipes", "metrics"}, set(), "spec")

    data_raw = doc.get("data", [])
    pipes_raw = doc.get("pipes", [])
    if not isinstance(data_raw, list):
        raise BadEnumValue("data", data_raw, "spec")
    if not isinstance(pipes_raw, list):
        raise BadEnumValue("pipes", pipes_raw, "spec")

    data = tuple(_parse_data_declaration(d, i) for i, d in enumerate(data_raw))
    pipes = tuple(_parse_pipe_declaration(p, i) for i, p in enumerate(pipes_raw))
    metrics = _parse_metrics(doc["metrics"]) if "metrics" in doc else MetricsConfig()
    return PipelineSpec(data=data, pipes=pipes, metrics=metrics)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _location_to_dict(location: Location) -> dict:
    out: dict = {"kind": location.kind}
    if location.path is not None:
        out["path"] = location.path
    return out


def _encryption_to_dict(enc: EncryptionMode) -> dict:
    out: dict = {"mode": enc.mode}
    if enc.key_id is not None:
        out["keyId"] = enc.key_id
    if enc.key_field is not None:
        out["keyField"] = enc.key_field
    return out


def spec_to_dict(spec: PipelineSpec) -> dict:
    data = []
    for decl in spec.data:
        entry: dict = {
            "id": decl.id,
            "location": _location_to_dict(decl.location),
            "schema": [{"name": n, "type": t} for n, t in decl.schema],
            "encryption": _encryption_to_dict(decl.encryption),
            "persist": decl.persist,
        }
        if decl.format is not None:
            entry["format"] = decl.format
        data.append(entry)
    pipes = []
    for pipe in spec.pipes:
        entry = {
            "inputDataId": list(pipe.input_data_ids),
            "transformerType": pipe.transformer_type,
            "outputDataId": pipe.output_data_id,
            "params": dict(pipe.params),
        }
        if pipe.parallelism is not None:
            entry["parallelism"] = pipe.parallelism
        pipes.append(entry)
    sink = spec.metrics.sink_kind
    if sink == "file":
        sink = f"file:{spec.metrics.sink_path}"
    return {
        "data": data,
        "pipes": pipes,
        "metrics": {"cadenceMillis": spec.metrics.cadence_millis, "sink": sink},
    }


def serialize_pipeline_spec(spec: PipelineSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_spec(spec: PipelineSpec) -> ValidationReport:
    """Check every relational invariant of a parsed spec.

    Violations are returned as report entries, never raised. The report is
    order-stable: identical specs produce identical reports.
    """
    report = ValidationReport()
    declared = {}
    for decl in spec.data:
        if decl.id in declared:
            report.error("DuplicateDataId", f"anchor '{decl.id}' declared more than once", decl.id)
        declared[decl.id] = decl

        seen_columns = set()
        for name, _ in decl.schema:
            if not name:
                report.error("EmptyColumnName", f"anchor '{decl.id}' has an empty column name", decl.id)
            if name in seen_columns:
                report.error(
                    "DuplicateColumn", f"anchor '{decl.id}' declares column '{name}' twice", decl.id
                )
            seen_columns.add(name)

        enc = decl.encryption
        if enc.mode == "record":
            if enc.key_field not in decl.column_names():
                report.error(
                    "BadKeyField",
                    f"anchor '{decl.id}' keyField '{enc.key_field}' is not a schema column",
                    decl.id,
                )
            else:
                key_type = dict(decl.schema)[enc.key_field]
                if key_type != "string":
                    report.error(
                        "BadKeyField",
                        f"anchor '{decl.id}' keyField '{enc.key_field}' must be a string column",
                        decl.id,
                    )

    producers: dict[str, int] = {}
    consumed: set[str] = set()
    for index, pipe in enumerate(spec.pipes):
        subject = f"pipes[{index}]"
        if not pipe.input_data_ids:
            report.error("EmptyInputs", f"pipe {index} ({pipe.transformer_type}) has no inputs", subject)
        if pipe.output_data_id in pipe.input_data_ids:
            report.error(
                "SelfLoop",
                f"pipe {index} ({pipe.transformer_type}) reads its own output '{pipe.output_data_id}'",
                subject,
            )
        for anchor_id in pipe.input_data_ids:
            consumed.add(anchor_id)
            if anchor_id not in declared:
                report.error("UnknownAnchor", f"pipe {index} reads undeclared anchor '{anchor_id}'", anchor_id)
        if pipe.output_data_id not in declared:
            report.error(
                "UnknownAnchor", f"pipe {index} writes undeclared anchor '{pipe.output_data_id}'", pipe.output_data_id
            )
        if pipe.output_data_id in producers:
            report.error(
                "DuplicateProducer",
                f"anchor '{pipe.output_data_id}' is produced by pipes "
                f"{producers[pipe.output_data_id]} and {index}",
                pipe.output_data_id,
            )
        else:
            producers[pipe.output_data_id] = index

    for decl in spec.data:
        has_producer = decl.id in producers
        is_read = decl.id in consumed
        if is_read and not has_producer and decl.location.kind == "memory":
            report.error(
                "DanglingInput",
                f"memory anchor '{decl.id}' is consumed but produced by no pipe",
                decl.id,
            )
        if not is_read and not has_producer:
            report.warn("UnusedAnchor", f"anchor '{decl.id}' is never read nor written", decl.id)

    return report
