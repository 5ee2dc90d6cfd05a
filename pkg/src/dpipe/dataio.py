"""Unified dataset I/O across backends (file, table directory) and formats
(CSV, NDJSON), with client-side codecs for dataset- and record-level
encryption.

The codec is a keyed byte-stream transform with checksum framing. It is NOT
production cryptography: keys are derived deterministically and the keystream
is a plain SHA-256 chain. It exists to exercise the key-granularity modes
(per-dataset and per-record keys) with detectable wrong-key failures.

Frame layout: magic ``DPC1`` | keyId length (4 bytes BE) | keyId utf-8 |
CRC-32 of the plaintext payload (4 bytes BE) | keystream-XORed payload.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import io
import json
import math
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

from .errors import DpipeError
from .spec_model import DataDeclaration, Schema

CODEC_MAGIC = b"DPC1"
MANIFEST_NAME = "manifest.json"


class DataIoError(DpipeError):
    pass


class DatasetNotFound(DataIoError):
    pass


class ParseError(DataIoError):
    def __init__(self, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class SchemaCoercionError(DataIoError):
    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        where = "".join(
            part
            for part in (
                f" (line {line}" if line is not None else "",
                f", column '{column}')" if column is not None and line is not None else "",
            )
        )
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class SchemaMismatch(DataIoError):
    pass


class DecryptError(DataIoError):
    def __init__(self, key_id: str, reason: str):
        super().__init__(f"cannot decrypt payload keyed '{key_id}': {reason}")
        self.key_id = key_id


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

Record = tuple
Partition = tuple[Record, ...]


@dataclass(frozen=True)
class Dataset:
    """An immutable, partitioned collection of schema-conforming records.

    Records are positional tuples matching ``schema`` order; any cell may be
    None. Partition boundaries are meaningful: they are the unit of work for
    the engine's worker lanes.
    """

    schema: Schema
    partitions: tuple[Partition, ...]

    @classmethod
    def from_records(cls, schema: Schema, records: list | tuple, partition_count: int = 1) -> "Dataset":
        ds = cls(schema=tuple(schema), partitions=(tuple(tuple(r) for r in records),))
        return repartition(ds, partition_count) if partition_count != 1 else ds

    def records(self) -> list[Record]:
        """All records in concatenated partition order."""
        out: list[Record] = []
        for part in self.partitions:
            out.extend(part)
        return out

    @property
    def record_count(self) -> int:
        return sum(len(part) for part in self.partitions)

    @property
    def partition_count(self) -> int:
        return len(self.partitions)

    def column_index(self, name: str) -> int:
        for i, (col, _) in enumerate(self.schema):
            if col == name:
                return i
        raise KeyError(name)

    def approx_bytes(self) -> int:
        """Rough logical payload size, used for store accounting."""
        total = 0
        for part in self.partitions:
            for record in part:
                total += 16
                for value in record:
                    if isinstance(value, str):
                        total += len(value)
                    elif value is not None:
                        total += 8
        return total

    def reorder_columns(self, target_schema: Schema) -> "Dataset":
        """Permute columns to match ``target_schema`` order (same name/type set)."""
        if self.schema == tuple(target_schema):
            return self
        if set(self.schema) != set(target_schema):
            raise SchemaMismatch(
                f"cannot reorder schema {self.schema} to {tuple(target_schema)}"
            )
        mapping = [self.column_index(name) for name, _ in target_schema]
        new_parts = tuple(
            tuple(tuple(record[i] for i in mapping) for record in part) for part in self.partitions
        )
        return Dataset(schema=tuple(target_schema), partitions=new_parts)


def repartition(ds: Dataset, n: int) -> Dataset:
    """Rechunk into ``n`` contiguous partitions with sizes differing by <= 1.

    The concatenated record order is preserved exactly.
    """
    if n < 1:
        raise ValueError(f"partition count must be >= 1, got {n}")
    records = ds.records()
    q, r = divmod(len(records), n)
    parts = []
    pos = 0
    for i in range(n):
        size = q + (1 if i < r else 0)
        parts.append(tuple(records[pos:pos + size]))
        pos += size
    return Dataset(schema=ds.schema, partitions=tuple(parts))


# ---------------------------------------------------------------------------
# Value coercion
# ---------------------------------------------------------------------------


def _coerce_json_value(value, col_name: str, col_type: str, line: int):
    if value is None:
        return None
    if col_type == "string":
        if isinstance(value, str):
            return value
    elif col_type == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif col_type == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif col_type == "bool":
        if isinstance(value, bool):
            return value
    raise SchemaCoercionError(
        f"value {value!r} does not fit column type '{col_type}'", line=line, column=col_name
    )


def _coerce_csv_cell(cell: str, col_name: str, col_type: str, line: int):
    if cell == "":
        return None
    try:
        if col_type == "string":
            return cell
        if col_type == "int":
            return int(cell)
        if col_type == "float":
            return float(cell)
        if col_type == "bool":
            lowered = cell.lower()
            if lowered == "true":
                return True
            if lowered == "false":
                return False
            raise ValueError(cell)
    except ValueError:
        pass
    raise SchemaCoercionError(
        f"cell {cell!r} does not fit column type '{col_type}'", line=line, column=col_name
    )


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------


class KeyProvider:
    """Resolves key ids to key bytes. Raises DecryptError for unknown ids."""

    def key(self, key_id: str) -> bytes:
        raise NotImplementedError


class DerivedKeyProvider(KeyProvider):
    """Derives key bytes from the key id and a shared secret string.

    Deterministic on purpose so runs are reproducible without key files.
    """

    def __init__(self, secret: str = ""):
        self._secret = secret

    def key(self, key_id: str) -> bytes:
        return hashlib.sha256(f"{self._secret}:{key_id}".encode()).digest()


class MappingKeyProvider(KeyProvider):
    def __init__(self, keys: dict[str, bytes]):
        self._keys = dict(keys)

    def key(self, key_id: str) -> bytes:
        try:
            return self._keys[key_id]
        except KeyError:
            raise DecryptError(key_id, "no key available") from None


def _keystream_xor(data: bytes, key: bytes) -> bytes:
    out = bytearray(len(data))
    block = b""
    counter = 0
    pos = 0
    while pos < len(data):
        block = hashlib.sha256(key + struct.pack(">Q", counter)).digest()
        chunk = min(len(block), len(data) - pos)
        for i in range(chunk):
            out[pos + i] = data[pos + i] ^ block[i]
        pos += chunk
        counter += 1
    return bytes(out)


def codec_encode(payload: bytes, key_id: str, provider: KeyProvider) -> bytes:
    key_bytes = provider.key(key_id)
    key_id_raw = key_id.encode()
    header = CODEC_MAGIC + struct.pack(">I", len(key_id_raw)) + key_id_raw
    checksum = struct.pack(">I", zlib.crc32(payload) & 0xFFFFFFFF)
    return header + checksum + _keystream_xor(payload, key_bytes)


def codec_decode(frame: bytes, expected_key_id: str, provider: KeyProvider) -> bytes:
    """Decode a frame, verifying the embedded key id and payload checksum."""
    if len(frame) < len(CODEC_MAGIC) + 8 or not frame.startswith(CODEC_MAGIC):
        raise DecryptError(expected_key_id, "bad frame magic")
    pos = len(CODEC_MAGIC)
    (key_len,) = struct.unpack(">I", frame[pos:pos + 4])
    pos += 4
    key_id = frame[pos:pos + key_len].decode(errors="replace")
    pos += key_len
    if key_id != expected_key_id:
        raise DecryptError(expected_key_id, f"frame is keyed '{key_id}'")
    (checksum,) = struct.unpack(">I", frame[pos:pos + 4])
    pos += 4
    payload = _keystream_xor(frame[pos:], provider.key(expected_key_id))
    if zlib.crc32(payload) & 0xFFFFFFFF != checksum:
        raise DecryptError(expected_key_id, "checksum mismatch (wrong key or corrupt data)")
    return payload


# ---------------------------------------------------------------------------
# Text serialization (plain and record-encrypted variants)
# ---------------------------------------------------------------------------


def _rows_to_csv_text(schema: Schema, rows: list[Record]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name, _ in schema])
    for record in rows:
        writer.writerow([_csv_cell(v) for v in record])
    return buf.getvalue()


def _csv_text_to_rows(schema: Schema, text: str) -> list[Record]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("CSV file has no header row", line=1) from None
    names = [name for name, _ in schema]
    if sorted(header) != sorted(names):
        raise ParseError(
            f"CSV header {header!r} does not match schema columns {names!r}", line=1
        )
    mapping = [header.index(name) for name in names]
    records = []
    for line_no, raw in enumerate(reader, start=2):
        if len(raw) != len(header):
            raise ParseError(
                f"row has {len(raw)} cells, expected {len(header)}", line=line_no
            )
        record = tuple(
            _coerce_csv_cell(raw[mapping[i]], schema[i][0], schema[i][1], line_no)
            for i in range(len(schema))
        )
        records.append(record)
    return records


def _rows_to_ndjson_text(schema: Schema, rows: list[Record]) -> str:
    lines = []
    for record in rows:
        obj = {name: value for (name, _), value in zip(schema, record)}
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def _ndjson_text_to_rows(schema: Schema, text: str) -> list[Record]:
    names = {name for name, _ in schema}
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line=line_no) from exc
        if not isinstance(obj, dict):
            raise ParseError("NDJSON line is not an object", line=line_no)
        unknown = set(obj) - names
        if unknown:
            raise ParseError(f"unknown keys {sorted(unknown)!r}", line=line_no)
        record = tuple(
            _coerce_json_value(obj.get(name), name, col_type, line_no)
            for name, col_type in schema
        )
        records.append(record)
    return records


_FORMAT_WRITERS = {"csv": _rows_to_csv_text, "ndjson": _rows_to_ndjson_text}
_FORMAT_READERS = {"csv": _csv_text_to_rows, "ndjson": _ndjson_text_to_rows}


def _record_wrapper_schema(key_field: str) -> Schema:
    return ((key_field, "string"), ("payload", "string"))


def _encode_record_mode(decl: DataDeclaration, rows: list[Record], provider: KeyProvider) -> str:
    """Each record is individually framed under the key named by its keyField cell."""
    key_field = decl.encryption.key_field
    key_index = [name for name, _ in decl.schema].index(key_field)
    serialize = _FORMAT_WRITERS[decl.format]
    wrapped = []
    for record in rows:
        key_id = record[key_index]
        if not isinstance(key_id, str) or not key_id:
            raise SchemaMismatch(
                f"record-mode encryption needs a non-null key id in column '{key_field}'"
            )
        inner = serialize(decl.schema, [record])
        frame = codec_encode(inner.encode(), key_id, provider)
        wrapped.append((key_id, base64.b64encode(frame).decode()))
    return serialize(_record_wrapper_schema(key_field), wrapped)


def _decode_record_mode(decl: DataDeclaration, text: str, provider: KeyProvider) -> list[Record]:
    key_field = decl.encryption.key_field
    parse = _FORMAT_READERS[decl.format]
    rows = []
    for line_no, (key_id, payload) in enumerate(parse(_record_wrapper_schema(key_field), text), start=1):
        if key_id is None or payload is None:
            raise ParseError("record-mode row is missing key id or payload", line=line_no)
        try:
            frame = base64.b64decode(payload.encode(), validate=True)
        except Exception as exc:
            raise ParseError(f"record payload is not valid base64: {exc}", line=line_no) from exc
        inner = codec_decode(frame, key_id, provider).decode()
        inner_rows = parse(decl.schema, inner)
        if len(inner_rows) != 1:
            raise ParseError("record payload does not hold exactly one record", line=line_no)
        rows.append(inner_rows[0])
    return rows


def _serialize_rows(decl: DataDeclaration, rows: list[Record], provider: KeyProvider | None) -> bytes:
    mode = decl.encryption.mode
    if mode == "none":
        return _FORMAT_WRITERS[decl.format](decl.schema, rows).encode()
    if provider is None:
        provider = DerivedKeyProvider()
    if mode == "dataset":
        plain = _FORMAT_WRITERS[decl.format](decl.schema, rows).encode()
        return codec_encode(plain, decl.encryption.key_id, provider)
    return _encode_record_mode(decl, rows, provider).encode()


def _deserialize_rows(decl: DataDeclaration, blob: bytes, provider: KeyProvider | None) -> list[Record]:
    mode = decl.encryption.mode
    if mode == "none":
        return _FORMAT_READERS[decl.format](decl.schema, blob.decode())
    if provider is None:
        provider = DerivedKeyProvider()
    if mode == "dataset":
        plain = codec_decode(blob, decl.encryption.key_id, provider)
        return _FORMAT_READERS[decl.format](decl.schema, plain.decode())
    return _decode_record_mode(decl, blob.decode(), provider)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


def _part_name(index: int, fmt: str) -> str:
    return f"part-{index:05d}.{fmt}"


def read_dataset(decl: DataDeclaration, key_provider: KeyProvider | None = None) -> Dataset:
    """Read and coerce an anchor's on-disk data per its declaration.

    File anchors come back as a single partition; table anchors preserve the
    partitioning recorded in their manifest.
    """
    kind = decl.location.kind
    if kind == "memory":
        raise DataIoError(f"memory anchor '{decl.id}' has no backing storage to read")
    path = Path(decl.location.path)
    if kind == "file":
        if not path.is_file():
            raise DatasetNotFound(f"anchor '{decl.id}': no such file: {path}")
        rows = _deserialize_rows(decl, path.read_bytes(), key_provider)
        return Dataset(schema=decl.schema, partitions=(tuple(rows),))

    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetNotFound(f"anchor '{decl.id}': no table manifest at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"table manifest is not valid JSON: {exc}") from exc
    partitions = []
    total = 0
    for entry in manifest.get("parts", []):
        part_path = path / entry["file"]
        if not part_path.is_file():
            raise DatasetNotFound(f"anchor '{decl.id}': missing part file {part_path}")
        rows = _deserialize_rows(decl, part_path.read_bytes(), key_provider)
        if len(rows) != entry.get("records", len(rows)):
            raise ParseError(
                f"part {entry['file']} holds {len(rows)} records, manifest says {entry['records']}"
            )
        total += len(rows)
        partitions.append(tuple(rows))
    if total != manifest.get("recordCount", total):
        raise ParseError(
            f"table holds {total} records, manifest says {manifest['recordCount']}"
        )
    if not partitions:
        partitions = [()]
    return Dataset(schema=decl.schema, partitions=tuple(partitions))


def write_dataset(ds: Dataset, decl: DataDeclaration, key_provider: KeyProvider | None = None) -> None:
    """Write a dataset to its declared location; read_dataset round-trips it."""
    if ds.schema != decl.schema:
        raise SchemaMismatch(
            f"dataset schema {ds.schema} does not match declaration of '{decl.id}': {decl.schema}"
        )
    kind = decl.location.kind
    if kind == "memory":
        raise DataIoError(f"memory anchor '{decl.id}' is not written to storage")
    path = Path(decl.location.path)
    if kind == "file":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(_serialize_rows(decl, ds.records(), key_provider))
        return

    path.mkdir(parents=True, exist_ok=True)
    parts = []
    for i, partition in enumerate(ds.partitions):
        name = _part_name(i, decl.format)
        (path / name).write_bytes(_serialize_rows(decl, list(partition), key_provider))
        parts.append({"file": name, "records": len(partition)})
    manifest = {"parts": parts, "recordCount": ds.record_count}
    tmp = path / (MANIFEST_NAME + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2))
    os.replace(tmp, path / MANIFEST_NAME)


def validate_dataset(ds: Dataset) -> None:
    """Check record widths and cell types against the dataset's own schema."""
    for part in ds.partitions:
        for record in part:
            if len(record) != len(ds.schema):
                raise SchemaMismatch(
                    f"record width {len(record)} != schema width {len(ds.schema)}"
                )
            for value, (name, col_type) in zip(record, ds.schema):
                if value is None:
                    continue
                ok = (
                    (col_type == "string" and isinstance(value, str))
                    or (col_type == "int" and isinstance(value, int) and not isinstance(value, bool))
                    or (col_type == "float" and isinstance(value, float) and math.isfinite(value))
                    or (col_type == "bool" and isinstance(value, bool))
                )
                if not ok:
                    raise SchemaMismatch(
                        f"value {value!r} does not fit column '{name}' of type '{col_type}'"
                    )
