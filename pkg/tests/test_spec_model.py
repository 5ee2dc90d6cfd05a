"""Spec parsing, serialization round-trips, and static validation."""

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import data_decl, make_spec, pipe_decl, random_acyclic_spec
from dpipe.spec_model import (
    BadEnumValue,
    MalformedJson,
    MissingField,
    UnknownField,
    parse_pipeline_spec,
    serialize_pipeline_spec,
    validate_spec,
)

# The four-pipe ML pipeline definition, with the pipe objects written exactly
# as the declarative listing shows them.
FOUR_PIPE_DOC = {
    "data": [
        {
            "id": "InputData",
            "location": {"kind": "file", "path": "input.ndjson"},
            "format": "ndjson",
            "schema": [{"name": "doc_id", "type": "string"}, {"name": "text", "type": "string"}],
        },
        {"id": "IntermediateData", "location": {"kind": "memory"}, "schema": [{"name": "doc_id", "type": "string"}]},
        {"id": "FeatureData", "location": {"kind": "memory"}, "schema": [{"name": "doc_id", "type": "string"}]},
        {"id": "PredictionData", "location": {"kind": "memory"}, "schema": [{"name": "doc_id", "type": "string"}]},
        {"id": "OutputData", "location": {"kind": "memory"}, "schema": [{"name": "doc_id", "type": "string"}]},
    ],
    "pipes": [
        {"inputDataId": ["InputData"], "transformerType": "PreprocessTransformer", "outputDataId": "IntermediateData"},
        {"inputDataId": ["InputData"], "transformerType": "FeatureGenerationTransformer", "outputDataId": "FeatureData"},
        {"inputDataId": ["IntermediateData", "FeatureData"], "transformerType": "ModelPredictionTransformer", "outputDataId": "PredictionData"},
        {"inputDataId": ["InputData", "PredictionData"], "transformerType": "PostProcessTransformer", "outputDataId": "OutputData"},
    ],
}


class TestParse:
    def test_four_pipe_listing_parses_exactly(self):
        spec = parse_pipeline_spec(json.dumps(FOUR_PIPE_DOC))
        assert len(spec.pipes) == 4
        assert [p.transformer_type for p in spec.pipes] == [
            "PreprocessTransformer",
            "FeatureGenerationTransformer",
            "ModelPredictionTransformer",
            "PostProcessTransformer",
        ]
        assert spec.pipes[0].input_data_ids == ("InputData",)
        assert spec.pipes[2].input_data_ids == ("IntermediateData", "FeatureData")
        assert spec.pipes[3].output_data_id == "OutputData"

    def test_empty_spec_parses(self):
        spec = parse_pipeline_spec('{"data":[],"pipes":[]}')
        assert spec.data == () and spec.pipes == ()

    def test_defaults(self):
        spec = parse_pipeline_spec(json.dumps(FOUR_PIPE_DOC))
        assert spec.metrics.cadence_millis == 30000
        assert spec.metrics.sink_kind == "stdout"
        assert all(not d.persist for d in spec.data)
        assert all(d.encryption.mode == "none" for d in spec.data)

    def test_malformed_json(self):
        with pytest.raises(MalformedJson):
            parse_pipeline_spec("{not json")

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(UnknownField):
            parse_pipeline_spec('{"data":[],"pipes":[],"extra":1}')

    def test_non_string_transformer_type_is_a_value_error(self):
        doc = {"data": [], "pipes": [{"inputDataId": ["A"], "transformerType": 7, "outputDataId": "B"}]}
        with pytest.raises(BadEnumValue):
            parse_pipeline_spec(json.dumps(doc))

    def test_missing_required_field(self):
        doc = {"data": [], "pipes": [{"inputDataId": ["A"], "outputDataId": "B"}]}
        with pytest.raises(MissingField):
            parse_pipeline_spec(json.dumps(doc))

    def test_memory_anchor_rejects_path_and_format(self):
        doc = {
            "data": [{"id": "M", "location": {"kind": "memory", "path": "x"}, "schema": []}],
            "pipes": [],
        }
        with pytest.raises(UnknownField):
            parse_pipeline_spec(json.dumps(doc))
        doc = {
            "data": [{"id": "M", "location": {"kind": "memory"}, "format": "csv", "schema": []}],
            "pipes": [],
        }
        with pytest.raises(UnknownField):
            parse_pipeline_spec(json.dumps(doc))

    def test_encryption_conditional_fields(self):
        base = {"id": "A", "location": {"kind": "file", "path": "x"}, "format": "csv", "schema": []}
        doc = {"data": [dict(base, encryption={"mode": "dataset"})], "pipes": []}
        with pytest.raises(MissingField):
            parse_pipeline_spec(json.dumps(doc))
        doc = {"data": [dict(base, encryption={"mode": "none", "keyId": "k"})], "pipes": []}
        with pytest.raises(UnknownField):
            parse_pipeline_spec(json.dumps(doc))
        doc = {"data": [dict(base, encryption={"mode": "record", "keyField": "k"})], "pipes": []}
        spec = parse_pipeline_spec(json.dumps(doc))
        assert spec.data[0].encryption.key_field == "k"

    def test_bad_enum_values(self):
        doc = {"data": [{"id": "A", "location": {"kind": "s3", "path": "x"}, "schema": []}], "pipes": []}
        with pytest.raises(BadEnumValue):
            parse_pipeline_spec(json.dumps(doc))
        doc = {"data": [], "pipes": [], "metrics": {"cadenceMillis": 0}}
        with pytest.raises(BadEnumValue):
            parse_pipeline_spec(json.dumps(doc))
        doc = {"data": [], "pipes": [], "metrics": {"sink": "cloud"}}
        with pytest.raises(BadEnumValue):
            parse_pipeline_spec(json.dumps(doc))

    def test_params_must_be_flat_string_map(self):
        doc = {
            "data": [],
            "pipes": [
                {
                    "inputDataId": ["A"],
                    "transformerType": "T",
                    "outputDataId": "B",
                    "params": {"n": 3},
                }
            ],
        }
        with pytest.raises(BadEnumValue):
            parse_pipeline_spec(json.dumps(doc))


class TestRoundTrip:
    def test_four_pipe_round_trip(self):
        spec = parse_pipeline_spec(json.dumps(FOUR_PIPE_DOC))
        assert parse_pipeline_spec(serialize_pipeline_spec(spec)) == spec

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_random_spec_round_trip(self, seed):
        spec = random_acyclic_spec(random.Random(seed), max_pipes=6)
        assert parse_pipeline_spec(serialize_pipeline_spec(spec)) == spec


class TestValidate:
    def test_four_pipe_spec_with_file_input_is_clean(self):
        spec = parse_pipeline_spec(json.dumps(FOUR_PIPE_DOC))
        report = validate_spec(spec)
        # Hand check: ids unique, single producers, all references declared,
        # the only producerless input is file-kind, every anchor is used.
        assert report.errors == []
        assert report.warnings == []

    def test_duplicate_producer(self):
        spec = make_spec(
            [data_decl("A", kind="file", path="a.csv"), data_decl("X")],
            [pipe_decl(["A"], "T1", "X"), pipe_decl(["A"], "T2", "X")],
        )
        assert any(v.code == "DuplicateProducer" and v.subject == "X" for v in validate_spec(spec).errors)

    def test_dangling_memory_input(self):
        spec = make_spec(
            [data_decl("M"), data_decl("Out")],
            [pipe_decl(["M"], "T", "Out")],
        )
        assert any(v.code == "DanglingInput" and v.subject == "M" for v in validate_spec(spec).errors)

    def test_file_source_without_producer_is_fine(self):
        spec = make_spec(
            [data_decl("F", kind="file", path="f.csv"), data_decl("Out")],
            [pipe_decl(["F"], "T", "Out")],
        )
        assert validate_spec(spec).errors == []

    def test_unused_anchor_warns_but_does_not_block(self):
        spec = make_spec(
            [data_decl("F", kind="file", path="f.csv"), data_decl("Out"), data_decl("Z")],
            [pipe_decl(["F"], "T", "Out")],
        )
        report = validate_spec(spec)
        assert report.errors == []
        assert any(v.code == "UnusedAnchor" and v.subject == "Z" for v in report.warnings)

    def test_self_loop_and_empty_inputs(self):
        spec = make_spec(
            [data_decl("A", kind="file", path="a.csv"), data_decl("B")],
            [pipe_decl(["B", "A"], "T", "B"), pipe_decl([], "T2", "B")],
        )
        codes = {v.code for v in validate_spec(spec).errors}
        assert "SelfLoop" in codes and "EmptyInputs" in codes

    def test_unknown_anchor_reference(self):
        spec = make_spec([data_decl("Out")], [pipe_decl(["Ghost"], "T", "Out")])
        assert any(v.code == "UnknownAnchor" for v in validate_spec(spec).errors)

    def test_duplicate_columns_and_bad_keyfield(self):
        from dpipe.spec_model import EncryptionMode

        spec = make_spec(
            [
                data_decl("A", kind="file", path="a.csv", schema=(("x", "string"), ("x", "int"))),
                data_decl(
                    "B",
                    kind="file",
                    path="b.csv",
                    schema=(("v", "string"),),
                    encryption=EncryptionMode(mode="record", key_field="nope"),
                ),
            ],
            [],
        )
        codes = {v.code for v in validate_spec(spec).errors}
        assert "DuplicateColumn" in codes and "BadKeyField" in codes

    def test_reports_are_deterministic(self):
        spec = make_spec(
            [data_decl("M"), data_decl("Out"), data_decl("Z")],
            [pipe_decl(["M"], "T", "Out")],
        )
        first = validate_spec(spec)
        second = validate_spec(spec)
        assert first.to_dict() == second.to_dict()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_generated_specs_validate_clean(self, seed):
        spec = random_acyclic_spec(random.Random(seed), max_pipes=6)
        assert validate_spec(spec).errors == []
