"""Shared fixtures: spec builders, stub pipes, and random DAG generators."""

from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# Filled by the acceptance tests; echoed after the run so the per-criterion
# lines survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from dpipe.dataio import Dataset
from dpipe.registry import Pipe, PipeContract, PipeFactory, PipeRegistry, VARIADIC
from dpipe.spec_model import (
    DataDeclaration,
    EncryptionMode,
    Location,
    MetricsConfig,
    PipeDeclaration,
    PipelineSpec,
)

STRING_SCHEMA = (("v", "string"),)


def data_decl(
    anchor_id: str,
    kind: str = "memory",
    path: str | None = None,
    fmt: str | None = None,
    schema=STRING_SCHEMA,
    persist: bool = False,
    encryption: EncryptionMode = EncryptionMode(),
) -> DataDeclaration:
    if kind != "memory" and fmt is None:
        fmt = "csv"
    return DataDeclaration(
        id=anchor_id,
        location=Location(kind=kind, path=path),
        format=fmt if kind != "memory" else None,
        schema=tuple(schema),
        encryption=encryption,
        persist=persist,
    )


def pipe_decl(inputs, transformer: str, output: str, params: dict | None = None, parallelism=None) -> PipeDeclaration:
    return PipeDeclaration(
        input_data_ids=tuple(inputs),
        transformer_type=transformer,
        output_data_id=output,
        params=tuple((params or {}).items()),
        parallelism=parallelism,
    )


def make_spec(data, pipes, metrics: MetricsConfig = MetricsConfig()) -> PipelineSpec:
    return PipelineSpec(data=tuple(data), pipes=tuple(pipes), metrics=metrics)


# ---------------------------------------------------------------------------
# The four-pipe ML pipeline used throughout: preprocess and feature
# generation fan out of the input, prediction joins them, post-processing
# joins input and prediction.
# ---------------------------------------------------------------------------

PAPER_PIPES = [
    (("InputData",), "PreprocessTransformer", "IntermediateData"),
    (("InputData",), "FeatureGenerationTransformer", "FeatureData"),
    (("IntermediateData", "FeatureData"), "ModelPredictionTransformer", "PredictionData"),
    (("InputData", "PredictionData"), "PostProcessTransformer", "OutputData"),
]

PAPER_ANCHORS = ["InputData", "IntermediateData", "FeatureData", "PredictionData", "OutputData"]


def paper_spec(input_kind: str = "file", input_path: str = "input.csv") -> PipelineSpec:
    data = []
    for anchor in PAPER_ANCHORS:
        if anchor == "InputData":
            data.append(data_decl(anchor, kind=input_kind, path=input_path))
        else:
            data.append(data_decl(anchor, kind="memory"))
    pipes = [pipe_decl(inputs, t, output) for inputs, t, output in PAPER_PIPES]
    return make_spec(data, pipes)


@pytest.fixture
def four_pipe_spec() -> PipelineSpec:
    return paper_spec()


# ---------------------------------------------------------------------------
# Stub pipes: identity / concat / failing, all over the one-column schema.
# ---------------------------------------------------------------------------


class ConcatPipe(Pipe):
    """Concatenates every input's records; partition-parallel identity map."""

    def transform(self, inputs, ctx):
        first = inputs[0]
        mapped_parts = []
        for ds in inputs:
            mapped_parts.extend(ctx.map_partitions(lambda _i, records: records, ds))
        return Dataset(schema=first.schema, partitions=tuple(mapped_parts))


class FailingPipe(Pipe):
    def transform(self, inputs, ctx):
        raise RuntimeError("injected failure")


def stub_factory(type_name: str, failing: bool = False) -> PipeFactory:
    return PipeFactory(
        contract=PipeContract(
            type_name=type_name,
            input_arity=VARIADIC,
            input_schema_requirements=((),),
            output_schema_fn=lambda schemas, params: tuple(schemas[0]),
        ),
        build=lambda params, ctx: FailingPipe() if failing else ConcatPipe(),
    )


def stub_registry(types: list[str], failing: set[str] | None = None) -> PipeRegistry:
    registry = PipeRegistry()
    failing = failing or set()
    for type_name in types:
        registry.register(stub_factory(type_name, failing=type_name in failing))
    return registry


@pytest.fixture
def paper_registry() -> PipeRegistry:
    return stub_registry([t for _, t, _ in PAPER_PIPES])


# ---------------------------------------------------------------------------
# Random spec generation
# ---------------------------------------------------------------------------


def random_acyclic_spec(
    rng: random.Random,
    max_pipes: int = 8,
    source_kind: str = "file",
    source_dir: str = "",
) -> PipelineSpec:
    """A random runnable spec: forward-only edges, file-kind external sources.

    Every pipe consumes 1-3 anchors drawn from the external sources and the
    outputs of earlier pipes, and produces a fresh memory anchor; transformer
    types are Stub0..StubN for registration with :func:`stub_registry`.
    """
    n_pipes = rng.randint(1, max_pipes)
    n_sources = rng.randint(1, 3)
    data = []
    available = []
    for s in range(n_sources):
        anchor = f"src{s}"
        path = f"{source_dir}/{anchor}.csv" if source_dir else f"{anchor}.csv"
        data.append(data_decl(anchor, kind=source_kind, path=path))
        available.append(anchor)
    pipes = []
    for i in range(n_pipes):
        k = rng.randint(1, min(3, len(available)))
        inputs = rng.sample(available, k)
        output = f"out{i}"
        data.append(data_decl(output, kind="memory"))
        pipes.append(pipe_decl(inputs, f"Stub{i}", output))
        available.append(output)
    if rng.random() < 0.3:
        data.append(data_decl("unused", kind="memory"))
    return make_spec(data, pipes)


def spec_pipe_edges(spec: PipelineSpec):
    """Primitive (inputs, output) tuples for the oracles."""
    return [(tuple(p.input_data_ids), p.output_data_id) for p in spec.pipes]


def _add_input(pipe: PipeDeclaration, anchor_id: str) -> PipeDeclaration:
    return PipeDeclaration(
        input_data_ids=pipe.input_data_ids + (anchor_id,),
        transformer_type=pipe.transformer_type,
        output_data_id=pipe.output_data_id,
        params=pipe.params,
        parallelism=pipe.parallelism,
    )


def plant_cycle(rng: random.Random, spec: PipelineSpec) -> PipelineSpec:
    """Insert a back-edge: an ancestor pipe consumes a descendant's output.

    When the spec has no dependency chain at all, two independent pipes are
    cross-wired into a two-cycle instead.
    """
    n = len(spec.pipes)
    pipes = list(spec.pipes)
    producer = {p.output_data_id: i for i, p in enumerate(pipes)}

    dependents: dict[int, set[int]] = {i: set() for i in range(n)}
    for i, pipe in enumerate(pipes):
        for anchor in pipe.input_data_ids:
            if anchor in producer:
                dependents[producer[anchor]].add(i)
    closure: dict[int, set[int]] = {}
    for i in range(n - 1, -1, -1):
        out = set(dependents[i])
        for d in dependents[i]:
            out |= closure.get(d, set())
        closure[i] = out

    candidates = [i for i in range(n) if closure[i]]
    if candidates:
        victim = rng.choice(candidates)
        source = rng.choice(sorted(closure[victim]))
        pipes[victim] = _add_input(pipes[victim], pipes[source].output_data_id)
    elif n >= 2:
        a, b = rng.sample(range(n), 2)
        pipes[a] = _add_input(pipes[a], pipes[b].output_data_id)
        pipes[b] = _add_input(pipes[b], pipes[a].output_data_id)
    else:
        # Single independent pipe: wire it to itself through a helper pipe.
        helper_out = "cycle_helper"
        data = list(spec.data) + [data_decl(helper_out, kind="memory")]
        pipes.append(pipe_decl([pipes[0].output_data_id], "StubCycle", helper_out))
        pipes[0] = _add_input(pipes[0], helper_out)
        return PipelineSpec(data=tuple(data), pipes=tuple(pipes), metrics=spec.metrics)
    return PipelineSpec(data=spec.data, pipes=tuple(pipes), metrics=spec.metrics)


def write_source_files(spec: PipelineSpec, records_per_source: int = 6, seed: int = 0) -> None:
    """Create backing files for every file-kind anchor with no producer."""
    from dpipe.dataio import write_dataset

    rng = random.Random(seed)
    produced = {p.output_data_id for p in spec.pipes}
    for decl in spec.data:
        if decl.location.kind != "file" or decl.id in produced:
            continue
        records = [(f"{decl.id}-{rng.randint(0, 999)}-{i}",) for i in range(records_per_source)]
        ds = Dataset.from_records(decl.schema, records)
        write_dataset(ds, decl)
