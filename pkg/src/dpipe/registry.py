"""Runtime discovery of pipe implementations and contract compatibility checks.

Pipes register by transformerType name at startup; specs resolve them at plan
time. A contract pins a pipe's input arity, required input columns, computed
output schema, and parameter spec -- compatibility checking makes the declared
anchors authoritative: the contract's computed output schema must equal the
declared schema of the output anchor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Mapping, Sequence

from .errors import DpipeError
from .spec_model import PipelineSpec, Schema, ValidationReport

if TYPE_CHECKING:
    from .dataio import Dataset
    from .engine import PipeRunContext

VARIADIC = None  # input_arity value for pipes accepting any number of inputs


class RegistryError(DpipeError):
    pass


class DuplicateTypeName(RegistryError):
    pass


class UnknownTransformerType(RegistryError):
    def __init__(self, type_name: str):
        super().__init__(f"no pipe registered under transformerType '{type_name}'")
        self.type_name = type_name


class ContractViolation(DpipeError):
    """Raised by outputSchemaFn implementations on unusable inputs/params."""


@dataclass(frozen=True)
class ParamSpec:
    name: str
    required: bool = False
    default: str | None = None


@dataclass(frozen=True)
class PipeContract:
    """Static interface of a pipe type.

    ``input_schema_requirements`` lists required (column, type) pairs per
    input position; an empty tuple accepts any schema. For variadic pipes
    the first requirements entry applies to every input.
    """

    type_name: str
    input_arity: int | None = 1
    input_schema_requirements: tuple[tuple[tuple[str, str], ...], ...] = ((),)
    output_schema_fn: Callable[[Sequence[Schema], Mapping[str, str]], Schema] = (
        lambda schemas, params: schemas[0]
    )
    param_specs: tuple[ParamSpec, ...] = ()

    def resolve_params(self, params: Mapping[str, str]) -> dict[str, str]:
        """Apply defaults; assumes presence/unknown checks already ran."""
        resolved = {
            spec.name: spec.default for spec in self.param_specs if spec.default is not None
        }
        resolved.update(params)
        return resolved


class Pipe:
    """Base class for pipe instances: one transform, optional lane warmup.

    Subclasses implement :meth:`transform`; deterministic transforms given
    identical inputs and params are the contract for every standard pipe.
    Cleanup hooks registered during the run execute right after the pipe's
    Completed transition.
    """

    def __init__(self) -> None:
        self.cleanup_hooks: list[Callable[[], None]] = []

    def register_cleanup(self, hook: Callable[[], None]) -> None:
        self.cleanup_hooks.append(hook)

    def warmup(self, ctx: "PipeRunContext") -> None:
        """Per-lane initialization hook; runs once on every worker lane."""

    def transform(self, inputs: "list[Dataset]", ctx: "PipeRunContext") -> "Dataset":
        raise NotImplementedError


@dataclass(frozen=True)
class PipeFactory:
    contract: PipeContract
    build: Callable[[Mapping[str, str], object], Pipe] = field(repr=False)


class PipeRegistry:
    """Name-keyed pipe factories; write-at-startup, read-many thereafter."""

    def __init__(self) -> None:
        self._factories: dict[str, PipeFactory] = {}

    def register(self, factory: PipeFactory) -> None:
        name = factory.contract.type_name
        if name in self._factories:
            raise DuplicateTypeName(f"transformerType '{name}' is already registered")
        self._factories[name] = factory

    def resolve(self, type_name: str) -> PipeFactory:
        try:
            return self._factories[type_name]
        except KeyError:
            raise UnknownTransformerType(type_name) from None

    def names(self) -> list[str]:
        return sorted(self._factories)

    def __contains__(self, type_name: str) -> bool:
        return type_name in self._factories


def register_pipe_factory(registry: PipeRegistry, factory: PipeFactory) -> None:
    registry.register(factory)


def resolve(registry: PipeRegistry, type_name: str) -> PipeFactory:
    return registry.resolve(type_name)


def check_compatibility(spec: PipelineSpec, registry: PipeRegistry) -> ValidationReport:
    """Verify every pipe declaration against its registered contract.

    Checks, per pipe: the type resolves; input count matches arity; each
    input anchor's declared schema contains the required columns; the
    contract's computed output schema equals the declared output schema
    (name+type, order-insensitive); params satisfy the param spec.
    """
    report = ValidationReport()
    declared = {decl.id: decl for decl in spec.data}
    for index, pipe in enumerate(spec.pipes):
        subject = f"pipes[{index}]"
        try:
            factory = registry.resolve(pipe.transformer_type)
        except UnknownTransformerType:
            report.error(
                "UnknownTransformerType",
                f"pipe {index} references unavailable type '{pipe.transformer_type}'",
                subject,
            )
            continue
        contract = factory.contract

        n_inputs = len(pipe.input_data_ids)
        if contract.input_arity is not VARIADIC and n_inputs != contract.input_arity:
            report.error(
                "ArityMismatch",
                f"pipe {index} ({pipe.transformer_type}) wired with {n_inputs} inputs, "
                f"contract takes {contract.input_arity}",
                subject,
            )
            continue

        input_schemas: list[Schema] = []
        missing_anchor = False
        for position, anchor_id in enumerate(pipe.input_data_ids):
            if anchor_id not in declared:
                missing_anchor = True
                continue
            schema = declared[anchor_id].schema
            input_schemas.append(schema)
            if contract.input_schema_requirements:
                req_index = min(position, len(contract.input_schema_requirements) - 1)
                required = contract.input_schema_requirements[req_index]
            else:
                required = ()
            columns = set(schema)
            for need in required:
                if need not in columns:
                    report.error(
                        "MissingRequiredColumn",
                        f"pipe {index} ({pipe.transformer_type}) input '{anchor_id}' lacks "
                        f"required column {need[0]}:{need[1]}",
                        anchor_id,
                    )
        if missing_anchor:
            continue

        params = pipe.params_dict()
        known = {p.name for p in contract.param_specs}
        for name in params:
            if name not in known:
                report.error(
                    "UnknownParam",
                    f"pipe {index} ({pipe.transformer_type}) sets unknown param '{name}'",
                    subject,
                )
        for param_spec in contract.param_specs:
            if param_spec.required and param_spec.name not in params:
                report.error(
                    "MissingParam",
                    f"pipe {index} ({pipe.transformer_type}) is missing required param "
                    f"'{param_spec.name}'",
                    subject,
                )

        if pipe.output_data_id not in declared:
            continue
        try:
            computed = contract.output_schema_fn(input_schemas, contract.resolve_params(params))
        except ContractViolation as exc:
            report.error("SchemaMismatch", f"pipe {index} ({pipe.transformer_type}): {exc}", subject)
            continue
        declared_schema = declared[pipe.output_data_id].schema
        if set(computed) != set(declared_schema):
            report.error(
                "SchemaMismatch",
                f"pipe {index} ({pipe.transformer_type}) computes output schema "
                f"{sorted(set(computed))}, anchor '{pipe.output_data_id}' declares "
                f"{sorted(set(declared_schema))}",
                pipe.output_data_id,
            )
    return report
