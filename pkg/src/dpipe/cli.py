"""Command-line entry point.

Subcommands: validate, run, viz, bench, gen-corpus, pipes. Exit codes are a
total function of outcome class: 0 success, 1 domain failure (validation
errors, cycles, pipe failures), 2 usage or setup failure (bad flags, missing
files, malformed specs, unknown transformer types).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from .dataio import DerivedKeyProvider
from .engine import (
    EventLog,
    ExecutionContext,
    ExecutionMode,
    Engine,
    SetupError,
)
from .errors import DpipeError
from .kernel import IMPLEMENTATION
from .metrics import run_publisher, sink_for
from .planner import CycleDetected, build_data_dag, topo_order
from .registry import UnknownTransformerType, check_compatibility
from .spec_model import (
    PipelineSpec,
    SpecParseError,
    ValidationReport,
    parse_pipeline_spec,
    parse_sink,
    validate_spec,
)
from .stdpipes import generate_corpus, standard_registry, write_corpus_ndjson
from .viz import render_dot, watch_render, write_dot_atomic

EXIT_OK = 0
EXIT_DOMAIN_FAILURE = 1
EXIT_USAGE = 2


def _print_report(title: str, report: ValidationReport) -> None:
    print(f"{title}: {len(report.errors)} error(s), {len(report.warnings)} warning(s)")
    for violation in report.errors:
        print(f"  error   {violation.code}: {violation.message}")
    for violation in report.warnings:
        print(f"  warning {violation.code}: {violation.message}")


def _load_spec(path: str) -> PipelineSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecParseError(f"cannot read spec file {path}: {exc}") from exc
    return parse_pipeline_spec(text)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        spec = _load_spec(args.spec)
    except SpecParseError as exc:
        print(f"spec parse failure: {exc}", file=sys.stderr)
        return EXIT_USAGE

    report = validate_spec(spec)
    _print_report("validation", report)
    if not report.ok:
        return EXIT_DOMAIN_FAILURE

    registry = standard_registry()
    compat = check_compatibility(spec, registry)
    _print_report("compatibility", compat)
    if not compat.ok:
        return EXIT_DOMAIN_FAILURE

    dag = build_data_dag(spec)
    try:
        plan = topo_order(dag)
    except CycleDetected as exc:
        print("cycle detected:")
        for cycle in exc.report.cycles:
            print("  " + " -> ".join(cycle))
        return EXIT_DOMAIN_FAILURE
    if args.emit_plan:
        print(json.dumps(plan.to_dict(), indent=2))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        spec = _load_spec(args.spec)
    except SpecParseError as exc:
        print(f"spec parse failure: {exc}", file=sys.stderr)
        return EXIT_USAGE

    report = validate_spec(spec)
    if not report.ok:
        _print_report("validation", report)
        return EXIT_USAGE
    registry = standard_registry()
    compat = check_compatibility(spec, registry)
    if not compat.ok:
        _print_report("compatibility", compat)
        return EXIT_USAGE
    try:
        plan = topo_order(build_data_dag(spec))
    except CycleDetected as exc:
        print(f"setup failure: {exc}", file=sys.stderr)
        return EXIT_USAGE

    metrics_config = spec.metrics
    if args.metrics_sink is not None:
        try:
            sink_kind, sink_path = parse_sink(args.metrics_sink)
        except SpecParseError as exc:
            print(f"bad --metrics-sink: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sink_kind, sink_path = metrics_config.sink_kind, metrics_config.sink_path

    event_log = EventLog(args.event_log) if args.event_log else None
    ctx = ExecutionContext(worker_count=args.workers, key_provider=DerivedKeyProvider())
    mode = ExecutionMode.SEQUENTIAL if args.mode == "sequential" else ExecutionMode.DEPENDENCY_PARALLEL

    publisher = run_publisher(ctx.metrics, metrics_config, sink_for(sink_kind, sink_path))
    try:
        engine = Engine(plan, registry, spec, ctx, event_log)
        handle = engine.start(mode)
        watcher = None
        if args.viz_out:
            watcher = watch_render(handle, interval_millis=200, output_path=args.viz_out)
        run_report = handle.report()
        if watcher is not None:
            watcher.join()
    except (UnknownTransformerType, SetupError, DpipeError) as exc:
        print(f"setup failure: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        publisher.stop()
        if event_log:
            event_log.close()

    print(json.dumps(run_report.to_dict(), indent=2))
    return EXIT_OK if run_report.completed else EXIT_DOMAIN_FAILURE


def cmd_viz(args: argparse.Namespace) -> int:
    try:
        spec = _load_spec(args.spec)
    except SpecParseError as exc:
        print(f"spec parse failure: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = validate_spec(spec)
    if not report.ok:
        _print_report("validation", report)
        return EXIT_DOMAIN_FAILURE
    try:
        plan = topo_order(build_data_dag(spec))
    except CycleDetected as exc:
        print(f"cycle detected: {exc}", file=sys.stderr)
        return EXIT_DOMAIN_FAILURE
    text = render_dot(plan, spec)
    if args.viz_out:
        write_dot_atomic(text, args.viz_out)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        report = bench_mod.run_benchmark(
            records=args.records,
            network_delay_ms=args.network_delay,
            compute_delay_ms=args.compute_delay,
            workers=args.workers,
            repeats=args.repeat,
            seed=args.seed,
        )
    except ValueError as exc:
        print(f"bad benchmark parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        for line in report.summary_lines():
            print(line)
    return EXIT_OK


def cmd_gen_corpus(args: argparse.Namespace) -> int:
    langs = [code.strip() for code in args.langs.split(",") if code.strip()]
    try:
        docs = generate_corpus(args.docs, langs, seed=args.seed, dup_rate=args.dup_rate)
    except ValueError as exc:
        print(f"bad corpus parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_corpus_ndjson(args.out, docs)
    print(f"wrote {len(docs)} documents to {args.out}")
    return EXIT_OK


def cmd_pipes(_args: argparse.Namespace) -> int:
    registry = standard_registry()
    print(f"registered pipes ({IMPLEMENTATION} kernel):")
    for name in registry.names():
        contract = registry.resolve(name).contract
        arity = "variadic" if contract.input_arity is None else str(contract.input_arity)
        params = ", ".join(
            f"{p.name}{'*' if p.required else ''}"
            + (f"={p.default}" if p.default is not None else "")
            for p in contract.param_specs
        )
        print(f"  {name}  inputs={arity}  params=[{params}]")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpipe", description="Declarative data-pipeline engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_spec_arg(p: argparse.ArgumentParser) -> None:
        p.add_argument("--spec", required=True, help="path to the pipeline spec JSON")

    p_validate = sub.add_parser("validate", help="parse, validate, and plan a spec")
    add_spec_arg(p_validate)
    p_validate.add_argument("--emit-plan", action="store_true", help="print the execution plan JSON")
    p_validate.set_defaults(fn=cmd_validate)

    p_run = sub.add_parser("run", help="execute a pipeline spec")
    add_spec_arg(p_run)
    p_run.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p_run.add_argument("--mode", choices=["sequential", "parallel"], default="sequential")
    p_run.add_argument("--event-log", default=None, help="write NDJSON state transitions here")
    p_run.add_argument(
        "--metrics-sink", default=None, help="stdout, null, or file:<path> (overrides the spec)"
    )
    p_run.add_argument("--viz-out", default=None, help="live DOT rendering target")
    p_run.set_defaults(fn=cmd_run)

    p_viz = sub.add_parser("viz", help="render a spec's pipeline DAG as DOT")
    add_spec_arg(p_viz)
    p_viz.add_argument("--viz-out", default=None, help="output path (stdout when omitted)")
    p_viz.set_defaults(fn=cmd_viz)

    p_bench = sub.add_parser("bench", help="embedded vs simulated-remote model scoring")
    p_bench.add_argument("--records", type=int, default=500)
    p_bench.add_argument("--network-delay", type=int, default=20, help="per-call wait, ms")
    p_bench.add_argument("--compute-delay", type=int, default=5, help="per-record busy work, ms")
    p_bench.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p_bench.add_argument("--repeat", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--json", action="store_true")
    p_bench.set_defaults(fn=cmd_bench)

    p_gen = sub.add_parser("gen-corpus", help="generate a labeled synthetic corpus")
    p_gen.add_argument("--docs", type=int, required=True)
    p_gen.add_argument("--langs", default="en,de,fr")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--dup-rate", type=float, default=0.05)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(fn=cmd_gen_corpus)

    p_pipes = sub.add_parser("pipes", help="list registered standard pipes")
    p_pipes.set_defaults(fn=cmd_pipes)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except DpipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
