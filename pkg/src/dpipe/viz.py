"""GraphViz DOT rendering of the pipeline: structure, locations, progress.

Color semantics: anchors are filled by location kind (file=orange,
memory=yellow, table=blue) with a dotted orange outline when a memory anchor
is currently cached; pipes are filled by run state (completed=green,
running=yellow, not started=white, failed=red); per-pipe metric blocks are
purple nodes tagged "info". Rendering is a pure function of its inputs and
emits nodes in sorted order, so identical inputs give identical bytes.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from pathlib import Path

from .engine import AnchorState, PipeRunState, PipeStatus, RunHandle
from .metrics import MetricSnapshot, pipe_metric
from .planner import ExecutionPlan
from .spec_model import PipelineSpec

log = logging.getLogger(__name__)

ANCHOR_FILL = {"file": "orange", "memory": "yellow", "table": "blue"}
PIPE_FILL = {
    PipeStatus.NOT_STARTED: "white",
    PipeStatus.RUNNING: "yellow",
    PipeStatus.COMPLETED: "green",
    PipeStatus.FAILED: "red",
}
METRIC_FILL = "purple"


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _attr_list(attrs: dict[str, str]) -> str:
    return "[" + ", ".join(f"{k}={_quote(v)}" for k, v in attrs.items()) + "]"


def render_dot(
    plan: ExecutionPlan,
    spec: PipelineSpec,
    pipe_states: dict[int, PipeRunState] | None = None,
    anchor_states: dict[str, AnchorState] | None = None,
    metric_snapshot: MetricSnapshot | None = None,
) -> str:
    """Render the plan as DOT text.

    ``pipe_states`` maps declaration index to run state (missing entries are
    NotStarted); ``anchor_states`` drives the cached-in-memory outline;
    ``metric_snapshot`` attaches an info block to pipes with published
    ``pipe.<type>.*`` metrics.
    """
    pipe_states = pipe_states or {}
    anchor_states = anchor_states or {}
    declared = {decl.id: decl for decl in spec.data}
    exec_index_of = {decl_index: exec_index for exec_index, decl_index in enumerate(plan.decl_order)}

    lines = ["digraph pipeline {", "  rankdir=LR;"]

    for anchor_id in sorted(plan.dag.anchors):
        decl = declared[anchor_id]
        attrs = {
            "shape": "box",
            "style": "filled",
            "fillcolor": ANCHOR_FILL[decl.location.kind],
        }
        state = anchor_states.get(anchor_id)
        if decl.location.kind == "memory" and state is AnchorState.MATERIALIZED:
            attrs["style"] = "filled,dotted"
            attrs["color"] = "orange"
        lines.append(f"  {_quote('anchor:' + anchor_id)} {_attr_list(attrs)};")

    for decl_index in sorted(exec_index_of):
        pipe = spec.pipes[decl_index]
        state = pipe_states.get(decl_index)
        status = state.status if state is not None else PipeStatus.NOT_STARTED
        label = f"[{exec_index_of[decl_index]}] {pipe.transformer_type}"
        attrs = {
            "shape": "box",
            "style": "filled,rounded",
            "fillcolor": PIPE_FILL[status],
            "label": label,
        }
        lines.append(f"  {_quote(f'pipe:{decl_index}')} {_attr_list(attrs)};")

    if metric_snapshot is not None:
        for decl_index in sorted(exec_index_of):
            pipe = spec.pipes[decl_index]
            prefix = pipe_metric(pipe.transformer_type, "")
            entries = [
                f"{name[len(prefix):]}={value:g}"
                for name, value in metric_snapshot.entries
                if name.startswith(prefix)
            ]
            if not entries:
                continue
            # The label keeps literal \n escapes for DOT line breaks, so it is
            # assembled without the quote-escaping helper.
            label = "info\\n" + "\\n".join(entries)
            node = _quote(f"metrics:{decl_index}")
            attr_text = (
                f'[shape="note", style="filled", fillcolor="{METRIC_FILL}", '
                f'fontcolor="white", label="{label}"]'
            )
            lines.append(f"  {node} {attr_text};")
            lines.append(f"  {_quote(f'pipe:{decl_index}')} -> {node} [style=dashed];")

    for source, target in sorted(plan.dag.edges()):
        lines.append(f"  {_quote(source)} -> {_quote(target)};")

    lines.append("}")
    return "\n".join(lines) + "\n"


def write_dot_atomic(text: str, output_path: str | os.PathLike) -> None:
    """Write DOT text with an atomic replace so readers never see a torn file."""
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class Watcher:
    """Re-renders a live run's DOT file every interval plus once at the end."""

    def __init__(self, handle: RunHandle, interval_millis: int, output_path: str):
        self._handle = handle
        self._interval_s = max(interval_millis, 1) / 1000.0
        self._output_path = output_path
        self._thread = threading.Thread(target=self._run, name="dpipe-viz", daemon=True)

    def _render_once(self) -> None:
        try:
            text = render_dot(
                self._handle.plan,
                self._handle.spec,
                self._handle.pipe_states(),
                self._handle.anchor_states(),
                self._handle.metric_snapshot(),
            )
            write_dot_atomic(text, self._output_path)
        except OSError as exc:
            log.warning("viz write to %s failed: %s", self._output_path, exc)

    def _run(self) -> None:
        while not self._handle.done():
            self._render_once()
            time.sleep(self._interval_s)
        self._render_once()

    def start(self) -> "Watcher":
        self._thread.start()
        return self

    def join(self, timeout: float | None = None) -> None:
        self._thread.join(timeout)


def watch_render(handle: RunHandle, interval_millis: int, output_path: str) -> Watcher:
    """Start live rendering of a run; the final state is always written."""
    return Watcher(handle, interval_millis, output_path).start()
