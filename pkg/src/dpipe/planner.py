"""Data-dependency DAG derivation and deterministic execution planning.

The DAG is bipartite: anchor nodes (by id) and pipe nodes (by declaration
index), with anchor->pipe edges for inputs and pipe->anchor edges for
outputs. Planning is pure; identical specs yield identical plans.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import DpipeError
from .spec_model import PipeDeclaration, PipelineSpec


def anchor_node(anchor_id: str) -> str:
    return f"anchor:{anchor_id}"


def pipe_node(index: int) -> str:
    return f"pipe:{index}"


@dataclass(frozen=True)
class AnchorInfo:
    id: str
    producer: int | None
    consumers: tuple[int, ...]


@dataclass(frozen=True)
class DataDag:
    """Bipartite anchor/pipe graph mirroring the declared input/output edges."""

    anchors: dict[str, AnchorInfo]
    pipes: tuple[PipeDeclaration, ...]

    def consumer_count(self, anchor_id: str) -> int:
        return len(self.anchors[anchor_id].consumers)

    def edges(self) -> list[tuple[str, str]]:
        """All directed edges, as (source node, target node) label pairs."""
        out = []
        for index, pipe in enumerate(self.pipes):
            for anchor_id in dict.fromkeys(pipe.input_data_ids):
                out.append((anchor_node(anchor_id), pipe_node(index)))
            out.append((pipe_node(index), anchor_node(pipe.output_data_id)))
        return out

    def pipe_dependencies(self, index: int) -> set[int]:
        """Indices of pipes whose output this pipe consumes."""
        deps = set()
        for anchor_id in self.pipes[index].input_data_ids:
            producer = self.anchors[anchor_id].producer
            if producer is not None:
                deps.add(producer)
        return deps

    def pipe_dependents(self, index: int) -> set[int]:
        """Indices of pipes that consume this pipe's output."""
        return set(self.anchors[self.pipes[index].output_data_id].consumers)


@dataclass(frozen=True)
class ExecutionPlan:
    """A total pipe order plus static independence groups.

    ``order[k]`` is the pipe with execution index ``k``; ``decl_order[k]`` is
    that pipe's declaration index. ``parallel_groups`` holds execution
    indices whose members have no transitive data dependency on one another
    (the successive ready sets of a level-by-level Kahn pass).
    """

    order: tuple[tuple[int, PipeDeclaration], ...]
    decl_order: tuple[int, ...]
    dag: DataDag
    parallel_groups: tuple[frozenset[int], ...]

    def pipe_indices(self) -> tuple[int, ...]:
        """Declaration indices in execution order."""
        return self.decl_order

    def to_dict(self) -> dict:
        order_entries = []
        for exec_index, pipe in self.order:
            order_entries.append(
                {
                    "executionIndex": exec_index,
                    "pipeIndex": self.decl_order[exec_index],
                    "transformerType": pipe.transformer_type,
                    "inputDataId": list(pipe.input_data_ids),
                    "outputDataId": pipe.output_data_id,
                }
            )
        return {
            "order": order_entries,
            "parallelGroups": [sorted(group) for group in self.parallel_groups],
        }


@dataclass(frozen=True)
class CycleReport:
    """Closed walks found in the DAG; empty iff the graph is acyclic."""

    cycles: tuple[tuple[str, ...], ...]

    @property
    def empty(self) -> bool:
        return not self.cycles


class CycleDetected(DpipeError):
    def __init__(self, report: CycleReport):
        pretty = "; ".join(" -> ".join(cycle) for cycle in report.cycles)
        super().__init__(f"pipeline graph contains a cycle: {pretty}")
        self.report = report


def build_data_dag(spec: PipelineSpec) -> DataDag:
    """Derive the bipartite data DAG from a validated spec."""
    anchors: dict[str, AnchorInfo] = {}
    producer: dict[str, int] = {}
    consumers: dict[str, list[int]] = {decl.id: [] for decl in spec.data}
    for index, pipe in enumerate(spec.pipes):
        producer[pipe.output_data_id] = index
        for anchor_id in dict.fromkeys(pipe.input_data_ids):
            consumers[anchor_id].append(index)
    for decl in spec.data:
        anchors[decl.id] = AnchorInfo(
            id=decl.id,
            producer=producer.get(decl.id),
            consumers=tuple(consumers[decl.id]),
        )
    return DataDag(anchors=anchors, pipes=spec.pipes)


def _dependency_maps(dag: DataDag) -> tuple[list[set[int]], list[set[int]]]:
    n = len(dag.pipes)
    deps = [dag.pipe_dependencies(i) for i in range(n)]
    dependents: list[set[int]] = [set() for _ in range(n)]
    for i, dep_set in enumerate(deps):
        for d in dep_set:
            dependents[d].add(i)
    return deps, dependents


def topo_order(dag: DataDag) -> ExecutionPlan:
    """Kahn's algorithm with the ready set drained in declaration-index order.

    The returned order is the unique lexicographically-least valid
    topological order under declaration-index comparison. Independence
    groups are computed separately as the successive ready levels.

    Raises:
        CycleDetected: when the graph is cyclic; the exception carries the
            :class:`CycleReport` from :func:`detect_cycles`.
    """
    n = len(dag.pipes)
    deps, dependents = _dependency_maps(dag)
    indegree = [len(d) for d in deps]

    ready = [i for i in range(n) if indegree[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    remaining = indegree[:]
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in sorted(dependents[i]):
            remaining[j] -= 1
            if remaining[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != n:
        raise CycleDetected(detect_cycles(dag))

    # Level decomposition: each group is one ready set of a breadth pass.
    groups: list[frozenset[int]] = []
    remaining = indegree[:]
    level = sorted(i for i in range(n) if remaining[i] == 0)
    decl_to_exec = {decl_index: exec_index for exec_index, decl_index in enumerate(order)}
    while level:
        groups.append(frozenset(decl_to_exec[i] for i in level))
        next_level = []
        for i in level:
            for j in dependents[i]:
                remaining[j] -= 1
                if remaining[j] == 0:
                    next_level.append(j)
        level = sorted(next_level)

    plan_order = tuple((exec_index, dag.pipes[decl_index]) for exec_index, decl_index in enumerate(order))
    return ExecutionPlan(
        order=plan_order, decl_order=tuple(order), dag=dag, parallel_groups=tuple(groups)
    )


def detect_cycles(dag: DataDag) -> CycleReport:
    """Find cycles in the bipartite graph by iterative DFS.

    Returns an empty report iff the graph is acyclic; otherwise at least one
    closed walk is listed with its full alternating anchor/pipe sequence.
    """
    adjacency: dict[str, list[str]] = {}
    for anchor_id in dag.anchors:
        adjacency[anchor_node(anchor_id)] = []
    for index, pipe in enumerate(dag.pipes):
        adjacency[pipe_node(index)] = [anchor_node(pipe.output_data_id)]
    for index, pipe in enumerate(dag.pipes):
        for anchor_id in dict.fromkeys(pipe.input_data_ids):
            adjacency[anchor_node(anchor_id)].append(pipe_node(index))

    cycles: list[tuple[str, ...]] = []
    seen_cycles: set[frozenset[str]] = set()
    color: dict[str, int] = {node: 0 for node in adjacency}  # 0 white, 1 on stack, 2 done

    for root in adjacency:
        if color[root] != 0:
            continue
        stack: list[tuple[str, int]] = [(root, 0)]
        path: list[str] = []
        while stack:
            node, edge_pos = stack.pop()
            if edge_pos == 0:
                color[node] = 1
                path.append(node)
            targets = adjacency[node]
            advanced = False
            for pos in range(edge_pos, len(targets)):
                target = targets[pos]
                if color[target] == 1:
                    start = path.index(target)
                    cycle = tuple(path[start:]) + (target,)
                    key = frozenset(cycle)
                    if key not in seen_cycles:
                        seen_cycles.add(key)
                        cycles.append(cycle)
                elif color[target] == 0:
                    stack.append((node, pos + 1))
                    stack.append((target, 0))
                    advanced = True
                    break
            if not advanced:
                color[node] = 2
                path.pop()
    return CycleReport(cycles=tuple(cycles))
