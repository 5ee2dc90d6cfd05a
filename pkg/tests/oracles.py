"""Independent brute-force reference implementations.

These back every derived expected value in the suite. They are deliberately
naive (exhaustive enumeration, linear scans) and share no code with the
modules they check: pipes are plain (inputs, output) tuples here, not
planner or engine objects.
"""

from __future__ import annotations

from itertools import permutations


class TooLarge(Exception):
    pass


PipeEdges = list[tuple[tuple[str, ...], str]]  # per pipe: (input anchor ids, output anchor id)


def pipe_dependency_edges(pipes: PipeEdges) -> dict[int, set[int]]:
    """Map each pipe index to the set of pipe indices it depends on."""
    producer = {output: i for i, (_, output) in enumerate(pipes)}
    return {
        i: {producer[a] for a in inputs if a in producer}
        for i, (inputs, _) in enumerate(pipes)
    }


def oracle_topo_orders(pipes: PipeEdges, limit: int = 8) -> set[tuple[int, ...]]:
    """Every valid topological order of the pipe nodes, by exhaustive check."""
    n = len(pipes)
    if n > limit:
        raise TooLarge(f"{n} pipes exceeds the enumeration limit of {limit}")
    deps = pipe_dependency_edges(pipes)
    orders = set()
    for candidate in permutations(range(n)):
        position = {pipe: pos for pos, pipe in enumerate(candidate)}
        if all(position[d] < position[i] for i in range(n) for d in deps[i]):
            orders.add(candidate)
    return orders


def oracle_is_acyclic(pipes: PipeEdges) -> bool:
    """Acyclicity via longest-path relaxation (no DFS shared with the planner)."""
    n = len(pipes)
    deps = pipe_dependency_edges(pipes)
    # Bellman-Ford style: if n rounds still relax, there is a cycle.
    level = {i: 0 for i in range(n)}
    for round_no in range(n + 1):
        changed = False
        for i in range(n):
            for d in deps[i]:
                if level[i] <= level[d]:
                    level[i] = level[d] + 1
                    changed = True
        if not changed:
            return True
    return False


def oracle_dedup(records: list[tuple], key_indices: list[int]) -> list[tuple]:
    """First occurrence per key tuple, scanning in input order."""
    seen = set()
    survivors = []
    for record in records:
        key = tuple(record[i] for i in key_indices)
        if key not in seen:
            seen.add(key)
            survivors.append(record)
    return survivors


def oracle_language_hits(tokens: list[str], profiles: dict[str, frozenset[str]]) -> str:
    """Stopword hit counting with explicit sort-based tie-breaking."""
    counts = {code: sum(1 for t in tokens if t in words) for code, words in profiles.items()}
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    best_code, best_hits = ranked[0]
    return best_code if best_hits > 0 else "und"


def oracle_dependency_closure(pipes: PipeEdges, failed_pipe: int) -> set[int]:
    """Pipes transitively reachable from the failed pipe through its outputs."""
    consumers: dict[str, set[int]] = {}
    for i, (inputs, _) in enumerate(pipes):
        for anchor in inputs:
            consumers.setdefault(anchor, set()).add(i)
    closure: set[int] = set()
    frontier = [failed_pipe]
    while frontier:
        current = frontier.pop()
        output = pipes[current][1]
        for consumer in consumers.get(output, ()):
            if consumer not in closure:
                closure.add(consumer)
                frontier.append(consumer)
    return closure


def oracle_latency_ratio(network_delay_ms: float, compute_delay_ms: float) -> float:
    """Closed-form embedded/remote throughput ratio for serial per-record calls."""
    return (network_delay_ms + compute_delay_ms) / compute_delay_ms
