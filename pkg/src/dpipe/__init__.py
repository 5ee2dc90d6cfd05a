"""dpipe: a single-node declarative data-pipeline engine.

Pipelines are declared as data anchors and pipes in a JSON spec; the engine
derives the data-dependency DAG, plans a deterministic execution order, runs
pipes over an in-memory partitioned store with refcounted caching, publishes
metrics asynchronously, and renders live GraphViz views.
"""

from .kernel import IMPLEMENTATION as KERNEL_IMPLEMENTATION

__version__ = "0.1.0"

__all__ = ["KERNEL_IMPLEMENTATION", "__version__"]
