"""Control-flow graph over a function's basic blocks."""

import logging
from dataclasses import dataclass

import networkx as nx

from .model import BasicBlock, Function

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CFG:
    """Blocks of one function with a deterministic reverse-postorder numbering.

    `graph` is a networkx DiGraph keyed by block label. Unreachable blocks
    are kept and numbered after every reachable block, in program order.
    """

    function: Function
    graph: nx.DiGraph
    rpo: tuple[str, ...]
    unreachable: frozenset[str]

    @property
    def entry(self) -> str:
        return self.function.entry.label

    def block(self, label: str) -> BasicBlock:
        return self.function.block(label)

    def rpo_index(self, label: str) -> int:
        return self.rpo.index(label)

    def successors(self, label: str) -> list[str]:
        return list(self.graph.successors(label))

    def predecessors(self, label: str) -> list[str]:
        return list(self.graph.predecessors(label))

    def is_back_edge(self, src: str, dst: str) -> bool:
        return self.rpo_index(dst) <= self.rpo_index(src)


def build_cfg(fn: Function) -> CFG:
    graph = nx.DiGraph()
    for block in fn.blocks:
        graph.add_node(block.label)
    for block in fn.blocks:
        for target in block.terminator.labels:
            graph.add_edge(block.label, target)

    # networkx visits successors in insertion order, so the numbering is stable
    postorder = list(nx.dfs_postorder_nodes(graph, source=fn.entry.label))
    rpo = list(reversed(postorder))
    reached = set(rpo)
    unreachable = [b.label for b in fn.blocks if b.label not in reached]
    if unreachable:
        logger.warning("Function %s has unreachable blocks: %s", fn.name, ", ".join(unreachable))
    return CFG(fn, graph, tuple(rpo + unreachable), frozenset(unreachable))
