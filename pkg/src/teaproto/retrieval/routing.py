"""Balanced category -> group -> leaf routing tree with greedy descent."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels


@dataclass
class RouteNode:
    label: str
    vector: np.ndarray
    children: list[RouteNode] = field(default_factory=list)
    leaf: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.leaf]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(child.depth() for child in self.children)


@dataclass
class RoutingTree:
    root: RouteNode
    branching: int
    size: int

    def depth(self) -> int:
        return self.root.depth()

    def leaves(self) -> list[str]:
        return self.root.leaves()

    def to_dict(self) -> dict:
        def walk(node: RouteNode) -> dict:
            if node.is_leaf:
                return {"leaf": node.leaf}
            return {"label": node.label, "children": [walk(c) for c in node.children]}

        return {"branching": self.branching, "size": self.size, "depth": self.depth(), "root": walk(self.root)}


def ceil_log(n: int, base: int) -> int:
    """Smallest h with base**h >= n, in exact integer arithmetic."""
    h, cap = 0, 1
    while cap < n:
        cap *= base
        h += 1
    return h


def category_of(name: str, metadata: Mapping[str, str]) -> str:
    cat = metadata.get("category")
    if cat:
        return cat
    return name.split(".", 1)[0]


def build_routing_tree(
    items: Sequence[tuple[str, str, np.ndarray]],
    branching: int,
) -> RoutingTree:
    """Build from ``(name, category, vector)`` triples.

    Items are ordered by (category, name) and cut into contiguous blocks of
    ``branching**(h-1)`` at height h, so same-category components share
    subtrees and every leaf sits at depth <= ceil(log_b n).
    """
    if branching < 2:
        raise ValueError("branching must be >= 2")
    ordered = sorted(items, key=lambda it: (it[1], it[0]))
    n = len(ordered)
    if n == 0:
        raise ValueError("cannot build a routing tree with no components")

    def make(block: Sequence[tuple[str, str, np.ndarray]], height: int) -> RouteNode:
        if len(block) == 1 and height < top:
            name, _, vec = block[0]
            return RouteNode(label=name, vector=vec, leaf=name)
        span = branching ** (height - 1)
        children = [make(block[i : i + span], height - 1) for i in range(0, len(block), span)]
        cats = sorted({it[1] for it in block})
        label = cats[0] if len(cats) == 1 else f"{cats[0]}..{cats[-1]}"
        vector = np.mean(np.stack([it[2] for it in block]), axis=0)
        return RouteNode(label=label, vector=np.ascontiguousarray(vector), children=children)

    top = max(1, ceil_log(n, branching))
    root = make(ordered, top)
    root.label = "root"
    return RoutingTree(root=root, branching=branching, size=n)


def route(tree: RoutingTree, query: np.ndarray) -> tuple[str, int]:
    """Greedy descent: at each level score every child, follow the best.

    Returns the chosen leaf and how many nodes had their similarity evaluated.
    Ties go to the child whose label sorts first.
    """
    q = np.ascontiguousarray(query, dtype=np.float64)
    node = tree.root
    examined = 0
    while not node.is_leaf:
        children = sorted(node.children, key=lambda c: c.label)
        matrix = np.ascontiguousarray(np.stack([c.vector for c in children]))
        scores = kernels.cosine_scores(matrix, q)
        examined += len(children)
        node = children[int(kernels.top_k(scores, 1)[0])]
    return node.leaf, examined
