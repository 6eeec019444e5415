from .embedding import Embedder, HashingEmbedder, cosine, tokenize
from .index import VectorIndex
from .kernels import BACKEND
from .routing import RouteNode, RoutingTree, build_routing_tree, ceil_log, category_of, route

__all__ = [
    "BACKEND",
    "Embedder",
    "HashingEmbedder",
    "RouteNode",
    "RoutingTree",
    "VectorIndex",
    "build_routing_tree",
    "category_of",
    "ceil_log",
    "cosine",
    "route",
    "tokenize",
]
