from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teaproto.retrieval import (
    BACKEND,
    HashingEmbedder,
    VectorIndex,
    _fallback,
    build_routing_tree,
    cosine,
    kernels,
    route,
)
from teaproto.types import ComponentKind

from .conftest import add_spec, make_runtime
from .oracles import brute_rank, ceil_log

WORDS = "alpha beta gamma delta file search web math text image audio code shell parse fetch store read write sum".split()


def test_embed_conventions():
    emb = HashingEmbedder()
    assert not emb.embed("").any()
    assert not emb.embed("  ,.;  ").any()
    v = emb.embed("search the web")
    assert v.shape == (64,)
    assert np.array_equal(v, emb.embed("search the web"))
    assert np.array_equal(v, HashingEmbedder().embed("search the web"))
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)
    assert cosine(v, np.zeros(64)) == 0.0


def test_index_tracks_registry(rt):
    for i, desc in enumerate(["adds numbers", "reads files", "searches the web"]):
        rt.tools.register(add_spec(f"t{i}", description=desc))
    assert rt.index.keys("tool") == ["t0", "t1", "t2"]
    rt.tools.unregister("t1")
    assert rt.index.keys("tool") == ["t0", "t2"]
    spec = add_spec("t2", description="writes audio clips")
    rt.tools.update("t2", spec)
    assert np.array_equal(rt.index.vector("tool", "t2"), rt.index.embed("writes audio clips"))


def test_retrieve_examples(rt):
    assert rt.tools.retrieve("anything", 3) == []
    descs = ["adds numbers", "reads files from disk", "searches the web", "parses json text", "renders images"]
    for i, d in enumerate(descs):
        rt.tools.register(add_spec(f"t{i}", description=d))
    top = rt.tools.retrieve("searches the web", 2)
    assert top[0][0] == "t2" and top[0][1] == pytest.approx(1.0)
    vectors = {f"t{i}": rt.index.embed(d).tolist() for i, d in enumerate(descs)}
    got = rt.tools.retrieve("reads json files", 2)
    want = brute_rank(vectors, rt.index.embed("reads json files").tolist(), 2)
    assert [n for n, _ in got] == [n for n, _ in want]
    assert [s for _, s in got] == pytest.approx([s for _, s in want], abs=1e-12)


def _int_vectors(draw_rows):
    return {f"c{i:03d}": row for i, row in enumerate(draw_rows)}


vec = st.lists(st.integers(-3, 3), min_size=8, max_size=8)


@settings(max_examples=150, deadline=None)
@given(st.lists(vec, min_size=0, max_size=40), vec, st.integers(1, 45))
def test_retrieve_matches_brute_force(rows, query, k):
    # small integer vectors keep every dot product exact, so ties are genuine ties
    index = VectorIndex(HashingEmbedder(dim=8))
    vectors = _int_vectors(rows)
    for name, row in vectors.items():
        index.upsert_vector(ComponentKind.TOOL, name, row)
    got = index.search_vector("tool", query, k)
    want = brute_rank({n: [float(x) for x in r] for n, r in vectors.items()}, [float(x) for x in query], k)
    assert got == want


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 9), st.lists(st.sampled_from(WORDS), max_size=4)), max_size=30))
def test_index_coherence(ops):
    rt = make_runtime()
    for register, i, words in ops:
        name = f"t{i}"
        if register:
            spec = add_spec(name, description=" ".join(words) or "plain")
            rt.tools.update(name, spec) if name in rt.tools else rt.tools.register(spec)
        elif name in rt.tools:
            rt.tools.unregister(name)
        assert rt.index.keys("tool") == rt.tools.list()
        for n in rt.tools.list():
            assert np.array_equal(rt.index.vector("tool", n), rt.index.embed(rt.tools.index_text(rt.tools.info(n))))


def _items(n, rng):
    emb = HashingEmbedder()
    return [
        (f"t{i:04d}", f"cat{i % 7}", emb.embed(" ".join(rng.choice(WORDS, size=3))))
        for i in range(n)
    ]


def test_routing_small_trees():
    rng = np.random.default_rng(1)
    tree = build_routing_tree(_items(4, rng), 2)
    assert tree.depth() <= 3 and sorted(tree.leaves()) == ["t0000", "t0001", "t0002", "t0003"]
    single = build_routing_tree(_items(1, rng), 4)
    assert single.leaves() == ["t0000"]
    assert route(single, HashingEmbedder().embed("alpha")) == ("t0000", 1)
    with pytest.raises(ValueError):
        build_routing_tree(_items(3, rng), 1)


@pytest.mark.parametrize("n,b", [(2, 2), (5, 2), (17, 3), (64, 4), (256, 4), (300, 5)])
def test_routing_balanced(n, b):
    rng = np.random.default_rng(n)
    tree = build_routing_tree(_items(n, rng), b)
    leaves = tree.leaves()
    assert sorted(leaves) == sorted(set(leaves)) and len(leaves) == n
    assert tree.depth() <= ceil_log(n, b) + 1
    emb = HashingEmbedder()
    for _ in range(30):
        _, examined = route(tree, emb.embed(" ".join(rng.choice(WORDS, size=2))))
        assert examined <= b * tree.depth()


def test_routing_follows_exhaustive_greedy():
    """The walk picks, level by level, the child a full similarity table ranks first."""
    rng = np.random.default_rng(3)
    tree = build_routing_tree(_items(16, rng), 4)
    q = HashingEmbedder().embed("web search")
    node = tree.root
    while not node.is_leaf:
        table = sorted(((-cosine(c.vector, q), c.label, i) for i, c in enumerate(node.children)))
        node = node.children[table[0][2]]
    assert route(tree, q)[0] == node.leaf


def test_runtime_route_self_match(rt):
    for i, d in enumerate(["adds numbers", "reads files from disk", "searches the web", "renders images"]):
        rt.tools.register(add_spec(f"t{i}", description=d))
    name, examined = rt.route("tool", "searches the web", 2)
    assert name == "t2" and examined <= 2 * rt.routing_tree("tool", 2).depth()


def test_256_tools_route_bound(rt):
    rng = np.random.default_rng(256)
    for i in range(256):
        rt.tools.register(add_spec(f"t{i:03d}", description=" ".join(rng.choice(WORDS, size=3))))
    tree = rt.routing_tree("tool", 4)
    assert tree.depth() <= 5
    for _ in range(100):
        _, examined = route(tree, rt.index.embed(" ".join(rng.choice(WORDS, size=2))))
        assert examined <= 16


@pytest.mark.skipif(BACKEND != "cython", reason="compiled kernels not built")
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 30), st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_kernels_agree_with_fallback(n, d, seed):
    rng = np.random.default_rng(seed)
    m = np.ascontiguousarray(rng.normal(size=(n, d)))
    if n:
        m[0] = 0.0
    q = np.ascontiguousarray(rng.normal(size=d))
    np.testing.assert_allclose(kernels.cosine_scores(m, q), _fallback.cosine_scores(m, q), atol=1e-12)
    s = np.round(rng.normal(size=n), 1)
    for k in (1, 3, n + 2):
        assert list(kernels.top_k(s, k)) == list(_fallback.top_k(s, k))
    rows = rng.integers(0, max(n, 1), size=5).astype(np.intp) if n else np.zeros(0, dtype=np.intp)
    w = rng.normal(size=rows.shape[0])
    table = m if n else np.zeros((1, d))
    np.testing.assert_allclose(kernels.accumulate_rows(table, rows, w), _fallback.accumulate_rows(table, rows, w), atol=1e-12)


def test_pure_env_selects_fallback():
    code = (
        "from teaproto.retrieval import BACKEND, HashingEmbedder;"
        "print(BACKEND);print(HashingEmbedder().embed('search the web').round(12).tolist())"
    )
    pure = subprocess.run([sys.executable, "-c", code], env={**os.environ, "TEAPROTO_PURE": "1"}, capture_output=True, text=True, check=True)
    lines = pure.stdout.splitlines()
    assert lines[0] == "python"
    assert lines[1] == str(HashingEmbedder().embed("search the web").round(12).tolist())
