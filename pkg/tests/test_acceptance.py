"""Acceptance criteria 1-9, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line (visible even under
pytest's output capture) and then asserts, so the summary and the pytest
verdict always agree. Run with ``pytest tests/test_acceptance.py -v``.
"""
from __future__ import annotations

import random
import signal
import subprocess
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import pytest

from teaproto import canonical
from teaproto.agents import AgentSpec
from teaproto.environments import counter_spec, kvstore_spec
from teaproto.errors import BackendFailure, TEAError
from teaproto.evolution import FailingCritic, ScriptedCritic
from teaproto.managers import codec
from teaproto.managers.model import ScriptedBackend, fingerprint
from teaproto.managers.prompts import PromptSpec
from teaproto.persistence import read_manifest
from teaproto.retrieval import HashingEmbedder, VectorIndex, route
from teaproto.runtime import Runtime
from teaproto.schema import ParamSpec
from teaproto.server import Dispatcher, request
from teaproto.tools import ToolSpec
from teaproto.transforms import Toolkit
from teaproto.types import Descriptor

from .conftest import ADD_SOURCE, add_spec, echo_agent, make_runtime
from .oracles import Ledger, brute_rank, ceil_log, render_version

WORDS = (
    "search web file read write parse json text image audio code shell math sum add count store fetch "
    "plan route agent tool browse click page sort filter merge split join table chart report"
).split()


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return emit


def _err(fn, *args):
    try:
        fn(*args)
    except TEAError as exc:
        return exc.kind.value
    return "ok"


# -- 1. versioning vs ledger ---------------------------------------------------------


def _spec_for(kind: str, name: str, source: str):
    if kind == "tool":
        return replace(add_spec(name), source=source)
    if kind == "environment":
        return replace(counter_spec(name), source=source)
    return echo_agent(name, source=source)


def test_criterion_1_versioning_matches_ledger(report):
    rng = random.Random(1)
    rt = make_runtime()
    ledger = Ledger()
    regs = {"tool": rt.tools, "environment": rt.environments, "agent": rt.agents}
    names = [f"c{i}" for i in range(12)]
    mismatches = []
    start = time.perf_counter()
    for step in range(10_000):
        kind = rng.choice(list(regs))
        reg = regs[kind]
        name = rng.choice(names)
        op = rng.choices(["register", "update", "copy", "restore", "lifecycle", "unregister"], [3, 5, 1, 2, 3, 1])[0]
        source = f"src {step}"
        if op == "register":
            want = ledger.register(kind, name, source)
            got = _err(reg.register, _spec_for(kind, name, source))
        elif op == "update":
            level = rng.choice(["patch", "patch", "minor", "major"])
            want = ledger.update(kind, name, source, level)
            got = _err(reg.update, name, _spec_for(kind, name, source), level)
        elif op == "copy":
            new = rng.choice(names)
            want = ledger.copy(kind, name, new)
            got = _err(reg.copy, name, new)
            name = new if want == "ok" else name
        elif op == "restore":
            hist = ledger.histories.get((kind, name), [])
            version = rng.choice(hist).version if hist and rng.random() < 0.9 else (9, 9, 9)
            want = ledger.restore(kind, name, version)
            got = _err(reg.restore, name, render_version(version))
        elif op == "lifecycle":
            hist = ledger.histories.get((kind, name), [])
            version = rng.choice(hist).version if hist else (1, 0, 0)
            state = rng.choice(["active", "deprecated", "archived"])
            want = ledger.lifecycle(kind, name, version, state)
            got = _err(reg.set_lifecycle, name, render_version(version), state)
        else:
            want = ledger.unregister(kind, name)
            got = _err(reg.unregister, name)
        if got != want:
            mismatches.append((step, kind, op, name, want, got))
            continue
        expect = [(render_version(e.version), e.state, e.source) for e in ledger.history(kind, name)]
        actual = [(str(r.version), r.state.value, r.config_ref.source) for r in reg.history(name)]
        active = ledger.active.get((kind, name))
        live = str(reg.info(name).version) if name in reg else None
        if expect != actual or (render_version(active) if active else None) != live:
            mismatches.append((step, kind, op, name, expect[-3:], actual[-3:]))
    for kind, reg in regs.items():
        assert sorted(reg.list()) == sorted(n for (k, n) in ledger.active if k == kind)
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 30
    report(1, ok, f"10000 ops, {len(mismatches)} mismatches, {elapsed:.1f}s (limit 30s){'' if not mismatches else f' first={mismatches[0]}'}")


# -- 2. round-trip fixpoint ------------------------------------------------------------


def _random_state(rng: random.Random) -> Runtime:
    rt = make_runtime()
    for i in range(rng.randint(0, 4)):
        rt.tools.register(add_spec(f"t{i}", evolvable=rng.random() < 0.5, description=" ".join(rng.sample(WORDS, 3))))
        for _ in range(rng.randint(0, 2)):
            rt.tools.update(f"t{i}", add_spec(f"t{i}", description=" ".join(rng.sample(WORDS, 3))), rng.choice(["patch", "minor"]))
    for i in range(rng.randint(0, 2)):
        rt.environments.register(rng.choice([counter_spec, kvstore_spec])(f"e{i}"))
    for i in range(rng.randint(0, 2)):
        rt.agents.register(echo_agent(f"a{i}"))
    if rng.random() < 0.3:
        rt.prompts.register(PromptSpec(Descriptor("p", "a prompt", {}, True), message_template="Hi {name}", modules={"x": "y"}, trainable_slots=("x",)))
    if "t0" in rt.tools and rng.random() < 0.5:
        rt.tools.set_lifecycle("t0", "1.0.0", rng.choice(["deprecated", "archived"]))
    if "a0" in rt.agents and rng.random() < 0.5:
        rt.transforms.a2t("a0")
    if "e0" in rt.environments and rng.random() < 0.3:
        rt.transforms.e2t("e0")
    adders = [n for n in rt.tools.list() if n.startswith("t")]
    if adders and rng.random() < 0.4:
        with rt.session("a", "t"):
            rt.tools.invoke(adders[0], {"a": rng.randint(0, 9), "b": 1})
    return rt


def _files(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_2_round_trip_fixpoint(report, tmp_path):
    rng = random.Random(2)
    failures = []
    codec_checked = 0
    start = time.perf_counter()
    for i in range(1000):
        rt = _random_state(rng)
        first, second = tmp_path / f"s{i}a", tmp_path / f"s{i}b"
        rt.save_all(first)
        loaded = make_runtime()
        loaded.load_all(first)
        loaded.save_all(second)
        if _files(first) != _files(second) or loaded.snapshot() != rt.snapshot():
            failures.append(i)
        for reg in rt.registries:
            for name in reg.list():
                cfg = reg.info(name)
                codec_checked += 1
                if codec.decode(codec.encode(cfg)) != cfg:
                    failures.append((i, name))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30
    report(2, ok, f"1000 states byte-identical, {codec_checked} codec round trips, {len(failures)} failures, {elapsed:.1f}s (limit 30s)")


# -- 3. retrieval vs brute force ---------------------------------------------------------


def test_criterion_3_retrieval_oracle(report):
    rng = random.Random(3)
    emb = HashingEmbedder()
    mismatches = 0
    for state in range(500):
        index = VectorIndex(emb)
        texts = {}
        for _ in range(rng.randint(0, 200)):
            name = f"c{rng.randrange(250):03d}"
            if name in texts and rng.random() < 0.2:
                index.remove("tool", name)
                del texts[name]
            else:
                texts[name] = " ".join(rng.choices(WORDS, k=rng.randint(0, 4)))
                index.upsert("tool", name, texts[name])
        query = " ".join(rng.choices(WORDS, k=rng.randint(1, 3)))
        k = rng.randint(1, len(texts) + 3)
        got = index.retrieve("tool", query, k)
        want = brute_rank({n: emb.embed(t).tolist() for n, t in texts.items()}, emb.embed(query).tolist(), k)
        full = index.retrieve("tool", query, max(1, len(texts)))
        full_want = brute_rank({n: emb.embed(t).tolist() for n, t in texts.items()}, emb.embed(query).tolist(), len(texts))
        if got != want or full != full_want:
            mismatches += 1
    report(3, mismatches == 0, f"500 index states (n<=200, d=64), {mismatches} mismatches")


# -- 4. routing bound ------------------------------------------------------------------------


def test_criterion_4_routing_bound(report):
    rng = random.Random(4)
    lines, ok = [], True
    for n in (64, 256, 1024):
        rt = make_runtime()
        cats = max(2, n // 16)
        for i in range(n):
            rt.tools.register(
                ToolSpec(Descriptor(f"t{i:04d}", " ".join(rng.sample(WORDS, 3)), {"category": f"cat{i % cats}"}), behavior_id="text.upper")
            )
        tree = rt.routing_tree("tool", 4)
        bound = 4 * ceil_log(n, 4)
        worst = 0
        for _ in range(100):
            leaf, examined = route(tree, rt.index.embed(" ".join(rng.sample(WORDS, 2))))
            assert leaf in rt.tools
            worst = max(worst, examined)
        ok &= worst <= bound and sorted(tree.leaves()) == rt.tools.list()
        lines.append(f"n={n}: max examined {worst} <= {bound} (flat retrieve scores {n})")
    report(4, ok, "; ".join(lines))


# -- 5. transformation coherence -----------------------------------------------------------


def _fixture() -> Runtime:
    rt = make_runtime()
    rt.tools.register(add_spec())
    rt.environments.register(counter_spec())
    rt.environments.register(kvstore_spec())
    rt.agents.register(echo_agent())
    return rt


def _random_task(rng):
    return {rng.choice(WORDS): rng.choice([rng.randint(-99, 99), rng.choice(WORDS), True, None]) for _ in range(rng.randint(0, 3))}


def _delegation_checks(rng) -> dict[str, int]:
    """Count of inputs (out of 100) where the derived component disagrees with its source."""
    bad = dict.fromkeys(["A2T", "T2A", "E2T", "T2E", "A2E", "E2A"], 0)
    rt = _fixture()
    mirror = _fixture()
    rt.transforms.a2t("echo")
    rt.transforms.t2a("add")
    rt.transforms.a2e("echo")
    kit, _ = rt.transforms.e2t("counter")
    kv_kit, _ = rt.transforms.e2t("kvstore")
    rt.transforms.t2e(kv_kit, "kv_view")
    rt.transforms.e2a("counter", "always_increment")
    for _ in range(100):
        task = _random_task(rng)
        bad["A2T"] += rt.tools.call("agent.echo", task) != rt.agents.invoke("echo", task)
        bad["A2E"] += rt.environments.invoke("agent.echo.env", "interact", task) != rt.agents.invoke("echo", task)
        a, b = rng.randint(-10**6, 10**6), rng.randint(-10**6, 10**6)
        bad["T2A"] += rt.agents.invoke("tool.add", {"args": {"a": a, "b": b}}) != rt.tools.call("add", {"a": a, "b": b})
        action = rng.choice(["increment", "reset"]) if rng.random() < 0.3 else "increment"
        args = {"by": rng.randint(0, 5)} if action == "increment" else {}
        bad["E2T"] += rt.tools.call(f"env.counter.{action}", args) != mirror.environments.invoke("counter", action, args)
        kv_action = rng.choice(["put", "get", "delete"])
        kv_args = {"key": rng.choice("abc")} | ({"value": rng.choice(WORDS)} if kv_action == "put" else {})
        bad["T2E"] += rt.environments.invoke("kv_view", kv_action, kv_args) != mirror.environments.invoke("kvstore", kv_action, kv_args)
    # E2A on a fresh pair: the derived agent's step must equal the policy's choice applied directly
    rt, mirror = _fixture(), _fixture()
    rt.transforms.e2a("counter", "always_increment")
    for _ in range(100):
        out = rt.agents.invoke("env.counter.agent", _random_task(rng))
        direct = mirror.environments.invoke("counter", "increment", {})
        bad["E2A"] += out != {"action": "increment", "result": direct, "state": mirror.environments.state("counter")}
    return bad


def _legal_chains():
    """Every chainable ordered pair of transform kinds, built for real."""
    out = {}

    def fresh():
        r = _fixture()
        return r, r.transforms

    r, tm = fresh(); _, a = tm.a2t("echo"); _, b = tm.t2a("agent.echo"); out["A2T>T2A"] = (r, a, b)
    r, tm = fresh(); _, a = tm.a2t("echo"); _, b = tm.t2e(Toolkit("x", ("agent.echo",), None), "echo_tools"); out["A2T>T2E"] = (r, a, b)
    r, tm = fresh(); _, a = tm.t2a("add"); _, b = tm.a2t("tool.add"); out["T2A>A2T"] = (r, a, b)
    r, tm = fresh(); _, a = tm.t2a("add"); _, b = tm.a2e("tool.add"); out["T2A>A2E"] = (r, a, b)
    r, tm = fresh(); _, a = tm.e2t("counter"); _, b = tm.t2a("env.counter.increment"); out["E2T>T2A"] = (r, a, b)
    r, tm = fresh(); kit, a = tm.e2t("counter"); _, b = tm.t2e(kit, "counter2"); out["E2T>T2E"] = (r, a, b)
    r, tm = fresh(); _, a = tm.t2e(Toolkit("math", ("add",), None), "math"); _, b = tm.e2t("math"); out["T2E>E2T"] = (r, a, b)
    r, tm = fresh(); _, a = tm.t2e(Toolkit("math", ("add",), None), "math"); _, b = tm.e2a("math", "greedy_first_action"); out["T2E>E2A"] = (r, a, b)
    r, tm = fresh(); _, a = tm.a2e("echo"); _, b = tm.e2t("agent.echo.env"); out["A2E>E2T"] = (r, a, b)
    r, tm = fresh(); _, a = tm.a2e("echo"); _, b = tm.e2a("agent.echo.env", "greedy_first_action"); out["A2E>E2A"] = (r, a, b)
    r, tm = fresh(); _, a = tm.e2a("counter", "always_increment"); _, b = tm.a2t("env.counter.agent"); out["E2A>A2T"] = (r, a, b)
    r, tm = fresh(); _, a = tm.e2a("counter", "always_increment"); _, b = tm.a2e("env.counter.agent"); out["E2A>A2E"] = (r, a, b)
    return out


def _seeded_invalid():
    rt = _fixture()
    tm = rt.transforms
    _, a2t = tm.a2t("echo")
    _, t2a = tm.t2a("add")
    rt.tools.register(add_spec("plain"))
    # a derived tool whose schema drifted from its source agent after the transform
    rt.agents.register(echo_agent("strict", params=[ParamSpec("q", "text", True)], open_args=False))
    _, drifted = tm.a2t("strict")
    derived = rt.tools.info("agent.strict").descriptor
    rt.tools.update("agent.strict", ToolSpec(derived, [ParamSpec("q", "integer", True)], behavior_id="transform.a2t"))
    single = {
        "unregistered output": replace(a2t, outputs=("agent.nobody",)),
        "unknown kind": replace(a2t, kind="X2Y"),
        "missing lineage": replace(a2t, outputs=("plain",)),
        "output in wrong registry": replace(t2a, kind="A2T", input="echo", consumed=("echo",)),
        "schema drift": drifted,
    }
    chain = ("wrong kind chain", a2t, t2a)
    return tm, single, chain


def test_criterion_5_transformation_coherence(report):
    rng = random.Random(5)
    bad = _delegation_checks(rng)
    legal = _legal_chains()
    rejected_legal = [k for k, (r, a, b) in legal.items() if not r.transforms.check_composition(a, b).ok]
    r, a, b = legal["E2T>T2E"]
    round_trip = set(r.environments.env_config("counter2").action_names()) == set(r.environments.env_config("counter").action_names())
    tm, single, (label, c1, c2) = _seeded_invalid()
    accepted_invalid = [k for k, rec in single.items() if tm.check_well_typed(rec).ok]
    if tm.check_composition(c1, c2).ok:
        accepted_invalid.append(label)
    ok = not any(bad.values()) and not rejected_legal and round_trip and not accepted_invalid and len(single) + 1 == 6
    report(
        5, ok,
        f"delegation mismatches over 100 inputs each {bad}; {len(legal) - len(rejected_legal)}/{len(legal)} legal chains accepted; "
        f"e2t∘t2e action set preserved={round_trip}; {6 - len(accepted_invalid)}/6 seeded-invalid rejected",
    )


# -- 6. session isolation -----------------------------------------------------------------------


def test_criterion_6_session_isolation(report):
    rt = Runtime()
    rt.tools.register(add_spec())
    handles = [rt.memory.open(f"agent{i}", f"task{i}") for i in range(8)]
    barrier = threading.Barrier(8)

    def work(h):
        barrier.wait()
        for j in range(250):
            rt.memory.record(h, "step", {"sid": h.session_id, "j": j})
            with rt.session_scope(h):
                rt.tools.invoke("add", {"a": j, "b": 0})

    with ThreadPoolExecutor(8) as pool:
        list(pool.map(work, handles))
    problems = []
    seen_ids = set()
    for h in handles:
        events = rt.memory.events(h)
        traces = rt.tracer.query(session_id=h.session_id)
        if [e.step for e in events] != list(range(1, 251)) or [t.index for t in traces] != list(range(1, 251)):
            problems.append(f"{h.session_id}: gaps")
        if any(e.payload["sid"] != h.session_id for e in events) or [e.payload["j"] for e in events] != list(range(250)):
            problems.append(f"{h.session_id}: foreign events")
        if [t.invocation["args"]["a"] for t in traces] != list(range(250)) or any(t.task_id != h.task_id for t in traces):
            problems.append(f"{h.session_id}: foreign traces")
        seen_ids |= {t.record_id for t in traces}
    everything = rt.tracer.all_records()
    if len(everything) != 2000 or seen_ids != {t.record_id for t in everything}:
        problems.append("per-session queries do not partition the global trace set")
    report(6, not problems, f"8 sessions x 250 events/traces; {len(everything)} traces total; {problems or 'no cross-contamination'}")


# -- 7. evolution gate --------------------------------------------------------------------------------

BETTER = "def add(a, b):\n    return int(a) + int(b)\n"


def _critics():
    base = {ADD_SOURCE: 0.4}
    return {
        "improving": (ScriptedCritic("improving", [BETTER], {**base, BETTER: 0.7}), lambda m: ("accept", 1)),
        "late-improving": (
            ScriptedCritic("late", ["w1", "w2", BETTER], {**base, "w1": 0.1, "w2": 0.2, BETTER: 0.9}),
            lambda m: ("accept", 3) if m >= 3 else ("reject", m),
        ),
        "non-improving": (ScriptedCritic("worse", ["w"], {**base, "w": 0.3}), lambda m: ("reject", m)),
        "tying": (ScriptedCritic("tie", ["t"], {**base, "t": 0.4}), lambda m: ("reject", m)),
        "failing": (FailingCritic("failing", "score"), lambda m: ("error", 0)),
    }


def test_criterion_7_evolution_gate(report):
    wrong = []
    cells = 0
    for label, (critic, expect) in _critics().items():
        for max_iter in (1, 3, 5):
            cells += 1
            rt = make_runtime()
            rt.tools.register(add_spec(evolvable=True))
            before = rt.snapshot()
            want, iters = expect(max_iter)
            try:
                out = rt.evolution.evolve("tool", "add", critic, max_iter=max_iter)
            except BackendFailure:
                got = ("error", 0)
                intact = rt.snapshot() == before
            else:
                got = ("accept" if out.accepted else "reject", out.iterations)
                if out.accepted:
                    intact = (
                        out.final_score > out.initial_score
                        and str(out.committed_version) == "1.1.0"
                        and rt.evolution.replay(out)
                        and rt.tools.lookup("add", "1.0.0").source == ADD_SOURCE
                    )
                else:
                    intact = rt.snapshot() == before and out.committed_version is None
            if got != (want, iters) or not intact:
                wrong.append((label, max_iter, got))
    report(7, not wrong, f"{cells} critic x max_iter cells; {len(wrong)} deviations from the strict-improvement gate {wrong or ''}")


# -- 8. server differential + kill-during-save ----------------------------------------------------------

PARAMS = [{"name": "a", "type": "integer"}, {"name": "b", "type": "integer"}]
PARAM_SPECS = [ParamSpec("a", "integer"), ParamSpec("b", "integer")]


def _mirrored():
    rts = []
    for _ in range(2):
        rt = make_runtime()
        rt.environments.register(counter_spec())
        rt.agents.register(echo_agent())
        rt.agents.register(AgentSpec(Descriptor("router", "routes a task to a named tool"), behavior_id="router"))
        rt.prompts.register(PromptSpec(Descriptor("greet", "greeting"), message_template="Hello {name}"))
        rts.append(rt)
    return rts


def _random_call(rng, rt: Runtime, sessions: list[str]):
    """One random operation as (op, params, in-process thunk)."""
    names = [f"t{i}" for i in range(6)]
    name = rng.choice(names)
    desc = " ".join(rng.sample(WORDS, 3))
    history = [str(r.version) for r in rt.tools.history(name)] or ["1.0.0"]
    version = rng.choice(history + ["7.7.7"])
    ops = [
        ("tool.register", {"name": name, "description": desc, "behavior_id": "arith.add", "params": PARAMS},
         lambda r: r.tools.register(ToolSpec(Descriptor(name, desc), PARAM_SPECS, "arith.add")).to_dict()),
        ("tool.update", {"name": name, "description": desc, "params": PARAMS, "behavior_id": "arith.add", "source": ""},
         lambda r: r.tools.update(name, ToolSpec(Descriptor(name, desc, dict(r.tools.info(name).descriptor.metadata)), PARAM_SPECS, "arith.add")).to_dict()),
        ("tool.list", {}, lambda r: r.tools.list()),
        ("tool.info", {"name": name}, lambda r: r.tools.info(name).to_dict()),
        ("tool.info", {"name": name, "version": version}, lambda r: r.tools.lookup(name, version).to_dict()),
        ("tool.history", {"name": name}, lambda r: [h.to_dict() for h in r.tools.history(name)]),
        ("tool.restore", {"name": name, "version": version}, lambda r: r.tools.restore(name, version).to_dict()),
        ("tool.lifecycle", {"name": name, "version": version, "state": (st := rng.choice(["deprecated", "archived", "active"]))},
         lambda r: r.tools.set_lifecycle(name, version, st).to_dict()),
        ("tool.copy", {"name": name, "new_name": (nn := rng.choice(names))}, lambda r: r.tools.copy(name, nn).to_dict()),
        ("tool.unregister", {"name": name}, lambda r: (r.tools.unregister(name), {"unregistered": name})[1]),
        ("tool.contract", {}, lambda r: r.tools.contract().to_dict()),
        ("tool.retrieve", {"query": desc, "k": (k := rng.randint(1, 4))}, lambda r: [[n, s] for n, s in r.tools.retrieve(desc, k)]),
        ("retrieve", {"kind": "tool", "query": desc, "k": k}, lambda r: [[n, s] for n, s in r.registry("tool").retrieve(desc, k)]),
        ("tool.invoke", {"name": name, "args": (args := {"a": rng.randint(-50, 50), "b": rng.randint(-50, 50)} if rng.random() < 0.8 else {"a": 1})},
         lambda r: r.tools.invoke(name, args).to_dict()),
        ("env.invoke", {"name": "counter", "action": (act := rng.choice(["increment", "reset", "jump"])), "args": {}},
         lambda r: r.environments.invoke("counter", act, {})),
        ("env.state", {"name": "counter"}, lambda r: r.environments.state("counter")),
        ("agent.invoke", {"name": "echo", "task": (task := {"q": rng.choice(WORDS)})}, lambda r: r.agents.invoke("echo", task)),
        ("agent.invoke", {"name": "router", "task": {"tool": name, "args": {"a": 1, "b": 2}}},
         lambda r: r.agents.invoke("router", {"tool": name, "args": {"a": 1, "b": 2}})),
        ("prompt.render", {"name": "greet", "variables": (vs := {"name": desc} if rng.random() < 0.8 else {})},
         lambda r: r.prompts.render("greet", vs)),
        ("session.open", {"agent_name": "echo", "task_id": "t"}, lambda r: r.memory.open("echo", "t").to_dict()),
        ("version.history", {"kind": "tool", "name": name}, lambda r: [h.to_dict() for h in r.registry("tool").history(name)]),
    ]
    if sessions:
        sid = rng.choice(sessions)
        ops += [
            ("tool.invoke", {"name": name, "args": {"a": 3, "b": 4}, "session_id": sid}, lambda r: r.tools.invoke(name, {"a": 3, "b": 4}, sid).to_dict()),
            ("memory.record", {"session_id": sid, "kind": "note", "payload": desc}, lambda r: r.memory.record(sid, "note", desc).to_dict()),
            ("memory.events", {"session_id": sid}, lambda r: [e.to_dict() for e in r.memory.events(sid)]),
            ("trace.query", {"session_id": sid}, lambda r: [t.to_dict() for t in r.tracer.query(session_id=sid)]),
        ]
    if rt.tools.list():
        ops.append(("route", {"kind": "tool", "query": desc, "branching": 2},
                    lambda r: dict(zip(("name", "candidates_examined"), r.route("tool", desc, 2)))))
    return rng.choice(ops)


def _in_process(fn, rt):
    try:
        return {"ok": True, "result": canonical.decode(canonical.encode(fn(rt)))}
    except TEAError as exc:
        return {"ok": False, "error": exc.to_dict()}


KILL_WRITER = """
import sys
from teaproto.runtime import Runtime
from teaproto.tools import ToolSpec
from teaproto.types import Descriptor
rt = Runtime()
for i in range(300):
    rt.tools.register(ToolSpec(Descriptor(f"t{i}", "padding " * 20), behavior_id="text.upper"))
print("ready", flush=True)
n = 0
while True:
    n += 1
    rt.tools.update("t0", ToolSpec(Descriptor("t0", f"round {n}"), behavior_id="text.upper"))
    rt.save_all(sys.argv[1])
"""


def _kill_trials(root: Path, trials: int, rng) -> list[str]:
    problems = []
    for trial in range(trials):
        data = root / f"kill{trial}"
        proc = subprocess.Popen([sys.executable, "-c", KILL_WRITER, str(data)], stdout=subprocess.PIPE, text=True)
        assert proc.stdout.readline().strip() == "ready"
        time.sleep(rng.uniform(0.05, 0.4))
        proc.send_signal(signal.SIGKILL)
        proc.wait()
        proc.stdout.close()
        for path in data.glob("*.manifest") if data.exists() else ():
            try:
                read_manifest(path)
            except TEAError as exc:
                problems.append(f"trial {trial} {path.name}: {exc}")
        if data.exists():
            try:
                make_runtime().load_all(data)
            except TEAError as exc:
                problems.append(f"trial {trial} load: {exc}")
    return problems


def test_criterion_8_server_differential(report, tmp_path):
    rng = random.Random(8)
    wire_rt, local_rt = _mirrored()
    disp = Dispatcher(wire_rt)
    sessions: list[str] = []
    diffs = []
    for i in range(2000):
        op, params, thunk = _random_call(rng, local_rt, sessions)
        resp = disp.dispatch(request(op, params, rid=f"r{i}"))
        expected = _in_process(thunk, local_rt)
        got = {k: v for k, v in resp.items() if k != "id"}
        if resp["id"] != f"r{i}" or got != expected:
            diffs.append((i, op, got, expected))
        if op == "session.open" and resp["ok"]:
            sessions.append(resp["result"]["session_id"])
    same_state = wire_rt.snapshot() == local_rt.snapshot()
    kill_problems = _kill_trials(tmp_path, 20, rng)
    ok = not diffs and same_state and not kill_problems
    report(
        8, ok,
        f"2000 wire requests, {len(diffs)} differences, mirrored state identical={same_state}; "
        f"20 kill-during-save trials, {len(kill_problems)} unparsable manifests{f' first diff={diffs[0]}' if diffs else ''}",
    )


# -- 9. fallback chain ------------------------------------------------------------------------------------


def test_criterion_9_fallback_chain(report):
    req = {"messages": [{"role": "user", "content": "2+2?"}]}
    wrong = []
    for mask in range(8):
        up = [(mask >> i) & 1 == 1 for i in range(3)]
        rt = make_runtime()
        chain = []
        for i, ok in enumerate(up):
            rt.model.register(ScriptedBackend(f"b{i}", {fingerprint(req): {"answer": f"from b{i}"}}, failing=not ok))
            chain.append(f"b{i}")
        first = next((i for i, ok in enumerate(up) if ok), None)
        try:
            out = rt.model.invoke(req, chain)
        except BackendFailure as exc:
            if first is not None or len(exc.reasons) != 3 or [r.split(":")[0] for r in exc.reasons] != chain:
                wrong.append((up, "aggregate", exc.reasons))
        else:
            if out != {"served_by": f"b{first}", "response": {"answer": f"from b{first}"}}:
                wrong.append((up, out))
    report(9, not wrong, f"8 three-backend up/down configurations, {len(wrong)} deviations from first-success / aggregate-failure")
