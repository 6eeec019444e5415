from __future__ import annotations

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teaproto.environments import ActionDecl, EnvironmentSpec, counter_spec, generate_rules, scripted_web_spec
from teaproto.errors import ActionNotFound, NameConflict, NotFound, ValidationFailed
from teaproto.types import Descriptor

from .conftest import make_runtime


def test_register_counter(rt):
    env = rt.environments.register(counter_spec())
    assert env.action_names() == ["increment", "reset"]
    assert str(env.version) == "1.0.0"
    assert "increment" in env.rules and "reset" in env.rules
    with pytest.raises(NameConflict):
        rt.environments.register(counter_spec())


def test_duplicate_actions_rejected(rt):
    spec = EnvironmentSpec(Descriptor("dup", "dup env"), [ActionDecl("go"), ActionDecl("go")], behavior_id="counter")
    with pytest.raises(ValidationFailed):
        rt.environments.register(spec)


def test_state_and_actions(rt):
    rt.environments.register(counter_spec())
    assert rt.environments.state("counter") == {"count": 0}
    assert rt.environments.invoke("counter", "increment", {}) == {"count": 1}
    rt.environments.invoke("counter", "increment", {"by": 1})
    assert rt.environments.state("counter") == {"count": 2}
    assert rt.environments.state("counter") == rt.environments.state("counter")
    for _ in range(5):
        rt.environments.invoke("counter", "increment")
    rt.environments.invoke("counter", "reset", {})
    assert rt.environments.state("counter") == {"count": 0}
    with pytest.raises(ActionNotFound):
        rt.environments.invoke("counter", "jump", {})
    with pytest.raises(ValidationFailed):
        rt.environments.invoke("counter", "increment", {"by": "2"})
    with pytest.raises(NotFound):
        rt.environments.state("nope")


def _action_section(rules: str) -> str:
    return rules.split("Actions:", 1)[1].split("State:", 1)[0]


def test_rules_list_each_action_once():
    section = _action_section(generate_rules(counter_spec()))
    for name in ("increment", "reset"):
        assert section.count(f"* {name}:") == 1


def test_rules_empty_marker_and_determinism():
    spec = EnvironmentSpec(Descriptor("void", "nothing to do"))
    assert "(no actions)" in _action_section(generate_rules(spec))
    assert generate_rules(counter_spec()) == generate_rules(counter_spec())


def test_copy_has_independent_state(rt):
    rt.environments.register(counter_spec())
    copy = rt.environments.copy_environment("counter", "counter2")
    assert "counter2" in copy.rules and "Environment counter:" not in copy.rules
    rt.environments.invoke("counter2", "increment")
    assert rt.environments.state("counter") == {"count": 0}
    assert rt.environments.state("counter2") == {"count": 1}


def test_restore_action_set(rt):
    rt.environments.register(counter_spec())
    changed = replace(counter_spec(), actions=[ActionDecl("increment", [], "plus one")])
    rt.environments.update("counter", changed)
    assert rt.environments.env_config("counter").action_names() == ["increment"]
    restored = rt.environments.restore_environment("counter", "1.0.0")
    assert set(restored.action_names()) == {"increment", "reset"}
    assert str(restored.version) == "1.0.2"


def test_contract_aggregates_rules(rt):
    rt.environments.register(scripted_web_spec())
    rt.environments.register(counter_spec())
    doc = rt.environments.contract()
    assert [e.name for e in doc.entries] == ["counter", "scripted_web"]
    assert doc.entries[0].text_description == rt.environments.env_config("counter").rules


def test_scripted_web(rt):
    rt.environments.register(scripted_web_spec())
    page = rt.environments.invoke("scripted_web", "read")
    assert page["links"]
    nxt = rt.environments.invoke("scripted_web", "click", {"index": 0})
    assert nxt["page"] == page["links"][0]


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=1, max_size=12))
def test_action_closure(name):
    rt = make_runtime()
    rt.environments.register(counter_spec())
    if name in ("increment", "reset"):
        rt.environments.invoke("counter", name, {})
    else:
        with pytest.raises(ActionNotFound):
            rt.environments.invoke("counter", name, {})


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.sampled_from(["increment", "reset"])), max_size=25))
def test_copy_independence_trajectories(steps):
    rt = make_runtime()
    rt.environments.register(counter_spec())
    rt.environments.copy("counter", "twin")
    expect = {"counter": 0, "twin": 0}
    for on_copy, action in steps:
        target = "twin" if on_copy else "counter"
        rt.environments.invoke(target, action, {})
        expect[target] = expect[target] + 1 if action == "increment" else 0
        assert rt.environments.state("counter") == {"count": expect["counter"]}
        assert rt.environments.state("twin") == {"count": expect["twin"]}
