from __future__ import annotations

import pytest

from teaproto.agents import AgentSpec
from teaproto.environments import counter_spec, kvstore_spec
from teaproto.runtime import Runtime
from teaproto.schema import ParamSpec
from teaproto.tools import ToolSpec
from teaproto.types import Descriptor
from teaproto.util import ManualClock, counter_ids

ADD_SOURCE = "def add(a, b):\n    return a + b\n"


def add_spec(name: str = "add", evolvable: bool = False, description: str = "adds two integers") -> ToolSpec:
    return ToolSpec(
        Descriptor(name, description, {}, evolvable),
        [ParamSpec("a", "integer", True, "left operand"), ParamSpec("b", "integer", True, "right operand")],
        behavior_id="arith.add",
        source=ADD_SOURCE,
    )


def echo_agent(name: str = "echo", **kw) -> AgentSpec:
    return AgentSpec(Descriptor(name, f"{name} returns its task unchanged"), behavior_id="echo", **kw)


def make_runtime() -> Runtime:
    return Runtime(ManualClock(), counter_ids())


@pytest.fixture
def rt() -> Runtime:
    return make_runtime()


@pytest.fixture
def populated(rt: Runtime) -> Runtime:
    rt.tools.register(add_spec(evolvable=True))
    rt.tools.register(
        ToolSpec(Descriptor("upper", "uppercase a piece of text"), [ParamSpec("text", "text")], behavior_id="text.upper")
    )
    rt.environments.register(counter_spec())
    rt.environments.register(kvstore_spec())
    rt.agents.register(echo_agent())
    rt.agents.register(AgentSpec(Descriptor("router", "routes a task to a named tool"), behavior_id="router"))
    return rt


__all__ = ["ADD_SOURCE", "add_spec", "echo_agent", "make_runtime"]
