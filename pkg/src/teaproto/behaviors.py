"""Factory tables that turn a config's ``behavior_id`` into something invocable.

Source payloads are stored and versioned but never executed; behavior always
comes from one of these factories. A factory is called as
``factory(runtime, config)`` and returns:

* tools: ``callable(args: dict) -> value``
* environments: an object with ``state()`` and ``step(action, args)``
* agents: ``callable(task, ctx) -> value``
* e2a policies: ``callable(state, action_names) -> (action, args)``
"""
from __future__ import annotations

import threading
from typing import Any, Callable

from .errors import ValidationFailed

Factory = Callable[[Any, Any], Any]


class BehaviorRegistry:
    def __init__(self):
        self._lock = threading.Lock()
        self._tables: dict[str, dict[str, Factory]] = {"tool": {}, "environment": {}, "agent": {}, "policy": {}}

    def add(self, table: str, behavior_id: str, factory: Factory) -> None:
        with self._lock:
            self._tables[table][behavior_id] = factory

    def resolve(self, table: str, behavior_id: str | None) -> Factory | None:
        if behavior_id is None:
            return None
        with self._lock:
            return self._tables[table].get(behavior_id)

    def ids(self, table: str) -> list[str]:
        with self._lock:
            return sorted(self._tables[table])

    # convenience registration for plain callables

    def tool(self, behavior_id: str, fn: Callable[[dict], Any] | None = None):
        """Register ``fn(args)`` as a stateless tool behavior; usable as a decorator."""

        def deco(f):
            self.add("tool", behavior_id, lambda runtime, config: f)
            return f

        return deco(fn) if fn is not None else deco

    def agent(self, behavior_id: str, fn: Callable[[Any, Any], Any] | None = None):
        def deco(f):
            self.add("agent", behavior_id, lambda runtime, config: f)
            return f

        return deco(fn) if fn is not None else deco

    def environment(self, behavior_id: str, cls: Callable[[], Any] | None = None):
        """Register an environment class; each registered name gets a fresh instance."""

        def deco(c):
            self.add("environment", behavior_id, lambda runtime, config: c())
            return c

        return deco(cls) if cls is not None else deco

    def policy(self, policy_id: str, fn: Callable[[Any, list[str]], tuple[str, dict]] | None = None):
        def deco(f):
            self.add("policy", policy_id, lambda runtime, config: f)
            return f

        return deco(fn) if fn is not None else deco


# -- built-in behaviors -------------------------------------------------------


def _add(args):
    return args["a"] + args["b"]


def _mul(args):
    return args["a"] * args["b"]


def _concat(args):
    return args["left"] + args["right"]


def _upper(args):
    return args["text"].upper()


def _echo_tool(args):
    return dict(args)


def _fail(args):
    raise RuntimeError("scripted failure")


def _echo_policy(task, ctx):
    return task


def _router_policy(task, ctx):
    """Delegates ``{"tool": name, "args": {...}}`` to the named tool."""
    if not isinstance(task, dict) or not isinstance(task.get("tool"), str) or not isinstance(task.get("args"), dict):
        raise ValidationFailed("router task must be {tool: text, args: mapping}")
    return ctx.call_tool(task["tool"], task["args"])


def _constant_policy(task, ctx):
    return {"answer": 42}


class Counter:
    """Integer counter with ``increment`` and ``reset``."""

    def __init__(self):
        self.count = 0

    def state(self):
        return {"count": self.count}

    def step(self, action, args):
        if action == "increment":
            self.count += args.get("by", 1)
        elif action == "reset":
            self.count = 0
        return {"count": self.count}


class KVStore:
    def __init__(self):
        self.data: dict[str, Any] = {}

    def state(self):
        return {"keys": sorted(self.data), "size": len(self.data)}

    def step(self, action, args):
        key = args["key"]
        if action == "put":
            self.data[key] = args["value"]
            return {"ok": True}
        if action == "get":
            return {"found": key in self.data, "value": self.data.get(key)}
        if action == "delete":
            return {"deleted": self.data.pop(key, None) is not None}
        raise ValidationFailed(f"unknown kvstore action {action!r}")


SCRIPTED_PAGES = {
    "home": {"text": "Welcome. See the docs or the blog.", "links": ["docs", "blog"]},
    "docs": {"text": "Documentation index. Read the api page.", "links": ["api", "home"]},
    "api": {"text": "API reference: add(a, b) returns a + b.", "links": ["docs"]},
    "blog": {"text": "Release notes for version 1.0.0.", "links": ["home"]},
}


class ScriptedWeb:
    """Deterministic page graph standing in for a browser."""

    def __init__(self, pages: dict[str, dict] | None = None, start: str = "home"):
        self.pages = pages or SCRIPTED_PAGES
        self.start = start
        self.current = start
        self.history = [start]

    def state(self):
        return {"page": self.current, "history": list(self.history)}

    def step(self, action, args):
        if action == "navigate":
            page = args["page"]
            if page not in self.pages:
                raise ValidationFailed(f"no page {page!r}")
            self.current = page
            self.history.append(page)
            return {"page": page}
        if action == "click":
            links = self.pages[self.current]["links"]
            index = args["index"]
            if not 0 <= index < len(links):
                raise ValidationFailed(f"link index {index} out of range")
            self.current = links[index]
            self.history.append(self.current)
            return {"page": self.current}
        if action == "read":
            page = self.pages[self.current]
            return {"page": self.current, "text": page["text"], "links": list(page["links"])}
        raise ValidationFailed(f"unknown scripted_web action {action!r}")


def _always_increment(state, actions):
    return "increment", {}


def _greedy_first_action(state, actions):
    if not actions:
        raise ValidationFailed("environment exposes no actions")
    return sorted(actions)[0], {}


def install_builtins(registry: BehaviorRegistry) -> BehaviorRegistry:
    registry.tool("arith.add", _add)
    registry.tool("arith.mul", _mul)
    registry.tool("text.concat", _concat)
    registry.tool("text.upper", _upper)
    registry.tool("echo", _echo_tool)
    registry.tool("fail", _fail)
    registry.agent("echo", _echo_policy)
    registry.agent("router", _router_policy)
    registry.agent("constant", _constant_policy)
    registry.environment("counter", Counter)
    registry.environment("kvstore", KVStore)
    registry.environment("scripted_web", ScriptedWeb)
    registry.policy("always_increment", _always_increment)
    registry.policy("greedy_first_action", _greedy_first_action)
    return registry
