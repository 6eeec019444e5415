"""Wire server: newline-delimited request envelopes routed to runtime operations.

Request: ``{"id": text, "op": "tool.invoke", "params": {...}}``.
Response: ``{"id": ..., "ok": true, "result": ...}`` or
``{"id": ..., "ok": false, "error": {"kind", "detail", "reasons"}}``.
"""
from __future__ import annotations

import concurrent.futures
import io
import logging
import socketserver
import sys
import threading
from pathlib import Path
from typing import IO, Any, Callable, Mapping

from . import canonical
from .agents import AgentSpec, RelationEdge, RelationKind
from .environments import ActionDecl, EnvironmentSpec, spec_of
from .errors import BackendFailure, ProtocolError, TEAError, ValidationFailed
from .evolution import FailingCritic, ScriptedCritic, Variable
from .managers.model import ScriptedBackend
from .managers.prompts import PromptSpec
from .schema import params_of
from .tools import ToolSpec
from .transforms import Toolkit, TransformRecord
from .types import ComponentKind, Descriptor

log = logging.getLogger(__name__)

_MISSING = object()

# ops that never change persistent state; everything else triggers autosave
READ_ONLY_SUFFIXES = (
    ".list", ".info", ".contract", ".retrieve", ".history", ".lookup", ".vars", ".state", ".relations",
    ".records", ".check", ".events", ".query", ".render", ".save", ".ops",
)
READ_ONLY_OPS = {"retrieve", "route", "model.list", "model.invoke", "session.open", "session.close", "memory.record"}


class Params:
    """Typed access to a request's params; every mismatch is a ProtocolError."""

    def __init__(self, data: Any):
        if not isinstance(data, dict):
            raise ProtocolError("params must be a mapping")
        self.data = data

    def get(self, key: str, types: type | tuple = object, default: Any = _MISSING) -> Any:
        if key not in self.data or (self.data[key] is None and default is not _MISSING):
            if default is _MISSING:
                raise ProtocolError(f"missing param {key!r}")
            return default
        value = self.data[key]
        if types is int and isinstance(value, bool) or not isinstance(value, types):
            want = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
            raise ProtocolError(f"param {key!r} must be {want}, got {type(value).__name__}")
        return value

    def text(self, key: str, default: Any = _MISSING) -> str:
        return self.get(key, str, default)

    def mapping(self, key: str, default: Any = _MISSING) -> dict:
        return self.get(key, dict, default)

    def seq(self, key: str, default: Any = _MISSING) -> list:
        return self.get(key, list, default)

    def flag(self, key: str, default: bool = False) -> bool:
        return self.get(key, bool, default)

    def integer(self, key: str, default: Any = _MISSING) -> int:
        return self.get(key, int, default)


def _descriptor(p: Params, name_key: str = "name") -> Descriptor:
    meta = p.mapping("metadata", {})
    if not all(isinstance(v, str) for v in meta.values()):
        raise ProtocolError("metadata values must be text")
    return Descriptor(p.text(name_key), p.text("description", ""), meta, p.flag("evolvable"))


def _params_decl(p: Params, key: str = "params") -> list:
    decl = p.seq(key, [])
    for d in decl:
        if not isinstance(d, dict):
            raise ProtocolError(f"{key} entries must be mappings")
    return decl


def _actions(p: Params) -> list[ActionDecl]:
    out = []
    for a in p.seq("actions", []):
        ap = Params(a)
        out.append(ActionDecl(ap.text("name"), _params_decl(ap), ap.text("doc", ""), ap.flag("open_args")))
    return out


def _pairs(hits) -> list:
    return [[name, score] for name, score in hits]


def _critic(data: Any):
    p = Params(data)
    if p.text("type", "scripted") == "failing":
        return FailingCritic(p.text("id", "failing"), p.text("fail_on", "propose"))
    scores = p.mapping("scores", {})
    for v in scores.values():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ProtocolError("critic scores must be numbers")
    proposals = p.seq("proposals")
    if not proposals or not all(isinstance(x, str) for x in proposals):
        raise ProtocolError("critic proposals must be a non-empty list of text")
    default = p.get("default_score", (int, float), 0.0)
    return ScriptedCritic(p.text("id", "scripted"), proposals, scores, float(default))


class Dispatcher:
    """The published op table over one runtime."""

    def __init__(self, runtime, data_dir: str | Path | None = None):
        self.runtime = runtime
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self._save_lock = threading.Lock()
        self.ops: dict[str, Callable[[Params], Any]] = {}
        self._build()

    # -- table ------------------------------------------------------------------

    def _build(self) -> None:
        rt = self.runtime
        for prefix, reg in (("tool", rt.tools), ("env", rt.environments), ("agent", rt.agents), ("prompt", rt.prompts)):
            self._common(prefix, reg)
        ops = self.ops
        ops.update({
            "tool.register": self._tool_register,
            "tool.update": self._tool_update,
            "tool.invoke": lambda p: rt.tools.invoke(p.text("name"), p.mapping("args", {}), p.text("session_id", None)).to_dict(),
            "env.register": self._env_register,
            "env.update": self._env_update,
            "env.state": lambda p: rt.environments.state(p.text("name")),
            "agent.register": self._agent_register,
            "agent.update": self._agent_update,
            "agent.invoke": lambda p: rt.agents.invoke(p.text("name"), p.get("task", object, None), p.text("session_id", None)),
            "agent.relate": self._agent_relate,
            "agent.relations": lambda p: [e.to_dict() for e in rt.agents.query_relations(p.text("name"), p.text("kind", None))],
            "prompt.register": self._prompt_register,
            "prompt.update": lambda p: rt.prompts.update(p.text("name"), p.mapping("changes"), p.text("level", "patch")).to_dict(),
            "prompt.render": lambda p: rt.prompts.render(p.text("name"), p.mapping("variables", {}), p.text("version", None), p.text("part", "message")),
            "transform.a2t": lambda p: self._transformed(rt.transforms.a2t(p.text("agent"))),
            "transform.t2a": lambda p: self._transformed(rt.transforms.t2a(p.text("tool"))),
            "transform.e2t": self._e2t,
            "transform.t2e": self._t2e,
            "transform.a2e": lambda p: self._transformed(rt.transforms.a2e(p.text("agent"))),
            "transform.e2a": lambda p: self._transformed(rt.transforms.e2a(p.text("env"), p.text("policy_id"))),
            "transform.check": self._transform_check,
            "transform.records": lambda p: [r.to_dict() for r in rt.transforms.records],
            "retrieve": lambda p: _pairs(rt.registry(self._kind(p)).retrieve(p.text("query"), p.integer("k", 5))),
            "route": self._route,
            "session.open": lambda p: rt.memory.open(p.text("agent_name"), p.text("task_id")).to_dict(),
            "session.close": self._session_close,
            "memory.record": lambda p: rt.memory.record(p.text("session_id"), p.text("kind"), p.get("payload", object, None)).to_dict(),
            "memory.events": lambda p: [e.to_dict() for e in rt.memory.events(p.text("session_id"))],
            "trace.query": lambda p: [
                r.to_dict()
                for r in rt.tracer.query(p.text("session_id", None), p.text("task_id", None), p.text("record_id", None), p.integer("index", None))
            ],
            "model.register": self._model_register,
            "model.list": lambda p: rt.model.list(),
            "model.invoke": lambda p: rt.model.invoke(p.get("request", object, None), self._chain(p)),
            "evolve.run": self._evolve_run,
            "evolve.vars": lambda p: [v.to_dict() for v in rt.evolution.extract_vars(self._kind(p), p.text("name"))],
            "evolve.setvars": self._setvars,
            "evolve.rollback": lambda p: rt.evolution.rollback(self._kind(p), p.text("name"), p.text("to")).to_dict(),
            "evolve.log": lambda p: [o.to_dict() for o in rt.evolution.log],
            "version.history": lambda p: [r.to_dict() for r in rt.registry(self._kind(p)).history(p.text("name"))],
            "version.lifecycle": lambda p: rt.registry(self._kind(p)).set_lifecycle(p.text("name"), p.text("version"), p.text("state")).to_dict(),
            "state.save": lambda p: {"data_dir": str(rt.save_all(self._dir(p)))},
            "state.load": lambda p: {"data_dir": str(rt.load_all(self._dir(p)))},
            "server.ops": lambda p: sorted(self.ops),
        })

    def _common(self, prefix: str, reg) -> None:
        def vars_(p: Params):
            return [v.to_dict() for v in self.runtime.evolution.extract_vars(reg.kind, p.text("name"))]

        def setvars(p: Params):
            variables = [Variable.from_dict(v) for v in p.seq("vars")]
            if any(v.kind is not reg.kind for v in variables):
                raise ValidationFailed(f"{prefix}.setvars only accepts {reg.kind.value} variables")
            return [c.to_dict() for c in self.runtime.evolution.set_vars(variables)]

        def info(p: Params):
            version = p.text("version", None)
            cfg = reg.info(p.text("name")) if version is None else reg.lookup(p.text("name"), version)
            return cfg.to_dict()

        def unregister(p: Params):
            reg.unregister(p.text("name"))
            return {"unregistered": p.text("name")}

        def save(p: Params):
            path = self._manifest_path(p, reg.manifest_name)
            reg.save(path)
            return {"path": str(path)}

        def load(p: Params):
            path = self._manifest_path(p, reg.manifest_name)
            reg.load(path)
            return {"path": str(path), "active": reg.list()}

        self.ops.update({
            f"{prefix}.list": lambda p: reg.list(),
            f"{prefix}.info": info,
            f"{prefix}.copy": lambda p: reg.copy(p.text("name"), p.text("new_name")).to_dict(),
            f"{prefix}.unregister": unregister,
            f"{prefix}.restore": lambda p: reg.restore(p.text("name"), p.text("version")).to_dict(),
            f"{prefix}.contract": lambda p: reg.contract().to_dict(),
            f"{prefix}.retrieve": lambda p: _pairs(reg.retrieve(p.text("query"), p.integer("k", 5))),
            f"{prefix}.history": lambda p: [r.to_dict() for r in reg.history(p.text("name"))],
            f"{prefix}.lifecycle": lambda p: reg.set_lifecycle(p.text("name"), p.text("version"), p.text("state")).to_dict(),
            f"{prefix}.vars": vars_,
            f"{prefix}.setvars": setvars,
            f"{prefix}.save": save,
            f"{prefix}.load": load,
        })
        if prefix == "env":
            rt = self.runtime
            self.ops["env.invoke"] = lambda p: rt.environments.invoke(p.text("name"), p.text("action"), p.mapping("args", {}), p.text("session_id", None))
            self.ops["env.act"] = self.ops["env.invoke"]

    # -- helpers ----------------------------------------------------------------

    @staticmethod
    def _kind(p: Params) -> ComponentKind:
        try:
            return ComponentKind.parse(p.text("kind"))
        except (ValueError, TEAError) as exc:
            raise ProtocolError(f"unknown component kind {p.data.get('kind')!r}") from exc

    def _dir(self, p: Params):
        d = p.text("data_dir", None)
        return Path(d) if d is not None else self.data_dir

    def _manifest_path(self, p: Params, fname: str) -> Path:
        path = p.text("path", None)
        if path is not None:
            return Path(path)
        root = self._dir(p)
        if root is None:
            from .runtime import default_data_dir

            root = default_data_dir()
        if root is None:
            raise ProtocolError("no path given and no data directory configured")
        root.mkdir(parents=True, exist_ok=True)
        return root / fname

    @staticmethod
    def _transformed(pair) -> dict:
        cfg, rec = pair
        base = getattr(cfg, "base", cfg)
        return {"config": base.to_dict(), "record": rec.to_dict()}

    def _chain(self, p: Params) -> list:
        chain = p.seq("chain")
        if not all(isinstance(c, str) for c in chain):
            raise ProtocolError("chain must be a list of backend ids")
        return chain

    # -- kind-specific handlers -----------------------------------------------------

    def _tool_spec(self, p: Params, descriptor: Descriptor) -> ToolSpec:
        return ToolSpec(descriptor, _params_decl(p), p.text("behavior_id", None), p.text("source", ""), open_args=p.flag("open_args"))

    def _tool_register(self, p: Params):
        return self.runtime.tools.register(self._tool_spec(p, _descriptor(p))).to_dict()

    def _tool_update(self, p: Params):
        tools = self.runtime.tools
        with tools.lock:
            cur = tools.info(p.text("name"))
            schema = cur.representations.argument_schema
            d = cur.descriptor
            spec = ToolSpec(
                Descriptor(d.name, p.text("description", d.description), {**d.metadata, **p.mapping("metadata", {})}, p.flag("evolvable", d.evolvable)),
                _params_decl(p) if "params" in p.data else params_of(schema),
                p.text("behavior_id", cur.behavior_id),
                p.text("source", cur.source),
                open_args=p.flag("open_args", bool(schema.get("additional"))),
            )
            return tools.update(d.name, spec, p.text("level", "patch")).to_dict()

    def _env_register(self, p: Params):
        spec = EnvironmentSpec(_descriptor(p), _actions(p), p.text("behavior_id", None), p.text("source", ""))
        return self.runtime.environments.register(spec).base.to_dict()

    def _env_update(self, p: Params):
        envs = self.runtime.environments
        with envs.lock:
            cur = spec_of(envs.info(p.text("name")))
            d = cur.descriptor
            spec = EnvironmentSpec(
                Descriptor(d.name, p.text("description", d.description), {**d.metadata, **p.mapping("metadata", {})}, p.flag("evolvable", d.evolvable)),
                _actions(p) if "actions" in p.data else cur.actions,
                p.text("behavior_id", cur.behavior_id),
                p.text("source", cur.source),
            )
            return envs.update(d.name, spec, p.text("level", "patch")).base.to_dict()

    def _agent_register(self, p: Params):
        spec = AgentSpec(
            _descriptor(p), p.text("behavior_id", None), p.text("source", ""), _params_decl(p),
            p.flag("open_args", True), p.flag("reentrant"),
        )
        return self.runtime.agents.register(spec).to_dict()

    def _agent_update(self, p: Params):
        agents = self.runtime.agents
        with agents.lock:
            cur = agents.info(p.text("name"))
            schema = cur.representations.argument_schema
            d = cur.descriptor
            spec = AgentSpec(
                Descriptor(d.name, p.text("description", d.description), {**d.metadata, **p.mapping("metadata", {})}, p.flag("evolvable", d.evolvable)),
                p.text("behavior_id", cur.behavior_id),
                p.text("source", cur.source),
                _params_decl(p) if "params" in p.data else params_of(schema),
                p.flag("open_args", bool(schema.get("additional"))),
                p.flag("reentrant", d.metadata.get("reentrant") == "true"),
            )
            return agents.update(d.name, spec, p.text("level", "patch")).to_dict()

    def _agent_relate(self, p: Params):
        try:
            kind = RelationKind(p.text("kind"))
        except ValueError:
            raise ProtocolError(f"unknown relation kind {p.data.get('kind')!r}") from None
        added = self.runtime.agents.add_relation(RelationEdge(p.text("from"), p.text("to"), kind))
        return {"added": added}

    def _prompt_register(self, p: Params):
        modules = p.mapping("modules", {})
        slots = p.seq("trainable_slots", [])
        if not all(isinstance(v, str) for v in modules.values()) or not all(isinstance(s, str) for s in slots):
            raise ProtocolError("modules and trainable_slots must hold text")
        spec = PromptSpec(_descriptor(p), p.text("system_template", ""), p.text("message_template", ""), modules, tuple(slots))
        return self.runtime.prompts.register(spec).to_dict()

    def _e2t(self, p: Params):
        kit, rec = self.runtime.transforms.e2t(p.text("env"))
        return {"toolkit": kit.to_dict(), "record": rec.to_dict()}

    def _t2e(self, p: Params):
        kit = Toolkit.from_dict(p.mapping("kit"))
        return self._transformed(self.runtime.transforms.t2e(kit, p.text("name")))

    def _transform_check(self, p: Params):
        tm = self.runtime.transforms
        if "records" in p.data:
            recs = [TransformRecord.from_dict(Params(r).data) for r in p.seq("records")]
            if len(recs) != 2:
                raise ProtocolError("composition check takes exactly two records")
            res = tm.check_composition(recs[0], recs[1])
        else:
            res = tm.check_well_typed(TransformRecord.from_dict(p.mapping("record")))
        return {"ok": res.ok, "reasons": list(res.reasons)}

    def _route(self, p: Params):
        name, examined = self.runtime.route(self._kind(p), p.text("query"), p.integer("branching", 4))
        return {"name": name, "candidates_examined": examined}

    def _session_close(self, p: Params):
        sid = p.text("session_id")
        self.runtime.memory.close(sid)
        return {"closed": sid}

    def _model_register(self, p: Params):
        backend = ScriptedBackend.from_dict(p.mapping("backend"))
        self.runtime.model.register(backend)
        return {"registered": backend.id}

    def _evolve_run(self, p: Params):
        out = self.runtime.evolution.evolve(
            self._kind(p), p.text("name"), _critic(p.mapping("critic")), p.get("feedback", object, None),
            p.integer("max_iter", 3), p.text("slot", None),
        )
        return out.to_dict()

    def _setvars(self, p: Params):
        variables = [Variable.from_dict(Params(v).data) for v in p.seq("vars")]
        return [c.to_dict() for c in self.runtime.evolution.set_vars(variables)]

    # -- dispatch ---------------------------------------------------------------

    def mutates(self, op: str) -> bool:
        return not (op in READ_ONLY_OPS or op.endswith(READ_ONLY_SUFFIXES) or op in ("state.load", "server.ops"))

    def dispatch(self, req: Any) -> dict:
        """Route one envelope; never raises."""
        rid = req.get("id") if isinstance(req, dict) else None
        if not isinstance(rid, str):
            rid = None
        try:
            if not isinstance(req, dict):
                raise ProtocolError("request must be a mapping")
            if not isinstance(req.get("id"), str) or not req["id"]:
                raise ProtocolError("request id must be non-empty text")
            op = req.get("op")
            if not isinstance(op, str) or op not in self.ops:
                raise ProtocolError(f"unknown op {op!r}")
            handler = self.ops[op]
            result = handler(Params(req.get("params", {})))
            canonical.check_structured(result)
            if self.data_dir is not None and self.mutates(op):
                with self._save_lock:
                    self.runtime.save_all(self.data_dir)
            return {"id": rid, "ok": True, "result": result}
        except TEAError as exc:
            return {"id": rid, "ok": False, "error": exc.to_dict()}
        except Exception as exc:  # noqa: BLE001 - the server must answer every request
            log.exception("internal error while handling %r", rid)
            err = BackendFailure(f"internal error: {type(exc).__name__}: {exc}")
            return {"id": rid, "ok": False, "error": err.to_dict()}

    def dispatch_line(self, line: str | bytes) -> str:
        try:
            req = canonical.decode(line)
        except TEAError as exc:
            return canonical.encode({"id": None, "ok": False, "error": ProtocolError(f"malformed request: {exc}").to_dict()})
        return canonical.encode(self.dispatch(req))


# -- transports -----------------------------------------------------------------


def serve_stream(dispatcher: Dispatcher, reader: IO, writer: IO, pool: concurrent.futures.Executor) -> None:
    """Read envelopes until EOF, answer each exactly once, then drain in-flight work."""
    lock = threading.Lock()
    pending: list[concurrent.futures.Future] = []
    text_mode = isinstance(writer, io.TextIOBase)

    def handle(line):
        out = dispatcher.dispatch_line(line)
        data = out if text_mode else out.encode("utf-8")
        with lock:
            try:
                writer.write(data)
                writer.flush()
            except (OSError, ValueError):
                log.debug("client went away before its response")

    for raw in reader:
        line = raw.decode("utf-8", "replace") if isinstance(raw, bytes) else raw
        if not line.strip():
            continue
        pending.append(pool.submit(handle, line))
        pending = [f for f in pending if not f.done()]
    concurrent.futures.wait(pending)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        serve_stream(self.server.dispatcher, self.rfile, self.wfile, self.server.pool)


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True
    request_queue_size = 128


class _UnixServer(socketserver.ThreadingUnixStreamServer):
    daemon_threads = True
    request_queue_size = 128


def make_server(dispatcher: Dispatcher, listen: str, max_workers: int = 16):
    """Socket server for ``host:port`` or ``unix:/path``; call ``serve_forever``."""
    if listen.startswith("unix:"):
        path = listen[5:]
        Path(path).unlink(missing_ok=True)
        srv = _UnixServer(path, _Handler)
    else:
        host, _, port = listen.rpartition(":")
        try:
            srv = _TCPServer((host or "127.0.0.1", int(port)), _Handler)
        except ValueError:
            raise ProtocolError(f"bad listen address {listen!r}; use host:port, unix:/path or stdio") from None
    srv.dispatcher = dispatcher
    srv.pool = concurrent.futures.ThreadPoolExecutor(max_workers)
    return srv


def serve(dispatcher: Dispatcher, listen: str = "stdio", max_workers: int = 16) -> None:
    if listen == "stdio":
        with concurrent.futures.ThreadPoolExecutor(max_workers) as pool:
            serve_stream(dispatcher, sys.stdin, sys.stdout, pool)
        return
    srv = make_server(dispatcher, listen, max_workers)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.server_close()
        srv.pool.shutdown(wait=True)


def request(op: str, params: Mapping[str, Any] | None = None, rid: str = "1") -> dict:
    return {"id": rid, "op": op, "params": dict(params or {})}


__all__ = ["Dispatcher", "Params", "make_server", "request", "serve", "serve_stream"]
