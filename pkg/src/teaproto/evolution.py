"""Self-evolution: variables, critic-driven propose/score loops, gated commits and rollback.

The engine is the same for textgrad-style and reflection-style optimizers;
they differ only in how the critic proposes. A proposal is committed (minor
bump) on the first strict improvement over the baseline score, otherwise the
registry is left exactly as it was.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any, Callable, Mapping, Protocol, Sequence

from . import canonical
from .errors import BackendFailure, EvolutionRejected, LifecycleViolation, TEAError, ValidationFailed
from .managers.prompts import PromptConfig
from .types import ComponentConfig, ComponentKind, Version
from .versioning import BumpLevel

if TYPE_CHECKING:
    from .runtime import Runtime

SOURCE_SLOT = "source"


@dataclass(frozen=True)
class Variable:
    owner: tuple[ComponentKind, str, Version]
    slot: str
    content: str

    @property
    def kind(self) -> ComponentKind:
        return self.owner[0]

    @property
    def name(self) -> str:
        return self.owner[1]

    def to_dict(self) -> dict:
        kind, name, version = self.owner
        return {"owner": {"kind": kind.value, "name": name, "version": str(version)}, "slot": self.slot, "content": self.content}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Variable:
        try:
            o = data["owner"]
            return cls((ComponentKind.parse(o["kind"]), o["name"], Version.parse(o["version"])), data["slot"], data["content"])
        except (KeyError, TypeError) as exc:
            raise ValidationFailed(f"malformed variable: {exc}") from None


class Critic(Protocol):
    id: str

    def propose(self, var: Variable, feedback: Any) -> str: ...

    def score(self, content: str, ctx: Mapping[str, Any]) -> float: ...


@dataclass
class ScriptedCritic:
    """Deterministic critic: proposals come from a list, scores from a table.

    Contents missing from ``scores`` get ``default_score``. Once the proposal
    list is exhausted the last entry repeats.
    """

    id: str
    proposals: Sequence[str]
    scores: Mapping[str, float]
    default_score: float = 0.0

    def propose(self, var: Variable, feedback: Any) -> str:
        n = feedback.get("iteration", 1) if isinstance(feedback, dict) else 1
        return self.proposals[min(n, len(self.proposals)) - 1]

    def score(self, content: str, ctx: Mapping[str, Any]) -> float:
        return float(self.scores.get(content, self.default_score))


@dataclass
class FailingCritic:
    id: str = "failing"
    fail_on: str = "propose"

    def propose(self, var: Variable, feedback: Any) -> str:
        if self.fail_on == "propose":
            raise RuntimeError("critic could not produce a proposal")
        return var.content + " (revised)"

    def score(self, content: str, ctx: Mapping[str, Any]) -> float:
        if self.fail_on == "score":
            raise RuntimeError("critic could not score")
        return 0.0


@dataclass
class FunctionCritic:
    id: str
    propose_fn: Callable[[Variable, Any], str]
    score_fn: Callable[[str, Mapping[str, Any]], float]

    def propose(self, var: Variable, feedback: Any) -> str:
        return self.propose_fn(var, feedback)

    def score(self, content: str, ctx: Mapping[str, Any]) -> float:
        return self.score_fn(content, ctx)


@dataclass(frozen=True)
class LineageStep:
    iteration: int
    score: float
    accepted: bool

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "score": self.score, "accepted": self.accepted}


@dataclass(frozen=True)
class EvolutionOutcome:
    kind: ComponentKind
    name: str
    accepted: bool
    iterations: int
    initial_score: float
    final_score: float
    committed_version: Version | None
    lineage: tuple[LineageStep, ...]
    base_version: Version
    slot: str
    proposal: str | None = None
    critic: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "name": self.name,
            "accepted": self.accepted,
            "iterations": self.iterations,
            "initial_score": self.initial_score,
            "final_score": self.final_score,
            "committed_version": None if self.committed_version is None else str(self.committed_version),
            "lineage": [s.to_dict() for s in self.lineage],
            "base_version": str(self.base_version),
            "slot": self.slot,
            "proposal": self.proposal,
            "critic": self.critic,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> EvolutionOutcome:
        cv = d.get("committed_version")
        return cls(
            ComponentKind.parse(d["kind"]),
            d["name"],
            bool(d["accepted"]),
            int(d["iterations"]),
            float(d["initial_score"]),
            float(d["final_score"]),
            None if cv is None else Version.parse(cv),
            tuple(LineageStep(int(s["iteration"]), float(s["score"]), bool(s["accepted"])) for s in d["lineage"]),
            Version.parse(d["base_version"]),
            d["slot"],
            d.get("proposal"),
            d.get("critic", ""),
        )


def _finite(score: Any, what: str) -> float:
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
        raise BackendFailure(f"critic returned an invalid {what} score: {score!r}")
    return float(score)


class EvolutionManager:
    manifest_name = "evolution.manifest"

    def __init__(self, runtime: Runtime):
        self.runtime = runtime
        self._guard = threading.Lock()
        self._locks: dict[tuple[ComponentKind, str], threading.RLock] = {}
        self._log: list[EvolutionOutcome] = []

    def component_lock(self, kind: ComponentKind, name: str) -> threading.RLock:
        with self._guard:
            return self._locks.setdefault((kind, name), threading.RLock())

    @property
    def log(self) -> list[EvolutionOutcome]:
        with self._guard:
            return list(self._log)

    # -- variables --------------------------------------------------------------

    def _slots(self, config: ComponentConfig) -> dict[str, str]:
        if config.kind is ComponentKind.PROMPT:
            p = PromptConfig.of(config)
            return {s: p.modules[s] for s in sorted(p.trainable_slots)}
        return {SOURCE_SLOT: config.source}

    def extract_vars(self, kind: ComponentKind | str, name: str) -> list[Variable]:
        kind = ComponentKind.parse(kind)
        config = self.runtime.registry(kind).info(name)
        if not config.descriptor.evolvable:
            raise LifecycleViolation(f"{kind.value} {name!r} is not evolvable")
        owner = (kind, name, config.version)
        return [Variable(owner, slot, text) for slot, text in self._slots(config).items()]

    def apply(self, config: ComponentConfig, contents: Mapping[str, str]) -> ComponentConfig:
        """The config that results from writing ``contents`` into its slots."""
        allowed = self._slots(config)
        bad = sorted(set(contents) - set(allowed))
        if bad:
            raise ValidationFailed(f"invalid slots for {config.kind.value} {config.name!r}", bad)
        if config.kind is ComponentKind.PROMPT:
            prompts = self.runtime.prompts
            spec = prompts.spec_of(config)
            spec = replace(spec, modules={**spec.modules, **contents})
            return prompts.build_config(spec, config.version)
        return replace(config, source=contents[SOURCE_SLOT])

    def set_vars(self, variables: Sequence[Variable]) -> list[ComponentConfig]:
        groups: dict[tuple[ComponentKind, str], dict[str, str]] = {}
        for var in variables:
            if not isinstance(var.content, str):
                raise ValidationFailed(f"variable {var.slot!r} content must be text")
            groups.setdefault((var.kind, var.name), {})[var.slot] = var.content
        out = []
        with self.runtime.lock:
            # validate every owner before committing any, so a bad batch changes nothing
            for var in variables:
                reg = self.runtime.registry(var.kind)
                current = reg.info(var.name)
                reg.lookup(var.name, var.owner[2])
                if not current.descriptor.evolvable:
                    raise LifecycleViolation(f"{var.kind.value} {var.name!r} is not evolvable")
                self.apply(current, groups[(var.kind, var.name)])
            for (kind, name), contents in groups.items():
                with self.component_lock(kind, name):
                    reg = self.runtime.registry(kind)
                    out.append(reg.commit(name, lambda cur, c=contents: self.apply(cur, c), BumpLevel.MINOR))
        return out

    # -- the loop ---------------------------------------------------------------

    def evolve(
        self,
        kind: ComponentKind | str,
        name: str,
        critic: Critic,
        feedback: Any = None,
        max_iter: int = 3,
        slot: str | None = None,
    ) -> EvolutionOutcome:
        kind = ComponentKind.parse(kind)
        if isinstance(max_iter, bool) or not isinstance(max_iter, int) or max_iter < 1:
            raise ValidationFailed("max_iter must be a positive integer")
        with self.component_lock(kind, name):
            variables = self.extract_vars(kind, name)
            if not variables:
                raise LifecycleViolation(f"{kind.value} {name!r} has no evolvable slots")
            if slot is None:
                var = variables[0]
            else:
                matches = [v for v in variables if v.slot == slot]
                if not matches:
                    raise ValidationFailed(f"{kind.value} {name!r} has no evolvable slot {slot!r}")
                var = matches[0]
            base_version = var.owner[2]
            ctx = {"kind": kind.value, "name": name, "slot": var.slot, "feedback": feedback}
            baseline = _finite(self._call(critic.score, var.content, ctx), "baseline")
            lineage: list[LineageStep] = []
            best = baseline
            for i in range(1, max_iter + 1):
                fb = {"iteration": i, "feedback": feedback, "baseline": baseline, "lineage": [s.to_dict() for s in lineage]}
                proposal = self._call(critic.propose, var, fb)
                if not isinstance(proposal, str):
                    raise BackendFailure(f"critic proposal must be text, got {type(proposal).__name__}")
                score = _finite(self._call(critic.score, proposal, ctx), "proposal")
                improved = score > baseline
                lineage.append(LineageStep(i, score, improved))
                if improved:
                    committed = self._commit(kind, name, base_version, var.slot, proposal)
                    outcome = EvolutionOutcome(kind, name, True, i, baseline, score, committed.version, tuple(lineage),
                                               base_version, var.slot, proposal, getattr(critic, "id", ""))
                    with self._guard:
                        self._log.append(outcome)
                    return outcome
                best = max(best, score)
            return EvolutionOutcome(kind, name, False, max_iter, baseline, best, None, tuple(lineage),
                                    base_version, var.slot, None, getattr(critic, "id", ""))

    @staticmethod
    def _call(fn, *args):
        try:
            return fn(*args)
        except TEAError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise BackendFailure(f"critic failed: {type(exc).__name__}: {exc}") from exc

    def _commit(self, kind: ComponentKind, name: str, base: Version, slot: str, proposal: str) -> ComponentConfig:
        with self.runtime.lock:
            reg = self.runtime.registry(kind)
            current = reg.info(name)
            if current.version != base:
                raise EvolutionRejected(
                    f"{kind.value} {name!r} moved from {base} to {current.version} during evolution"
                )
            return reg.commit(name, lambda cur: self.apply(cur, {slot: proposal}), BumpLevel.MINOR)

    def replay(self, outcome: EvolutionOutcome) -> bool:
        """Re-derive the committed config from its base version and the logged proposal."""
        if not outcome.accepted:
            return False
        reg = self.runtime.registry(outcome.kind)
        base = reg.lookup(outcome.name, outcome.base_version)
        committed = reg.lookup(outcome.name, outcome.committed_version)
        rebuilt = replace(self.apply(base, {outcome.slot: outcome.proposal}), version=committed.version)
        return canonical.dumps(rebuilt.to_dict()) == canonical.dumps(committed.to_dict())

    def rollback(self, kind: ComponentKind | str, name: str, to: Version | str) -> ComponentConfig:
        kind = ComponentKind.parse(kind)
        with self.component_lock(kind, name):
            return self.runtime.registry(kind).restore(name, to)

    # -- persistence --------------------------------------------------------------

    def dump(self) -> dict:
        return {"outcomes": [o.to_dict() for o in self.log]}

    def restore_dump(self, data: dict) -> None:
        outcomes = [EvolutionOutcome.from_dict(o) for o in data.get("outcomes", ())]
        with self._guard:
            self._log = outcomes


__all__ = [
    "Critic",
    "EvolutionManager",
    "EvolutionOutcome",
    "FailingCritic",
    "FunctionCritic",
    "LineageStep",
    "ScriptedCritic",
    "Variable",
]
