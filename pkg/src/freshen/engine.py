"""fr_state entries, freshen plans, the freshen executor and the FrFetch / FrWarm / FrWait wrappers.

Each fr_state entry coordinates exactly two actors: the freshen executor and
the invocation's wrapper at the matching resource-access site. Whoever moves an
entry from idle to running owns that epoch and is the only one allowed to
issue its network action; the other side either skips (executor) or waits
(wrapper).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Callable, Generator, Mapping

from .cache import MISS
from .functions import Compute, DataGet, DataPut, FunctionDef
from .netsim import NetworkError
from .resources import RequestTag, estimated_warm_time, fetch_object, modeled_fetch_time, warm_connection
from .sim import Signal, Sleep, Wait, Yield

if TYPE_CHECKING:
    from .runtime import RuntimeContext


class EntryState(str, Enum):
    IDLE = "idle"
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"


IDLE, RUNNING, FINISHED, FAILED = EntryState

_ALLOWED = {
    (IDLE, RUNNING),
    (RUNNING, FINISHED),
    (RUNNING, FAILED),
    (FAILED, IDLE),
    (FINISHED, IDLE),
}


class IllegalTransition(RuntimeError):
    pass


@dataclass(eq=False)
class FreshenEntry:
    index: int
    kind: str  # "fetch" | "warm"
    key: tuple  # (endpoint, object) for fetch, (endpoint,) for warm
    ttl: float = 0.0
    wait_timeout: float = math.inf
    state: EntryState = IDLE
    result: Any = None
    freshened_at: float | None = None
    epoch: int = 0
    owner: str | None = None
    changed: Signal = field(default_factory=Signal)
    transitions: list[tuple[float, EntryState, EntryState, str, int]] = field(default_factory=list)

    @property
    def endpoint_id(self) -> str:
        return self.key[0]

    def _move(self, new: EntryState, actor: str, now: float) -> None:
        old = self.state
        if (old, new) not in _ALLOWED:
            raise IllegalTransition(f"entry {self.index}: {old.value} -> {new.value}")
        self.state = new
        self.transitions.append((now, old, new, actor, self.epoch))
        if new is not RUNNING:
            self.changed.notify_all()

    def try_claim(self, actor: str, now: float) -> int | None:
        """Atomic test-and-transition to running. Returns the epoch token, or None."""
        if self.state is FAILED:
            self._move(IDLE, actor, now)
        if self.state is not IDLE:
            return None
        self.epoch += 1
        self.owner = actor
        self.result = None
        self._move(RUNNING, actor, now)
        return self.epoch

    def takeover(self, actor: str, now: float, epoch: int) -> int | None:
        """Claim a running entry whose owner missed the wait deadline.

        The stalled epoch is closed as failed and a new epoch begins, so the
        stale owner's late finish() is rejected by its token.
        """
        if self.state is not RUNNING or self.epoch != epoch:
            return None
        self._move(FAILED, actor, now)
        return self.try_claim(actor, now)

    def finish(self, token: int, now: float, result: Any = None) -> bool:
        if self.state is not RUNNING or token != self.epoch:
            return False
        self.result = result if self.kind == "fetch" else None
        self.freshened_at = now
        self._move(FINISHED, self.owner or "?", now)
        return True

    def fail(self, token: int, now: float) -> bool:
        if self.state is not RUNNING or token != self.epoch:
            return False
        self.result = None
        self._move(FAILED, self.owner or "?", now)
        return True

    def reset(self, actor: str, now: float) -> None:
        """finished -> idle (TTL expiry, consumption or explicit invalidation)."""
        if self.state is FINISHED:
            self.result = None
            self._move(IDLE, actor, now)

    def is_stale(self, now: float) -> bool:
        return (self.kind == "fetch" and self.state is FINISHED
                and self.freshened_at is not None and now - self.freshened_at > self.ttl)


class FrState(list):
    """Ordered runtime-scoped list of FreshenEntry."""

    def shape(self) -> tuple[tuple[int, str, tuple], ...]:
        return tuple((e.index, e.kind, e.key) for e in self)

    def states(self) -> list[EntryState]:
        return [e.state for e in self]


# -- plans -----------------------------------------------------------------

@dataclass(frozen=True)
class Prefetch:
    endpoint_id: str
    object_id: str


@dataclass(frozen=True)
class WarmConnection:
    endpoint_id: str


@dataclass(frozen=True)
class PlanAction:
    index: int
    action: Prefetch | WarmConnection
    step: int


@dataclass(frozen=True)
class FreshenPlan:
    function_name: str
    actions: tuple[PlanAction, ...] = ()

    def only(self, prefetch: bool = True, warm: bool = True) -> "FreshenPlan":
        keep = tuple(a for a in self.actions
                     if (prefetch and isinstance(a.action, Prefetch)) or (warm and isinstance(a.action, WarmConnection)))
        return FreshenPlan(self.function_name, keep)

    def summary(self) -> list[tuple[int, str]]:
        return [(a.index, type(a.action).__name__) for a in self.actions]

    def __len__(self):
        return len(self.actions)


def infer_plan(function: FunctionDef) -> FreshenPlan:
    """Derive the freshen procedure from the step list alone (no invocation args).

    Freshenable gets become prefetches and freshenable puts become connection
    warms, indexed in step order. Anything else is left to the invocation.
    """
    actions = []
    for index, step_index in enumerate(function.freshenable_steps()):
        step = function.steps[step_index]
        endpoint = function.constant_endpoint(step)
        if isinstance(step, DataGet):
            action = Prefetch(endpoint, str(function.constants[step.object.name]))
        elif isinstance(step, DataPut):
            action = WarmConnection(endpoint)
        else:  # pragma: no cover - compute steps are never freshenable
            continue
        actions.append(PlanAction(index, action, step_index))
    return FreshenPlan(function.name, tuple(actions))


def build_fr_state(function: FunctionDef, ttl_for: Callable[[int], float]) -> FrState:
    state = FrState()
    for index, step_index in enumerate(function.freshenable_steps()):
        step = function.steps[step_index]
        endpoint = function.constant_endpoint(step)
        if isinstance(step, DataGet):
            key = (endpoint, str(function.constants[step.object.name]))
            state.append(FreshenEntry(index, "fetch", key, ttl=ttl_for(step_index)))
        else:
            state.append(FreshenEntry(index, "warm", (endpoint,)))
    return state


# -- executor --------------------------------------------------------------

@dataclass
class ActionOutcome:
    index: int
    action: str
    outcome: str  # "performed" | "skipped" | "failed"
    started: float
    finished: float
    detail: str = ""


@dataclass
class FreshenReport:
    function: str
    container: str
    issued_at: float
    deadline: float | None = None
    outcomes: list[ActionOutcome] = field(default_factory=list)
    finished_at: float | None = None

    def count(self, outcome: str) -> int:
        return sum(1 for o in self.outcomes if o.outcome == outcome)


def expected_step_offset(ctx: "RuntimeContext", plan: FreshenPlan, step_index: int, lead: float = math.inf) -> float:
    """Modeled time from invocation start until ``step_index`` begins.

    Compute steps count at their declared duration. Constant-argument gets use
    a cold-window estimate, reduced by ``lead`` when the plan prefetches them
    (a prefetch with enough lead costs the invocation nothing). Steps whose
    cost depends on invocation arguments count as zero.
    """
    fn = ctx.function
    prefetched = {a.step for a in plan.actions if isinstance(a.action, Prefetch)}
    total = 0.0
    for i, step in enumerate(fn.steps[:step_index]):
        if isinstance(step, Compute):
            total += step.duration_ms
        elif isinstance(step, DataGet) and step.freshenable:
            endpoint = fn.constant_endpoint(step)
            if endpoint in ctx.network.endpoints:
                cost = modeled_fetch_time(ctx, endpoint, str(fn.constants[step.object.name]))
                total += max(0.0, cost - lead) if i in prefetched else cost
    return total


def freshen(ctx: "RuntimeContext", plan: FreshenPlan, *, deadline: float | None = None,
            stall: Mapping[int, float] | None = None) -> Generator[Any, Any, FreshenReport]:
    """Run ``plan`` against ``ctx`` as a separate simulation process.

    Prefetches run as early as possible. With a ``deadline`` (predicted
    invocation start) connection warms are delayed to finish when the
    invocation is expected to reach the step that uses them, since an idle
    warmed window decays. ``stall`` injects extra delay (ms) into the
    action for a given entry index, after it has been claimed.
    """
    kernel = ctx.kernel
    report = FreshenReport(ctx.function.name, ctx.container_id, kernel.now, deadline)
    for planned in plan.actions:
        entry = ctx.fr_state[planned.index]
        action = planned.action
        name = type(action).__name__
        if isinstance(action, WarmConnection) and deadline is not None:
            lead = max(0.0, deadline - report.issued_at)
            start_at = (deadline + expected_step_offset(ctx, plan, planned.step, lead)
                        - estimated_warm_time(ctx, action.endpoint_id))
            if start_at > kernel.now:
                yield Sleep(start_at - kernel.now)
        yield Yield()
        started = kernel.now
        if entry.is_stale(started):
            entry.reset("freshen", started)
            ctx.cache.invalidate(entry.key)
        token = entry.try_claim("freshen", started)
        if token is None:
            report.outcomes.append(ActionOutcome(planned.index, name, "skipped", started, started, entry.state.value))
            continue
        tag = RequestTag(ctx.function.name, ctx.container_id, "freshen", planned.index, token)
        try:
            if stall and planned.index in stall:
                yield Sleep(stall[planned.index])
            if isinstance(action, Prefetch):
                private = ctx.function.connection_scope == "invocation"
                value = yield from fetch_object(ctx, action.endpoint_id, action.object_id, tag, shared=not private)
            else:
                yield from warm_connection(ctx, action.endpoint_id, tag)
                value = None
        except NetworkError as exc:
            entry.fail(token, kernel.now)
            report.outcomes.append(ActionOutcome(planned.index, name, "failed", started, kernel.now, str(exc)))
            continue
        if entry.finish(token, kernel.now, value):
            if entry.kind == "fetch":
                ctx.cache.put(entry.key, value, entry.ttl, kernel.now)
            report.outcomes.append(ActionOutcome(planned.index, name, "performed", started, kernel.now))
        else:
            report.outcomes.append(ActionOutcome(planned.index, name, "failed", started, kernel.now, "superseded"))
    report.finished_at = kernel.now
    ctx.freshen_reports.append(report)
    return report


# -- wrappers --------------------------------------------------------------

@dataclass(frozen=True)
class WrapperEvent:
    index: int
    branch: str  # "hit" | "wait" | "self"
    epoch: int
    at: float


def fr_wait(ctx: "RuntimeContext", index: int):
    """Block until the entry leaves the running epoch observed on entry.

    Returns "finished", "failed" or "timeout"; a timeout is handled by the
    caller as a failed entry.
    """
    entry = ctx.fr_state[index]
    kernel = ctx.kernel
    epoch = entry.epoch
    deadline = kernel.now + entry.wait_timeout
    while entry.state is RUNNING and entry.epoch == epoch:
        remaining = deadline - kernel.now
        if remaining <= 0:
            return "timeout"
        yield Wait(entry.changed, None if math.isinf(remaining) else remaining)
    if entry.epoch == epoch and entry.state is FINISHED:
        return "finished"
    return "failed"


def _claim_or_takeover(entry: FreshenEntry, now: float, outcome: str, epoch: int) -> int | None:
    if outcome == "timeout":
        return entry.takeover("invocation", now, epoch)
    return entry.try_claim("invocation", now)


def fr_fetch(ctx: "RuntimeContext", index: int, fetch: Callable[[RequestTag], Generator]):
    """FrFetch: return the freshened result, wait for an in-flight prefetch, or fetch here."""
    entry = ctx.fr_state[index]
    kernel = ctx.kernel
    waited = False
    while True:
        yield Yield()
        now = kernel.now
        if entry.state is FINISHED:
            value = ctx.cache.get(entry.key, now)
            if value is MISS:
                entry.reset("invocation", now)
                continue
            ctx.wrapper_log.append(WrapperEvent(index, "wait" if waited else "hit", entry.epoch, now))
            if ctx.config.consume_fetch:
                entry.reset("invocation", now)
                ctx.cache.invalidate(entry.key)
            return value
        outcome = None
        observed = entry.epoch
        if entry.state is RUNNING:
            outcome = yield from fr_wait(ctx, index)
            waited = True
            if outcome == "finished":
                continue
        now = kernel.now
        token = _claim_or_takeover(entry, now, outcome or "", observed)
        if token is None:
            continue
        ctx.wrapper_log.append(WrapperEvent(index, "self", token, now))
        tag = RequestTag(ctx.function.name, ctx.container_id, "invocation", index, token)
        try:
            value = yield from fetch(tag)
        except NetworkError:
            entry.fail(token, kernel.now)
            raise
        if entry.finish(token, kernel.now, value):
            ctx.cache.put(entry.key, value, entry.ttl, kernel.now)
            if ctx.config.consume_fetch:
                entry.reset("invocation", kernel.now)
                ctx.cache.invalidate(entry.key)
        return value


def fr_warm(ctx: "RuntimeContext", index: int, warm: Callable[[RequestTag], Generator]):
    """FrWarm: same three branches as FrFetch, without a result.

    A warm entry is consumed by the invocation that relies on it: it goes back
    to idle once the wrapper returns, so the next invocation warms again.
    """
    entry = ctx.fr_state[index]
    kernel = ctx.kernel
    waited = False
    while True:
        yield Yield()
        now = kernel.now
        if entry.state is FINISHED:
            ctx.wrapper_log.append(WrapperEvent(index, "wait" if waited else "hit", entry.epoch, now))
            entry.reset("invocation", now)
            return None
        outcome = None
        observed = entry.epoch
        if entry.state is RUNNING:
            outcome = yield from fr_wait(ctx, index)
            waited = True
            if outcome == "finished":
                continue
        now = kernel.now
        token = _claim_or_takeover(entry, now, outcome or "", observed)
        if token is None:
            continue
        ctx.wrapper_log.append(WrapperEvent(index, "self", token, now))
        tag = RequestTag(ctx.function.name, ctx.container_id, "invocation", index, token)
        try:
            yield from warm(tag)
        except NetworkError:
            entry.fail(token, kernel.now)
            return None
        if entry.finish(token, kernel.now):
            entry.reset("invocation", kernel.now)
        return None

