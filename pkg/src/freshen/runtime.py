"""Warm containers: OpenWhisk-style init/run hooks over the step DSL."""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Generator, Mapping

from . import engine
from .cache import FreshenCache
from .engine import FreshenReport, FrState, WrapperEvent, build_fr_state
from .functions import Compute, DataGet, DataPut, FunctionDef, Ref
from .netsim import Network, NetworkError, SimConnection, WarmPolicy
from .resources import RequestTag, fetch_object, inline_warm, put_object, worst_case_action_time
from .sim import Kernel, Sleep


class FreshenMode(str, Enum):
    DISABLED = "disabled"
    PREFETCH_ONLY = "prefetch-only"
    WARM_ONLY = "warm-only"
    FULL = "full-freshen"

    @property
    def prefetch(self) -> bool:
        return self in (FreshenMode.PREFETCH_ONLY, FreshenMode.FULL)

    @property
    def warm(self) -> bool:
        return self in (FreshenMode.WARM_ONLY, FreshenMode.FULL)

    @classmethod
    def parse(cls, text: "str | FreshenMode") -> "FreshenMode":
        if isinstance(text, FreshenMode):
            return text
        aliases = {"full": cls.FULL, "off": cls.DISABLED, "prefetch": cls.PREFETCH_ONLY, "warm": cls.WARM_ONLY}
        try:
            return aliases.get(text) or cls(text)
        except ValueError:
            raise ValueError(f"unknown freshen mode {text!r}; expected one of "
                             f"{', '.join(m.value for m in cls)}") from None


ALL_MODES = tuple(FreshenMode)


@dataclass(frozen=True)
class RuntimeConfig:
    default_ttl_ms: float = 0.0
    warm_policy: WarmPolicy = field(default_factory=WarmPolicy)
    wait_timeout_ms: float | None = None  # None: 2 x modeled worst-case action time
    consume_fetch: bool = False  # invalidate a fetch entry once an invocation reads it
    cold_start_ms: float = 0.0

    def ttl_for(self, function: FunctionDef, step_index: int) -> float:
        step = function.steps[step_index]
        if isinstance(step, DataGet) and step.ttl_ms is not None:
            return step.ttl_ms
        if function.ttl_ms is not None:
            return function.ttl_ms
        return self.default_ttl_ms


@dataclass
class InvocationRecord:
    function: str
    args: Any
    t_trigger: float
    t_start: float
    t_end: float = 0.0
    step_durations: list[float] = field(default_factory=list)
    cold_start: bool = False
    freshen_mode: str = "disabled"
    branches: list[str] = field(default_factory=list)
    error: str | None = None
    failed_step: int | None = None

    @property
    def latency(self) -> float:
        return self.t_end - self.t_start


class InvocationError(RuntimeError):
    def __init__(self, step: int, cause: Exception, record: InvocationRecord):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause
        self.record = record


_container_ids = itertools.count(1)


@dataclass(eq=False)
class RuntimeContext:
    container_id: str
    function: FunctionDef
    kernel: Kernel
    network: Network
    config: RuntimeConfig
    runtime_vars: dict[str, Any] = field(default_factory=dict)
    fr_state: FrState = field(default_factory=FrState)
    connections: dict[str, SimConnection] = field(default_factory=dict)
    warm: bool = True
    cache: FreshenCache = field(default_factory=FreshenCache)
    wrapper_log: list[WrapperEvent] = field(default_factory=list)
    freshen_reports: list[FreshenReport] = field(default_factory=list)
    invocations: list[InvocationRecord] = field(default_factory=list)
    pending_cold_start: bool = False


def init(function: FunctionDef, clock: Kernel, network: Network, config: RuntimeConfig | None = None,
         *, container_id: str | None = None, cold: bool = False) -> RuntimeContext:
    """The init hook: validate and load the function into a fresh runtime.

    Allocates one idle fr_state entry per freshenable step, in step order.
    A cold container starts with empty runtime-scoped state and fr_state;
    its first invocation pays ``config.cold_start_ms``.
    """
    function.validate()
    config = config or RuntimeConfig()
    ctx = RuntimeContext(
        container_id=container_id or f"c{next(_container_ids)}",
        function=function,
        kernel=clock,
        network=network,
        config=config,
        pending_cold_start=cold,
    )
    ctx.fr_state = build_fr_state(function, lambda i: config.ttl_for(function, i))
    for entry in ctx.fr_state:
        if config.wait_timeout_ms is not None:
            entry.wait_timeout = config.wait_timeout_ms
        elif entry.endpoint_id in network.endpoints:
            kind = "warm" if entry.kind == "warm" else "fetch"
            obj = entry.key[1] if entry.kind == "fetch" else None
            entry.wait_timeout = 2 * worst_case_action_time(ctx, kind, entry.endpoint_id, obj)
    return ctx


def _digest(*parts: Any) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode() if not isinstance(p, bytes) else p)
        h.update(b"\x00")
    return h.hexdigest().encode()


def _resolve(ctx: RuntimeContext, ref: Ref, args: Mapping[str, Any], outputs: list[Any]) -> str:
    if ref.kind == "const":
        return str(ctx.function.constants[ref.name])
    if ref.kind == "arg":
        return str(args[ref.name])
    value = outputs[ref.name]
    return value.decode() if isinstance(value, bytes) else str(value)


def run(ctx: RuntimeContext, args: Mapping[str, Any] | None = None, *,
        mode: FreshenMode | str = FreshenMode.FULL, t_trigger: float | None = None,
        put_size: int = 0) -> Generator[Any, Any, tuple[Any, InvocationRecord]]:
    """The run hook, as a simulation process returning (value, record).

    Freshenable gets go through FrFetch and freshenable puts through FrWarm
    when ``mode`` enables that action kind; everything else executes directly.
    """
    mode = FreshenMode.parse(mode)
    kernel = ctx.kernel
    fn = ctx.function
    args = dict(fn.args if args is None else args)
    if ctx.pending_cold_start and ctx.config.cold_start_ms:
        yield Sleep(ctx.config.cold_start_ms)
    record = InvocationRecord(fn.name, args, t_trigger if t_trigger is not None else kernel.now, kernel.now,
                              cold_start=ctx.pending_cold_start, freshen_mode=mode.value)
    ctx.pending_cold_start = False
    entry_of_step = {s: i for i, s in enumerate(fn.freshenable_steps())}
    outputs: list[Any] = []
    for i, step in enumerate(fn.steps):
        started = kernel.now
        direct = RequestTag(fn.name, ctx.container_id, "invocation")
        branch = "direct"
        try:
            if isinstance(step, Compute):
                yield Sleep(step.duration_ms)
                value = _digest(fn.name, sorted(args.items()), *outputs)
                if step.keep:
                    ctx.runtime_vars[step.keep] = value
            elif isinstance(step, DataGet):
                endpoint = _resolve(ctx, step.endpoint, args, outputs)
                obj = _resolve(ctx, step.object, args, outputs)
                if mode.prefetch and i in entry_of_step:
                    before = len(ctx.wrapper_log)
                    value = yield from engine.fr_fetch(
                        ctx, entry_of_step[i],
                        lambda tag, e=endpoint, o=obj: fetch_object(ctx, e, o, tag))
                    branch = _branch(ctx, before)
                else:
                    value = yield from fetch_object(ctx, endpoint, obj, direct)
            else:
                endpoint = _resolve(ctx, step.endpoint, args, outputs)
                obj = _resolve(ctx, step.object, args, outputs)
                payload = outputs[-1] if outputs else _digest(fn.name, sorted(args.items()))
                size = step.size if step.size is not None else put_size
                if mode.warm and i in entry_of_step:
                    before = len(ctx.wrapper_log)
                    yield from engine.fr_warm(ctx, entry_of_step[i],
                                              lambda tag, e=endpoint: inline_warm(ctx, e, tag))
                    branch = _branch(ctx, before)
                value = yield from put_object(ctx, endpoint, obj, payload, size, direct)
        except NetworkError as exc:
            record.step_durations.append(kernel.now - started)
            record.branches.append(branch)
            record.t_end = kernel.now
            record.error = str(exc)
            record.failed_step = i
            ctx.invocations.append(record)
            raise InvocationError(i, exc, record) from exc
        outputs.append(value)
        record.step_durations.append(kernel.now - started)
        record.branches.append(branch)
    record.t_end = kernel.now
    ctx.runtime_vars["invocations"] = ctx.runtime_vars.get("invocations", 0) + 1
    ctx.invocations.append(record)
    return outputs[-1], record


def _branch(ctx: RuntimeContext, before: int) -> str:
    events = ctx.wrapper_log[before:]
    return events[-1].branch if events else "direct"
