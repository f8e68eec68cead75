"""Randomized interleaving checks for the freshen / invocation race.

One schedule = one invocation of a generated function with ``size``
freshenable steps, plus one freshen call issued ``lead_ms`` before the
invocation starts (negative: after). Same-instant scheduling choices are made
by a seeded random chooser, and some schedules stall the executor past the
wrapper's wait timeout. Each schedule is checked for

* at most one network action per (entry, epoch),
* termination (no deadlock, no runaway),
* a return value identical to a freshen-disabled run.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

from . import engine
from .functions import Compute, DataGet, DataPut, FunctionDef, arg, const
from .netsim import Network, SimEndpoint
from .runtime import FreshenMode, RuntimeConfig, init, run
from .sim import DeadlockError, Kernel, RandomChooser, Sleep, StepLimitExceeded

LEAD_RANGE_MS = (-200, 2000)
_ENDPOINTS = (
    SimEndpoint("a", rtt=2.0, bandwidth=1000.0, location="local"),
    SimEndpoint("b", rtt=4.0, bandwidth=1000.0, location="edge"),
    SimEndpoint("c", rtt=10.0, bandwidth=500.0, location="remote"),
)


def make_function(size: int) -> FunctionDef:
    """``size`` freshenable steps (gets and puts alternating over three
    endpoints), short computes in between and one argument-dependent get."""
    constants = {"EP_A": "a", "EP_B": "b", "EP_C": "c"}
    steps = []
    eps = ("EP_A", "EP_B", "EP_C")
    for k in range(size):
        ep = eps[k % 3]
        if k % 2 == 0:
            constants[f"IN{k}"] = f"in-{k}"
            steps.append(DataGet(const(ep), const(f"IN{k}")))
        else:
            constants[f"OUT{k}"] = f"out-{k}"
            steps.append(DataPut(const(ep), const(f"OUT{k}"), size=2000 * (k % 3 + 1)))
        steps.append(Compute(2.0))
    steps.append(DataGet(const("EP_A"), arg("key")))
    return FunctionDef(f"f{size}", constants, steps, args={"key": "dyn"}).validate()


@dataclass(frozen=True)
class ScheduleCase:
    size: int
    seed: int
    lead_ms: float
    mode: FreshenMode = FreshenMode.FULL
    object_size: int = 4000
    ttl_ms: float = 0.0
    consume_fetch: bool = False
    wait_timeout_ms: float | None = None
    stall: tuple[tuple[int, float], ...] = ()
    prior_invocation: bool = False
    use_deadline: bool = True

    @classmethod
    def random(cls, size: int, rng: random.Random) -> "ScheduleCase":
        if rng.random() < 0.5:
            lead = float(rng.randint(*LEAD_RANGE_MS))
        else:
            lead = float(rng.randint(-20, 20))  # dense ties around the invocation start
        stall = ()
        if rng.random() < 0.25:
            stall = ((rng.randrange(size), float(rng.choice([5, 40, 150]))),)
        return cls(
            size=size,
            seed=rng.getrandbits(32),
            lead_ms=lead,
            mode=rng.choice([FreshenMode.FULL, FreshenMode.FULL, FreshenMode.PREFETCH_ONLY, FreshenMode.WARM_ONLY]),
            object_size=rng.choice([0, 1000, 4000, 30000]),
            ttl_ms=rng.choice([0.0, 20.0, 10_000.0]),
            consume_fetch=rng.random() < 0.3,
            wait_timeout_ms=rng.choice([None, None, 15.0, 60.0]),
            stall=stall,
            prior_invocation=rng.random() < 0.3,
            use_deadline=rng.random() < 0.5,
        )


@dataclass
class ScheduleResult:
    case: ScheduleCase
    double_issues: list[tuple] = field(default_factory=list)
    deadlock: str | None = None
    value: bytes | None = None
    expected: bytes | None = None
    branches: list[str] = field(default_factory=list)

    @property
    def value_ok(self) -> bool:
        return self.value is not None and self.value == self.expected

    @property
    def ok(self) -> bool:
        return not self.double_issues and self.deadlock is None and self.value_ok


def _network(case: ScheduleCase, seed) -> Network:
    return Network(_ENDPOINTS, default_object_size=case.object_size, seed=seed)


@lru_cache(maxsize=256)
def reference_value(size: int, object_size: int) -> bytes:
    """Return value of the generated function with freshen disabled."""
    fn = make_function(size)
    kernel = Kernel()
    net = Network(_ENDPOINTS, default_object_size=object_size)
    ctx = init(fn, kernel, net, RuntimeConfig(), container_id="ref")
    proc = kernel.spawn(run(ctx, mode=FreshenMode.DISABLED), "ref")
    kernel.run()
    return proc.result()[0]


def action_counts(net: Network) -> Counter:
    """Successful fetch / warm actions per (container, entry, epoch)."""
    counts: Counter = Counter()
    for r in net.log:
        tag = r.tag
        if not r.ok or tag is None or tag.entry is None:
            continue
        if (r.kind == "transfer" and tag.op == "get") or r.kind == "warm_cwnd":
            counts[(tag.container, tag.entry, tag.epoch, tag.op)] += 1
    return counts


def run_schedule(case: ScheduleCase, *, max_steps: int = 200_000) -> ScheduleResult:
    fn = make_function(case.size)
    result = ScheduleResult(case, expected=reference_value(case.size, case.object_size))
    kernel = Kernel(RandomChooser(case.seed), max_steps=max_steps)
    net = _network(case, case.seed)
    config = RuntimeConfig(default_ttl_ms=case.ttl_ms, consume_fetch=case.consume_fetch,
                           wait_timeout_ms=case.wait_timeout_ms)
    ctx = init(fn, kernel, net, config, container_id="c0")
    plan = engine.infer_plan(fn).only(case.mode.prefetch, case.mode.warm)
    stall = dict(case.stall)
    start = 300.0 if case.prior_invocation else max(0.0, case.lead_ms) + 1.0
    invocation = {}

    def invoke():
        if case.prior_invocation:
            yield from run(ctx, mode=case.mode)
        yield Sleep(max(0.0, start - kernel.now))
        invocation["value"], invocation["record"] = yield from run(ctx, mode=case.mode)

    def fresh():
        yield Sleep(max(0.0, start - case.lead_ms - kernel.now))
        deadline = start if case.use_deadline else None
        yield from engine.freshen(ctx, plan, deadline=deadline, stall=stall)

    kernel.spawn(invoke(), "invocation")
    kernel.spawn(fresh(), "freshen")
    try:
        kernel.run()
    except (DeadlockError, StepLimitExceeded) as exc:
        result.deadlock = f"{type(exc).__name__}: {exc}"
        return result
    for proc in kernel.processes:
        if proc.error is not None:
            result.deadlock = f"{proc.name} raised {proc.error!r}"
            return result
    result.value = invocation.get("value")
    if "record" in invocation:
        result.branches = list(invocation["record"].branches)
    result.double_issues = [k for k, n in action_counts(net).items() if n > 1]
    return result


@dataclass
class SuiteSummary:
    size: int
    schedules: int = 0
    double_issues: int = 0
    deadlocks: int = 0
    value_mismatches: int = 0
    branches: Counter = field(default_factory=Counter)
    failures: list[ScheduleResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.schedules > 0 and not (self.double_issues or self.deadlocks or self.value_mismatches)


def run_suite(size: int, schedules: int = 1000, seed: int = 0) -> SuiteSummary:
    rng = random.Random(f"interleave/{seed}/{size}")
    summary = SuiteSummary(size)
    for _ in range(schedules):
        res = run_schedule(ScheduleCase.random(size, rng))
        summary.schedules += 1
        summary.branches.update(res.branches)
        bad = False
        if res.double_issues:
            summary.double_issues += 1
            bad = True
        if res.deadlock:
            summary.deadlocks += 1
            bad = True
        elif not res.value_ok:
            summary.value_mismatches += 1
            bad = True
        if bad and len(summary.failures) < 5:
            summary.failures.append(res)
    return summary
