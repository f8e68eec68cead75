"""Invocation prediction over function chains, and the freshen accounting ledger."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

# Median trigger-to-start delays (ms) measured on AWS over 20k runs.
MEASURED_TRIGGER_DELAYS_MS = {
    "step-functions": 64.0,
    "direct": 60.0,
    "sns": 253.0,
    "s3": 1282.0,
}

SERVICE_CLASSES = ("latency-sensitive", "latency-insensitive")
EVENT_KINDS = ("invocation-started", "invocation-finished", "trigger-fired")


class ChainError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    trigger: str
    probability: float = 1.0


@dataclass(frozen=True)
class ChainSpec:
    name: str
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    entry: str
    median_runtime_ms: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(Edge(*e) if not isinstance(e, Edge) else e for e in self.edges))
        object.__setattr__(self, "median_runtime_ms", dict(self.median_runtime_ms))

    def validate(self) -> "ChainSpec":
        if len(set(self.nodes)) != len(self.nodes):
            raise ChainError(f"chain {self.name!r}: duplicate nodes")
        if self.entry not in self.nodes:
            raise ChainError(f"chain {self.name!r}: entry {self.entry!r} is not a node")
        for e in self.edges:
            for end in (e.source, e.target):
                if end not in self.nodes:
                    raise ChainError(f"chain {self.name!r}: edge {e.source}->{e.target} references unknown node {end!r}")
            if not 0 <= e.probability <= 1:
                raise ChainError(f"chain {self.name!r}: edge {e.source}->{e.target} probability out of [0, 1]")
        if any(e.target == self.entry for e in self.edges):
            raise ChainError(f"chain {self.name!r}: entry {self.entry!r} has an incoming edge")
        cycle = self.find_cycle()
        if cycle:
            raise ChainError(f"chain {self.name!r}: cycle {' -> '.join(cycle)}")
        return self

    def find_cycle(self) -> list[str] | None:
        succ: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            succ.setdefault(e.source, []).append(e.target)
        color: dict[str, int] = {}
        stack: list[str] = []

        def visit(n):
            color[n] = 1
            stack.append(n)
            for m in succ.get(n, ()):
                if color.get(m) == 1:
                    return stack[stack.index(m):] + [m]
                if m not in color:
                    found = visit(m)
                    if found:
                        return found
            stack.pop()
            color[n] = 2
            return None

        for n in self.nodes:
            if n not in color:
                found = visit(n)
                if found:
                    return found
        return None

    def successors(self, node: str) -> list[Edge]:
        return [e for e in self.edges if e.source == node]

    def runtime(self, node: str) -> float:
        return float(self.median_runtime_ms.get(node, 0.0))


@dataclass(frozen=True)
class TriggerModel:
    median_delay_ms: Mapping[str, float]
    jitter_ms: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "median_delay_ms", dict(self.median_delay_ms))
        object.__setattr__(self, "jitter_ms", dict(self.jitter_ms))
        for name, delay in self.median_delay_ms.items():
            if not delay > 0:
                raise ConfigurationError(f"trigger {name!r}: delay must be > 0")

    @classmethod
    def measured(cls) -> "TriggerModel":
        return cls(MEASURED_TRIGGER_DELAYS_MS)

    def delay(self, trigger: str) -> float:
        try:
            return float(self.median_delay_ms[trigger])
        except KeyError:
            raise ConfigurationError(f"unknown trigger type {trigger!r}") from None

    def sample(self, trigger: str, rng) -> float:
        """Median plus uniform jitter, clamped to stay positive."""
        median = self.delay(trigger)
        j = self.jitter_ms.get(trigger, 0.0)
        if not j:
            return median
        return max(median * 0.01, median + rng.uniform(-j, j))


def predict_window(chain: ChainSpec, edge: Edge, trigger_model: TriggerModel) -> float:
    """Lead time from the upstream completion (or trigger firing) to the downstream start."""
    if edge not in chain.edges:
        raise ChainError(f"edge {edge.source}->{edge.target} is not in chain {chain.name!r}")
    return trigger_model.delay(edge.trigger)


def predict_path_window(chain: ChainSpec, path: list[Edge], trigger_model: TriggerModel,
                        *, include_source_runtime: bool = False) -> float:
    """Lead time along a multi-hop path: every trigger delay plus the median
    runtime of each intermediate function (and of the source when predicting
    from its start)."""
    total = sum(predict_window(chain, e, trigger_model) for e in path)
    total += sum(chain.runtime(e.target) for e in path[:-1])
    if include_source_runtime and path:
        total += chain.runtime(path[0].source)
    return total


def paths_from(chain: ChainSpec, node: str, depth: int) -> list[list[Edge]]:
    out: list[list[Edge]] = []
    frontier: list[list[Edge]] = [[e] for e in chain.successors(node)]
    while frontier:
        path = frontier.pop(0)
        out.append(path)
        if len(path) < depth:
            frontier.extend(path + [e] for e in chain.successors(path[-1].target))
    return out


# -- accounting ------------------------------------------------------------

@dataclass
class FunctionAccount:
    freshens_issued: int = 0
    predictions: int = 0
    hits: int = 0
    mispredictions: int = 0
    suppressed: bool = False
    window: deque = field(default_factory=lambda: deque(maxlen=20))
    crossings: list[tuple[int, bool]] = field(default_factory=list)  # (outcome index, suppressed after)


class AccountingLedger:
    """Per-function prediction accuracy and freshen suppression.

    Confidence is the hit ratio over the last ``window_size`` settled
    predictions (1.0 before any are settled). A latency-insensitive function is
    suppressed while its confidence is below ``threshold``.
    """

    def __init__(self, threshold: float = 0.5, window_size: int = 20,
                 service_class: str | Mapping[str, str] = "latency-insensitive"):
        if not 0 <= threshold <= 1:
            raise ConfigurationError("suppression threshold must be in [0, 1]")
        if window_size < 1:
            raise ConfigurationError("confidence window must be >= 1")
        self.threshold = threshold
        self.window_size = window_size
        self._service_class = service_class
        self.accounts: dict[str, FunctionAccount] = {}

    def account(self, function: str) -> FunctionAccount:
        acct = self.accounts.get(function)
        if acct is None:
            acct = self.accounts[function] = FunctionAccount(window=deque(maxlen=self.window_size))
        return acct

    def service_class(self, function: str) -> str:
        if isinstance(self._service_class, str):
            return self._service_class
        return self._service_class.get(function, "latency-insensitive")

    def confidence(self, function: str) -> float:
        window = self.account(function).window
        return sum(window) / len(window) if window else 1.0

    def allows(self, function: str) -> bool:
        if self.service_class(function) == "latency-sensitive":
            return True
        return not self.account(function).suppressed

    def record_prediction(self, function: str, issued: bool) -> None:
        acct = self.account(function)
        acct.predictions += 1
        if issued:
            acct.freshens_issued += 1

    def snapshot(self, function: str) -> dict:
        acct = self.account(function)
        return {
            "issued": acct.freshens_issued,
            "hits": acct.hits,
            "mispredictions": acct.mispredictions,
            "confidence": self.confidence(function),
            "suppressed": acct.suppressed,
        }


def settle(ledger: AccountingLedger, function: str, outcome: str) -> None:
    """Record whether a prediction for ``function`` was followed by an invocation in time."""
    if outcome not in ("invoked-in-time", "mispredicted"):
        raise ValueError(f"unknown outcome {outcome!r}")
    acct = ledger.account(function)
    hit = outcome == "invoked-in-time"
    if hit:
        acct.hits += 1
    else:
        acct.mispredictions += 1
    acct.window.append(1 if hit else 0)
    now_suppressed = ledger.confidence(function) < ledger.threshold
    if now_suppressed != acct.suppressed:
        acct.suppressed = now_suppressed
        acct.crossings.append((acct.hits + acct.mispredictions, now_suppressed))


# -- events ----------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    kind: str
    node: str
    edge: Edge | None = None  # set for trigger-fired

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class FreshenDirective:
    target: str
    issue_time: float
    deadline: float
    source: str
    issued: bool = True  # False: shadow prediction kept for accounting while suppressed

    @property
    def lead(self) -> float:
        return self.deadline - self.issue_time


def on_event(event: Event, chain: ChainSpec, ledger: AccountingLedger, clock,
             trigger_model: TriggerModel, *, depth: int = 1) -> list[FreshenDirective]:
    """Directives for the functions predicted to follow ``event``.

    Every successor within ``depth`` hops is predicted (fan-out branches
    included). Suppressed, latency-insensitive targets get a shadow directive
    (``issued=False``) so that accuracy keeps being measured.
    """
    if event.node not in chain.nodes:
        raise ChainError(f"event for unknown node {event.node!r}")
    now = clock.now
    if event.kind == "trigger-fired":
        if event.edge is None:
            raise ValueError("trigger-fired event needs an edge")
        paths = [[event.edge]]
        if depth > 1:
            paths += [[event.edge] + p for p in paths_from(chain, event.edge.target, depth - 1)]
    else:
        paths = paths_from(chain, event.node, depth)
    directives = []
    for path in paths:
        target = path[-1].target
        lead = predict_path_window(chain, path, trigger_model,
                                   include_source_runtime=event.kind == "invocation-started")
        issued = ledger.allows(target)
        ledger.record_prediction(target, issued)
        directives.append(FreshenDirective(target, now, now + lead, event.node, issued))
    return directives


def unanticipated(target: str, ledger: AccountingLedger, clock) -> FreshenDirective:
    """Zero-lead directive: freshen races the invocation that is already starting."""
    issued = ledger.allows(target)
    ledger.record_prediction(target, issued)
    return FreshenDirective(target, clock.now, clock.now, target, issued)


def chain_from_linear(names: Iterable[str], trigger: str, runtime_ms: float = 0.0, name: str = "linear") -> ChainSpec:
    names = list(names)
    edges = tuple(Edge(a, b, trigger) for a, b in zip(names, names[1:]))
    return ChainSpec(name, tuple(names), edges, names[0], {n: runtime_ms for n in names}).validate()
