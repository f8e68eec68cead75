"""Scenario files: TOML documents describing functions, chains, triggers and topology.

Layout (every section optional unless noted)::

    name = "upload-edge"
    seed = 7
    iterations = 20                  # >= 1
    modes = ["disabled", "warm-only"]
    object_sizes = [1024, 65536]     # bytes; sweep applied to unsized objects/puts

    [network]      mss, initial_window, initial_ssthresh
    [policy]       see Policies
    [triggers]     <trigger-type> = median ms, or {median_ms = .., jitter_ms = ..}
    [[topology]]   id, rtt_ms, bandwidth (bytes/ms), location, down = [[start, end], ..], jitter
    [[objects]]    endpoint, id, size
    [[functions]]  name, connection_scope, ttl_ms, constants = {..}, args = {..},
                   [[functions.steps]] op = "get"|"compute"|"put", ...
    [[chains]]     name, entry, nodes, edges = [[from, to, trigger(, probability)]],
                   runtimes = {node = ms}
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .functions import Compute, DataGet, DataPut, FunctionDef, FunctionValidationError, Ref
from .netsim import ESTIMATORS, INITIAL_SSTHRESH, INITIAL_WINDOW, LOCATIONS, MSS, SimEndpoint, WarmPolicy
from .predictor import (SERVICE_CLASSES, MEASURED_TRIGGER_DELAYS_MS, ChainError, ChainSpec, ConfigurationError,
                        Edge, TriggerModel)
from .runtime import FreshenMode

DEFAULT_SIZE_GRID = (1_024, 8_192, 65_536, 262_144, 524_288, 1_048_576)
PREDICT_ON = ("invocation-started", "invocation-finished", "trigger-fired")


@dataclass(frozen=True)
class Diagnostic:
    location: str
    message: str
    path: str = ""

    def __str__(self):
        prefix = f"{self.path}: " if self.path else ""
        return f"{prefix}{self.location}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("\n".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class NetworkSettings:
    mss: int = MSS
    initial_window: int = INITIAL_WINDOW
    initial_ssthresh: int = INITIAL_SSTHRESH


@dataclass(frozen=True)
class Policies:
    warm: WarmPolicy = field(default_factory=WarmPolicy)
    default_ttl_ms: float = 0.0
    consume_fetch: bool = False
    suppression_threshold: float = 0.5
    confidence_window: int = 20
    service_class: str = "latency-insensitive"
    predict_on: str = "invocation-finished"
    depth: int = 1
    unanticipated_entry: bool = True
    warmup: bool = True
    idle_gap_ms: float = 30_000.0
    settle_horizon_ms: float = 10_000.0
    wait_timeout_ms: float | None = None
    cold_start_ms: float = 0.0


@dataclass(frozen=True)
class Scenario:
    name: str
    functions: tuple[FunctionDef, ...]
    chains: tuple[ChainSpec, ...]
    trigger_model: TriggerModel
    topology: tuple[SimEndpoint, ...]
    object_sizes: tuple[int, ...] = DEFAULT_SIZE_GRID
    policies: Policies = field(default_factory=Policies)
    network: NetworkSettings = field(default_factory=NetworkSettings)
    objects: tuple[tuple[str, str, int], ...] = ()
    modes: tuple[FreshenMode, ...] = tuple(FreshenMode)
    seed: int = 0
    iterations: int = 20
    path: str = ""

    def function(self, name: str) -> FunctionDef:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def all_chains(self) -> list[ChainSpec]:
        """Declared chains plus a single-node chain for every function outside them."""
        chains = list(self.chains)
        covered = {n for c in self.chains for n in c.nodes}
        for f in self.functions:
            if f.name not in covered:
                chains.append(ChainSpec(f"solo:{f.name}", (f.name,), (), f.name))
        return chains


# -- parsing ---------------------------------------------------------------

class _Collector:
    def __init__(self, path: str):
        self.path = path
        self.items: list[Diagnostic] = []

    def add(self, location: str, message: str) -> None:
        self.items.append(Diagnostic(location, message, self.path))


def _num(doc: dict, key: str, loc: str, diags: _Collector, default=None, *, kind=float, minimum=None):
    if key not in doc:
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        diags.add(f"{loc}.{key}" if loc else key, f"expected a number, got {value!r}")
        return default
    if kind is int and not isinstance(value, int):
        diags.add(f"{loc}.{key}" if loc else key, f"expected an integer, got {value!r}")
        return default
    if minimum is not None and value < minimum:
        diags.add(f"{loc}.{key}" if loc else key, f"must be >= {minimum}, got {value!r}")
        return default
    return kind(value)


def _parse_step(raw: dict, loc: str, diags: _Collector):
    op = raw.get("op")
    try:
        if op == "get":
            return DataGet(Ref.parse(raw["endpoint"]), Ref.parse(raw["object"]), raw.get("ttl_ms"))
        if op == "put":
            return DataPut(Ref.parse(raw["endpoint"]), Ref.parse(raw["object"]), raw.get("size"))
        if op == "compute":
            return Compute(float(raw.get("ms", 0.0)), raw.get("keep"))
    except KeyError as exc:
        diags.add(loc, f"missing field {exc.args[0]!r}")
        return None
    except (TypeError, ValueError) as exc:
        diags.add(loc, str(exc))
        return None
    diags.add(loc, f"unknown op {op!r} (expected get, compute or put)")
    return None


def _parse_function(raw: dict, loc: str, diags: _Collector) -> FunctionDef | None:
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        diags.add(loc, "function needs a name")
        return None
    steps = []
    for j, rs in enumerate(raw.get("steps", [])):
        step = _parse_step(rs, f"{loc}.steps[{j}]", diags)
        if step is None:
            return None
        steps.append(step)
    fn = FunctionDef(name, raw.get("constants", {}), tuple(steps), raw.get("ttl_ms"),
                     raw.get("connection_scope", "runtime"), raw.get("args", {}))
    try:
        fn.validate()
    except FunctionValidationError as exc:
        where = f"{loc}.steps[{exc.step}]" if exc.step is not None else loc
        diags.add(where, str(exc))
        return None
    return fn


def _parse_chain(raw: dict, loc: str, diags: _Collector) -> ChainSpec | None:
    try:
        edges = []
        for e in raw.get("edges", []):
            if not 3 <= len(e) <= 4:
                diags.add(f"{loc}.edges", f"edge {e!r} must be [from, to, trigger(, probability)]")
                return None
            edges.append(Edge(str(e[0]), str(e[1]), str(e[2]), float(e[3]) if len(e) == 4 else 1.0))
        nodes = raw.get("nodes") or sorted({n for e in edges for n in (e.source, e.target)})
        chain = ChainSpec(raw.get("name", loc), tuple(nodes), tuple(edges), raw["entry"],
                          {k: float(v) for k, v in raw.get("runtimes", {}).items()})
        return chain.validate()
    except KeyError as exc:
        diags.add(loc, f"missing field {exc.args[0]!r}")
    except ChainError as exc:
        diags.add(loc, str(exc))
    except (TypeError, ValueError) as exc:
        diags.add(loc, str(exc))
    return None


def _parse_policies(raw: dict, diags: _Collector) -> Policies:
    loc = "policy"
    warm_enabled = raw.get("warm", True)
    estimator = raw.get("estimator", "packet-pair")
    if estimator not in ESTIMATORS:
        diags.add(f"{loc}.estimator", f"unknown estimator {estimator!r}")
        estimator = "packet-pair"
    cap = _num(raw, "cwnd_cap", loc, diags, WarmPolicy().cwnd_cap, kind=int, minimum=1)
    horizon = _num(raw, "history_horizon_ms", loc, diags, 60_000.0, minimum=0)
    service = raw.get("service_class", "latency-insensitive")
    if service not in SERVICE_CLASSES:
        diags.add(f"{loc}.service_class", f"unknown service class {service!r}")
        service = "latency-insensitive"
    predict_on = raw.get("predict_on", "invocation-finished")
    if predict_on not in PREDICT_ON:
        diags.add(f"{loc}.predict_on", f"expected one of {', '.join(PREDICT_ON)}")
        predict_on = "invocation-finished"
    threshold = _num(raw, "suppression_threshold", loc, diags, 0.5, minimum=0)
    if threshold > 1:
        diags.add(f"{loc}.suppression_threshold", "must be <= 1")
    return Policies(
        warm=WarmPolicy(bool(warm_enabled), cap, estimator, horizon),
        default_ttl_ms=_num(raw, "default_ttl_ms", loc, diags, 0.0, minimum=0),
        consume_fetch=bool(raw.get("consume_fetch", False)),
        suppression_threshold=threshold,
        confidence_window=_num(raw, "confidence_window", loc, diags, 20, kind=int, minimum=1),
        service_class=service,
        predict_on=predict_on,
        depth=_num(raw, "depth", loc, diags, 1, kind=int, minimum=1),
        unanticipated_entry=bool(raw.get("unanticipated_entry", True)),
        warmup=bool(raw.get("warmup", True)),
        idle_gap_ms=_num(raw, "idle_gap_ms", loc, diags, 30_000.0, minimum=0),
        settle_horizon_ms=_num(raw, "settle_horizon_ms", loc, diags, 10_000.0, minimum=0),
        wait_timeout_ms=_num(raw, "wait_timeout_ms", loc, diags, None, minimum=0),
        cold_start_ms=_num(raw, "cold_start_ms", loc, diags, 0.0, minimum=0),
    )


def _parse_triggers(raw: dict, diags: _Collector) -> TriggerModel:
    medians: dict[str, float] = {}
    jitter: dict[str, float] = {}
    source = raw if raw else MEASURED_TRIGGER_DELAYS_MS
    for name, value in source.items():
        loc = f"triggers.{name}"
        if isinstance(value, dict):
            m = value.get("median_ms")
            j = value.get("jitter_ms", 0.0)
        else:
            m, j = value, 0.0
        if isinstance(m, bool) or not isinstance(m, (int, float)) or m <= 0:
            diags.add(loc, f"delay must be a number > 0, got {m!r}")
            continue
        if isinstance(j, bool) or not isinstance(j, (int, float)) or j < 0:
            diags.add(loc, f"jitter must be a number >= 0, got {j!r}")
            continue
        medians[name] = float(m)
        if j:
            jitter[name] = float(j)
    return TriggerModel(medians, jitter)


def parse_scenario(doc: dict, path: str = "") -> tuple[Scenario | None, list[Diagnostic]]:
    diags = _Collector(path)

    topology = []
    for i, raw in enumerate(doc.get("topology", [])):
        loc = f"topology[{i}]"
        try:
            topology.append(SimEndpoint(raw["id"], float(raw["rtt_ms"]), float(raw["bandwidth"]),
                                        raw.get("location", "remote"),
                                        [tuple(w) for w in raw.get("down", [])], float(raw.get("jitter", 0.0))))
        except KeyError as exc:
            diags.add(loc, f"missing field {exc.args[0]!r}")
        except (TypeError, ValueError) as exc:
            diags.add(loc, str(exc))
    endpoint_ids = [ep.id for ep in topology]
    if len(set(endpoint_ids)) != len(endpoint_ids):
        diags.add("topology", "duplicate endpoint ids")
    if not topology:
        diags.add("topology", f"at least one endpoint is required (locations: {', '.join(LOCATIONS)})")

    functions = []
    for i, raw in enumerate(doc.get("functions", [])):
        fn = _parse_function(raw, f"functions[{i}]", diags)
        if fn is None:
            continue
        for j, step in enumerate(fn.steps):
            ep = fn.constant_endpoint(step)
            if ep is not None and ep not in endpoint_ids:
                diags.add(f"functions[{i}].steps[{j}]",
                          f"step {j} of {fn.name!r} uses endpoint {ep!r}, which is not in topology")
        functions.append(fn)
    names = [f.name for f in functions]
    if len(set(names)) != len(names):
        diags.add("functions", "duplicate function names")
    if not doc.get("functions"):
        diags.add("functions", "at least one function is required")

    chains = []
    for i, raw in enumerate(doc.get("chains", [])):
        chain = _parse_chain(raw, f"chains[{i}]", diags)
        if chain is None:
            continue
        for n in chain.nodes:
            if n not in names:
                diags.add(f"chains[{i}]", f"node {n!r} is not a declared function")
        chains.append(chain)

    trigger_model = _parse_triggers(doc.get("triggers", {}), diags)
    for i, chain in enumerate(chains):
        for e in chain.edges:
            if e.trigger not in trigger_model.median_delay_ms:
                diags.add(f"chains[{i}]", f"edge {e.source}->{e.target}: unknown trigger type {e.trigger!r}")

    objects = []
    for i, raw in enumerate(doc.get("objects", [])):
        try:
            objects.append((str(raw["endpoint"]), str(raw["id"]), int(raw["size"])))
        except KeyError as exc:
            diags.add(f"objects[{i}]", f"missing field {exc.args[0]!r}")
            continue
        if raw["endpoint"] not in endpoint_ids:
            diags.add(f"objects[{i}]", f"endpoint {raw['endpoint']!r} is not in topology")

    net_raw = doc.get("network", {})
    network = NetworkSettings(
        _num(net_raw, "mss", "network", diags, MSS, kind=int, minimum=1),
        _num(net_raw, "initial_window", "network", diags, INITIAL_WINDOW, kind=int, minimum=1),
        _num(net_raw, "initial_ssthresh", "network", diags, INITIAL_SSTHRESH, kind=int, minimum=1),
    )
    policies = _parse_policies(doc.get("policy", {}), diags)
    if policies.warm.cwnd_cap < network.initial_window:
        diags.add("policy.cwnd_cap", "must be >= network.initial_window")

    sizes = doc.get("object_sizes", list(DEFAULT_SIZE_GRID))
    if not isinstance(sizes, list) or not sizes or not all(isinstance(s, int) and s >= 0 for s in sizes):
        diags.add("object_sizes", "expected a non-empty list of byte counts >= 0")
        sizes = list(DEFAULT_SIZE_GRID)

    modes = []
    for m in doc.get("modes", [m.value for m in FreshenMode]):
        try:
            modes.append(FreshenMode.parse(m))
        except ValueError as exc:
            diags.add("modes", str(exc))

    iterations = _num(doc, "iterations", "", diags, 20, kind=int, minimum=1)
    seed = _num(doc, "seed", "", diags, 0, kind=int)

    if diags.items:
        return None, diags.items
    return Scenario(
        name=str(doc.get("name", Path(path).stem if path else "scenario")),
        functions=tuple(functions),
        chains=tuple(chains),
        trigger_model=trigger_model,
        topology=tuple(topology),
        object_sizes=tuple(sizes),
        policies=policies,
        network=network,
        objects=tuple(objects),
        modes=tuple(modes),
        seed=seed,
        iterations=iterations,
        path=path,
    ), []


def load_scenario(path: str | os.PathLike) -> Scenario:
    scenario, diagnostics = _load(path)
    if diagnostics:
        raise ScenarioError(diagnostics)
    return scenario


def validate_scenario(path: str | os.PathLike) -> list[Diagnostic]:
    """Empty list when the file is well-formed; otherwise one diagnostic per problem."""
    return _load(path)[1]


def _load(path):
    path = str(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        return None, [Diagnostic("file", str(exc), path)]
    except tomllib.TOMLDecodeError as exc:
        return None, [Diagnostic("syntax", str(exc), path)]
    return parse_scenario(doc, path)
