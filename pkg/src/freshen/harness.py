"""End-to-end experiments: scenario x mode x object size -> CSV report.

Every (mode, size) cell runs ``iterations`` independent simulation instances
that share one accounting ledger. Random draws (edge firing, trigger jitter,
packet-pair noise) are keyed by seed, size, iteration and edge rather than by
mode, so all modes see the same arrivals and only freshen behaviour differs.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import random
import statistics
import tempfile
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from . import engine
from .netsim import Network
from .predictor import AccountingLedger, ChainSpec, Event, FreshenDirective, on_event, settle, unanticipated
from .runtime import FreshenMode, InvocationError, InvocationRecord, RuntimeConfig, RuntimeContext, init, run
from .scenario import Scenario, load_scenario
from .sim import Join, Kernel, Signal, Sleep, Wait

log = logging.getLogger("freshen.harness")

COLUMNS = (
    "scenario", "function", "mode", "object_size", "iterations", "samples", "errors",
    "median_ms", "p10_ms", "p90_ms", "mean_ms", "saving_ms", "improvement_pct",
    "step_median_ms", "step_saving_ms",
    "cache_hits", "cache_misses", "upstream_fetches",
    "directives", "freshen_performed", "freshen_skipped", "freshen_failed",
    "wrapper_hits", "wrapper_waits", "wrapper_self",
    "ledger_issued", "ledger_hits", "ledger_mispredictions", "ledger_confidence", "ledger_suppressed",
)


# -- one simulation instance -------------------------------------------------

@dataclass
class _Prediction:
    target: str
    issue: float
    deadline: float
    settled: bool = False


@dataclass
class FunctionStats:
    records: list[InvocationRecord] = field(default_factory=list)
    errors: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    upstream_fetches: int = 0
    directives: int = 0
    performed: int = 0
    skipped: int = 0
    failed: int = 0
    wrapper: dict[str, int] = field(default_factory=lambda: {"hit": 0, "wait": 0, "self": 0})

    def merge(self, other: "FunctionStats") -> None:
        self.records.extend(other.records)
        for name in ("errors", "cache_hits", "cache_misses", "upstream_fetches", "directives",
                     "performed", "skipped", "failed"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        for k, v in other.wrapper.items():
            self.wrapper[k] += v


class _Instance:
    """One iteration of one (mode, size) cell."""

    def __init__(self, scenario: Scenario, mode: FreshenMode, size: int, iteration: int,
                 ledger: AccountingLedger):
        self.scenario = scenario
        self.mode = mode
        self.size = size
        self.ledger = ledger
        self.base = f"{scenario.seed}/{size}/{iteration}"
        pol = scenario.policies
        self.kernel = Kernel()
        self.network = Network(
            scenario.topology, mss=scenario.network.mss, initial_window=scenario.network.initial_window,
            cwnd_cap=max(pol.warm.cwnd_cap, scenario.network.initial_window),
            initial_ssthresh=scenario.network.initial_ssthresh,
            objects={(ep, obj): sz for ep, obj, sz in scenario.objects},
            default_object_size=size, seed=f"{self.base}/net")
        self.config = RuntimeConfig(default_ttl_ms=pol.default_ttl_ms, warm_policy=pol.warm,
                                    wait_timeout_ms=pol.wait_timeout_ms, consume_fetch=pol.consume_fetch,
                                    cold_start_ms=pol.cold_start_ms)
        self.contexts: dict[str, RuntimeContext] = {
            f.name: init(f, self.kernel, self.network, self.config, container_id=f.name)
            for f in scenario.functions}
        self.plans = {f.name: engine.infer_plan(f).only(mode.prefetch, mode.warm) for f in scenario.functions}
        self.busy = {name: False for name in self.contexts}
        self.released = {name: Signal(self.kernel) for name in self.contexts}
        self.pending: dict[str, deque[_Prediction]] = {name: deque() for name in self.contexts}
        self.stats = {name: FunctionStats() for name in self.contexts}
        self.t0: float | None = None
        self.fire_counts: dict[tuple[str, str], int] = {}

    # freshen side

    def _issue(self, directives: Iterable[FreshenDirective]) -> None:
        for d in directives:
            pred = _Prediction(d.target, d.issue_time, d.deadline)
            self.pending[d.target].append(pred)
            self.kernel.spawn(self._settle_timer(pred), f"settle:{d.target}")
            if d.issued:
                self.stats[d.target].directives += 1
                ctx = self.contexts[d.target]
                self.kernel.spawn(engine.freshen(ctx, self.plans[d.target], deadline=d.deadline),
                                  f"freshen:{d.target}")

    def _settle_timer(self, pred: _Prediction):
        yield Sleep(max(0.0, pred.deadline + self.scenario.policies.settle_horizon_ms - self.kernel.now))
        if not pred.settled:
            pred.settled = True
            settle(self.ledger, pred.target, "mispredicted")

    def _settle_arrival(self, name: str) -> None:
        """An invocation confirms every open prediction whose window covers it."""
        now = self.kernel.now
        horizon = self.scenario.policies.settle_horizon_ms
        for pred in self.pending[name]:
            if not pred.settled and pred.issue <= now <= pred.deadline + horizon:
                pred.settled = True
                settle(self.ledger, name, "invoked-in-time")

    def _predict(self, chain: ChainSpec, kind: str, node: str, edge=None) -> None:
        if self.mode is FreshenMode.DISABLED:
            return
        pol = self.scenario.policies
        self._issue(on_event(Event(kind, node, edge), chain, self.ledger, self.kernel,
                             self.scenario.trigger_model, depth=pol.depth))

    # invocation side

    def _invoke(self, chain: ChainSpec, node: str, t_trigger: float):
        kernel = self.kernel
        while self.busy[node]:
            yield Wait(self.released[node])
        self.busy[node] = True
        pol = self.scenario.policies
        ctx = self.contexts[node]
        if node == chain.entry and pol.unanticipated_entry and self.mode is not FreshenMode.DISABLED:
            self._issue([unanticipated(node, self.ledger, kernel)])
        self._settle_arrival(node)
        if pol.predict_on == "invocation-started":
            self._predict(chain, "invocation-started", node)
        ok = True
        try:
            _, record = yield from run(ctx, mode=self.mode, t_trigger=t_trigger, put_size=self.size)
            self.stats[node].records.append(record)
        except InvocationError as exc:
            self.stats[node].errors += 1
            ok = False
            log.debug("invocation of %s failed at step %d: %s", node, exc.step, exc.cause)
        finally:
            self.busy[node] = False
            self.released[node].notify_all()
        if not ok:
            return
        if pol.predict_on == "invocation-finished":
            self._predict(chain, "invocation-finished", node)
        children = []
        for edge in chain.successors(node):
            key = (edge.source, edge.target)
            k = self.fire_counts.get(key, 0)
            self.fire_counts[key] = k + 1
            rng = random.Random(f"{self.base}/{chain.name}/{edge.source}->{edge.target}/{k}")
            fires = rng.random() < edge.probability
            delay = self.scenario.trigger_model.sample(edge.trigger, rng)
            if not fires:
                continue
            if pol.predict_on == "trigger-fired":
                self._predict(chain, "trigger-fired", node, edge)
            children.append(kernel.spawn(self._invoke(chain, edge.target, kernel.now), f"{edge.target}",
                                         delay=delay))
        for child in children:
            yield Join(child)

    def _driver(self):
        pol = self.scenario.policies
        if pol.warmup:
            for f in self.scenario.functions:
                try:
                    yield from run(self.contexts[f.name], mode=FreshenMode.DISABLED, put_size=self.size)
                except InvocationError as exc:
                    log.debug("warmup of %s failed: %s", f.name, exc)
        for chain in self.scenario.all_chains():
            yield Sleep(pol.idle_gap_ms)
            if self.t0 is None:
                self.t0 = self.kernel.now
            yield Join(self.kernel.spawn(self._invoke(chain, chain.entry, self.kernel.now), chain.entry))

    def execute(self) -> dict[str, FunctionStats]:
        self.kernel.spawn(self._driver(), "driver")
        self.kernel.run()
        for name, ctx in self.contexts.items():
            st = self.stats[name]
            st.cache_hits = ctx.cache.stats.hits
            st.cache_misses = ctx.cache.stats.misses
            for report in ctx.freshen_reports:
                st.performed += report.count("performed")
                st.skipped += report.count("skipped")
                st.failed += report.count("failed")
            for ev in ctx.wrapper_log:
                st.wrapper[ev.branch] += 1
        for req in self.network.requests("transfer"):
            tag = req.tag
            if self.t0 is not None and req.t >= self.t0 and tag is not None and tag.op == "get" and tag.function in self.stats:
                self.stats[tag.function].upstream_fetches += 1
        return self.stats


def simulate(scenario: Scenario, mode: FreshenMode | str, size: int, iteration: int = 0,
             ledger: AccountingLedger | None = None) -> dict[str, FunctionStats]:
    """Run one instance and return per-function statistics."""
    mode = FreshenMode.parse(mode)
    ledger = ledger or _ledger(scenario)
    return _Instance(scenario, mode, size, iteration, ledger).execute()


def _ledger(scenario: Scenario) -> AccountingLedger:
    pol = scenario.policies
    return AccountingLedger(pol.suppression_threshold, pol.confidence_window, pol.service_class)


@dataclass
class Cell:
    mode: FreshenMode
    size: int
    stats: dict[str, FunctionStats]
    ledger: dict[str, dict]


def run_cell(scenario: Scenario, mode: FreshenMode | str, size: int) -> Cell:
    mode = FreshenMode.parse(mode)
    ledger = _ledger(scenario)
    totals = {f.name: FunctionStats() for f in scenario.functions}
    for it in range(scenario.iterations):
        for name, st in simulate(scenario, mode, size, it, ledger).items():
            totals[name].merge(st)
    snapshot = {f.name: ledger.snapshot(f.name) for f in scenario.functions}
    return Cell(mode, size, totals, snapshot)


def _run_cell_args(args):
    return run_cell(*args)


# -- report ------------------------------------------------------------------

def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.3f}"


def _percentile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation percentile (numpy's default method)."""
    s = sorted(values)
    if len(s) == 1:
        return s[0]
    pos = (len(s) - 1) * q
    lo = int(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def _step_medians(records: list[InvocationRecord]) -> list[float]:
    if not records:
        return []
    n = max(len(r.step_durations) for r in records)
    return [statistics.median([r.step_durations[i] for r in records if len(r.step_durations) > i])
            for i in range(n)]


@dataclass
class ExperimentReport:
    scenario: str
    rows: list[dict[str, str]]
    columns: tuple[str, ...] = COLUMNS

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return buf.getvalue()

    def write(self, path: str | os.PathLike) -> None:
        """Atomic write: the file appears complete or not at all."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(self.to_csv())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def row(self, function: str, mode: FreshenMode | str, size: int) -> dict[str, str]:
        mode = FreshenMode.parse(mode).value
        for r in self.rows:
            if r["function"] == function and r["mode"] == mode and int(r["object_size"]) == size:
                return r
        raise KeyError((function, mode, size))

    @classmethod
    def from_csv(cls, text: str) -> "ExperimentReport":
        reader = csv.DictReader(io.StringIO(text))
        rows = list(reader)
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise ValueError(f"not an experiment report; missing columns: {', '.join(missing)}")
        return cls(rows[0]["scenario"] if rows else "", rows)


def _rows(scenario: Scenario, cells: dict[tuple[FreshenMode, int], Cell], modes, sizes) -> list[dict[str, str]]:
    rows = []
    for f in scenario.functions:
        for mode in modes:
            for size in sizes:
                cell = cells[(mode, size)]
                st = cell.stats[f.name]
                lat = [r.latency for r in st.records]
                steps = _step_medians(st.records)
                base = cells.get((FreshenMode.DISABLED, size))
                base_lat = [r.latency for r in base.stats[f.name].records] if base else []
                median = statistics.median(lat) if lat else None
                saving = improvement = None
                step_saving = ""
                if base_lat and median is not None:
                    base_median = statistics.median(base_lat)
                    saving = base_median - median
                    improvement = 100.0 * saving / base_median if base_median else 0.0
                    base_steps = _step_medians(base.stats[f.name].records)
                    step_saving = ";".join(_fmt(b - s) for b, s in zip(base_steps, steps))
                snap = cell.ledger[f.name]
                rows.append({
                    "scenario": scenario.name,
                    "function": f.name,
                    "mode": mode.value,
                    "object_size": str(size),
                    "iterations": str(scenario.iterations),
                    "samples": str(len(lat)),
                    "errors": str(st.errors),
                    "median_ms": _fmt(median),
                    "p10_ms": _fmt(_percentile(lat, 0.1) if lat else None),
                    "p90_ms": _fmt(_percentile(lat, 0.9) if lat else None),
                    "mean_ms": _fmt(statistics.fmean(lat) if lat else None),
                    "saving_ms": _fmt(saving),
                    "improvement_pct": _fmt(improvement),
                    "step_median_ms": ";".join(_fmt(s) for s in steps),
                    "step_saving_ms": step_saving,
                    "cache_hits": str(st.cache_hits),
                    "cache_misses": str(st.cache_misses),
                    "upstream_fetches": str(st.upstream_fetches),
                    "directives": str(st.directives),
                    "freshen_performed": str(st.performed),
                    "freshen_skipped": str(st.skipped),
                    "freshen_failed": str(st.failed),
                    "wrapper_hits": str(st.wrapper["hit"]),
                    "wrapper_waits": str(st.wrapper["wait"]),
                    "wrapper_self": str(st.wrapper["self"]),
                    "ledger_issued": str(snap["issued"]),
                    "ledger_hits": str(snap["hits"]),
                    "ledger_mispredictions": str(snap["mispredictions"]),
                    "ledger_confidence": _fmt(snap["confidence"]),
                    "ledger_suppressed": str(int(snap["suppressed"])),
                })
    return rows


def resolve_seed(scenario: Scenario, seed: int | None = None) -> int:
    """Explicit seed, else the FRESHEN_SEED environment variable, else the file's seed."""
    if seed is not None:
        return seed
    env = os.environ.get("FRESHEN_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"FRESHEN_SEED must be an integer, got {env!r}") from None
    return scenario.seed


def run_scenario(scenario: Scenario | str | os.PathLike, modes: Sequence[FreshenMode | str] | None = None,
                 output_path: str | os.PathLike | None = None, *, seed: int | None = None,
                 iterations: int | None = None, sizes: Sequence[int] | None = None,
                 jobs: int = 1) -> ExperimentReport:
    """Run every (mode, size) cell of a scenario and assemble the report.

    The report is written to ``output_path`` only after every cell finished.
    """
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    updates = {"seed": resolve_seed(scenario, seed)}
    if iterations is not None:
        if iterations < 1:
            raise ValueError("iterations must be >= 1")
        updates["iterations"] = iterations
    if sizes is not None:
        updates["object_sizes"] = tuple(sizes)
    scenario = replace(scenario, **updates)
    mode_list = [FreshenMode.parse(m) for m in (modes or scenario.modes)]
    mode_list = list(dict.fromkeys(mode_list))
    size_list = list(scenario.object_sizes)
    # The disabled baseline is needed for saving columns even when not reported.
    needed = mode_list if FreshenMode.DISABLED in mode_list else [FreshenMode.DISABLED, *mode_list]
    work = [(scenario, m, s) for m in needed for s in size_list]
    log.info("scenario %s: %d cells x %d iterations (seed %d)", scenario.name, len(work),
             scenario.iterations, scenario.seed)
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_args, work))
    else:
        results = [run_cell(*w) for w in work]
    cells = {(c.mode, c.size): c for c in results}
    for c in results:
        log.info("cell %s size=%d done", c.mode.value, c.size)
    report = ExperimentReport(scenario.name, _rows(scenario, cells, mode_list, size_list))
    if output_path is not None:
        report.write(output_path)
    return report
