"""Cooperative discrete-event kernel over a simulated millisecond clock.

Processes are generators. They suspend by yielding one of the effect objects
below and are resumed by the kernel in time order. When several processes are
runnable at the same instant, a *chooser* decides which one runs next; that
decision point is what the interleaving explorer perturbs.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Iterator, Sequence

TICK_MS = 1.0

Proc = Generator[Any, Any, Any]


@dataclass(frozen=True)
class Sleep:
    ms: float


@dataclass(frozen=True)
class Yield:
    """Scheduling point: lets any other process runnable now go first."""


@dataclass(frozen=True)
class Wait:
    """Block on a signal. Resumes with True if notified, False on timeout."""

    signal: "Signal"
    timeout: float | None = None


@dataclass(frozen=True)
class Join:
    process: "Process"


class DeadlockError(RuntimeError):
    pass


class StepLimitExceeded(RuntimeError):
    pass


class Signal:
    """Wake-all notification. Used for per-entry state changes."""

    def __init__(self, kernel: "Kernel | None" = None):
        self.kernel = kernel
        self._waiters: list[tuple[Process, int]] = []

    def notify_all(self) -> None:
        waiters, self._waiters = self._waiters, []
        for proc, wake_id in waiters:
            if proc.wake_id == wake_id:
                proc.kernel._schedule(proc, proc.kernel.now, wake_id, True)


@dataclass(eq=False)
class Process:
    kernel: "Kernel"
    gen: Proc
    name: str
    done: bool = False
    value: Any = None
    error: BaseException | None = None
    wake_id: int = 0
    blocked_forever: bool = False
    done_signal: Signal = field(init=False)

    def __post_init__(self):
        self.done_signal = Signal(self.kernel)

    def result(self) -> Any:
        if not self.done:
            raise RuntimeError(f"process {self.name!r} has not finished")
        if self.error is not None:
            raise self.error
        return self.value


Chooser = Callable[[Sequence[Process]], int]


def fifo(candidates: Sequence[Process]) -> int:
    return 0


class RandomChooser:
    def __init__(self, rng: random.Random | int | None = None):
        self.rng = rng if isinstance(rng, random.Random) else random.Random(rng)

    def __call__(self, candidates: Sequence[Process]) -> int:
        return self.rng.randrange(len(candidates))


class ReplayChooser:
    """Follows a fixed prefix of choices, then always picks 0.

    Every decision (including forced ones with a single candidate skipped)
    is appended to ``trace`` as ``(choice, n_candidates)``.
    """

    def __init__(self, prefix: Sequence[int] = ()):
        self.prefix = list(prefix)
        self.trace: list[tuple[int, int]] = []

    def __call__(self, candidates: Sequence[Process]) -> int:
        i = len(self.trace)
        choice = self.prefix[i] if i < len(self.prefix) else 0
        self.trace.append((choice, len(candidates)))
        return choice


class Kernel:
    def __init__(self, chooser: Chooser | None = None, max_steps: int = 1_000_000):
        self.now = 0.0
        self.chooser = chooser or fifo
        self.max_steps = max_steps
        self.steps = 0
        self.processes: list[Process] = []
        self._heap: list[tuple[float, int, Process, int, Any]] = []
        self._seq = itertools.count()

    def spawn(self, gen: Proc, name: str = "", delay: float = 0.0) -> Process:
        proc = Process(self, gen, name or f"proc{len(self.processes)}")
        self.processes.append(proc)
        self._schedule(proc, self.now + max(0.0, delay), proc.wake_id, None)
        return proc

    def spawn_at(self, gen: Proc, at: float, name: str = "") -> Process:
        return self.spawn(gen, name, delay=at - self.now)

    def signal(self) -> Signal:
        return Signal(self)

    def _schedule(self, proc: Process, at: float, wake_id: int, value: Any) -> None:
        heapq.heappush(self._heap, (at, next(self._seq), proc, wake_id, value))

    def _pop_runnable(self) -> tuple[Process, Any] | None:
        while self._heap:
            t = self._heap[0][0]
            batch = []
            while self._heap and self._heap[0][0] == t:
                item = heapq.heappop(self._heap)
                if item[2].wake_id == item[3] and not item[2].done:
                    batch.append(item)
            if not batch:
                continue
            if len(batch) == 1:
                pick = 0
            else:
                pick = self.chooser([item[2] for item in batch])
            chosen = batch.pop(pick)
            for item in batch:
                heapq.heappush(self._heap, item)
            self.now = t
            return chosen[2], chosen[4]
        return None

    def run(self, until: float | None = None) -> None:
        while True:
            if until is not None and self._heap and self._heap[0][0] > until:
                self.now = until
                return
            nxt = self._pop_runnable()
            if nxt is None:
                break
            proc, value = nxt
            self._step(proc, value)
        stuck = [p for p in self.processes if not p.done]
        if stuck:
            names = ", ".join(p.name for p in stuck)
            raise DeadlockError(f"processes blocked with nothing runnable: {names}")

    def _step(self, proc: Process, value: Any) -> None:
        self.steps += 1
        if self.steps > self.max_steps:
            raise StepLimitExceeded(f"more than {self.max_steps} scheduler steps")
        proc.wake_id += 1
        try:
            effect = proc.gen.send(value)
        except StopIteration as stop:
            self._finish(proc, stop.value, None)
            return
        except Exception as exc:  # noqa: BLE001 - surfaced through Process.result()
            self._finish(proc, None, exc)
            return
        self._suspend(proc, effect)

    def _finish(self, proc: Process, value: Any, error: BaseException | None) -> None:
        proc.done = True
        proc.value = value
        proc.error = error
        proc.done_signal.notify_all()

    def _suspend(self, proc: Process, effect: Any) -> None:
        wid = proc.wake_id
        if isinstance(effect, (int, float)) and not isinstance(effect, bool):
            effect = Sleep(float(effect))
        if isinstance(effect, Sleep):
            if effect.ms < 0:
                raise ValueError(f"negative sleep {effect.ms} in {proc.name}")
            self._schedule(proc, self.now + effect.ms, wid, None)
        elif isinstance(effect, Yield) or effect is None:
            self._schedule(proc, self.now, wid, None)
        elif isinstance(effect, Wait):
            effect.signal._waiters.append((proc, wid))
            if effect.timeout is not None:
                self._schedule(proc, self.now + max(0.0, effect.timeout), wid, False)
        elif isinstance(effect, Join):
            target = effect.process
            if target.done:
                self._schedule(proc, self.now, wid, target)
            else:
                target.done_signal._waiters.append((proc, wid))
        else:
            raise TypeError(f"{proc.name} yielded unsupported effect {effect!r}")


def explore(build: Callable[[Kernel], Callable[[], Any]], max_runs: int = 100_000) -> Iterator[Any]:
    """Enumerate every tie-break schedule of a deterministic simulation.

    ``build`` receives a fresh kernel, spawns processes on it and returns a
    zero-argument check callable; the check's return value is yielded for each
    schedule. Depth-first over the decision tree recorded by ReplayChooser.
    """
    pending: list[list[int]] = [[]]
    runs = 0
    while pending:
        prefix = pending.pop()
        chooser = ReplayChooser(prefix)
        kernel = Kernel(chooser)
        check = build(kernel)
        kernel.run()
        runs += 1
        if runs > max_runs:
            raise StepLimitExceeded(f"more than {max_runs} schedules")
        yield check()
        for i in range(len(prefix), len(chooser.trace)):
            _, n = chooser.trace[i]
            base = [c for c, _ in chooser.trace[:i]]
            for alt in range(1, n):
                pending.append(base + [alt])
