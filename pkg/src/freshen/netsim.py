"""Deterministic round-based TCP model.

Times are milliseconds, sizes bytes, windows segments. Every operation is a
pure function of connection state plus ``now``; callers (simulation processes)
sleep for the reported cost. Nothing here touches real sockets.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any, Iterable

MSS = 1460
INITIAL_WINDOW = 10
MIN_RTO_MS = 200.0
INITIAL_SSTHRESH = 1 << 30
DEFAULT_CWND_CAP = 1024
LOCATIONS = ("local", "edge", "remote")
ESTIMATORS = ("packet-pair", "recent-connection-history")


class NetworkError(Exception):
    """A modeled network failure, observed by the caller at time ``at``."""

    def __init__(self, message: str, endpoint_id: str, at: float):
        super().__init__(message)
        self.endpoint_id = endpoint_id
        self.at = at


class ConnectionRefused(NetworkError):
    pass


class ConnectionReset(NetworkError):
    pass


class EndpointUnreachable(NetworkError):
    pass


@dataclass
class SimEndpoint:
    id: str
    rtt: float
    bandwidth: float  # bytes per ms
    location: str = "remote"
    # Half-open [start, end) intervals during which the endpoint is unreachable.
    # A connection alive across the start of an outage is reset by it.
    down: list[tuple[float, float]] = field(default_factory=list)
    jitter: float = 0.0  # packet-pair relative error bound

    def __post_init__(self):
        if not self.rtt > 0:
            raise ValueError(f"endpoint {self.id!r}: rtt must be > 0, got {self.rtt}")
        if not self.bandwidth > 0:
            raise ValueError(f"endpoint {self.id!r}: bandwidth must be > 0, got {self.bandwidth}")
        if self.location not in LOCATIONS:
            raise ValueError(f"endpoint {self.id!r}: unknown location {self.location!r}")
        if not 0 <= self.jitter < 1:
            raise ValueError(f"endpoint {self.id!r}: jitter must be in [0, 1)")
        self.down = [(float(a), float(b)) for a, b in self.down]

    def is_down(self, t: float) -> bool:
        return any(a <= t < b for a, b in self.down)

    @property
    def bdp(self) -> float:
        return self.bandwidth * self.rtt


@dataclass
class SimConnection:
    endpoint_id: str
    rtt: float
    established_at: float
    initial_window: int = INITIAL_WINDOW
    cwnd: int = INITIAL_WINDOW
    ssthresh: int = INITIAL_SSTHRESH
    mss: int = MSS
    cwnd_cap: int = DEFAULT_CWND_CAP
    last_activity: float = 0.0
    alive: bool = True
    established: bool = True
    keepalive_interval: float = 7_200_000.0

    @property
    def rto(self) -> float:
        return max(MIN_RTO_MS, 2 * self.rtt)


@dataclass(frozen=True)
class WarmPolicy:
    enabled: bool = True
    cwnd_cap: int = DEFAULT_CWND_CAP
    estimator: str = "packet-pair"
    history_horizon_ms: float = 60_000.0

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class NetRequest:
    t: float
    kind: str
    endpoint_id: str
    size: int = 0
    tag: Any = None
    ok: bool = True


@dataclass(frozen=True)
class TransferPlan:
    duration: float
    rounds: int
    last_round_bytes: int
    cwnd_after: int


def plan_transfer(size: int, cwnd: int, ssthresh: int, cap: int, mss: int,
                  rtt: float, bandwidth: float) -> TransferPlan:
    """Round-by-round slow start / congestion avoidance for one transfer.

    Each data round carries min(cwnd * mss, bandwidth * rtt) bytes and costs one
    rtt; the final round additionally pays its serialization time; one more rtt
    covers the request / completion acknowledgement.
    """
    if size < 0:
        raise ValueError("size must be >= 0")
    bdp = max(float(mss), bandwidth * rtt)
    remaining = size
    rounds = 0
    last = 0
    while remaining > 0:
        window = min(cwnd * mss, bdp)
        sent = int(min(window, remaining))
        remaining -= sent
        rounds += 1
        last = sent
        segs = -(-sent // mss)
        if cwnd < ssthresh:
            cwnd = min(cwnd + segs, cap)
        elif sent >= window:
            cwnd = min(cwnd + 1, cap)
    duration = rounds * rtt + last / bandwidth + rtt
    return TransferPlan(duration, rounds, last, cwnd)


class Network:
    """Topology plus every connection-level operation, with a request log."""

    def __init__(self, endpoints: Iterable[SimEndpoint], *, mss: int = MSS,
                 initial_window: int = INITIAL_WINDOW, cwnd_cap: int = DEFAULT_CWND_CAP,
                 initial_ssthresh: int = INITIAL_SSTHRESH,
                 objects: dict[tuple[str, str], int] | None = None,
                 default_object_size: int = 0, seed: int | str | None = 0):
        self.endpoints = {ep.id: ep for ep in endpoints}
        if cwnd_cap < initial_window:
            raise ValueError("cwnd cap below initial window")
        self.mss = mss
        self.initial_window = initial_window
        self.cwnd_cap = cwnd_cap
        self.initial_ssthresh = initial_ssthresh
        self.objects = dict(objects or {})
        self.default_object_size = default_object_size
        self.rng = random.Random(seed)
        self.log: list[NetRequest] = []
        self.history: dict[str, tuple[int, float]] = {}
        self.store: dict[tuple[str, str], bytes] = {}

    def endpoint(self, endpoint_id: str) -> SimEndpoint:
        try:
            return self.endpoints[endpoint_id]
        except KeyError:
            raise KeyError(f"unknown endpoint {endpoint_id!r}") from None

    def _record(self, now, kind, endpoint_id, size=0, tag=None, ok=True):
        self.log.append(NetRequest(now, kind, endpoint_id, size, tag, ok))

    # -- datastore --------------------------------------------------------

    def object_size(self, endpoint_id: str, object_id: str) -> int:
        return self.objects.get((endpoint_id, object_id), self.default_object_size)

    def read_object(self, endpoint_id: str, object_id: str) -> bytes:
        if (endpoint_id, object_id) in self.store:
            return self.store[(endpoint_id, object_id)]
        size = self.object_size(endpoint_id, object_id)
        return f"{endpoint_id}/{object_id}:{size}".encode()

    def write_object(self, endpoint_id: str, object_id: str, payload: bytes) -> None:
        self.store[(endpoint_id, object_id)] = payload

    # -- liveness ---------------------------------------------------------

    def is_alive(self, conn: SimConnection, now: float) -> bool:
        if not conn.alive:
            return False
        ep = self.endpoint(conn.endpoint_id)
        if ep.is_down(now) or any(conn.established_at < a <= now for a, _ in ep.down):
            conn.alive = False
        return conn.alive

    # -- operations -------------------------------------------------------

    def connect(self, endpoint_id: str, now: float, *, tag: Any = None) -> SimConnection:
        ep = self.endpoint(endpoint_id)
        if ep.is_down(now):
            self._record(now, "connect", endpoint_id, tag=tag, ok=False)
            raise ConnectionRefused(f"connection to {endpoint_id!r} refused", endpoint_id, now + ep.rtt)
        self._record(now, "connect", endpoint_id, tag=tag)
        at = now + ep.rtt
        return SimConnection(endpoint_id, ep.rtt, established_at=at,
                             initial_window=self.initial_window, cwnd=self.initial_window,
                             ssthresh=self.initial_ssthresh, mss=self.mss,
                             cwnd_cap=self.cwnd_cap, last_activity=at)

    def transfer(self, conn: SimConnection, size: int, now: float, *, tag: Any = None) -> float:
        """Send ``size`` bytes; returns the completion duration in ms."""
        if not conn.established:
            raise ValueError("transfer on an unestablished connection")
        self.idle_decay(conn, now)
        if not self.is_alive(conn, now):
            self._record(now, "transfer", conn.endpoint_id, size, tag, ok=False)
            raise ConnectionReset(f"connection to {conn.endpoint_id!r} reset", conn.endpoint_id, now + conn.rtt)
        ep = self.endpoint(conn.endpoint_id)
        plan = plan_transfer(size, conn.cwnd, conn.ssthresh, conn.cwnd_cap, conn.mss, conn.rtt, ep.bandwidth)
        conn.cwnd = max(conn.initial_window, plan.cwnd_after)
        conn.last_activity = now + plan.duration
        self.history[conn.endpoint_id] = (conn.cwnd, conn.last_activity)
        self._record(now, "transfer", conn.endpoint_id, size, tag)
        return plan.duration

    def idle_decay(self, conn: SimConnection, now: float) -> None:
        """Halve cwnd once per full RTO of idleness, floored at the initial window."""
        idle = now - conn.last_activity
        if idle <= 0:
            return
        periods = int(idle // conn.rto)
        if periods <= 0:
            return
        cwnd = conn.cwnd
        for _ in range(min(periods, 64)):
            if cwnd <= conn.initial_window:
                break
            cwnd //= 2
        conn.cwnd = max(conn.initial_window, cwnd)
        conn.last_activity += periods * conn.rto

    def keepalive_probe(self, conn: SimConnection, now: float, *, tag: Any = None) -> bool:
        """Costs one rtt. Updates last-activity only; never grows cwnd."""
        self.idle_decay(conn, now)
        alive = self.is_alive(conn, now) and self.is_alive(conn, now + conn.rtt)
        self._record(now, "keepalive", conn.endpoint_id, tag=tag, ok=alive)
        if alive:
            conn.last_activity = max(conn.last_activity, now + conn.rtt)
        return alive

    def estimate_bandwidth_packet_pair(self, endpoint_id: str, now: float, *, tag: Any = None) -> float:
        """Two back-to-back segments; bandwidth = mss / arrival gap. Costs one rtt."""
        ep = self.endpoint(endpoint_id)
        if ep.is_down(now):
            self._record(now, "packet-pair", endpoint_id, tag=tag, ok=False)
            raise EndpointUnreachable(f"probe to {endpoint_id!r} lost", endpoint_id, now + ep.rtt)
        gap = self.mss / ep.bandwidth
        if ep.jitter:
            gap /= 1.0 + self.rng.uniform(-ep.jitter, ep.jitter)
        self._record(now, "packet-pair", endpoint_id, tag=tag)
        return self.mss / gap

    def warm_cost(self, policy: WarmPolicy, endpoint_id: str, now: float) -> float:
        """Network time the estimator of ``policy`` spends before warm_cwnd returns."""
        if not policy.enabled:
            return 0.0
        if policy.estimator == "recent-connection-history" and self._history_for(endpoint_id, policy, now):
            return 0.0
        return self.endpoint(endpoint_id).rtt

    def _history_for(self, endpoint_id, policy, now):
        seen = self.history.get(endpoint_id)
        if seen is None or now - seen[1] > policy.history_horizon_ms:
            return None
        return seen[0]

    def warm_cwnd(self, conn: SimConnection, policy: WarmPolicy, now: float, *, tag: Any = None,
                  allow_probe: bool = True) -> int:
        """Emulated warm_cwnd: raise cwnd toward the estimated bandwidth-delay product.

        With ``allow_probe`` false the packet-pair estimator is not used; the
        call then only applies history (or leaves cwnd alone).
        """
        if not policy.enabled:
            return conn.cwnd
        self.idle_decay(conn, now)
        if not self.is_alive(conn, now):
            self._record(now, "warm_cwnd", conn.endpoint_id, tag=tag, ok=False)
            raise ConnectionReset(f"connection to {conn.endpoint_id!r} reset", conn.endpoint_id, now + conn.rtt)
        target = None
        done = now
        if policy.estimator == "recent-connection-history":
            target = self._history_for(conn.endpoint_id, policy, now)
        if target is None and allow_probe:
            bw = self.estimate_bandwidth_packet_pair(conn.endpoint_id, now, tag=tag)
            target = math.ceil(bw * conn.rtt / conn.mss)
            done = now + conn.rtt
        if target is None:
            return conn.cwnd
        cap = min(policy.cwnd_cap, conn.cwnd_cap)
        conn.cwnd = max(conn.cwnd, min(target, cap), conn.initial_window)
        conn.last_activity = max(conn.last_activity, done)
        self._record(now, "warm_cwnd", conn.endpoint_id, tag=tag)
        return conn.cwnd

    # -- accounting -------------------------------------------------------

    def requests(self, kind: str | None = None, *, ok: bool | None = True, tag_filter=None) -> list[NetRequest]:
        out = []
        for r in self.log:
            if kind is not None and r.kind != kind:
                continue
            if ok is not None and r.ok != ok:
                continue
            if tag_filter is not None and not tag_filter(r.tag):
                continue
            out.append(r)
        return out
