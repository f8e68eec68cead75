"""Network-backed resource actions shared by invocations and the freshen executor.

All functions here are simulation processes (generators) operating on a
RuntimeContext; they sleep for whatever the network model charges.
"""

from __future__ import annotations

import hashlib
from typing import TYPE_CHECKING, Any, NamedTuple

from .netsim import ConnectionReset, NetworkError, SimConnection, plan_transfer
from .sim import Sleep

if TYPE_CHECKING:
    from .runtime import RuntimeContext


class RequestTag(NamedTuple):
    function: str
    container: str
    actor: str  # "invocation" | "freshen"
    entry: int | None = None
    epoch: int | None = None
    op: str = ""  # "get" | "put" | "warm"


def _sleep_until(ctx: "RuntimeContext", at: float):
    delay = at - ctx.kernel.now
    if delay > 0:
        yield Sleep(delay)


def connect(ctx: "RuntimeContext", endpoint_id: str, tag: RequestTag):
    try:
        conn = ctx.network.connect(endpoint_id, ctx.kernel.now, tag=tag)
    except NetworkError as exc:
        yield from _sleep_until(ctx, exc.at)
        raise
    yield from _sleep_until(ctx, conn.established_at)
    return conn


def acquire(ctx: "RuntimeContext", endpoint_id: str, tag: RequestTag, *, shared: bool = True):
    """Connection for one step. Runtime scope reuses the stored handle; invocation
    scope takes a pre-established handle once (if freshen left one) or connects."""
    if ctx.function.connection_scope == "runtime" and shared:
        conn = ctx.connections.get(endpoint_id)
        if conn is None:
            conn = yield from connect(ctx, endpoint_id, tag)
            ctx.connections[endpoint_id] = conn
        return conn
    if shared:
        conn = ctx.connections.pop(endpoint_id, None)
        if conn is not None:
            return conn
    return (yield from connect(ctx, endpoint_id, tag))


def release(ctx: "RuntimeContext", conn: SimConnection, *, shared: bool = True) -> None:
    if ctx.function.connection_scope == "runtime" and shared:
        ctx.connections[conn.endpoint_id] = conn


def send(ctx: "RuntimeContext", endpoint_id: str, size: int, tag: RequestTag, *, shared: bool = True):
    """Transfer over the step's connection; a reset connection is re-established once."""
    conn = yield from acquire(ctx, endpoint_id, tag, shared=shared)
    try:
        duration = ctx.network.transfer(conn, size, ctx.kernel.now, tag=tag)
    except ConnectionReset as exc:
        if ctx.connections.get(endpoint_id) is conn:
            del ctx.connections[endpoint_id]
        yield from _sleep_until(ctx, exc.at)
        conn = yield from connect(ctx, endpoint_id, tag)
        if ctx.function.connection_scope == "runtime" and shared:
            ctx.connections[endpoint_id] = conn
        duration = ctx.network.transfer(conn, size, ctx.kernel.now, tag=tag)
    yield Sleep(duration)
    release(ctx, conn, shared=shared)
    return duration


def fetch_object(ctx: "RuntimeContext", endpoint_id: str, object_id: str, tag: RequestTag, *, shared: bool = True):
    tag = tag._replace(op="get")
    size = ctx.network.object_size(endpoint_id, object_id)
    yield from send(ctx, endpoint_id, size, tag, shared=shared)
    return ctx.network.read_object(endpoint_id, object_id)


def put_object(ctx: "RuntimeContext", endpoint_id: str, object_id: str, payload: bytes, size: int, tag: RequestTag):
    tag = tag._replace(op="put")
    yield from send(ctx, endpoint_id, size, tag)
    ctx.network.write_object(endpoint_id, object_id, payload)
    digest = hashlib.sha256(payload).hexdigest()[:16]
    return f"ok:{endpoint_id}/{object_id}:{digest}".encode()


def warm_connection(ctx: "RuntimeContext", endpoint_id: str, tag: RequestTag):
    """Freshen-side warming: probe (or establish) the connection, then warm_cwnd."""
    tag = tag._replace(op="warm")
    net = ctx.network
    conn = ctx.connections.get(endpoint_id)
    if conn is not None:
        alive = net.keepalive_probe(conn, ctx.kernel.now, tag=tag)
        yield Sleep(conn.rtt)
        if not alive:
            if ctx.connections.get(endpoint_id) is conn:
                del ctx.connections[endpoint_id]
            conn = None
    if conn is None:
        conn = yield from connect(ctx, endpoint_id, tag)
        ctx.connections[endpoint_id] = conn
    cost = net.warm_cost(ctx.config.warm_policy, endpoint_id, ctx.kernel.now)
    try:
        cwnd = net.warm_cwnd(conn, ctx.config.warm_policy, ctx.kernel.now, tag=tag)
    except NetworkError as exc:
        yield from _sleep_until(ctx, exc.at)
        raise
    if cost:
        yield Sleep(cost)
    return cwnd


def inline_warm(ctx: "RuntimeContext", endpoint_id: str, tag: RequestTag):
    """Wrapper-side warming on the invocation's critical path: no probes, history only."""
    tag = tag._replace(op="warm")
    conn = ctx.connections.get(endpoint_id)
    if conn is None or not ctx.network.is_alive(conn, ctx.kernel.now):
        return None
    return ctx.network.warm_cwnd(conn, ctx.config.warm_policy, ctx.kernel.now, tag=tag, allow_probe=False)
    yield  # pragma: no cover - keeps this a generator


def modeled_fetch_time(ctx: "RuntimeContext", endpoint_id: str, object_id: Any) -> float:
    """Cold-window fetch estimate, plus a handshake when no shared connection is held."""
    net = ctx.network
    ep = net.endpoint(endpoint_id)
    size = net.object_size(endpoint_id, object_id)
    t = plan_transfer(size, net.initial_window, net.initial_ssthresh, net.cwnd_cap,
                      net.mss, ep.rtt, ep.bandwidth).duration
    if ctx.function.connection_scope != "runtime" or endpoint_id not in ctx.connections:
        t += ep.rtt
    return t


def estimated_warm_time(ctx: "RuntimeContext", endpoint_id: str) -> float:
    rtt = ctx.network.endpoint(endpoint_id).rtt
    return rtt + ctx.network.warm_cost(ctx.config.warm_policy, endpoint_id, ctx.kernel.now)


def worst_case_action_time(ctx: "RuntimeContext", kind: str, endpoint_id: str, object_id: Any = None) -> float:
    """Upper bound on one action with no outage: cold connection, cold window,
    one reset-and-retry for fetches; probe + reconnect + probe for warms."""
    net = ctx.network
    ep = net.endpoint(endpoint_id)
    if kind == "warm":
        return 3 * ep.rtt
    size = net.object_size(endpoint_id, object_id)
    cold = plan_transfer(size, net.initial_window, net.initial_ssthresh, net.cwnd_cap,
                         net.mss, ep.rtt, ep.bandwidth).duration
    return ep.rtt + cold + ep.rtt + ep.rtt + cold
