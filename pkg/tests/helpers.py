from freshen.netsim import Network, SimEndpoint
from freshen.runtime import RuntimeConfig, init
from freshen.sim import Kernel

STORE = SimEndpoint("store", rtt=10.0, bandwidth=1000.0)


def make_ctx(fn, *, object_size=4000, config=None, endpoints=(STORE,), chooser=None):
    kernel = Kernel(chooser)
    net = Network(endpoints, default_object_size=object_size)
    ctx = init(fn, kernel, net, config or RuntimeConfig(), container_id="c0")
    return kernel, net, ctx


def spawn_at(kernel, at, gen, name=""):
    return kernel.spawn_at(gen, at, name)


def branch_schedule(freshen_at, invoke_at, *, fn=None, mode=None, deadline=None, config=None,
                    object_size=4000, stall=None):
    """One freshen (or none, if ``freshen_at`` is None) racing one invocation."""
    from freshen.engine import freshen, infer_plan
    from freshen.functions import sample_lambda
    from freshen.runtime import FreshenMode, run

    mode = mode or FreshenMode.FULL
    fn = fn or sample_lambda(put_size=2000)
    kernel, net, ctx = make_ctx(fn, object_size=object_size, config=config)
    plan = infer_plan(fn).only(mode.prefetch, mode.warm)
    out = {}

    def fr():
        out["report"] = yield from freshen(ctx, plan, deadline=deadline, stall=stall)

    def inv():
        out["value"], out["record"] = yield from run(ctx, mode=mode)

    if freshen_at is not None:
        kernel.spawn_at(fr(), freshen_at, "freshen")
    kernel.spawn_at(inv(), invoke_at, "invocation")
    kernel.run()
    return ctx, net, out
