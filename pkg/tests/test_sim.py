import itertools

import pytest

from freshen.sim import (DeadlockError, Join, Kernel, RandomChooser, ReplayChooser, Signal, Sleep,
                         StepLimitExceeded, Wait, Yield, explore)


def test_sleep_advances_clock_in_order():
    k = Kernel()
    seen = []

    def proc(name, delay):
        yield Sleep(delay)
        seen.append((name, k.now))

    k.spawn(proc("b", 5))
    k.spawn(proc("a", 2))
    k.run()
    assert seen == [("a", 2.0), ("b", 5.0)]


def test_wait_notify_and_timeout():
    k = Kernel()
    sig = Signal(k)
    out = {}

    def waiter(name, timeout):
        out[name] = (yield Wait(sig, timeout)), k.now

    def notifier():
        yield Sleep(3)
        sig.notify_all()

    k.spawn(waiter("short", 1))
    k.spawn(waiter("long", 10))
    k.spawn(notifier())
    k.run()
    assert out["short"] == (False, 1.0)
    assert out["long"] == (True, 3.0)


def test_stale_timeout_does_not_wake_process_twice():
    k = Kernel()
    sig = Signal(k)
    wakes = []

    def waiter():
        wakes.append((yield Wait(sig, 5)))
        yield Sleep(10)
        wakes.append("slept")

    def notifier():
        yield Sleep(1)
        sig.notify_all()

    k.spawn(waiter())
    k.spawn(notifier())
    k.run()
    assert wakes == [True, "slept"]
    assert k.now == 11.0


def test_join_returns_after_target_finishes():
    k = Kernel()

    def child():
        yield Sleep(4)
        return 42

    def parent():
        c = k.spawn(child())
        yield Join(c)
        return c.result(), k.now

    p = k.spawn(parent())
    k.run()
    assert p.result() == (42, 4.0)


def test_deadlock_detected():
    k = Kernel()
    sig = Signal(k)

    def stuck():
        yield Wait(sig)

    k.spawn(stuck(), "stuck")
    with pytest.raises(DeadlockError, match="stuck"):
        k.run()


def test_step_limit():
    k = Kernel(max_steps=50)

    def spin():
        while True:
            yield Yield()

    k.spawn(spin())
    with pytest.raises(StepLimitExceeded):
        k.run()


def test_process_error_is_captured():
    k = Kernel()

    def boom():
        yield Sleep(1)
        raise ValueError("x")

    p = k.spawn(boom())
    k.run()
    with pytest.raises(ValueError):
        p.result()


def _race(kernel):
    order = []

    def p(name):
        yield Yield()
        order.append(name)

    kernel.spawn(p("x"))
    kernel.spawn(p("y"))
    kernel.spawn(p("z"))
    return lambda: tuple(order)


def test_explore_enumerates_every_tie_break():
    outcomes = list(explore(_race))
    assert set(outcomes) == set(itertools.permutations("xyz"))


def test_explore_single_process_has_one_schedule():
    def build(kernel):
        def p():
            yield Yield()
        kernel.spawn(p())
        return lambda: kernel.now

    assert list(explore(build)) == [0.0]


def test_replay_chooser_reproduces_a_schedule():
    first = Kernel(RandomChooser(7))
    check = _race(first)
    first.run()
    # a random run is reproducible from its seed
    again = Kernel(RandomChooser(7))
    check2 = _race(again)
    again.run()
    assert check() == check2()
    replay = ReplayChooser([2, 1])
    k = Kernel(replay)
    check3 = _race(k)
    k.run()
    assert replay.trace[0] == (2, 3)
    assert len(check3()) == 3
