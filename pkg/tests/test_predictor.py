import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from freshen.predictor import (AccountingLedger, ChainError, ChainSpec, ConfigurationError, Edge, Event,
                               TriggerModel, chain_from_linear, on_event, paths_from, predict_path_window,
                               predict_window, settle, unanticipated)


class Clock:
    def __init__(self, now=0.0):
        self.now = now


@pytest.mark.parametrize("trigger,expected", [("step-functions", 64.0), ("direct", 60.0),
                                              ("sns", 253.0), ("s3", 1282.0)])
def test_single_hop_windows_from_table(trigger, expected):
    chain = chain_from_linear(["a", "b"], trigger)
    assert predict_window(chain, chain.edges[0], TriggerModel.measured()) == expected


def test_eight_function_chain_window():
    chain = chain_from_linear([f"f{i}" for i in range(1, 9)], "step-functions", runtime_ms=700)
    path = paths_from(chain, "f1", 7)[-1]
    assert path[-1].target == "f8"
    lead = predict_path_window(chain, path, TriggerModel.measured(), include_source_runtime=True)
    assert lead == 8 * 700 - 700 + 7 * 64
    assert abs(lead - 5600) <= 700


def test_edge_must_belong_to_chain():
    chain = chain_from_linear(["a", "b"], "sns")
    with pytest.raises(ChainError):
        predict_window(chain, Edge("x", "y", "sns"), TriggerModel.measured())


def test_unknown_trigger_is_configuration_error():
    with pytest.raises(ConfigurationError):
        TriggerModel.measured().delay("carrier-pigeon")
    with pytest.raises(ConfigurationError):
        TriggerModel({"x": 0})


def test_chain_validation():
    with pytest.raises(ChainError, match="cycle"):
        ChainSpec("c", ("a", "b", "c"), (("a", "b", "sns"), ("b", "c", "sns"), ("c", "b", "sns")), "a").validate()
    with pytest.raises(ChainError, match="unknown node"):
        ChainSpec("c", ("a",), (("a", "z", "sns"),), "a").validate()
    with pytest.raises(ChainError, match="entry"):
        ChainSpec("c", ("a",), (), "q").validate()


def test_fanout_predicts_every_branch():
    chain = ChainSpec("f", ("r", "x", "y"), (("r", "x", "sns", 0.9), ("r", "y", "sns", 0.1)), "r").validate()
    ledger = AccountingLedger()
    ds = on_event(Event("invocation-finished", "r"), chain, ledger, Clock(10), TriggerModel.measured())
    assert sorted(d.target for d in ds) == ["x", "y"]
    assert all(d.lead == 253 and d.issue_time == 10 for d in ds)


def test_trigger_fired_and_unanticipated():
    chain = chain_from_linear(["a", "b", "c"], "s3", runtime_ms=100)
    ledger = AccountingLedger()
    ds = on_event(Event("trigger-fired", "a", chain.edges[0]), chain, ledger, Clock(), TriggerModel.measured(), depth=2)
    assert [(d.target, d.lead) for d in ds] == [("b", 1282), ("c", 1282 + 100 + 1282)]
    z = unanticipated("a", ledger, Clock(5))
    assert z.lead == 0 and z.issued


def script(ledger, fn, outcomes):
    states = []
    for o in outcomes:
        settle(ledger, fn, "invoked-in-time" if o == "H" else "mispredicted")
        states.append(ledger.account(fn).suppressed)
    return states


def test_suppression_and_recovery_crossings():
    ledger = AccountingLedger(threshold=0.5, window_size=20)
    states = script(ledger, "f", "HH" + "M" * 8 + "H" * 8)
    # 2/5 < 0.5 at the fifth outcome; 8/16 >= 0.5 at the sixteenth
    assert states.index(True) == 4
    assert states.index(False, 4) == 15
    assert ledger.account("f").crossings == [(5, True), (16, False)]


def test_latency_sensitive_is_never_suppressed():
    ledger = AccountingLedger(service_class={"f": "latency-sensitive"})
    script(ledger, "f", "M" * 10)
    assert ledger.account("f").suppressed and ledger.allows("f")
    assert not ledger.allows("g") or ledger.confidence("g") == 1.0


def test_suppressed_prediction_is_shadow():
    chain = chain_from_linear(["a", "b"], "direct")
    ledger = AccountingLedger()
    script(ledger, "b", "MMM")
    (d,) = on_event(Event("invocation-finished", "a"), chain, ledger, Clock(), TriggerModel.measured())
    assert not d.issued
    snap = ledger.snapshot("b")
    assert snap["issued"] == 0 and snap["mispredictions"] == 3 and snap["suppressed"]


def test_invalid_ledger_config():
    with pytest.raises(ConfigurationError):
        AccountingLedger(threshold=1.5)
    with pytest.raises(ConfigurationError):
        AccountingLedger(window_size=0)
    with pytest.raises(ValueError):
        settle(AccountingLedger(), "f", "maybe")


def test_jitter_sample_stays_positive_and_bounded():
    tm = TriggerModel({"sns": 253}, {"sns": 40})
    rng = random.Random(1)
    xs = [tm.sample("sns", rng) for _ in range(500)]
    assert all(213 <= x <= 293 for x in xs)
    assert TriggerModel.measured().sample("s3", rng) == 1282


@given(st.lists(st.booleans(), min_size=1, max_size=60), st.integers(1, 30))
def test_confidence_matches_window_ratio(outcomes, window):
    ledger = AccountingLedger(window_size=window)
    for hit in outcomes:
        settle(ledger, "f", "invoked-in-time" if hit else "mispredicted")
    tail = outcomes[-window:]
    assert ledger.confidence("f") == pytest.approx(sum(tail) / len(tail))
    assert ledger.account("f").suppressed == (sum(tail) / len(tail) < 0.5)
