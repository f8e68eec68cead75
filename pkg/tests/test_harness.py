from pathlib import Path

import pytest

from freshen.harness import COLUMNS, ExperimentReport, resolve_seed, run_scenario, simulate
from freshen.runtime import FreshenMode
from freshen.scenario import load_scenario

ROOT = Path(__file__).resolve().parent.parent
SC = ROOT / "scenarios"


@pytest.fixture(scope="module")
def chain_report():
    return run_scenario(SC / "chain_s3_prefetch.toml", iterations=3)


def test_report_columns_and_rows(chain_report):
    assert chain_report.columns == COLUMNS
    modes = {r["mode"] for r in chain_report.rows}
    assert modes == {m.value for m in FreshenMode}
    for r in chain_report.rows:
        assert int(r["samples"]) == 3 and r["errors"] == "0"


def test_disabled_rows_have_no_freshen_activity(chain_report):
    for r in chain_report.rows:
        if r["mode"] == "disabled":
            assert r["freshen_performed"] == "0" and r["directives"] == "0"
            assert float(r["saving_ms"]) == 0.0


def test_csv_roundtrip(chain_report, tmp_path):
    out = tmp_path / "r.csv"
    chain_report.write(out)
    back = ExperimentReport.from_csv(out.read_text())
    assert back.rows == chain_report.rows
    assert back.to_csv() == chain_report.to_csv()


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_scenario(SC / "fanout_suppression.toml", output_path=a, iterations=10)
    run_scenario(SC / "fanout_suppression.toml", output_path=b, iterations=10)
    assert a.read_bytes() == b.read_bytes()


def test_parallel_equals_serial():
    serial = run_scenario(SC / "warm_cloud_edge.toml", iterations=2)
    parallel = run_scenario(SC / "warm_cloud_edge.toml", iterations=2, jobs=2)
    assert serial.to_csv() == parallel.to_csv()


def test_seed_override_changes_jittered_results():
    a = run_scenario(SC / "fanout_suppression.toml", iterations=5, seed=1)
    b = run_scenario(SC / "fanout_suppression.toml", iterations=5, seed=2)
    assert a.to_csv() != b.to_csv()


def test_seed_precedence(monkeypatch):
    sc = load_scenario(SC / "linear_chain.toml")
    monkeypatch.delenv("FRESHEN_SEED", raising=False)
    assert resolve_seed(sc) == sc.seed
    monkeypatch.setenv("FRESHEN_SEED", "99")
    assert resolve_seed(sc) == 99
    assert resolve_seed(sc, 3) == 3


def test_failed_run_writes_nothing(tmp_path):
    out = tmp_path / "never.csv"
    with pytest.raises(Exception):
        run_scenario(SC / "linear_chain.toml", modes=["turbo"], output_path=out)
    assert not out.exists()


def test_linear_chain_prefetch_helps_downstream():
    rep = run_scenario(SC / "linear_chain.toml", modes=["disabled", "prefetch-only"], iterations=2, sizes=[1048576])
    for i in range(2, 9):
        row = rep.row(f"f{i}", "prefetch-only", 1048576)
        assert float(row["saving_ms"]) > 0
        assert row["ledger_mispredictions"] == "0"


def test_fanout_rare_branch_suppressed():
    rep = run_scenario(SC / "fanout_suppression.toml")
    mode = [m for m in {r["mode"] for r in rep.rows} if m != "disabled"][0]
    size = int(rep.rows[0]["object_size"])
    rare, common = rep.row("rare", mode, size), rep.row("common", mode, size)
    assert rare["ledger_suppressed"] == "1" and float(rare["ledger_confidence"]) < 0.5
    assert common["ledger_suppressed"] == "0"
    assert int(rare["ledger_issued"]) < int(common["ledger_issued"])


def test_simulate_returns_stats_per_function():
    sc = load_scenario(SC / "chain_s3_prefetch.toml")
    stats = simulate(sc, "full-freshen", sc.object_sizes[0])
    assert set(stats) == {f.name for f in sc.functions}
    assert all(len(s.records) == 1 for s in stats.values())
