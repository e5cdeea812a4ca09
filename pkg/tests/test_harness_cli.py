from __future__ import annotations

import json
from fractions import Fraction

import pytest

from dynlab.cli import main
from dynlab.core import ValidationError
from dynlab.harness import compare, from_csv, report_row, run, to_csv
from dynlab.workloads import HEAVY_THEN_LIGHT, WorkloadConfig, corpus, gen_workload, write_trace

from conftest import make_trace


def test_run_bigtable_totals():
    tr = make_trace([3, 1] + [0] * 98, name="bigtable")
    r = run("bigtable-default", tr, k=2, oracle="dp")
    assert r.build == 102 and r.objective == 102
    assert r.opt_cost == 7 and r.ratio == Fraction(102, 7)
    assert r.check_series()


def test_ratio_omitted_without_oracle():
    r = run("greedy-dual", make_trace([1, 2, 3]), k=2)
    assert r.ratio is None and r.opt_cost is None
    assert "ratio" not in r.to_json() and "opt" not in r.to_json()


def test_adaptive_and_naive_agree_on_unit_batches():
    tr = make_trace([1] * 11, "minsum")
    a, b = run("adaptive-binary", tr), run("naive-binary", tr)
    assert a.build_series == b.build_series and a.query_series == b.query_series


def test_greedy_dual_ratio_at_most_two():
    for tr in corpus(40, seed=41, n_range=(1, 12)):
        r = run("greedy-dual", tr, k=2, oracle="brute")
        assert r.ratio is None or r.ratio <= 2


def test_mismatched_policy_and_variant():
    with pytest.raises(ValidationError):
        run("adaptive-binary", make_trace([1]), k=2)
    with pytest.raises(ValidationError):
        run("greedy-dual", make_trace([1]))


def test_compare_rows_and_csv_round_trip():
    traces = corpus(2, seed=43, n_range=(3, 8))
    reports = compare(["greedy-dual", "k-binomial", "bigtable-default"], traces, k=2, oracle="brute")
    assert len(reports) == 6
    rows = from_csv(to_csv(reports))
    assert rows == [{k: str(v) for k, v in report_row(r).items()} for r in reports]


def test_naive_vs_adaptive_gap():
    tr = gen_workload(WorkloadConfig(kind=HEAVY_THEN_LIGHT, n=64, variant="minsum"))
    naive, adaptive = compare(["naive-binary", "adaptive-binary"], [tr], oracle="dp")
    assert naive.ratio >= 3 * adaptive.ratio


# ---------------------------------------------------------------- CLI

def _trace_file(tmp_path, weights, variant="kcomponent"):
    path = tmp_path / "t.jsonl"
    write_trace(make_trace(weights, variant, name="t"), path)
    return str(path)


def test_cli_gen_and_run(tmp_path, capsys):
    out = tmp_path / "g.jsonl"
    assert main(["gen", "--kind", "Bursty", "--n", "6", "--seed", "2", "--out", str(out)]) == 0
    assert main(["run", "--policy", "greedy-dual", "--trace", str(out), "--k", "2",
                 "--oracle", "brute"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert Fraction(doc["ratio"]) <= 2 and doc["structure"]["newest_first"]


def test_cli_opt_emits_witness(tmp_path, capsys):
    path = _trace_file(tmp_path, [3, 1, 0])
    assert main(["opt", "--oracle", "brute", "--trace", path, "--variant", "kcomponent", "--k", "2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["optimal_cost"] == "5" and doc["solver"] == "BruteNewestFirst"
    assert len(doc["witness"]["steps"]) == 3


def test_cli_compare_csv(tmp_path, capsys):
    path = _trace_file(tmp_path, [2, None, 5, 1])
    assert main(["compare", "--policy", "greedy-dual,k-binomial", "--policy", "bigtable-default",
                 "--trace", path, "--trace", path, "--k", "2", "--oracle", "dp"]) == 0
    rows = from_csv(capsys.readouterr().out)
    assert len(rows) == 6 and rows[0]["opt_solver"] == "DpKComponent"


def test_cli_lowerbound(capsys):
    assert main(["lowerbound-minsum", "--depth", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["match"] and doc["leaves"] == 6


def test_cli_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["run", "--policy", "greedy-dual"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main(["adversary", "--policy", "greedy-dual", "--k", "2", "--epsilon", "abc"])
    assert err.value.code == 1
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"t": 1, "items": [{"id": "a", "w": "x"}]}\n')
    assert main(["run", "--policy", "greedy-dual", "--trace", str(bad), "--k", "2"]) == 2
    assert main(["run", "--policy", "greedy-dual", "--trace", str(tmp_path / "missing"), "--k", "2"]) == 2
    assert main(["opt", "--trace", _trace_file(tmp_path, [1] * 14), "--k", "2"]) == 3
    assert main(["lowerbound-minsum", "--depth", "3"]) == 3
    assert main(["opt", "--trace", _trace_file(tmp_path, [1, 2]), "--variant", "kcomponent"]) == 1


def test_cli_adversary_report(capsys):
    code = main(["adversary", "--policy", "greedy-dual", "--k", "2", "--epsilon", "1/2"])
    doc = json.loads(capsys.readouterr().out)
    assert code == 0 and doc["stop_reason"] == "CostReached"
    assert Fraction(doc["achieved_ratio"]) >= Fraction(doc["guaranteed_ratio"])
