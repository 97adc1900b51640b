import csv
import json
import filecmp
import os

import pytest

from lorentz_transport import REFERENCES, Hook
from lorentz_transport.cli import main
from lorentz_transport.errors import ConfigError
from lorentz_transport.measures import DiscreteMeasure, Instance
from lorentz_transport.pipeline import (CUSTOM_PROFILE, EXIT_ERROR, EXIT_HYPOTHESIS, EXIT_PASS, STAGES, SWEEP_COLUMNS,
                                        Pipeline, RunConfig, Tolerances, compare_pivots, run_pipeline, sweep,
                                        verify_files)
from lorentz_transport.spacetime import Event, MinkowskiSpacetime


def small_config(out_dir, **kwargs):
    settings = dict(seed=5, sizes=(4, 4), nodes=7, out_dir=str(out_dir))
    settings.update(kwargs)
    return RunConfig(**settings)


def read_summary(out_dir):
    with open(os.path.join(str(out_dir), "summary.json")) as f:
        return json.load(f)


def write_null_instance(path):
    model = MinkowskiSpacetime(1)
    mu, nu = DiscreteMeasure.dirac(Event((0.0, 0.0))), DiscreteMeasure.dirac(Event((1.0, 1.0)))
    Instance(model, mu, nu, None, CUSTOM_PROFILE).write(str(path))


def test_hook_calls_every_handler():
    hook = Hook()
    calls = []
    hook.handlers.append(lambda *args: calls.append(("first",) + args))
    hook.handlers.append(lambda *args: calls.append(("second",) + args))
    hook("stage", 1)
    assert calls == [("first", "stage", 1), ("second", "stage", 1)]


@pytest.mark.parametrize("kwargs", [
    dict(tolerances=Tolerances(snap=-1.0)),
    dict(tolerances=Tolerances(tie=float("nan"))),
    dict(profile="wormhole"),
    dict(profile=CUSTOM_PROFILE),
    dict(sizes=(0, 3)),
    dict(nodes=2),
    dict(max_cycle_len=1),
    dict(workers=0),
    dict(method="simplex-by-hand"),
    dict(last_stage="plot"),
    dict(weights="gaussian"),
    dict(checks=frozenset({"monotonicity", "vibes"})),
])
def test_invalid_configurations(kwargs, tmp_path):
    with pytest.raises(ConfigError):
        Pipeline(small_config(tmp_path, **kwargs))


def test_slices_run_passes_and_writes_artifacts(tmp_path):
    stages = []
    pipeline = Pipeline(small_config(tmp_path))
    pipeline.on_stage_completed_event.handlers.append(lambda stage, payload: stages.append(stage))
    failed = []
    pipeline.on_check_failed_event.handlers.append(failed.append)
    result = pipeline.run()
    assert result.exit_code == EXIT_PASS, result.summary
    assert stages == list(STAGES)
    assert failed == []
    for name in ("instance.json", "plan.json", "potentials.csv", "map.csv", "regularity.json", "summary.json"):
        assert (tmp_path / name).exists()
    summary = read_summary(tmp_path)
    assert summary["exit_code"] == EXIT_PASS and summary["error"] is None
    assert set(summary["checks"]) == {"monotonicity", "pi_solution", "duality", "map", "regularity"}
    assert abs(summary["values"]["duality_gap"]) <= 1e-8
    assert summary["values"]["agreement_rate"] == 1.0
    assert summary["config"]["seed"] == 5 and "out_dir" not in summary["config"]


def test_summary_config_does_not_depend_on_output_location(tmp_path):
    first = run_pipeline(small_config(tmp_path / "a", last_stage="instance"))
    second = run_pipeline(small_config(tmp_path / "b", last_stage="instance", workers=2))
    assert first.summary["config"] == second.summary["config"]


def test_pipeline_stops_after_the_requested_stage(tmp_path):
    result = run_pipeline(small_config(tmp_path, last_stage="potentials"))
    assert result.exit_code == EXIT_PASS
    assert (tmp_path / "potentials.csv").exists()
    assert not (tmp_path / "map.csv").exists()
    assert not (tmp_path / "regularity.json").exists()


def test_disabled_checks_are_skipped(tmp_path):
    result = run_pipeline(small_config(tmp_path, checks=frozenset({"monotonicity"})))
    assert result.exit_code == EXIT_PASS
    assert set(result.summary["checks"]) == {"monotonicity", "regularity"}


def test_infeasible_profile_exits_with_hypothesis_code(tmp_path, caplog):
    result = run_pipeline(small_config(tmp_path, profile="infeasible"))
    assert result.exit_code == EXIT_HYPOTHESIS
    assert result.summary["error"]["type"] == "NotCausallyRelatedError"
    assert (tmp_path / "instance.json").exists()
    assert not (tmp_path / "plan.json").exists()
    assert "not causally related" in caplog.text


def test_marginal_profile_never_passes_silently(tmp_path):
    result = run_pipeline(small_config(tmp_path, profile="marginal", seed=2))
    assert result.exit_code != EXIT_PASS
    assert result.summary["checks"]["regularity"]["hypothesis_flags"]


def test_null_related_instance_is_flagged(tmp_path):
    path = tmp_path / "null.json"
    write_null_instance(path)
    result = run_pipeline(small_config(tmp_path / "out", profile=CUSTOM_PROFILE, instance_path=str(path)))
    assert result.exit_code == EXIT_HYPOTHESIS
    regularity = result.summary["checks"]["regularity"]
    assert regularity["passed"]
    assert any("delta = 0" in flag for flag in regularity["hypothesis_flags"])
    assert result.summary["values"]["total_cost"] == pytest.approx(4.0)


def test_verify_stored_artifacts(tmp_path):
    run_pipeline(small_config(tmp_path, last_stage="potentials"))
    instance, plan, potentials = (str(tmp_path / name) for name in ("instance.json", "plan.json", "potentials.csv"))
    exit_code, reports = verify_files(instance, plan, potentials)
    assert exit_code == EXIT_PASS
    assert [r.name for r in reports] == ["plan", "monotonicity", "pi_solution", "duality"]

    with open(plan) as f:
        data = json.load(f)
    data["total_cost"] += 1.0
    with open(plan, "w") as f:
        json.dump(data, f)
    exit_code, reports = verify_files(instance, plan)
    assert exit_code == EXIT_ERROR
    assert not reports[0].passed


def test_sweep_writes_one_row_per_run(tmp_path):
    path = tmp_path / "sweep.csv"
    rows = sweep(small_config(tmp_path, sizes=(3, 3), nodes=5), [0, 1], str(path), profiles=["slices", "infeasible"])
    assert [(r["profile"], r["seed"]) for r in rows] == [("slices", 0), ("slices", 1), ("infeasible", 0),
                                                         ("infeasible", 1)]
    with open(path) as f:
        table = list(csv.reader(f))
    assert tuple(table[0]) == SWEEP_COLUMNS
    assert len(table) == 5
    assert [int(r["exit_code"]) for r in rows] == [EXIT_PASS, EXIT_PASS, EXIT_HYPOTHESIS, EXIT_HYPOTHESIS]
    assert not (tmp_path / "summary.json").exists()


def test_sweep_with_worker_processes_matches_serial(tmp_path):
    template = small_config(tmp_path, sizes=(3, 3), nodes=5)
    serial = sweep(template, [0, 1], str(tmp_path / "serial.csv"))
    parallel = sweep(template, [0, 1], str(tmp_path / "parallel.csv"), workers=2)
    assert serial == parallel


def test_sweep_without_seeds_writes_the_header(tmp_path):
    path = tmp_path / "empty.csv"
    assert sweep(small_config(tmp_path), [], str(path)) == []
    assert path.read_text().splitlines() == [",".join(SWEEP_COLUMNS)]


def test_compare_pivots(tmp_path):
    comparison = compare_pivots(small_config(tmp_path))
    assert comparison["cost_spread"] <= 1e-8
    assert (tmp_path / "compare.json").exists()


def cli(*args, out):
    return main(["-q"] + list(args) + ["--out", str(out)])


def test_cli_generate(tmp_path):
    assert cli("generate", "--seed", "3", "--mu", "3", "--nu", "4", out=tmp_path) == EXIT_PASS
    data = json.loads((tmp_path / "instance.json").read_text())
    assert len(data["mu"]["points"]) == 3 and len(data["nu"]["points"]) == 4
    assert not (tmp_path / "plan.json").exists()


def test_cli_exit_codes(tmp_path):
    assert cli("solve", "--mu", "3", "--nu", "3", "--nodes", "5", out=tmp_path / "ok") == EXIT_PASS
    assert cli("solve", "--profile", "infeasible", "--mu", "3", "--nu", "3", out=tmp_path / "bad") == EXIT_HYPOTHESIS
    assert cli("map", "--tol-snap", "-1", out=tmp_path / "config") == EXIT_ERROR
    assert cli("map", "--instance", str(tmp_path / "missing.json"), out=tmp_path / "io") == EXIT_ERROR


def test_cli_rejects_unknown_choices(tmp_path):
    with pytest.raises(SystemExit):
        cli("solve", "--profile", "wormhole", out=tmp_path)


def test_cli_custom_instance(tmp_path):
    path = tmp_path / "null.json"
    write_null_instance(path)
    assert cli("regularity", "--instance", str(path), "--nodes", "5", out=tmp_path / "run") == EXIT_HYPOTHESIS
    assert read_summary(tmp_path / "run")["config"]["profile"] == CUSTOM_PROFILE


def test_cli_verify(tmp_path):
    assert cli("potential", "--mu", "3", "--nu", "3", out=tmp_path) == EXIT_PASS
    code = main(["-q", "verify", "--instance", str(tmp_path / "instance.json"), "--plan", str(tmp_path / "plan.json"),
                 "--potentials", str(tmp_path / "potentials.csv"), "--out", str(tmp_path / "verify")])
    assert code == EXIT_PASS
    data = json.loads((tmp_path / "verify" / "verify.json").read_text())
    assert data["exit_code"] == EXIT_PASS and set(data["checks"]) == {"plan", "monotonicity", "pi_solution", "duality"}


def test_cli_sweep_and_compare(tmp_path):
    assert cli("sweep", "--seeds", "2", "--mu", "3", "--nu", "3", "--nodes", "5", "--csv", "s.csv",
               out=tmp_path) == EXIT_PASS
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 3
    assert cli("compare-pivots", "--mu", "3", "--nu", "3", out=tmp_path) == EXIT_PASS
    assert "costs" in json.loads((tmp_path / "compare.json").read_text())


def write_instance(path, sources, targets):
    mu = DiscreteMeasure.uniform([Event(p) for p in sources])
    nu = DiscreteMeasure.uniform([Event(p) for p in targets])
    Instance(MinkowskiSpacetime(1), mu, nu, None, CUSTOM_PROFILE).write(str(path))


@pytest.mark.parametrize("seed", [0, 7])
def test_default_slices_run_passes(seed, tmp_path):
    result = run_pipeline(RunConfig(seed=seed, out_dir=str(tmp_path)))
    assert result.exit_code == EXIT_PASS, result.summary
    assert result.summary["config"]["sizes"] == [20, 20]
    assert result.summary["config"]["weights"] == "dyadic"
    assert result.summary["values"]["agreement_rate"] == 1.0
    assert result.summary["checks"]["map"]["hypothesis_flags"] == []


def test_support_without_chains_between_pairs_verifies(tmp_path):
    path = tmp_path / "far.json"
    write_instance(path, [(0.0, 0.0), (0.0, 10.0)], [(3.0, 0.0), (3.0, 10.0)])
    result = run_pipeline(small_config(tmp_path / "out", profile=CUSTOM_PROFILE, instance_path=str(path)))
    assert result.exit_code != EXIT_ERROR, result.summary
    assert result.summary["checks"]["pi_solution"]["passed"]
    assert result.summary["checks"]["duality"]["passed"]
    assert abs(result.summary["values"]["duality_gap"]) <= 1e-12


def test_unexpected_exception_still_writes_the_summary(tmp_path, monkeypatch, caplog):
    def broken_solve(*args, **kwargs):
        raise RuntimeError("solver crashed")

    monkeypatch.setattr("lorentz_transport.pipeline.solve", broken_solve)
    result = run_pipeline(small_config(tmp_path))
    assert result.exit_code == EXIT_ERROR
    summary = read_summary(tmp_path)
    assert summary["exit_code"] == EXIT_ERROR
    assert summary["error"] == {"type": "RuntimeError", "message": "solver crashed", "hypothesis": False}
    assert "unexpected RuntimeError" in caplog.text


def test_failures_carry_a_registered_reference(tmp_path):
    run_pipeline(small_config(tmp_path, last_stage="potentials"))
    plan = str(tmp_path / "plan.json")
    with open(plan) as f:
        data = json.load(f)
    data["total_cost"] += 1.0
    with open(plan, "w") as f:
        json.dump(data, f)
    _, reports = verify_files(str(tmp_path / "instance.json"), plan)
    failures = [f for r in reports for f in r.failures]
    assert failures
    assert all(f.reference in REFERENCES for f in failures)
    assert failures[0].reference == "optimal-coupling"


@pytest.mark.slow
def test_sweep_output_is_reproducible(tmp_path):
    template = RunConfig(out_dir=str(tmp_path))
    sweep(template, range(10), str(tmp_path / "first.csv"), profiles=["slices", "marginal"])
    sweep(template, range(10), str(tmp_path / "second.csv"), profiles=["slices", "marginal"], workers=2)
    assert filecmp.cmp(str(tmp_path / "first.csv"), str(tmp_path / "second.csv"), shallow=False)


@pytest.mark.slow
def test_slices_sweep_passes_on_every_seed(tmp_path):
    rows = sweep(RunConfig(out_dir=str(tmp_path)), range(100), str(tmp_path / "sweep.csv"), workers=4)
    assert [r["seed"] for r in rows if r["exit_code"] != EXIT_PASS] == []
    assert all(abs(r["duality_gap"]) <= 1e-8 for r in rows)
    assert all(r["agreement_rate"] == 1.0 and r["min_delta"] > 0.0 for r in rows)
