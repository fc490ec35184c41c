import json
import logging

import numpy as np
import pytest

from potsbench.bench.config import ConfigError, parse_config
from potsbench.bench.hpo import DEFAULT_SPACE, Objective, random_search, sample_point
from potsbench.bench.results import CSV_FIELDS, ExperimentRecord, read_results, summarize, write_results
from potsbench.bench.runner import WORKERS_ENV, resolve_workers, run_cell, run_plan
from potsbench.cli import main
from potsbench.grinder import GrindSpec
from potsbench.pipeline import write_csv
from potsbench.rng import substream

from .conftest import linear_target_frame, sinusoid_frame


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    write_csv(sinusoid_frame(length=720, n_features=3), d / "sin.csv")
    write_csv(linear_target_frame(length=960), d / "lin.csv")
    return d


def config(data_dir, *, imputers=("linear",), seeds="[1]", grinds=None, datasets=("sin",), extra=""):
    parts = []
    for ds in datasets:
        parts.append(f'[dataset.{ds}]\npath = "{data_dir / (ds + ".csv")}"\nwindow = 24\n')
    for name, body in (grinds or {"p10": 'pattern = "point"\nrate = 0.1'}).items():
        parts.append(f"[grind.{name}]\n{body}\n")
    for imp in imputers:
        body = f'kind = "{imp}"' + ("\nepochs = 5" if imp == "adapted_linear" else "")
        parts.append(f"[imputer.{imp}]\n{body}\n")
    parts.append(extra)
    if seeds is not None:
        parts.append(f"[run]\nseeds = {seeds}\n")
    return "\n".join(parts)


# -- config ---------------------------------------------------------------------

def test_minimal_config_one_cell(data_dir):
    plan = parse_config(config(data_dir))
    assert plan.n_cells == 1 and len(plan.cells()) == 1
    cell = plan.cells()[0]
    assert cell.grind == GrindSpec("point", 0.1, 1)
    assert plan.recipes[0].fractions == (0.6, 0.2, 0.2)


@pytest.mark.parametrize("text,message", [
    ('[imputer.foo]\nkind = "warp"', "unknown imputer kind"),
    ('[imputer.lin]\nkind = "linear"\nfoo = 1', "unknown key imputer.lin.foo"),
    ('[imputer.lin]\nkind = "linear"\nlr = 0.1', "imputer.lin: .*takes no hyperparameters"),
    ('[imputer.al]\nkind = "adapted_linear"\nepochs = "many"', "imputer.al.epochs"),
    ('[grind.g]\npattern = "point"\nrate = 0.1\nwidth = 3', "unknown key grind.g.width"),
    ('[grind.g]\npattern = "point"\nrate = "high"', "grind.g.rate"),
    ('[grind.g]\npattern = "zigzag"\nrate = 0.1', "unknown missing pattern"),
    ("[extra]\nx = 1", "unknown section"),
])
def test_config_errors(data_dir, text, message):
    base = config(data_dir, seeds=None).replace('[imputer.linear]\nkind = "linear"\n', "")
    if "[grind.g]" in text:
        base = base.replace('[grind.p10]\npattern = "point"\nrate = 0.1\n', "")
    if "[imputer" not in text:
        base += '\n[imputer.linear]\nkind = "linear"\n'
    with pytest.raises(ConfigError, match=message):
        parse_config(base + "\n" + text + "\n[run]\nseeds = [1]\n")


def test_missing_seeds_and_empty_imputers(data_dir):
    with pytest.raises(ConfigError, match="run.seeds required"):
        parse_config(config(data_dir, seeds=None) + "\n[run]\nformat = \"csv\"\n")
    with pytest.raises(ConfigError, match="imputer"):
        parse_config(config(data_dir, imputers=()))


def test_relative_paths_resolve_against_config_dir(tmp_path):
    text = '[dataset.x]\npath = "d/x.csv"\nwindow = 4\n[grind.g]\npattern = "point"\nrate = 0.1\n' \
           '[imputer.m]\nkind = "mean"\n[run]\nseeds = [1]\noutput = "out/r.csv"\n'
    plan = parse_config(text, tmp_path)
    assert plan.recipes[0].path == str(tmp_path / "d/x.csv")
    assert plan.output == str(tmp_path / "out/r.csv")


def test_cells_are_lexicographic(data_dir):
    plan = parse_config(config(data_dir, imputers=("mean", "linear"), seeds="[2, 1]",
                               datasets=("sin", "lin")))
    keys = [c.key for c in plan.cells()]
    assert keys == sorted(keys) and len(keys) == 8


# -- running ----------------------------------------------------------------------

def test_run_cell_rate_zero_fails_cleanly(data_dir):
    plan = parse_config(config(data_dir, grinds={"none": 'pattern = "point"\nrate = 0.0'}))
    rec = run_cell(plan.cells()[0])
    assert rec.status == "failed(empty evaluation mask)"
    assert rec.metrics() == (None, None, None)


def test_run_cell_deterministic_and_accounting(data_dir):
    plan = parse_config(config(data_dir, imputers=("mean", "adapted_linear")))
    cells = plan.cells()
    a, b = [run_cell(c) for c in cells], [run_cell(c) for c in cells]
    assert [r.metrics() for r in a] == [r.metrics() for r in b]
    by_name = {r.imputer: r for r in a}
    assert by_name["mean"].fit_time_s == 0 and by_name["mean"].n_params == 0
    assert by_name["adapted_linear"].n_params > 0 and by_name["adapted_linear"].fit_time_s > 0
    assert all(r.ok and r.infer_time_s >= 0 for r in a)


def test_run_plan_matrix_and_worker_equivalence(data_dir):
    plan = parse_config(config(data_dir, imputers=("mean", "linear"), seeds="[1, 2]", datasets=("sin", "lin")))
    serial = run_plan(plan, workers=1)
    parallel = run_plan(plan, workers=3)
    assert len(serial) == 8
    assert [(r.dataset, r.imputer, r.seed) for r in serial] == [(r.dataset, r.imputer, r.seed) for r in parallel]
    assert [r.metrics() for r in serial] == [r.metrics() for r in parallel]


def test_downstream_in_run(data_dir):
    extra = '[downstream.reg]\ntask = "regression"\ntarget_feature = "y"\n'
    plan = parse_config(config(data_dir, datasets=("lin",), extra=extra))
    rec = run_cell(plan.cells()[0])
    assert rec.ok
    (flat,) = rec.downstream.values()
    assert flat["ds_imputed_mae"] < flat["ds_baseline_mae"]


def test_only_test_split_ground(data_dir):
    plan = parse_config(config(data_dir, imputers=("adapted_linear",)).replace(
        "seeds = [1]", 'seeds = [1]\ngrind_splits = ["test"]'))
    assert plan.grind_splits == ("test",)
    assert run_cell(plan.cells()[0]).ok


def test_resolve_workers(data_dir, monkeypatch, caplog):
    plan = parse_config(config(data_dir) + "workers = 2\n")
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert resolve_workers(None, plan) == 2
    monkeypatch.setenv(WORKERS_ENV, "3")
    with caplog.at_level(logging.WARNING):
        assert resolve_workers(None, plan) == 3
    assert "overridden" in caplog.text
    assert resolve_workers(4, plan) == 4


# -- hpo ----------------------------------------------------------------------------

def test_sample_point_ranges():
    for i in range(50):
        p = sample_point(DEFAULT_SPACE, substream(0, "t", i))
        assert 1e-4 <= p["lr"] <= 1e-2 and p["batch_size"] in (16, 32, 64)
        assert 3 <= p["ma_window"] <= 49 and 0.1 <= p["mit_rate"] <= 0.3


def test_random_search_contract():
    calls = []

    def objective(point):
        calls.append(point)
        return abs(np.log10(point["lr"]) + 3)

    space = {"lr": DEFAULT_SPACE["lr"]}
    one = random_search(space, 1, objective, seed=5)
    assert len(one.trials) == 1 and one.best.hyperparameters["lr"] == one.trials[0][0]["lr"]
    res = random_search(space, 12, objective, seed=5)
    assert res.best_score == min(s for _, s in res.trials)
    again = random_search(space, 12, objective, seed=5)
    assert again.trials == res.trials and again.best == res.best
    assert res.trials[0] == one.trials[0]
    with pytest.raises(ValueError):
        random_search(space, 0, objective, seed=5)


def test_random_search_ties_pick_earliest():
    res = random_search({"lr": DEFAULT_SPACE["lr"]}, 5, lambda p: 1.0, seed=0)
    assert res.best.hyperparameters["lr"] == res.trials[0][0]["lr"]


def test_objective_is_validation_mae(sinusoid_data):
    obj = Objective(sinusoid_data, GrindSpec("point", 0.1), 1, {"epochs": 3})
    res = random_search(DEFAULT_SPACE, 2, obj, seed=1)
    assert res.best_score == min(s for _, s in res.trials)
    assert res.best.hyperparameters["epochs"] == 3


# -- results ----------------------------------------------------------------------------

def _rec(imputer="mean", seed=1, mae=0.5, status="ok"):
    return ExperimentRecord("d", "point", 0.1, imputer, seed, status, mae, mae, mae, 0.0, 0.001, 0)


def test_write_csv_schema_and_round_trip(tmp_path):
    recs = [_rec(), ExperimentRecord("d", "point", 0.1, "linear", 2, "failed(empty evaluation mask)")]
    write_results(recs[:1], tmp_path / "one.csv")
    assert (tmp_path / "one.csv").read_text().splitlines() == [
        ",".join(CSV_FIELDS), "d,point,0.1,mean,1,ok,0.500000,0.500000,0.500000,0.000000,0.001000,0"]
    write_results(recs, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[2] == "d,point,0.1,linear,2,failed(empty evaluation mask),,,,0.000000,0.000000,0"
    assert read_results(tmp_path / "r.csv") == recs
    write_results(recs, tmp_path / "r.jsonl", "jsonl")
    assert read_results(tmp_path / "r.jsonl") == recs
    assert json.loads((tmp_path / "r.jsonl").read_text().splitlines()[1])["mae"] is None


def test_write_results_surfaces_path(tmp_path):
    (tmp_path / "f").write_text("")
    with pytest.raises(OSError, match="f/r.csv"):
        write_results([_rec()], tmp_path / "f" / "r.csv")


def test_summarize_examples():
    text = summarize([_rec()])
    assert "0.500   0.000" in text
    two = summarize([_rec("mean", mae=0.7), _rec("linear", mae=0.2)])
    rows = {line.split()[3]: line for line in two.splitlines()[2:]}
    assert rows["linear"].endswith("*") and not rows["mean"].endswith("*")
    five = summarize([_rec(seed=s, mae=v) for s, v in enumerate([1.0, 2.0, 3.0, 4.0, 5.0])])
    # population std of 1..5 is sqrt(2) = 1.414
    assert "3.000   1.414" in five
    with pytest.raises(ValueError):
        summarize([_rec(status="failed(x)", mae=None)])


# -- cli --------------------------------------------------------------------------------

def test_cli_run_summarize_and_exit_codes(data_dir, tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(config(data_dir, imputers=("mean", "linear"), seeds="[1, 2]") + 'output = "r.csv"\n')
    assert main(["run", str(cfg)]) == 0
    first = (tmp_path / "r.csv").read_text()
    assert first.splitlines()[0] == ",".join(CSV_FIELDS) and len(first.splitlines()) == 5
    assert main(["run", str(cfg), "--workers", "2"]) == 0
    assert (tmp_path / "r.csv").read_text().split("\n")[0] == first.split("\n")[0]
    assert main(["summarize", str(tmp_path / "r.csv")]) == 0
    assert "*" in capsys.readouterr().out

    bad = tmp_path / "bad.toml"
    bad.write_text(config(data_dir, grinds={"z": 'pattern = "point"\nrate = 0.0'}) + 'output = "z.csv"\n')
    assert main(["run", str(bad)]) == 1
    (tmp_path / "err.toml").write_text("[run]\n")
    assert main(["run", str(tmp_path / "err.toml")]) == 2


def test_cli_grind_inspect_and_hpo(data_dir, tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(config(data_dir, imputers=("adapted_linear",)))
    assert main(["grind", str(cfg), "--inspect"]) == 0
    out = capsys.readouterr().out
    assert out.count("missing_rate=") == 3
    assert main(["grind", str(cfg), "--inspect", "--save", str(tmp_path / "g")]) == 0
    assert sorted(p.name for p in (tmp_path / "g").iterdir()) == [
        "sin_p10_test.npz", "sin_p10_train.npz", "sin_p10_val.npz"]
    assert main(["hpo", str(cfg), "--budget", "2"]) == 0
    out = capsys.readouterr().out
    assert out.count("trial") == 2 and 'kind = "adapted_linear"' in out and "epochs = 5" in out
