import csv
import io
import json

import pytest

from vemcurve import experiments
from vemcurve.cli import main
from vemcurve.exceptions import SolveFailure
from vemcurve.experiments import (
    CSV_COLUMNS,
    ExperimentConfig,
    build_meshes,
    run_ablation_k,
    run_sweep,
    summary_table,
    sweep_csv,
)
from vemcurve.mesh import load_mesh

SMALL = [16, 32, 64, 128]


def small(**kw):
    return ExperimentConfig.from_dict({"test": "disk", "seeds": SMALL, "lloyd_iters": 5, **kw})


@pytest.fixture(scope="module")
def disk_sweep():
    return run_sweep(small(orders=[1, 2]))


def test_sweep_csv_structure(disk_sweep, tmp_path):
    rows = list(csv.DictReader(io.StringIO(sweep_csv(disk_sweep.reports))))
    assert len(rows) == 8
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [r["mesh"] for r in rows[:4]] == ["disk1", "disk2", "disk3", "disk4"]
    for r in rows:
        assert float(r["h"]) == pytest.approx(int(r["N_V"]) ** -0.5, rel=1e-6)
    assert disk_sweep.ok and set(disk_sweep.slopes) == {1, 2}


def test_sweep_writes_outputs(tmp_path, disk_sweep):
    cfg = small(orders=[1, 2], out=str(tmp_path))
    result = run_sweep(cfg)
    text = (tmp_path / "sweep.csv").read_text()
    # deterministic given the configuration
    assert text == sweep_csv(disk_sweep.reports)
    summary = (tmp_path / "sweep_summary.txt").read_text()
    assert summary == summary_table(result)
    assert "m=2: energy slope vs h" in summary


def test_sweep_errors_decrease(disk_sweep):
    for m in (1, 2):
        errs = [r.energy_rel for r in disk_sweep.for_order(m)]
        assert errs[-1] < errs[0]


def test_k_override_equal_to_default_is_identical(disk_sweep):
    same = run_sweep(small(orders=[2], k=1))
    assert sweep_csv(same.reports) == sweep_csv(disk_sweep.for_order(2))


def test_ablation_m1_degenerates():
    result = run_ablation_k(small(orders=[1], seeds=[16, 32, 64]))
    assert result.degenerate
    assert list(result.runs) == [0]
    assert "m=1 k=0" in result.summary()


def test_ablation_runs_both_depths(tmp_path):
    result = run_ablation_k(small(orders=[2], seeds=[16, 32, 64], out=str(tmp_path)))
    assert list(result.runs) == [0, 1]
    assert result.slopes(0) is not None and result.slopes(1) is not None
    assert (tmp_path / "ablation_m2_k0.csv").exists()
    assert (tmp_path / "ablation_m2_summary.txt").read_text() == result.summary()


def test_failures_are_collected(monkeypatch):
    calls = []

    def flaky(case, mesh, m, name, *args):
        calls.append(name)
        if name == "disk2":
            raise SolveFailure("singular")
        return real(case, mesh, m, name, *args)

    real = experiments.solve_case
    monkeypatch.setattr(experiments, "solve_case", flaky)
    result = run_sweep(small(seeds=[16, 32, 64]))
    assert calls == ["disk1", "disk2", "disk3"]
    assert not result.ok
    assert result.failures[0][:2] == ("disk2", 1)
    assert len(result.reports) == 2
    assert "FAILED disk2 m=1" in summary_table(result)


@pytest.mark.parametrize(
    "bad",
    [
        {"test": "annulus"},
        {"orders": [0]},
        {"orders": [7]},
        {"seeds": [64, 32]},
        {"seeds": [0, 4]},
        {"refinements": 0},
        {"angle": "degrees"},
        {"colour": "red"},
    ],
)
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(bad)


def test_config_file_round_trip(tmp_path):
    cfg = small(orders=[1, 3], gamma=25.0)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_file(path) == cfg


def test_default_seed_counts():
    cfg = ExperimentConfig(test="flower", refinements=3)
    assert cfg.seed_counts() == [2000, 4000, 8000]
    assert ExperimentConfig(base_seeds=10, refinements=2).seed_counts() == [10, 20]


def test_saved_meshes_are_reused(tmp_path):
    assert main(["mesh", "--seeds", "24", "--lloyd-iters", "3", "--out", str(tmp_path)]) == 0
    path = tmp_path / "disk1.json"
    cfg = ExperimentConfig(mesh_files=[str(path)])
    ((name, mesh),) = build_meshes(cfg)
    assert name == "disk1"
    assert mesh == load_mesh(path)


def test_cli_solve(capsys):
    assert main(["solve", "--seeds", "24", "--lloyd-iters", "3", "--m", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("disk1 m=2:") and "eS=" in out


def test_cli_sweep_with_config(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"test": "square", "orders": [1], "seeds": [16, 32, 64], "lloyd_iters": 5}))
    assert main(["sweep", "--config", str(path), "--m", "1,2", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert len(rows) == 6 and {r["m"] for r in rows} == {"1", "2"}
    assert "energy slope" in capsys.readouterr().out


def test_cli_ablate(capsys):
    assert main(["ablate-k", "--seeds", "16,32,64", "--lloyd-iters", "3", "--m", "2"]) == 0
    out = capsys.readouterr().out
    assert "k=0" in out and "k=1" in out


def test_cli_errors_exit_2(tmp_path, capsys):
    assert main(["sweep", "--seeds", "64,32"]) == 2
    assert main(["solve", "--mesh-file", str(tmp_path / "missing.json")]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["sweep", "--test", "annulus"])


def test_cli_sweep_failure_exit_1(monkeypatch, capsys):
    def fail(*args, **kwargs):
        raise SolveFailure("boom")

    monkeypatch.setattr(experiments, "solve_case", fail)
    assert main(["sweep", "--seeds", "16,32,64", "--lloyd-iters", "2"]) == 1
    assert capsys.readouterr().out.count("FAILED") == 3
