import math
import xml.etree.ElementTree as ET
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from pinncurv import cli, runner
from pinncurv.analysis import EpochRecord, RunRecord, median_over_seeds
from pinncurv.errors import ConfigurationError
from pinncurv.geom import CurvatureSample
from pinncurv.model import LossBreakdown
from pinncurv.optim import OptimizerConfig
from pinncurv.plots import emit_plots

GOLDEN = Path(__file__).parent / "data" / "run_golden.csv"
TINY = runner.DatasetSpec(grid_nx=32, grid_nt=10, n_u=10, n_f=40, n_b=10)


def tiny_config(kind="ADAM", lr=0.01, epochs=4, **kw):
    return runner.ExperimentConfig(OptimizerConfig(kind, lr), arch="2-6-6-1", epochs=epochs, data=TINY, **kw)


def golden_record():
    e = [
        EpochRecord(0, LossBreakdown(0.5, 0.25, 0.125), LossBreakdown(0.25, 0.125, 0.0625), 0.5),
        EpochRecord(1, LossBreakdown(0.1, 0.2, 0.3), LossBreakdown(1e-05, 2e-05, 0.0), 0.125),
        EpochRecord(2, LossBreakdown(0.01, 0.02, 0.03), LossBreakdown(1e-07, 3.5, 2e-16), 0.0625,
                    CurvatureSample(2, 0.001, 1.5, 0.001 / 1.5, -0.75)),
    ]
    return RunRecord("GD", 0.01, 1.0, "S", 0, 3, e)


# --- persistence -------------------------------------------------------------


def test_csv_golden(tmp_path):
    path = runner.write_run_csv(golden_record(), tmp_path / "run.csv")
    assert path.read_bytes() == GOLDEN.read_bytes()
    assert len(path.read_text().splitlines()) == 4
    assert path.read_text().splitlines()[0] == runner.CSV_HEADER


def test_csv_round_trip(tmp_path):
    rec = golden_record()
    back = runner.read_run_csv(runner.write_run_csv(rec, tmp_path / "run.csv"))
    assert (back.optimizer, back.lr, back.beta, back.arch, back.data_seed, back.init_seed, back.status) == (
        "GD", 0.01, 1.0, "S", 0, 3, "exhausted-epochs")
    for a, b in zip(rec.epochs, back.epochs):
        assert (a.epoch, a.train, a.test, a.mse) == (b.epoch, b.train, b.test, b.mse)
        if a.curvature is None:
            assert b.curvature is None
        else:
            assert (a.curvature.kappa_t, a.curvature.kappa_omega, a.curvature.cos_theta) == (
                b.curvature.kappa_t, b.curvature.kappa_omega, b.curvature.cos_theta)
    assert runner.format_run_csv(back) == runner.format_run_csv(rec)


def test_column_mapping():
    # the IC term is written under bc_loss_*, the periodic term under bcp_loss_*
    header = runner.CSV_HEADER.split(",")
    row = runner.format_run_csv(golden_record()).splitlines()[1].split(",")
    assert row[header.index("bc_loss_train")] == "0.5"
    assert row[header.index("bulk_loss_train")] == "0.25"
    assert row[header.index("bcp_loss_train")] == "0.125"


def test_run_filename_carries_seeds():
    assert runner.run_filename(golden_record()) == "GD0.01_beta1.0_S_data0_init3.csv"


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        runner.write_run_csv(golden_record(), tmp_path / "missing" / "run.csv")


# --- training loop -----------------------------------------------------------


def test_zero_epochs_records_initial_state():
    rec = runner.run_single(tiny_config(epochs=0))
    assert len(rec.epochs) == 1 and rec.epochs[0].epoch == 0
    assert rec.epochs[0].curvature is None and rec.status == "exhausted-epochs"


@pytest.mark.parametrize("kind", ["GD", "ADAM", "LBFGS", "BBI"])
def test_run_is_deterministic(kind):
    cfg = tiny_config(kind, lr=0.01, epochs=5, data_seed=2, init_seed=4)
    a, b = runner.run_single(cfg), runner.run_single(cfg)
    assert runner.format_run_csv(a) == runner.format_run_csv(b)
    assert [e.epoch for e in a.epochs] == list(range(6))
    assert a.epochs[2].curvature is not None and a.epochs[1].curvature is None


def test_gd_with_huge_lr_diverges():
    rec = runner.run_single(runner.ExperimentConfig(OptimizerConfig("GD", 10.0), beta=1.0, epochs=50))
    assert rec.status == runner.DIVERGED
    assert len(rec.epochs) < 51


def test_run_batch_seeds_and_independence():
    cfg = tiny_config(epochs=3, init_seed=5)
    batch = runner.run_batch(cfg, n_seeds=3)
    assert [r.init_seed for r in batch] == [5, 6, 7]
    assert {r.data_seed for r in batch} == {0}
    for r in batch:
        solo = runner.run_single(replace(cfg, init_seed=r.init_seed))
        assert runner.format_run_csv(solo) == runner.format_run_csv(r)
    reversed_runs = runner.run_many([replace(cfg, init_seed=s) for s in (7, 6, 5)])
    assert sorted(runner.format_run_csv(r) for r in reversed_runs) == sorted(runner.format_run_csv(r) for r in batch)
    with pytest.raises(ConfigurationError):
        runner.run_batch(cfg, 0)


def test_batch_medians_match_summary():
    batch = runner.run_batch(tiny_config(epochs=3), n_seeds=3)
    (row,) = runner.summarize(batch)
    assert row.median_final_mse == median_over_seeds(batch, lambda r: r.series("mse"))[-1]


def test_minibatches_keep_category_proportions():
    from pinncurv.model import AdvectionProblem, as_architecture, sample_dataset

    prob = AdvectionProblem(1.0)
    pts = sample_dataset(prob, 0).train
    obj = runner.PinnObjective(as_architecture("S"), prob, pts)
    batches = list(obj.minibatches(np.random.default_rng(0), 400))
    assert len(batches) == 4  # 1744 training points in batches of about 400
    sizes = [clo.__defaults__[0].sizes for clo in batches]
    assert [sum(s[i] for s in sizes) for i in range(3)] == [80, 1600, 64]
    assert all(s == (20, 400, 16) for s in sizes)


# --- grid search -------------------------------------------------------------


def test_grid_single_candidate():
    res = runner.grid_search(runner.GridSearchSpec((0.01,), trials=2, epochs=2), tiny_config())
    assert res.best_lr == 0.01 and len(res.table) == 1


def test_grid_no_viable_lr():
    spec = runner.GridSearchSpec((1e4,), trials=1, epochs=20)
    base = runner.ExperimentConfig(OptimizerConfig("GD", 1.0), beta=1.0, epochs=20)
    res = runner.grid_search(spec, base)
    assert res.best_lr == runner.NO_VIABLE_LR and res.table[0][2] == 1


def test_grid_spec_validation():
    with pytest.raises(ConfigurationError):
        runner.GridSearchSpec(())
    with pytest.raises(ConfigurationError):
        runner.GridSearchSpec((0.1, -1.0))


def test_default_learning_rates():
    assert {k: runner.default_lr(k, 1, "S") for k in ("BBI", "LBFGS", "GD", "ADAM")} == {
        "BBI": 0.1, "LBFGS": 0.1, "GD": 0.01, "ADAM": 0.001}
    assert {k: runner.default_lr(k, 30, "L") for k in ("BBI", "LBFGS", "GD", "ADAM")} == {
        "BBI": 0.01, "LBFGS": 0.001, "GD": 0.001, "ADAM": 0.001}
    with pytest.raises(ConfigurationError):
        runner.default_lr("GD", 2.0)


def test_default_epochs():
    assert runner.default_epochs("LBFGS", 1) == 1000
    assert runner.default_epochs("LBFGS", 30) == 2000
    assert runner.default_epochs("ADAM", 5) == 5000


# --- config files ------------------------------------------------------------


def test_config_round_trip():
    cfg = runner.config_from_mapping(runner.parse_config_text(
        "# comment\noptimizer = bbi\nbeta = 5\narch = L\nbbi.t0 = 250\nbbi.rescale_energy = off\n"
        "data.n_f = 500\ninit_seed = 9\n"))
    assert cfg.optimizer.kind == "BBI" and cfg.optimizer.learning_rate == 0.01
    assert cfg.optimizer.bbi.t0 == 250 and cfg.optimizer.bbi.rescale_energy is False
    assert cfg.arch == "L" and cfg.data.n_f == 500 and cfg.init_seed == 9 and cfg.epochs == 5000
    again = runner.config_from_mapping(runner.parse_config_text(runner.dump_config(cfg)))
    assert again == cfg


@pytest.mark.parametrize("text", ["optimizer = ADAM\nfoo = 1\n", "no equals sign\n", "bbi.rescale_energy = maybe\n",
                                  "optimizer = SGD\nlr = 0.1\n", "epochs = -1\n"])
def test_config_errors(text):
    with pytest.raises(ConfigurationError):
        runner.config_from_mapping(runner.parse_config_text(text))


# --- summaries ---------------------------------------------------------------


def _synthetic(mse, kappa, status="exhausted-epochs", seed=0, optimizer="GD"):
    epochs = [
        EpochRecord(i, LossBreakdown(m, 0.0, 0.0), LossBreakdown(m, 0.0, 0.0), m,
                    None if k is None else CurvatureSample(i, k, k, 1.0, 1.0))
        for i, (m, k) in enumerate(zip(mse, kappa))
    ]
    return RunRecord(optimizer, 0.1, 1.0, "S", 0, seed, epochs, status)


def test_summary_examples(tmp_path):
    (row,) = runner.summarize([_synthetic([0.5, 0.2], [None, None])])
    assert row.median_final_mse == 0.2 and row.median_final_kappa_omega is None and row.spearman_kw_mse is None

    (row,) = runner.summarize([_synthetic([0.5], [None], runner.DIVERGED, s) for s in range(3)])
    assert row.median_final_mse == runner.DIVERGED and row.n_diverged == 3

    anti = _synthetic([1.0, 0.5, 0.4, 0.3], [None, None, 1.0, 2.0])
    anti.epochs.append(EpochRecord(4, anti.epochs[0].train, anti.epochs[0].test, 0.1, CurvatureSample(4, 5.0, 5.0, 1.0, 1.0)))
    rows = runner.summarize([anti])
    assert rows[0].spearman_kw_mse == -1.0 and rows[0].spearman_kt_mse == -1.0

    path = runner.write_summary_csv(rows, tmp_path / "summary.csv")
    assert path.read_text().splitlines()[0] == runner.SUMMARY_HEADER
    assert runner.read_summary_csv(path) == rows


# --- plots -------------------------------------------------------------------


def test_plots_empty_input(tmp_path):
    assert emit_plots([], [], tmp_path / "plots") == []
    assert not (tmp_path / "plots").exists()


def test_plots_single_point_and_valid_xml(tmp_path):
    rec = _synthetic([0.5, 0.2, 0.1], [None, None, 0.3])
    rows = runner.summarize([rec])
    written = emit_plots(rows, [rec], tmp_path)
    assert {p.name for p in written} >= {"median_mse_vs_beta.svg", "mse_vs_kappa_omega.svg"}
    ns = {"svg": "http://www.w3.org/2000/svg"}
    for p in written:
        ET.parse(p)  # raises on malformed XML
    scatter = ET.parse(tmp_path / "mse_vs_kappa_omega.svg")
    assert len(scatter.findall(".//svg:circle[@class='point']", ns)) == 1
    losses = [p for p in written if p.name.startswith("loss_")]
    assert len(losses) == 1


# --- command line ------------------------------------------------------------


def _train_args(out, *extra):
    return ["train", "--optimizer", "ADAM", "--lr", "0.01", "--arch", "2-6-6-1", "--epochs", "3",
            "--data-seed", "1", "--init-seed", "2", "--out", str(out), *extra]


def test_cli_train_is_byte_identical(tmp_path, capsys):
    assert cli.main(_train_args(tmp_path / "a")) == 0
    assert cli.main(_train_args(tmp_path / "b")) == 0
    (fa,) = sorted((tmp_path / "a").glob("*.csv"))
    (fb,) = sorted((tmp_path / "b").glob("*.csv"))
    assert fa.read_bytes() == fb.read_bytes()
    assert fa.with_suffix(".cfg").read_text() == fb.with_suffix(".cfg").read_text()


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("optimizer = GD\nlr = 0.5\narch = 2-4-1\nepochs = 2\ndata.n_f = 50\n")
    assert cli.main(["train", "--config", str(cfg), "--lr", "0.02", "--out", str(tmp_path / "o")]) == 0
    (path,) = (tmp_path / "o").glob("*.csv")
    assert path.name.startswith("GD0.02_")
    meta = runner.parse_config_text(path.with_suffix(".cfg").read_text())
    assert meta["init_seed"] == "0" and meta["data_seed"] == "0"


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("flux = 1\n")
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["train", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_divergence_is_not_an_error(tmp_path):
    args = ["train", "--optimizer", "GD", "--lr", "10", "--epochs", "20", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    (path,) = tmp_path.glob("*.csv")
    assert "status = diverged" in path.with_suffix(".cfg").read_text()


def test_cli_batch_summarize_plot_grid(tmp_path):
    runs = tmp_path / "runs"
    common = ["--optimizer", "GD", "--lr", "0.01", "--arch", "2-4-1", "--epochs", "3", "--out", str(runs)]
    assert cli.main(["batch", *common, "--seeds", "2"]) == 0
    assert len(list(runs.glob("GD*.csv"))) == 2
    assert cli.main(["summarize", str(runs), "--out", str(tmp_path / "s.csv")]) == 0
    (row,) = runner.read_summary_csv(tmp_path / "s.csv")
    assert row.optimizer == "GD" and row.arch == "2-4-1"
    assert cli.main(["plot", str(runs), "--out", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "mse_vs_kappa_omega.svg").exists()
    grid = ["grid", "--arch", "2-4-1", "--optimizers", "gd", "adam", "--lrs", "0.01", "0.1",
            "--seeds", "1", "--epochs", "2", "--out", str(tmp_path / "g")]
    assert cli.main(grid) == 0
    lines = (tmp_path / "g" / "grid.csv").read_text().splitlines()
    assert len(lines) == 1 + 4
