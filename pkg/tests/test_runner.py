import math
import statistics

import numpy as np
import pytest

from agsam.runner import (DEFAULTS, ConfigError, RunFailed, SeedOutcome, build_experiment, compare, load_config,
                          parse_config_text, parse_overrides, resolve_config, run, summarize)

FAST = {"dataset.n": 120, "dataset.test_n": 60, "train.epochs": 2, "train.batch_size": 16, "model.widths": "2,8,2"}


def _cfg(tmp_path, name="run", **values):
    return resolve_config({**FAST, "output.dir": str(tmp_path / name), **values})


def test_row_count_on_sixteen_point_blobs(tmp_path):
    cfg = _cfg(tmp_path, **{"dataset.kind": "blobs", "dataset.n": 16, "dataset.num_classes": 2,
                            "model.widths": "2,4,2", "optim.kind": "sgd", "train.epochs": 1, "train.batch_size": 4})
    run(cfg)
    lines = (tmp_path / "run" / "metrics.csv").read_text().splitlines()
    assert lines[0] == "step,epoch,train_loss,train_acc,test_loss,test_acc,lr,wall_time_ms"
    assert len(lines) == 1 + 4
    assert [line.split(",")[0] for line in lines[1:]] == ["0", "1", "2", "3"]


def test_same_config_is_byte_identical(tmp_path):
    a = _cfg(tmp_path, "a", **{"metrics.cosine": True})
    b = _cfg(tmp_path, "b", **{"metrics.cosine": True})
    run(a)
    run(b)
    for name in ("metrics.csv", "cosine.csv", "checkpoint.params"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_echo_reproduces_the_run(tmp_path):
    cfg = _cfg(tmp_path, "orig", **{"optim.kind": "sam", "dataset.label_noise": 0.2})
    run(cfg)
    echoed = load_config(tmp_path / "orig" / "config.txt", {"output.dir": str(tmp_path / "again")})
    assert set(echoed.values) == set(DEFAULTS)
    run(echoed)
    assert (tmp_path / "orig" / "metrics.csv").read_bytes() == (tmp_path / "again" / "metrics.csv").read_bytes()
    assert (tmp_path / "orig" / "noise_manifest.csv").read_text().startswith("index,old_label,new_label\n")


def test_reduction_end_to_end(tmp_path):
    ag = run(_cfg(tmp_path, "ag", **{"optim.kind": "agnostic_sam", "optim.rho1": 0.1, "optim.rho2": 0.0}), write=False)
    sam = run(_cfg(tmp_path, "sam", **{"optim.kind": "sam", "optim.rho": 0.1}), write=False)
    a = np.array([r["train_loss"] for r in ag.rows])
    b = np.array([r["train_loss"] for r in sam.rows])
    assert np.max(np.abs(a - b)) <= 1e-12


def test_all_metric_outputs(tmp_path):
    cfg = _cfg(tmp_path, **{"metrics.cosine": True, "metrics.spectrum_every": 1, "metrics.spectrum_at_end": True,
                            "metrics.spectrum_k": 2, "metrics.landscape_at_end": True,
                            "metrics.landscape_resolution": 2, "metrics.wall_time": True, "metrics.eval_size": 32})
    res = run(cfg)
    out = tmp_path / "run"
    for name in ("config.txt", "metrics.csv", "cosine.csv", "spectrum.csv", "spectrum_epoch1.csv",
                 "spectrum_epoch2.csv", "slice.csv", "checkpoint.params"):
        assert (out / name).exists(), name
    assert len(res.spectrum) == 2
    assert len((out / "slice.csv").read_text().splitlines()) == 1 + 25
    assert len(res.cosine) == len(res.rows) - 1
    assert all(r["wall_time_ms"] >= 0 for r in res.rows)


def test_wall_time_blank_by_default(tmp_path):
    run(_cfg(tmp_path))
    rows = (tmp_path / "run" / "metrics.csv").read_text().splitlines()[1:]
    assert all(r.endswith(",") for r in rows)


@pytest.mark.parametrize("kind", ["sgd", "sam", "asam", "agnostic_sam", "agnostic_asam"])
def test_every_optimizer_reports_cosines(tmp_path, kind):
    res = run(_cfg(tmp_path, **{"optim.kind": kind, "metrics.cosine": True,
                                "optim.rho": 0.5 if "asam" in kind else 0.05}), write=False)
    vals = [r.cosine_b for r in res.cosine]
    assert all(v is None or -1 <= v <= 1 for v in vals)
    assert math.isfinite(res.mean_cosine_b())


def test_learning_reduces_loss(tmp_path):
    res = run(_cfg(tmp_path, **{"train.epochs": 20, "model.widths": "2,16,2"}), write=False)
    assert res.rows[-1]["test_loss"] < res.rows[0]["test_loss"]
    assert res.final_test_acc > 0.8


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts(tmp_path):
    cfg = _cfg(tmp_path, **{"optim.kind": "sgd", "optim.lr": 1e200, "optim.momentum": 0.0, "model.widths": "2,16,2"})
    with pytest.raises(RunFailed):
        run(cfg)
    assert "step = " in (tmp_path / "run" / "failure.txt").read_text()


def test_config_parsing_errors():
    with pytest.raises(ConfigError, match="line 2, field optim.rho"):
        parse_config_text("seed = 1\noptim.rho = abc\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("nonsense\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("optim.bogus = 1\n")
    with pytest.raises(ConfigError, match="train.epochs"):
        resolve_config({"train.epochs": 0})
    with pytest.raises(ConfigError, match="optim"):
        resolve_config({"optim.kind": "sam", "optim.rho": -1.0})
    with pytest.raises(ConfigError, match="model.widths"):
        resolve_config({"model.widths": "3,4,2"})
    with pytest.raises(ConfigError):
        parse_overrides(["seed"])
    assert parse_config_text("# comment\n metrics.cosine = yes  # trailing\n") == {"metrics.cosine": True}


def test_auto_radii_follow_rho():
    cfg = resolve_config({"optim.rho": 0.1})
    assert cfg["optim.rho1"] == 0.2 and cfg["optim.rho2"] == 0.1 and cfg["metrics.cosine_rho"] == 0.1
    assert resolve_config({"optim.rho2": 0.0})["metrics.cosine_rho"] == 0.05


def test_experiment_seeds_are_independent():
    a = build_experiment(resolve_config({"seed": 1, "dataset.label_noise": 0.4}))
    b = build_experiment(resolve_config({"seed": 2, "dataset.label_noise": 0.4}))
    assert not np.array_equal(a.train.features, b.train.features)
    assert np.array_equal(a.test.labels, build_experiment(resolve_config({"seed": 1})).test.labels)
    assert (a.train.labels != a.clean_train.labels).sum() == 400


def test_summary_statistics():
    outs = [SeedOutcome("c", s, acc, "ok") for s, acc in zip((1, 2, 3), (0.9, 0.8, 1.0))]
    outs.append(SeedOutcome("c", 4, None, "failed: boom"))
    (s,) = summarize(outs)
    assert s.runs == 4 and s.failed == 1
    assert s.mean_test_acc == pytest.approx(0.9, abs=1e-15)
    assert s.std_test_acc == pytest.approx(0.1, abs=1e-15)


def test_compare_writes_consistent_tables(tmp_path):
    cfg = resolve_config({**FAST, "train.epochs": 1})
    outcomes, summaries = compare([("base", cfg), ("sam", cfg.with_updates(optim__kind="sam"))], [1, 2, 3],
                                  tmp_path / "cmp")
    runs = [line.split(",") for line in (tmp_path / "cmp" / "runs.csv").read_text().splitlines()[1:]]
    summary = [line.split(",") for line in (tmp_path / "cmp" / "summary.csv").read_text().splitlines()]
    assert summary[0] == ["config", "runs", "failed", "mean_test_acc", "std_test_acc"]
    assert [r[:2] for r in runs] == [[n, str(s)] for n in ("base", "sam") for s in (1, 2, 3)]
    for row in summary[1:]:
        accs = [float(r[2]) for r in runs if r[0] == row[0]]
        assert abs(float(row[3]) - float(np.mean(accs))) <= 1e-12
        assert abs(float(row[4]) - float(np.std(accs, ddof=1))) <= 1e-12


def test_compare_identical_runs_have_zero_std(tmp_path):
    # far-apart blobs are classified perfectly by every seed
    cfg = resolve_config({**FAST, "dataset.kind": "blobs", "dataset.num_classes": 2, "dataset.center_radius": 50.0,
                          "dataset.noise_std": 0.0, "optim.kind": "sgd", "train.epochs": 3})
    _, (s,) = compare([("blobs", cfg)], [1, 2, 3], tmp_path / "cmp")
    assert s.mean_test_acc == 1.0 and s.std_test_acc == 0.0


def test_label_noise_does_not_help(tmp_path):
    clean = resolve_config({"dataset.n": 300, "dataset.test_n": 300, "train.epochs": 15, "train.batch_size": 32,
                            "optim.kind": "sgd"})
    noisy = clean.with_updates(dataset__label_noise=0.4)
    _, (a, b) = compare([("clean", clean), ("noisy", noisy)], [0, 1, 2, 3, 4], tmp_path / "cmp")
    assert b.mean_test_acc <= a.mean_test_acc


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_compare_flags_failures(tmp_path):
    bad = resolve_config({**FAST, "optim.kind": "sgd", "optim.lr": 1e200, "optim.momentum": 0.0,
                          "model.widths": "2,16,2"})
    outcomes, (s,) = compare([("bad", bad)], [1], tmp_path / "cmp")
    assert s.failed == 1 and s.mean_test_acc is None
    assert outcomes[0].status.startswith("failed")
    assert (tmp_path / "cmp" / "summary.csv").read_text().splitlines()[1] == "bad,1,1,,"
    with pytest.raises(ValueError):
        compare([], [1], tmp_path / "x")
