"""Seeded experiment runs: config parsing, training loop, CSV outputs, comparisons."""

from __future__ import annotations

import csv
import logging
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import data as D
from .metrics import (CosineRecord, cosine_metrics, fmt, landscape_slice, top_eigenvalues,
                      write_cosine_csv, write_slice_csv, write_spectrum_csv)
from .models import FixedBatchObjective, MlpLoss, MlpSpec, evaluate, init_model
from .optim import (AgnosticSamConfig, OptimizerState, SamConfig, SgdConfig, StepTrace, agnostic_sam_step,
                    cosine_lr, sam_step, sgd_train_step, validation_probe)
from .params import ParamVector, load_params, save_params
from .rng import SplitMix64

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "sam", "asam", "agnostic_sam", "agnostic_asam")
METRICS_HEADER = ["step", "epoch", "train_loss", "train_acc", "test_loss", "test_acc", "lr", "wall_time_ms"]

# key -> default; "auto" entries are resolved from other keys and echoed as numbers
DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "dataset.kind": "two_moons",
    "dataset.n": 1000,
    "dataset.test_n": 1000,
    "dataset.noise_std": 0.1,
    "dataset.label_noise": 0.0,
    "dataset.num_classes": 3,
    "dataset.center_radius": 5.0,
    "model.widths": "2,16,16,2",
    "model.activation": "relu",
    "optim.kind": "agnostic_sam",
    "optim.lr": 0.1,
    "optim.momentum": 0.9,
    "optim.weight_decay": 0.0005,
    "optim.rho": 0.05,
    "optim.rho1": "auto",
    "optim.rho2": "auto",
    "optim.beta": 0.9,
    "optim.variant": "full",
    "split.mode": "duplicated",
    "split.ratio": 0.7,
    "split.val_fraction": 0.25,
    "train.epochs": 10,
    "train.batch_size": 64,
    "metrics.cosine": False,
    "metrics.cosine_rho": "auto",
    "metrics.spectrum_every": 0,
    "metrics.spectrum_at_end": False,
    "metrics.spectrum_k": 5,
    "metrics.landscape_at_end": False,
    "metrics.landscape_extent": 1.0,
    "metrics.landscape_resolution": 10,
    "metrics.eval_size": 256,
    "metrics.wall_time": False,
    "output.dir": "runs/run",
}


class ConfigError(ValueError):
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field {key}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


class RunFailed(RuntimeError):
    pass


def _coerce(key: str, raw: Any, line: Optional[int] = None) -> Any:
    default = DEFAULTS[key]
    if isinstance(raw, str):
        raw = raw.strip()
    if raw == "auto" and default == "auto":
        return "auto"
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            if str(raw).lower() in ("true", "1", "yes", "on"):
                return True
            if str(raw).lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if isinstance(default, int):
            value = float(raw)
            if not value.is_integer():
                raise ValueError(f"expected an integer, got {raw!r}")
            return int(value)
        if isinstance(default, float) or default == "auto":
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise ConfigError(str(exc), key, line) from None


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError("unknown key", key, lineno)
        out[key] = _coerce(key, value, lineno)
    return out


def parse_overrides(pairs: list[str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = (p.strip() for p in pair.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError("unknown key", key)
        out[key] = _coerce(key, value)
    return out


@dataclass(frozen=True)
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def out_dir(self) -> Path:
        return Path(self.values["output.dir"])

    def with_updates(self, **updates) -> "RunConfig":
        return resolve_config({**self.values, **{k.replace("__", "."): v for k, v in updates.items()}})

    def to_text(self) -> str:
        return "".join(f"{k} = {_format_value(self.values[k])}\n" for k in sorted(self.values))

    def model_spec(self, init_seed: int = 0) -> MlpSpec:
        return MlpSpec(parse_widths(self["model.widths"]), self["model.activation"], init_seed)


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(w) for w in str(text).split(","))
    except ValueError:
        raise ConfigError(f"widths must be comma-separated integers, got {text!r}", "model.widths") from None


def resolve_config(values: Optional[dict[str, Any]] = None) -> RunConfig:
    """Fill defaults, resolve 'auto' entries and validate every sub-config."""
    merged = dict(DEFAULTS)
    for key, value in (values or {}).items():
        if key not in DEFAULTS:
            raise ConfigError("unknown key", key)
        merged[key] = _coerce(key, value)
    rho = merged["optim.rho"]
    if merged["optim.rho1"] == "auto":
        merged["optim.rho1"] = 2.0 * rho
    if merged["optim.rho2"] == "auto":
        merged["optim.rho2"] = rho
    if merged["metrics.cosine_rho"] == "auto":
        merged["metrics.cosine_rho"] = (merged["optim.rho2"] if merged["optim.kind"].startswith("agnostic")
                                         and merged["optim.rho2"] > 0 else rho)
    cfg = RunConfig(merged)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    checks = [
        ("train.epochs", cfg["train.epochs"] >= 1, "must be >= 1"),
        ("train.batch_size", cfg["train.batch_size"] >= 1, "must be >= 1"),
        ("dataset.kind", cfg["dataset.kind"] in D.DATASET_KINDS, f"must be one of {D.DATASET_KINDS}"),
        ("dataset.test_n", cfg["dataset.test_n"] >= 2, "must be >= 2"),
        ("optim.kind", cfg["optim.kind"] in OPTIMIZERS, f"must be one of {OPTIMIZERS}"),
        ("metrics.spectrum_every", cfg["metrics.spectrum_every"] >= 0, "must be >= 0"),
        ("metrics.eval_size", cfg["metrics.eval_size"] >= 1, "must be >= 1"),
    ]
    for key, ok, message in checks:
        if not ok:
            raise ConfigError(message, key)
    if cfg["dataset.n"] < 2:
        raise ConfigError("must be >= 2", "dataset.n")
    if not 0.0 <= cfg["dataset.label_noise"] <= 1.0:
        raise ConfigError("must lie in [0, 1]", "dataset.label_noise")
    builders = [
        ("model.widths", cfg.model_spec),
        ("split.mode", lambda: D.SplitStrategy(cfg["split.mode"], cfg["split.ratio"], cfg["split.val_fraction"])),
        ("optim", lambda: build_step(cfg)),
    ]
    for key, build in builders:
        try:
            build()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), key) from None
    if not cfg["metrics.cosine_rho"] > 0:
        raise ConfigError("must be positive", "metrics.cosine_rho")
    if cfg.model_spec().n_inputs != 2:
        raise ConfigError("synthetic datasets are 2-D; the first width must be 2", "model.widths")


def load_config(path: Optional[str | Path], overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    values: dict[str, Any] = {}
    if path is not None:
        values = parse_config_text(Path(path).read_text())
    values.update(overrides or {})
    return resolve_config(values)


def build_step(cfg: RunConfig):
    """Return ``step(state, theta, bt, bv, loss_fn, lr) -> (theta, trace)`` for the configured optimizer."""
    base = SgdConfig(cfg["optim.lr"], cfg["optim.momentum"], cfg["optim.weight_decay"])
    kind = cfg["optim.kind"]
    if kind == "sgd":
        return lambda st, th, bt, bv, fn, lr: sgd_train_step(st, base, th, bt, fn, lr)
    if kind in ("sam", "asam"):
        sam = SamConfig(cfg["optim.rho"], base, adaptive=kind == "asam")
        return lambda st, th, bt, bv, fn, lr: sam_step(st, sam, th, bt, fn, lr)
    ag = AgnosticSamConfig(cfg["optim.rho1"], cfg["optim.rho2"], base, cfg["optim.beta"],
                           adaptive=kind == "agnostic_asam", variant=cfg["optim.variant"])
    return lambda st, th, bt, bv, fn, lr: agnostic_sam_step(st, ag, th, bt, bv, fn, lr)


@dataclass
class Experiment:
    """Everything a run derives from its config and seed."""

    cfg: RunConfig
    spec: MlpSpec
    train: D.Dataset
    clean_train: D.Dataset
    test: D.Dataset
    eval_batch: D.Batch
    root: SplitMix64


def build_experiment(cfg: RunConfig) -> Experiment:
    root = SplitMix64(cfg["seed"])
    data_rng = root.child("data")
    kw = dict(num_classes=cfg["dataset.num_classes"], center_radius=cfg["dataset.center_radius"])
    clean = D.make_dataset(cfg["dataset.kind"], cfg["dataset.n"], cfg["dataset.noise_std"], data_rng.seed, **kw)
    test = D.make_dataset(cfg["dataset.kind"], cfg["dataset.test_n"], cfg["dataset.noise_std"],
                          root.child("test").seed, **kw)
    train = D.inject_label_noise(clean, cfg["dataset.label_noise"], data_rng.child("noise").seed)
    spec = cfg.model_spec(root.child("init").seed)
    if spec.n_classes != train.num_classes:
        raise ConfigError(f"output width {spec.n_classes} != {train.num_classes} classes", "model.widths")
    eval_rows = root.child("eval").sample(len(train), min(cfg["metrics.eval_size"], len(train)))
    return Experiment(cfg, spec, train, clean, test, train.rows(np.sort(eval_rows)), root)


@dataclass
class RunResult:
    out_dir: Path
    theta: ParamVector
    rows: list[dict[str, Any]]
    cosine: list[CosineRecord]
    spectrum: Optional[tuple[float, ...]] = None

    @property
    def final_test_acc(self) -> float:
        return self.rows[-1]["test_acc"]

    def mean_cosine_b(self, last_fraction: float = 0.2) -> float:
        vals = [r.cosine_b for r in self.cosine if r.cosine_b is not None]
        tail = vals[len(vals) - max(1, math.ceil(last_fraction * len(vals))):]
        return float(np.mean(tail))


def _alignment_trace(trace: StepTrace, bv, cfg: RunConfig, loss_fn) -> StepTrace:
    if trace.grad_v_pert is not None:
        return trace
    theta_v, grad_v_pert = validation_probe(trace.theta, bv, cfg["metrics.cosine_rho"], loss_fn,
                                            adaptive=cfg["optim.kind"] in ("asam", "agnostic_asam"))
    return StepTrace(trace.theta, trace.loss, trace.accuracy, trace.grad_t, trace.theta_t, trace.grad_t_pert,
                     theta_v=theta_v, grad_v_pert=grad_v_pert)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run(cfg: RunConfig, write: bool = True) -> RunResult:
    """Train one configuration end to end and write its run directory."""
    exp = build_experiment(cfg)
    out = cfg.out_dir
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text())
        if cfg["dataset.label_noise"] > 0:
            D.save_noise_manifest(exp.clean_train, exp.train, out / "noise_manifest.csv")
    loss_fn = MlpLoss(exp.spec)
    step_fn = build_step(cfg)
    strategy = D.SplitStrategy(cfg["split.mode"], cfg["split.ratio"], cfg["split.val_fraction"])
    sampler = D.BatchSampler(exp.train, strategy, cfg["train.batch_size"], exp.root.child("sampler"))
    steps_per_epoch = sampler.steps_per_epoch
    if steps_per_epoch < 1:
        raise ConfigError("batch size exceeds the training pool", "train.batch_size")
    total = cfg["train.epochs"] * steps_per_epoch
    theta = init_model(exp.spec)
    state = OptimizerState()
    rows: list[dict[str, Any]] = []
    cos_records: list[CosineRecord] = []
    prev_align: Optional[StepTrace] = None
    spectra: list[tuple[int, Any]] = []
    for step in range(total):
        epoch = step // steps_per_epoch
        t0 = time.perf_counter()
        bt, bv = sampler.next_batches()
        lr = cosine_lr(cfg["optim.lr"], step, total)
        theta_next, trace = step_fn(state, theta, bt, bv, loss_fn, lr)
        if not (math.isfinite(trace.loss) and theta_next.is_finite()):
            _abort(out if write else None, step, epoch, trace.loss)
        if cfg["metrics.cosine"]:
            align = _alignment_trace(trace, bv, cfg, loss_fn)
            if prev_align is not None:
                cos_records.append(cosine_metrics(prev_align, align, step=step - 1))
            prev_align = align
        theta = theta_next
        test_loss, test_acc = evaluate(exp.spec, theta, exp.test.as_batch())
        wall = (time.perf_counter() - t0) * 1000.0
        rows.append(dict(step=step, epoch=epoch, train_loss=trace.loss, train_acc=trace.accuracy,
                         test_loss=test_loss, test_acc=test_acc, lr=lr,
                         wall_time_ms=wall if cfg["metrics.wall_time"] else None))
        every = cfg["metrics.spectrum_every"]
        if every and (step + 1) % steps_per_epoch == 0 and (epoch + 1) % every == 0:
            spectra.append((epoch + 1, _spectrum(exp, theta)))
    result = RunResult(out, theta, rows, cos_records)
    if cfg["metrics.spectrum_at_end"]:
        rec = _spectrum(exp, theta)
        result.spectrum = rec.eigenvalues
        if write:
            write_spectrum_csv(rec, out / "spectrum.csv")
    if write:
        _write_rows(out / "metrics.csv", METRICS_HEADER,
                    [[r["step"], r["epoch"], fmt(r["train_loss"]), fmt(r["train_acc"]), fmt(r["test_loss"]),
                      fmt(r["test_acc"]), fmt(r["lr"]), fmt(r["wall_time_ms"])] for r in rows])
        if cfg["metrics.cosine"]:
            write_cosine_csv(cos_records, out / "cosine.csv")
        for epoch, rec in spectra:
            write_spectrum_csv(rec, out / f"spectrum_epoch{epoch}.csv")
        if cfg["metrics.landscape_at_end"]:
            write_slice_csv(slice_for(exp, theta), out / "slice.csv")
        save_params(theta, out / "checkpoint.params")
    return result


def _abort(out: Optional[Path], step: int, epoch: int, loss: float) -> None:
    message = f"non-finite loss or parameters at step {step} (epoch {epoch}); train_loss={loss!r}"
    if out is not None:
        (out / "failure.txt").write_text(f"step = {step}\nepoch = {epoch}\ntrain_loss = {loss!r}\n")
    raise RunFailed(message)


def _spectrum(exp: Experiment, theta: ParamVector, k: Optional[int] = None):
    objective = FixedBatchObjective(MlpLoss(exp.spec), exp.eval_batch)
    k = min(k or exp.cfg["metrics.spectrum_k"], len(theta))
    return top_eigenvalues(objective, theta, k, seed=exp.root.child("spectrum").seed)


def slice_for(exp: Experiment, theta: ParamVector, extent: Optional[float] = None,
              resolution: Optional[int] = None, seed: Optional[int] = None):
    objective = FixedBatchObjective(MlpLoss(exp.spec), exp.eval_batch)
    return landscape_slice(objective, theta,
                           extent if extent is not None else exp.cfg["metrics.landscape_extent"],
                           resolution if resolution is not None else exp.cfg["metrics.landscape_resolution"],
                           seed if seed is not None else exp.root.child("landscape").seed & 0xFFFFFFFF)


def load_run(run_dir: str | Path) -> tuple[Experiment, ParamVector]:
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.txt")
    return build_experiment(cfg), load_params(run_dir / "checkpoint.params")


def spectrum_of_run(run_dir: str | Path, k: int, out: Optional[Path] = None):
    exp, theta = load_run(run_dir)
    rec = _spectrum(exp, theta, k)
    write_spectrum_csv(rec, out or Path(run_dir) / "spectrum.csv")
    return rec


def slice_of_run(run_dir: str | Path, extent: float, resolution: int, seed: Optional[int] = None,
                 out: Optional[Path] = None):
    exp, theta = load_run(run_dir)
    sl = slice_for(exp, theta, extent, resolution, seed)
    write_slice_csv(sl, out or Path(run_dir) / "slice.csv")
    return sl


@dataclass(frozen=True)
class SeedOutcome:
    config: str
    seed: int
    final_test_acc: Optional[float]
    status: str


def _run_one(args) -> SeedOutcome:
    name, values, seed, out_dir = args
    cfg = resolve_config({**values, "seed": seed, "output.dir": str(out_dir)})
    try:
        return SeedOutcome(name, seed, run(cfg).final_test_acc, "ok")
    except (RunFailed, ValueError) as exc:
        log.error("run %s seed %d failed: %s", name, seed, exc)
        return SeedOutcome(name, seed, None, f"failed: {exc}")


@dataclass(frozen=True)
class ConfigSummary:
    config: str
    runs: int
    failed: int
    mean_test_acc: Optional[float]
    std_test_acc: Optional[float]


def summarize(outcomes: list[SeedOutcome]) -> list[ConfigSummary]:
    names = list(dict.fromkeys(o.config for o in outcomes))
    out = []
    for name in names:
        mine = [o for o in outcomes if o.config == name]
        accs = [o.final_test_acc for o in mine if o.status == "ok"]
        mean = statistics.fmean(accs) if accs else None
        std = statistics.stdev(accs) if len(accs) >= 2 else None
        out.append(ConfigSummary(name, len(mine), len(mine) - len(accs), mean, std))
    return out


def compare(configs: list[tuple[str, RunConfig]], seeds: list[int], out_dir: str | Path,
            threads: Optional[int] = None) -> tuple[list[SeedOutcome], list[ConfigSummary]]:
    """Run every (config, seed) pair and write runs.csv plus summary.csv (mean, sample std)."""
    if not configs or not seeds:
        raise ValueError("compare needs at least one config and one seed")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(name, cfg.values, seed, out_dir / name / f"seed{seed}") for name, cfg in configs for seed in seeds]
    threads = threads or int(os.environ.get("AGSAM_THREADS", "1"))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(job) for job in jobs]
    summaries = summarize(outcomes)
    _write_rows(out_dir / "runs.csv", ["config", "seed", "final_test_acc", "status"],
                [[o.config, o.seed, fmt(o.final_test_acc), o.status] for o in outcomes])
    _write_rows(out_dir / "summary.csv", ["config", "runs", "failed", "mean_test_acc", "std_test_acc"],
                [[s.config, s.runs, s.failed, fmt(s.mean_test_acc), fmt(s.std_test_acc)] for s in summaries])
    return outcomes, summaries
