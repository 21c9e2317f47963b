"""Experiment orchestration: configs, training loop, persistence, summaries."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import analysis
from .analysis import EpochRecord, RunRecord
from .errors import ConfigurationError, DivergenceError, InsufficientDataError
from .geom import CurvatureSample, CurvatureTracker
from .model import (
    AdvectionProblem,
    LossBreakdown,
    PointSet,
    arch_label,
    as_architecture,
    grid_mse,
    init_params,
    pinn_loss,
    pinn_loss_and_grad,
    sample_dataset,
)
from .optim import AdamParams, BbiParams, LbfgsParams, OptimizerConfig, make_optimizer

DIVERGENCE_LIMIT = 1e6
DIVERGED = "diverged"
NO_VIABLE_LR = "no-viable-lr"

# best learning rates per (arch, beta), by optimizer
DEFAULT_LR = {
    ("S", 1): {"BBI": 0.1, "LBFGS": 0.1, "GD": 0.01, "ADAM": 0.001},
    ("S", 5): {"BBI": 0.01, "LBFGS": 0.1, "GD": 0.01, "ADAM": 0.001},
    ("S", 15): {"BBI": 0.01, "LBFGS": 0.01, "GD": 0.0001, "ADAM": 0.01},
    ("S", 30): {"BBI": 0.01, "LBFGS": 0.01, "GD": 0.001, "ADAM": 0.01},
    ("L", 1): {"BBI": 0.01, "LBFGS": 0.1, "GD": 0.01, "ADAM": 0.0001},
    ("L", 5): {"BBI": 0.01, "LBFGS": 0.1, "GD": 0.01, "ADAM": 0.001},
    ("L", 15): {"BBI": 0.01, "LBFGS": 1.0, "GD": 0.01, "ADAM": 0.001},
    ("L", 30): {"BBI": 0.01, "LBFGS": 0.001, "GD": 0.001, "ADAM": 0.001},
}

CSV_HEADER = (
    "epoch,train_loss_total,bc_loss_train,bulk_loss_train,bcp_loss_train,"
    "test_loss_total,bc_loss_test,bulk_loss_test,bcp_loss_test,mse,kappa_t,kappa_omega,cos_theta"
)
SUMMARY_HEADER = (
    "optimizer,beta,arch,lr,median_final_mse,median_final_kappa_omega,median_final_kappa_t,"
    "spearman_kw_mse,spearman_kt_mse,n_diverged"
)


def default_lr(kind: str, beta: float, arch: str = "S") -> float:
    try:
        return DEFAULT_LR[(arch, int(beta))][kind.upper()]
    except KeyError:
        raise ConfigurationError(f"no default learning rate for {kind} at beta={beta}, arch={arch}") from None


def default_epochs(kind: str, beta: float) -> int:
    if kind.upper() == "LBFGS":
        return 1000 if beta <= 5 else 2000
    return 5000


@dataclass(frozen=True)
class DatasetSpec:
    grid_nx: int = 256
    grid_nt: int = 100
    n_u: int = 100
    n_f: int = 2000
    n_b: int = 80


@dataclass(frozen=True)
class ExperimentConfig:
    optimizer: OptimizerConfig
    beta: float = 1.0
    arch: str = "S"
    epochs: int = 5000
    data_seed: int = 0
    init_seed: int = 0
    data: DatasetSpec = field(default_factory=DatasetSpec)

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be non-negative, got {self.epochs}")
        object.__setattr__(self, "arch", arch_label(self.arch))
        AdvectionProblem(self.beta)

    @property
    def label(self) -> str:
        return (
            f"{self.optimizer.kind}{_fmt(self.optimizer.learning_rate)}_beta{_fmt(self.beta)}"
            f"_{self.arch}_data{self.data_seed}_init{self.init_seed}"
        )


# --------------------------------------------------------------------------
# config files: one "key = value" per line, '#' starts a comment

_SECTIONS = {"adam": AdamParams, "lbfgs": LbfgsParams, "bbi": BbiParams}
_DATA_KEYS = {f"data.{k}" for k in DatasetSpec.__dataclass_fields__}


def _parse_scalar(text: str, like):
    if isinstance(like, bool):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"not a boolean: {text!r}")
    try:
        return type(like)(text)
    except ValueError:
        raise ConfigurationError(f"cannot parse {text!r} as {type(like).__name__}") from None


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def config_from_mapping(values: dict[str, str]) -> ExperimentConfig:
    values = dict(values)
    known = {"optimizer", "lr", "beta", "arch", "epochs", "data_seed", "init_seed", "seeds", "status"}
    for key in values:
        section, _, name = key.partition(".")
        if key in known or key in _DATA_KEYS:
            continue
        if section in _SECTIONS and name in _SECTIONS[section].__dataclass_fields__:
            continue
        raise ConfigurationError(f"unknown config key {key!r}")
    kind = values.get("optimizer", "ADAM").upper()
    beta = float(values.get("beta", 1.0))
    arch = values.get("arch", "S")
    lr = float(values["lr"]) if "lr" in values else default_lr(kind, beta, arch)
    sections = {}
    for name, cls in _SECTIONS.items():
        defaults = cls()
        kwargs = {}
        for fname in cls.__dataclass_fields__:
            key = f"{name}.{fname}"
            if key in values:
                kwargs[fname] = _parse_scalar(values[key], getattr(defaults, fname))
        sections[name] = cls(**kwargs)
    data = DatasetSpec(**{
        k: int(values[f"data.{k}"]) for k in DatasetSpec.__dataclass_fields__ if f"data.{k}" in values
    })
    opt = OptimizerConfig(kind, lr, **sections)
    epochs = int(values["epochs"]) if "epochs" in values else default_epochs(kind, beta)
    return ExperimentConfig(
        opt, beta, arch, epochs,
        int(values.get("data_seed", 0)), int(values.get("init_seed", 0)), data,
    )


def load_config(path) -> ExperimentConfig:
    return config_from_mapping(parse_config_text(Path(path).read_text()))


def dump_config(config: ExperimentConfig, extra: dict | None = None) -> str:
    opt = config.optimizer
    lines = [
        f"optimizer = {opt.kind}",
        f"lr = {_fmt(opt.learning_rate)}",
        f"beta = {_fmt(config.beta)}",
        f"arch = {config.arch}",
        f"epochs = {config.epochs}",
        f"data_seed = {config.data_seed}",
        f"init_seed = {config.init_seed}",
    ]
    for name in DatasetSpec.__dataclass_fields__:
        lines.append(f"data.{name} = {getattr(config.data, name)}")
    for section in _SECTIONS:
        params = getattr(opt, section)
        for name in params.__dataclass_fields__:
            v = getattr(params, name)
            lines.append(f"{section}.{name} = {_fmt(v) if isinstance(v, float) else v}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# training


class PinnObjective:
    """Full-batch and mini-batch loss closures over one point set.

    The last full-batch evaluation is memoised so that recording the loss
    after an epoch and starting the next epoch share one evaluation.
    """

    def __init__(self, arch, problem: AdvectionProblem, points: PointSet):
        self.arch = as_architecture(arch)
        self.problem = problem
        self.points = points
        self._memo_params = None
        self._memo = None

    def evaluate(self, params) -> tuple[LossBreakdown, np.ndarray]:
        if self._memo_params is not None and np.array_equal(params, self._memo_params):
            return self._memo
        self._memo = pinn_loss_and_grad(self.arch, params, self.problem, self.points)
        self._memo_params = np.array(params, copy=True)
        return self._memo

    def value_and_grad(self, params):
        loss, grad = self.evaluate(params)
        return loss.total, grad

    def minibatches(self, rng: np.random.Generator, batch_size: int):
        """Shuffle each category and cut it into the same number of parts, so
        every batch holds IC, bulk and BC points in dataset proportion."""
        sizes = self.points.sizes
        n_batches = max(1, min(round(sum(sizes) / batch_size), *sizes))
        parts = [np.array_split(rng.permutation(n), n_batches) for n in sizes]
        for ic_idx, bulk_idx, bc_idx in zip(*parts):
            sub = self.points.take(ic_idx, bulk_idx, bc_idx)

            def closure(params, sub=sub):
                loss, grad = pinn_loss_and_grad(self.arch, params, self.problem, sub)
                return loss.total, grad

            yield closure


def _diverged(loss: LossBreakdown) -> bool:
    return not math.isfinite(loss.total) or loss.total > DIVERGENCE_LIMIT


def run_single(config: ExperimentConfig) -> RunRecord:
    arch = as_architecture(config.arch)
    problem = AdvectionProblem(config.beta)
    spec = config.data
    data = sample_dataset(problem, config.data_seed, spec.grid_nx, spec.grid_nt, spec.n_u, spec.n_f, spec.n_b)
    params = init_params(arch, config.init_seed)
    objective = PinnObjective(arch, problem, data.train)
    optimizer = make_optimizer(config.optimizer, params.size, seed=config.init_seed)
    full_batch = config.optimizer.kind != "ADAM"
    tracker = CurvatureTracker()
    record = RunRecord(
        config.optimizer.kind, config.optimizer.learning_rate, config.beta, config.arch,
        config.data_seed, config.init_seed,
    )

    def observe(epoch, params, sample):
        if full_batch:
            train = objective.evaluate(params)[0]
        else:
            train = pinn_loss(arch, params, problem, data.train)
        test = pinn_loss(arch, params, problem, data.test)
        mse = grid_mse(arch, params, problem, spec.grid_nx, spec.grid_nt)
        record.epochs.append(EpochRecord(epoch, train, test, mse, sample))
        return train

    try:
        tracker.push(params)
        first = observe(0, params, None)
    except DivergenceError:
        record.status = DIVERGED
        return record
    if _diverged(first):
        record.status = DIVERGED
        return record
    for epoch in range(1, config.epochs + 1):
        try:
            params = optimizer.epoch(params, objective)
            if getattr(optimizer, "converged", False):
                record.status = "converged"
                break
            train = observe(epoch, params, tracker.push(params))
        except DivergenceError:
            record.status = DIVERGED
            break
        if _diverged(train):
            record.status = DIVERGED
            break
    return record


def run_batch(config: ExperimentConfig, n_seeds: int = 10, workers: int = 1) -> list[RunRecord]:
    """``n_seeds`` runs with init seeds ``init_seed + i`` sharing one data sample."""
    if n_seeds < 1:
        raise ConfigurationError(f"n_seeds must be >= 1, got {n_seeds}")
    configs = [replace(config, init_seed=config.init_seed + i) for i in range(n_seeds)]
    return run_many(configs, workers)


def run_many(configs: Sequence[ExperimentConfig], workers: int = 1) -> list[RunRecord]:
    """Run independent configs; results come back in input order."""
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_single, configs))
    return [run_single(c) for c in configs]


@dataclass(frozen=True)
class GridSearchSpec:
    lrs: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    trials: int = 5
    epochs: int = 300

    def __post_init__(self):
        if not self.lrs or any(not lr > 0 for lr in self.lrs):
            raise ConfigurationError("learning-rate candidates must be non-empty and positive")
        if self.trials < 1:
            raise ConfigurationError("need at least one trial per candidate")


@dataclass(frozen=True)
class GridResult:
    optimizer: str
    beta: float
    arch: str
    best_lr: float | str
    table: tuple[tuple[float, float, int], ...]  # (lr, mean final test loss, n_diverged)


def grid_search(spec: GridSearchSpec, base: ExperimentConfig, workers: int = 1) -> GridResult:
    """Pick the learning rate with the lowest mean final test loss.

    A candidate with any diverged trial is not viable (its mean is ``inf``).
    """
    configs = [
        replace(base, optimizer=replace(base.optimizer, learning_rate=lr), epochs=spec.epochs,
                init_seed=base.init_seed + i)
        for lr in spec.lrs
        for i in range(spec.trials)
    ]
    records = run_many(configs, workers)
    table = []
    for j, lr in enumerate(spec.lrs):
        chunk = records[j * spec.trials : (j + 1) * spec.trials]
        n_div = sum(r.status == DIVERGED for r in chunk)
        mean = math.inf if n_div else math.fsum(r.epochs[-1].test.total for r in chunk) / len(chunk)
        table.append((lr, mean, n_div))
    viable = [row for row in table if math.isfinite(row[1])]
    best = min(viable, key=lambda row: row[1])[0] if viable else NO_VIABLE_LR
    return GridResult(base.optimizer.kind, base.beta, base.arch, best, tuple(table))


# --------------------------------------------------------------------------
# persistence


def _fmt(v) -> str:
    """Shortest round-trip decimal for floats, empty for undefined."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _row(e: EpochRecord) -> list[str]:
    c = e.curvature
    return [
        str(e.epoch),
        _fmt(e.train.total), _fmt(e.train.ic), _fmt(e.train.bulk), _fmt(e.train.bc),
        _fmt(e.test.total), _fmt(e.test.ic), _fmt(e.test.bulk), _fmt(e.test.bc),
        _fmt(e.mse),
        _fmt(c.kappa_t if c else None), _fmt(c.kappa_omega if c else None), _fmt(c.cos_theta if c else None),
    ]


def format_run_csv(record: RunRecord) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for e in record.epochs:
        buf.write(",".join(_row(e)) + "\n")
    return buf.getvalue()


def run_filename(record: RunRecord) -> str:
    return (
        f"{record.optimizer}{_fmt(record.lr)}_beta{_fmt(record.beta)}_{record.arch}"
        f"_data{record.data_seed}_init{record.init_seed}.csv"
    )


def record_metadata(record: RunRecord) -> str:
    return "\n".join([
        f"optimizer = {record.optimizer}",
        f"lr = {_fmt(record.lr)}",
        f"beta = {_fmt(record.beta)}",
        f"arch = {record.arch}",
        f"data_seed = {record.data_seed}",
        f"init_seed = {record.init_seed}",
        f"status = {record.status}",
    ]) + "\n"


def write_run_csv(record: RunRecord, path) -> Path:
    """Write the per-epoch CSV plus a ``.cfg`` sidecar carrying seeds and status."""
    path = Path(path)
    path.write_text(format_run_csv(record), newline="\n")
    path.with_suffix(".cfg").write_text(record_metadata(record))
    return path


def _opt_float(s: str):
    return None if s == "" else float(s)


def read_run_csv(path, meta: dict | None = None) -> RunRecord:
    path = Path(path)
    if meta is None:
        side = path.with_suffix(".cfg")
        meta = parse_config_text(side.read_text()) if side.exists() else {}
    text = path.read_text()
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigurationError(f"{path}: unexpected CSV header")
    record = RunRecord(
        meta.get("optimizer", "?"), float(meta.get("lr", "nan")), float(meta.get("beta", "nan")),
        meta.get("arch", "?"), int(meta.get("data_seed", -1)), int(meta.get("init_seed", -1)),
        status=meta.get("status", "exhausted-epochs"),
    )
    for row in csv.reader(lines[1:]):
        epoch = int(row[0])
        train = LossBreakdown(float(row[2]), float(row[3]), float(row[4]))
        test = LossBreakdown(float(row[6]), float(row[7]), float(row[8]))
        kt, kw, cos = _opt_float(row[10]), _opt_float(row[11]), _opt_float(row[12])
        sample = None
        if row[10] or row[11] or row[12]:
            speed = kt / kw if kt is not None and kw else math.nan
            sample = CurvatureSample(epoch, kt, kw, speed, cos)
        record.epochs.append(EpochRecord(epoch, train, test, float(row[9]), sample))
    return record


def read_run_dir(directory) -> list[RunRecord]:
    return [read_run_csv(p) for p in sorted(Path(directory).glob("*.csv")) if p.name != "summary.csv"]


# --------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class SummaryRow:
    optimizer: str
    beta: float
    arch: str
    lr: float
    median_final_mse: float | str
    median_final_kappa_omega: float | None
    median_final_kappa_t: float | None
    spearman_kw_mse: float | None
    spearman_kt_mse: float | None
    n_diverged: int

    def csv_fields(self) -> list[str]:
        return [
            self.optimizer, _fmt(self.beta), self.arch, _fmt(self.lr),
            self.median_final_mse if isinstance(self.median_final_mse, str) else _fmt(self.median_final_mse),
            _fmt(self.median_final_kappa_omega), _fmt(self.median_final_kappa_t),
            _fmt(self.spearman_kw_mse), _fmt(self.spearman_kt_mse), str(self.n_diverged),
        ]


def _median_or_none(values):
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.median(vals)) if vals else None


def _rho_or_none(record, curvature):
    try:
        rho = analysis.run_spearman(record, curvature)
    except InsufficientDataError:
        return None
    return None if math.isnan(rho) else rho


def summarize(records: Iterable[RunRecord]) -> list[SummaryRow]:
    """Median final values and median per-run rho per (optimizer, beta, arch, lr)."""
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(r.key, []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3])):
        runs = groups[key]
        ok = [r for r in runs if r.status != DIVERGED and r.epochs]
        scatter = analysis.final_scatter(ok)
        rows.append(
            SummaryRow(
                *key,
                median_final_mse=_median_or_none(r.final_mse for r in ok) if ok else DIVERGED,
                median_final_kappa_omega=_median_or_none(s.kappa_omega for s in scatter),
                median_final_kappa_t=_median_or_none(s.kappa_t for s in scatter),
                spearman_kw_mse=_median_or_none(_rho_or_none(r, "kappa_omega") for r in ok),
                spearman_kt_mse=_median_or_none(_rho_or_none(r, "kappa_t") for r in ok),
                n_diverged=len(runs) - len(ok),
            )
        )
    return rows


def format_summary_csv(rows: Sequence[SummaryRow]) -> str:
    return SUMMARY_HEADER + "\n" + "".join(",".join(r.csv_fields()) + "\n" for r in rows)


def write_summary_csv(rows: Sequence[SummaryRow], path) -> Path:
    path = Path(path)
    path.write_text(format_summary_csv(rows), newline="\n")
    return path


def read_summary_csv(path) -> list[SummaryRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != SUMMARY_HEADER:
        raise ConfigurationError(f"{path}: unexpected summary header")
    rows = []
    for f in csv.reader(lines[1:]):
        mse = f[4] if f[4] == DIVERGED else float(f[4])
        rows.append(SummaryRow(
            f[0], float(f[1]), f[2], float(f[3]), mse,
            _opt_float(f[5]), _opt_float(f[6]), _opt_float(f[7]), _opt_float(f[8]), int(f[9]),
        ))
    return rows


def write_grid_csv(results: Sequence[GridResult], path) -> Path:
    lines = ["optimizer,beta,arch,lr,mean_final_test_loss,n_diverged,best_lr"]
    for res in results:
        best = res.best_lr if isinstance(res.best_lr, str) else _fmt(res.best_lr)
        for lr, mean, n_div in res.table:
            lines.append(",".join([res.optimizer, _fmt(res.beta), res.arch, _fmt(lr),
                                   _fmt(mean) if math.isfinite(mean) else "inf", str(n_div), best]))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def save_records(records: Iterable[RunRecord], out_dir) -> list[Path]:
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    return [write_run_csv(r, out / run_filename(r)) for r in records]
