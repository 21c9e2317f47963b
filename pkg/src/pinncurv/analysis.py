"""Statistics over training runs: rank correlation, medians, final-value scatter."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientDataError
from .geom import CurvatureSample
from .model import LossBreakdown

STATUSES = ("converged", "diverged", "exhausted-epochs")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train: LossBreakdown
    test: LossBreakdown
    mse: float
    curvature: CurvatureSample | None = None


@dataclass
class RunRecord:
    """One training run: identifying config plus per-epoch series."""

    optimizer: str
    lr: float
    beta: float
    arch: str
    data_seed: int
    init_seed: int
    epochs: list[EpochRecord] = field(default_factory=list)
    status: str = "exhausted-epochs"

    @property
    def key(self):
        return (self.optimizer, self.beta, self.arch, self.lr)

    def series(self, name: str) -> np.ndarray:
        """Per-epoch values of ``mse``, ``kappa_t``, ``kappa_omega``, ``cos_theta``,
        ``speed`` or ``train.<term>`` / ``test.<term>``; undefined entries are NaN."""
        if name == "mse":
            return np.array([e.mse for e in self.epochs])
        if name in ("kappa_t", "kappa_omega", "cos_theta", "speed"):
            vals = []
            for e in self.epochs:
                v = getattr(e.curvature, name) if e.curvature is not None else None
                vals.append(math.nan if v is None else v)
            return np.array(vals, dtype=np.float64)
        split, _, term = name.partition(".")
        if split in ("train", "test") and term in ("ic", "bulk", "bc", "total"):
            return np.array([getattr(getattr(e, split), term) for e in self.epochs])
        raise KeyError(name)

    @property
    def final_mse(self) -> float:
        return self.epochs[-1].mse if self.epochs else math.nan


def _valid_pairs(xs, ys):
    xs = np.array([math.nan if v is None else v for v in xs], dtype=np.float64)
    ys = np.array([math.nan if v is None else v for v in ys], dtype=np.float64)
    if xs.shape != ys.shape:
        raise ValueError(f"series lengths differ: {xs.size} vs {ys.size}")
    ok = np.isfinite(xs) & np.isfinite(ys)
    return xs[ok], ys[ok], int(xs.size - ok.sum())


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence, ys: Sequence, *, return_dropped: bool = False):
    """Spearman rank correlation over pairs where both entries are defined.

    Returns NaN when either series is constant.  With ``return_dropped`` the
    number of discarded pairs is returned as well.
    """
    x, y, dropped = _valid_pairs(xs, ys)
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 valid pairs, got {x.size}")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    rho = math.nan if denom == 0.0 else max(-1.0, min(1.0, float(rx @ ry) / denom))
    return (rho, dropped) if return_dropped else rho


def run_spearman(record: RunRecord, curvature: str = "kappa_omega", epoch_range=None):
    """Whole-trajectory rho(curvature, MSE) for one run, optionally restricted to
    ``epoch_range = (first, last)`` inclusive."""
    k = record.series(curvature)
    mse = record.series("mse")
    if epoch_range is not None:
        ep = np.array([e.epoch for e in record.epochs])
        sel = (ep >= epoch_range[0]) & (ep <= epoch_range[1])
        k, mse = k[sel], mse[sel]
    return spearman(k, mse)


def median_over_seeds(records: Sequence[RunRecord], extractor: Callable) -> np.ndarray:
    """Per-epoch median across runs; shorter (e.g. diverged) runs drop out once
    their series ends, and NaN entries are ignored."""
    if not records:
        raise InsufficientDataError("no records")
    series = [np.asarray(extractor(r), dtype=np.float64) for r in records]
    length = max(s.size for s in series)
    out = np.full(length, math.nan)
    for i in range(length):
        vals = [s[i] for s in series if i < s.size and not math.isnan(s[i])]
        if vals:
            out[i] = float(np.median(vals))
    return out


@dataclass(frozen=True)
class ScatterRow:
    kappa_omega: float | None
    kappa_t: float | None
    mse: float
    optimizer: str
    beta: float
    arch: str
    status: str

    @property
    def missing(self) -> bool:
        return self.kappa_omega is None


def _last_defined(values: np.ndarray):
    ok = np.flatnonzero(np.isfinite(values))
    return float(values[ok[-1]]) if ok.size else None


def final_scatter(records: Sequence[RunRecord]) -> list[ScatterRow]:
    rows = []
    for r in records:
        rows.append(
            ScatterRow(
                _last_defined(r.series("kappa_omega")),
                _last_defined(r.series("kappa_t")),
                r.final_mse,
                r.optimizer,
                r.beta,
                r.arch,
                r.status,
            )
        )
    return rows
