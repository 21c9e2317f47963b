"""Standalone SVG line and scatter charts (no plotting dependency)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .analysis import RunRecord, final_scatter
from .runner import run_filename

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=160, top=40, bottom=50)
PALETTE = ("#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a65628", "#f781bf", "#999999")


class _Axis:
    def __init__(self, values, lo_px, hi_px, log):
        vals = [v for v in values if v is not None and math.isfinite(v) and (v > 0 or not log)]
        self.log = log
        if not vals:
            vals = [1.0, 10.0] if log else [0.0, 1.0]
        lo, hi = min(vals), max(vals)
        if log:
            lo, hi = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
            if lo == hi:
                hi += 1
        elif lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi = lo, hi
        self.lo_px, self.hi_px = lo_px, hi_px

    def ok(self, v):
        return v is not None and math.isfinite(v) and (v > 0 or not self.log)

    def __call__(self, v):
        u = math.log10(v) if self.log else v
        return self.lo_px + (u - self.lo) / (self.hi - self.lo) * (self.hi_px - self.lo_px)

    def ticks(self):
        if self.log:
            return [(10.0**k, f"1e{k}") for k in range(int(self.lo), int(self.hi) + 1)]
        step = (self.hi - self.lo) / 4
        return [(self.lo + i * step, f"{self.lo + i * step:.3g}") for i in range(5)]


def _frame(title, xlabel, ylabel, xa: _Axis, ya: _Axis) -> list[str]:
    left, top = MARGIN["left"], MARGIN["top"]
    right, bottom = WIDTH - MARGIN["right"], HEIGHT - MARGIN["bottom"]
    out = [
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" fill="none" stroke="#333"/>',
        f'<text x="{(left + right) / 2:.1f}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{(left + right) / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="16" y="{(top + bottom) / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {(top + bottom) / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for v, label in xa.ticks():
        x = xa(v)
        out.append(f'<line x1="{x:.1f}" y1="{bottom}" x2="{x:.1f}" y2="{bottom + 5}" stroke="#333"/>')
        out.append(f'<text x="{x:.1f}" y="{bottom + 18}" text-anchor="middle" font-size="11">{label}</text>')
    for v, label in ya.ticks():
        y = ya(v)
        out.append(f'<line x1="{left - 5}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#333"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11">{label}</text>')
    return out


def _legend(labels: Sequence[str]) -> list[str]:
    x = WIDTH - MARGIN["right"] + 12
    out = []
    for i, label in enumerate(labels):
        y = MARGIN["top"] + 14 + 18 * i
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{x}" y="{y - 9}" width="12" height="12" fill="{color}"/>')
        out.append(f'<text x="{x + 18}" y="{y + 1}" font-size="12">{escape(label)}</text>')
    return out


def _document(parts: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">'
    )
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>', *parts, "</svg>"]) + "\n"


def _axes(xs, ys, log_x, log_y):
    xa = _Axis(xs, MARGIN["left"], WIDTH - MARGIN["right"], log_x)
    ya = _Axis(ys, HEIGHT - MARGIN["bottom"], MARGIN["top"], log_y)
    return xa, ya


def line_chart(series: dict, title="", xlabel="", ylabel="", log_x=False, log_y=True) -> str:
    """``series`` maps a legend label to ``(xs, ys)``; non-plottable points are skipped."""
    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [y for _, ys in series.values() for y in ys]
    xa, ya = _axes(all_x, all_y, log_x, log_y)
    parts = _frame(title, xlabel, ylabel, xa, ya)
    for i, (label, (xs, ys)) in enumerate(series.items()):
        pts = [f"{xa(x):.2f},{ya(y):.2f}" for x, y in zip(xs, ys) if xa.ok(x) and ya.ok(y)]
        if pts:
            color = PALETTE[i % len(PALETTE)]
            parts.append(
                f'<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" '
                f'points="{" ".join(pts)}"><title>{escape(label)}</title></polyline>'
            )
    parts += _legend(list(series))
    return _document(parts)


def scatter_chart(groups: dict, title="", xlabel="", ylabel="", log_x=True, log_y=True) -> str:
    """``groups`` maps a legend label to a list of ``(x, y)`` points."""
    all_x = [p[0] for pts in groups.values() for p in pts]
    all_y = [p[1] for pts in groups.values() for p in pts]
    xa, ya = _axes(all_x, all_y, log_x, log_y)
    parts = _frame(title, xlabel, ylabel, xa, ya)
    for i, (label, pts) in enumerate(groups.items()):
        color = PALETTE[i % len(PALETTE)]
        for x, y in pts:
            if xa.ok(x) and ya.ok(y):
                parts.append(
                    f'<circle class="point" cx="{xa(x):.2f}" cy="{ya(y):.2f}" r="4" fill="{color}">'
                    f"<title>{escape(label)}: ({x:.4g}, {y:.4g})</title></circle>"
                )
    parts += _legend(list(groups))
    return _document(parts)


def emit_plots(summary_rows, records: Sequence[RunRecord], out_dir) -> list[Path]:
    """Median-MSE-vs-beta, final MSE-vs-kappa_omega and per-run loss curves."""
    summary_rows = list(summary_rows)
    records = list(records)
    if not summary_rows and not records:
        return []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    if summary_rows:
        lines: dict[str, tuple[list, list]] = {}
        points: dict[str, list] = {}
        for row in sorted(summary_rows, key=lambda r: (r.optimizer, r.arch, r.beta)):
            label = f"{row.optimizer} ({row.arch})"
            if not isinstance(row.median_final_mse, str):
                xs, ys = lines.setdefault(label, ([], []))
                xs.append(row.beta)
                ys.append(row.median_final_mse)
                if row.median_final_kappa_omega is not None:
                    points.setdefault(f"{label} beta={row.beta:g}", []).append(
                        (row.median_final_kappa_omega, row.median_final_mse)
                    )
        path = out / "median_mse_vs_beta.svg"
        path.write_text(line_chart(lines, "Median final MSE", "beta", "MSE", log_x=False, log_y=True))
        written.append(path)
        path = out / "mse_vs_kappa_omega.svg"
        path.write_text(scatter_chart(points, "Final MSE vs curvature", "kappa_omega", "MSE"))
        written.append(path)

    if records:
        groups: dict[str, list] = {}
        for row in final_scatter(records):
            if not row.missing:
                groups.setdefault(f"{row.optimizer} beta={row.beta:g} ({row.arch})", []).append(
                    (row.kappa_omega, row.mse)
                )
        path = out / "runs_mse_vs_kappa_omega.svg"
        path.write_text(scatter_chart(groups, "Final MSE vs curvature, per run", "kappa_omega", "MSE"))
        written.append(path)
        for r in records:
            epochs = [e.epoch for e in r.epochs]
            series = {}
            for split in ("train", "test"):
                for term, name in (("total", "Total"), ("ic", "IC"), ("bulk", "Bulk"), ("bc", "BC")):
                    series[f"{name} ({split})"] = (epochs, list(r.series(f"{split}.{term}")))
            path = out / f"loss_{Path(run_filename(r)).stem}.svg"
            path.write_text(line_chart(series, f"Loss, {r.optimizer} beta={r.beta:g}", "epoch", "loss"))
            written.append(path)
    return written
