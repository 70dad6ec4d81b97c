"""Learning-curve SVG from an episode CSV.

Curves are smoothed with a trailing moving average and drawn against the
episode index on a log axis.  Output bytes depend only on the input rows,
the window and the point budget.
"""

from __future__ import annotations

import csv
import math
import os
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import CsvFormatError
from .harness import CSV_HEADER, smooth

WIDTH, HEIGHT = 720, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 190, 30, 50
PALETTE = (
    "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#ff7f0e",
)


def read_curves(path: str | os.PathLike) -> "OrderedDict[str, np.ndarray]":
    """Per-cell return series keyed ``agent/user[/seed]`` in file order."""
    expected = CSV_HEADER.split(",")
    series: "OrderedDict[tuple, list[float]]" = OrderedDict()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError("empty file", line=1)
        if header != expected:
            raise CsvFormatError(f"expected header {CSV_HEADER!r}", line=1)
        for row in reader:
            line = reader.line_num
            if len(row) != len(expected):
                raise CsvFormatError(f"expected {len(expected)} fields, got {len(row)}", line=line)
            episode, agent, user, seed, ret, length, updates = row
            try:
                episode_i = int(episode)
                value = float(ret)
                int(length), int(updates), int(seed)
            except ValueError as exc:
                raise CsvFormatError(f"bad number ({exc})", line=line) from None
            if not math.isfinite(value):
                raise CsvFormatError("non-finite return", line=line)
            values = series.setdefault((agent, user, seed), [])
            if episode_i != len(values) + 1:
                raise CsvFormatError(
                    f"episode {episode_i} out of sequence for {agent}/{user}", line=line
                )
            values.append(value)
    if not series:
        raise CsvFormatError("no data rows", line=2)
    seeds_per_cell: dict[tuple, int] = {}
    for agent, user, _ in series:
        seeds_per_cell[(agent, user)] = seeds_per_cell.get((agent, user), 0) + 1
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for (agent, user, seed), values in series.items():
        label = f"{agent}/{user}"
        if seeds_per_cell[(agent, user)] > 1:
            label += f"/{seed}"
        out[label] = np.asarray(values)
    return out


def _log_samples(n: int, budget: int) -> np.ndarray:
    if n <= budget:
        return np.arange(n)
    idx = np.unique(np.round(np.geomspace(1, n, budget)).astype(np.int64) - 1)
    return idx


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def render_svg(curves: "OrderedDict[str, np.ndarray]", window: int, title: str = "", budget: int = 400) -> str:
    if window < 1:
        raise ValueError("window must be positive")
    if not curves:
        raise ValueError("nothing to plot")
    smoothed = OrderedDict((k, smooth(v, window)) for k, v in curves.items())
    n_max = max(v.shape[0] for v in smoothed.values())
    y_lo = min(float(v.min()) for v in smoothed.values())
    y_hi = max(float(v.max()) for v in smoothed.values())
    if y_hi - y_lo < 1e-9:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_hi = math.log10(max(n_max, 10))
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(episode: float) -> float:
        return MARGIN_L + plot_w * math.log10(episode) / x_hi

    def py(value: float) -> float:
        return MARGIN_T + plot_h * (y_hi - value) / (y_hi - y_lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="black"/>',
    ]
    for d in range(0, int(math.floor(x_hi)) + 1):
        x = px(10**d)
        parts.append(f'<line x1="{x:.2f}" y1="{MARGIN_T + plot_h}" x2="{x:.2f}" y2="{MARGIN_T + plot_h + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{MARGIN_T + plot_h + 18}" text-anchor="middle">1e{d}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        y = py(t)
        parts.append(f'<line x1="{MARGIN_L - 5}" y1="{y:.2f}" x2="{MARGIN_L + plot_w}" y2="{y:.2f}" stroke="#dddddd"/>')
        parts.append(f'<text x="{MARGIN_L - 8}" y="{y + 4:.2f}" text-anchor="end">{t:g}</text>')
    parts.append(
        f'<text x="{MARGIN_L + plot_w / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">episode (log scale)</text>'
    )
    parts.append(
        f'<text transform="translate(16 {MARGIN_T + plot_h / 2:.1f}) rotate(-90)" text-anchor="middle">'
        f"smoothed return (window {window})</text>"
    )
    if title:
        parts.append(f'<text x="{MARGIN_L}" y="{MARGIN_T - 10}">{_escape(title)}</text>')

    for i, (label, values) in enumerate(smoothed.items()):
        colour = PALETTE[i % len(PALETTE)]
        idx = _log_samples(values.shape[0], budget)
        pts = " ".join(f"{px(j + 1):.2f},{py(values[j]):.2f}" for j in idx)
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN_T + 14 + 16 * i
        lx = MARGIN_L + plot_w + 12
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 24}" y="{ly}">{_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_plot(csv_path: str | os.PathLike, out_path: str | os.PathLike, window: int, title: str = "") -> Path:
    """Write the SVG; nothing is written when the CSV cannot be parsed."""
    curves = read_curves(csv_path)
    svg = render_svg(curves, window, title)
    out = Path(out_path)
    out.write_text(svg)
    return out
