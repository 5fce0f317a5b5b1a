"""CSV and SVG writers.  Floats are written with repr() so reruns are byte-identical."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence

import numpy as np


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(traj, out: str | Path) -> list[Path]:
    """trace_node<k>.csv (t, v) for every damped node k, plus snapshots.csv (t, node, coords, u)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    t = traj.times
    for j, node in enumerate(traj.grid.n_nodes):
        path = out / f"trace_node{int(node)}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "v"])
            for ti, vi in zip(t, traj.traces[:, j]):
                w.writerow([_fmt(ti), _fmt(vi)])
        written.append(path)
    pos = traj.grid.node_positions()
    coord_names = ["x", "y"][: traj.grid.dim]
    path = out / "snapshots.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", *coord_names, "u"])
        for ts, row in zip(traj.snapshot_times, traj.snapshot_u):
            for node, (p, u) in enumerate(zip(pos, row)):
                w.writerow([_fmt(ts), node, *(_fmt(c) for c in p), _fmt(u)])
    written.append(path)
    return written


def write_rows(path: str | Path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def energy_svg(t, E, title: str = "energy decay", width: int = 640, height: int = 400) -> str:
    """Line plot of log10 E against t as a self-contained SVG document."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    keep = E > 0
    t, y = t[keep], np.log10(E[keep])
    if t.size > 2000:
        idx = np.unique(np.linspace(0, t.size - 1, 2000).round().astype(int))
        t, y = t[idx], y[idx]
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    t0, t1 = (float(t.min()), float(t.max())) if t.size else (0.0, 1.0)
    y0, y1 = (math.floor(float(y.min())), math.ceil(float(y.max()))) if y.size else (0, 1)
    if t1 == t0:
        t1 = t0 + 1.0
    if y1 == y0:
        y1 = y0 + 1

    def sx(v):
        return left + (v - t0) / (t1 - t0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, y))
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for k in range(6):
        tv = t0 + (t1 - t0) * k / 5
        lines.append(f'<text x="{sx(tv):.2f}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{tv:.3g}</text>')
    step = max(1, (y1 - y0) // 8)
    for yv in range(y0, y1 + 1, step):
        lines.append(f'<text x="{left - 8}" y="{sy(yv) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">1e{yv}</text>')
    lines += [
        f'<text x="{left + pw / 2:.0f}" y="{height - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">t</text>',
        f'<text x="16" y="{top + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {top + ph / 2:.0f})">E_total (log scale)</text>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>',
        "</svg>",
    ]
    return "\n".join(lines) + "\n"
