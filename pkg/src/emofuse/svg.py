"""Tiny dependency-free SVG renderings for the report figures."""

from __future__ import annotations

from html import escape
from pathlib import Path
from typing import Mapping, Sequence

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _num(x: float) -> str:
    return format(float(x), ".2f")


class Canvas:
    def __init__(self, width: int, height: int):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def add(self, s: str) -> None:
        self.parts.append(s)

    def text(self, x, y, s, size=11, anchor="start", rotate=None):
        rot = f' transform="rotate({rotate} {_num(x)} {_num(y)})"' if rotate is not None else ""
        self.add(f'<text x="{_num(x)}" y="{_num(y)}" font-size="{size}" font-family="sans-serif" '
                 f'text-anchor="{anchor}"{rot}>{escape(str(s))}</text>')

    def line(self, x1, y1, x2, y2, color="#000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<line x1="{_num(x1)}" y1="{_num(y1)}" x2="{_num(x2)}" y2="{_num(y2)}" '
                 f'stroke="{color}" stroke-width="{width}"{d}/>')

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.add(f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(w)}" height="{_num(h)}" '
                 f'fill="{fill}" stroke="{stroke}"/>')

    def polyline(self, pts, color, width=1.5):
        p = " ".join(f"{_num(x)},{_num(y)}" for x, y in pts)
        self.add(f'<polyline points="{p}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def circle(self, x, y, r, color, opacity=0.6):
        self.add(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="{r}" fill="{color}" fill-opacity="{opacity}"/>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.parts, "</svg>"]) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.render(), encoding="utf-8")


def _axes(c: Canvas, x0, y0, w, h, xlabel, ylabel, title, ticks=(0, 0.5, 1)):
    c.rect(x0, y0, w, h, "none", stroke="#444")
    for t in ticks:
        c.text(x0 + t * w, y0 + h + 14, t, size=9, anchor="middle")
        c.text(x0 - 4, y0 + h - t * h + 3, t, size=9, anchor="end")
    c.text(x0 + w / 2, y0 + h + 28, xlabel, anchor="middle")
    c.text(x0 - 30, y0 + h / 2, ylabel, anchor="middle", rotate=-90)
    c.text(x0 + w / 2, y0 - 8, title, size=12, anchor="middle")


def line_plot(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str,
              xlabel: str, ylabel: str, diagonal: bool = False) -> Canvas:
    """Lines over the unit square, e.g. ROC curves."""
    c = Canvas(460, 400)
    x0, y0, w, h = 60, 30, 260, 300
    _axes(c, x0, y0, w, h, xlabel, ylabel, title)
    if diagonal:
        c.line(x0, y0 + h, x0 + w, y0, color="#aaa", dash="4 3")
    for i, (name, (xs, ys)) in enumerate(series.items()):
        col = PALETTE[i % len(PALETTE)]
        c.polyline([(x0 + x * w, y0 + h - y * h) for x, y in zip(xs, ys)], col)
        c.line(x0 + w + 15, y0 + 12 + 16 * i, x0 + w + 35, y0 + 12 + 16 * i, color=col, width=2)
        c.text(x0 + w + 40, y0 + 16 + 16 * i, name, size=10)
    return c


def heatmap(matrix: Sequence[Sequence[float]], labels: Sequence[str], title: str) -> Canvas:
    n = len(labels)
    cell = 44
    x0, y0 = 90, 40
    c = Canvas(x0 + n * cell + 30, y0 + n * cell + 70)
    peak = max((max(r) for r in matrix), default=0) or 1
    for i, row in enumerate(matrix):
        for j, v in enumerate(row):
            shade = int(255 - 200 * v / peak)
            c.rect(x0 + j * cell, y0 + i * cell, cell, cell, f"rgb({shade},{shade},255)", stroke="#fff")
            c.text(x0 + j * cell + cell / 2, y0 + i * cell + cell / 2 + 4, v, size=10, anchor="middle")
    for k, name in enumerate(labels):
        c.text(x0 - 6, y0 + k * cell + cell / 2 + 4, name, size=10, anchor="end")
        c.text(x0 + k * cell + cell / 2, y0 + n * cell + 14, name, size=10, anchor="middle")
    c.text(x0 + n * cell / 2, y0 + n * cell + 34, "predicted", anchor="middle")
    c.text(x0 + n * cell / 2, 20, title, size=12, anchor="middle")
    return c


def scatter_grid(panels: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str,
                 xlabel: str, ylabel: str, notes: Mapping[str, str] | None = None) -> Canvas:
    cols = 3
    rows = (len(panels) + cols - 1) // cols
    pw, ph = 200, 200
    c = Canvas(cols * (pw + 60) + 20, rows * (ph + 70) + 30)
    c.text(c.width / 2, 18, title, size=13, anchor="middle")
    for k, (name, (xs, ys)) in enumerate(panels.items()):
        x0 = 60 + (k % cols) * (pw + 60)
        y0 = 45 + (k // cols) * (ph + 70)
        label = name + (f" ({notes[name]})" if notes and name in notes else "")
        _axes(c, x0, y0, pw, ph, xlabel, ylabel, label)
        for x, y in zip(xs, ys):
            c.circle(x0 + x * pw, y0 + ph - y * ph, 2, PALETTE[k % len(PALETTE)], opacity=0.4)
    return c


def grouped_bars(groups: Sequence[str], series: Mapping[str, Sequence[float]], title: str, ylabel: str) -> Canvas:
    n_s = max(len(series), 1)
    gw = 24 * n_s + 16
    x0, y0, h = 60, 40, 260
    c = Canvas(x0 + gw * len(groups) + 160, y0 + h + 60)
    top = max((v for vals in series.values() for v in vals), default=1.0) or 1.0
    c.rect(x0, y0, gw * len(groups), h, "none", stroke="#444")
    c.text(x0 - 4, y0 + 4, format(top, ".3g"), size=9, anchor="end")
    c.text(x0 - 4, y0 + h, "0", size=9, anchor="end")
    c.text(x0 - 36, y0 + h / 2, ylabel, anchor="middle", rotate=-90)
    c.text(x0 + gw * len(groups) / 2, 20, title, size=12, anchor="middle")
    for gi, g in enumerate(groups):
        c.text(x0 + gi * gw + gw / 2, y0 + h + 14, g, size=10, anchor="middle")
        for si, (name, vals) in enumerate(series.items()):
            bh = h * vals[gi] / top
            c.rect(x0 + gi * gw + 8 + 24 * si, y0 + h - bh, 20, bh, PALETTE[si % len(PALETTE)])
    for si, name in enumerate(series):
        lx = x0 + gw * len(groups) + 15
        c.rect(lx, y0 + 16 * si, 12, 12, PALETTE[si % len(PALETTE)])
        c.text(lx + 16, y0 + 10 + 16 * si, name, size=10)
    return c
