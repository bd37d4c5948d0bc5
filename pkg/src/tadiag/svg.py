"""Minimal hand-written SVG charts: stacked bars, grouped bars, heat grids.

Every data mark carries ``data-path`` (a ``/``-separated path into the JSON
report) and ``data-value`` (the report value serialized exactly as in the
JSON), so a chart can be checked against the report without re-computation.
"""

from __future__ import annotations

import json
from xml.sax.saxutils import escape, quoteattr

PALETTE = {
    "TP": "#4daf4a",
    "DD": "#984ea3",
    "WL": "#377eb8",
    "LOC": "#e7298a",
    "CON": "#ff7f00",
    "BG": "#999999",
}
_DEFAULT_COLORS = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d"]


def _num(v) -> str:
    return f"{v:.2f}"


def _data_attrs(path: str, value) -> str:
    return f" data-path={quoteattr(path)} data-value={quoteattr(json.dumps(value))}"


class _Canvas:
    def __init__(self, width: float, height: float, title: str):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
            f'viewBox="0 0 {_num(width)} {_num(height)}" font-family="sans-serif" font-size="11">',
            f"<title>{escape(title)}</title>",
            f'<rect x="0" y="0" width="{_num(width)}" height="{_num(height)}" fill="white"/>',
            f'<text x="{_num(width / 2)}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        ]

    def rect(self, x, y, w, h, fill, path=None, value=None, tooltip=None):
        attrs = _data_attrs(path, value) if path is not None else ""
        tip = f"<title>{escape(tooltip)}</title>" if tooltip else ""
        self.parts.append(
            f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(max(w, 0))}" height="{_num(max(h, 0))}" '
            f'fill="{fill}"{attrs}>{tip}</rect>'
        )

    def line(self, x1, y1, x2, y2, stroke="#333", dash=None, path=None, value=None):
        attrs = _data_attrs(path, value) if path is not None else ""
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_num(x1)}" y1="{_num(y1)}" x2="{_num(x2)}" y2="{_num(y2)}" stroke="{stroke}"{d}{attrs}/>'
        )

    def text(self, x, y, s, anchor="middle", rotate=None, size=None):
        tr = f' transform="rotate({rotate} {_num(x)} {_num(y)})"' if rotate is not None else ""
        fs = f' font-size="{size}"' if size else ""
        self.parts.append(
            f'<text x="{_num(x)}" y="{_num(y)}" text-anchor="{anchor}"{tr}{fs}>{escape(str(s))}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _axis(c: _Canvas, left, top, plot_h, plot_w, y_min, y_max, label):
    c.line(left, top, left, top + plot_h)
    c.line(left, top + plot_h, left + plot_w, top + plot_h)
    for k in range(5):
        v = y_min + (y_max - y_min) * k / 4
        y = top + plot_h - plot_h * (v - y_min) / (y_max - y_min)
        c.line(left - 4, y, left, y)
        c.text(left - 6, y + 4, f"{v:g}", anchor="end")
    c.text(14, top + plot_h / 2, label, rotate=-90)


def stacked_bars(title, bars, series, y_label="%", y_max=100.0, colors=None) -> str:
    """``bars`` is a list of ``(label, [(value, path), ...])`` aligned with ``series``."""
    colors = colors or PALETTE
    left, top, plot_h = 60, 40, 260
    bw = 36
    plot_w = max(len(bars), 1) * (bw + 12) + 12
    c = _Canvas(left + plot_w + 110, top + plot_h + 60, title)
    _axis(c, left, top, plot_h, plot_w, 0.0, y_max, y_label)
    for i, (label, values) in enumerate(bars):
        x = left + 12 + i * (bw + 12)
        y = top + plot_h
        for name, (value, path) in zip(series, values):
            h = 0.0 if value is None else plot_h * value / y_max
            y -= h
            c.rect(x, y, bw, h, colors.get(name, "#888"), path, value, f"{label} {name}: {value}")
        c.text(x + bw / 2, top + plot_h + 16, label)
    for j, name in enumerate(series):
        ly = top + 10 + j * 18
        c.rect(left + plot_w + 16, ly - 9, 12, 12, colors.get(name, "#888"))
        c.text(left + plot_w + 34, ly + 1, name, anchor="start")
    return c.render()


def grouped_bars(title, groups, y_label="%", reference=None, y_range=None, colors=None) -> str:
    """Bars grouped along the x axis.

    Args:
        groups: list of ``(group_label, [(bar_label, value, path), ...])``;
            ``None`` values are drawn as an "n/a" marker.
        reference: optional ``(value, path)`` drawn as a dashed line.
        y_range: ``(min, max)``; derived from the data when omitted.
    """
    values = [v for _, bars in groups for _, v, _ in bars if v is not None]
    if reference is not None:
        values.append(reference[0])
    lo, hi = y_range or (min([0.0] + values), max([1.0] + values))
    if hi <= lo:
        hi = lo + 1.0
    left, top, plot_h = 60, 40, 240
    bw, gap = 18, 22
    n_bars = sum(len(b) for _, b in groups)
    plot_w = n_bars * (bw + 4) + len(groups) * gap + gap
    c = _Canvas(left + plot_w + 20, top + plot_h + 80, title)
    _axis(c, left, top, plot_h, plot_w, lo, hi, y_label)

    def ypos(v):
        return top + plot_h - plot_h * (v - lo) / (hi - lo)

    x = left + gap
    palette = colors or {}
    for g, (glabel, bars) in enumerate(groups):
        gx = x
        for b, (blabel, value, path) in enumerate(bars):
            fill = palette.get(blabel, _DEFAULT_COLORS[g % len(_DEFAULT_COLORS)])
            if value is None:
                c.text(x + bw / 2, ypos(lo) - 4, "n/a", size=8)
                c.parts[-1] = c.parts[-1].replace("<text ", "<text" + _data_attrs(path, None) + " ", 1)
            else:
                y0, y1 = ypos(max(value, 0.0) if lo >= 0 else max(value, 0.0)), ypos(min(value, 0.0) if lo < 0 else lo)
                c.rect(x, min(y0, y1), bw, abs(y1 - y0), fill, path, value, f"{glabel} {blabel}: {value}")
            c.text(x + bw / 2, top + plot_h + 14, blabel, size=9)
            x += bw + 4
        c.text((gx + x - 4) / 2, top + plot_h + 32, glabel)
        x += gap
    if reference is not None:
        value, path = reference
        c.line(left, ypos(value), left + plot_w, ypos(value), stroke="#000", dash="6,4", path=path, value=value)
    return c.render()


def heat_grid(title, row_name, col_name, row_labels, col_labels, cells, vmax=100.0) -> str:
    """``cells[i][j]`` is ``(value, path)``; ``None`` values are left blank."""
    cw, ch = 44, 26
    left, top = 70, 50
    c = _Canvas(left + cw * len(col_labels) + 20, top + ch * len(row_labels) + 50, title)
    for j, lab in enumerate(col_labels):
        c.text(left + j * cw + cw / 2, top - 6, lab)
    for i, lab in enumerate(row_labels):
        c.text(left - 6, top + i * ch + ch / 2 + 4, lab, anchor="end")
        for j in range(len(col_labels)):
            value, path = cells[i][j]
            x, y = left + j * cw, top + i * ch
            if value is None:
                c.rect(x, y, cw, ch, "#f0f0f0", path, None, f"{lab}/{col_labels[j]}: n/a")
                continue
            shade = max(0.0, min(1.0, value / vmax))
            r = 255
            gb = int(round(255 * (1 - shade)))
            c.rect(x, y, cw, ch, f"#{r:02x}{gb:02x}{gb:02x}", path, value, f"{lab}/{col_labels[j]}: {value}")
            c.text(x + cw / 2, y + ch / 2 + 4, f"{value:.0f}", size=9)
    c.text(left + cw * len(col_labels) / 2, top + ch * len(row_labels) + 22, col_name)
    c.text(16, top + ch * len(row_labels) / 2, row_name, rotate=-90)
    return c.render()
