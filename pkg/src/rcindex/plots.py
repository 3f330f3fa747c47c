"""Standalone SVG output for the scree plot and ranked score strips.

SVG is written by hand rather than through a plotting library so the bytes
depend only on the inputs (no timestamps or random element ids).
"""

from xml.sax.saxutils import escape

import numpy as np


def _num(v):
    return f"{v:.2f}".rstrip("0").rstrip(".") if np.isfinite(v) else "0"


class _Canvas:
    def __init__(self, width, height):
        self.width = width
        self.height = height
        self.parts = []

    def add(self, element):
        self.parts.append(element)

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0, dash=None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<line x1="{_num(x1)}" y1="{_num(y1)}" x2="{_num(x2)}" y2="{_num(y2)}" '
                 f'stroke="{stroke}" stroke-width="{_num(width)}"{extra}/>')

    def polyline(self, points, stroke, width=1.5):
        pts = " ".join(f"{_num(x)},{_num(y)}" for x, y in points)
        self.add(f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{_num(width)}"/>')

    def circle(self, x, y, r, fill):
        self.add(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="{_num(r)}" fill="{fill}"/>')

    def rect(self, x, y, w, h, fill):
        self.add(f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(max(w, 0))}" height="{_num(max(h, 0))}" fill="{fill}"/>')

    def text(self, x, y, s, size=11, anchor="start", weight=None):
        w = f' font-weight="{weight}"' if weight else ""
        self.add(f'<text x="{_num(x)}" y="{_num(y)}" font-size="{size}" text-anchor="{anchor}"{w}>{escape(str(s))}</text>')

    def render(self):
        head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif">\n'
                f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#fff"/>\n')
        return head + "\n".join(self.parts) + "\n</svg>\n"


def scree_svg(eigenvalues, cumulative=None, title="Scree plot"):
    """Eigenvalues by factor number, cumulative variance proportion, and a line at 1."""
    ev = np.asarray(eigenvalues, dtype=float)
    p = ev.size
    if cumulative is None:
        cumulative = np.cumsum(ev) / p
    cumulative = np.asarray(cumulative, dtype=float)
    w, h = 640, 400
    left, right, top, bottom = 60, 60, 40, 50
    pw, ph = w - left - right, h - top - bottom
    ymax = max(float(np.ceil(ev.max())) if p else 1.0, 1.0)
    xs = lambda i: left + (pw * i / max(p - 1, 1))
    ys = lambda v: top + ph * (1.0 - v / ymax)
    yc = lambda v: top + ph * (1.0 - v)

    c = _Canvas(w, h)
    c.text(w / 2, 22, title, size=14, anchor="middle", weight="bold")
    c.line(left, top, left, top + ph)
    c.line(left, top + ph, left + pw, top + ph)
    c.line(left + pw, top, left + pw, top + ph, stroke="#888")
    for t in range(int(ymax) + 1):
        c.line(left - 4, ys(t), left, ys(t))
        c.text(left - 8, ys(t) + 4, t, size=10, anchor="end")
    for q in (0.0, 0.25, 0.5, 0.75, 1.0):
        c.line(left + pw, yc(q), left + pw + 4, yc(q), stroke="#888")
        c.text(left + pw + 8, yc(q) + 4, f"{int(q * 100)}%", size=10)
    for i in range(p):
        c.text(xs(i), top + ph + 16, i + 1, size=10, anchor="middle")
    c.text(left + pw / 2, h - 10, "Factor number", size=11, anchor="middle")
    c.line(left, ys(1.0), left + pw, ys(1.0), stroke="#c00", dash="6,4")
    c.polyline([(xs(i), yc(v)) for i, v in enumerate(cumulative)], stroke="#888")
    c.polyline([(xs(i), ys(v)) for i, v in enumerate(ev)], stroke="#1f4e9c", width=2)
    for i, v in enumerate(ev):
        c.circle(xs(i), ys(v), 3, "#1f4e9c")
    return c.render()


def rank_strips_svg(panels, title="Country ranks"):
    """Side-by-side ranked bar strips.

    ``panels`` is a sequence of ``(heading, [(label, score), ...])`` with
    entries already in rank order.
    """
    n = max((len(entries) for _, entries in panels), default=0)
    col_w, label_w, row_h = 260, 110, 14
    top = 60
    w = col_w * max(len(panels), 1) + 20
    h = top + row_h * n + 30
    c = _Canvas(w, h)
    c.text(w / 2, 22, title, size=14, anchor="middle", weight="bold")
    for k, (heading, entries) in enumerate(panels):
        x0 = 10 + k * col_w
        bar_w = col_w - label_w - 20
        c.text(x0 + col_w / 2, 44, heading, size=12, anchor="middle", weight="bold")
        scores = np.array([s for _, s in entries], dtype=float)
        span = float(np.max(np.abs(scores))) if scores.size else 1.0
        span = span if span > 0 else 1.0
        zero = x0 + label_w + bar_w / 2
        c.line(zero, top - 4, zero, top + row_h * len(entries), stroke="#999")
        for i, (label, score) in enumerate(entries):
            y = top + i * row_h
            c.text(x0 + label_w - 4, y + row_h - 3, f"{i + 1}. {label}", size=9, anchor="end")
            length = (bar_w / 2) * score / span
            fill = "#1f4e9c" if score >= 0 else "#c0504d"
            c.rect(min(zero, zero + length), y + 2, abs(length), row_h - 4, fill)
    return c.render()
