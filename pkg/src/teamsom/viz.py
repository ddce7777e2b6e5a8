"""Deterministic SVG rendering of cluster maps and component planes.

All coordinates are written with four decimals and elements are emitted in
node order, so identical inputs give byte-identical documents.
"""

from __future__ import annotations

import colorsys
import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .cluster import ClusterAssignment
from .errors import LengthMismatch, Mismatch
from .som import SomMap

SCALE = 40.0  # pixels per lattice unit
MARGIN = 20.0
TITLE_HEIGHT = 30.0
LEGEND_HEIGHT = 56.0
MIN_WIDTH = 260.0
HEX_RADIUS = 1.0 / math.sqrt(3.0)  # pointy-top cells sharing edges at unit spacing

BLUE = (0, 0, 255)
GREEN = (0, 255, 0)
RED = (255, 0, 0)


def _f(v: float) -> str:
    out = f"{v:.4f}"
    return "0.0000" if out == "-0.0000" else out


def _round_channel(v: float) -> int:
    return int(math.floor(v + 0.5))


def scale_fraction(value: float, lo: float, hi: float) -> float:
    if hi == lo:
        return 0.5
    return min(1.0, max(0.0, (value - lo) / (hi - lo)))


def color_for_fraction(f: float) -> tuple[int, int, int]:
    """Blue -> green -> red, linear between the three anchors."""
    if f <= 0.5:
        t = f / 0.5
        return (0, _round_channel(255 * t), _round_channel(255 * (1 - t)))
    t = (f - 0.5) / 0.5
    return (_round_channel(255 * t), _round_channel(255 * (1 - t)), 0)


def hex_color(rgb: tuple[int, int, int]) -> str:
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def categorical_palette(k: int) -> list[str]:
    """``k`` distinct colours; hues are evenly spaced and visited with a stride
    so consecutive labels do not get neighbouring hues."""
    if k < 1:
        return []
    stride = 1
    if k > 2:
        stride = max(1, int(round(k * 0.38)))
        while math.gcd(stride, k) != 1:
            stride += 1
    out = []
    for i in range(k):
        hue = ((i * stride) % k) / k
        r, g, b = colorsys.hsv_to_rgb(hue, 0.55, 0.92)
        out.append(hex_color((_round_channel(r * 255), _round_channel(g * 255), _round_channel(b * 255))))
    return out


class _Layout:
    def __init__(self, som: SomMap):
        self.hexagonal = som.config.lattice == "hexagonal"
        pos = som.positions
        half_w = 0.5
        half_h = HEX_RADIUS if self.hexagonal else 0.5
        self.x0 = float(pos[:, 0].min()) - half_w
        self.y0 = float(pos[:, 1].min()) - half_h
        map_w = (float(pos[:, 0].max()) + half_w - self.x0) * SCALE
        map_h = (float(pos[:, 1].max()) + half_h - self.y0) * SCALE
        self.width = int(math.ceil(max(MIN_WIDTH, map_w + 2 * MARGIN)))
        self.map_left = (self.width - map_w) / 2
        self.map_top = TITLE_HEIGHT
        self.map_bottom = TITLE_HEIGHT + map_h
        self.height = int(math.ceil(self.map_bottom + LEGEND_HEIGHT + MARGIN / 2))
        self.pos = pos

    def center(self, i: int) -> tuple[float, float]:
        x, y = self.pos[i]
        return (self.map_left + (x - self.x0) * SCALE, self.map_top + (y - self.y0) * SCALE)

    def cell_points(self, i: int) -> list[tuple[float, float]]:
        cx, cy = self.center(i)
        if self.hexagonal:
            r = HEX_RADIUS * SCALE
            return [
                (cx + r * math.cos(math.radians(-90 + 60 * k)), cy + r * math.sin(math.radians(-90 + 60 * k)))
                for k in range(6)
            ]
        h = 0.5 * SCALE
        return [(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)]

    def shared_edge(self, a: int, b: int) -> tuple[float, float, float, float]:
        ax, ay = self.center(a)
        bx, by = self.center(b)
        mx, my = (ax + bx) / 2, (ay + by) / 2
        dx, dy = bx - ax, by - ay
        norm = math.hypot(dx, dy)
        px, py = -dy / norm, dx / norm
        half = (HEX_RADIUS if self.hexagonal else 1.0) * SCALE / 2
        return (mx - px * half, my - py * half, mx + px * half, my + py * half)


def _polygon(points) -> str:
    return " ".join(f"{_f(x)},{_f(y)}" for x, y in points)


def _header(layout: _Layout, title: str, kind: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{layout.width}" height="{layout.height}" '
        f'viewBox="0 0 {layout.width} {layout.height}" data-kind="{kind}">',
        f"<title>{escape(title)}</title>",
        f'<rect class="background" x="0" y="0" width="{layout.width}" height="{layout.height}" fill="#ffffff"/>',
        f'<text class="title" x="{_f(layout.width / 2)}" y="{_f(TITLE_HEIGHT * 0.65)}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]


def _boundaries(som: SomMap, layout: _Layout, labels: Sequence[int]) -> list[str]:
    out = ['<g class="boundaries" stroke="#000000" stroke-width="2" stroke-linecap="round">']
    adj = som.adjacency()
    for a in range(som.n_nodes):
        for b in np.flatnonzero(adj[a]):
            b = int(b)
            if b > a and labels[a] != labels[b]:
                x1, y1, x2, y2 = layout.shared_edge(a, b)
                out.append(
                    f'<line class="boundary" data-a="{a}" data-b="{b}" '
                    f'x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}"/>'
                )
    out.append("</g>")
    return out


def _cluster_labels(layout: _Layout, clusters: ClusterAssignment) -> list[str]:
    out = ['<g class="labels" font-family="sans-serif" font-size="13" font-weight="bold" text-anchor="middle">']
    for label in range(1, clusters.k + 1):
        nodes = clusters.members(label)
        if not nodes:
            continue
        xs, ys = zip(*(layout.center(i) for i in nodes))
        cx, cy = sum(xs) / len(xs), sum(ys) / len(ys)
        out.append(
            f'<text class="cluster-label" data-cluster="{label}" x="{_f(cx)}" y="{_f(cy + 4.5)}">C{label}</text>'
        )
    out.append("</g>")
    return out


def _check_clusters(som: SomMap, clusters: ClusterAssignment) -> None:
    if len(clusters.node_to_cluster) != som.n_nodes:
        raise Mismatch(f"assignment covers {len(clusters.node_to_cluster)} nodes, map has {som.n_nodes}")
    if clusters.k < 1 or set(clusters.node_to_cluster) - set(range(1, clusters.k + 1)):
        raise Mismatch("cluster labels must lie in 1..k")


def render_component_map(
    som: SomMap,
    node_values: Sequence[float],
    clusters: ClusterAssignment | None = None,
    title: str = "",
) -> str:
    values = np.asarray(node_values, dtype=float)
    if values.shape != (som.n_nodes,):
        raise LengthMismatch(f"{values.shape[0] if values.ndim else 0} values for {som.n_nodes} nodes")
    if clusters is not None:
        _check_clusters(som, clusters)
    layout = _Layout(som)
    lo, hi = float(values.min()), float(values.max())
    mid = float(np.median(values))

    parts = _header(layout, title, "component")
    parts.append(
        '<defs><linearGradient id="scale" x1="0" y1="0" x2="1" y2="0">'
        f'<stop offset="0" stop-color="{hex_color(BLUE)}"/>'
        f'<stop offset="0.5" stop-color="{hex_color(GREEN)}"/>'
        f'<stop offset="1" stop-color="{hex_color(RED)}"/>'
        "</linearGradient></defs>"
    )
    parts.append('<g class="cells" stroke="#ffffff" stroke-width="0.5">')
    for i in range(som.n_nodes):
        fill = hex_color(color_for_fraction(scale_fraction(values[i], lo, hi)))
        parts.append(
            f'<polygon class="cell" data-node="{i}" data-value={quoteattr(repr(float(values[i])))} '
            f'points="{_polygon(layout.cell_points(i))}" fill="{fill}"/>'
        )
    parts.append("</g>")
    if clusters is not None:
        parts += _boundaries(som, layout, clusters.node_to_cluster)
        parts += _cluster_labels(layout, clusters)

    bar_w = min(200.0, layout.width - 2 * MARGIN)
    bar_x = (layout.width - bar_w) / 2
    bar_y = layout.map_bottom + 12
    parts.append('<g class="legend" font-family="sans-serif" font-size="11" text-anchor="middle">')
    parts.append(
        f'<rect class="legend-bar" x="{_f(bar_x)}" y="{_f(bar_y)}" width="{_f(bar_w)}" height="12" '
        'fill="url(#scale)" stroke="#333333" stroke-width="0.5"/>'
    )
    for name, value, frac in (("min", lo, 0.0), ("median", mid, 0.5), ("max", hi, 1.0)):
        parts.append(
            f'<text class="legend-tick" data-tick="{name}" data-value={quoteattr(repr(value))} '
            f'x="{_f(bar_x + frac * bar_w)}" y="{_f(bar_y + 28)}">{escape(f"{value:.4g}")}</text>'
        )
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_cluster_map(som: SomMap, clusters: ClusterAssignment, title: str = "Cluster map") -> str:
    _check_clusters(som, clusters)
    layout = _Layout(som)
    palette = categorical_palette(clusters.k)
    parts = _header(layout, title, "clusters")
    parts.append('<g class="cells" stroke="#ffffff" stroke-width="0.5">')
    for i, label in enumerate(clusters.node_to_cluster):
        parts.append(
            f'<polygon class="cell" data-node="{i}" data-cluster="{label}" '
            f'points="{_polygon(layout.cell_points(i))}" fill="{palette[label - 1]}"/>'
        )
    parts.append("</g>")
    parts += _boundaries(som, layout, clusters.node_to_cluster)
    parts += _cluster_labels(layout, clusters)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, document: str) -> Path:
    path = Path(path)
    path.write_text(document, encoding="utf-8", newline="\n")
    return path
