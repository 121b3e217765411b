"""Rendering of run records: per-cell CSVs, a pairwise significance
table, and SVG learning curves with mean and min-max bands.

SVG output is written by hand (no plotting dependency) so rendering is a
pure function of the records: identical runs give byte-identical files.
"""

from __future__ import annotations

import json
import os
import xml.etree.ElementTree as ET
from itertools import combinations

import numpy as np

from .errors import AllwasError, DataError
from .harness import CSV_HEADER, RunRecord, RunRow
from .stats import bonferroni, wilcoxon_signed_rank

EXACT_WILCOXON_LIMIT = 60

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")


def load_records(directory) -> list:
    """Read every cell CSV (with its meta sidecar) under a directory."""
    records = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".csv") or name.endswith(".tmp"):
            continue
        label = name[:-4]
        meta_path = os.path.join(directory, f"{label}.meta.json")
        if not os.path.exists(meta_path):
            continue
        with open(meta_path) as fh:
            meta = json.load(fh)
        with open(os.path.join(directory, name)) as fh:
            lines = fh.read().strip().splitlines()
        if not lines or lines[0] != CSV_HEADER:
            raise DataError(f"{name}: unexpected CSV header")
        rows = tuple(RunRow.from_csv(line) for line in lines[1:])
        records.append(RunRecord(meta.get("label", label),
                                 meta.get("config_hash", ""), rows))
    if not records:
        raise DataError(f"no run records found in {directory}")
    return records


def paired_f1(a: RunRecord, b: RunRecord):
    """F1 vectors aligned on the (seed, iteration) cells both records share."""
    index_a = {(r.seed, r.iteration): r.f1 for r in a.rows}
    keys = [(r.seed, r.iteration) for r in b.rows if (r.seed, r.iteration) in index_a]
    xs = np.array([index_a[k] for k in keys])
    ys = np.array([{(r.seed, r.iteration): r.f1 for r in b.rows}[k] for k in keys])
    return xs, ys


def significance_table(records, out_path=None):
    """Pairwise signed-rank comparisons over all record pairs, Bonferroni
    corrected by the number of pairs; each row carries a direction flag for
    which cell had the higher mean."""
    pairs = list(combinations(records, 2))
    m = max(1, len(pairs))
    lines = ["cell_a,cell_b,n,statistic,p,p_bonferroni,better"]
    results = []
    for a, b in pairs:
        xs, ys = paired_f1(a, b)
        n_informative = int(np.sum(xs != ys))
        if len(xs) < 5 or n_informative < 5:
            stat, p = float("nan"), 1.0
        else:
            mode = "exact" if len(xs) <= EXACT_WILCOXON_LIMIT else "normal-approx"
            stat, p = wilcoxon_signed_rank(xs, ys, mode=mode)
        p_adj = bonferroni(p, m)
        diff = float(np.mean(xs - ys)) if len(xs) else 0.0
        better = a.label if diff > 0 else (b.label if diff < 0 else "none")
        results.append((a.label, b.label, len(xs), stat, p, p_adj, better))
        lines.append(f"{a.label},{b.label},{len(xs)},{stat:.10g},"
                     f"{p:.10g},{p_adj:.10g},{better}")
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)
    return results


def _svg_polyline(points, color, width=2.0, dasharray=None):
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    dash = f' stroke-dasharray="{dasharray}"' if dasharray else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}"'
            f'{dash} points="{coords}" />')


def _svg_polygon(points, color, opacity=0.15):
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    return (f'<polygon fill="{color}" fill-opacity="{opacity}" '
            f'stroke="none" points="{coords}" />')


def learning_curve_svg(records, title: str) -> str:
    """One SVG: per record the mean F1 curve over labeled counts with a
    min-max band across repeats."""
    width, height = 640, 420
    left, right, top, bottom = 60, 150, 40, 50
    plot_w = width - left - right
    plot_h = height - top - bottom

    xs_all = sorted({row.labeled for rec in records for row in rec.rows})
    if not xs_all:
        raise AllwasError("no rows to plot")
    x_min, x_max = xs_all[0], xs_all[-1]
    span = max(1, x_max - x_min)

    def sx(x):
        return left + (x - x_min) / span * plot_w

    def sy(y):
        return top + (1.0 - y) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white" />',
        f'<text x="{left}" y="24" font-size="15" font-family="sans-serif">'
        f'{title}</text>',
    ]
    # Axes and ticks.
    parts.append(_svg_polyline([(left, top), (left, top + plot_h),
                                (left + plot_w, top + plot_h)], "#333333", 1.0))
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(frac)
        parts.append(_svg_polyline([(left - 4, y), (left, y)], "#333333", 1.0))
        parts.append(f'<text x="{left - 8:.2f}" y="{y + 4:.2f}" font-size="11" '
                     f'font-family="sans-serif" text-anchor="end">{frac:.2f}</text>')
    for x in xs_all:
        px = sx(x)
        parts.append(_svg_polyline([(px, top + plot_h), (px, top + plot_h + 4)],
                                   "#333333", 1.0))
        parts.append(f'<text x="{px:.2f}" y="{top + plot_h + 18:.2f}" '
                     f'font-size="11" font-family="sans-serif" '
                     f'text-anchor="middle">{x}</text>')
    parts.append(f'<text x="{left + plot_w / 2:.2f}" y="{height - 12}" '
                 f'font-size="12" font-family="sans-serif" '
                 f'text-anchor="middle">labeled examples</text>')
    parts.append(f'<text x="16" y="{top + plot_h / 2:.2f}" font-size="12" '
                 f'font-family="sans-serif" text-anchor="middle" '
                 f'transform="rotate(-90 16 {top + plot_h / 2:.2f})">F1</text>')

    for idx, rec in enumerate(records):
        color = _PALETTE[idx % len(_PALETTE)]
        mean = rec.curve(np.mean)
        low = rec.curve(np.min)
        high = rec.curve(np.max)
        xs = sorted(mean)
        band = ([(sx(x), sy(high[x])) for x in xs]
                + [(sx(x), sy(low[x])) for x in reversed(xs)])
        parts.append(_svg_polygon(band, color))
        parts.append(_svg_polyline([(sx(x), sy(mean[x])) for x in xs], color))
        ly = top + 16 + 18 * idx
        lx = left + plot_w + 12
        parts.append(_svg_polyline([(lx, ly - 4), (lx + 22, ly - 4)], color))
        parts.append(f'<text x="{lx + 28:.2f}" y="{ly:.2f}" font-size="11" '
                     f'font-family="sans-serif">{rec.label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def validate_svg(text: str) -> None:
    """Minimal internal schema: parses as XML, svg root with viewBox, at
    least one polyline."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise AllwasError(f"SVG is not well-formed XML: {exc}") from exc
    if not root.tag.endswith("svg"):
        raise AllwasError(f"root element is {root.tag!r}, not svg")
    if "viewBox" not in root.attrib:
        raise AllwasError("svg root lacks a viewBox")
    ns = root.tag[: -len("svg")]
    if not root.findall(f".//{ns}polyline"):
        raise AllwasError("svg has no polyline elements")


def report(records, out_dir) -> list:
    """Write canonical per-cell CSVs, the significance table, and one
    learning-curve SVG per seed setting. Returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for rec in records:
        path = os.path.join(out_dir, f"cell_{rec.label}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in sorted(rec.rows, key=lambda r: (r.seed, r.iteration)):
                fh.write(row.to_csv() + "\n")
        written.append(path)

    sig_path = os.path.join(out_dir, "significance.csv")
    significance_table(records, out_path=sig_path)
    written.append(sig_path)

    by_setting = {}
    for rec in records:
        settings = {row.setting for row in rec.rows}
        for s in settings:
            by_setting.setdefault(s, []).append(rec)
    for setting, recs in sorted(by_setting.items()):
        svg = learning_curve_svg(recs, title=f"learning curves ({setting})")
        validate_svg(svg)
        path = os.path.join(out_dir, f"curves_{setting}.svg")
        with open(path, "w") as fh:
            fh.write(svg)
        written.append(path)
    return written
