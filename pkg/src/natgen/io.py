"""CSV and SVG emitters plus the flat ``key = value`` config format."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(rows: Iterable[Sequence], path, header: Sequence[str]) -> Path:
    """Write a header plus rows; floats carry 17 significant digits, lines end in LF."""
    path = Path(path)
    width = len(header)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i, row in enumerate(rows):
                if len(row) != width:
                    raise ValueError(f"{path}: row {i} has {len(row)} fields, header has {width}")
                writer.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            return header, [row for row in reader]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def read_csv_columns(path) -> dict[str, np.ndarray]:
    """Columns as arrays; numeric columns become float, others stay strings."""
    header, rows = read_csv(path)
    cols = {}
    for k, name in enumerate(header):
        raw = [r[k] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in raw], dtype=float)
        except ValueError:
            cols[name] = np.array(raw, dtype=object)
    return cols


def emit_svg_scatter(
    series: Sequence[tuple],
    hulls: Sequence[np.ndarray] = (),
    path=None,
    title: str = "",
    size: int = 800,
) -> str:
    """Self-contained SVG scatter plot.

    ``series`` holds ``(label, points)`` or ``(label, points, color)``
    tuples; ``hulls`` holds vertex arrays drawn as dashed closed outlines.
    Returns the SVG text and writes it when ``path`` is given.
    """
    clouds = [np.asarray(s[1], dtype=float).reshape(-1, 2) for s in series]
    outlines = [np.asarray(h, dtype=float).reshape(-1, 2) for h in hulls]
    allpts = np.vstack([c for c in clouds + outlines if len(c)] or [np.zeros((1, 2))])
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = max(float((hi - lo).max()), 1e-12)
    pad = 60.0
    scale = (size - 2 * pad) / span

    def tx(p):
        return pad + (p[:, 0] - lo[0]) * scale, size - pad - (p[:, 1] - lo[1]) * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{size / 2:.1f}" y="30" text-anchor="middle" font-family="sans-serif" font-size="18">{escape(title)}</text>')
    for k, (s, pts) in enumerate(zip(series, clouds)):
        color = s[2] if len(s) > 2 else PALETTE[k % len(PALETTE)]
        xs, ys = tx(pts)
        out.append(f'<g fill="{color}" fill-opacity="0.6" stroke="none">')
        out.extend(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5"/>' for x, y in zip(xs, ys))
        out.append("</g>")
        out.append(f'<rect x="{size - 210}" y="{50 + 22 * k}" width="12" height="12" fill="{color}"/>')
        out.append(f'<text x="{size - 192}" y="{61 + 22 * k}" font-family="sans-serif" font-size="14">{escape(str(s[0]))}</text>')
    for h in outlines:
        xs, ys = tx(h)
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        out.append(f'<polygon points="{pts}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="6,4"/>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def coerce(value: str, like):
    """Convert a config string to the type of the default ``like``."""
    if isinstance(like, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        parts = [p for p in value.replace(";", ",").split(",") if p.strip()]
        return tuple(coerce(p, like[0]) if like else p.strip() for p in parts)
    return value
