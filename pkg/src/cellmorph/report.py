"""Deterministic CSV tables and SVG figures.

All numbers are serialized with 6 significant digits and a ``.`` decimal
separator regardless of locale; identical inputs produce byte-identical
files.  Subject rows are ordered by (group, image, channel, label).
"""

from __future__ import annotations

import base64
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionMismatchError, MaskFormatError, ReportError
from .morphometry import MaskFeatures
from .stats import AnovaResult, GroupStats
from .tessellation import Tessellation

SUBJECT_COLUMNS = (
    "group", "image_id", "channel", "label", "area_px", "area_um2",
    "perimeter_um", "roundness", "centroid_x_px", "centroid_y_px",
    "paired_label", "ratio", "flags",
)
IMAGE_COLUMNS = (
    "group", "image_id", "n_cells", "n_nuclei", "coverage_cells",
    "coverage_nuclei", "density_per_mm2", "voronoi_entropy", "mean_csm",
)
GROUP_COLUMNS = ("group", "feature", "n", "mean", "std", "min", "max")
ANOVA_COLUMNS = ("feature", "f_stat", "df_between", "df_within", "p_value")

#: Fill colors by Voronoi edge-count class; classes outside the map fall back.
CLASS_PALETTE = {
    3: "#e41a1c", 4: "#ff7f00", 5: "#ffd92f", 6: "#4daf4a",
    7: "#377eb8", 8: "#984ea3", 9: "#a65628",
}
CLASS_FALLBACK = "#999999"

FLAG_SMALL = "small-subject"
FLAG_MULTI_NUCLEATE = "multi-nucleate"
FLAG_CLAMPED = "clamped-roundness"


@dataclass(frozen=True)
class FeatureRecord:
    """One subjects.csv row."""

    group: str
    image_id: str
    channel: str
    label: int
    area_px: int
    area_um2: float
    perimeter_um: float
    roundness: float
    centroid_x_px: float
    centroid_y_px: float
    paired_label: Optional[int] = None
    ratio: Optional[float] = None
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ImageRecord:
    """One images.csv row."""

    group: str
    image_id: str
    n_cells: int
    n_nuclei: int
    coverage_cells: float
    coverage_nuclei: float
    density_per_mm2: float
    voronoi_entropy: Optional[float] = None
    mean_csm: Optional[float] = None


def format_number(value) -> str:
    """Serialize one CSV field: 6 significant digits, empty for None."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".6g")


def _write_csv(path: Path | str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def write_subject_csv(records: Sequence[FeatureRecord], path: Path | str) -> None:
    ordered = sorted(records, key=lambda r: (r.group, r.image_id, r.channel, r.label))
    seen = set()
    for r in ordered:
        key = (r.group, r.image_id, r.channel, r.label)
        if key in seen:
            raise ReportError(f"duplicate subject row {key}")
        seen.add(key)
    rows = [(r.group, r.image_id, r.channel, r.label, r.area_px, r.area_um2,
             r.perimeter_um, r.roundness, r.centroid_x_px, r.centroid_y_px,
             r.paired_label, r.ratio, ";".join(r.flags)) for r in ordered]
    _write_csv(path, SUBJECT_COLUMNS, rows)


def write_image_csv(records: Sequence[ImageRecord], path: Path | str) -> None:
    ordered = sorted(records, key=lambda r: (r.group, r.image_id))
    seen = set()
    for r in ordered:
        key = (r.group, r.image_id)
        if key in seen:
            raise ReportError(f"duplicate image row {key}")
        seen.add(key)
    rows = [(r.group, r.image_id, r.n_cells, r.n_nuclei, r.coverage_cells,
             r.coverage_nuclei, r.density_per_mm2, r.voronoi_entropy,
             r.mean_csm) for r in ordered]
    _write_csv(path, IMAGE_COLUMNS, rows)


def write_group_csv(stats: Sequence[GroupStats], path: Path | str) -> None:
    rows = [(s.group, s.feature, s.n, s.mean, s.std, s.min, s.max) for s in stats]
    _write_csv(path, GROUP_COLUMNS, rows)


def write_anova_csv(results: Sequence[AnovaResult], path: Path | str) -> None:
    rows = [(r.feature, r.f_stat, r.df_between, r.df_within, r.p_value)
            for r in results]
    _write_csv(path, ANOVA_COLUMNS, rows)


# ---------------------------------------------------------------------------
# SVG rendering
# ---------------------------------------------------------------------------

def _fmt_coord(v: float) -> str:
    out = format(v, ".3f")
    return "0.000" if out == "-0.000" else out


def render_voronoi_svg(tess: Tessellation, path: Path | str) -> None:
    """Voronoi diagram figure: cells filled by edge-count class, seeds as
    dots, boundary-excluded cells hatched."""
    b = tess.bounds
    stroke = max(b.width, b.height) / 600.0
    dot = max(b.width, b.height) / 250.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{_fmt_coord(b.xmin)} {_fmt_coord(b.ymin)} '
        f'{_fmt_coord(b.width)} {_fmt_coord(b.height)}">',
        '<defs><pattern id="excluded" width="4" height="4" '
        'patternUnits="userSpaceOnUse" patternTransform="rotate(45)">'
        '<rect width="4" height="4" fill="#f0f0f0"/>'
        '<line x1="0" y1="0" x2="0" y2="4" stroke="#b0b0b0" stroke-width="1.5"/>'
        "</pattern></defs>",
    ]
    for poly, interior in zip(tess.polygons, tess.interior_flags):
        fill = (CLASS_PALETTE.get(len(poly), CLASS_FALLBACK)
                if interior else "url(#excluded)")
        points = " ".join(f"{_fmt_coord(x)},{_fmt_coord(y)}" for x, y in poly)
        parts.append(f'<polygon points="{points}" fill="{fill}" '
                     f'stroke="#333333" stroke-width="{_fmt_coord(stroke)}"/>')
    for x, y in tess.seeds:
        parts.append(f'<circle cx="{_fmt_coord(x)}" cy="{_fmt_coord(y)}" '
                     f'r="{_fmt_coord(dot)}" fill="#000000"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts), encoding="utf-8")


def _load_gray(path: Path, width: int, height: int) -> np.ndarray:
    try:
        img = Image.open(path)
    except (UnidentifiedImageError, OSError) as exc:
        raise MaskFormatError(f"{path}: unreadable raw image ({exc})") from exc
    with img:
        if img.mode not in ("L", "RGB"):
            raise MaskFormatError(f"{path}: raw channel must be 8-bit grayscale or RGB, "
                                  f"got mode {img.mode!r}")
        arr = np.asarray(img.convert("L"))
    if arr.shape != (height, width):
        raise DimensionMismatchError(
            f"{path}: raw image {arr.shape[::-1]} does not match masks {(width, height)}")
    return arr


def _background_image(width: int, height: int,
                      raw_fitc: Optional[Path], raw_dapi: Optional[Path]) -> str:
    rgb = np.zeros((height, width, 3), dtype=np.uint8)
    if raw_fitc is not None:
        rgb[:, :, 1] = _load_gray(Path(raw_fitc), width, height)
    if raw_dapi is not None:
        rgb[:, :, 2] = _load_gray(Path(raw_dapi), width, height)
    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, format="PNG")
    payload = base64.b64encode(buf.getvalue()).decode("ascii")
    return (f'<image x="0" y="0" width="{width}" height="{height}" '
            f'href="data:image/png;base64,{payload}"/>')


def _outline_elements(features: MaskFeatures, color: str, label_text: bool) -> list[str]:
    parts = []
    for label in sorted(features.contours):
        for chain in features.contours[label]:
            pixels = chain.pixels()
            if len(pixels) == 1:
                x, y = pixels[0]
                parts.append(f'<circle cx="{x + 0.5}" cy="{y + 0.5}" r="0.5" '
                             f'fill="none" stroke="{color}" stroke-width="1"/>')
                continue
            d = "M " + " L ".join(f"{x + 0.5},{y + 0.5}" for x, y in pixels) + " Z"
            parts.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1"/>')
    if label_text:
        for subject in features.subjects:
            cx, cy = subject.centroid_px
            parts.append(
                f'<text x="{_fmt_coord(cx + 0.5)}" y="{_fmt_coord(cy + 0.5)}" '
                f'font-size="10" fill="#ffffff" stroke="#000000" stroke-width="0.25" '
                f'text-anchor="middle">{format_number(subject.area_um2)}</text>')
    return parts


def render_overlay_svg(
    cyto: Optional[MaskFeatures],
    nuclei: Optional[MaskFeatures],
    width: int,
    height: int,
    path: Path | str,
    raw_fitc: Optional[Path] = None,
    raw_dapi: Optional[Path] = None,
) -> None:
    """Subject outlines with per-subject area labels over an optional
    composite of the raw channels (FITC mapped to green, DAPI to blue)."""
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'viewBox="0 0 {width} {height}">']
    if raw_fitc is not None or raw_dapi is not None:
        parts.append(_background_image(width, height, raw_fitc, raw_dapi))
    else:
        parts.append(f'<rect x="0" y="0" width="{width}" height="{height}" '
                     f'fill="#ffffff"/>')
    if cyto is not None:
        parts.extend(_outline_elements(cyto, "#2ca02c", label_text=True))
    if nuclei is not None:  # nuclei outlines sit above the cytoplasm outlines
        parts.extend(_outline_elements(nuclei, "#1f77b4", label_text=False))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts), encoding="utf-8")
