"""Per-subject shape descriptors and per-image coverage summaries.

Every subject (one labeled region) gets: pixel area, physical area, a Freeman
chain code of its outer boundary (8 directions, code 0 = +x, numbered
counterclockwise in standard axes), a weighted-chain perimeter, roundness
4*pi*a/p^2 clamped to [0, 1], and the centroid of its pixels.

Boundaries are traced with Moore neighbor tracing, visually clockwise when y
points down, starting at the top-most then left-most boundary pixel.  Holes
are ignored by the contour; the pixel count (which excludes hole interiors
only if they are background) is the area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import GeometryError, LabelNotFoundError
from .mask_io import LabelMask, PixelScale, split_connected_parts

# Freeman 8-direction code: 0=+x then counterclockwise (y up), so in image
# coordinates (y down) code 2 moves one row up and code 6 one row down.
CHAIN_DX = (1, 1, 0, -1, -1, -1, 0, 1)
CHAIN_DY = (0, -1, -1, -1, 0, 1, 1, 1)

# Ring positions around a pixel in visually clockwise order starting at North.
_CW_RING = (2, 1, 0, 7, 6, 5, 4, 3)
_RING_INDEX = {code: i for i, code in enumerate(_CW_RING)}
_CODE_OF_STEP = {(CHAIN_DX[c], CHAIN_DY[c]): c for c in range(8)}

_SQRT2 = math.sqrt(2.0)

#: Subjects below this pixel area are flagged and dropped from aggregates.
DEFAULT_MIN_SIZE_PX = 5

_ROUNDNESS_SNAP = 1e-12


@dataclass(frozen=True)
class ChainCode:
    """Closed outer boundary of one connected component.

    ``start`` is the top-most then left-most boundary pixel (x, y); ``moves``
    walk the boundary clockwise in image coordinates and return to the start.
    Single-pixel components have an empty move sequence.
    """

    start: tuple[int, int]
    moves: tuple[int, ...]

    def __post_init__(self) -> None:
        dx = sum(CHAIN_DX[m] for m in self.moves)
        dy = sum(CHAIN_DY[m] for m in self.moves)
        if dx != 0 or dy != 0:
            raise GeometryError(f"chain code does not close (net offset {dx},{dy})")

    def pixels(self) -> list[tuple[int, int]]:
        """Boundary pixels in traversal order, starting at ``start``.

        The final return step to the start is not repeated; pixels on thin
        spurs may appear more than once.
        """
        x, y = self.start
        out = [(x, y)]
        for m in self.moves[:-1] if self.moves else ():
            x += CHAIN_DX[m]
            y += CHAIN_DY[m]
            out.append((x, y))
        return out

    def length_px(self) -> float:
        """Weighted chain length: axial steps count 1, diagonal steps sqrt(2)."""
        n_diag = sum(1 for m in self.moves if m % 2)
        return (len(self.moves) - n_diag) + _SQRT2 * n_diag


@dataclass(frozen=True)
class SubjectFeatures:
    """Shape descriptors of one subject."""

    label: int
    area_px: int
    area_um2: float
    perimeter_um: float
    roundness: float
    centroid_px: tuple[float, float]
    centroid_um: tuple[float, float]
    boundary_touching: bool
    small: bool = False
    roundness_clamped: bool = False


@dataclass(frozen=True)
class ImageSummary:
    """Image-level counts, coverage and density for one mask pair."""

    n_cells: int
    n_nuclei: int
    coverage_cells: float
    coverage_nuclei: float
    total_area_um2: float
    density_per_mm2: float
    voronoi_entropy: Optional[float] = None
    mean_csm: Optional[float] = None


def _moore_trace(fg: np.ndarray, x0: int = 0, y0: int = 0) -> ChainCode:
    """Trace the outer boundary of the single foreground component in ``fg``.

    ``fg`` must contain exactly one 8-connected component.  ``x0, y0`` offset
    the reported coordinates (crop origin in the full mask).
    """
    h, w = fg.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = fg
    buf = padded.tobytes()
    stride = w + 2

    ys, xs = np.nonzero(fg)
    sy, sx = int(ys[0]) + 1, int(xs[0]) + 1  # scan-order first pixel, padded coords

    moves: list[int] = []
    cur_x, cur_y = sx, sy
    back_code = 2  # backtrack starts at the (background) pixel above the start
    second: tuple[int, int] | None = None
    limit = 4 * len(ys) + 16
    while True:
        ring_start = (_RING_INDEX[back_code] + 1) % 8
        found = -1
        for k in range(8):
            code = _CW_RING[(ring_start + k) % 8]
            if buf[(cur_y + CHAIN_DY[code]) * stride + (cur_x + CHAIN_DX[code])]:
                found = code
                prev_code = _CW_RING[(ring_start + k - 1) % 8]
                break
        if found < 0:
            return ChainCode(start=(sx - 1 + x0, sy - 1 + y0), moves=())
        nxt = (cur_x + CHAIN_DX[found], cur_y + CHAIN_DY[found])
        if moves and (cur_x, cur_y) == (sx, sy) and nxt == second:
            break
        moves.append(found)
        if second is None:
            second = nxt
        if len(moves) > limit:
            raise GeometryError("boundary trace did not terminate")
        bx = cur_x + CHAIN_DX[prev_code]
        by = cur_y + CHAIN_DY[prev_code]
        cur_x, cur_y = nxt
        back_code = _CODE_OF_STEP[(bx - cur_x, by - cur_y)]
    return ChainCode(start=(sx - 1 + x0, sy - 1 + y0), moves=tuple(moves))


def _label_bbox(labels: np.ndarray, label: int) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(labels == label)
    if ys.size == 0:
        raise LabelNotFoundError(f"label {label} not present in mask")
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def trace_contours(mask: LabelMask, label: int) -> tuple[ChainCode, ...]:
    """Outer boundary chain codes of every connected part of ``label``.

    Parts are ordered by the scan position of their first pixel; a label
    stored as a single component yields exactly one chain.
    """
    x0, y0, x1, y1 = _label_bbox(mask.labels, label)
    crop = mask.labels[y0:y1 + 1, x0:x1 + 1] == label
    parts = split_connected_parts(crop)
    return tuple(_moore_trace(parts == pid, x0, y0)
                 for pid in range(1, int(parts.max()) + 1))


def trace_contour(mask: LabelMask, label: int) -> ChainCode:
    """Outer boundary chain code of ``label`` (its first part, in scan order)."""
    return trace_contours(mask, label)[0]


def _roundness(area_px: float, perimeter_px: float) -> tuple[float, bool]:
    """4*pi*a/p^2 with a snap to exactly 1.0 within 1e-12 and a [0, 1] clamp.

    The snap turns float rounding of analytically-circular inputs into an
    exact 1.0; the clamp absorbs digitization pushing small subjects above 1.
    Returns (roundness, clamped flag).
    """
    r = 4.0 * math.pi * area_px / (perimeter_px * perimeter_px)
    if abs(r - 1.0) <= _ROUNDNESS_SNAP:
        return 1.0, False
    if r > 1.0:
        return 1.0, True
    return r, False


def roundness(area: float, perimeter: float) -> float:
    """Roundness of analytic area/perimeter values in consistent units."""
    if area <= 0 or perimeter <= 0:
        raise GeometryError("area and perimeter must be positive")
    return _roundness(area, perimeter)[0]


def _perimeter_px(chains: Sequence[ChainCode]) -> float:
    total = 0.0
    for chain in chains:
        total += chain.length_px() if chain.moves else 4.0
    return total


def _build_features(
    label: int,
    area_px: int,
    sum_x: float,
    sum_y: float,
    bbox: tuple[int, int, int, int],
    chains: Sequence[ChainCode],
    scale: PixelScale,
    width: int,
    height: int,
    min_size: int,
) -> SubjectFeatures:
    perimeter_px = _perimeter_px(chains)
    r, clamped = _roundness(float(area_px), perimeter_px)
    cx = sum_x / area_px
    cy = sum_y / area_px
    x0, y0, x1, y1 = bbox
    return SubjectFeatures(
        label=label,
        area_px=area_px,
        area_um2=area_px * scale.area_per_px,
        perimeter_um=perimeter_px * scale.pitch,
        roundness=r,
        centroid_px=(cx, cy),
        centroid_um=((cx + 0.5) * scale.pitch, (cy + 0.5) * scale.pitch),
        boundary_touching=(x0 == 0 or y0 == 0 or x1 == width - 1 or y1 == height - 1),
        small=area_px < min_size,
        roundness_clamped=clamped,
    )


def compute_features(mask: LabelMask, label: int,
                     min_size: int = DEFAULT_MIN_SIZE_PX) -> SubjectFeatures:
    """Shape descriptors for one subject of the mask."""
    ys, xs = np.nonzero(mask.labels == label)
    if ys.size == 0:
        raise LabelNotFoundError(f"label {label} not present in mask")
    bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
    chains = trace_contours(mask, label)
    return _build_features(label, int(ys.size), float(xs.sum()), float(ys.sum()),
                           bbox, chains, mask.scale, mask.width, mask.height, min_size)


@dataclass(frozen=True)
class MaskFeatures:
    """Features plus boundary chains for every subject of one mask."""

    subjects: tuple[SubjectFeatures, ...]
    contours: dict[int, tuple[ChainCode, ...]]


def extract_features(mask: LabelMask, min_size: int = DEFAULT_MIN_SIZE_PX) -> MaskFeatures:
    """Compute features for all subjects of a mask in one vectorized pass."""
    labels = mask.labels
    parts = split_connected_parts(labels)
    ys, xs = np.nonzero(labels)
    if ys.size == 0:
        return MaskFeatures(subjects=(), contours={})
    lvals = labels[ys, xs]
    pvals = parts[ys, xs]

    n_parts = int(pvals.max())
    part_minx = np.full(n_parts + 1, mask.width, dtype=np.int64)
    part_miny = np.full(n_parts + 1, mask.height, dtype=np.int64)
    part_maxx = np.full(n_parts + 1, -1, dtype=np.int64)
    part_maxy = np.full(n_parts + 1, -1, dtype=np.int64)
    np.minimum.at(part_minx, pvals, xs)
    np.minimum.at(part_miny, pvals, ys)
    np.maximum.at(part_maxx, pvals, xs)
    np.maximum.at(part_maxy, pvals, ys)
    part_label = np.zeros(n_parts + 1, dtype=np.int64)
    part_label[pvals] = lvals

    n_labels = int(lvals.max())
    areas = np.bincount(lvals, minlength=n_labels + 1)
    sum_x = np.bincount(lvals, weights=xs, minlength=n_labels + 1)
    sum_y = np.bincount(lvals, weights=ys, minlength=n_labels + 1)
    lab_minx = np.full(n_labels + 1, mask.width, dtype=np.int64)
    lab_miny = np.full(n_labels + 1, mask.height, dtype=np.int64)
    lab_maxx = np.full(n_labels + 1, -1, dtype=np.int64)
    lab_maxy = np.full(n_labels + 1, -1, dtype=np.int64)
    np.minimum.at(lab_minx, lvals, xs)
    np.minimum.at(lab_miny, lvals, ys)
    np.maximum.at(lab_maxx, lvals, xs)
    np.maximum.at(lab_maxy, lvals, ys)

    contours: dict[int, list[ChainCode]] = {}
    for pid in range(1, n_parts + 1):
        x0, y0 = int(part_minx[pid]), int(part_miny[pid])
        crop = parts[y0:int(part_maxy[pid]) + 1, x0:int(part_maxx[pid]) + 1] == pid
        contours.setdefault(int(part_label[pid]), []).append(_moore_trace(crop, x0, y0))

    subjects = []
    for label in sorted(contours):
        subjects.append(_build_features(
            label, int(areas[label]), float(sum_x[label]), float(sum_y[label]),
            (int(lab_minx[label]), int(lab_miny[label]),
             int(lab_maxx[label]), int(lab_maxy[label])),
            contours[label], mask.scale, mask.width, mask.height, min_size))
    return MaskFeatures(
        subjects=tuple(subjects),
        contours={lab: tuple(chains) for lab, chains in contours.items()},
    )


def summarize_image(
    cells: Sequence[SubjectFeatures],
    nuclei: Sequence[SubjectFeatures],
    scale: PixelScale,
    width: int,
    height: int,
    include_small: bool = False,
) -> ImageSummary:
    """Counts, per-channel coverage and nuclei density for one image.

    Subjects flagged as small are excluded from all aggregates unless
    ``include_small`` is set.  The Voronoi entropy and mean CSM fields are
    left unset here; the tessellation stage fills them.
    """
    active_cells = [f for f in cells if include_small or not f.small]
    active_nuclei = [f for f in nuclei if include_small or not f.small]
    total_area_um2 = width * height * scale.area_per_px
    coverage_cells = sum(f.area_um2 for f in active_cells) / total_area_um2
    coverage_nuclei = sum(f.area_um2 for f in active_nuclei) / total_area_um2
    return ImageSummary(
        n_cells=len(active_cells),
        n_nuclei=len(active_nuclei),
        coverage_cells=coverage_cells,
        coverage_nuclei=coverage_nuclei,
        total_area_um2=total_area_um2,
        density_per_mm2=len(active_nuclei) / (total_area_um2 * 1e-6),
    )
