"""Matching nuclei to their enclosing cells and the C_i/N_i area ratio.

Each nucleus is assigned to the cell label with the largest pixel overlap
with the nucleus region (ties broken toward the smaller cell label); overlap
is robust where a nucleus centroid would fall into a cytoplasm hole.  A cell
holding several nuclei produces one pair per nucleus, flagged multinucleate,
and keeps its full cytoplasm area in every pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .mask_io import LabelMask


@dataclass(frozen=True)
class CellNucleusPair:
    """One matched cytoplasm/nucleus pair with its area ratio."""

    cell_label: int
    nucleus_label: int
    cell_area_um2: float
    nucleus_area_um2: float
    ratio: float
    overlap_px: int
    multi_nucleate: bool = False


@dataclass(frozen=True)
class PairingResult:
    pairs: tuple[CellNucleusPair, ...]
    unpaired_nuclei: tuple[int, ...]
    unpaired_cells: tuple[int, ...]


def pair_subjects(cells: LabelMask, nuclei: LabelMask) -> PairingResult:
    """Assign every nucleus to the overlap-maximal cell of the same image.

    Returns the pairs (ordered by nucleus label), nuclei with zero cell
    overlap, and cells that received no nucleus.
    """
    if cells.labels.shape != nuclei.labels.shape:
        raise DimensionMismatchError(
            f"cell mask {cells.labels.shape} vs nuclei mask {nuclei.labels.shape}")

    cell_arr = cells.labels
    nuc_arr = nuclei.labels
    both = (cell_arr > 0) & (nuc_arr > 0)
    cell_at = cell_arr[both].astype(np.int64)
    nuc_at = nuc_arr[both].astype(np.int64)

    # overlap_px[(nucleus, cell)] via a combined key histogram
    max_cell = int(cell_arr.max())
    overlap: dict[tuple[int, int], int] = {}
    if cell_at.size:
        keys = nuc_at * (max_cell + 1) + cell_at
        counts = np.bincount(keys)
        for key in np.flatnonzero(counts):
            overlap[(int(key) // (max_cell + 1), int(key) % (max_cell + 1))] = int(counts[key])

    cell_areas = np.bincount(cell_arr[cell_arr > 0].ravel().astype(np.int64))
    nuc_areas = np.bincount(nuc_arr[nuc_arr > 0].ravel().astype(np.int64))
    all_cells = [int(v) for v in np.unique(cell_arr) if v > 0]
    all_nuclei = [int(v) for v in np.unique(nuc_arr) if v > 0]

    best_cell: dict[int, tuple[int, int]] = {}  # nucleus -> (overlap, cell)
    for (nuc, cell), count in overlap.items():
        cur = best_cell.get(nuc)
        # larger overlap wins; on a tie the smaller cell label wins
        if cur is None or count > cur[0] or (count == cur[0] and cell < cur[1]):
            best_cell[nuc] = (count, cell)

    nuclei_per_cell: dict[int, int] = {}
    for count, cell in best_cell.values():
        nuclei_per_cell[cell] = nuclei_per_cell.get(cell, 0) + 1

    area_px = cells.scale.area_per_px
    pairs = []
    for nuc in sorted(best_cell):
        count, cell = best_cell[nuc]
        c_area = float(cell_areas[cell]) * area_px
        n_area = float(nuc_areas[nuc]) * area_px
        pairs.append(CellNucleusPair(
            cell_label=cell,
            nucleus_label=nuc,
            cell_area_um2=c_area,
            nucleus_area_um2=n_area,
            ratio=c_area / n_area,
            overlap_px=count,
            multi_nucleate=nuclei_per_cell[cell] > 1,
        ))
    return PairingResult(
        pairs=tuple(pairs),
        unpaired_nuclei=tuple(n for n in all_nuclei if n not in best_cell),
        unpaired_cells=tuple(c for c in all_cells if c not in nuclei_per_cell),
    )
