"""Loading of label masks, dataset discovery and physical pixel scale.

A label mask is an integer image in which 0 is background and every positive
value identifies one segmented subject (a cell's cytoplasm or a nucleus).
Masks arrive either as single-channel PNG files (8- or 16-bit, pixel value =
label id) or as plain NPY v1.0 array files.  Binary masks (values {0, 1}) are
turned into label masks by 8-connected component labeling.

Physical scale is carried as micrometers per pixel edge; the default of
0.625 um/px corresponds to a 1.08 mm^2 field scanned at 1920 x 1440 px.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataRootError, MaskFormatError, ScaleError

#: Default pixel pitch in micrometers per pixel.
DEFAULT_PITCH_UM = 0.625

_NPY_MAGIC = b"\x93NUMPY"
_NPY_DTYPES = {
    "|i1", "|u1", "<i1", "<u1",
    "<i2", "<u2", "<i4", "<u4",
}
_PNG_MODES = {"L", "I", "I;16"}


class Channel(str, Enum):
    """Stain channel a mask belongs to."""

    CYTOPLASM = "cytoplasm"
    NUCLEI = "nuclei"


@dataclass(frozen=True)
class PixelScale:
    """Physical pixel size: edge pitch in um/px, area in um^2/px."""

    pitch: float

    def __post_init__(self) -> None:
        if not (isinstance(self.pitch, (int, float)) and math.isfinite(self.pitch)
                and self.pitch > 0):
            raise ScaleError(f"pixel pitch must be a positive finite number, got {self.pitch!r}")

    @property
    def area_per_px(self) -> float:
        return self.pitch * self.pitch


def derive_scale(scanned_area_mm2: float, width_px: int, height_px: int) -> PixelScale:
    """Derive the pixel scale from a scanned area in mm^2 and its pixel grid.

    area_per_px = scanned_area * 1e6 / (width * height), pitch = sqrt of that.
    """
    if not (scanned_area_mm2 > 0 and math.isfinite(scanned_area_mm2)):
        raise ScaleError(f"scanned area must be positive, got {scanned_area_mm2!r}")
    if width_px <= 0 or height_px <= 0:
        raise ScaleError(f"image dimensions must be positive, got {width_px}x{height_px}")
    area_per_px = scanned_area_mm2 * 1e6 / (width_px * height_px)
    return PixelScale(pitch=math.sqrt(area_per_px))


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Integer-labeled pixel grid for one channel of one image."""

    labels: np.ndarray
    channel: Channel
    scale: PixelScale

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels)
        if arr.ndim != 2 or arr.size == 0:
            raise MaskFormatError(
                f"label grid must be a non-empty 2D array, got shape {arr.shape}")
        if arr.dtype.kind not in "iu":
            raise MaskFormatError(f"label grid must be integer-typed, got {arr.dtype}")
        if arr.min() < 0:
            raise MaskFormatError("label grid contains negative values")
        arr = np.ascontiguousarray(arr, dtype=np.int32)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def label_values(self) -> tuple[int, ...]:
        """Sorted distinct positive labels present in the mask."""
        vals = np.unique(self.labels)
        return tuple(int(v) for v in vals if v > 0)


def split_connected_parts(values: np.ndarray) -> np.ndarray:
    """Split a non-negative integer grid into 8-connected constant-value parts.

    Returns an int32 grid of part ids numbered 1..K in scan order of each
    part's first pixel (top-most row, then left-most column), which makes the
    result deterministic; zero stays zero.  For a binary grid this is plain
    connected-component labeling; for a label grid it separates any label
    that was stored as several disconnected pieces.  Uses row-run extraction
    plus union-find, so cost scales with the number of runs, not pixels.
    """
    grid = np.ascontiguousarray(values)
    if grid.ndim != 2:
        raise MaskFormatError(f"expected a 2D grid, got shape {grid.shape}")
    h, w = grid.shape
    out = np.zeros((h, w), dtype=np.int32)

    parent: list[int] = []
    size: list[int] = []

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:  # path compression
            parent[i], i = root, parent[i]
        return root

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra == rb:
            return
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]

    all_runs: list[tuple[int, int, int, int]] = []  # (row, start, end, run_id)
    prev: list[tuple[int, int, int, int]] = []  # (start, end, value, run_id)
    for y in range(h):
        row = grid[y]
        if not row.any():
            prev = []
            continue
        change = np.flatnonzero(row[1:] != row[:-1]) + 1
        bounds = np.concatenate(([0], change, [w]))
        cur: list[tuple[int, int, int, int]] = []
        for s, e in zip(bounds[:-1].tolist(), bounds[1:].tolist()):
            v = int(row[s])
            if v == 0:
                continue
            rid = len(parent)
            parent.append(rid)
            size.append(1)
            cur.append((s, e, v, rid))
            all_runs.append((y, s, e, rid))
        # 8-connectivity: run [s, e) touches previous-row run [ps, pe)
        # iff s <= pe and ps <= e (one-column diagonal tolerance).
        pi = 0
        for s, e, v, rid in cur:
            while pi < len(prev) and prev[pi][1] < s:
                pi += 1
            pj = pi
            while pj < len(prev) and prev[pj][0] <= e:
                if prev[pj][2] == v:
                    union(rid, prev[pj][3])
                pj += 1
        prev = cur

    part_of_root: dict[int, int] = {}
    next_part = 1
    for y, s, e, rid in all_runs:
        root = find(rid)
        part = part_of_root.get(root)
        if part is None:
            part = next_part
            part_of_root[root] = part
            next_part += 1
        out[y, s:e] = part
    return out


def label_components(binary: np.ndarray) -> np.ndarray:
    """8-connected component labeling of a binary grid, labels 1..K in scan order."""
    grid = np.asarray(binary)
    if grid.ndim != 2:
        raise MaskFormatError(f"expected a 2D binary grid, got shape {grid.shape}")
    return split_connected_parts((grid != 0).astype(np.int8))


def _read_npy(path: Path) -> np.ndarray:
    """Read a plain NPY v1.0 file holding a 2D C-order integer array."""
    data = path.read_bytes()
    if len(data) < 10 or data[:6] != _NPY_MAGIC:
        raise MaskFormatError(f"{path}: not an NPY file (bad magic)")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise MaskFormatError(
            f"{path}: unsupported NPY version {major}.{minor} (only 1.0 accepted)")
    header_len = int.from_bytes(data[8:10], "little")
    if len(data) < 10 + header_len:
        raise MaskFormatError(f"{path}: truncated NPY header")
    try:
        meta = ast.literal_eval(data[10:10 + header_len].decode("latin1"))
        descr = meta["descr"]
        fortran = meta["fortran_order"]
        shape = tuple(meta["shape"])
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise MaskFormatError(f"{path}: malformed NPY header ({exc})") from exc
    if fortran:
        raise MaskFormatError(f"{path}: Fortran-order arrays are not supported")
    if len(shape) != 2:
        raise MaskFormatError(f"{path}: expected a 2D array, got shape {shape}")
    if descr not in _NPY_DTYPES:
        raise MaskFormatError(
            f"{path}: unsupported dtype {descr!r} "
            f"(integers of 1-4 bytes, little-endian, required)")
    count = shape[0] * shape[1]
    body = data[10 + header_len:]
    dtype = np.dtype(descr)
    if len(body) < count * dtype.itemsize:
        raise MaskFormatError(f"{path}: file shorter than declared shape {shape}")
    arr = np.frombuffer(body, dtype=dtype, count=count)
    return arr.reshape(shape)


def _read_png(path: Path) -> np.ndarray:
    try:
        img = Image.open(path)
    except (UnidentifiedImageError, OSError) as exc:
        raise MaskFormatError(f"{path}: unreadable image ({exc})") from exc
    with img:
        if img.format != "PNG":
            raise MaskFormatError(f"{path}: expected PNG, got {img.format}")
        if img.mode not in _PNG_MODES:
            raise MaskFormatError(
                f"{path}: unsupported PNG mode {img.mode!r} "
                f"(single-channel 8- or 16-bit required)")
        return np.asarray(img)


def _single_component_labels(labels: np.ndarray) -> list[int]:
    """Labels whose pixels split into more than one 8-connected component."""
    parts = split_connected_parts(labels)
    flat_parts = parts.ravel()
    fg = flat_parts > 0
    part_label = np.zeros(int(parts.max()) + 1, dtype=np.int64)
    part_label[flat_parts[fg]] = labels.ravel()[fg]
    parts_per_label = np.bincount(part_label[1:])
    return [int(v) for v in np.flatnonzero(parts_per_label > 1)]


def load_label_mask(
    path: Path | str,
    channel: Channel,
    scale: PixelScale,
    strict_labels: bool = False,
) -> LabelMask:
    """Load one channel mask from a PNG or NPY file.

    Binary files (value set within {0, 1}) get 8-connected component labels
    1..K assigned in scan order.  Already-labeled files pass labels through
    unchanged.  With ``strict_labels`` a label whose pixels form several
    disconnected components is rejected; by default it is accepted and
    treated as one subject.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".npy":
        raw = _read_npy(path)
    elif suffix == ".png":
        raw = _read_png(path)
    else:
        raise MaskFormatError(f"{path}: unsupported mask format {suffix!r} (use .png or .npy)")
    if raw.min() < 0:
        raise MaskFormatError(f"{path}: mask contains negative label values")
    if raw.max() <= 1:
        labels = label_components(raw)
    else:
        labels = np.ascontiguousarray(raw, dtype=np.int32)
        if strict_labels:
            split = _single_component_labels(labels)
            if split:
                raise MaskFormatError(
                    f"{path}: labels split into multiple components in strict mode: {split}")
    return LabelMask(labels=labels, channel=channel, scale=scale)


@dataclass(frozen=True)
class ImageEntry:
    """One image of a group: both channel masks plus optional raw channels."""

    image_id: str
    cyto_path: Path
    nuclei_path: Path
    raw_fitc: Optional[Path] = None
    raw_dapi: Optional[Path] = None


@dataclass(frozen=True)
class BatchPlan:
    """Deterministic processing plan: groups and their image entries."""

    groups: tuple[tuple[str, tuple[ImageEntry, ...]], ...]
    warnings: tuple[str, ...] = ()

    @property
    def n_images(self) -> int:
        return sum(len(entries) for _, entries in self.groups)

    def iter_entries(self) -> Iterable[tuple[str, ImageEntry]]:
        for group, entries in self.groups:
            for entry in entries:
                yield group, entry


_MASK_SUFFIXES = (".png", ".npy")


def _collect_channel(files: Sequence[Path], suffix: str) -> dict[str, list[Path]]:
    found: dict[str, list[Path]] = {}
    for f in files:
        stem = f.stem
        if stem.endswith(suffix) and len(stem) > len(suffix):
            found.setdefault(stem[: -len(suffix)], []).append(f)
    return found


def discover_dataset(
    root: Path | str,
    suffix_cyto: str = "_cyto",
    suffix_nuclei: str = "_nuclei",
) -> BatchPlan:
    """Walk ``root`` and build a plan: one sub-directory per group, mask pairs
    matched inside each group by shared stem plus channel suffix.

    Groups and images are ordered lexicographically.  Images missing either
    channel are excluded and reported in the plan warnings; an empty root
    yields an empty plan with a warning rather than an error.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataRootError(f"dataset root {root} does not exist or is not a directory")
    warnings: list[str] = []
    groups: list[tuple[str, tuple[ImageEntry, ...]]] = []
    group_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: d.name)
    if not group_dirs:
        warnings.append(f"no group directories found under {root}")
    for gdir in group_dirs:
        files = sorted(p for p in gdir.iterdir()
                       if p.is_file() and p.suffix.lower() in _MASK_SUFFIXES)
        cyto = _collect_channel(files, suffix_cyto)
        nuclei = _collect_channel(files, suffix_nuclei)
        raws = sorted(p for p in gdir.iterdir() if p.is_file() and p.suffix.lower() == ".png")
        raw_fitc = _collect_channel(raws, "_fitc")
        raw_dapi = _collect_channel(raws, "_dapi")
        entries = []
        for image_id in sorted(set(cyto) | set(nuclei)):
            have_c = cyto.get(image_id, [])
            have_n = nuclei.get(image_id, [])
            if not have_c or not have_n:
                missing = "cytoplasm" if not have_c else "nuclei"
                warnings.append(f"{gdir.name}/{image_id}: missing {missing} mask, excluded")
                continue
            if len(have_c) > 1 or len(have_n) > 1:
                warnings.append(f"{gdir.name}/{image_id}: multiple mask candidates, "
                                f"using first by name")
            entries.append(ImageEntry(
                image_id=image_id,
                cyto_path=have_c[0],
                nuclei_path=have_n[0],
                raw_fitc=raw_fitc.get(image_id, [None])[0],
                raw_dapi=raw_dapi.get(image_id, [None])[0],
            ))
        if entries:
            groups.append((gdir.name, tuple(entries)))
        else:
            warnings.append(f"group {gdir.name}: no complete mask pairs, excluded")
    return BatchPlan(groups=tuple(groups), warnings=tuple(warnings))
