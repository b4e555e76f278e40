"""Shared helpers and fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from cellmorph import Channel, LabelMask, PixelScale


def make_mask(array, channel=Channel.CYTOPLASM, pitch=1.0) -> LabelMask:
    return LabelMask(labels=np.asarray(array, dtype=np.int32),
                     channel=channel, scale=PixelScale(pitch))


def disk_array(radius: int, pad: int = 3) -> np.ndarray:
    """Rasterized disk: pixels whose centers are within the radius."""
    n = 2 * radius + 2 * pad
    yy, xx = np.mgrid[0:n, 0:n]
    c = n / 2
    return (((xx - c) ** 2 + (yy - c) ** 2) <= radius * radius).astype(np.int32)


def random_blob_mask(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Random binary content: noise, disks or bars, all adversarial shapes."""
    kind = int(rng.integers(0, 3))
    mask = np.zeros((height, width), dtype=np.int32)
    if kind == 0:
        mask[:] = rng.random((height, width)) < rng.uniform(0.25, 0.5)
    elif kind == 1:
        yy, xx = np.mgrid[0:height, 0:width]
        for _ in range(int(rng.integers(1, 5))):
            cx = rng.uniform(0, width)
            cy = rng.uniform(0, height)
            r = rng.uniform(1.0, max(2.0, min(width, height) / 3))
            mask[((xx - cx) ** 2 + (yy - cy) ** 2) <= r * r] = 1
    else:
        for _ in range(int(rng.integers(1, 6))):
            y0 = int(rng.integers(0, height))
            x0 = int(rng.integers(0, width))
            y1 = min(height, y0 + int(rng.integers(1, height)))
            x1 = min(width, x0 + int(rng.integers(1, 8)))
            mask[y0:y1, x0:x1] = 1
    return mask


def cell_pair_arrays(rng: np.random.Generator, height: int = 96, width: int = 128,
                     rows: int = 3, cols: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Labeled cytoplasm/nuclei arrays with one nucleus centered per cell."""
    cells = np.zeros((height, width), dtype=np.int32)
    nucs = np.zeros((height, width), dtype=np.int32)
    yy, xx = np.mgrid[0:height, 0:width]
    ch, cw = height // rows, width // cols
    label = 0
    for j in range(rows):
        for i in range(cols):
            label += 1
            cx = i * cw + cw / 2 + rng.uniform(-2, 2)
            cy = j * ch + ch / 2 + rng.uniform(-2, 2)
            rx, ry = cw * 0.40, ch * 0.40
            cells[((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1] = label
            nucs[((xx - cx) / (rx * 0.45)) ** 2 + ((yy - cy) / (ry * 0.45)) ** 2 <= 1] = label
    return cells, nucs


def write_png(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.max() > 255:
        Image.fromarray(arr.astype(np.uint16)).save(path)
    else:
        Image.fromarray(arr.astype(np.uint8)).save(path)


def build_dataset(root, groups=("film_a", "film_b"), images_per_group=3,
                  seed: int = 11) -> None:
    """Synthetic two-channel dataset in the discoverable folder layout."""
    rng = np.random.default_rng(seed)
    for group in groups:
        gdir = root / group
        gdir.mkdir(parents=True, exist_ok=True)
        for idx in range(images_per_group):
            cells, nucs = cell_pair_arrays(rng)
            write_png(gdir / f"img{idx:02d}_cyto.png", cells)
            write_png(gdir / f"img{idx:02d}_nuclei.png", nucs)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
