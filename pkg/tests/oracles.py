"""Independent brute-force oracles used to verify the package.

Every function here deliberately avoids the algorithms used by the package
itself: labeling is a morphological flood to fixpoint, boundaries come from
an exterior background flood, the F CDF from adaptive Simpson quadrature of
the substituted beta integrand, and CSM from a dense rotation scan.
"""

from __future__ import annotations

import math

import numpy as np


def flood_fill_labels(binary: np.ndarray) -> np.ndarray:
    """8-connected labeling by per-component morphological flood fill."""
    fg = np.asarray(binary) != 0
    out = np.zeros(fg.shape, dtype=np.int32)
    remaining = fg.copy()
    label = 0
    while remaining.any():
        label += 1
        comp = np.zeros_like(fg)
        comp.flat[int(np.argmax(remaining))] = True  # first pixel in scan order
        while True:
            grown = comp.copy()
            grown[1:, :] |= comp[:-1, :]
            grown[:-1, :] |= comp[1:, :]
            grown[:, 1:] |= comp[:, :-1]
            grown[:, :-1] |= comp[:, 1:]
            grown[1:, 1:] |= comp[:-1, :-1]
            grown[1:, :-1] |= comp[:-1, 1:]
            grown[:-1, 1:] |= comp[1:, :-1]
            grown[:-1, :-1] |= comp[1:, 1:]
            grown &= fg
            if (grown == comp).all():
                break
            comp = grown
        out[comp] = label
        remaining &= ~comp
    return out


def outer_boundary_pixels(fg: np.ndarray) -> set[tuple[int, int]]:
    """Pixels of a foreground region 4-adjacent to the exterior background.

    The exterior is the 4-connected background region reachable from outside
    the frame, so hole boundaries are not included.  This is exactly the
    pixel set a Moore boundary walk visits: a walk hugs the cracks between
    the region and the exterior, and a pixel with only a diagonal exterior
    contact has no crack to follow.
    """
    fg = np.asarray(fg) != 0
    padded = np.pad(fg, 1)
    exterior = np.zeros_like(padded)
    exterior[0, :] = exterior[-1, :] = True
    exterior[:, 0] = exterior[:, -1] = True
    exterior &= ~padded
    while True:
        grown = exterior.copy()
        grown[1:, :] |= exterior[:-1, :]
        grown[:-1, :] |= exterior[1:, :]
        grown[:, 1:] |= exterior[:, :-1]
        grown[:, :-1] |= exterior[:, 1:]
        grown &= ~padded
        if (grown == exterior).all():
            break
        exterior = grown
    near_ext = np.zeros_like(padded)
    near_ext[1:, :] |= exterior[:-1, :]
    near_ext[:-1, :] |= exterior[1:, :]
    near_ext[:, 1:] |= exterior[:, :-1]
    near_ext[:, :-1] |= exterior[:, 1:]
    boundary = padded & near_ext
    ys, xs = np.nonzero(boundary[1:-1, 1:-1])
    return {(int(x), int(y)) for x, y in zip(xs, ys)}


def overlap_counts(cells: np.ndarray, nuclei: np.ndarray) -> dict[tuple[int, int], int]:
    """Per-pixel (nucleus, cell) intersection counts, plain Python loop."""
    counts: dict[tuple[int, int], int] = {}
    h, w = cells.shape
    for y in range(h):
        crow = cells[y]
        nrow = nuclei[y]
        for x in range(w):
            c = int(crow[x])
            nv = int(nrow[x])
            if c > 0 and nv > 0:
                counts[(nv, c)] = counts.get((nv, c), 0) + 1
    return counts


def shoelace_area(points) -> float:
    total = 0.0
    n = len(points)
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return 0.5 * total


def adaptive_simpson(func, a: float, b: float, tol: float = 1e-11,
                     max_depth: int = 60) -> float:
    """Classic recursive adaptive Simpson quadrature."""

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, eps, depth):
        x1 = 0.5 * (x0 + x2)
        lm = 0.5 * (x0 + x1)
        rm = 0.5 * (x1 + x2)
        flm, frm = func(lm), func(rm)
        left = simpson(x0, x1, f0, flm, f1)
        right = simpson(x1, x2, f1, frm, f2)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (recurse(x0, x1, f0, flm, f1, left, eps / 2.0, depth + 1)
                + recurse(x1, x2, f1, frm, f2, right, eps / 2.0, depth + 1))

    mid = 0.5 * (a + b)
    fa, fm, fb = func(a), func(mid), func(b)
    return recurse(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 0)


def _panel_simpson(func, a: float, b: float, panels: int = 16,
                   tol: float = 1e-12) -> float:
    """Adaptive Simpson over equal panels; the split keeps sharply peaked
    integrands from fooling the initial coarse error estimate."""
    edges = [a + (b - a) * i / panels for i in range(panels + 1)]
    return sum(adaptive_simpson(func, lo, hi, tol)
               for lo, hi in zip(edges[:-1], edges[1:]))


def f_cdf_quadrature(x: float, d1: int, d2: int) -> float:
    """F CDF by quadrature of the beta integrand with singularity-removing
    substitutions (z = u^2 near 0 and 1 - z = v^2 near 1)."""
    if x <= 0:
        return 0.0
    a = d1 / 2.0
    b = d2 / 2.0
    z = d1 * x / (d1 * x + d2)
    norm = math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))

    # the normalization stays inside the integrand so the quadrature
    # tolerance is measured on the scale of the final probability
    if z <= 0.5:
        def integrand(u: float) -> float:
            if u == 0.0:
                return 0.0 if 2 * a - 1 > 0 else (2.0 * norm if 2 * a == 1 else math.inf)
            return norm * 2.0 * u ** (2 * a - 1) * (1.0 - u * u) ** (b - 1.0)
        return _panel_simpson(integrand, 0.0, math.sqrt(z))

    def integrand(v: float) -> float:
        if v == 0.0:
            return 0.0 if 2 * b - 1 > 0 else (2.0 * norm if 2 * b == 1 else math.inf)
        return norm * 2.0 * v ** (2 * b - 1) * (1.0 - v * v) ** (a - 1.0)
    return 1.0 - _panel_simpson(integrand, 0.0, math.sqrt(1.0 - z))


def pooled_t_statistic(sample_a, sample_b) -> float:
    """Two-sample equal-variance t statistic."""
    na, nb = len(sample_a), len(sample_b)
    ma = sum(sample_a) / na
    mb = sum(sample_b) / nb
    ssa = sum((v - ma) ** 2 for v in sample_a)
    ssb = sum((v - mb) ** 2 for v in sample_b)
    sp2 = (ssa + ssb) / (na + nb - 2)
    return (ma - mb) / math.sqrt(sp2 * (1.0 / na + 1.0 / nb))


def mean_std_direct(values) -> tuple[float, float]:
    """Direct-formula mean and (n-1)-denominator standard deviation."""
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


def nearest_seed_raster(seeds, xmin, ymin, xmax, ymax, nx, ny) -> np.ndarray:
    """Assign a raster of sample points to their nearest seed (index grid)."""
    xs = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
    ys = ymin + (np.arange(ny) + 0.5) * (ymax - ymin) / ny
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    sarr = np.asarray(seeds, dtype=float)
    d2 = ((pts[:, None, :] - sarr[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1).reshape(ny, nx)


def raster_neighbor_sets(assign: np.ndarray) -> list[set[int]]:
    """Adjacency between rasterized Voronoi regions (4-neighbor contacts)."""
    n = int(assign.max()) + 1
    nbrs: list[set[int]] = [set() for _ in range(n)]
    horizontal = assign[:, :-1] != assign[:, 1:]
    for y, x in zip(*np.nonzero(horizontal)):
        a, b = int(assign[y, x]), int(assign[y, x + 1])
        nbrs[a].add(b)
        nbrs[b].add(a)
    vertical = assign[:-1, :] != assign[1:, :]
    for y, x in zip(*np.nonzero(vertical)):
        a, b = int(assign[y, x]), int(assign[y + 1, x])
        nbrs[a].add(b)
        nbrs[b].add(a)
    return nbrs


def brute_force_csm(vertices, step: float = 1e-4) -> float:
    """CSM by dense rotation scan of the equal-area regular reference."""
    n = len(vertices)
    signed = shoelace_area(vertices)
    area = abs(signed)
    sgn = 1.0 if signed > 0 else -1.0
    sx = sy = 0.0
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        w = x0 * y1 - x1 * y0
        sx += (x0 + x1) * w
        sy += (y0 + y1) * w
    cx = sx / (6.0 * signed)
    cy = sy / (6.0 * signed)
    rho = math.sqrt(2.0 * area / (n * math.sin(2.0 * math.pi / n)))
    best = math.inf
    phi = 0.0
    while phi < 2.0 * math.pi:
        total = 0.0
        for k, (x, y) in enumerate(vertices):
            rx = cx + rho * math.cos(phi + sgn * 2.0 * math.pi * k / n)
            ry = cy + rho * math.sin(phi + sgn * 2.0 * math.pi * k / n)
            total += (x - rx) ** 2 + (y - ry) ** 2
        if total < best:
            best = total
        phi += step
    return best / (n * area)
