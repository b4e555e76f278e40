"""Bounded Voronoi tessellation and the spatial-order metrics built on it.

Seeds (nucleus centroids) are triangulated with an incremental Bowyer-Watson
Delaunay construction on coordinates normalized to the unit square, then each
Voronoi cell is obtained by intersecting half-planes of the perpendicular
bisectors toward its Delaunay neighbors and clipping to the image rectangle.

Two order metrics are derived:

* Voronoi entropy: Shannon entropy (natural log) of the distribution of
  polygon edge counts over interior cells - cells whose unclipped region is
  bounded and does not touch the rectangle.  Boundary cells have incomplete
  neighborhoods and are excluded.
* Continuous symmetry measure (CSM): for each polygon, the normalized mean
  squared distance between its vertices and those of the best-fitting regular
  n-gon of equal area and equal centroid, sum |M_i - M^_i|^2 / (n * S) with S
  the reference area.  Zero for a regular polygon, growing with distortion.

Near-degenerate (cocircular) seed sets are disambiguated by a deterministic
index-based perturbation of magnitude 1e-12 applied only to the triangulation
step; cell geometry always uses the exact seed coordinates.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .errors import GeometryError

_JITTER = 1e-12
_CLIP_TOL = 1e-12     # half-plane inclusion tolerance, normalized units
# Vertex merge tolerance: must sit well above the tie-breaking jitter (so
# degenerate cocircular corners collapse back to one vertex) and well below
# half the smallest legal seed separation of 1e-9, or a sliver cell could
# lose its own seed.
_DEDUP_TOL = 1e-10
_INCIRCLE_REL = 1e-12
_BIG_MARGIN = 4.0     # half-plane start box, in normalized rectangle sizes

#: Below this many interior polygons, entropy/CSM are low-confidence.
MIN_CONFIDENT_INTERIOR = 10


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, typically the physical image frame in um."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise GeometryError(f"empty rectangle {self}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Tessellation:
    """Bounded Voronoi diagram of a set of seed points."""

    seeds: tuple[tuple[float, float], ...]
    polygons: tuple[tuple[tuple[float, float], ...], ...]
    neighbor_counts: tuple[int, ...]
    interior_flags: tuple[bool, ...]
    bounds: Rect

    @property
    def n_interior(self) -> int:
        return sum(self.interior_flags)

    def interior_polygons(self) -> list[tuple[tuple[float, float], ...]]:
        return [poly for poly, interior in zip(self.polygons, self.interior_flags)
                if interior]


def polygon_area(vertices: Sequence[tuple[float, float]]) -> float:
    """Signed shoelace area; positive for counterclockwise order.

    Computed relative to the first vertex so that small polygons far from
    the origin do not lose precision to cancellation.
    """
    total = 0.0
    n = len(vertices)
    ox, oy = vertices[0]
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        total += (x0 - ox) * (y1 - oy) - (x1 - ox) * (y0 - oy)
    return 0.5 * total


def point_in_polygon(point: tuple[float, float],
                     vertices: Sequence[tuple[float, float]]) -> bool:
    """Strict containment test for a convex CCW polygon."""
    px, py = point
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        if (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) <= 0.0:
            return False
    return True


# ---------------------------------------------------------------------------
# Delaunay triangulation (incremental Bowyer-Watson)
# ---------------------------------------------------------------------------

class _Delaunay:
    """Bowyer-Watson over points inside the unit square, plus a super-triangle.

    Triangles are kept as a dict tid -> (a, b, c) in CCW order along with the
    circumcircle of each; edges map a sorted vertex pair to the one or two
    incident triangle ids.  Iteration orders are made deterministic by sorted
    traversal wherever a set is expanded.
    """

    _SUPER_SCALE = 1024.0

    def __init__(self, points: Sequence[tuple[float, float]]):
        k = self._SUPER_SCALE
        self.n_real = len(points)
        self.pts: list[tuple[float, float]] = list(points)
        self.pts += [(0.5, 0.5 + 2.0 * k), (0.5 - 2.0 * k, 0.5 - k), (0.5 + 2.0 * k, 0.5 - k)]
        self.tris: dict[int, tuple[int, int, int]] = {}
        self.circ: dict[int, tuple[float, float, float]] = {}
        self.edges: dict[tuple[int, int], list[int]] = {}
        self._next_tid = 0
        self._last_tid = self._add_triangle(self.n_real, self.n_real + 1, self.n_real + 2)
        order = sorted(range(self.n_real), key=lambda i: (self._morton(points[i]), i))
        for i in order:
            self._insert(i)

    @staticmethod
    def _morton(p: tuple[float, float]) -> int:
        # Z-order key: spatially sorted insertion keeps the locate walk short.
        xi = min(1023, max(0, int(p[0] * 1024.0)))
        yi = min(1023, max(0, int(p[1] * 1024.0)))
        key = 0
        for bit in range(10):
            key |= ((xi >> bit) & 1) << (2 * bit + 1)
            key |= ((yi >> bit) & 1) << (2 * bit)
        return key

    def _add_triangle(self, a: int, b: int, c: int) -> int:
        ax, ay = self.pts[a]
        bx, by = self.pts[b]
        cx, cy = self.pts[c]
        orient = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if orient < 0.0:
            b, c = c, b
            bx, by, cx, cy = cx, cy, bx, by
            orient = -orient
        if orient == 0.0:
            raise GeometryError("degenerate (collinear) triangle in triangulation")
        d = 2.0 * ((ax * (by - cy)) + (bx * (cy - ay)) + (cx * (ay - by)))
        ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
              + (cx * cx + cy * cy) * (ay - by)) / d
        uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
              + (cx * cx + cy * cy) * (bx - ax)) / d
        r2 = (ax - ux) * (ax - ux) + (ay - uy) * (ay - uy)
        tid = self._next_tid
        self._next_tid += 1
        self.tris[tid] = (a, b, c)
        self.circ[tid] = (ux, uy, r2)
        for u, v in ((a, b), (b, c), (c, a)):
            self.edges.setdefault((u, v) if u < v else (v, u), []).append(tid)
        return tid

    def _remove_triangle(self, tid: int) -> None:
        a, b, c = self.tris.pop(tid)
        self.circ.pop(tid)
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            incident = self.edges[key]
            incident.remove(tid)
            if not incident:
                del self.edges[key]

    def _neighbor(self, tid: int, u: int, v: int) -> Optional[int]:
        key = (u, v) if u < v else (v, u)
        for other in self.edges.get(key, ()):
            if other != tid:
                return other
        return None

    def _in_circumcircle(self, tid: int, p: tuple[float, float]) -> bool:
        ux, uy, r2 = self.circ[tid]
        d2 = (p[0] - ux) * (p[0] - ux) + (p[1] - uy) * (p[1] - uy)
        return d2 < r2 - _INCIRCLE_REL * max(r2, 1.0)

    def _locate(self, p: tuple[float, float]) -> int:
        tid = self._last_tid
        steps = 0
        limit = 4 * len(self.tris) + 64
        while True:
            a, b, c = self.tris[tid]
            moved = False
            for u, v in ((a, b), (b, c), (c, a)):
                ux_, uy_ = self.pts[u]
                vx_, vy_ = self.pts[v]
                if (vx_ - ux_) * (p[1] - uy_) - (vy_ - uy_) * (p[0] - ux_) < 0.0:
                    nb = self._neighbor(tid, u, v)
                    if nb is not None:
                        tid = nb
                        moved = True
                        break
            if not moved:
                return tid
            steps += 1
            if steps > limit:
                return self._locate_scan(p)

    def _locate_scan(self, p: tuple[float, float]) -> int:
        for tid in sorted(self.tris):
            if self._in_circumcircle(tid, p):
                return tid
        raise GeometryError("point location failed")  # pragma: no cover

    def _insert(self, i: int) -> None:
        p = self.pts[i]
        start = self._locate(p)
        if not self._in_circumcircle(start, p):
            start = self._locate_scan(p)
        cavity = {start}
        stack = [start]
        while stack:
            tid = stack.pop()
            a, b, c = self.tris[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = self._neighbor(tid, u, v)
                if nb is not None and nb not in cavity and self._in_circumcircle(nb, p):
                    cavity.add(nb)
                    stack.append(nb)
        boundary: list[tuple[int, int]] = []
        for tid in sorted(cavity):
            a, b, c = self.tris[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = self._neighbor(tid, u, v)
                if nb is None or nb not in cavity:
                    boundary.append((u, v))
        cavity_vertices = {v for tid in cavity for v in self.tris[tid]}
        rim_vertices = {v for edge in boundary for v in edge}
        if cavity_vertices - rim_vertices:
            raise GeometryError(
                "numerically inconsistent insertion cavity; seeds too degenerate")
        for tid in sorted(cavity):
            self._remove_triangle(tid)
        for u, v in boundary:
            self._last_tid = self._add_triangle(i, u, v)

    def real_triangles(self) -> list[tuple[int, int, int]]:
        """Triangles whose vertices are all input points (no super vertices)."""
        return [tri for _, tri in sorted(self.tris.items())
                if max(tri) < self.n_real]

    def neighbor_sets(self) -> list[set[int]]:
        """Delaunay adjacency between input points (hull edges included)."""
        nbrs: list[set[int]] = [set() for _ in range(self.n_real)]
        for (u, v) in self.edges:
            if u < self.n_real and v < self.n_real:
                nbrs[u].add(v)
                nbrs[v].add(u)
        return nbrs


# ---------------------------------------------------------------------------
# Voronoi cells by half-plane clipping
# ---------------------------------------------------------------------------

_RECT_SRC = -1  # edge source marker for rectangle sides

_Poly = list[tuple[tuple[float, float], int]]  # (vertex, source of edge leaving it)


def _clip_halfplane(poly: _Poly, nx: float, ny: float, c: float, src: int) -> _Poly:
    """Sutherland-Hodgman step keeping points with nx*x + ny*y <= c.

    Each polygon element carries the id of the line holding the edge that
    starts at that vertex, so Voronoi neighbors stay identifiable after
    arbitrary clipping.
    """
    out: _Poly = []
    m = len(poly)
    for idx in range(m):
        (px, py), edge_src = poly[idx]
        (qx, qy), _ = poly[(idx + 1) % m]
        dp = nx * px + ny * py - c
        dq = nx * qx + ny * qy - c
        p_in = dp <= _CLIP_TOL
        q_in = dq <= _CLIP_TOL
        if p_in:
            out.append(((px, py), edge_src))
            if not q_in:
                t = dp / (dp - dq)
                out.append(((px + t * (qx - px), py + t * (qy - py)), src))
        elif q_in:
            t = dp / (dp - dq)
            out.append(((px + t * (qx - px), py + t * (qy - py)), edge_src))
    return out


def _cleanup(poly: _Poly) -> _Poly:
    """Drop duplicate vertices and merge collinear consecutive edges."""
    if len(poly) < 3:
        return poly
    # duplicate removal; a dropped zero-length edge passes its line id to the
    # vertex that absorbs it, so the surviving edge keeps the right source
    kept: _Poly = []
    for vertex, src in poly:
        if kept:
            (lx, ly), _ = kept[-1]
            if abs(vertex[0] - lx) <= _DEDUP_TOL and abs(vertex[1] - ly) <= _DEDUP_TOL:
                kept[-1] = (kept[-1][0], src)
                continue
        kept.append((vertex, src))
    if len(kept) >= 2:
        (fx, fy), _ = kept[0]
        (lx, ly), _ = kept[-1]
        if abs(fx - lx) <= _DEDUP_TOL and abs(fy - ly) <= _DEDUP_TOL:
            kept.pop()
    # collinear merge
    changed = True
    while changed and len(kept) > 3:
        changed = False
        for i in range(len(kept)):
            (ax, ay), _ = kept[i - 1]
            (bx, by), _ = kept[i]
            (cx, cy), _ = kept[(i + 1) % len(kept)]
            cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
            dot = (bx - ax) * (cx - bx) + (by - ay) * (cy - by)
            norm = math.hypot(bx - ax, by - ay) * math.hypot(cx - bx, cy - by)
            if norm > 0.0 and abs(cross) <= 1e-10 * norm and dot > 0.0:
                kept.pop(i)
                changed = True
                break
    return kept


def build_voronoi(seeds: Sequence[tuple[float, float]], bounds: Rect) -> Tessellation:
    """Voronoi diagram of ``seeds`` clipped to ``bounds``.

    Requires at least one seed, all seeds strictly inside the rectangle and
    pairwise farther apart than 1e-9 of the rectangle diagonal.  Output is
    deterministic for a fixed seed order; cell polygons are CCW and partition
    the rectangle.
    """
    n = len(seeds)
    if n == 0:
        raise GeometryError("at least one seed is required")
    for i, (x, y) in enumerate(seeds):
        if not (bounds.xmin < x < bounds.xmax and bounds.ymin < y < bounds.ymax):
            raise GeometryError(f"seed {i} at ({x}, {y}) is not strictly inside {bounds}")

    # duplicate rejection via a grid hash at the tolerance scale
    tol = 1e-9 * bounds.diagonal
    buckets: dict[tuple[int, int], list[int]] = {}
    for i, (x, y) in enumerate(seeds):
        bx, by = int(x / tol), int(y / tol)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for j in buckets.get((bx + dx, by + dy), ()):
                    ox, oy = seeds[j]
                    if math.hypot(x - ox, y - oy) < tol:
                        raise GeometryError(f"seeds {j} and {i} coincide within tolerance")
        buckets.setdefault((bx, by), []).append(i)

    scale = max(bounds.width, bounds.height)
    norm = [((x - bounds.xmin) / scale, (y - bounds.ymin) / scale) for x, y in seeds]
    rect_n = (bounds.width / scale, bounds.height / scale)

    if n == 1:
        poly = ((bounds.xmin, bounds.ymin), (bounds.xmax, bounds.ymin),
                (bounds.xmax, bounds.ymax), (bounds.xmin, bounds.ymax))
        return Tessellation(seeds=tuple((float(x), float(y)) for x, y in seeds),
                            polygons=(poly,), neighbor_counts=(0,),
                            interior_flags=(False,), bounds=bounds)

    # deterministic index-based perturbation breaks exact cocircular ties
    jittered = []
    for i, (x, y) in enumerate(norm):
        hx = ((i * 2654435761 + 1013904223) % 8191) / 8191.0 - 0.5
        hy = ((i * 1103515245 + 12345) % 8191) / 8191.0 - 0.5
        jittered.append((x + _JITTER * hx, y + _JITTER * hy))
    delaunay = _Delaunay(jittered)
    neighbor_sets = delaunay.neighbor_sets()

    big: _Poly = [
        ((-_BIG_MARGIN, -_BIG_MARGIN), _RECT_SRC),
        ((rect_n[0] + _BIG_MARGIN, -_BIG_MARGIN), _RECT_SRC),
        ((rect_n[0] + _BIG_MARGIN, rect_n[1] + _BIG_MARGIN), _RECT_SRC),
        ((-_BIG_MARGIN, rect_n[1] + _BIG_MARGIN), _RECT_SRC),
    ]
    rect_planes = (  # nx, ny, c for x >= 0, x <= w, y >= 0, y <= h
        (-1.0, 0.0, 0.0),
        (1.0, 0.0, rect_n[0]),
        (0.0, -1.0, 0.0),
        (0.0, 1.0, rect_n[1]),
    )

    polygons = []
    neighbor_counts = []
    interior_flags = []
    for i in range(n):
        px, py = norm[i]
        cell = list(big)
        for j in sorted(neighbor_sets[i]):
            qx, qy = norm[j]
            # midpoint-normal form with a unit normal: free of the
            # cancellation that the |q|^2 - |p|^2 form suffers for close
            # seed pairs, and the clip tolerance becomes a true distance
            dx_ = qx - px
            dy_ = qy - py
            length = math.hypot(dx_, dy_)
            nx = dx_ / length
            ny = dy_ / length
            c = 0.5 * ((px + qx) * nx + (py + qy) * ny)
            cell = _clip_halfplane(cell, nx, ny, c, j)
            if len(cell) < 3:  # pragma: no cover - cannot happen for valid input
                raise GeometryError(f"cell of seed {i} collapsed during clipping")
        cell = _cleanup(cell)
        interior = all(
            _DEDUP_TOL < vx < rect_n[0] - _DEDUP_TOL
            and _DEDUP_TOL < vy < rect_n[1] - _DEDUP_TOL
            for (vx, vy), _ in cell)
        if not interior:
            for nx, ny, c in rect_planes:
                cell = _clip_halfplane(cell, nx, ny, c, _RECT_SRC)
            cell = _cleanup(cell)
        polygons.append(tuple(
            (vx * scale + bounds.xmin, vy * scale + bounds.ymin) for (vx, vy), _ in cell))
        neighbor_counts.append(len({src for _, src in cell if src >= 0}))
        interior_flags.append(interior)

    return Tessellation(
        seeds=tuple((float(x), float(y)) for x, y in seeds),
        polygons=tuple(polygons),
        neighbor_counts=tuple(neighbor_counts),
        interior_flags=tuple(interior_flags),
        bounds=bounds,
    )


# ---------------------------------------------------------------------------
# Voronoi entropy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassHistogram:
    """Distribution of Voronoi polygon edge-count classes."""

    counts: Mapping[int, int]

    @classmethod
    def from_counts(cls, counts: Mapping[int, int]) -> "ClassHistogram":
        return cls(counts=dict(sorted(counts.items())))

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def proportions(self) -> dict[int, float]:
        total = self.total
        return {k: v / total for k, v in self.counts.items()} if total else {}


def shannon_entropy(histogram: ClassHistogram) -> Optional[float]:
    """Shannon entropy in nats of the class distribution, None when empty."""
    props = histogram.proportions
    if not props:
        return None
    return -sum(p * math.log(p) for p in props.values()) + 0.0


def voronoi_entropy(tess: Tessellation) -> tuple[ClassHistogram, Optional[float]]:
    """Edge-count class histogram over interior polygons and its entropy.

    Returns (histogram, None) when the tessellation has no interior polygon:
    entropy is undefined there, not an error.
    """
    counts: dict[int, int] = {}
    for poly in tess.interior_polygons():
        k = len(poly)
        counts[k] = counts.get(k, 0) + 1
    histogram = ClassHistogram.from_counts(counts)
    return histogram, shannon_entropy(histogram)


# ---------------------------------------------------------------------------
# Continuous symmetry measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolygonSymmetry:
    """A polygon, its fitted regular reference and the symmetry deviation."""

    vertices: tuple[tuple[float, float], ...]
    reference_vertices: tuple[tuple[float, float], ...]
    n: int
    reference_area: float
    csm: float


def _golden_section(func, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Minimize a unimodal function on [lo, hi] to within ``tol``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = func(c), func(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = func(d)
    return 0.5 * (a + b)


def polygon_csm(vertices: Sequence[tuple[float, float]]) -> PolygonSymmetry:
    """Continuous symmetry measure of a simple polygon.

    The reference is the regular n-gon with the polygon's centroid and area,
    vertices matched in cyclic order, rotated to minimize the summed squared
    vertex distance (closed form from the first Fourier coefficient of the
    centered vertex sequence, refined by golden-section search).
    """
    n = len(vertices)
    if n < 3:
        raise GeometryError(f"polygon needs at least 3 vertices, got {n}")
    span = max(max(abs(x), abs(y)) for x, y in vertices) or 1.0
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        if abs(x1 - x0) <= 1e-12 * span and abs(y1 - y0) <= 1e-12 * span:
            raise GeometryError(f"repeated consecutive vertex at index {i}")
    signed = polygon_area(vertices)
    area = abs(signed)
    if area <= 1e-12 * span * span:
        raise GeometryError("degenerate polygon with (near-)zero area")

    # area centroid, evaluated in a frame anchored at the vertex mean so a
    # small polygon far from the origin keeps full precision
    mx = sum(x for x, _ in vertices) / n
    my = sum(y for _, y in vertices) / n
    local = [(x - mx, y - my) for x, y in vertices]
    sx = sy = 0.0
    for i in range(n):
        x0, y0 = local[i]
        x1, y1 = local[(i + 1) % n]
        w = x0 * y1 - x1 * y0
        sx += (x0 + x1) * w
        sy += (y0 + y1) * w
    cx = mx + sx / (6.0 * signed)
    cy = my + sy / (6.0 * signed)

    orientation = 1.0 if signed > 0 else -1.0
    centered = [complex(x - sx / (6.0 * signed), y - sy / (6.0 * signed))
                for x, y in local]
    radius = math.sqrt(2.0 * area / (n * math.sin(2.0 * math.pi / n)))
    step = 2.0 * math.pi / n * orientation

    first_coeff = sum(m * cmath.exp(-1j * step * k) for k, m in enumerate(centered))
    phi0 = cmath.phase(first_coeff) if first_coeff != 0 else 0.0

    def misfit(phi: float) -> float:
        total = 0.0
        for k, m in enumerate(centered):
            ref = radius * cmath.exp(1j * (phi + step * k))
            diff = m - ref
            total += diff.real * diff.real + diff.imag * diff.imag
        return total

    half = math.pi / n
    phi = _golden_section(misfit, phi0 - half, phi0 + half)
    reference = tuple(
        (cx + radius * math.cos(phi + step * k), cy + radius * math.sin(phi + step * k))
        for k in range(n))
    csm = misfit(phi) / (n * area)
    return PolygonSymmetry(
        vertices=tuple((float(x), float(y)) for x, y in vertices),
        reference_vertices=reference,
        n=n,
        reference_area=area,
        csm=csm,
    )


def image_csm(tess: Tessellation) -> Optional[float]:
    """Mean polygon CSM over interior cells; None without interior cells."""
    interior = tess.interior_polygons()
    if not interior:
        return None
    return sum(polygon_csm(poly).csm for poly in interior) / len(interior)
