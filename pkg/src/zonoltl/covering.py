"""Workspace covering by overlapping zonotope cells.

A cover is built on a 2-D plane of the state space from user-supplied cell
centers and links between them.  Each center's linked neighbors define the
cell's generators (half the center difference), so linked cells touch and
overlap once expanded.  Residual area not covered by any zonotope cell is
filled with triangle-shaped constrained zonotopes obtained by ear-clipping
the residual polygons.  Finally every cell is expanded by the overlap
factor and, when the full state space has extra axes, lifted by appending
one full-range generator per remaining axis.
"""

from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LineString, Polygon, box as shapely_box
from shapely.ops import split as shapely_split, unary_union

from . import geometry as geo
from .geometry import (ConstrainedZonotope, Zonotope, from_vertices_2d,
                       to_vertices_2d)


@dataclass
class CoverConfig:
    """Inputs of the covering construction.

    Attributes:
        lo, hi: corners of the rectangular working region (full dimension).
        centers: (N, 2) cell centers on the covering plane.
        links: list of per-center neighbor index lists; each center needs
            at least 2 links spanning the plane.
        eps: expansion factor applied to every cell.
        plane_dims: the two state-space axes the cover lives on.
        lift_halfwidths: optional dict axis -> halfwidth for lifted axes
            (defaults to the working-region halfwidth of that axis).
    """
    lo: np.ndarray
    hi: np.ndarray
    centers: np.ndarray
    links: list
    eps: float
    plane_dims: tuple = (0, 1)
    lift_halfwidths: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        self.centers = np.asarray(self.centers, dtype=float)
        if self.centers.ndim != 2 or self.centers.shape[1] != 2:
            raise ValueError("centers must be (N, 2)")
        if len(self.links) != len(self.centers):
            raise ValueError("one link list per center required")
        if self.eps <= 0:
            raise ValueError("expansion factor must be positive")
        if len(self.centers) <= 2:
            raise ValueError("need more centers than plane dimensions")


@dataclass
class Cell:
    """One covering cell.

    Attributes:
        name: label (v1, v2, ... in center/triangle order).
        region: expanded plane set (Zonotope or ConstrainedZonotope).
        base: the un-expanded plane set.
        kind: "zonotope" | "gap".
        links: indices of linked cells (generator-defining neighbors).
    """
    name: str
    region: object
    base: object
    kind: str
    links: list = field(default_factory=list)

    def __repr__(self):
        return "Cell(%s, %s)" % (self.name, self.kind)


@dataclass
class Cover:
    config: CoverConfig
    cells: list

    @property
    def n_zonotope(self):
        return sum(1 for c in self.cells if c.kind == "zonotope")

    @property
    def n_gap(self):
        return sum(1 for c in self.cells if c.kind == "gap")

    def cell(self, name):
        for c in self.cells:
            if c.name == name:
                return c
        raise KeyError(name)

    def plane_box(self):
        d0, d1 = self.config.plane_dims
        return (np.array([self.config.lo[d0], self.config.lo[d1]]),
                np.array([self.config.hi[d0], self.config.hi[d1]]))

    def lifted_region(self, cell):
        """Cell region lifted to the full state dimension."""
        cfg = self.config
        n = len(cfg.lo)
        d0, d1 = cfg.plane_dims
        rest = [i for i in range(n) if i not in (d0, d1)]
        s = cell.region
        c = np.zeros(n)
        c[d0], c[d1] = s.c
        G_new_rows = np.zeros((n, s.G.shape[1] + len(rest)))
        G_new_rows[d0, :s.G.shape[1]] = s.G[0]
        G_new_rows[d1, :s.G.shape[1]] = s.G[1]
        for j, ax in enumerate(rest):
            mid = 0.5 * (cfg.lo[ax] + cfg.hi[ax])
            hw = cfg.lift_halfwidths.get(
                ax, 0.5 * (cfg.hi[ax] - cfg.lo[ax]))
            c[ax] = mid
            G_new_rows[ax, s.G.shape[1] + j] = hw
        if isinstance(s, ConstrainedZonotope):
            A = np.hstack([s.A, np.zeros((s.n_con, len(rest)))])
            return ConstrainedZonotope(c, G_new_rows, A, s.b)
        return Zonotope(c, G_new_rows)


def generate_zonotopes(config):
    """Zonotope cells from centers and links: Z_i = {c_i + 0.5 G_i xi}.

    G_i columns are the differences to the linked neighbor centers; every
    cell must obtain a full-rank plane generator set.
    """
    cells = []
    for i, (c, lk) in enumerate(zip(config.centers, config.links)):
        if len(lk) < 2:
            raise ValueError("center %d needs at least 2 links" % i)
        cols = []
        for j in lk:
            if j == i:
                raise ValueError("center %d links to itself" % i)
            cols.append(config.centers[j] - c)
        G = np.array(cols, dtype=float).T
        if np.linalg.matrix_rank(G, tol=1e-9) < 2:
            raise ValueError("links of center %d do not span the plane" % i)
        cells.append(Zonotope(c, 0.5 * G))
    return cells


def _poly_of(setobj):
    verts = to_vertices_2d(setobj)
    if len(verts) < 3:
        return None
    return Polygon(verts)


def _ear_clip(ring):
    """Triangulate a simple polygon (CCW vertex ring) by ear clipping."""
    pts = [np.asarray(p, float) for p in ring]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    # ensure CCW
    area = sum(cross(pts[0], pts[i], pts[i + 1])
               for i in range(1, len(pts) - 1))
    if area < 0:
        pts = pts[::-1]
    tris = []
    idx = list(range(len(pts)))
    guard = 0
    while len(idx) > 3 and guard < 10000:
        guard += 1
        n = len(idx)
        ear_found = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, c = pts[i0], pts[i1], pts[i2]
            if cross(a, b, c) <= 1e-12:
                continue  # reflex or degenerate corner
            # no other vertex inside the candidate ear
            ok = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = pts[j]
                if (cross(a, b, p) >= -1e-12 and cross(b, c, p) >= -1e-12
                        and cross(c, a, p) >= -1e-12):
                    ok = False
                    break
            if ok:
                tris.append((a, b, c))
                idx.pop(k)
                ear_found = True
                break
        if not ear_found:
            break
    if len(idx) == 3:
        tris.append(tuple(pts[i] for i in idx))
    return tris


def fill_gaps(config, zono_cells, min_area=1e-8):
    """Triangle constrained zonotopes covering the residual area.

    The residual is the working rectangle minus the union of the zonotope
    cells; each residual polygon is ear-clipped and every triangle becomes
    one constrained zonotope (Eq.-9 style: no overlap with cell interiors
    beyond tolerance).
    """
    d0, d1 = config.plane_dims
    rect = shapely_box(config.lo[d0], config.lo[d1],
                       config.hi[d0], config.hi[d1])
    polys = [_poly_of(z) for z in zono_cells]
    union = unary_union([p for p in polys if p is not None])
    residual = rect.difference(union)
    pieces = []
    if residual.is_empty:
        return pieces
    geoms = (residual.geoms if residual.geom_type == "MultiPolygon"
             else [residual])
    simple = []
    stack = list(geoms)
    guard = 0
    while stack and guard < 1000:
        guard += 1
        gpoly = stack.pop()
        if gpoly.area <= min_area:
            continue
        if not list(gpoly.interiors):
            simple.append(gpoly)
            continue
        # cut through the first hole so each piece loses it
        hx = gpoly.interiors[0].centroid.x
        ylo, yhi = gpoly.bounds[1] - 1.0, gpoly.bounds[3] + 1.0
        cut = LineString([(hx, ylo), (hx, yhi)])
        for piece in shapely_split(gpoly, cut).geoms:
            if piece.geom_type == "Polygon":
                stack.append(piece)
    for gpoly in simple:
        ring = list(gpoly.exterior.coords)[:-1]
        for tri in _ear_clip(ring):
            a, b, c = tri
            area = abs((b[0] - a[0]) * (c[1] - a[1])
                       - (b[1] - a[1]) * (c[0] - a[0])) / 2.0
            if area <= min_area:
                continue
            pieces.append(from_vertices_2d(np.array([a, b, c])))
    return pieces


def expand_cells(cells, eps):
    return [geo.expand(c, eps) for c in cells]


def build_cover(config):
    """Full covering construction: zonotopes, gap fill, expansion, labels."""
    zonos = generate_zonotopes(config)
    gaps = fill_gaps(config, zonos)
    cells = []
    for i, z in enumerate(zonos):
        cells.append(Cell("v%d" % (i + 1), geo.expand(z, config.eps), z,
                          "zonotope", list(config.links[i])))
    off = len(zonos)
    for j, g in enumerate(gaps):
        cells.append(Cell("v%d" % (off + j + 1), geo.expand(g, config.eps),
                          g, "gap"))
    return Cover(config, cells)


def coverage_fraction(cover, n_samples=10000, seed=0):
    """Fraction of uniform plane samples lying in at least one cell."""
    rng = np.random.default_rng(seed)
    lo, hi = cover.plane_box()
    pts = rng.uniform(lo, hi, size=(n_samples, 2))
    hit = np.zeros(n_samples, dtype=bool)
    for cell in cover.cells:
        hit |= geo.contains_points_2d(cell.region, pts)
        if np.all(hit):
            break
    return float(np.mean(hit))
