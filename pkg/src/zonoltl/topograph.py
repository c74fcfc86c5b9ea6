"""Obstacle-aware cell adjacency graph and accepting-path realization.

Cells of a cover become graph vertices; two cells share an edge when their
overlap is admissible: the overlap is non-empty and removing its obstructed
part does not disconnect the union of the two cells.  Connectivity is
decided on an occupancy grid (flood fill) at resolution delta, with a
delta/2 stability re-check.  Proposition regions are added as extra
vertices, an accepting path of propositions is contracted into a robust
path, and the verifier searches for a cell path embedding it, checking per
cell that the free interior connects the entry and exit overlap regions
(with a witness sub-region when the whole cell is not connected).
"""

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import geometry as geo
from .geometry import FreeRegion, contains_points_2d, _points_in_any
from .ltlspec import AcceptingPath


class RealizationError(ValueError):
    pass


class Obstacles:
    """Obstacle set as plane constrained zonotopes with an expansion cache."""

    def __init__(self, regions):
        self.regions = [r.to_constrained() if hasattr(r, "to_constrained")
                        else r for r in regions]
        self._cache = {}

    def expanded(self, eps):
        if eps < 0:
            raise ValueError("expansion parameter must be >= 0")
        if eps not in self._cache:
            self._cache[eps] = [geo.expand(r, eps) for r in self.regions]
        return self._cache[eps]

    def __len__(self):
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)




def _grid_axes(lo, hi, delta):
    xs = np.arange(lo[0], hi[0] + 0.5 * delta, delta)
    ys = np.arange(lo[1], hi[1] + 0.5 * delta, delta)
    return xs, ys


def _mask_components(mask):
    lbl, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    return lbl, n


def _union_minus_blocked_connected(r1, r2, overlap, obstacles, delta):
    """True iff (r1 ∪ r2) \\ (overlap ∩ O) is grid-connected."""
    lo1, hi1 = r1.bounding_box()
    lo2, hi2 = r2.bounding_box()
    lo = np.minimum(lo1, lo2)
    hi = np.maximum(hi1, hi2)

    def decide(d):
        xs, ys = _grid_axes(lo, hi, d)
        XX, YY = np.meshgrid(xs, ys)
        pts = np.column_stack([XX.ravel(), YY.ravel()])
        in_union = (contains_points_2d(r1, pts)
                    | contains_points_2d(r2, pts))
        blocked = contains_points_2d(overlap, pts)
        if obstacles:
            blocked &= _points_in_any(obstacles, pts)
        else:
            blocked &= False
        mask = (in_union & ~blocked).reshape(XX.shape)
        _, n = _mask_components(mask)
        return n == 1

    coarse = decide(delta)
    fine = decide(0.5 * delta)
    return fine if coarse != fine else coarse


@dataclass
class ConnectivityResult:
    """Outcome of a per-cell free-space connectivity check.

    status is "ii-a" when the whole free cell is one component touching
    every required region, "ii-b" when a single component (the witness)
    touches all of them, and "fail" otherwise.
    """
    status: str
    witness_points: np.ndarray = None
    witness_box: object = None
    stable: bool = True
    n_components: int = 0


def check_cell_connectivity(cell_region, obstacles, required_regions,
                            delta):
    """Classify a cell: fully connected, connected-through-witness, or fail.

    required_regions are plane sets (overlap/handoff regions) that a single
    free component of the cell must touch.
    """
    lo, hi = cell_region.bounding_box()

    def classify(d):
        xs, ys = _grid_axes(lo, hi, d)
        XX, YY = np.meshgrid(xs, ys)
        pts = np.column_stack([XX.ravel(), YY.ravel()])
        free = contains_points_2d(cell_region, pts)
        if obstacles:
            free &= ~_points_in_any(obstacles, pts)
        mask = free.reshape(XX.shape)
        lbl, n = _mask_components(mask)
        flat = lbl.ravel()
        req_lbls = []
        for r in required_regions:
            inside = contains_points_2d(r, pts) & free
            req_lbls.append(set(np.unique(flat[inside])) - {0})
        common = set(range(1, n + 1))
        for s in req_lbls:
            common &= s
        if any(not s for s in req_lbls) or not common:
            return "fail", None, n
        comp = min(common)
        wpts = pts[flat == comp]
        return ("ii-a" if n == 1 else "ii-b"), wpts, n

    status, wpts, n = classify(delta)
    status2, wpts2, n2 = classify(0.5 * delta)
    stable = (status == status2)
    if not stable:
        warnings.warn("connectivity unstable across grid refinement; "
                      "using the finer resolution", RuntimeWarning)
        status, wpts, n = status2, wpts2, n2
    wbox = None
    if wpts is not None and len(wpts):
        blo, bhi = wpts.min(axis=0), wpts.max(axis=0)
        wbox = geo.Zonotope.from_box(blo, np.maximum(bhi, blo + 1e-12))
    return ConnectivityResult(status, wpts, wbox, stable, n)


@dataclass
class CellGraph:
    """Adjacency over cover cells plus optional proposition vertices."""
    vertices: list
    regions: dict
    edges: dict          # frozenset({a, b}) -> FreeRegion (overlap \ O)
    obstacles: list      # expanded plane obstacle sets
    delta: float
    cell_names: list
    prop_names: list = field(default_factory=list)
    isolated: list = field(default_factory=list)

    def neighbors(self, name):
        out = []
        for v in self.vertices:
            if v != name and frozenset((name, v)) in self.edges:
                out.append(v)
        return out

    def has_edge(self, a, b):
        return frozenset((a, b)) in self.edges

    def edge_region(self, a, b):
        return self.edges[frozenset((a, b))]

    def adjacency_matrix(self):
        n = len(self.vertices)
        idx = {v: i for i, v in enumerate(self.vertices)}
        A = np.zeros((n, n), dtype=bool)
        for key in self.edges:
            a, b = tuple(key)
            A[idx[a], idx[b]] = A[idx[b], idx[a]] = True
        return A

    def to_dot(self):
        lines = ["graph cells {"]
        for v in self.vertices:
            shape = "box" if v in self.prop_names else "ellipse"
            lines.append('  "%s" [shape=%s];' % (v, shape))
        for key in sorted(self.edges, key=lambda k: sorted(k)):
            a, b = sorted(key)
            lines.append('  "%s" -- "%s";' % (a, b))
        lines.append("}")
        return "\n".join(lines)


def build_graph(cover, obstacles, eps, delta=None):
    """Edges between cells whose overlap stays passable around obstacles."""
    if not 0 < eps <= cover.config.eps + 1e-12:
        raise ValueError("expansion parameter must be in (0, cover eps]")
    if delta is None:
        delta = 0.5 * eps
    obs = obstacles.expanded(eps)
    cells = cover.cells
    names = [c.name for c in cells]

    # cells swallowed by the expanded obstacle set stay isolated
    isolated = []
    for c in cells:
        if FreeRegion(c.region, obs).is_empty(delta):
            isolated.append(c.name)

    edges = {}
    for i in range(len(cells)):
        if names[i] in isolated:
            continue
        for j in range(i + 1, len(cells)):
            if names[j] in isolated:
                continue
            om = geo.intersect(cells[i].region, cells[j].region)
            if geo.is_empty(om):
                continue
            free = FreeRegion(om, obs)
            if free.is_empty(delta):
                continue
            if _union_minus_blocked_connected(cells[i].region,
                                              cells[j].region, om, obs,
                                              delta):
                edges[frozenset((names[i], names[j]))] = free
    regions = {c.name: c.region for c in cells}
    return CellGraph(list(names), regions, edges, obs, delta, list(names),
                     isolated=isolated)


def generalize(graph, propositions):
    """Add proposition regions as vertices linked to admissible cells."""
    vertices = list(graph.vertices)
    regions = dict(graph.regions)
    edges = dict(graph.edges)
    prop_names = list(graph.prop_names)
    for pname, preg in propositions.items():
        if pname in regions:
            raise ValueError("vertex name collision: %s" % pname)
        vertices.append(pname)
        regions[pname] = preg
        prop_names.append(pname)
        for cname in graph.cell_names:
            if cname in graph.isolated:
                continue
            creg = graph.regions[cname]
            om = geo.intersect(creg, preg)
            if geo.is_empty(om):
                continue
            free = FreeRegion(om, graph.obstacles)
            if free.is_empty(graph.delta):
                continue
            if _union_minus_blocked_connected(creg, preg, om,
                                              graph.obstacles, graph.delta):
                edges[frozenset((cname, pname))] = free
    return CellGraph(vertices, regions, edges, graph.obstacles, graph.delta,
                     list(graph.cell_names), prop_names,
                     isolated=list(graph.isolated))


def robustify_path(path, eps):
    """Contract every region of interest of an accepting path by eps."""
    if eps < 0:
        raise ValueError("contraction amount must be >= 0")
    if eps == 0:
        return path
    regions = {}
    for name, region in path.regions.items():
        shrunk = geo.contract(region, eps)
        if isinstance(shrunk, geo.EmptySet) or geo.is_empty(shrunk):
            raise RealizationError(
                "region of %s vanishes under contraction by %g"
                % (name, eps))
        regions[name] = shrunk
    return AcceptingPath(list(path.prefix), list(path.cycle), regions)


@dataclass
class RealizationResult:
    status: str                      # "realized" | "null"
    prefix_tokens: list = field(default_factory=list)
    cycle_tokens: list = field(default_factory=list)
    cell_sequence: list = field(default_factory=list)
    sub_paths: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    pair_info: list = field(default_factory=list)   # (a, b, cells, is_cycle)
    regions: dict = field(default_factory=dict)     # cell name -> region
    reason: str = ""

    @property
    def realized(self):
        return self.status == "realized"

    def path_string(self):
        if not self.realized:
            return "Null"
        return "%s (%s)^w" % (" ".join(self.prefix_tokens),
                              " ".join(self.cycle_tokens))


def _dedupe_consecutive(seq):
    out = []
    for s in seq:
        if not out or out[-1] != s:
            out.append(s)
    return out


def _bfs_cells(graph, src, dst, excluded):
    """Shortest src->dst path whose interior vertices are non-excluded
    cells; deterministic under the graph's vertex order."""
    if src == dst:
        return []
    parent = {src: None}
    q = deque([src])
    while q:
        v = q.popleft()
        for w in graph.neighbors(v):
            if w in parent:
                continue
            if w == dst:
                parent[w] = v
                cells = []
                cur = v
                while cur != src:
                    cells.append(cur)
                    cur = parent[cur]
                return cells[::-1]
            if w in graph.prop_names or w in excluded:
                continue
            parent[w] = v
            q.append(w)
    return None


def _check_cells(graph, tokens, witnesses):
    """Run the per-cell connectivity check along tokens = [a, c1..ck, b].

    Returns the first failing cell name, or None when every cell passes.
    """
    for t in range(1, len(tokens) - 1):
        cell = tokens[t]
        required = [graph.edge_region(tokens[t - 1], cell).base,
                    graph.edge_region(cell, tokens[t + 1]).base]
        res = check_cell_connectivity(graph.regions[cell], graph.obstacles,
                                      required, graph.delta)
        if res.status == "fail":
            return cell
        if res.status == "ii-b":
            witnesses[cell] = res
    return None


def verify_realization(graph, robust_path, max_iter=100):
    """Search for a cell path embedding the robust accepting path.

    Per proposition pair a BFS shortest cell path is taken; any cell whose
    free interior cannot connect its entry and exit overlaps is removed
    and the pair re-searched (bounded backtracking).  Returns a realized
    path of alternating proposition and cell symbols, or a null result.
    """
    prefix = _dedupe_consecutive(robust_path.prefix)
    cycle = _dedupe_consecutive(robust_path.cycle)
    if not cycle:
        raise RealizationError("accepting path needs a non-empty cycle")
    for p in prefix + cycle:
        if p not in graph.prop_names:
            raise RealizationError("proposition %s missing from graph" % p)

    seq = prefix + [cycle[0]]
    prefix_pairs = list(zip(seq, seq[1:]))
    if len(cycle) == 1:
        cycle_pairs = []
    else:
        loop = cycle + [cycle[0]]
        cycle_pairs = list(zip(loop, loop[1:]))

    solved = {}
    witnesses = {}
    for a, b in prefix_pairs + cycle_pairs:
        if (a, b) in solved:
            continue  # omega-loop legs repeating a prefix leg: check once
        excluded = set()
        cells = None
        for _ in range(max_iter):
            cells = _bfs_cells(graph, a, b, excluded)
            if cells is None:
                break
            bad = _check_cells(graph, [a] + cells + [b], witnesses)
            if bad is None:
                break
            excluded.add(bad)
            cells = None
        if cells is None:
            return RealizationResult(
                "null", reason="no admissible sub-path for (%s, %s)"
                % (a, b))
        solved[(a, b)] = cells

    # the cycle anchor cell must keep its proposition region reachable
    anchor = cycle[0]
    hosts = sorted((v for v in graph.neighbors(anchor)
                    if v not in graph.prop_names),
                   key=graph.vertices.index)
    if prefix_pairs:
        last_leg = solved[prefix_pairs[-1]]
        if last_leg and last_leg[-1] in hosts:
            hosts.remove(last_leg[-1])
            hosts.insert(0, last_leg[-1])
    ok_host = None
    for h in hosts:
        res = check_cell_connectivity(
            graph.regions[h], graph.obstacles,
            [graph.edge_region(h, anchor).base], graph.delta)
        if res.status != "fail":
            if res.status == "ii-b":
                witnesses[h] = res
            ok_host = h
            break
    if ok_host is None:
        return RealizationResult(
            "null", reason="no cell can host the cycle anchor %s" % anchor)

    prefix_tokens = []
    for a, b in prefix_pairs:
        prefix_tokens.append(a)
        prefix_tokens.extend(solved[(a, b)])
    if len(cycle) == 1:
        cycle_tokens = [cycle[0]]
    else:
        cycle_tokens = []
        for a, b in cycle_pairs:
            cycle_tokens.append(a)
            cycle_tokens.extend(solved[(a, b)])
    cell_sequence = []
    for t in prefix_tokens + cycle_tokens + [ok_host]:
        if t not in graph.prop_names and t not in cell_sequence:
            cell_sequence.append(t)
    sub_paths = {i: [a] + solved[(a, b)] + [b]
                 for i, (a, b) in enumerate(prefix_pairs + cycle_pairs)}
    pair_info = ([(a, b, list(solved[(a, b)]), False)
                  for a, b in prefix_pairs]
                 + [(a, b, list(solved[(a, b)]), True)
                    for a, b in cycle_pairs])
    if not prefix_pairs and not cycle_pairs:
        pair_info = [(anchor, anchor, [ok_host], True)]
    regions = {name: graph.regions[name] for name in cell_sequence}
    return RealizationResult("realized", prefix_tokens, cycle_tokens,
                             cell_sequence, sub_paths, witnesses,
                             pair_info, regions)
