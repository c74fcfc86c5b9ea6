"""Set representations and queries used throughout the pipeline.

Two set classes are provided.  A ``Zonotope`` is the affine image of a unit
infinity-norm ball, ``{c + G xi : ||xi||_inf <= 1}``.  A
``ConstrainedZonotope`` additionally restricts the latent vector by linear
equalities ``A xi = b`` and can represent any bounded polytope.

Membership and emptiness reduce to a small linear program: a point ``z``
belongs to a constrained zonotope iff

    min { ||xi||_inf : G xi = z - c, A xi = b } <= 1

and the set is non-empty iff ``min { ||xi||_inf : A xi = b } <= 1``.  The
LP is solved with scipy's HiGHS backend.
"""

import numpy as np
from scipy.optimize import linprog

TOL = 1e-9


class EmptySet:
    """Explicit empty-set marker returned by operations that can empty out."""

    def __init__(self, dim):
        self.dim = dim

    def contains(self, z, tol=TOL):
        return False

    def is_empty(self, tol=TOL):
        return True

    def __repr__(self):
        return "EmptySet(dim=%d)" % self.dim


def _min_inf_norm(E, f):
    """Solve min ||xi||_inf subject to E xi = f.

    Returns (value, xi) with value = +inf when the equalities are
    infeasible.  Variables are [xi; t] with -t <= xi_i <= t.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    f = np.atleast_1d(np.asarray(f, dtype=float))
    m, n = E.shape
    if n == 0:
        # No latent freedom: feasible iff f == 0.
        if np.all(np.abs(f) <= 1e-9):
            return 0.0, np.zeros(0)
        return np.inf, None
    c = np.zeros(n + 1)
    c[-1] = 1.0
    ones = np.ones((n, 1))
    A_ub = np.block([[np.eye(n), -ones], [-np.eye(n), -ones]])
    b_ub = np.zeros(2 * n)
    A_eq = np.hstack([E, np.zeros((m, 1))])
    bounds = [(None, None)] * n + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=f, bounds=bounds,
                  method="highs")
    if not res.success:
        return np.inf, None
    return float(res.fun), res.x[:n]


def _support(G, c, A, b, d):
    """max d.(c + G xi) s.t. ||xi||_inf <= 1, A xi = b. Returns (value, point)."""
    G = np.atleast_2d(G)
    n = G.shape[1]
    obj = -(d @ G)
    kw = {}
    if A is not None and A.shape[0] > 0:
        kw = dict(A_eq=A, b_eq=b)
    res = linprog(obj, bounds=[(-1, 1)] * n, method="highs", **kw)
    if not res.success:
        return None, None
    xi = res.x
    pt = c + G @ xi
    return float(d @ pt), pt


class Zonotope:
    """Zonotope in generator representation {c + G xi : ||xi||_inf <= 1}.

    Args:
        center: (n,) array.
        generators: (n, ng) array, one generator per column.
    """

    def __init__(self, center, generators):
        self.c = np.atleast_1d(np.asarray(center, dtype=float))
        G = np.asarray(generators, dtype=float)
        if G.ndim == 1:
            G = G.reshape(len(self.c), -1)
        self.G = G
        if self.G.shape[0] != self.c.shape[0]:
            raise ValueError("generator rows must match center dimension")

    @property
    def dim(self):
        return self.c.shape[0]

    @property
    def n_gen(self):
        return self.G.shape[1]

    def __repr__(self):
        return "Zonotope(dim=%d, n_gen=%d, c=%s)" % (self.dim, self.n_gen,
                                                     np.round(self.c, 4))

    @classmethod
    def from_box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        c = 0.5 * (lo + hi)
        return cls(c, np.diag(0.5 * (hi - lo)))

    def is_box(self, tol=TOL):
        """True when every generator is axis-aligned."""
        if self.n_gen == 0:
            return True
        return all(np.sum(np.abs(self.G[:, j]) > tol) <= 1
                   for j in range(self.n_gen))

    def box_halfwidths(self):
        """Per-axis halfwidths of the tightest bounding box."""
        return np.sum(np.abs(self.G), axis=1)

    def bounding_box(self):
        r = self.box_halfwidths()
        return self.c - r, self.c + r

    def contains(self, z, tol=TOL):
        val, _ = _min_inf_norm(self.G, np.asarray(z, float) - self.c)
        return val <= 1.0 + tol

    def membership_margin(self, z):
        """1 - min||xi||_inf; positive inside, negative outside."""
        val, _ = _min_inf_norm(self.G, np.asarray(z, float) - self.c)
        return 1.0 - val

    def is_empty(self, tol=TOL):
        return False

    def sample(self, rng, n=1):
        xi = rng.uniform(-1.0, 1.0, size=(n, self.n_gen))
        return self.c + xi @ self.G.T

    def expand(self, eps):
        """Scale generators by (1 + eps) about the center."""
        return Zonotope(self.c.copy(), (1.0 + eps) * self.G)

    def to_constrained(self):
        return ConstrainedZonotope(self.c, self.G,
                                   np.zeros((0, self.n_gen)), np.zeros(0))


class ConstrainedZonotope:
    """Constrained zonotope {c + G xi : ||xi||_inf <= 1, A xi = b}."""

    def __init__(self, center, generators, A, b):
        self.c = np.atleast_1d(np.asarray(center, dtype=float))
        G = np.asarray(generators, dtype=float)
        if G.ndim == 1:
            G = G.reshape(len(self.c), -1)
        self.G = G
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        if self.A.size == 0:
            self.A = self.A.reshape(0, self.n_gen)
        if self.A.shape[1] != self.n_gen:
            raise ValueError("constraint columns must match generator count")
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("constraint rows must match offset length")

    @property
    def dim(self):
        return self.c.shape[0]

    @property
    def n_gen(self):
        return self.G.shape[1]

    @property
    def n_con(self):
        return self.A.shape[0]

    def __repr__(self):
        return "ConstrainedZonotope(dim=%d, n_gen=%d, n_con=%d)" % (
            self.dim, self.n_gen, self.n_con)

    def contains(self, z, tol=TOL):
        E = np.vstack([self.G, self.A])
        f = np.concatenate([np.asarray(z, float) - self.c, self.b])
        val, _ = _min_inf_norm(E, f)
        return val <= 1.0 + tol

    def membership_margin(self, z):
        E = np.vstack([self.G, self.A])
        f = np.concatenate([np.asarray(z, float) - self.c, self.b])
        val, _ = _min_inf_norm(E, f)
        return 1.0 - val

    def is_empty(self, tol=TOL):
        if self.n_con == 0:
            return False
        val, _ = _min_inf_norm(self.A, self.b)
        return val > 1.0 + tol

    def bounding_box(self):
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for i in range(self.dim):
            d = np.zeros(self.dim)
            d[i] = 1.0
            v, _ = _support(self.G, self.c, self.A, self.b, d)
            if v is None:
                raise ValueError("bounding box of an empty set")
            hi[i] = v
            v, _ = _support(self.G, self.c, self.A, self.b, -d)
            lo[i] = -v
        return lo, hi

    def expand(self, eps):
        """Pad with an eps-box: {c, [G, eps*I], [A, 0], b}.

        The Minkowski sum with the infinity ball of radius eps.  (A pure
        latent-space scaling is not a superset of the original set when the
        nominal center lies outside it, so padding is used instead.)
        """
        n = self.dim
        G = np.hstack([self.G, eps * np.eye(n)])
        A = np.hstack([self.A, np.zeros((self.n_con, n))])
        return ConstrainedZonotope(self.c.copy(), G, A, self.b.copy())

    def sample(self, rng, n=1, max_tries=200):
        """Rejection/projection sampling of feasible points (test helper)."""
        pts = []
        A, b = self.A, self.b
        for _ in range(max_tries * n):
            xi = rng.uniform(-1.0, 1.0, size=self.n_gen)
            if A.shape[0] > 0:
                # project xi onto the affine constraint set
                corr = np.linalg.lstsq(A, b - A @ xi, rcond=None)[0]
                xi = xi + corr
                if np.max(np.abs(xi)) > 1.0:
                    continue
            pts.append(self.c + self.G @ xi)
            if len(pts) == n:
                break
        if not pts:
            raise ValueError("could not sample from constrained zonotope")
        return np.array(pts)


# ---------------------------------------------------------------------------
# module-level operations (accept either set class)
# ---------------------------------------------------------------------------

def contains_point(s, z, tol=TOL):
    return s.contains(z, tol=tol)


def membership_margin(s, z):
    return s.membership_margin(z)


def is_empty(s, tol=TOL):
    return s.is_empty(tol=tol)


def expand(s, eps):
    if eps < 0:
        raise ValueError("expansion factor must be >= 0")
    return s.expand(eps)


def intersect(s1, s2):
    """Intersection of two sets as a constrained zonotope.

    Standard CG-rep construction: keep the first set's generators and add
    the matching equalities G1 xi1 - G2 xi2 = c2 - c1.
    """
    a = s1.to_constrained() if isinstance(s1, Zonotope) else s1
    b = s2.to_constrained() if isinstance(s2, Zonotope) else s2
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    n1, n2 = a.n_gen, b.n_gen
    G = np.hstack([a.G, np.zeros((a.dim, n2))])
    A = np.block([
        [a.A, np.zeros((a.n_con, n2))],
        [np.zeros((b.n_con, n1)), b.A],
        [a.G, -b.G],
    ])
    bb = np.concatenate([a.b, b.b, b.c - a.c])
    return ConstrainedZonotope(a.c, G, A, bb)


def g_norm(G, v):
    """Generator-scaled norm: max_l |v . g_l| / ||g_l||_2.

    Reduces to the infinity norm when the generator columns are orthonormal.
    Zero generators are skipped; all-zero G is rejected.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    v = np.asarray(v, dtype=float)
    lens = np.linalg.norm(G, axis=0)
    keep = lens > TOL
    if not np.any(keep):
        raise ValueError("g_norm needs at least one nonzero generator")
    proj = np.abs(v @ G[:, keep]) / lens[keep]
    return float(np.max(proj))


def g_norm_many(G, V):
    """g_norm applied to each row of V (vectorized)."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    lens = np.linalg.norm(G, axis=0)
    keep = lens > TOL
    P = np.abs(np.asarray(V, float) @ G[:, keep]) / lens[keep]
    return np.max(P, axis=-1)


# ---------------------------------------------------------------------------
# 2-D vertex conversions
# ---------------------------------------------------------------------------

def _zonotope_vertices_2d(z):
    """Exact vertex enumeration for a 2-D zonotope (angle-sorted walk)."""
    if z.dim != 2:
        raise ValueError("vertex enumeration is 2-D only")
    gens = []
    for j in range(z.n_gen):
        g = z.G[:, j].copy()
        if np.linalg.norm(g) <= TOL:
            continue
        if g[1] < 0 or (abs(g[1]) <= TOL and g[0] < 0):
            g = -g  # normalize into upper half-plane
        gens.append(g)
    if not gens:
        return np.array([z.c])
    gens = np.array(gens)
    order = np.argsort(np.arctan2(gens[:, 1], gens[:, 0]))
    gens = gens[order]
    # walk: start at vertex maximizing (sum of +g), then subtract 2g in order
    v = z.c + np.sum(gens, axis=0)
    verts = [v]
    for g in gens:
        v = v - 2.0 * g
        verts.append(v)
    for g in gens:
        v = v + 2.0 * g
        verts.append(v)
    verts = np.array(verts[:-1])
    return _dedupe_ring(verts)


def _dedupe_ring(verts, tol=1e-8):
    out = []
    for v in verts:
        if not out or np.linalg.norm(v - out[-1]) > tol:
            out.append(v)
    if len(out) > 1 and np.linalg.norm(out[0] - out[-1]) <= tol:
        out.pop()
    return np.array(out)


def _cz_vertices_2d(s, tol=1e-7):
    """Support-function vertex enumeration of a 2-D constrained zonotope."""
    if s.dim != 2:
        raise ValueError("vertex enumeration is 2-D only")
    if s.is_empty():
        return np.zeros((0, 2))

    def support_pt(theta):
        d = np.array([np.cos(theta), np.sin(theta)])
        _, pt = _support(s.G, s.c, s.A, s.b, d)
        return d, pt

    pts = []
    stack = []
    thetas = np.linspace(0.0, 2.0 * np.pi, 17)[:-1]
    cache = {}
    for t in thetas:
        d, p = support_pt(t)
        cache[t] = (d, p)
        pts.append(p)
    for i in range(len(thetas)):
        stack.append((thetas[i], thetas[(i + 1) % len(thetas)] if i + 1 < len(thetas) else 2 * np.pi))
    # adaptive bisection: refine while the mid-direction support exceeds the
    # chord between the two endpoint support points
    depth = 0
    while stack and depth < 4000:
        depth += 1
        t0, t1 = stack.pop()
        tm = 0.5 * (t0 + t1)
        if t1 - t0 < 1e-3:
            continue
        d, p = support_pt(tm)
        h = float(d @ p)
        p0 = cache.get(t0)
        p1 = cache.get(t1 if t1 in cache else t1 % (2 * np.pi))
        best = max(float(d @ q[1]) for q in (p0, p1) if q is not None)
        cache[tm] = (d, p)
        if h > best + tol:
            pts.append(p)
            stack.append((t0, tm))
            stack.append((tm, t1))
    pts = np.array(pts)
    return _hull_ring(pts, tol=tol)


def _hull_ring(pts, tol=1e-7):
    """Convex hull of a 2-D point cloud as a CCW vertex ring."""
    from scipy.spatial import QhullError, ConvexHull
    pts = np.asarray(pts, float)
    if len(pts) == 0:
        return pts.reshape(0, 2)
    uniq = [pts[0]]
    for p in pts[1:]:
        if all(np.linalg.norm(p - q) > tol for q in uniq):
            uniq.append(p)
    uniq = np.array(uniq)
    if len(uniq) == 1:
        return uniq
    if len(uniq) == 2:
        return uniq
    try:
        hull = ConvexHull(uniq)
        return uniq[hull.vertices]
    except QhullError:
        # (near-)degenerate: return extreme points along principal direction
        d = uniq - uniq.mean(axis=0)
        w = np.linalg.svd(d, full_matrices=False)[2][0]
        t = d @ w
        return np.array([uniq[np.argmin(t)], uniq[np.argmax(t)]])


def to_vertices_2d(s):
    """CCW vertex ring of a 2-D zonotope or constrained zonotope."""
    if isinstance(s, EmptySet):
        return np.zeros((0, 2))
    cached = getattr(s, "_verts_2d", None)
    if cached is not None:
        return cached
    verts = (_zonotope_vertices_2d(s) if isinstance(s, Zonotope)
             else _cz_vertices_2d(s))
    try:
        s._verts_2d = verts
    except AttributeError:
        pass
    return verts


def from_vertices_2d(vertices):
    """Constrained zonotope equal to the convex hull of 2-D vertices.

    Uses the simplex-style lifting: with latent lambda_l = (xi_l + 1)/2 the
    hull {V lambda : lambda >= 0, sum lambda = 1} becomes
    {0.5 V 1 + 0.5 V xi : ||xi||_inf <= 1, 1.xi = 2 - k}.
    """
    V = np.asarray(vertices, dtype=float)
    if V.ndim != 2 or V.shape[1] != 2:
        raise ValueError("expected (k, 2) vertex array")
    k = V.shape[0]
    if k < 1:
        raise ValueError("need at least one vertex")
    c = 0.5 * V.sum(axis=0)
    G = 0.5 * V.T
    A = np.ones((1, k))
    b = np.array([2.0 - k])
    return ConstrainedZonotope(c, G, A, b)


def halfspaces_2d(s, tol=1e-9):
    """H-rep (N, o) with N x <= o for a 2-D set, from its vertex ring."""
    cached = getattr(s, "_hrep_2d", None)
    if cached is not None:
        return cached
    verts = to_vertices_2d(s)
    if len(verts) < 3:
        raise ValueError("degenerate set has no full-dimensional H-rep")
    # ensure CCW
    area = 0.0
    for i in range(len(verts)):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % len(verts)]
        area += x0 * y1 - x1 * y0
    if area < 0:
        verts = verts[::-1]
    N = []
    o = []
    for i in range(len(verts)):
        p = verts[i]
        q = verts[(i + 1) % len(verts)]
        e = q - p
        n = np.array([e[1], -e[0]])
        ln = np.linalg.norm(n)
        if ln <= tol:
            continue
        n = n / ln
        N.append(n)
        o.append(float(n @ p))
    out = (np.array(N), np.array(o))
    try:
        s._hrep_2d = out
    except AttributeError:
        pass
    return out


def contains_points_2d(s, pts, tol=TOL):
    """Vectorized membership for many 2-D points via the H-rep."""
    pts = np.asarray(pts, float)
    try:
        N, o = halfspaces_2d(s)
    except ValueError:
        return np.array([s.contains(p, tol=tol) for p in pts], dtype=bool)
    return np.all(pts @ N.T <= o + tol, axis=1)


# ---------------------------------------------------------------------------
# contraction
# ---------------------------------------------------------------------------

def _axis_blocks(G, dim):
    """Partition coordinates into blocks not coupled by any generator."""
    parent = list(range(dim))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        parent[find(i)] = find(j)

    for col in range(G.shape[1]):
        rows = np.where(np.abs(G[:, col]) > TOL)[0]
        for r in rows[1:]:
            union(rows[0], r)
    blocks = {}
    for i in range(dim):
        blocks.setdefault(find(i), []).append(i)
    return list(blocks.values())


def _chebyshev_2d(N, o):
    """Chebyshev center/inradius (infinity-norm inball) of N x <= o."""
    # max r s.t. n.x + r * ||n||_1 <= o  gives the largest inscribed box;
    # with ||n||_2 = 1 rows and infinity-ball radius measured per axis we
    # use ||n||_inf-scaled slack so that the box {|y - x|_inf <= r} fits.
    scale = np.sum(np.abs(N), axis=1)  # support of the inf-ball along n
    c = np.zeros(3)
    c[2] = -1.0
    A_ub = np.hstack([N, scale.reshape(-1, 1)])
    res = linprog(c, A_ub=A_ub, b_ub=o, bounds=[(None, None)] * 2 + [(0, None)],
                  method="highs")
    if not res.success:
        return None, 0.0
    return res.x[:2], float(res.x[2])


def contract(s, eps, tol=TOL):
    """Inner approximation of the eps-contraction {x : ball(x, eps) in S}.

    Exact for axis-aligned boxes (per-axis interval shrink).  For other
    convex sets the set is scaled about a Chebyshev center by
    (1 - eps/r) with r the inradius, which is a sound inner approximation.
    Returns an EmptySet marker when the contraction empties out.
    """
    if eps < 0:
        raise ValueError("contraction margin must be >= 0")
    if isinstance(s, EmptySet):
        return s
    if eps == 0:
        return s
    if isinstance(s, Zonotope) and s.is_box():
        w = s.box_halfwidths() - eps
        if np.any(w < -tol):
            return EmptySet(s.dim)
        w = np.maximum(w, 0.0)
        return Zonotope(s.c.copy(), np.diag(w))
    blocks = _axis_blocks(s.G if isinstance(s, Zonotope) else s.G, s.dim)
    if len(blocks) > 1 and isinstance(s, Zonotope):
        # contract independent coordinate blocks separately
        Gout = np.zeros_like(s.G)
        cout = s.c.copy()
        col_used = np.zeros(s.G.shape[1], dtype=bool)
        for blk in blocks:
            cols = [j for j in range(s.G.shape[1])
                    if np.any(np.abs(s.G[blk, j]) > TOL)]
            col_used[cols] = True
            sub = Zonotope(s.c[blk], s.G[np.ix_(blk, cols)])
            csub = contract(sub, eps, tol=tol)
            if isinstance(csub, EmptySet):
                return EmptySet(s.dim)
            for bi, i in enumerate(blk):
                cout[i] = csub.c[bi]
            for cj, j in enumerate(cols):
                Gout[np.ix_(blk, [j])] = csub.G[:, [cj]]
        return Zonotope(cout, Gout[:, col_used])
    if s.dim == 1:
        lo, hi = (s.bounding_box() if isinstance(s, ConstrainedZonotope)
                  else s.bounding_box())
        lo, hi = lo[0] + eps, hi[0] - eps
        if hi < lo - tol:
            return EmptySet(1)
        hi = max(hi, lo)
        return Zonotope(np.array([0.5 * (lo + hi)]),
                        np.array([[0.5 * (hi - lo)]]))
    if s.dim == 2:
        if isinstance(s, ConstrainedZonotope) and s.is_empty():
            return EmptySet(2)
        try:
            N, o = halfspaces_2d(s)
        except ValueError:
            return EmptySet(s.dim)
        xc, r = _chebyshev_2d(N, o)
        if xc is None or r <= eps + tol:
            return EmptySet(2)
        k = 1.0 - eps / r
        if isinstance(s, Zonotope):
            cnew = xc + k * (s.c - xc)
            return Zonotope(cnew, k * s.G)
        cnew = xc + k * (s.c - xc)
        return ConstrainedZonotope(cnew, k * s.G, s.A.copy(), s.b.copy())
    if isinstance(s, Zonotope):
        # n-D fallback: scale about center using sigma_min / sqrt(n) inradius bound
        sv = np.linalg.svd(s.G, compute_uv=False)
        if len(sv) < s.dim or sv[s.dim - 1] <= TOL:
            return EmptySet(s.dim)
        r = sv[s.dim - 1] / np.sqrt(s.dim)
        if r <= eps + tol:
            return EmptySet(s.dim)
        k = 1.0 - eps / r
        return Zonotope(s.c.copy(), k * s.G)
    raise NotImplementedError(
        "contraction of constrained zonotopes is implemented for dim <= 2")


def _points_in_any(sets, pts):
    hit = np.zeros(len(pts), dtype=bool)
    for s in sets:
        hit |= contains_points_2d(s, pts)
    return hit


class FreeRegion:
    """Set difference base \\ union(obstacles), queried on grid points."""

    def __init__(self, base, obstacles):
        self.base = base
        self.obstacles = list(obstacles)

    def contains_points(self, pts):
        pts = np.asarray(pts, float)
        ok = contains_points_2d(self.base, pts)
        if self.obstacles:
            ok &= ~_points_in_any(self.obstacles, pts)
        return ok

    def grid_points(self, delta):
        lo, hi = self.base.bounding_box()
        xs = np.arange(lo[0], hi[0] + 0.5 * delta, delta)
        ys = np.arange(lo[1], hi[1] + 0.5 * delta, delta)
        XX, YY = np.meshgrid(xs, ys)
        pts = np.column_stack([XX.ravel(), YY.ravel()])
        return pts[self.contains_points(pts)]

    def is_empty(self, delta):
        if len(self.grid_points(delta)) > 0:
            return False
        return len(self.grid_points(0.5 * delta)) == 0

    def witness(self, delta):
        pts = self.grid_points(delta)
        if len(pts) == 0:
            pts = self.grid_points(0.5 * delta)
        return pts[0] if len(pts) else None
