"""Per-cell lattice abstractions and symbolic transition models.

A cell is approximated by a finite point lattice spanned by scaled-down
copies of its own generators.  Sampled-data flows between lattice points
are computed with a fixed-step RK4 integrator, and a symbolic transition
model is built by collecting, for each (state, input) pair, all lattice
points within a relation-specific radius of the flow endpoint:

  frr   radius (1 + e^(L tau)) * eps, sound for any Lipschitz plant
  abr   radius 0.5 * mu, requires an incremental-stability certificate
        satisfying beta(eps, tau) + mu + 0.5 * eta <= eps

Transition tables are stored in CSR form so that construction order and
serialization are deterministic.
"""

import itertools
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .geometry import ConstrainedZonotope, Zonotope


# ---------------------------------------------------------------------------
# plants and flow integration
# ---------------------------------------------------------------------------

@dataclass
class Plant:
    """Continuous-time control system dx/dt = f(x, u).

    Attributes:
        name: identifier used in serialized artifacts.
        f: vector field; maps (states (N, n), input (m,)) -> (N, n).
        input_lo, input_hi: admissible input box.
        lipschitz: state-Lipschitz bound of f over a cell x input box, or a
            callable (cell) -> bound.
        beta: optional incremental-stability bound beta(r, t), decreasing in
            t and increasing in r.
        growth: optional callable (tau) -> exact amplification bound of the
            flow deviation over one sampling period, i.e. a factor c with
            ||x(tau, x0, u) - x(tau, q0, u)|| <= c ||x0 - q0|| for all
            admissible u.  When absent the generic bound exp(L tau) is used.
        periodic_axes: {axis: period} for angle-like coordinates.
    """

    name: str
    f: callable
    input_lo: np.ndarray
    input_hi: np.ndarray
    lipschitz: object = None
    beta: object = None
    growth: object = None
    periodic_axes: dict = field(default_factory=dict)

    @property
    def dim_input(self):
        return len(self.input_lo)

    def lipschitz_bound(self, cell=None):
        if callable(self.lipschitz):
            return float(self.lipschitz(cell))
        if self.lipschitz is None:
            raise ValueError("plant %r carries no Lipschitz bound" % self.name)
        return float(self.lipschitz)

    def growth_factor(self, tau, cell=None):
        """Deviation amplification over one period (exp(L tau) fallback)."""
        if self.growth is not None:
            return float(self.growth(tau))
        return float(np.exp(self.lipschitz_bound(cell) * tau))


def bicycle_plant(v_max=1.0, steer_max=1.0):
    """Kinematic bicycle model (rear-wheel velocity and steering inputs).

    State (x, y, heading); slip angle alpha = arctan(0.5 tan(u2)).
    The Lipschitz bound is analytic: f depends on the state only through
    the heading, and the heading column of the Jacobian has 2-norm
    |u1| / cos(alpha), maximized at the input-box corner.
    """

    def f(x, u):
        x = np.atleast_2d(x)
        u1, u2 = u
        alpha = np.arctan(0.5 * np.tan(u2))
        k = u1 / np.cos(alpha)
        out = np.empty_like(x)
        out[:, 0] = k * np.cos(alpha + x[:, 2])
        out[:, 1] = k * np.sin(alpha + x[:, 2])
        out[:, 2] = u1 * np.tan(u2)
        return out

    alpha_max = np.arctan(0.5 * np.tan(steer_max))
    lip = abs(v_max) / np.cos(alpha_max)
    # the state dependence is triangular: the heading difference between two
    # trajectories under the same input is constant in time, and the position
    # difference grows at most linearly at rate L |dtheta|, so the one-period
    # deviation factor is exactly 1 + L tau (no exponential blow-up)
    return Plant(name="bicycle", f=f,
                 input_lo=np.array([-v_max, -steer_max]),
                 input_hi=np.array([v_max, steer_max]),
                 lipschitz=lip,
                 growth=lambda tau: 1.0 + lip * tau,
                 periodic_axes={2: 2.0 * np.pi})


def integrator_plant(u_max=1.0):
    """1-D test system dx/dt = u (Lipschitz constant 0)."""

    def f(x, u):
        x = np.atleast_2d(x)
        return np.full_like(x, u[0])

    return Plant(name="integrator", f=f,
                 input_lo=np.array([-u_max]), input_hi=np.array([u_max]),
                 lipschitz=0.0)


def stable_linear_plant(u_max=1.0):
    """1-D test system dx/dt = -x + u with beta(r, t) = r e^(-t)."""

    def f(x, u):
        x = np.atleast_2d(x)
        return -x + u[0]

    return Plant(name="stable-linear", f=f,
                 input_lo=np.array([-u_max]), input_hi=np.array([u_max]),
                 lipschitz=1.0,
                 beta=lambda r, t: r * np.exp(-t))


def integrate_flow(plant, x, u, tau, steps=10):
    """Fixed-step RK4 endpoint of the flow from x under constant input u."""
    x = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    u = np.asarray(u, dtype=float)
    h = tau / steps
    for _ in range(steps):
        k1 = plant.f(x, u)
        k2 = plant.f(x + 0.5 * h * k1, u)
        k3 = plant.f(x + 0.5 * h * k2, u)
        k4 = plant.f(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def check_integrator_convergence(plant, x, u, tau, steps=10, tol=1e-6):
    """True when halving the RK4 step moves the endpoint by less than tol."""
    a = integrate_flow(plant, x, u, tau, steps)
    b = integrate_flow(plant, x, u, tau, 2 * steps)
    return float(np.max(np.abs(a - b))) < tol


def wrap_periodic(points, center, periodic_axes):
    """Shift periodic coordinates into the principal range around center."""
    pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
    for axis, period in periodic_axes.items():
        pts[:, axis] = center[axis] + (pts[:, axis] - center[axis]
                                       + 0.5 * period) % period - 0.5 * period
    return pts


# ---------------------------------------------------------------------------
# generator lattice
# ---------------------------------------------------------------------------

def _fast_membership(cell):
    """Vectorized membership test for square-invertible generator matrices.

    Returns a callable (points (N, n)) -> bool mask, or None when only the
    generic LP test applies.
    """
    if isinstance(cell, ConstrainedZonotope) and cell.n_con > 0:
        return None
    G = cell.G
    if G.shape[0] != G.shape[1]:
        return None
    try:
        Gi = np.linalg.inv(G)
    except np.linalg.LinAlgError:
        return None
    c = cell.c

    def member(pts):
        xi = (np.atleast_2d(pts) - c) @ Gi.T
        return np.max(np.abs(xi), axis=1) <= 1.0 + geo.TOL

    return member


class GeneratorLattice:
    """Finite point approximation of a cell along its own generators.

    Each generator g_l is split into N_l basic generators of length at most
    mu; points are integer combinations of the basic generators around the
    center, kept while they remain inside the cell.
    """

    def __init__(self, cell, mu, points, coords, basic, counts, extents):
        self.cell = cell
        self.mu = float(np.max(mu))
        self.points = points          # (n_points, n) array
        self.coords = coords          # (n_points, l) integer combinations
        self.basic = basic            # (n, l) basic generator matrix
        self.counts = counts          # N_l per generator
        self.extents = extents        # M_l per generator
        self._index = None

    @property
    def n_points(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    def directions(self):
        """Unit generator directions defining the cell's G-norm."""
        return self.cell.G

    def gnorm_to_points(self, x, wrap=None):
        """G-norm distance from x to every lattice point."""
        v = self.points - np.asarray(x, dtype=float)
        if wrap:
            for axis, period in wrap.items():
                v[:, axis] = (v[:, axis] + 0.5 * period) % period \
                    - 0.5 * period
        return geo.g_norm_many(self.cell.G, v)

    def nearest(self, x, wrap=None):
        """Index of the closest lattice point in G-norm (lowest index wins)."""
        return int(np.argmin(self.gnorm_to_points(x, wrap=wrap)))


def approximate_cell(cell, mu, reduced=False):
    """Build the generator lattice of a cell.

    Args:
        cell: Zonotope or ConstrainedZonotope.
        mu: quantization bound; each basic generator is at most this long.
            A scalar, or one bound per generator column.
        reduced: keep only a square full-rank subset of the generators
            (orthogonal-grid style simplification).

    Returns:
        GeneratorLattice whose points all lie inside the cell.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("mu must be positive")
    G = np.asarray(cell.G, dtype=float)
    c = np.asarray(cell.c, dtype=float)
    n = len(c)
    lens = np.linalg.norm(G, axis=0)
    keep = np.where(lens > geo.TOL)[0]
    if reduced:
        sel, rank = [], 0
        for j in keep:
            trial = sel + [j]
            if np.linalg.matrix_rank(G[:, trial]) > rank:
                sel.append(j)
                rank += 1
            if rank == n:
                break
        keep = np.array(sel, dtype=int)
    G = G[:, keep]
    lens = lens[keep]
    if mu.ndim > 0:
        mu = mu[keep]
    if len(lens) == 0 or np.all(mu > lens):
        warnings.warn("mu exceeds every generator length; "
                      "lattice degenerates to the center point")
        pts = c.reshape(1, -1)
        return GeneratorLattice(cell, mu, pts,
                                np.zeros((1, max(len(lens), 1)), dtype=int),
                                G / np.maximum(lens, 1.0), np.ones(0, int),
                                np.ones(0, int))

    counts = np.maximum(1, np.ceil(lens / mu - geo.TOL)).astype(int)
    basic = G / counts
    ell = basic.shape[1]

    member = _fast_membership(cell)
    if member is None:
        def member(pts):
            return np.array([geo.membership_margin(cell, p) >= -geo.TOL
                             for p in np.atleast_2d(pts)])

    # per-generator extents M_l: largest step count keeping c +- M g inside
    extents = np.empty(ell, dtype=int)
    for l in range(ell):
        m = counts[l]
        while True:
            trial = np.vstack([c + (m + 1) * basic[:, l],
                               c - (m + 1) * basic[:, l]])
            if not member(trial).all():
                break
            m += 1
        extents[l] = m

    # breadth-first propagation over integer combinations, membership kept
    seen = {tuple(np.zeros(ell, dtype=int))}
    frontier = [np.zeros(ell, dtype=int)]
    accepted = [np.zeros(ell, dtype=int)]
    while frontier:
        nxt = []
        for a in frontier:
            for l in range(ell):
                for s in (1, -1):
                    b = a.copy()
                    b[l] += s
                    key = tuple(b)
                    if key in seen or abs(b[l]) > extents[l]:
                        continue
                    seen.add(key)
                    if member((c + basic @ b).reshape(1, -1))[0]:
                        nxt.append(b)
                        accepted.append(b)
        frontier = nxt

    coords = np.array(accepted, dtype=int)
    pts = c + coords @ basic.T
    # merge integer combinations that land on the same physical point
    order = np.lexsort(np.round(pts, 9).T[::-1])
    pts, coords = pts[order], coords[order]
    uniq = np.ones(len(pts), dtype=bool)
    if len(pts) > 1:
        uniq[1:] = np.any(np.abs(np.diff(np.round(pts, 9), axis=0)) > 0,
                          axis=1)
    return GeneratorLattice(cell, mu, pts[uniq], coords[uniq], basic,
                            counts, extents)


# ---------------------------------------------------------------------------
# input approximation
# ---------------------------------------------------------------------------

@dataclass
class InputGrid:
    """Finite input set with per-state enabled subsets.

    Attributes:
        inputs: (n_u, m) input vectors.
        enabled: list of index arrays, one per lattice point.
        eta: matching tolerance of the reach-set construction (grid step
            for grid mode).
    """

    inputs: np.ndarray
    enabled: list
    eta: float

    @property
    def n_inputs(self):
        return len(self.inputs)


def uniform_input_grid(lo, hi, step):
    """Axis-uniform grid over an input box, symmetric about the center."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = []
    for a, b in zip(lo, hi):
        m = 0.5 * (a + b)
        k = int(np.floor((b - m) / step + geo.TOL))
        axes.append(m + step * np.arange(-k, k + 1))
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return grid.reshape(-1, len(lo))


def build_input_map(lattice, plant, tau, grid=None, eta=None, steps=10,
                    samples=200, rng=None):
    """Enabled input sets per lattice point.

    Grid mode (default): an input is enabled at q when the flow endpoint
    from q stays inside the cell.  Reach-matching mode (grid omitted):
    inputs are sampled from the plant's box and one representative is kept
    per lattice point reachable within 0.5 * eta.
    """
    member = _fast_membership(lattice.cell)
    if member is None:
        def member(pts):
            return np.array([geo.membership_margin(lattice.cell, p)
                             >= -geo.TOL for p in np.atleast_2d(pts)])

    if grid is not None:
        inputs = np.atleast_2d(np.asarray(grid, dtype=float))
        enabled = [[] for _ in range(lattice.n_points)]
        for j, u in enumerate(inputs):
            end = integrate_flow(plant, lattice.points, u, tau, steps)
            if plant.periodic_axes:
                end = wrap_periodic(end, lattice.cell.c, plant.periodic_axes)
            ok = member(end)
            for i in np.where(ok)[0]:
                enabled[i].append(j)
        enabled = [np.array(e, dtype=int) for e in enabled]
        return InputGrid(inputs=inputs, enabled=enabled,
                         eta=float(eta if eta is not None else 0.0))

    if eta is None:
        raise ValueError("reach-matching mode needs eta")
    rng = np.random.default_rng(0) if rng is None else rng
    cand = rng.uniform(plant.input_lo, plant.input_hi,
                       size=(samples, plant.dim_input))
    kept = []
    enabled = [[] for _ in range(lattice.n_points)]
    wrap = plant.periodic_axes
    for i, q in enumerate(lattice.points):
        for u in cand:
            end = integrate_flow(plant, q.reshape(1, -1), u, tau, steps)[0]
            if not member(end.reshape(1, -1))[0]:
                continue
            d = lattice.gnorm_to_points(end, wrap=wrap)
            if np.min(d) > 0.5 * eta:
                continue
            key = tuple(np.round(u, 9))
            if key not in kept:
                kept.append(key)
            enabled[i].append(kept.index(key))
    inputs = np.array([list(k) for k in kept], dtype=float)
    if len(inputs) == 0:
        inputs = inputs.reshape(0, plant.dim_input)
    return InputGrid(inputs=inputs,
                     enabled=[np.array(sorted(set(e)), dtype=int)
                              for e in enabled],
                     eta=float(eta))


# ---------------------------------------------------------------------------
# symbolic models
# ---------------------------------------------------------------------------

def abr_certificate(beta, eps, tau, mu, eta):
    """Slack of the incremental-stability parameter inequality.

    Returns (ok, slack) for beta(eps, tau) + mu + 0.5 * eta <= eps;
    negative slack means the inequality holds with room to spare.
    """
    slack = float(beta(eps, tau) + mu + 0.5 * eta - eps)
    return slack <= 0.0, slack


@dataclass
class SymbolicModel:
    """CSR transition table over a cell's lattice points.

    transitions for pair index p = state * n_inputs + input live in
    successors[offsets[p]:offsets[p + 1]] (sorted state indices).
    """

    cell_id: str
    kind: str                  # "frr" | "abr"
    lattice: GeneratorLattice
    inputs: np.ndarray
    offsets: np.ndarray
    successors: np.ndarray
    tau: float
    eps: float
    eta: float
    radius: float
    lipschitz: float = 0.0
    initial: np.ndarray = None   # lattice indices inside the init region

    @property
    def n_states(self):
        return self.lattice.n_points

    @property
    def n_inputs(self):
        return len(self.inputs)

    _released_count: int = 0

    @property
    def n_transitions(self):
        if self.successors is None:
            return self._released_count
        return len(self.successors)

    def release_transitions(self):
        """Free the successor table, keeping only its size.

        Synthesized controllers index the lattice and input grid but not
        the transitions; dropping them bounds peak memory when several
        cell models are alive at once.
        """
        if self.successors is not None:
            self._released_count = len(self.successors)
            self.successors = None
            self.offsets = None

    def successors_of(self, state, inp):
        p = state * self.n_inputs + inp
        return self.successors[self.offsets[p]:self.offsets[p + 1]]

    def enabled_inputs(self, state):
        base = state * self.n_inputs
        degs = np.diff(self.offsets[base:base + self.n_inputs + 1])
        return np.where(degs > 0)[0]


def build_symbolic_model(cell_id, lattice, input_grid, plant, tau, kind="frr",
                         eps=None, steps=10, radius_scale=1.0,
                         skip_certificate=False):
    """Symbolic transition model of a cell under a sampled-data plant.

    For every (state, enabled input) the RK4 flow endpoint is computed; the
    transition is omitted when the endpoint leaves the cell, otherwise the
    successor set is every lattice point within the relation radius of the
    endpoint in G-norm.
    """
    if kind not in ("frr", "abr"):
        raise ValueError("kind must be 'frr' or 'abr'")
    mu = lattice.mu
    if kind == "frr":
        if eps is None:
            raise ValueError("frr model needs the precision eps")
        lip = plant.lipschitz_bound(lattice.cell)
        radius = (1.0 + plant.growth_factor(tau, lattice.cell)) * eps
    else:
        if plant.beta is None:
            raise ValueError("abr model needs an incremental-stability bound")
        eps = mu if eps is None else eps
        ok, slack = abr_certificate(plant.beta, eps, tau, mu, input_grid.eta)
        if not ok and not skip_certificate:
            raise ValueError("stability certificate fails by %.4g" % slack)
        lip = plant.lipschitz_bound(lattice.cell) if plant.lipschitz \
            is not None else 0.0
        radius = 0.5 * mu
    radius *= radius_scale

    member = _fast_membership(lattice.cell)
    if member is None:
        def member(pts):
            return np.array([geo.membership_margin(lattice.cell, p)
                             >= -geo.TOL for p in np.atleast_2d(pts)])

    wrap = plant.periodic_axes
    n_q = lattice.n_points
    n_u = input_grid.n_inputs
    counts = np.zeros(n_q * n_u, dtype=np.int64)
    per_pair = {}

    enabled_by_input = [[] for _ in range(n_u)]
    for i, e in enumerate(input_grid.enabled):
        for j in e:
            enabled_by_input[j].append(i)

    # Euclidean prefilter: max_l |v.g_l|/||g_l|| >= sigma_min(Ghat^T)
    # ||v|| / sqrt(ell), so a ball of radius R2 covers the G-norm ball.
    Ghat = lattice.cell.G / np.linalg.norm(lattice.cell.G, axis=0)
    sig = np.linalg.svd(Ghat, compute_uv=False)
    tree, r2 = None, None
    if sig[-1] > geo.TOL:
        tree = cKDTree(lattice.points)
        r2 = (radius + geo.TOL) * np.sqrt(Ghat.shape[1]) / sig[-1]
        shifts = [np.zeros(lattice.dim)]
        for axis, period in wrap.items():
            shifts = [s + d for s in shifts
                      for d in (np.zeros(lattice.dim),
                                period * np.eye(lattice.dim)[axis],
                                -period * np.eye(lattice.dim)[axis])]

    GhatT = Ghat.T

    def filter_exact(cand, end):
        v = lattice.points[cand] - end
        for axis, period in wrap.items():
            v[:, axis] = (v[:, axis] + 0.5 * period) % period - 0.5 * period
        d = np.max(np.abs(v @ GhatT.T), axis=1)
        keep = cand[d <= radius + geo.TOL]
        keep.sort()
        return keep

    center = lattice.cell.c
    for j in range(n_u):
        states = np.array(enabled_by_input[j], dtype=int)
        if len(states) == 0:
            continue
        ends = integrate_flow(plant, lattice.points[states],
                              input_grid.inputs[j], tau, steps)
        if wrap:
            ends = wrap_periodic(ends, center, wrap)
        inside = member(ends)
        states, ends = states[inside], ends[inside]
        if len(states) == 0:
            continue
        if tree is None:
            cands = [np.where(lattice.gnorm_to_points(e, wrap=wrap)
                              <= radius + geo.TOL)[0] for e in ends]
            for i, succ in zip(states, cands):
                if len(succ):
                    p = i * n_u + j
                    counts[p] = len(succ)
                    per_pair[p] = succ
            continue
        lists = [tree.query_ball_point(ends + s, r2) for s in shifts]
        for r, i in enumerate(states):
            cand = lists[0][r]
            for other in lists[1:]:
                cand = cand + [c for c in other[r] if c not in cand]
            if not cand:
                continue
            succ = filter_exact(np.asarray(cand, dtype=np.int64), ends[r])
            if len(succ) == 0:
                continue
            p = i * n_u + j
            counts[p] = len(succ)
            per_pair[p] = succ

    offsets = np.zeros(n_q * n_u + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    successors = np.empty(offsets[-1], dtype=np.int64)
    for p, succ in per_pair.items():
        successors[offsets[p]:offsets[p + 1]] = succ
    return SymbolicModel(cell_id=cell_id, kind=kind, lattice=lattice,
                         inputs=input_grid.inputs, offsets=offsets,
                         successors=successors, tau=tau, eps=float(eps),
                         eta=input_grid.eta, radius=float(radius),
                         lipschitz=float(lip))


def states_in_region(lattice, region, margin=0.0):
    """Lattice point indices lying inside a region with the given margin."""
    idx = [i for i, p in enumerate(lattice.points)
           if geo.membership_margin(region, p) >= margin - geo.TOL]
    return np.array(idx, dtype=int)


# ---------------------------------------------------------------------------
# sampled relation checks
# ---------------------------------------------------------------------------

def _sample_cell(cell, n, rng, member):
    lo, hi = cell.bounding_box()
    out = []
    while len(out) < n:
        pts = rng.uniform(lo, hi, size=(max(64, n), len(lo)))
        ok = member(pts)
        out.extend(pts[ok][:n - len(out)])
    return np.array(out)


def check_frr_sampled(model, plant, n_samples=1000, rng=None, steps=10):
    """Sampled one-step soundness of a refinement-relation model.

    For (x, q) with ||x - q||_G <= eps and enabled u whose abstract
    transition exists and whose concrete endpoint stays in the cell, some
    abstract successor must be within eps of the concrete endpoint.
    Returns the violation count.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lat = model.lattice
    wrap = plant.periodic_axes
    member = _fast_membership(lat.cell)
    if member is None:
        def member(pts):
            return np.array([geo.membership_margin(lat.cell, p) >= -geo.TOL
                             for p in np.atleast_2d(pts)])
    xs = _sample_cell(lat.cell, n_samples, rng, member)
    violations = 0
    for x in xs:
        d = lat.gnorm_to_points(x, wrap=wrap)
        q = int(np.argmin(d))
        if d[q] > model.eps:
            continue
        en = model.enabled_inputs(q)
        if len(en) == 0:
            continue
        j = int(rng.choice(en))
        succ = model.successors_of(q, j)
        if len(succ) == 0:
            continue
        end = integrate_flow(plant, x.reshape(1, -1), model.inputs[j],
                             model.tau, steps)
        if wrap:
            end = wrap_periodic(end, lat.cell.c, wrap)
        if not member(end)[0]:
            continue
        dist = lat.gnorm_to_points(end[0], wrap=wrap)[succ]
        if np.min(dist) > model.eps + geo.TOL:
            violations += 1
    return violations


def check_abr_sampled(model, plant, n_samples=1000, rng=None, steps=10):
    """Sampled two-way matching for a bisimulation-style model.

    Forward: the concrete endpoint from x must be within eps of some
    abstract successor.  Backward: every abstract successor must be within
    eps of the concrete endpoint (the plant is deterministic, so the single
    concrete transition has to match each abstract one).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lat = model.lattice
    wrap = plant.periodic_axes
    member = _fast_membership(lat.cell)
    if member is None:
        def member(pts):
            return np.array([geo.membership_margin(lat.cell, p) >= -geo.TOL
                             for p in np.atleast_2d(pts)])
    xs = _sample_cell(lat.cell, n_samples, rng, member)
    violations = 0
    for x in xs:
        d = lat.gnorm_to_points(x, wrap=wrap)
        q = int(np.argmin(d))
        if d[q] > model.eps:
            continue
        en = model.enabled_inputs(q)
        if len(en) == 0:
            continue
        j = int(rng.choice(en))
        succ = model.successors_of(q, j)
        if len(succ) == 0:
            continue
        end = integrate_flow(plant, x.reshape(1, -1), model.inputs[j],
                             model.tau, steps)
        if wrap:
            end = wrap_periodic(end, lat.cell.c, wrap)
        if not member(end)[0]:
            continue
        dist = lat.gnorm_to_points(end[0], wrap=wrap)[succ]
        if np.min(dist) > model.eps + geo.TOL:
            violations += 1
        if np.max(dist) > model.eps + geo.TOL:
            violations += 1
    return violations


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = b"ZSYM"


def save_model(model, path):
    """Binary CSR dump: header, lattice points, inputs, offsets, successors."""
    lat = model.lattice
    kind = model.kind.encode()
    cid = model.cell_id.encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<5q", lat.n_points, lat.dim,
                             model.n_inputs, model.inputs.shape[1]
                             if model.inputs.size else 0,
                             model.n_transitions))
        fh.write(struct.pack("<5d", model.tau, model.eps, model.eta,
                             model.radius, lat.mu))
        fh.write(struct.pack("<2h", len(kind), len(cid)))
        fh.write(kind + cid)
        fh.write(lat.points.astype("<f8").tobytes())
        fh.write(np.asarray(model.inputs, dtype="<f8").tobytes())
        fh.write(model.offsets.astype("<i8").tobytes())
        fh.write(model.successors.astype("<i8").tobytes())


def load_model_summary(path):
    """Header fields of a serialized model (shape and parameter check)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a symbolic model file")
        n_q, dim, n_u, dim_u, n_t = struct.unpack("<5q", fh.read(40))
        tau, eps, eta, radius, mu = struct.unpack("<5d", fh.read(40))
        lk, lc = struct.unpack("<2h", fh.read(4))
        kind = fh.read(lk).decode()
        cid = fh.read(lc).decode()
    return {"cell_id": cid, "kind": kind, "n_states": n_q, "dim": dim,
            "n_inputs": n_u, "n_transitions": n_t, "tau": tau, "eps": eps,
            "eta": eta, "radius": radius, "mu": mu}


def summarize_model(model):
    """One-line text summary with the transition count."""
    return ("%s kind=%s states=%d inputs=%d transitions=%d "
            "tau=%g eps=%g mu=%g radius=%g"
            % (model.cell_id, model.kind, model.n_states, model.n_inputs,
               model.n_transitions, model.tau, model.eps,
               model.lattice.mu, model.radius))
