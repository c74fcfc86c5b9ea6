"""Declarative scenario configuration and pipeline assembly.

A scenario file (INI grammar, documented in data/fourroom.cfg) describes
the workspace, plant, parameters, cell cover, obstacles, proposition
regions and the task.  This module parses and validates the file and
provides the glue that runs the pipeline stages on a scenario: cover and
graph construction, realization verification, per-cell symbolic models
with planar cells lifted by a heading generator, controller synthesis,
and closed-loop simulation.
"""

import configparser
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .geometry import Zonotope
from .covering import CoverConfig, build_cover
from .topograph import Obstacles, build_graph, generalize, robustify_path, \
    verify_realization
from .ltlspec import AcceptingPath, check_lasso, decompose
from .abstraction import (approximate_cell, bicycle_plant, build_input_map,
                          build_symbolic_model, uniform_input_grid)
from .synthesis import (obstacle_free_mask, region_mask, solve_reach_avoid,
                        synthesize_all)
from .runtime import extract_word, refine, simulate
from .datafiles import data_path


class ScenarioError(ValueError):
    """Config violations, one message per offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class Scenario:
    """Validated scenario description."""

    name: str
    lo: np.ndarray
    hi: np.ndarray
    angle: tuple
    plant_name: str
    plant_params: dict
    tau: float
    eps: float
    expand: float
    mu: dict                   # cell name -> mu (None key holds the default)
    eta: float
    input_step: float
    door: str
    cell_names: list
    centers: np.ndarray
    links: list                # per cell, indices into cell_names
    obstacles: dict            # name -> Zonotope ("door" applied by state)
    props: dict                # name -> Zonotope
    prefix: list
    cycle: list
    formula: str
    nba_file: str
    init_prop: str
    horizon: int

    def mu_for(self, cell_name):
        return self.mu.get(cell_name, self.mu[None])

    @property
    def angle_halfwidth(self):
        return 0.5 * (self.angle[1] - self.angle[0])

    def make_plant(self):
        if self.plant_name != "bicycle":
            raise ScenarioError(["unknown plant %r" % self.plant_name])
        return bicycle_plant(**self.plant_params)

    def obstacle_list(self, door=None):
        door = self.door if door is None else door
        out = [z for n, z in self.obstacles.items() if n != "door"]
        if door == "closed" and "door" in self.obstacles:
            out.append(self.obstacles["door"])
        return out

    def input_grid(self):
        plant = self.make_plant()
        return uniform_input_grid(plant.input_lo, plant.input_hi,
                                  self.input_step)

    def x0(self):
        """Center of the initial proposition region, heading zero."""
        c = self.props[self.init_prop].c
        return np.array([c[0], c[1], 0.0])


def _box_line(text):
    vals = [float(v) for v in text.split()]
    if len(vals) != 4:
        raise ValueError("expected 4 numbers, got %r" % text)
    return Zonotope.from_box(np.array(vals[:2]), np.array(vals[2:]))


def load_scenario(path):
    """Parse and validate a scenario file.

    Raises ScenarioError listing every schema violation found.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(str(path))
    problems = []
    if not read:
        raise ScenarioError(["cannot read %s" % path])
    for sec in ("space", "plant", "params", "cover", "obstacles", "props",
                "task"):
        if sec not in cp:
            problems.append("missing section [%s]" % sec)
    if problems:
        raise ScenarioError(problems)

    def fget(sec, key, cast=float):
        try:
            return cast(cp[sec][key])
        except KeyError:
            problems.append("missing %s.%s" % (sec, key))
        except ValueError:
            problems.append("bad value for %s.%s" % (sec, key))
        return None

    lo = fget("space", "lo", lambda s: np.array([float(v)
                                                 for v in s.split()]))
    hi = fget("space", "hi", lambda s: np.array([float(v)
                                                 for v in s.split()]))
    ang = fget("space", "angle", lambda s: tuple(float(v)
                                                 for v in s.split()))
    plant_name = fget("plant", "name", str)
    plant_params = {k: float(v) for k, v in cp["plant"].items()
                    if k != "name"}
    tau = fget("params", "tau")
    eps = fget("params", "eps")
    expand = fget("params", "expand")
    mu_default = fget("params", "mu")
    eta = fget("params", "eta")
    step = fget("params", "input_step")
    door = fget("params", "door", str)

    cells, centers, links_raw = [], [], []
    try:
        for line in cp["cover"]["cells"].strip().splitlines():
            head, _, linked = line.partition(":")
            parts = head.split()
            cells.append(parts[0])
            centers.append([float(parts[1]), float(parts[2])])
            links_raw.append(linked.split())
    except (KeyError, IndexError, ValueError):
        problems.append("bad cover.cells block")
    index = {n: i for i, n in enumerate(cells)}
    links = []
    for n, ls in zip(cells, links_raw):
        row = []
        for l in ls:
            if l not in index:
                problems.append("cell %s links unknown cell %s" % (n, l))
            else:
                row.append(index[l])
        links.append(row)

    def load_boxes(sec):
        out = {}
        for k in cp[sec]:
            try:
                out[k] = _box_line(cp[sec][k])
            except ValueError as exc:
                problems.append("%s.%s: %s" % (sec, k, exc))
        return out

    obstacles = load_boxes("obstacles")
    props = load_boxes("props")

    prefix = fget("task", "prefix", str)
    cycle = fget("task", "cycle", str)
    formula = fget("task", "formula", str)
    nba_file = cp["task"].get("nba", "")
    init_prop = fget("task", "init", str)
    horizon = fget("task", "horizon", int)

    if None not in (eps, expand) and not 0.0 < eps <= expand:
        problems.append("params.eps must satisfy 0 < eps <= expand")
    for val, key in ((tau, "tau"), (mu_default, "mu"), (eta, "eta"),
                     (step, "input_step")):
        if val is not None and val <= 0:
            problems.append("params.%s must be positive" % key)
    if door not in (None, "open", "closed"):
        problems.append("params.door must be open or closed")
    if lo is not None and hi is not None:
        for name, z in list(obstacles.items()) + list(props.items()):
            box_lo, box_hi = z.bounding_box()
            margin = 1.0  # walls may extend past the workspace edge
            if (np.any(box_lo < lo - margin)
                    or np.any(box_hi > hi + margin)):
                problems.append("region %s lies outside the workspace"
                                % name)
    # cover cells are named v1..vN in listed order by construction
    for i, n in enumerate(cells):
        if n != "v%d" % (i + 1):
            problems.append("cover cell %d must be named v%d" % (i + 1,
                                                                 i + 1))
    if prefix is not None and init_prop is not None:
        for tok in (prefix.split() + (cycle.split() if cycle else [])):
            if tok not in props:
                problems.append("task token %s has no region" % tok)
        if init_prop not in props:
            problems.append("task.init %s has no region" % init_prop)
    if problems:
        raise ScenarioError(problems)

    return Scenario(
        name=str(path), lo=lo, hi=hi, angle=ang,
        plant_name=plant_name, plant_params=plant_params,
        tau=tau, eps=eps, expand=expand, mu={None: mu_default},
        eta=eta, input_step=step, door=door,
        cell_names=cells, centers=np.array(centers), links=links,
        obstacles=obstacles, props=props,
        prefix=prefix.split(), cycle=cycle.split(),
        formula=formula, nba_file=nba_file, init_prop=init_prop,
        horizon=horizon)


def load_builtin(name):
    """Shipped scenario by data-file name (e.g. 'fourroom')."""
    if not name.endswith(".cfg"):
        name += ".cfg"
    return load_scenario(data_path(name))


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def build_scenario_cover(sc):
    cfg = CoverConfig(lo=sc.lo, hi=sc.hi, centers=sc.centers,
                      links=sc.links, eps=sc.expand)
    return build_cover(cfg)


def verify_scenario(sc, door=None):
    """Cover, graph and realization verdict for a scenario.

    Returns (cover, obstacles, graph, realization, robust_path).
    """
    cover = build_scenario_cover(sc)
    obstacles = Obstacles(sc.obstacle_list(door))
    graph = build_graph(cover, obstacles, eps=sc.expand)
    graph = generalize(graph, sc.props)
    path = AcceptingPath(sc.prefix, sc.cycle, sc.props)
    rob = robustify_path(path, sc.expand)
    result = verify_realization(graph, rob)
    return cover, obstacles, graph, result, rob


def local_specs(sc, result, rob, obstacles):
    init = geo.expand(sc.props[sc.init_prop].to_constrained(), sc.expand)
    specs, composed = decompose(result, rob, obstacles, init_region=init)
    return specs, composed


def lift_cell(region, angle_halfwidth):
    """Planar cell lifted with a heading generator (box cells only)."""
    lo, hi = region.bounding_box()
    return Zonotope.from_box(np.append(lo, -angle_halfwidth),
                             np.append(hi, angle_halfwidth))


def build_cell_model(sc, spec, plant=None, grid=None):
    """FRR symbolic model of one local spec's cell."""
    plant = plant or sc.make_plant()
    grid = sc.input_grid() if grid is None else grid
    cell3 = lift_cell(spec.cell.base, sc.angle_halfwidth)
    lattice = approximate_cell(cell3, sc.mu_for(spec.cell_name))
    im = build_input_map(lattice, plant, sc.tau, grid=grid, eta=sc.eta)
    return build_symbolic_model(spec.cell_name, lattice, im, plant,
                                sc.tau, kind="frr", eps=sc.eps)


def cell_masks(sc, spec, model, obstacles):
    """(init, safe, goal masks) of a local spec over the model lattice.

    Reach targets use the un-eroded handoff region: transitions whose
    endpoint leaves the cell are absent from the model, so the lattice
    boundary clips the successor sets and states at the shared face stay
    winnable even though the region is thinner than the transition
    radius.  Soundness of the handoff is restored by the supervisor's
    winning-set entry gate at mode switches.  Stay targets
    keep the eps erosion: the invariant core must tolerate the full
    relation slack in every direction.
    """
    lat = model.lattice
    safe = obstacle_free_mask(lat, obstacles, margin=sc.eps)
    init = region_mask(lat, spec.init_region) & safe
    goals = []
    for g in spec.goals:
        margin = sc.eps if g.mode == "stay" else 0.0
        goals.append(region_mask(lat, g.region, margin=margin) & safe)
    return init, safe, goals


def synthesize_scenario(sc, door=None, model_hook=None):
    """Full verify-then-synthesize pipeline for a scenario.

    Returns (GlobalSynthesisResult, realization, specs, obstacles).  The
    Null verdict is returned before any symbolic model is constructed.
    model_hook, when given, observes every built model (reporting).
    """
    cover, obstacles, graph, result, rob = verify_scenario(sc, door)
    if not result.realized:
        res = synthesize_all(result, [], None, None)
        return res, result, [], obstacles
    specs, _ = local_specs(sc, result, rob, obstacles)
    plant = sc.make_plant()
    grid = sc.input_grid()
    obs_list = list(obstacles)

    def factory(spec):
        model = build_cell_model(sc, spec, plant, grid)
        if model_hook is not None:
            model_hook(model)
        return model

    res = synthesize_all(result, specs, factory,
                         lambda spec, model: cell_masks(sc, spec, model,
                                                        obs_list),
                         release=True)
    return res, result, specs, obstacles


def simulate_scenario(sc, controller, x0=None, horizon=None):
    """Closed loop from x0 (default: init region center, heading 0)."""
    plant = sc.make_plant()
    rc = refine(controller, periodic_axes=plant.periodic_axes)
    x0 = sc.x0() if x0 is None else np.asarray(x0, dtype=float)
    horizon = sc.horizon if horizon is None else horizon
    return simulate(rc, plant, x0, sc.tau, horizon, regions=sc.props)


def check_task_word(sc, traj):
    """(satisfied, prefix, cycle) of the trajectory against the formula."""
    prefix, cycle = extract_word(traj)
    return check_lasso(sc.formula, prefix, cycle), prefix, cycle


def global_baseline(sc, door=None):
    """Uniform abstraction of the whole workspace for the co-safe variant.

    Builds one lattice over the bounding box of the expanded cover at the
    same lattice pitch the cover cells realize (matched resolution) and
    solves the co-safe task: reach the first goal region while avoiding
    the later ones, then reach the final stay region.  Returns (model, ok)
    where ok means the initial region is covered by both stages.
    """
    plant = sc.make_plant()
    grid = sc.input_grid()
    cover = build_scenario_cover(sc)
    blo = np.full(2, np.inf)
    bhi = np.full(2, -np.inf)
    pitch = np.inf
    for cell in cover.cells:
        lo, hi = cell.region.bounding_box()
        blo, bhi = np.minimum(blo, lo), np.maximum(bhi, hi)
        if cell.kind != "zonotope":
            continue
        hw = 0.5 * (hi - lo)
        mu = sc.mu_for(cell.name)
        pitch = min(pitch, float(np.min(hw / np.ceil(hw / mu - geo.TOL))))
    # split each planar axis into whole pitch steps (nudged so the ceil in
    # the lattice construction does not add a step to an exact division);
    # the heading pitch is the one the cover cells realize from mu
    hw = 0.5 * (bhi - blo)
    steps = np.ceil(hw / pitch - geo.TOL)
    ahw = sc.angle_halfwidth
    apitch = ahw / np.ceil(ahw / sc.mu[None] - geo.TOL)
    space = Zonotope.from_box(np.append(blo, -ahw), np.append(bhi, ahw))
    mu3 = np.append(hw / steps, apitch) + geo.TOL
    lattice = approximate_cell(space, mu3)
    im = build_input_map(lattice, plant, sc.tau, grid=grid, eta=sc.eta)
    model = build_symbolic_model("global", lattice, im, plant, sc.tau,
                                 kind="frr", eps=sc.eps)
    obstacles = sc.obstacle_list(door)
    free = obstacle_free_mask(lattice, obstacles, margin=sc.eps)
    first, last = sc.prefix[1], sc.cycle[-1]
    # until clause: stay a full relation radius clear of the later goal
    # regions before the first one is reached
    later = [sc.props[tok] for tok in sc.prefix[2:] + sc.cycle]
    clear = obstacle_free_mask(lattice, later, margin=sc.eps)
    init = region_mask(lattice, sc.props[sc.init_prop]) & free
    t1 = region_mask(lattice, sc.props[first], margin=sc.eps) & free
    t2 = region_mask(lattice, sc.props[last], margin=sc.eps) & free
    stage2 = solve_reach_avoid(model, t2, free)
    stage1 = solve_reach_avoid(model, t1 & stage2.winning, free & clear)
    ok = bool(init.any() and stage1.winning[init].all())
    return model, ok
