"""Fixed-point controller synthesis on symbolic transition models.

Local tasks over a cell's lattice are solved by standard backward fixed
points with adversarial nondeterminism: an input is winning at a state
only when every symbolic successor remains winning.  Local controllers are
synthesized backwards along the realized cell path (each cell's handoff
target doubles as the next cell's initial region) and composed into a
global controller driven by a finite-memory mode supervisor.
"""

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo


class SynthesisFailure(RuntimeError):
    """A fixed-point stage left required states uncovered."""

    def __init__(self, stage, uncovered):
        self.stage = stage
        self.uncovered = np.asarray(uncovered, dtype=int)
        msg = "%s: %d required state(s) uncovered" % (stage, len(uncovered))
        super().__init__(msg)


# ---------------------------------------------------------------------------
# fixed-point primitives
# ---------------------------------------------------------------------------

def _pair_ok(model, win):
    """(state, input) pairs whose successor set is non-empty and entirely
    inside win; returned as an (n_states, n_inputs) boolean table."""
    off = model.offsets
    counts = np.diff(off)
    cs = np.concatenate([[0], np.cumsum(~win[model.successors])])
    bad = cs[off[1:]] - cs[off[:-1]]
    ok = (counts > 0) & (bad == 0)
    return ok.reshape(model.n_states, model.n_inputs)


def _ordered_inputs(model, mask_row):
    """Winning input indices sorted by norm then by grid order."""
    idx = np.where(mask_row)[0]
    if len(idx) == 0:
        return idx
    norms = np.linalg.norm(np.atleast_2d(model.inputs)[idx], axis=1)
    order = np.lexsort((idx, np.round(norms, 9)))
    return idx[order]


@dataclass
class AbstractController:
    """Winning input choices for one fixed-point stage on one cell.

    Attributes:
        cell_id: owning cell.
        kind: "invariance" | "reach" | "stay".
        inputs_by_state: state index -> winning input index array.
        steps: state index -> recorded step bound to the target (0 inside).
        winning: boolean mask over model states.
        target: boolean mask of the stage target (equals winning for
            invariance stages).
    """

    cell_id: str
    kind: str
    inputs_by_state: dict
    steps: dict
    winning: np.ndarray
    target: np.ndarray

    @property
    def domain(self):
        return np.where(self.winning)[0]


def solve_invariance(model, safe):
    """Maximal controlled-invariant subset of safe.

    Iterates W <- {q in W : exists u, successors(q, u) subseteq W, non-empty}
    to a fixed point.  Raises SynthesisFailure when the result is empty.
    """
    win = np.asarray(safe, dtype=bool).copy()
    while True:
        ok = _pair_ok(model, win)
        keep = win & ok.any(axis=1)
        if np.array_equal(keep, win):
            break
        win = keep
    if not win.any():
        raise SynthesisFailure("invariance", np.where(safe)[0])
    ok = _pair_ok(model, win)
    inputs = {int(q): _ordered_inputs(model, ok[q])
              for q in np.where(win)[0]}
    steps = {q: 0 for q in inputs}
    return AbstractController(model.cell_id, "invariance", inputs, steps,
                              win, win.copy())


def solve_reach_avoid(model, target, safe, require=None, kind="reach"):
    """Backward reachability of target through safe states.

    Newly won states record the inputs available at their first winning
    iteration, which keeps the per-state step bound minimal.  require is an
    optional mask of states that must end up winning.
    """
    safe = np.asarray(safe, dtype=bool)
    win = np.asarray(target, dtype=bool) & safe
    inputs = {}
    steps = {int(q): 0 for q in np.where(win)[0]}
    k = 0
    while True:
        k += 1
        ok = _pair_ok(model, win)
        new = safe & ~win & ok.any(axis=1)
        if not new.any():
            break
        for q in np.where(new)[0]:
            inputs[int(q)] = _ordered_inputs(model, ok[q])
            steps[int(q)] = k
        win = win | new
    # target states may keep using any input that stays in the winning set
    ok = _pair_ok(model, win)
    for q in np.where(np.asarray(target, dtype=bool) & safe)[0]:
        inputs[int(q)] = _ordered_inputs(model, ok[q])
    if require is not None:
        missing = np.where(np.asarray(require, dtype=bool) & ~win)[0]
        if len(missing):
            raise SynthesisFailure(kind, missing)
    return AbstractController(model.cell_id, kind, inputs, steps, win,
                              np.asarray(target, dtype=bool) & safe)


def solve_reach_stay(model, target, safe, require=None):
    """Reach the maximal invariant subset of target, then hold it.

    The inner invariance stage shrinks target to its controlled-invariant
    core; the outer stage is plain reach-avoid into that core.  States in
    the core use the invariance inputs.
    """
    safe = np.asarray(safe, dtype=bool)
    tgt = np.asarray(target, dtype=bool) & safe
    inv = solve_invariance(model, tgt)
    ctrl = solve_reach_avoid(model, inv.winning, safe, require=require,
                             kind="stay")
    ctrl.inputs_by_state.update(inv.inputs_by_state)
    ctrl.target = inv.winning.copy()
    return ctrl


def verify_controller(model, ctrl):
    """Exhaustive adversarial soundness check of a stage controller.

    Every chosen input at every domain state must send all successors back
    into the winning set.  Returns the violation count.
    """
    bad = 0
    win = ctrl.winning
    for q, uu in ctrl.inputs_by_state.items():
        for j in uu:
            succ = model.successors_of(q, int(j))
            if len(succ) == 0 or not win[succ].all():
                bad += 1
    return bad


# ---------------------------------------------------------------------------
# region masks over a lattice
# ---------------------------------------------------------------------------

def _region_contains(region, pts):
    if hasattr(region, "contains_points"):
        return region.contains_points(pts)
    return geo.contains_points_2d(region, pts)


def region_mask(lattice, region, margin=0.0):
    """Lattice states whose planar projection lies in region with margin.

    The margin is checked on the four axis corners of the square of
    halfwidth margin around each point (exact for box-shaped regions and
    obstacles, conservative sampling otherwise).
    """
    pts = lattice.points[:, :2]
    ok = _region_contains(region, pts)
    if margin > 0.0:
        for sx in (-margin, margin):
            for sy in (-margin, margin):
                ok &= _region_contains(region, pts + np.array([sx, sy]))
    return ok


def obstacle_free_mask(lattice, obstacles, margin=0.0):
    """Lattice states whose margin square avoids every obstacle."""
    pts = lattice.points[:, :2]
    offs = [np.zeros(2)]
    if margin > 0.0:
        offs += [np.array([sx, sy]) for sx in (-margin, margin)
                 for sy in (-margin, margin)]
    ok = np.ones(lattice.n_points, dtype=bool)
    for off in offs:
        ok &= ~geo._points_in_any(list(obstacles), pts + off)
    return ok


# ---------------------------------------------------------------------------
# local and global controllers
# ---------------------------------------------------------------------------

@dataclass
class LocalController:
    """Sequenced stage controllers realizing one cell's local task."""

    cell_name: str
    model: object
    stages: list               # (goal name, mode, AbstractController)
    init_mask: np.ndarray
    phase: str = "prefix"

    def stage_for(self, idx):
        return self.stages[idx][2]


@dataclass
class GlobalController:
    """Path-ordered local controllers plus the mode supervisor data.

    The supervisor starts at mode 0, advances when the concrete state
    enters the next mode's initial region, and wraps from the last mode to
    loop_start (the first cycle-phase mode) for the omega suffix.
    """

    modes: list                # LocalController list in path order
    loop_start: int
    models_built: int = 0

    @property
    def n_modes(self):
        return len(self.modes)

    def total_transitions(self):
        return sum(m.model.n_transitions for m in self.modes)


@dataclass
class GlobalSynthesisResult:
    status: str                # "ok" | "null" | "failure"
    controller: GlobalController = None
    models_built: int = 0
    reason: str = ""

    @property
    def is_null(self):
        return self.status == "null"


def synthesize_local(spec, model, init_mask, safe_mask, goal_masks,
                     next_init_mask=None):
    """Stage controllers for one cell's local task.

    goal_masks pairs each of the spec's goals with its state mask.  A
    reach goal becomes a backward-reachability stage, a stay goal a
    reach-and-hold stage; a goal-free spec is plain invariance.  Each
    stage must cover the states the previous stage delivers.
    """
    stages = []
    current_init = init_mask
    if not spec.goals:
        ctrl = solve_invariance(model, safe_mask)
        missing = np.where(init_mask & ~ctrl.winning)[0]
        if len(missing):
            raise SynthesisFailure("invariance", missing)
        stages.append(("", "stay", ctrl))
    for goal, mask in zip(spec.goals, goal_masks):
        if goal.mode == "reach":
            ctrl = solve_reach_avoid(model, mask, safe_mask,
                                     require=current_init)
        else:
            ctrl = solve_reach_stay(model, mask, safe_mask,
                                    require=current_init)
        stages.append((goal.name, goal.mode, ctrl))
        current_init = ctrl.target
    return LocalController(spec.cell_name, model, stages, init_mask,
                           spec.phase)


def synthesize_all(realization, specs, model_factory, mask_factory,
                   release=False):
    """Global controller for a realized path, or Null without any build.

    model_factory(spec) supplies the cell's symbolic model;
    mask_factory(spec, model) returns (init, safe, goal mask list).
    Local synthesis runs in path order; models are only ever built for a
    realized path (the Null verdict costs zero constructions).  With
    release=True each model drops its transition arrays once its local
    controller is solved, keeping peak memory at one cell's worth.
    """
    if not realization.realized:
        return GlobalSynthesisResult(status="null", models_built=0,
                                     reason=realization.reason)
    modes = []
    built = 0
    for spec in specs:
        model = model_factory(spec)
        built += 1
        init, safe, goals = mask_factory(spec, model)
        try:
            modes.append(synthesize_local(spec, model, init, safe, goals))
        except SynthesisFailure as exc:
            return GlobalSynthesisResult(
                status="failure", models_built=built,
                reason="%s in cell %s" % (exc, spec.cell_name))
        if release and hasattr(model, "release_transitions"):
            model.release_transitions()
    loop = next((i for i, s in enumerate(specs) if s.phase == "cycle"),
                len(specs) - 1)
    gc = GlobalController(modes=modes, loop_start=loop, models_built=built)
    return GlobalSynthesisResult(status="ok", controller=gc,
                                 models_built=built)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_controller(gc, path):
    """Text table: one block per mode, one 'state : inputs' line per state."""
    with open(path, "w") as fh:
        fh.write("modes %d loop_start %d\n" % (gc.n_modes, gc.loop_start))
        for m, lc in enumerate(gc.modes):
            for s, (name, mode, ctrl) in enumerate(lc.stages):
                fh.write("mode %d cell %s stage %d kind %s goal %s\n"
                         % (m, lc.cell_name, s, ctrl.kind, name or "-"))
                for q in sorted(ctrl.inputs_by_state):
                    uu = ctrl.inputs_by_state[q]
                    fh.write("%d : %s\n"
                             % (q, " ".join(str(int(j)) for j in uu)))


def load_controller_tables(path):
    """Parse a saved controller back into per-(mode, stage) input tables."""
    tables = {}
    header = None
    key = None
    with open(path) as fh:
        header = fh.readline().split()
        for line in fh:
            parts = line.split()
            if parts[0] == "mode":
                key = (int(parts[1]), int(parts[5]))
                tables[key] = {"cell": parts[3], "kind": parts[7],
                               "goal": parts[9], "inputs": {}}
            else:
                q = int(parts[0])
                tables[key]["inputs"][q] = [int(t) for t in parts[2:]]
    return {"n_modes": int(header[1]), "loop_start": int(header[3]),
            "stages": tables}
