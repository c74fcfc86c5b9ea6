"""Controller refinement and closed-loop simulation.

The abstract controllers act on the concrete system through a quantizer:
each sampled state is mapped to its nearest lattice point in the active
cell's G-norm (lowest index on ties), the abstract input choice is applied
for one sampling period, and a finite-memory supervisor advances stages
when the quantized state enters the current stage's target and modes when
the cell's final handoff is reached.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .abstraction import integrate_flow, wrap_periodic


@dataclass
class Trajectory:
    """Closed-loop record sampled every tau seconds."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    modes: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    abstract: list = field(default_factory=list)   # lattice indices
    labels: list = field(default_factory=list)     # label sets
    quant_dists: list = field(default_factory=list)
    domain_misses: list = field(default_factory=list)  # (step, mode, state)

    @property
    def n_steps(self):
        return len(self.states)


class RefinedController:
    """Concrete-state feedback composed from the abstract controllers.

    Per mode, quantize the state onto the cell lattice (nearest point in
    G-norm, lowest index on ties), then look up the active stage's input
    table.  The quantization distance must stay within the models'
    precision (checked on every call).
    """

    def __init__(self, global_controller, periodic_axes=None):
        self.gc = global_controller
        self.wrap = dict(periodic_axes or {})

    def quantize(self, mode, x):
        lat = self.gc.modes[mode].model.lattice
        d = lat.gnorm_to_points(x, wrap=self.wrap)
        q = int(np.argmin(d))
        return q, float(d[q])

    def input_index(self, mode, stage, q):
        ctrl = self.gc.modes[mode].stages[stage][2]
        uu = ctrl.inputs_by_state.get(q)
        if uu is None or len(uu) == 0:
            return None
        return int(uu[0])

    def input_vector(self, mode, j):
        return self.gc.modes[mode].model.inputs[j]


def refine(global_controller, periodic_axes=None):
    """Quantizer-composed concrete controller for a global controller."""
    return RefinedController(global_controller, periodic_axes)


def _entered(refined, nxt, x):
    """Whether x can be handed to mode nxt with its guarantees intact.

    Requires the next quantizer to relate x within its precision and the
    quantized state to lie in the winning set of the mode's first stage.
    """
    lc = refined.gc.modes[nxt]
    q, dist = refined.quantize(nxt, x)
    if dist > lc.model.eps + geo.TOL:
        return False
    return bool(lc.stages[0][2].winning[q])


def _label_set(regions, x):
    # boundary grazing resolved by the signed membership margin
    out = set()
    for name, region in regions.items():
        if geo.membership_margin(region, x[:region.dim]) >= 0.0:
            out.add(name)
    return out


def simulate(refined, plant, x0, tau, horizon, regions=None, steps=10,
             stop_on_miss=True):
    """Sampled-data closed loop from x0 for at most horizon steps.

    The supervisor advances the stage when the quantized state enters the
    stage target, and the mode when the cell's last stage completes; the
    omega suffix wraps from the final mode to the controller's loop start.
    A quantized state outside the active input table is recorded as a
    domain miss.
    """
    gc = refined.gc
    regions = regions or {}
    traj = Trajectory()
    x = np.asarray(x0, dtype=float).copy()
    mode, stage = 0, 0
    for k in range(horizon + 1):
        q, dist = refined.quantize(mode, x)
        # stage/mode advance on target entry, before choosing the input
        advanced = True
        while advanced:
            advanced = False
            lc = gc.modes[mode]
            name, kind, ctrl = lc.stages[stage]
            if kind == "stay":
                break
            if ctrl.target[q]:
                if stage + 1 < len(lc.stages):
                    stage += 1
                    advanced = True
                elif not (mode == gc.n_modes - 1 and
                          gc.loop_start == gc.n_modes - 1):
                    nxt = mode + 1 if mode + 1 < gc.n_modes \
                        else gc.loop_start
                    # handoff only once the next mode can take over; until
                    # then keep the current mode's target-holding inputs
                    if not _entered(refined, nxt, x):
                        break
                    mode, stage = nxt, 0
                    q, dist = refined.quantize(mode, x)
                    advanced = True

        lat = gc.modes[mode].model.lattice
        assert dist <= gc.modes[mode].model.eps + geo.TOL, \
            "quantizer left the relation at step %d" % k

        traj.times.append(k * tau)
        traj.states.append(x.copy())
        traj.modes.append(mode)
        traj.stages.append(stage)
        traj.abstract.append(q)
        traj.labels.append(_label_set(regions, x))
        traj.quant_dists.append(dist)
        if k == horizon:
            traj.inputs.append(np.zeros(len(plant.input_lo)))
            break
        j = refined.input_index(mode, stage, q)
        if j is None:
            traj.domain_misses.append((k, mode, x.copy()))
            traj.inputs.append(np.zeros(len(plant.input_lo)))
            if stop_on_miss:
                break
            continue
        u = refined.input_vector(mode, j)
        traj.inputs.append(np.asarray(u, dtype=float))
        x = integrate_flow(plant, x.reshape(1, -1), u, tau, steps)[0]
        if plant.periodic_axes:
            x = wrap_periodic(x, lat.cell.c, plant.periodic_axes)[0]
    return traj


def extract_word(traj):
    """Label word of a trajectory: finite prefix plus detected cycle.

    The cycle is found from the first repeated (mode, stage, lattice
    point, label set) signature; when no signature repeats the last
    position is treated as a self-loop cycle.
    """
    sigs = {}
    word = traj.labels
    for k in range(traj.n_steps):
        sig = (traj.modes[k], traj.stages[k], traj.abstract[k],
               frozenset(traj.labels[k]))
        if sig in sigs:
            start = sigs[sig]
            return word[:start], word[start:k]
        sigs[sig] = k
    return word[:-1], word[-1:]


def save_trajectory_csv(traj, path):
    """CSV dump: t, state, input, mode, stage and the active labels."""
    n = len(traj.states[0])
    m = len(traj.inputs[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + ["x%d" % (i + 1) for i in range(n)]
                   + ["u%d" % (i + 1) for i in range(m)]
                   + ["mode", "stage", "labels"])
        for k in range(traj.n_steps):
            w.writerow(["%.6f" % traj.times[k]]
                       + ["%.6f" % v for v in traj.states[k]]
                       + ["%.6f" % v for v in traj.inputs[k]]
                       + [traj.modes[k], traj.stages[k],
                          " ".join(sorted(traj.labels[k]))])


def plot_trajectory(traj, path, cells=None, obstacles=None, regions=None):
    """Planar plot of the closed loop over cells, obstacles and regions."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Polygon as MplPolygon

    fig, ax = plt.subplots(figsize=(7, 7))
    for region in (cells or {}).values():
        ax.add_patch(MplPolygon(geo.to_vertices_2d(region), closed=True,
                                fill=False, edgecolor="0.7", lw=0.8))
    for region in (obstacles or []):
        ax.add_patch(MplPolygon(geo.to_vertices_2d(region), closed=True,
                                facecolor="0.2", edgecolor="none"))
    for name, region in (regions or {}).items():
        ax.add_patch(MplPolygon(geo.to_vertices_2d(region), closed=True,
                                facecolor="tab:green", alpha=0.4,
                                edgecolor="none"))
        c = np.mean(geo.to_vertices_2d(region), axis=0)
        ax.annotate(name, c, ha="center", va="center", fontsize=8)
    xy = np.array([s[:2] for s in traj.states])
    ax.plot(xy[:, 0], xy[:, 1], "-", color="tab:blue", lw=1.2)
    ax.plot(xy[0, 0], xy[0, 1], "o", color="tab:red", ms=6)
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def plot_inputs(traj, path):
    """Staircase plot of the applied input trace."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    U = np.array(traj.inputs)
    t = np.array(traj.times)
    fig, axes = plt.subplots(U.shape[1], 1, figsize=(7, 2.2 * U.shape[1]),
                             sharex=True, squeeze=False)
    for i, ax in enumerate(axes[:, 0]):
        ax.step(t, U[:, i], where="post")
        ax.set_ylabel("u%d" % (i + 1))
    axes[-1, 0].set_xlabel("t")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
