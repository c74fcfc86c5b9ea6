import numpy as np
import pytest

from zonoltl.geometry import Zonotope
from zonoltl.abstraction import (InputGrid, approximate_cell, build_input_map,
                                 build_symbolic_model, integrator_plant,
                                 Plant)
from zonoltl.synthesis import (AbstractController, GlobalSynthesisResult,
                               SynthesisFailure, load_controller_tables,
                               save_controller, solve_invariance,
                               solve_reach_avoid, solve_reach_stay,
                               synthesize_all, verify_controller,
                               _pair_ok)


def interval(lo, hi):
    return Zonotope(np.array([0.5 * (lo + hi)]),
                    np.array([[0.5 * (hi - lo)]]))


def integrator_model(grid, tau=0.5, mu=0.1, eps=0.05):
    plant = integrator_plant()
    lat = approximate_cell(interval(-1, 1), mu=mu)
    im = build_input_map(lat, plant, tau=tau, grid=np.array(grid))
    model = build_symbolic_model("cell", lat, im, plant, tau=tau,
                                 kind="frr", eps=eps)
    return lat, model


def oracle_reach_fixed_point(model, target, safe):
    """Brute-force backward iteration over the explicit transition table."""
    win = set(np.where(target & safe)[0])
    changed = True
    while changed:
        changed = False
        for q in range(model.n_states):
            if q in win or not safe[q]:
                continue
            for j in range(model.n_inputs):
                succ = model.successors_of(q, j)
                if len(succ) and all(int(s) in win for s in succ):
                    win.add(q)
                    changed = True
                    break
    return win


def oracle_invariance_fixed_point(model, safe):
    win = set(np.where(safe)[0])
    changed = True
    while changed:
        changed = False
        for q in sorted(win):
            ok = False
            for j in range(model.n_inputs):
                succ = model.successors_of(q, j)
                if len(succ) and all(int(s) in win for s in succ):
                    ok = True
                    break
            if not ok:
                win.discard(q)
                changed = True
    return win


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------

def test_invariance_full_cell_controller_exists():
    lat, model = integrator_model([[-0.5], [0.0], [0.5]])
    safe = np.ones(model.n_states, dtype=bool)
    ctrl = solve_invariance(model, safe)
    assert set(ctrl.domain) == oracle_invariance_fixed_point(model, safe)
    assert len(ctrl.domain) > 0
    # interior states keep an input pushing toward the center available
    mid = int(np.argmin(np.abs(lat.points[:, 0])))
    assert len(ctrl.inputs_by_state[mid]) > 0
    assert verify_controller(model, ctrl) == 0


def test_invariance_empty_safe_set_fails():
    _, model = integrator_model([[0.0]])
    with pytest.raises(SynthesisFailure):
        solve_invariance(model, np.zeros(model.n_states, dtype=bool))


def test_invariance_uncontrollable_drift_loses():
    def f(x, u):
        return np.ones_like(np.atleast_2d(x))

    plant = Plant("drift", f, np.array([0.0]), np.array([0.0]),
                  lipschitz=0.0)
    lat = approximate_cell(interval(-1, 1), mu=0.1)
    im = InputGrid(np.array([[0.0]]),
                   [np.array([0]) for _ in range(lat.n_points)], 0.0)
    model = build_symbolic_model("cell", lat, im, plant, tau=0.2,
                                 kind="frr", eps=0.1)
    with pytest.raises(SynthesisFailure):
        solve_invariance(model, np.ones(model.n_states, dtype=bool))


def test_reach_avoid_matches_oracle_and_steps_decrease():
    lat, model = integrator_model([[0.0], [0.5]])
    # band target: the successor spread (radius 2 eps) straddles a single
    # lattice point, so reach targets must be at least radius-wide
    target = lat.points[:, 0] >= 0.55
    safe = np.ones(model.n_states, dtype=bool)
    ctrl = solve_reach_avoid(model, target, safe)
    assert set(ctrl.domain) == oracle_reach_fixed_point(model, target, safe)
    assert ctrl.winning.all()
    # any chosen input strictly decreases the recorded step bound
    for q in ctrl.domain:
        if target[q]:
            continue
        j = int(ctrl.inputs_by_state[q][0])
        worst = max(ctrl.steps[int(s)] for s in model.successors_of(q, j))
        assert worst < ctrl.steps[q]
    assert verify_controller(model, ctrl) == 0


def test_reach_avoid_target_equals_init_zero_steps():
    lat, model = integrator_model([[0.0], [0.5]])
    target = np.zeros(model.n_states, dtype=bool)
    target[3] = True
    ctrl = solve_reach_avoid(model, target,
                             np.ones(model.n_states, dtype=bool),
                             require=target)
    assert ctrl.steps[3] == 0


def test_reach_avoid_unreachable_target_fails():
    # blocked middle: drive right is impossible without crossing unsafe
    lat, model = integrator_model([[0.0], [0.5]])
    n = model.n_states
    xs = lat.points[:, 0]
    safe = np.abs(np.abs(xs) - 0.5) > 0.15   # band around +-0.5 removed
    target = np.zeros(n, dtype=bool)
    target[int(np.argmax(xs))] = True
    init = np.zeros(n, dtype=bool)
    init[int(np.argmin(np.abs(xs)))] = True
    with pytest.raises(SynthesisFailure):
        solve_reach_avoid(model, target, safe, require=init)


def test_reach_stay_holds_target_core():
    lat, model = integrator_model([[-0.5], [0.0], [0.5]])
    xs = lat.points[:, 0]
    target = np.abs(xs - 0.5) <= 0.3
    safe = np.ones(model.n_states, dtype=bool)
    ctrl = solve_reach_stay(model, target, safe, require=safe)
    assert ctrl.target.any()
    # hold inputs keep every successor inside the invariant core
    for q in np.where(ctrl.target)[0]:
        for j in ctrl.inputs_by_state[q]:
            succ = model.successors_of(q, int(j))
            assert ctrl.target[succ].all()


def test_reach_stay_without_invariant_core_fails():
    def f(x, u):
        return np.ones_like(np.atleast_2d(x))

    plant = Plant("drift", f, np.array([0.0]), np.array([0.0]),
                  lipschitz=0.0)
    lat = approximate_cell(interval(-1, 1), mu=0.1)
    im = InputGrid(np.array([[0.0]]),
                   [np.array([0]) for _ in range(lat.n_points)], 0.0)
    model = build_symbolic_model("cell", lat, im, plant, tau=0.2,
                                 kind="frr", eps=0.1)
    target = np.abs(lat.points[:, 0]) <= 0.2
    with pytest.raises(SynthesisFailure):
        solve_reach_stay(model, target,
                         np.ones(model.n_states, dtype=bool))


def test_pair_ok_monotone_in_winning_set():
    _, model = integrator_model([[0.0], [0.5]])
    rng = np.random.default_rng(0)
    small = rng.random(model.n_states) < 0.4
    large = small | (rng.random(model.n_states) < 0.4)
    ok_s = _pair_ok(model, small)
    ok_l = _pair_ok(model, large)
    assert not np.any(ok_s & ~ok_l)


# ---------------------------------------------------------------------------
# global composition
# ---------------------------------------------------------------------------

class _FakeRealization:
    def __init__(self, realized, reason=""):
        self.realized = realized
        self.reason = reason


class _FakeSpec:
    def __init__(self, name, goals=(), phase="prefix"):
        self.cell_name = name
        self.goals = list(goals)
        self.phase = phase


class _FakeGoal:
    def __init__(self, mode, name):
        self.mode = mode
        self.name = name


def test_synthesize_all_null_builds_nothing():
    calls = []

    def factory(spec):
        calls.append(spec.cell_name)

    res = synthesize_all(_FakeRealization(False, "no admissible sub-path"),
                         [_FakeSpec("a")], factory, None)
    assert res.is_null
    assert res.models_built == 0
    assert calls == []
    assert "no admissible" in res.reason


def test_synthesize_all_chains_controllers():
    lat, model = integrator_model([[-0.5], [0.0], [0.5]])
    xs = lat.points[:, 0]
    init = xs <= -0.7
    handoff = xs >= 0.7
    spec1 = _FakeSpec("c1", [_FakeGoal("reach", "h")])
    spec2 = _FakeSpec("c2", [_FakeGoal("stay", "s")], phase="cycle")
    masks = {"c1": (init, np.ones_like(init), [handoff]),
             "c2": (handoff, np.ones_like(init), [np.abs(xs) <= 0.3])}

    res = synthesize_all(_FakeRealization(True),
                         [spec1, spec2],
                         lambda s: model,
                         lambda s, m: masks[s.cell_name])
    assert res.status == "ok"
    gc = res.controller
    assert gc.n_modes == 2
    assert gc.loop_start == 1
    assert res.models_built == 2
    assert gc.total_transitions() == 2 * model.n_transitions
    # composition: mode 0's final target covers mode 1's initial states
    assert np.all(gc.modes[0].stages[-1][2].winning[handoff])


def test_synthesize_all_reports_failing_cell():
    lat, model = integrator_model([[0.0]])
    xs = lat.points[:, 0]
    init = xs <= -0.7
    spec = _FakeSpec("stuck", [_FakeGoal("reach", "h")])
    masks = (init, np.ones_like(init), [xs >= 0.7])
    res = synthesize_all(_FakeRealization(True), [spec],
                         lambda s: model, lambda s, m: masks)
    assert res.status == "failure"
    assert "stuck" in res.reason


def test_controller_roundtrip(tmp_path):
    lat, model = integrator_model([[-0.5], [0.0], [0.5]])
    xs = lat.points[:, 0]
    init = xs <= -0.7
    spec = _FakeSpec("c1", [_FakeGoal("reach", "h")])
    masks = (init, np.ones_like(init), [xs >= 0.7])
    res = synthesize_all(_FakeRealization(True), [spec],
                         lambda s: model, lambda s, m: masks)
    p = tmp_path / "ctrl.txt"
    save_controller(res.controller, p)
    loaded = load_controller_tables(p)
    assert loaded["n_modes"] == 1
    stage = loaded["stages"][(0, 0)]
    ctrl = res.controller.modes[0].stages[0][2]
    assert stage["cell"] == "c1"
    for q, uu in ctrl.inputs_by_state.items():
        assert stage["inputs"][q] == [int(j) for j in uu]
