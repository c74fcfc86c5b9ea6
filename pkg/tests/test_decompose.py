import numpy as np
import pytest

from zonoltl import geometry as geo
from zonoltl.geometry import FreeRegion, Zonotope
from zonoltl.ltlspec import AcceptingPath, check_lasso, decompose, parse_ltl
from zonoltl.topograph import (Obstacles, RealizationResult, build_graph,
                               generalize, verify_realization)
from test_topograph import box, row_cover


def corridor_realization():
    cover = row_cover(n=3)
    obs = Obstacles([])
    g = build_graph(cover, obs, eps=0.2)
    props = {"p0": box([0.5, 0.5], [1.0, 1.0]),
             "p1": box([8.0, 0.5], [8.5, 1.0])}
    gg = generalize(g, props)
    path = AcceptingPath(["p0"], ["p1"], props)
    res = verify_realization(gg, path)
    assert res.realized
    return res, path, obs.expanded(0.2)


def test_decompose_corridor_structure():
    res, path, obs = corridor_realization()
    specs, composed = decompose(res, path, obs)
    assert [s.cell_name for s in specs] == ["v1", "v2", "v3"]
    # first cell: safety plus one handoff reach, no internal goals
    s0 = specs[0]
    assert s0.formula == "G(v1) & F(v1 & v2)"
    assert len(s0.goals) == 1 and s0.goals[0].mode == "reach"
    # middle cell enters from the shared overlap
    s1 = specs[1]
    assert s1.formula == "G(v2) & F(v2 & v3)"
    w = s1.init_region.witness(0.05)
    assert geo.contains_point(res.regions["v1"], w)
    assert geo.contains_point(res.regions["v2"], w)
    # last cell holds the cycle proposition forever
    s2 = specs[2]
    assert s2.target_region is None
    assert len(s2.goals) == 1 and s2.goals[0].mode == "stay"
    assert s2.formula == "G(v3) & F(G(p1))"
    assert composed == " & ".join("(%s)" % s.formula for s in specs)


def test_decompose_chain_property():
    res, path, obs = corridor_realization()
    specs, _ = decompose(res, path, obs)
    for a, b in zip(specs, specs[1:]):
        pts = a.target_region.grid_points(0.05)
        assert len(pts) > 0
        assert np.all(b.init_region.contains_points(pts))
        pts = b.init_region.grid_points(0.05)
        assert np.all(a.target_region.contains_points(pts))


def test_decompose_narrows_handoff_to_prop_region():
    # p1 sits in the overlap of both cells: the handoff becomes R(p1)
    cover = row_cover(n=2)
    obs = Obstacles([])
    g = build_graph(cover, obs, eps=0.2)
    props = {"p0": box([0.5, 0.5], [1.0, 1.0]),
             "p1": box([2.9, 0.5], [3.1, 1.0]),
             "p2": box([5.0, 2.0], [5.5, 2.5])}
    gg = generalize(g, props)
    path = AcceptingPath(["p0", "p1"], ["p2"], props)
    res = verify_realization(gg, path)
    assert res.realized
    specs, _ = decompose(res, path, obs.expanded(0.2))
    s0 = specs[0]
    assert s0.formula == "G(v1) & F(v1 & v2 & p1)"
    pts = s0.target_region.grid_points(0.02)
    assert len(pts) > 0
    assert np.all(geo.contains_points_2d(props["p1"], pts))


def test_decompose_single_cell_cases():
    cell = Zonotope.from_box(np.array([0.0, 0.0]), np.array([2.0, 2.0]))
    small = box([0.5, 0.5], [1.0, 1.0])
    res = RealizationResult("realized", [], ["p"], ["v1"], {},
                            {}, [("p", "p", ["v1"], True)],
                            {"v1": cell})
    path = AcceptingPath([], ["p"], {"p": small})
    specs, composed = decompose(res, path, [])
    assert len(specs) == 1
    assert specs[0].goals[0].mode == "stay"
    # when the proposition covers the whole cell only safety remains
    wide = box([-0.5, -0.5], [2.5, 2.5])
    path2 = AcceptingPath([], ["p"], {"p": wide})
    specs2, composed2 = decompose(res, path2, [])
    assert specs2[0].goals == []
    assert composed2 == "(G(v1))"


def test_decompose_cycle_wraps_and_loops():
    v1 = Zonotope.from_box(np.array([0.0, 0.0]), np.array([4.0, 3.0]))
    v2 = Zonotope.from_box(np.array([2.0, 0.0]), np.array([6.0, 3.0]))
    regions = {"v1": v1, "v2": v2}
    props = {"p0": box([0.2, 0.2], [0.7, 0.7]),
             "p1": box([2.5, 0.5], [3.0, 1.0]),
             "p2": box([3.2, 1.5], [3.7, 2.0])}
    res = RealizationResult(
        "realized", ["p0", "v1"], ["p1", "v2", "p2", "v1"],
        ["v1", "v2"], {}, {},
        [("p0", "p1", ["v1"], False),
         ("p1", "p2", ["v2"], True),
         ("p2", "p1", ["v1"], True)],
        regions)
    path = AcceptingPath(["p0"], ["p1", "p2"], props)
    specs, composed = decompose(res, path, [])
    assert [s.phase for s in specs] == ["prefix", "cycle", "cycle"]
    # the final cycle cell loops back to the first cycle cell
    assert specs[-1].target_region is not None
    assert "G(F(" in composed
    assert composed.startswith("(G(v1) & F(v1 & v2 & p1))")


def test_decompose_word_satisfies_global_formula():
    # a word tracing init/goal witnesses satisfies the original formula
    res, path, obs = corridor_realization()
    specs, _ = decompose(res, path, obs)
    props = path.regions

    def labels(pt):
        return {p for p, r in props.items()
                if geo.contains_points_2d(r, pt[None])[0]}

    start = FreeRegion(props["p0"], obs).witness(0.05)
    word = [labels(start)]
    for s in specs:
        for goal in s.goals:
            word.append(labels(goal.region.witness(0.05)))
    prefix, cycle = word[:-1], [word[-1]]
    formula = parse_ltl("(!p1 U p0) & F p1 & F G p1")
    assert check_lasso(formula, prefix, cycle)


def test_decompose_rejects_null():
    res = RealizationResult("null")
    with pytest.raises(ValueError):
        decompose(res, AcceptingPath([], ["p"], {"p": None}), [])
