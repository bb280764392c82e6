"""Tests for Minkowski regions, two-cone feasibility, the reductions, the lift and JLD."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import binary_erosion

from infralab.jld import (
    BudgetError,
    FrameError,
    MinkowskiGrid,
    Region,
    SceneError,
    SupportError,
    WedgeFrame,
    breve_lift,
    d3_expected,
    d3_grid,
    d3_scene,
    d3_wedge,
    direct_inverse_transform,
    geom_fixture,
    hyperboloid_bump,
    jld_convergence_study,
    jld_transform_1p1,
    lifted_double_cone,
    load_scene,
    make_region,
    minkowski_dot,
    r_fixpoint,
    r_tilde_step,
    r_w_step,
    two_cone_feasible,
    vanishing_on_double_cone,
)

G11 = MinkowskiGrid.symmetric(1, 4.0, 0.25)
W11 = WedgeFrame([1.0, 1.0], [-1.0, 1.0])


# -- grids, primitives and scenes ---------------------------------------------------------


def test_grid_geometry_and_roundtrip():
    g = MinkowskiGrid.symmetric(2, 2.0, 0.5)
    assert g.shape == (8, 8, 8) and g.size == 512 and g.s == 2 and g.dim == 3
    np.testing.assert_allclose(g.axis(0), -1.75 + 0.5 * np.arange(8))
    assert MinkowskiGrid.from_dict(g.to_dict()).same_as(g)
    assert MinkowskiGrid.from_dict({"dim": 2, "half_width": 2.0, "spacing": 0.5}).same_as(g)
    assert g.points().shape == (512, 3)


@pytest.mark.parametrize("extent, spacing", [(((0, 1),), 0.1), (((0, 1), (0, 1)), -0.1),
                                             (((0, 1), (1, 1)), 0.1), (((0, 1), (0, 1)), (0.1,))])
def test_grid_rejects_bad_specs(extent, spacing):
    with pytest.raises(SceneError):
        MinkowskiGrid(extent, spacing)


def test_future_cone_is_upper_triangle():
    R = make_region(G11, [{"kind": "cone"}])
    X0, X1 = G11.mesh()
    np.testing.assert_array_equal(R.mask, X0 > np.abs(X1))
    assert R.verify_spec()


def test_double_cone_is_diamond():
    R = make_region(G11, [{"kind": "double_cone", "a": [1.0, 0.0], "b": [-1.0, 0.0]}])
    X0, X1 = G11.mesh()
    np.testing.assert_array_equal(R.mask, np.abs(X0) + np.abs(X1) < 1.0)


def _d3_oracle(grid):
    """Direct per-cell evaluation of the three pairs of half-line cones."""
    X0, X1, X2 = grid.mesh()
    mask = np.zeros(grid.shape, bool)
    for x1, sel in ((2.0, X2 > 0), (-2.0, X2 < 0), (0.0, np.ones_like(X2, bool))):
        x0 = 3.0 if x1 == 0.0 else 1.0
        mask |= sel & (X0 - x0 > np.abs(X1 - x1))
        mask |= sel & (-(X0 + x0) > np.abs(X1 - x1))
    return mask


def test_d3_scene_matches_hand_rasterized_oracle():
    grid = d3_grid(32)
    G = d3_scene(grid)
    np.testing.assert_array_equal(G.mask, _d3_oracle(grid))
    assert G.verify_spec()


def test_set_operations_and_ops_tree():
    a = {"kind": "cone", "sign": 1}
    b = {"kind": "box", "lo": [-2.0, -2.0], "hi": [2.0, 2.0]}
    A = make_region(G11, [a])
    B = make_region(G11, [b])
    for op, expect in (("union", A | B), ("intersect", A & B), ("difference", A - B)):
        R = make_region(G11, {"primitives": [a, b], "ops": {"op": op, "args": [0, 1]}})
        assert R.equals(expect) and R.verify_spec()
    C = make_region(G11, {"primitives": [a], "ops": {"op": "complement", "args": [0]}})
    assert C.equals(~A)
    assert (A & ~A).is_empty() and (A | ~A).count() == G11.size
    assert (A & B).subset_of(A) and not A.subset_of(B)


@pytest.mark.parametrize("spec", [
    [{"kind": "sphere"}],
    [{"kind": "cone", "apex": [0.0, 0.0, 0.0]}],
    {"primitives": [{"kind": "cone"}], "ops": {"op": "xor", "args": [0]}},
    {"primitives": [{"kind": "cone"}], "ops": {"op": "union", "args": [3]}},
    {"primitives": [{"kind": "cone"}], "ops": {"op": "complement", "args": [0, 0]}},
    [{"kind": "mass_band", "mass": [0.0, 1.0], "sheet": "up"}],
    [{"kind": "halfline_cone", "point": [0, 0], "direction": [0, 1]}],
])
def test_scene_errors(spec):
    with pytest.raises(SceneError):
        make_region(G11, spec)


def test_mismatched_grids_and_shapes():
    other = MinkowskiGrid.symmetric(1, 4.0, 0.5)
    with pytest.raises(SceneError):
        Region.empty(G11) | Region.empty(other)
    with pytest.raises(SceneError):
        Region(G11, np.zeros((3, 3), bool))


def test_translate_by_whole_cells():
    R = make_region(G11, [{"kind": "box", "lo": [-1.0, -1.0], "hi": [1.0, 1.0]}])
    T = R.translate((2, -3))
    S = make_region(G11, [{"kind": "box", "lo": [-0.5, -1.75], "hi": [1.5, 0.25]}])
    assert T.equals(S)
    assert R.translate((40, 0)).is_empty()


def test_scene_json_and_pbm_export(tmp_path):
    scene = {"grid": {"dim": 1, "half_width": 1.0, "spacing": 0.5},
             "primitives": [{"kind": "cone"}]}
    p = tmp_path / "scene.json"
    p.write_text(json.dumps(scene))
    R = load_scene(p)
    assert R.count() == 2          # (0.25, +-0.25) fail the strict inequality; (0.75, +-0.25)
    out = R.to_pbm(tmp_path / "r.pbm")
    lines = out.read_text().splitlines()
    assert lines[0] == "P1" and lines[1] == "4 4"
    assert sum(row.count("1") for row in lines[2:]) == 2
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["cells"] == 2 and meta["shape"] == [4, 4]
    with pytest.raises(SceneError):
        load_scene({"primitives": []})


# -- wedge frames ------------------------------------------------------------------------------------


@pytest.mark.parametrize("kp, km", [([1, 1, 0], [-1, 1, 0]), ([1, 0, 1], [-1, 0.6, -0.8]),
                                    ([2, 0, 2, 0], [-1, 1, 0, 0])])
def test_wedge_frame_invariants(kp, km):
    W = WedgeFrame(kp, km)
    inv = W.check_invariants()
    assert inv["k_plus_null"] <= 1e-10 and inv["k_minus_null"] <= 1e-10
    assert inv["k_plus_k_minus"] < 0
    assert inv["reconstruction_residual"] <= 1e-12
    assert WedgeFrame.from_dict(W.to_dict()).to_dict() == W.to_dict()
    # points of W and of -W are disjoint
    X = np.random.default_rng(0).normal(size=(500, W.dim))
    assert not np.any(W.contains(X) & W.reflected().contains(X))


@pytest.mark.parametrize("kp, km", [([1, 0.5, 0], [-1, 1, 0]), ([-1, 1, 0], [1, 1, 0]),
                                    ([1, 1, 0], [-1, -1, 0]), ([1, 1], [-1, 1, 0])])
def test_wedge_frame_errors(kp, km):
    with pytest.raises(FrameError):
        WedgeFrame(kp, km)


def test_wedge_dimension_mismatch():
    with pytest.raises(FrameError):
        r_w_step(Region.empty(G11), d3_wedge())


# -- two-cone feasibility -------------------------------------------------------------------------------


def _witness_ok(P, a_plus, a_minus):
    d = a_plus - a_minus
    if not (d[0] > 0 and minkowski_dot(d, d) > 0):
        return False
    up, lo = P - a_plus, a_minus - P
    in_up = (up[:, 0] > 0) & (minkowski_dot(up, up) > 0)
    in_lo = (lo[:, 0] > 0) & (minkowski_dot(lo, lo) > 0)
    return bool(np.all(in_up | in_lo))


def test_single_point_and_empty_set_are_feasible():
    ok, (ap, am) = two_cone_feasible([[0.3, -0.2]])
    assert ok and _witness_ok(np.array([[0.3, -0.2]]), ap, am)
    ok, (ap, am) = two_cone_feasible(np.zeros((0, 3)))
    assert ok and ap[0] > 0 and np.array_equal(am, -ap)


def test_threshold_split_example():
    # light-cone coordinates (u, v) = (1, 1) and (-1, -1), i.e. points (1, 0) and (-1, 0)
    P = np.array([[1.0, 0.0], [-1.0, 0.0]])
    win = [(-1.5, 1.5), (-1.5, 1.5)]
    ok, (ap, am) = two_cone_feasible(P, window=win)
    assert ok and _witness_ok(P, ap, am)
    # apices lie in the window
    assert np.all(np.abs(ap) < 1.5) and np.all(np.abs(am) < 1.5)


def test_filled_window_is_infeasible():
    box = ~Region.empty(G11)
    assert two_cone_feasible(box.points(), window=G11.extent) == (False, None)


def _brute_force(P, window, margin, step):
    """Scan apex pairs on a lattice inside the shrunk window."""
    axes = [np.arange(lo + margin + 1e-9, hi - margin, step) for lo, hi in window]
    A = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(window))
    up = P[None, :, :] - A[:, None, :]
    fut = (up[..., 0] > 0) & (minkowski_dot(up, up) > 0)        # (apex, point)
    past = (-up[..., 0] > 0) & (minkowski_dot(up, up) > 0)
    for i in range(len(A)):
        d = A[i] - A
        timelike = (d[:, 0] > 0) & (minkowski_dot(d, d) > 0)
        cover = fut[i][None, :] | past
        if np.any(timelike & np.all(cover, axis=1)):
            return True
    return False


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_feasibility_agrees_with_apex_scan(seed, n):
    rng = np.random.default_rng(seed)
    win = [(-2.0, 2.0), (-2.0, 2.0)]
    P = rng.uniform(-1.5, 1.5, size=(n, 2))
    ok, w = two_cone_feasible(P, window=win)
    found = _brute_force(P, win, 0.0, 0.125)
    if found:                      # the lattice scan is a sufficient condition
        assert ok
    if ok:
        assert _witness_ok(P, *w)
        assert np.all(np.abs(np.array(w)) <= 2.0)


def test_d3_slab_with_both_side_pieces_is_infeasible():
    grid = d3_grid(48)
    G = d3_scene(grid)
    W = d3_wedge()
    X = G.points()
    # a thin slab around x2 = 0 contains pieces of G1 (x2 > 0) and G2 (x2 < 0) as well as G3
    sel = np.abs(X[:, 2]) <= 0.25 + 1e-9
    ok, _ = two_cone_feasible(X[sel], window=grid.extent, depth=0.25, margin=0.25, frame=W,
                              perp_center=[0.0])
    assert not ok
    # the slab on G1 alone is feasible
    sel1 = (X[:, 2] >= 1.0) & (X[:, 2] <= 2.0)
    assert two_cone_feasible(X[sel1], window=grid.extent, margin=0.25, frame=W)[0]


# -- reductions -----------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def d3():
    grid = d3_grid(48)
    G = d3_scene(grid)
    W = d3_wedge()
    return grid, G, W, r_w_step(G, W)


def test_d3_example_first_step_is_the_central_slice(d3):
    grid, G, W, R1 = d3
    E = d3_expected(grid)
    assert E.count() > 0
    diff = (R1 - E) | (E - R1)
    # equality within a 1-cell layer around the analytic slice
    near = binary_erosion(~E.mask, iterations=1)
    assert not np.any(diff.mask & near)


def test_d3_example_second_step_is_empty_and_not_idempotent(d3):
    grid, G, W, R1 = d3
    R2 = r_w_step(R1, W)
    assert R2.is_empty() and R1.count() > R2.count()
    fp = r_fixpoint(G, [W])
    assert fp.converged and fp.iterations == 2 and fp.region.is_empty()
    assert [c for _, c in fp.trace] == [G.count(), R1.count(), 0]


def test_geom_fixture_is_removed_in_one_step():
    grid = MinkowskiGrid.symmetric(2, 6.0, 0.25)
    F = geom_fixture(grid, [1.0, 0.3, 0.0], [-1.0, 0.0, 0.0])
    R = r_w_step(F, d3_wedge())
    assert F.count() > 0
    assert R.count() == 0 or R.boundary_distance()[R.mask].max() <= 2
    with pytest.raises(ValueError):
        geom_fixture(grid, [0.0, 1.0, 0.0], [0.0, 0.0, 0.0])


@pytest.mark.parametrize("step", [r_w_step, r_tilde_step])
def test_empty_maps_to_empty(step):
    assert step(Region.empty(G11), W11).is_empty()


def _random_scene(rng, grid, k=3):
    prims = []
    for _ in range(k):
        kind = rng.choice(["cone", "double_cone", "box", "mass_band"])
        c = rng.uniform(-2.5, 2.5, size=2)
        if kind == "cone":
            prims.append({"kind": "cone", "apex": c.tolist(), "sign": int(rng.choice([-1, 1]))})
        elif kind == "double_cone":
            hgt = rng.uniform(0.5, 2.0)
            prims.append({"kind": "double_cone", "a": [c[0] + hgt, c[1]], "b": [c[0] - hgt, c[1]]})
        elif kind == "box":
            w = rng.uniform(0.3, 1.5, size=2)
            prims.append({"kind": "box", "lo": (c - w).tolist(), "hi": (c + w).tolist()})
        else:
            prims.append({"kind": "mass_band", "center": c.tolist(),
                          "mass": sorted(rng.uniform(0, 2, size=2).tolist()),
                          "sheet": str(rng.choice(["+", "-", "both"]))})
    return make_region(grid, prims)


@pytest.mark.parametrize("step", [r_w_step, r_tilde_step])
@pytest.mark.parametrize("seed", range(4))
def test_reductions_are_contracting_and_isotone(step, seed):
    rng = np.random.default_rng(seed)
    G2 = _random_scene(rng, G11, 4)
    G1 = G2 & _random_scene(rng, G11, 3)
    r1, r2 = step(G1, W11), step(G2, W11)
    assert r1.subset_of(G1) and r2.subset_of(G2)
    assert r1.subset_of(r2)


def test_reduction_is_order_independent():
    rng = np.random.default_rng(7)
    G = _random_scene(rng, G11, 5)
    rev = lambda f, items: map(f, list(items)[::-1])   # noqa: E731
    assert r_w_step(G, W11).equals(r_w_step(G, W11, map_fn=rev))
    _, info = r_w_step(G, W11, return_info=True)
    assert info["removed"] == G.count() - r_w_step(G, W11).count()


def test_one_sheet_band_is_removed_by_a_suitable_set():
    G = make_region(G11, [{"kind": "mass_band", "center": [0.125, 0.125], "mass": [0.5, 2.0],
                           "sheet": "+"}])
    assert G.count() > 0
    assert r_tilde_step(G, W11).is_empty()


def test_two_sheet_band_is_a_tilde_fixed_point():
    G = make_region(G11, [{"kind": "mass_band", "center": [0.125, 0.125], "mass": [0.5, 2.0]}])
    assert r_tilde_step(G, W11).equals(G)
    fp = r_fixpoint(G, [W11], mode="tilde")
    assert fp.converged and fp.iterations == 1 and fp.region.equals(G)


def test_filled_window_is_a_plain_fixed_point():
    G = ~Region.empty(G11)
    fp = r_fixpoint(G, [W11])
    assert fp.converged and fp.iterations == 1 and fp.region.equals(G)


def test_more_wedges_remove_more():
    rng = np.random.default_rng(3)
    G = _random_scene(rng, G11, 5)
    one = r_fixpoint(G, [W11]).region
    two = r_fixpoint(G, [W11, W11.reflected()]).region
    assert two.subset_of(one)


def test_fixpoint_cap_and_arguments():
    grid = d3_grid(48)
    G = d3_scene(grid)
    fp = r_fixpoint(G, [d3_wedge()], max_iter=1)
    assert not fp.converged and fp.iterations == 1 and fp.region.count() > 0
    with pytest.raises(ValueError):
        r_fixpoint(G, [])
    with pytest.raises(ValueError):
        r_fixpoint(G, [d3_wedge()], mode="fancy")


# -- breve lift ------------------------------------------------------------------------------------------


def _lift_oracle(G, K):
    """Union of lifted double cones over all cell-centre apex pairs whose open diamond lies in G."""
    g = G.grid
    h = g.spacing[0]
    n0, n1 = g.shape
    ii, jj = np.meshgrid(np.arange(-1, n0 + 1), np.arange(-1, n1 + 1), indexing="ij")
    U, V = (ii + jj).ravel(), (ii - jj).ravel()
    inside = ((ii >= 0) & (ii < n0) & (jj >= 0) & (jj < n1)).ravel()
    good = np.zeros(U.size, bool)
    good[inside] = G.mask[ii.ravel()[inside], jj.ravel()[inside]]
    X0 = g.extent[0][0] + h * (ii.ravel() + 0.5)
    X1 = g.extent[1][0] + h * (jj.ravel() + 0.5)
    grid3 = MinkowskiGrid(g.extent + ((-(K + 0.5) * h, (K + 0.5) * h),), h)
    out = np.zeros(grid3.shape, bool)
    for a in range(U.size):
        for b in range(U.size):
            if not (U[a] > U[b] and V[a] > V[b]):
                continue
            interior = (U > U[b]) & (U < U[a]) & (V > V[b]) & (V < V[a])
            if np.all(good[interior]) and _diamond_in_pad(U[a], V[a], U[b], V[b], n0, n1):
                out |= lifted_double_cone(grid3, [X0[a], X1[a]], [X0[b], X1[b]])
    return out


def _diamond_in_pad(ua, va, ub, vb, n0, n1):
    """Every interior lattice site of the diamond lies in the 1-cell padded window."""
    for u in range(ub + 1, ua):
        for v in range(vb + 1, va):
            if (u + v) % 2:
                continue
            i, j = (u + v) // 2, (u - v) // 2
            if not (-1 <= i <= n0 and -1 <= j <= n1):
                return False
    return True


@pytest.mark.parametrize("seed", range(3))
def test_lift_matches_brute_force_union(seed):
    g = MinkowskiGrid.symmetric(1, 1.25, 0.25)
    rng = np.random.default_rng(seed)
    prims = [{"kind": "double_cone", "a": [rng.uniform(0, 1), rng.uniform(-0.5, 0.5)],
              "b": [rng.uniform(-1, 0), rng.uniform(-0.5, 0.5)]},
             {"kind": "box", "lo": rng.uniform(-1.2, 0, 2).tolist(),
              "hi": rng.uniform(0, 1.2, 2).tolist()}]
    G = make_region(g, prims)
    L = breve_lift(G, sigma_cells=3)
    np.testing.assert_array_equal(L.mask, _lift_oracle(G, 3))


def test_lift_restricts_to_g_on_the_zero_slice():
    rng = np.random.default_rng(11)
    G = _random_scene(rng, G11, 4)
    L = breve_lift(G, sigma_cells=6)
    assert L.grid.shape == G11.shape + (13,)
    np.testing.assert_array_equal(L.mask[..., 6], G.mask)
    np.testing.assert_array_equal(L.mask, L.mask[..., ::-1])


def test_lift_of_a_lattice_double_cone_is_its_lifted_double_cone():
    a, b = [1.125, 0.125], [-0.875, -0.375]
    G = make_region(G11, [{"kind": "double_cone", "a": a, "b": b}])
    L = breve_lift(G, sigma_cells=6)
    np.testing.assert_array_equal(L.mask, lifted_double_cone(L.grid, a, b))


@pytest.mark.parametrize("sign", [1, -1])
def test_lift_of_cone_is_the_lifted_cone_within_the_window(sign):
    V = make_region(G11, [{"kind": "cone", "sign": sign}])
    L = breve_lift(V, sigma_cells=8)
    cone3 = make_region(L.grid, [{"kind": "cone", "sign": sign}])
    assert L.subset_of(cone3)
    # the part reachable from the window: the lift of its largest double cone about the apex
    a, b = np.array([3.875, 0.125]), np.array([-0.125, 0.125])
    if sign < 0:
        a, b = -b, -a
    reach = cone3.mask & lifted_double_cone(L.grid, a, b)
    assert reach.sum() > 500
    assert not np.any(binary_erosion(reach, iterations=1) & ~L.mask)


@pytest.mark.parametrize("k", range(20))
def test_lift_set_properties_on_random_scenes(k):
    rng = np.random.default_rng(100 + k)
    G1 = _random_scene(rng, G11, 3)
    G2 = _random_scene(rng, G11, 3)
    K = 6
    L1, L2 = breve_lift(G1, K), breve_lift(G2, K)
    # isotony
    assert breve_lift(G1 & G2, K).subset_of(L1)
    # union and intersection
    assert (L1 | L2).subset_of(breve_lift(G1 | G2, K))
    assert breve_lift(G1 & G2, K).subset_of(L1 & L2)


@pytest.mark.parametrize("k", range(10))
def test_lift_translation_covariance(k):
    rng = np.random.default_rng(200 + k)
    shift = tuple(int(s) for s in rng.integers(-3, 4, size=2))
    # bounded scene kept 4 cells away from the window edge: translation loses nothing
    prims = []
    for _ in range(3):
        c = rng.uniform(-1.5, 1.5, size=2)
        hgt = rng.uniform(0.3, 1.0)
        prims.append({"kind": "double_cone", "a": [c[0] + hgt, c[1]], "b": [c[0] - hgt, c[1]]})
    G = make_region(G11, prims)
    L = breve_lift(G, 6)
    Lt = breve_lift(G.translate(shift), 6)
    assert Lt.equals(L.translate(shift + (0,)))
    # unbounded scenes: translation can only clip
    H = _random_scene(rng, G11, 3)
    assert breve_lift(H.translate(shift), 6).subset_of(breve_lift(H, 6).translate(shift + (0,)))


@pytest.mark.parametrize("k", range(5))
def test_closed_and_open_lifts_agree_up_to_one_cell(k):
    rng = np.random.default_rng(300 + k)
    G = _random_scene(rng, G11, 3)
    op, cl = breve_lift(G, 6), breve_lift(G, 6, closed=True)
    assert cl.subset_of(op)
    diff = (op - cl).mask
    # every extra cell of the open lift has a neighbour (diagonals included) outside it
    assert not np.any(diff & binary_erosion(op.mask, structure=np.ones((3, 3, 3))))


def test_union_of_translates_stays_below_half_height():
    R = 1.0
    prims = [{"kind": "double_cone", "a": [R + 0.125, x + 0.125], "b": [-R + 0.125, x + 0.125]}
             for x in np.arange(-1.0, 1.01, 0.25)]
    G = make_region(G11, prims)
    L = breve_lift(G, sigma_cells=8)
    sig = np.abs(L.grid.axis(2))
    lifted_sigma = sig[np.any(L.mask, axis=(0, 1))]
    assert lifted_sigma.max() < R
    # one translate alone reaches the same height
    single = breve_lift(make_region(G11, prims[:1]), sigma_cells=8)
    assert sig[np.any(single.mask, axis=(0, 1))].max() == lifted_sigma.max()


def test_lift_errors():
    with pytest.raises(BudgetError):
        breve_lift(make_region(G11, [{"kind": "cone"}]), sigma_cells=8, cell_budget=100)
    with pytest.raises(SceneError):
        breve_lift(Region.empty(d3_grid(8)))
    with pytest.raises(SceneError):
        breve_lift(Region.empty(MinkowskiGrid(((-1, 1), (-1, 1)), (0.25, 0.5))))


# -- JLD correspondence --------------------------------------------------------------------------------


def test_zero_input_gives_zero():
    F, rep = jld_transform_1p1(np.zeros((16, 16)), 0.5)
    assert not np.any(F)
    assert rep.restriction_defect == 0.0


def test_support_outside_the_cone_is_rejected():
    fc = np.zeros((16, 16))
    fc[8, 12] = 1.0            # p = (0, 2): spacelike
    with pytest.raises(SupportError):
        jld_transform_1p1(fc, 0.5)


def test_wave_residual_is_second_order():
    study = jld_convergence_study()
    assert min(study["orders"]) >= 1.8
    assert study["residual"][0] > study["residual"][-1]


def test_symmetry_and_restriction():
    n, dp = 64, 0.25
    fc = hyperboloid_bump(n, dp) + 0.5 * hyperboloid_bump(n, dp, mass=3.0, sheet=-1)
    F, rep = jld_transform_1p1(fc, dp)
    assert rep.symmetry_defect <= 1e-10
    assert rep.restriction_defect <= 1e-8
    assert set(rep.to_dict()) == {"wave_residual", "symmetry_defect", "restriction_defect"}


def test_fft_matches_direct_sum_at_random_points():
    n, dp = 32, 0.5
    fc = hyperboloid_bump(n, dp, mass=2.0, width=1.0, p1_width=3.0)
    F, rep = jld_transform_1p1(fc, dp)
    rng = np.random.default_rng(0)
    i, j = rng.integers(0, n, size=(2, 10))
    pts = np.stack([rep.x0[i], rep.x1[j]], axis=1)
    k0 = int(np.flatnonzero(rep.sigma == 0)[0])
    np.testing.assert_allclose(F[i, j, k0], direct_inverse_transform(fc, dp, pts),
                               atol=1e-12 * np.abs(F).max())


def test_sigma_dependence_is_cosine_of_the_mass():
    # a single momentum p with p^2 = m^2: F(x, sigma) = F(x, 0) cos(sigma m)
    n, dp = 16, 0.5
    fc = np.zeros((n, n))
    fc[n // 2 + 4, n // 2 + 2] = 1.0        # p = (2, 1), m = sqrt(3)
    sig = np.array([-0.7, 0.0, 0.7])
    F, _ = jld_transform_1p1(fc, dp, sigma=sig)
    np.testing.assert_allclose(F[..., 0], F[..., 1] * math.cos(0.7 * math.sqrt(3)), atol=1e-15)


def test_vanishing_fixture_is_small_on_the_double_cone():
    fc, info = vanishing_on_double_cone(64, 0.25, [1.0, 0.0], [-1.0, 0.0])
    assert info["residual_on_O"] < 1e-12
    F, rep = jld_transform_1p1(fc, 0.25)
    assert np.any(fc) and rep.symmetry_defect <= 1e-10
