"""Acceptance criteria C1-C12.

Each test records one ``C<k> PASS|FAIL <detail>`` line, printed in the
terminal summary, and asserts the criterion at its stated tolerance.
Criteria that the implementation cannot meet fail here rather than being
relaxed; the reasons are documented in the README.
"""

import math
import time

import numpy as np
import pytest
from scipy.ndimage import binary_erosion

from conftest import ACCEPTANCE_LINES
from infralab.charges import (Charge, GaussianProfile, PositionSamples, ShellProfile, charge_of,
                              flux_charge, make_test_vector, scaling_sequence)
from infralab.harness import run_experiment
from infralab.hilbert import ModeSet, RadialGrid, WaveFunction
from infralab.jld import (MinkowskiGrid, Region, breve_lift, d3_expected, d3_grid, d3_scene, d3_wedge,
                          geom_fixture, hyperboloid_bump, jld_convergence_study,
                          jld_transform_1p1, lifted_double_cone, make_region, r_w_step,
                          vanishing_on_double_cone, _x_axes)
from infralab.kpr import KprOperator, KprSchedule, apply_t, convergence_probe
from infralab.localization import default_localization_setup, opposite_cone_experiment

LN2 = math.log(2.0)


def record(tag, ok, detail):
    line = f"{tag} {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# -- C1 ---------------------------------------------------------------------------------------


def test_c1_scaling_limit():
    t0 = time.perf_counter()
    grid = RadialGrid.log(2048, 1e-4, 1e2)
    modes = ModeSet(2, zonal=True)
    gamma = Charge.from_profiles(grid, modes, rho=GaussianProfile(math.pi ** -1.5, 1.0))
    f = make_test_vector(grid, modes, h=GaussianProfile(1.0, 1.0))
    res = scaling_sequence(gamma, f, [1.0, 10.0, 100.0, 1000.0])
    target = 4 * math.pi ** 3
    rel = abs(res.values[-1] - target) / target
    dt = time.perf_counter() - t0
    record("C1", rel <= 1e-3 and dt < 30 and abs(res.target - target) <= 1e-9 * target,
           f"l(f_1000)={res.values[-1]:.9g} target 4pi^3={target:.9g} rel={rel:.2e} "
           f"time={dt:.1f}s")


# -- C2 ---------------------------------------------------------------------------------------


def test_c2_gauss_law():
    t0 = time.perf_counter()
    grid = RadialGrid.log(2048, 1e-4, 1e2)
    modes = ModeSet(1, zonal=True)
    worst = 0.0
    for spec in (ShellProfile(1.0, 0.5, 1.5), ShellProfile(-2.0, 0.3, 0.9),
                 ShellProfile(0.5, 1.0, 3.0)):
        gam = Charge.from_profiles(grid, modes, rho=spec)
        R = spec.support_radius(1e-14)
        r, w = np.polynomial.legendre.leggauss(96)
        ps = PositionSamples.spherical(spec, 0.5 * R * (r + 1), 0.5 * R * w, ell_quad=8)
        flux = flux_charge(ps, 1.5 * R)
        worst = max(worst, abs(charge_of(gam) - flux) / abs(flux))
    dt = time.perf_counter() - t0
    record("C2", worst <= 1e-4 and dt < 5, f"max rel(rho_hat(0), flux)={worst:.2e} time={dt:.1f}s")


# -- C3, C4 -----------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def kpr_report():
    t0 = time.perf_counter()
    rep = run_experiment({"experiment": "kpr-validate", "params": {"pairs": 100}})
    return rep, time.perf_counter() - t0


def test_c3_symplectic(kpr_report):
    rep, dt = kpr_report
    d = rep.verdicts["max_symplectic_defect"]
    record("C3", d <= 1e-9 and dt < 10 and len(rep.tables["symplectic"][1]) == 100,
           f"max |Im<Tf,Tg> - Im<f,g>| over 100 pairs={d:.2e} time={dt:.1f}s")


def test_c4_t2_bound(kpr_report):
    rep, _ = kpr_report
    c, b = rep.verdicts["t2_norm"], rep.verdicts["t2_bound"]
    record("C4", c <= b * (1 + 1e-6), f"|(T2-1) omega_r^1/2|={c:.6g} <= bound {b:.6g}")


# -- C5 ---------------------------------------------------------------------------------------------


def test_c5_t1_dichotomy():
    grid = RadialGrid.dyadic(8, -44, 4)
    op = KprOperator(KprSchedule.default(), grid, ModeSet(2))
    y00 = convergence_probe(op, {(0, 0): 1.0}, (5, 35))
    k = np.arange(1, 32)
    y00_dev = float(np.max(np.abs(np.square(y00.partial_norms) / (k * LN2) - 1)))
    y10 = convergence_probe(op, {(1, 0): 1.0}, (5, 35))
    ratio = y10.increments[-1] / y10.increments[0]
    ok = y00_dev <= 1e-13 and ratio < 1e-3
    record("C5", ok, f"Y00 max rel dev from (n-m)ln2={y00_dev:.1e}; Y10 verdict={y10.verdict} "
                     f"last/first increment={ratio:.4f} (required < 1e-3; equals b_35/b_5 = 1/6)")


# -- C6, C7 -----------------------------------------------------------------------------------------


def test_c6_intertwiner():
    rep = run_experiment({"experiment": "localize"})
    v = rep.verdicts
    ok = v["max_outside_residual"] <= 1e-4 and v["negative_control_residual"] > 10 * 1e-4
    n_out = sum(1 for r in rep.tables["residuals"][1] if r[1] == "outside")
    record("C6", ok and n_out == 8,
           f"max residual over {n_out} probes={v['max_outside_residual']:.2e}; "
           f"control={v['negative_control_residual']:.3g}")


def test_c7_variant_dichotomy():
    grid, modes, cone, profile, _ = default_localization_setup()
    rep = opposite_cone_experiment("all", cone, profile, grid)
    want = {"gamma_hat_with_full_chi": "divergent", "gamma_hat_with_even_chi": "Cauchy",
            "gamma_with_odd_ell_schedule": "Cauchy"}
    got = rep.verdicts()
    ok = all(got[k] == v for k, v in want.items())
    record("C7", ok, "; ".join(f"{k}={got[k]} (listed {v})" for k, v in want.items()))


# -- C8 ---------------------------------------------------------------------------------------------


def test_c8_rotation_invariant_vectors_fixed():
    grid = RadialGrid.dyadic(8, -44, 4)
    modes = ModeSet(3)
    rng = np.random.default_rng(0)
    schedules = [KprSchedule.default(), KprSchedule.geometric(30, 2.0, 0.75),
                 KprSchedule.geometric(40, 2.0, 2.0, ell_slope=2),
                 KprSchedule.default().with_parity("odd"), KprSchedule.default().with_parity("even")]
    n_ok = n = 0
    for sched in schedules:
        op = KprOperator(sched, grid, modes)
        for _ in range(3):
            c = np.zeros((len(modes), grid.size), complex)
            c[modes.index(0, 0)] = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
            v = WaveFunction(grid, modes, c)
            for which in ("T", "T_hat", "T1", "T2"):
                out = apply_t(op, v, which)
                n += 1
                n_ok += np.array_equal(out.coeffs.view(np.uint64), v.coeffs.view(np.uint64))
    record("C8", n_ok == n, f"{n_ok}/{n} applications bit-identical on l=0 vectors "
                            f"over {len(schedules)} schedules")


# -- C9 ---------------------------------------------------------------------------------------------


def test_c9_d3_example():
    t0 = time.perf_counter()
    grid = d3_grid(48)
    G = d3_scene(grid)
    W = d3_wedge()
    R1 = r_w_step(G, W)
    E = d3_expected(grid)
    diff = (R1 - E) | (E - R1)
    far = binary_erosion(~E.mask, iterations=1)
    ok1 = not np.any(diff.mask & far) and E.count() > 0
    R2 = r_w_step(R1, W)
    dt = time.perf_counter() - t0
    record("C9", ok1 and R2.is_empty() and dt < 120 and min(grid.shape) >= 48,
           f"grid {grid.shape}: |r_W(G)|={R1.count()} |G3 n M_par|={E.count()} "
           f"mismatch={diff.count()}; |r_W(r_W(G))|={R2.count()} time={dt:.1f}s")


# -- C10 --------------------------------------------------------------------------------------------


def _scene(rng, grid):
    prims = []
    for _ in range(3):
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


def test_c10_lift_properties():
    g = MinkowskiGrid.symmetric(1, 4.0, 0.25)
    K = 6
    fails = []
    for k in range(20):
        rng = np.random.default_rng(1000 + k)
        G1, G2 = _scene(rng, g), _scene(rng, g)
        L1, L2 = breve_lift(G1, K), breve_lift(G2, K)
        L12 = breve_lift(G1 & G2, K)
        if not L12.subset_of(L1):
            fails.append((k, "i"))
        if not (L1 | L2).subset_of(breve_lift(G1 | G2, K)):
            fails.append((k, "ii"))
        if not L12.subset_of(L1 & L2):
            fails.append((k, "iii"))
        # translation covariance: whole-cell shifts inside a window padded by the shift,
        # so no cell of G leaves the window (the relation is then exact)
        shift = tuple(int(s) for s in rng.integers(-3, 4, size=2))
        Gp = _pad(G1, 3)
        if not breve_lift(Gp.translate(shift), K).equals(breve_lift(Gp, K).translate(shift + (0,))):
            fails.append((k, "vi"))
    # (V+-)^ = lifted cones, within the window reach and a 1-cell layer
    cone_ok = True
    for sign in (1, -1):
        L = breve_lift(make_region(g, [{"kind": "cone", "sign": sign}]), sigma_cells=8)
        cone3 = make_region(L.grid, [{"kind": "cone", "sign": sign}])
        a, b = np.array([3.875, 0.125]), np.array([-0.125, 0.125])
        if sign < 0:
            a, b = -b, -a
        reach = cone3.mask & lifted_double_cone(L.grid, a, b)
        cone_ok &= L.subset_of(cone3) and not np.any(binary_erosion(reach) & ~L.mask)
    record("C10", not fails and cone_ok,
           f"20 scenes, properties i/ii/iii/vi violations={fails}; lifted cones ok={cone_ok}")


def _pad(G, p):
    """The same set on a window enlarged by ``p`` cells on every side."""
    h = G.grid.spacing[0]
    grid = MinkowskiGrid(tuple((a - p * h, b + p * h) for a, b in G.grid.extent), h)
    return Region(grid, np.pad(G.mask, p))


# -- C11 --------------------------------------------------------------------------------------------


def test_c11_geom_fixture():
    grid = MinkowskiGrid.symmetric(2, 6.0, 0.25)
    F = geom_fixture(grid, [1.0, 0.3, 0.0], [-1.0, 0.0, 0.0])
    R = r_w_step(F, d3_wedge())
    layer = int(R.boundary_distance()[R.mask].max()) + 1 if R.count() else 0
    record("C11", F.count() > 0 and layer <= 2,
           f"|G|={F.count()} remaining after one step={R.count()} (boundary layer {layer} cells)")


# -- C12 --------------------------------------------------------------------------------------------


def test_c12_jld_correspondence():
    study = jld_convergence_study()
    order = min(study["orders"])
    n, dp = 64, 0.25
    fc = hyperboloid_bump(n, dp) + 0.5 * hyperboloid_bump(n, dp, mass=3.0, sheet=-1)
    _, rep = jld_transform_1p1(fc, dp)
    a, b = np.array([1.0, 0.0]), np.array([-1.0, 0.0])
    fv, _ = vanishing_on_double_cone(n, dp, a, b)
    Fv, rv = jld_transform_1p1(fv, dp)
    x, _ = _x_axes(n, dp)
    X0, X1, S = np.meshgrid(x, x, rv.sigma, indexing="ij")
    ya0, ya1, yb0, yb1 = a[0] - X0, a[1] - X1, X0 - b[0], X1 - b[1]
    inside = (ya0 > 0) & (ya0 ** 2 - ya1 ** 2 > S ** 2) & (yb0 > 0) & (yb0 ** 2 - yb1 ** 2 > S ** 2)
    vanish = float(np.max(np.abs(Fv[inside])) / np.max(np.abs(Fv)))
    checks = {"order": order >= 1.8, "symmetry": rep.symmetry_defect <= 1e-10,
              "restriction": rep.restriction_defect <= 1e-8,
              "vanishing": vanish <= 10 * rv.restriction_defect}
    record("C12", all(checks.values()),
           f"order={order:.3f} symmetry={rep.symmetry_defect:.1e} "
           f"restriction={rep.restriction_defect:.1e} max|F| on lifted O={vanish:.1e} vs "
           f"10x restriction={10 * rv.restriction_defect:.1e} {checks}")
