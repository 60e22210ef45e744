"""Acceptance suite: one test per criterion at the stated resolution and tolerance.

Each test records a PASS/FAIL line (printed in the terminal summary, or to stdout
when this file is run as a script) before asserting.
"""
import math

import numpy as np
import pytest

from ellipticlab.assembly import assemble_form, assemble_parts, assemble_volume_load
from ellipticlab.coeffs import CoefficientSet, pattern
from ellipticlab.estimators import (boundary_sup_constant, energy_check, interior_constant,
                                    manufactured_sine, mms_convergence, parabolic_lift_check)
from ellipticlab.greens import decay_fit, dirichlet_green, neumann_k_sweep
from ellipticlab.linsolve import SolverConfig, solve, solve_dense
from ellipticlab.mesh import build_box_mesh, named_mask

pytestmark = pytest.mark.slow

RESULTS = {}
UNIT = ((0, 0, 0), (1, 1, 1))


def record(n, passed, detail):
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def cube(n, mask=None):
    return build_box_mesh(*UNIT, (n, n, n), None if mask is None else named_mask(mask, *UNIT))


def center(mesh):
    return mesh.index_of((0.5, 0.5, 0.5))


def test_criterion_01_mms_convergence():
    exact, source = manufactured_sine(1 + 0.5j, 5.0)
    rows = mms_convergence(exact, source, lambda m: pattern("identity", m, k=5.0), [cube(n) for n in (8, 16, 32)])
    rates = [r.rate for r in rows[1:]]
    ok = all(abs(r - 2.0) <= 0.3 for r in rates) and rows[-1].l2_error < 2e-3
    record(1, ok, f"rates {rates[0]:.4f} {rates[1]:.4f}; error at 32^3 {rows[-1].l2_error:.3e} (< 2e-3)")
    assert ok


def test_criterion_02_green_decay():
    sups = {}
    slope = None
    for n in (32, 48):
        m = cube(n)
        y = center(m)
        fit = decay_fit(dirichlet_green(m, pattern("identity", m, k=1e-3), y), y)
        sups[n] = fit.sup_bound
        if n == 32:
            slope = fit.slope
    slope_ok = -1.15 <= slope <= -0.85
    drift = abs(sups[48] - sups[32]) / sups[32]
    stable_ok = drift <= 0.20
    record(2, slope_ok and stable_ok,
           f"slope {slope:.4f} (band [-1.15, -0.85]: {'ok' if slope_ok else 'outside'}); "
           f"sup|G|r 32^3 {sups[32]:.5f}, 48^3 {sups[48]:.5f}, change {drift:.1%} (<= 20%)")
    assert slope_ok and stable_ok


def test_criterion_03_discontinuous_green_bound():
    m = cube(32)
    y = center(m)
    ref = decay_fit(dirichlet_green(m, pattern("identity", m, k=1.0), y), y).sup_bound
    cb = pattern("checkerboard", m, k=1.0, gamma_lo=1.0, gamma_hi=100.0)
    assert cb.nu == pytest.approx(0.01)
    val = decay_fit(dirichlet_green(m, cb, y), y).sup_bound
    ok = math.isfinite(val) and val <= 20 * ref
    record(3, ok, f"checkerboard sup|G|r {val:.4g} vs identity {ref:.4g} (ratio {val / ref:.3g}, <= 20)")
    assert ok


def test_criterion_04_interior_constant_k_independence():
    m = cube(32)
    cs = pattern("sphere_inclusion", m)
    ks = (1.0, 10.0, 100.0, 1000.0)
    c = [interior_constant(m, cs.with_k(k), 1.0, (0.5, 0.5, 0.5), 0.25, alpha=0.5, p=2.0).c_est for k in ks]
    ratio = max(c) / min(c)
    ok = ratio <= 3
    record(4, ok, "C_est " + " ".join(f"k={k:g}:{v:.3e}" for k, v in zip(ks, c)) + f"; max/min {ratio:.3g} (<= 3)")
    assert ok


def test_criterion_05_boundary_sup_constants():
    vals = {}
    for n in (24, 48):
        m = cube(n)
        vals[("dirichlet", n)] = boundary_sup_constant(m, pattern("identity", m, k=1.0), 1.0, (0, 0, 0), 0.5).c_est
        ml = cube(n, "l_shape")
        vals[("neumann", n)] = boundary_sup_constant(ml, pattern("identity", ml, k=1.0), lambda x: 1 + x[:, 0],
                                                     (0.5, 0.5, 0.5), 0.5, bc="neumann").c_est
    parts = []
    ok = True
    for bc in ("dirichlet", "neumann"):
        a, b = vals[(bc, 24)], vals[(bc, 48)]
        change = abs(b - a) / a
        ok &= math.isfinite(a) and math.isfinite(b) and change <= 0.20
        parts.append(f"{bc} {a:.4g} -> {b:.4g} ({change:.1%})")
    record(5, ok, "; ".join(parts) + " (<= 20%)")
    assert ok


def test_criterion_06_neumann_k_scaling():
    m = cube(24)
    ks = (1e-2, 1e-1, 1.0, 10.0)
    rows = neumann_k_sweep(m, pattern("identity", m), center(m), ks)
    ratios = np.array([r.ratio for r in rows])
    c = {r.k: r.c_obs for r in rows}
    band_ok = ratios.max() / ratios.min() <= 3
    growth = c[1e-2] / c[1.0]
    growth_ok = growth <= 30
    slope = np.polyfit(np.log(ks), np.log([c[k] for k in ks]), 1)[0]
    slope_ok = slope >= -0.7
    ok = band_ok and growth_ok and slope_ok
    record(6, ok, "C_obs " + " ".join(f"k={k:g}:{c[k]:.4g}" for k in ks)
           + f"; ratio band {ratios.max() / ratios.min():.3g} (<= 3); C(0.01)/C(1) {growth:.3g} (<= 30); "
           f"log-log exponent {slope:.3f} (>= -0.7)")
    assert ok


def test_criterion_07_energy_bounds():
    m = cube(32)
    r1, r2, labels = [], [], []
    for contrast in (1.0, 10.0, 100.0):
        cs = pattern("checkerboard", m, gamma_lo=1.0, gamma_hi=contrast)
        for k in (1.0, 1e2, 1e4):
            rep = energy_check(m, cs.with_k(k), 1.0)
            r1.append(rep.r_grad)
            r2.append(rep.r_mass)
            labels.append((contrast, k))
    r1, r2 = np.array(r1), np.array(r2)
    worst1 = r1.max() / np.median(r1)
    worst2 = r2.max() / np.median(r2)
    ok = worst1 <= 2 and worst2 <= 2
    record(7, ok, f"R1 in [{r1.min():.3g}, {r1.max():.3g}], max/median {worst1:.3g}; "
           f"R2 in [{r2.min():.3g}, {r2.max():.3g}], max/median {worst2:.3g} (each <= 2)")
    assert ok


def test_criterion_08_parabolic_lifting():
    m = cube(16)
    cs = pattern("identity", m, k=5.0)
    d = {s: parabolic_lift_check(m, cs, 1.0, 0.1, s) for s in (64, 128, 256)}
    factor = d[64] / d[128]
    ok = abs(factor - 2) <= 0.4 and d[256] < 1e-2
    record(8, ok, f"discrepancy 64:{d[64]:.3e} 128:{d[128]:.3e} 256:{d[256]:.3e}; "
           f"halving factor {factor:.3f} (2 +- 20%), 256 steps < 1e-2")
    assert ok


def oracle_cases():
    o, e = UNIT
    meshes = [build_box_mesh(o, e, (n, n, n)) for n in (2, 3, 4, 5, 6)]
    meshes += [build_box_mesh(o, e, (n, n, n), named_mask("l_shape", o, e)) for n in (4, 6)]
    meshes += [build_box_mesh(o, e, (6, 6, 6), named_mask("cube_hole", o, e)),
               build_box_mesh((-1, 0, 2), (2, 1, 0.5), (8, 4, 2))]
    rng = np.random.default_rng(9)
    for mesh in meshes:
        assert mesh.n_nodes <= 500
        n = mesh.n_cells
        variants = [pattern("identity", mesh), pattern("checkerboard", mesh, block=0.25),
                    pattern("sphere_inclusion", mesh), pattern("rotated_aniso", mesh, axis=(1, 1, 1), angle=0.6,
                                                               lambdas=(1, 3, 9)),
                    CoefficientSet(gamma=rng.normal(size=(n, 3, 3)) * 0.2 + np.eye(3), k=1.0,
                                   b=rng.normal(size=(n, 3)) * 0.2, b_tilde=rng.normal(size=(n, 3)) * 0.2,
                                   c=rng.uniform(0, 1, n))]
        for cs in variants:
            for k in (1e-3, 1.0, 1e3):
                for bc in ("dirichlet", "neumann"):
                    yield mesh, cs.with_k(k), bc


def test_criterion_09_oracle_equivalence():
    # near-singular Neumann systems (k = 1e-3) cannot reach a 1e-10 relative
    # residual in double precision; the solver stops at that floor and the
    # criterion is judged on the solution gap
    config = SolverConfig(raise_on_failure=False)
    worst = 0.0
    unique = 0.0
    count = floor = 0
    for mesh, cs, bc in oracle_cases():
        A = assemble_form(mesh, cs, bc)
        b = assemble_volume_load(mesh, lambda x: np.cos(3 * x[:, 0]) + 1j * x[:, 2] + 0.5, bc)
        xi, rep = solve(A, b, config)
        floor += not rep.converged
        xd, _ = solve_dense(A, b)
        worst = max(worst, np.abs(xi - xd).max() / np.abs(xd).max())
        z, _ = solve(A, np.zeros(mesh.n_nodes))
        unique = max(unique, np.abs(z).max())
        count += 1
    ok = worst <= 1e-8 and unique == 0.0
    record(9, ok, f"{count} systems ({floor} stopped at the rounding floor above tol 1e-10); "
           f"max relative max-norm gap {worst:.2e} (<= 1e-8); f = 0 gives max|u| {unique:.1e}")
    assert ok


def test_criterion_10_structural_exactness():
    rng = np.random.default_rng(10)
    adjoint_ok = True
    for mesh in (cube(6), cube(6, "l_shape"), build_box_mesh((0, 0, 0), (2, 1, 1), (6, 4, 3))):
        n = mesh.n_cells
        cs = CoefficientSet(gamma=rng.normal(size=(n, 3, 3)) * 0.3 + 2 * np.eye(3),
                            k=rng.uniform(-3, 3, n), b=rng.normal(size=(n, 3)),
                            b_tilde=rng.normal(size=(n, 3)), c=rng.normal(size=n))
        for bc in ("dirichlet", "neumann"):
            A = assemble_form(mesh, cs, bc)
            H = A.conj_transpose()
            As = assemble_form(mesh, cs.adjoint(), bc)
            adjoint_ok &= (np.array_equal(As.indptr, H.indptr) and np.array_equal(As.indices, H.indices)
                           and np.array_equal(As.data, H.data))
    m = cube(8, "l_shape")
    cs = pattern("checkerboard", m, k=2.0, block=0.25)
    K, M = assemble_parts(m, cs, "neumann")
    rowsum = float(np.abs(K.to_scipy().sum(axis=1)).max())
    mass_gap = abs(M.data.real.sum() - m.volume)
    A = assemble_form(m, cs, "dirichlet")
    Am = assemble_form(m, cs.with_k(-2.0), "dirichlet")
    b = assemble_volume_load(m, lambda x: 1 + x[:, 0], "dirichlet")
    x1, _ = solve(A, b, SolverConfig(tol=1e-13))
    x2, _ = solve(Am, np.conj(b), SolverConfig(tol=1e-13))
    matrix_conj = np.array_equal(Am.data, np.conj(A.data))
    sol_gap = np.abs(x2 - np.conj(x1)).max() / np.abs(x1).max()
    ok = adjoint_ok and rowsum <= 1e-12 and mass_gap <= 1e-12 and matrix_conj and sol_gap <= 1e-12
    record(10, ok, f"adjoint bitwise {adjoint_ok}; row sums {rowsum:.1e}; |mass - |Omega|| {mass_gap:.1e}; "
           f"k -> -k matrix conjugate {matrix_conj}, solution gap {sol_gap:.1e}")
    assert ok


if __name__ == "__main__":
    import sys
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    failed = 0
    for t in tests:
        try:
            t()
        except AssertionError:
            failed += 1
    for n in sorted(RESULTS):
        print(RESULTS[n])
    sys.exit(1 if failed else 0)
