import numpy as np
import pytest

from ellipticlab.assembly import ComplexField, assemble_form, mass_matrix
from ellipticlab.coeffs import CoefficientSet, pattern
from ellipticlab.greens import (FitError, decay_fit, dirichlet_green, neumann_function, neumann_k_sweep,
                                radial_profile, truncation_study, window_bound)
from ellipticlab.linsolve import SolverConfig
from ellipticlab.mesh import build_box_mesh, named_mask

TIGHT = SolverConfig(tol=1e-12)


@pytest.fixture(scope="module")
def cube16():
    return build_box_mesh((0, 0, 0), (1, 1, 1), (16, 16, 16))


@pytest.fixture(scope="module")
def cube32():
    return build_box_mesh((0, 0, 0), (1, 1, 1), (32, 32, 32))


def center(mesh):
    return mesh.index_of((0.5, 0.5, 0.5))


def test_fit_of_exact_radial_data(cube16):
    y = center(cube16)
    r = np.linalg.norm(cube16.points - cube16.points[y], axis=1)
    vals = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
    fit = decay_fit(ComplexField(vals, cube16, "neumann"), y, r_min=0.125, r_max=0.25)
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.c_est == pytest.approx(1.0, abs=1e-12)
    assert fit.residual < 1e-12 and fit.n_samples >= 10


def test_fit_refuses_thin_window(cube16):
    y = center(cube16)
    f = ComplexField(np.ones(cube16.n_nodes), cube16, "neumann")
    with pytest.raises(FitError):
        decay_fit(f, y, r_min=0.125, r_max=0.126)
    with pytest.raises(FitError):
        decay_fit(f, y, r_min=0.05, r_max=0.25)  # below 2h
    with pytest.raises(FitError):
        decay_fit(f, y, r_min=0.125, r_max=0.3)  # beyond L/4


def test_dirichlet_green_vanishes_on_boundary_and_is_symmetric(cube16):
    y = center(cube16)
    g = dirichlet_green(cube16, pattern("identity", cube16, k=1e-3), y, TIGHT)
    assert not g.values[cube16.boundary].any()
    pts = cube16.points
    for refl in (lambda p: np.c_[1 - p[:, 0], p[:, 1:]],
                 lambda p: p[:, [1, 0, 2]],
                 lambda p: p[:, [2, 1, 0]]):
        idx = np.array([cube16.index_of(q) for q in refl(pts)])
        np.testing.assert_allclose(g.values[idx], g.values, rtol=1e-8, atol=1e-12 * np.abs(g.values).max())


def test_adjoint_reciprocity_dense(rng):
    mesh = build_box_mesh((0, 0, 0), (1, 1, 1), (4, 4, 4))
    n = mesh.n_cells
    cs = CoefficientSet(gamma=rng.normal(size=(n, 3, 3)) * 0.2 + np.eye(3), k=2.0, k_constant=2.0,
                        b=rng.normal(size=(n, 3)) * 0.3, b_tilde=rng.normal(size=(n, 3)) * 0.3)
    G = np.linalg.inv(assemble_form(mesh, cs, "dirichlet").to_dense())
    Gs = np.linalg.inv(assemble_form(mesh, cs.adjoint(), "dirichlet").to_dense())
    np.testing.assert_allclose(Gs, G.conj().T, rtol=1e-12, atol=1e-14)
    # the same through the iterative solver for one pole
    y = mesh.index_of((0.5, 0.25, 0.5))
    gy = dirichlet_green(mesh, cs.adjoint(), y, TIGHT).values
    np.testing.assert_allclose(gy, np.conj(G[y, :]), rtol=1e-9, atol=1e-12)


def test_conjugation_under_k_sign(cube16):
    y = center(cube16)
    cs = pattern("checkerboard", cube16, k=3.0, gamma_hi=10.0)
    g1 = dirichlet_green(cube16, cs, y, TIGHT).values
    g2 = dirichlet_green(cube16, cs.with_k(-3.0), y, TIGHT).values
    np.testing.assert_allclose(g2, np.conj(g1), rtol=1e-9, atol=1e-12 * np.abs(g1).max())
    n1 = neumann_function(cube16, cs, y, TIGHT).values
    n2 = neumann_function(cube16, cs.with_k(-3.0), y, TIGHT).values
    np.testing.assert_allclose(n2, np.conj(n1), rtol=1e-9, atol=1e-12 * np.abs(n1).max())


def test_neumann_mean_pairing(cube16):
    # testing the equation with the constant function: ik * int N = 1
    y = cube16.index_of((0.25, 0.5, 0.75))
    for k in (0.1, 1.0, 10.0):
        n = neumann_function(cube16, pattern("sphere_inclusion", cube16, k=k), y, TIGHT)
        M = mass_matrix(cube16)
        total = 1j * k * np.sum(M @ n.values)
        assert abs(total - 1) < 1e-8


def test_neumann_on_l_shape():
    o, e = (0, 0, 0), (1, 1, 1)
    mesh = build_box_mesh(o, e, (8, 8, 8), named_mask("l_shape", o, e))
    y = mesh.index_of((0.25, 0.25, 0.25))
    n = neumann_function(mesh, pattern("identity", mesh, k=1.0), y, TIGHT)
    assert np.all(np.isfinite(n.values))
    assert abs(1j * np.sum(mass_matrix(mesh) @ n.values) - 1) < 1e-8


def cube_laplace_green(d, n_images=20):
    """Exact Dirichlet Laplace Green's function of the unit cube with the pole at
    its centre, by the alternating image lattice (Evjen-weighted cubic sum)."""
    r = np.arange(-n_images, n_images + 1)
    i, j, k = np.meshgrid(r, r, r, indexing="ij")
    w = np.ones(i.shape)
    for a in (i, j, k):
        w *= np.where(np.abs(a) == n_images, 0.5, 1.0)
    dist = np.sqrt((d[0] - i) ** 2 + (d[1] - j) ** 2 + (d[2] - k) ** 2)
    return float(np.sum(w * (-1.0) ** (i + j + k) / dist) / (4 * np.pi))


def test_image_oracle_converges():
    a, b = cube_laplace_green((0.125, 0, 0), 10), cube_laplace_green((0.125, 0, 0), 40)
    assert abs(a - b) < 1e-6
    # the boundary removes a regular part that is not small at a quarter of the distance
    assert b < 0.8 / (4 * np.pi * 0.125)


def test_near_field_matches_cube_green(cube32):
    y = center(cube32)
    h = cube32.h
    x = cube32.index_of((0.5 + 4 * h, 0.5, 0.5))
    g = dirichlet_green(cube32, pattern("identity", cube32, k=1e-3), y)
    exact = cube_laplace_green((4 * h, 0, 0))
    assert abs(abs(g.values[x]) - exact) <= 0.05 * exact


def test_near_pole_singularity_is_free_space(cube32):
    """The regular parts are smooth, so differences between 4h and 8h follow 1/(4 pi r)."""
    y = center(cube32)
    h = cube32.h
    x4 = cube32.index_of((0.5 + 4 * h, 0.5, 0.5))
    x8 = cube32.index_of((0.5 + 8 * h, 0.5, 0.5))
    lap = 1 / (4 * np.pi * 4 * h) - 1 / (4 * np.pi * 8 * h)
    g = dirichlet_green(cube32, pattern("identity", cube32, k=1e-3), y).values
    assert abs(abs(g[x4] - g[x8]) - lap) <= 0.05 * lap
    n = neumann_function(cube32, pattern("identity", cube32, k=1.0), y).values
    assert abs(abs(n[x4] - n[x8]) - lap) <= 0.10 * lap


def test_checkerboard_green_is_bounded(cube32):
    y = center(cube32)
    g = dirichlet_green(cube32, pattern("checkerboard", cube32, k=1.0), y)
    fit = decay_fit(g, y)
    assert fit.slope <= -0.7
    assert np.isfinite(fit.sup_bound) and fit.sup_bound > 0


def test_radial_profile_sorted(cube16):
    y = center(cube16)
    g = dirichlet_green(cube16, pattern("identity", cube16, k=1.0), y)
    prof = radial_profile(g, y)
    assert prof.shape == (cube16.n_nodes - 1, 3)
    assert np.all(np.diff(prof[:, 0]) >= 0)


def test_window_bound_matches_fit(cube32):
    y = center(cube32)
    g = dirichlet_green(cube32, pattern("identity", cube32, k=1.0), y)
    assert window_bound(g, y) == decay_fit(g, y).sup_bound


@pytest.fixture(scope="module")
def cube24():
    return build_box_mesh((0, 0, 0), (1, 1, 1), (24, 24, 24))


def test_neumann_sweep_damping(cube24):
    y = center(cube24)
    rows = neumann_k_sweep(cube24, pattern("identity", cube24), y, [16, 1, 4])
    assert [r.k for r in rows] == [1.0, 4.0, 16.0]
    c = [r.c_obs for r in rows]
    assert c[1] <= 1.1 * c[0] and c[2] <= 1.1 * c[1]
    assert all(r.envelope == 1.0 for r in rows)


def test_neumann_sweep_sign_symmetry(cube24):
    y = center(cube24)
    a, b = neumann_k_sweep(cube24, pattern("identity", cube24), y, [-2.0, 2.0], TIGHT)
    assert a.c_obs == pytest.approx(b.c_obs, rel=1e-8)


def test_neumann_sweep_rejects_zero(cube24):
    with pytest.raises(ValueError):
        neumann_k_sweep(cube24, pattern("identity", cube24), 0, [1.0, 0.0])


def identity_factory(mesh):
    return pattern("identity", mesh, k=1e-3)


def test_truncation_equal_radii_give_zero_difference():
    res = truncation_study(identity_factory, [0.5, 0.5], 0.125, (0, 0, 0), (0.25, 0, 0))
    assert res.rows[1].difference == 0.0
    assert np.isnan(res.rows[0].difference)


def test_truncation_approaches_free_space():
    res = truncation_study(identity_factory, [0.5, 1.0, 2.0], 0.125, (0, 0, 0), (0.25, 0, 0))
    lap = 1 / (4 * np.pi * 0.25)
    gaps = [abs(r.value - lap) for r in res.rows]
    assert gaps[0] > gaps[1] > gaps[2]
    diffs = [r.difference for r in res.rows[1:]]
    assert diffs[0] > diffs[1]
    # the remaining gap is the discretisation error at r = 2h
    assert gaps[2] < 0.25 * lap


def test_truncation_memory_cap():
    res = truncation_study(identity_factory, [0.5, 1.0, 2.0], 0.125, (0, 0, 0), (0.25, 0, 0), max_nodes=20_000)
    assert res.truncated and res.largest_R == 1.0


def test_truncation_checks_grid():
    with pytest.raises(ValueError):
        truncation_study(identity_factory, [0.3], 0.125, (0, 0, 0), (0.25, 0, 0))
    with pytest.raises(ValueError):
        truncation_study(identity_factory, [0.25], 0.125, (0, 0, 0), (0.25, 0, 0))
