import numpy as np
import pytest
from conftest import LINEAR, NEO

from rvemor.errors import NewtonDivergence, NonPositiveJacobian
from rvemor.fom import FomSolver, gauss_strains, homogenize_stress, macro_tangent
from rvemor.voigt import IDENTITY, pk1_stress

SHEAR = IDENTITY + 0.05 * np.eye(9)[1]


def macro_fd(solver, Fbar, h=1e-6):
    A = np.empty((9, 9))
    for k in range(9):
        e = np.zeros(9)
        e[k] = h
        plus = solver.homogenize_stress(solver.solve_increment(Fbar + e))
        minus = solver.homogenize_stress(solver.solve_increment(Fbar - e))
        A[:, k] = (plus - minus) / (2 * h)
    return A


def test_reference_state_is_stress_free(small_solver):
    st = small_solver.solve_increment(IDENTITY)
    assert st.n_iter == 0
    assert np.linalg.norm(small_solver.homogenize_stress(st)) < 1e-8 * NEO.E
    assert np.all(st.u == 0)


def test_quadratic_convergence(small_solver):
    st = small_solver.solve_increment(IDENTITY + 0.08 * np.eye(9)[0] + 0.05 * np.eye(9)[5])
    h = np.array(st.residual_history)
    assert st.converged and 2 <= st.n_iter <= 6
    # contraction factor shrinks from step to step: superlinear convergence
    rates = h[1:] / h[:-1]
    assert np.all(np.diff(rates) < 0)


def test_hill_mandel_work_balance(small_solver, rng):
    st = small_solver.solve_increment(SHEAR)
    Pbar = small_solver.homogenize_stress(st)
    V = small_solver.volume
    Vg = small_solver.gauss.volume
    for _ in range(3):
        dF = rng.standard_normal(9)
        du = rng.standard_normal(small_solver.n_dofs)
        # periodic virtual strain = macro part + fluctuation gradient
        dFg = small_solver.strains(du, dF)
        micro = np.einsum("gi,gi,g->", st.P, dFg, Vg) / V
        assert micro == pytest.approx(Pbar @ dF, rel=1e-8, abs=1e-8 * np.abs(Pbar) @ np.abs(dF))


def test_macro_tangent_matches_fd(small_solver):
    st = small_solver.solve_increment(SHEAR)
    A = macro_tangent(st)
    A_fd = macro_fd(small_solver, SHEAR)
    assert np.linalg.norm(A - A_fd) / np.linalg.norm(A_fd) < 1e-6
    assert np.linalg.norm(A - A.T) / np.linalg.norm(A) < 1e-12


def test_pore_free_cell_deforms_affinely(solid_mesh):
    solver = FomSolver(solid_mesh, NEO)
    Fbar = IDENTITY + np.array([0.05, 0.02, 0, -0.01, 0.03, 0, 0.01, 0, -0.04])
    st = solver.solve_increment(Fbar)
    assert np.allclose(st.F, Fbar, atol=1e-12)
    assert np.allclose(solver.homogenize_stress(st), pk1_stress(NEO, Fbar), rtol=1e-12)
    # a homogeneous cell has the material tangent as its macro tangent
    assert np.allclose(solver.macro_tangent(st), NEO.tangent(Fbar), rtol=1e-10)


def test_volume_average_fluctuation_zero_without_pores(solid_mesh):
    # any periodic fluctuation field integrates to zero over a pore-free cell
    solver = FomSolver(solid_mesh, NEO)
    u = np.random.default_rng(0).standard_normal(solver.n_dofs)
    Ft = solver.strains(u, np.zeros(9))
    assert np.linalg.norm(Ft.T @ solver.gauss.volume) < 1e-13 * np.linalg.norm(Ft)


def test_linear_material_gives_linear_response(linear_solver):
    H = 0.01 * np.array([1, 2, 0, -1, 0.5, 0, 0.3, 0, -0.7])
    P1 = linear_solver.homogenize_stress(linear_solver.solve_increment(IDENTITY + H))
    P2 = linear_solver.homogenize_stress(linear_solver.solve_increment(IDENTITY + 2 * H))
    assert np.allclose(P2, 2 * P1, rtol=1e-9, atol=1e-9)


def test_gauss_strains_layout(small_solver):
    st = small_solver.solve_increment(SHEAR)
    v = gauss_strains(st)
    assert v.shape == (9 * small_solver.gauss.n_points,)
    assert np.array_equal(v.reshape(-1, 9), st.F)
    assert np.allclose(homogenize_stress(st), small_solver.homogenize_stress(st))


def test_warm_start_along_path(small_solver):
    st = small_solver.reference_state()
    cold = []
    for k in range(1, 4):
        Fb = IDENTITY + 0.03 * k * np.eye(9)[0]
        warm = small_solver.solve_increment(Fb, st)
        cold.append(small_solver.solve_increment(Fb))
        assert np.allclose(warm.u, cold[-1].u, atol=1e-9)
        st = warm


def test_inverted_macro_strain(small_solver):
    with pytest.raises(NonPositiveJacobian):
        small_solver.solve_increment(IDENTITY - 2 * np.eye(9)[0])


def test_newton_divergence_when_budget_is_too_small(small_mesh):
    solver = FomSolver(small_mesh, NEO, max_iter=1)
    with pytest.raises(NewtonDivergence):
        solver.solve_increment(IDENTITY + 0.2 * np.eye(9)[1])


def test_residual_is_gradient_of_energy(small_solver, rng):
    # finite-difference check of the assembled residual against the stored energy
    Fbar = SHEAR
    u = 1e-2 * rng.standard_normal(small_solver.n_dofs)
    Vg = small_solver.gauss.volume

    def energy(v):
        return NEO.energy(small_solver.strains(v, Fbar)) @ Vg

    F = small_solver.strains(u, Fbar)
    R = small_solver.residual(NEO.stress(F))
    d = rng.standard_normal(small_solver.n_dofs)
    h = 1e-6
    fd = (energy(u + h * d) - energy(u - h * d)) / (2 * h)
    assert fd == pytest.approx(R @ d, rel=1e-6)


def test_stiffness_is_residual_jacobian(small_solver, rng):
    u = 1e-2 * rng.standard_normal(small_solver.n_dofs)
    P, A = NEO.evaluate(small_solver.strains(u, SHEAR))
    K = small_solver.stiffness(A)
    d = rng.standard_normal(small_solver.n_dofs)
    h = 1e-6
    Rp = small_solver.residual(NEO.stress(small_solver.strains(u + h * d, SHEAR)))
    Rm = small_solver.residual(NEO.stress(small_solver.strains(u - h * d, SHEAR)))
    assert np.linalg.norm((Rp - Rm) / (2 * h) - K @ d) < 1e-6 * np.linalg.norm(K @ d)
    B = small_solver.B_matrix()
    assert np.allclose(B @ u, (small_solver.strains(u, np.zeros(9))).reshape(-1))


def test_linear_tangent_independent_of_load(linear_solver):
    A0 = linear_solver.macro_tangent(linear_solver.reference_state())
    A1 = linear_solver.macro_tangent(linear_solver.solve_increment(SHEAR))
    assert np.allclose(A0, A1, rtol=1e-9)
    assert LINEAR.kind == "linear-elastic"
