import itertools

import numpy as np
import pytest
from conftest import NEO
from hypothesis import given, settings
from hypothesis import strategies as st

from rvemor.ecm import (
    assemble_nnls_system,
    build_ecm_model,
    kkt_violation,
    lawson_hanson_nnls,
    train_ecm,
)
from rvemor.errors import EmptySelection, MissingStressSnapshots
from rvemor.pod import compute_basis
from rvemor.rom import newton_solve, rom_homogenize


def brute_force_nnls(A, b):
    """Smallest residual over every support with a strictly positive LS solution."""
    best = np.linalg.norm(b)
    n = A.shape[1]
    for k in range(1, n + 1):
        for sup in itertools.combinations(range(n), k):
            z, *_ = np.linalg.lstsq(A[:, sup], b, rcond=None)
            if np.all(z > 0):
                best = min(best, np.linalg.norm(A[:, sup] @ z - b))
    return best


@pytest.fixture(scope="module")
def basis(small_snapshots):
    return compute_basis(small_snapshots, 6)


def test_identity_projection():
    res = lawson_hanson_nnls(np.eye(2), np.array([3.0, -1.0]))
    assert np.allclose(res.x, [3.0, 0.0])
    assert res.converged


def test_exact_solution_inside_cone(rng):
    A = rng.uniform(0, 1, (12, 30))
    x = np.zeros(30)
    x[[2, 7, 19]] = [1.0, 0.5, 2.0]
    b = A @ x
    res = lawson_hanson_nnls(A, b, tol=1e-12)
    assert np.linalg.norm(A @ res.x - b) < 1e-10 * np.linalg.norm(b)
    assert np.all(res.x >= 0)


def test_kkt_on_random_systems():
    rng = np.random.default_rng(4)
    for _ in range(20):
        A = rng.standard_normal((15, 25))
        b = rng.standard_normal(15)
        res = lawson_hanson_nnls(A, b, tol=0.0)
        assert np.all(res.x >= 0)
        assert kkt_violation(A, b, res.x) < 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), rows=st.integers(3, 8), cols=st.integers(2, 8))
def test_matches_support_enumeration(seed, rows, cols):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rows, cols))
    b = rng.standard_normal(rows)
    res = lawson_hanson_nnls(A, b, tol=0.0)
    best = brute_force_nnls(A, b)
    assert np.linalg.norm(A @ res.x - b) == pytest.approx(best, rel=1e-8, abs=1e-10)


def test_support_cap_and_history(rng):
    A = rng.uniform(0, 1, (40, 60))
    b = A @ rng.uniform(0, 1, 60)
    res = lawson_hanson_nnls(A, b, m_target=5, tol=0.0)
    assert np.count_nonzero(res.x) <= 5
    h = res.residual_history
    assert all(a >= b - 1e-12 * h[0] for a, b in zip(h, h[1:]))
    with pytest.raises(ValueError):
        lawson_hanson_nnls(A, b, m_target=0)


def test_system_layout(small_snapshots, basis):
    sys_ = assemble_nnls_system(small_snapshots, basis)
    s, d, G = small_snapshots.n_snapshots, basis.d, small_snapshots.n_gauss
    assert sys_.matrix.shape == (d * s + 1 + 9 * s, G)
    assert sys_.n_work == d * s
    V = small_snapshots.meta["cell_volume"]
    # the stress block of one snapshot integrates to V times its homogenised stress
    rows = sys_.matrix[sys_.stress_rows][9 * 2:9 * 3]
    assert np.allclose(rows @ small_snapshots.volume, V * small_snapshots.Pbar[:, 2], rtol=1e-12)
    assert sys_.rhs[sys_.volume_row] == pytest.approx(np.sqrt(sys_.p_vol) * small_snapshots.volume.sum())
    # converged snapshots carry no virtual work on the fluctuation modes
    work = np.linalg.norm(sys_.rhs[:sys_.n_work])
    assert work < 1e-6 * np.linalg.norm(sys_.rhs[sys_.stress_rows])


def test_gauss_weights_solve_the_system(small_snapshots, basis):
    sys_ = assemble_nnls_system(small_snapshots, basis, p_vol=3.0)
    assert sys_.p_vol == 3.0
    r = sys_.matrix @ small_snapshots.volume - sys_.rhs
    assert np.linalg.norm(r) < 1e-8 * np.linalg.norm(sys_.rhs)


def test_trained_model_reproduces_training_stress(small_snapshots, basis):
    model, sys_, res = train_ecm(small_snapshots, basis, m=40)
    assert model.kind == "ECM" and model.m <= 40
    assert np.all(model.xi > 0)
    assert np.array_equal(model.psi_c, basis.psi_g[model.gauss_index])
    errs = []
    for j in range(0, small_snapshots.n_snapshots, 5):
        Fb = small_snapshots.Fbar[:, j]
        y = newton_solve(model, NEO, Fb).y
        P = rom_homogenize(model, NEO, y, Fb)
        errs.append(np.linalg.norm(P - small_snapshots.Pbar[:, j]) / np.linalg.norm(small_snapshots.Pbar[:, j]))
    assert max(errs) < 0.1


def test_separate_homogenisation_weights(small_snapshots, basis):
    model, _, _ = train_ecm(small_snapshots, basis, m=15, separate_homog_weights=True)
    assert model.xi_hom is not None and model.xi_hom.shape == model.xi.shape
    assert np.all(model.xi_hom >= 0)


def test_error_paths(small_snapshots, basis):
    bare = small_snapshots.subset(range(3))
    bare.P = None
    with pytest.raises(MissingStressSnapshots):
        assemble_nnls_system(bare, basis)
    with pytest.raises(EmptySelection):
        build_ecm_model(np.zeros(small_snapshots.n_gauss), basis, 8.0)
