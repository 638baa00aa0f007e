import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rvemor.errors import DimensionMismatch, RankDeficient
from rvemor.pod import (
    ModeBasis,
    compute_basis,
    load_basis,
    numerical_rank,
    projection_error,
    reconstruct_field,
    reduced_coords,
    save_basis,
)


def test_basis_is_orthonormal(small_snapshots):
    b = compute_basis(small_snapshots, 8)
    assert np.allclose(b.psi.T @ b.psi, np.eye(8), atol=1e-12)
    assert b.psi_g.shape == (small_snapshots.n_gauss, 9, 8)
    assert np.shares_memory(b.psi_g, b.psi)


def test_sign_convention(small_snapshots):
    b = compute_basis(small_snapshots, 6)
    idx = np.argmax(np.abs(b.psi), axis=0)
    assert np.all(b.psi[idx, np.arange(6)] > 0)


def test_exact_reconstruction_at_full_rank(small_snapshots):
    r = numerical_rank(compute_basis(small_snapshots, 1).singular_values)
    b = compute_basis(small_snapshots, r)
    Ft = small_snapshots.fluctuations()
    assert np.linalg.norm(Ft - b.psi @ reduced_coords(b, small_snapshots)) < 1e-10 * np.linalg.norm(Ft)
    with pytest.raises(RankDeficient):
        compute_basis(small_snapshots, r + 1)


def test_projection_error_decreases_with_d(small_snapshots):
    errs = [projection_error(compute_basis(small_snapshots, d), small_snapshots) for d in (2, 4, 8, 16)]
    assert all(a >= b for a, b in zip(errs, errs[1:]))
    # optimality: the error equals the discarded singular value energy
    S = compute_basis(small_snapshots, 1).singular_values
    assert errs[1] == pytest.approx(np.sqrt(np.sum(S[4:] ** 2) / np.sum(S**2)), rel=1e-9)


def test_truncate_matches_direct_computation(small_snapshots):
    b8 = compute_basis(small_snapshots, 8)
    assert np.allclose(b8.truncate(3).psi, compute_basis(small_snapshots, 3).psi)
    with pytest.raises(RankDeficient):
        b8.truncate(9)


def test_reconstruct_field(small_snapshots):
    b = compute_basis(small_snapshots, 5)
    y = np.arange(5.0)
    F = reconstruct_field(b, y, small_snapshots.Fbar[:, 0])
    assert F.shape == (small_snapshots.n_gauss, 9)
    assert np.allclose((F - small_snapshots.Fbar[:, 0]).reshape(-1), b.psi @ y)
    with pytest.raises(DimensionMismatch):
        reconstruct_field(b, np.zeros(4), small_snapshots.Fbar[:, 0])


def test_reduced_coords_mesh_check(small_snapshots):
    b = ModeBasis(np.zeros((18, 2)), np.ones(2))
    with pytest.raises(DimensionMismatch):
        reduced_coords(b, small_snapshots)


def test_save_load(tmp_path, small_snapshots):
    b = compute_basis(small_snapshots, 4)
    save_basis(b, tmp_path / "b")
    back = load_basis(tmp_path / "b")
    assert np.array_equal(back.psi, b.psi)
    assert np.array_equal(back.singular_values, b.singular_values)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=12))
def test_numerical_rank_property(values):
    s = np.sort(np.array(values))[::-1]
    r = numerical_rank(s)
    if s[0] == 0:
        assert r == 0
    else:
        assert r == np.sum(s >= 1e-12 * s[0])
