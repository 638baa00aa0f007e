import numpy as np
import pytest
from conftest import NEO

from rvemor.e3c import build_e3c_model, e3c_objective, e3c_terms, objective_state
from rvemor.errors import NonPositiveJacobian
from rvemor.pod import compute_basis, numerical_rank
from rvemor.rom import cluster_partition


class ZeroMaterial:
    E = 1.0

    def evaluate(self, F):
        return np.zeros_like(F), np.zeros(F.shape + (9,))


@pytest.fixture(scope="module")
def basis(small_snapshots):
    return compute_basis(small_snapshots, 5)


@pytest.fixture(scope="module")
def part(small_snapshots, basis):
    return cluster_partition(basis, small_snapshots.volume, 4, seed=2)


def test_gradient_matches_fd(small_snapshots, basis, part):
    state = objective_state(small_snapshots.subset(range(8)), basis, part.xi, NEO)
    rng = np.random.default_rng(7)
    x = part.psi_c.reshape(-1) + 1e-3 * rng.standard_normal(state.n_design)
    f, g = e3c_objective(state, x)
    h = 1e-7
    for _ in range(20):
        v = rng.standard_normal(state.n_design)
        v /= np.linalg.norm(v)
        fd = (e3c_objective(state, x + h * v)[0] - e3c_objective(state, x - h * v)[0]) / (2 * h)
        assert fd == pytest.approx(g @ v, rel=1e-5, abs=1e-9 * np.linalg.norm(g))


def test_zero_stress_leaves_strain_term(small_snapshots, basis, part):
    state = objective_state(small_snapshots, basis, part.xi, ZeroMaterial(), p_strain=2.0)
    x = part.psi_c.reshape(-1)
    _, _, _, r, h, e = e3c_terms(state, x)
    assert np.all(r == 0)
    f, _ = e3c_objective(state, x)
    V = state.volume
    assert f == pytest.approx((np.sum(h * h) + 2.0 * np.sum(e * e)) / V**2, rel=1e-13)
    assert np.allclose(h, -V * small_snapshots.Pbar.T)


def test_weights_cover_the_matrix(small_snapshots, basis, part):
    assert part.xi.sum() == pytest.approx(small_snapshots.volume.sum(), rel=1e-14)


def test_singleton_clusters_are_exact(small_snapshots):
    r = numerical_rank(compute_basis(small_snapshots, 1).singular_values)
    full = compute_basis(small_snapshots, r)
    G = small_snapshots.n_gauss
    part = cluster_partition(full, small_snapshots.volume, G)
    state = objective_state(small_snapshots, full, part.xi, NEO)
    _, _, _, rw, h, e = e3c_terms(state, part.psi_c.reshape(-1))
    scale = np.linalg.norm(state.volume * small_snapshots.Pbar)
    assert np.linalg.norm(rw) < 1e-8 * scale
    assert np.linalg.norm(h) < 1e-8 * scale
    assert np.linalg.norm(e) < 1e-10 * np.linalg.norm(small_snapshots.fluctuations())


def test_training_lowers_objective(small_snapshots, basis):
    model, info = build_e3c_model(basis, small_snapshots, 4, NEO, seed=2, max_iter=60)
    assert info.final_value < info.initial_value
    assert model.kind == "E3C" and model.m == 4
    assert model.xi.sum() == pytest.approx(small_snapshots.volume.sum())
    state = objective_state(small_snapshots, basis, model.xi, NEO)
    assert e3c_objective(state, model.psi_c.reshape(-1))[0] == pytest.approx(info.final_value, rel=1e-12)


def test_inverted_point_reports_cluster(small_snapshots, basis, part):
    state = objective_state(small_snapshots.subset(range(3)), basis, part.xi, NEO)
    x = part.psi_c.copy()
    x[2, 0, :] = -1e4 * np.sign(state.Y[:, 0])  # drives F11 of cluster 2 negative on snapshot 0
    with pytest.raises(NonPositiveJacobian) as info:
        e3c_terms(state, x.reshape(-1))
    assert info.value.index[0] == 2


def test_needs_homogenised_stress(small_snapshots, basis, part):
    bare = small_snapshots.subset(range(2))
    bare.Pbar = None
    with pytest.raises(ValueError):
        objective_state(bare, basis, part.xi, NEO)
