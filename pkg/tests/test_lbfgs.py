import numpy as np
import pytest
from scipy.optimize import rosen, rosen_der

from rvemor.errors import LineSearchFailure, NonPositiveJacobian
from rvemor.lbfgs import lbfgs_minimize, strong_wolfe


def test_quadratic(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((30, 30)))
    H = Q @ np.diag(np.linspace(1, 10, 30)) @ Q.T
    b = rng.standard_normal(30)
    res = lbfgs_minimize(lambda x: (0.5 * x @ H @ x - b @ x, H @ x - b), np.zeros(30), grad_tol=1e-12)
    assert res.converged
    assert np.allclose(res.x, np.linalg.solve(H, b), atol=1e-10)
    assert all(a >= b - 1e-14 * abs(a) for a, b in zip(res.history, res.history[1:]))


def test_rosenbrock():
    res = lbfgs_minimize(lambda x: (rosen(x), rosen_der(x)), np.array([-1.2, 1.0]), grad_tol=1e-10)
    assert res.converged
    assert np.allclose(res.x, 1.0, atol=1e-8)


def test_stationary_start():
    res = lbfgs_minimize(lambda x: (float(x @ x), 2 * x), np.zeros(4))
    assert res.converged and res.n_iter == 0 and res.n_eval == 1


def test_wrong_gradient_warns():
    # gradient points uphill, so no step along -g can decrease f
    with pytest.warns(LineSearchFailure):
        res = lbfgs_minimize(lambda x: (float(x @ x), -2 * x), np.ones(3))
    assert not res.converged
    assert np.array_equal(res.x, np.ones(3))


@pytest.mark.filterwarnings("ignore::rvemor.errors.LineSearchFailure")
def test_infeasible_region_is_avoided():
    # f is undefined for x < 0.5; the minimiser of the smooth part sits at 0
    def fun(x):
        if x[0] < 0.5:
            raise NonPositiveJacobian("outside", None)
        return float(x[0] ** 2), 2 * x
    res = lbfgs_minimize(fun, np.array([3.0]), max_iter=50)
    # the constrained minimum sits on the boundary
    assert 0.5 <= res.x[0] < 0.6


def test_wolfe_conditions_hold(rng):
    f = lambda x: (rosen(x), rosen_der(x))
    x = np.array([-1.2, 1.0, 0.5])
    f0, g0 = f(x)
    p = -g0 / np.linalg.norm(g0)
    alpha, fa, ga, _ = strong_wolfe(f, x, f0, g0, p, 1.0, 1e-4, 0.9)
    assert fa <= f0 + 1e-4 * alpha * g0 @ p
    assert abs(ga @ p) <= 0.9 * abs(g0 @ p)
    assert strong_wolfe(f, x, f0, g0, -p) is None


def test_bad_start():
    with pytest.raises(ValueError):
        lbfgs_minimize(lambda x: (np.inf, x), np.ones(2))
