"""Limited-memory BFGS with a strong-Wolfe line search.

The objective may return ``inf`` (or raise :class:`NonPositiveJacobian`)
for infeasible trial points; the line search treats that as a failed
sufficient-decrease test and shrinks the step.
"""

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import LineSearchFailure, NonPositiveJacobian


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    n_iter: int
    n_eval: int
    converged: bool
    history: list


def _safe(fun, x):
    try:
        f, g = fun(x)
    except NonPositiveJacobian:
        return np.inf, None
    if not np.isfinite(f) or g is None or not np.all(np.isfinite(g)):
        return np.inf, None
    return float(f), np.asarray(g, dtype=float)


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolant on [a, b]; falls back to bisection."""
    lo, hi = min(a, b), max(a, b)
    if np.isfinite(fb) and gb is not None:
        d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
        rad = d1 * d1 - ga * gb
        if rad >= 0:
            d2 = np.copysign(np.sqrt(rad), b - a)
            t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2)
            margin = 0.1 * (hi - lo)
            if lo + margin <= t <= hi - margin:
                return t
    elif not np.isfinite(fb):
        return a + 0.25 * (b - a)
    return 0.5 * (a + b)


def strong_wolfe(fun, x, f0, g0, p, alpha0=1.0, c1=1e-4, c2=0.9, max_eval=30):
    """Bracketing and zoom line search; returns (alpha, f, g, n_eval) or None."""
    dphi0 = float(g0 @ p)
    if dphi0 >= 0:
        return None
    n = 0
    f_tol = 1e-12 * abs(f0)

    def decreased(a, fa, da):
        if not np.isfinite(fa):
            return False
        if fa <= f0 + c1 * a * dphi0:
            return True
        # approximate Wolfe test: near a minimum the Armijo check drowns in rounding
        return fa <= f0 + f_tol and da <= (2 * c1 - 1) * dphi0

    def phi(a):
        nonlocal n
        n += 1
        f, g = _safe(fun, x + a * p)
        return f, g, (None if g is None else float(g @ p))

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        while n < max_eval:
            a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            fa, ga, da = phi(a)
            if not decreased(a, fa, da) or fa > flo + f_tol:
                hi, fhi, dhi = a, fa, da
            else:
                if abs(da) <= -c2 * dphi0:
                    return a, fa, ga
                if da * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, fa, da
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = alpha0
    while n < max_eval:
        fa, ga, da = phi(a)
        if not decreased(a, fa, da) or (n > 1 and fa >= f_prev + f_tol):
            out = zoom(a_prev, f_prev, d_prev, a, fa, da)
            break
        if abs(da) <= -c2 * dphi0:
            out = (a, fa, ga)
            break
        if da >= 0:
            out = zoom(a, fa, da, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev = a, fa, da
        a *= 2.0
    else:
        out = None
    return None if out is None else out + (n,)


def lbfgs_minimize(fun, x0, memory=10, max_iter=500, grad_tol=1e-8, c1=1e-4, c2=0.9):
    """Minimise ``fun(x) -> (f, grad)``.

    Stops when ``|grad| < grad_tol (1 + |f|)`` or after ``max_iter``
    iterations. On a line-search failure the best iterate so far is
    returned and :class:`LineSearchFailure` is warned.
    """
    x = np.array(x0, dtype=float)
    f, g = _safe(fun, x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    S, Yd = deque(maxlen=memory), deque(maxlen=memory)
    history = [f]
    n_eval = 1
    for it in range(max_iter):
        if np.linalg.norm(g) < grad_tol * (1.0 + abs(f)):
            return LbfgsResult(x, f, g, it, n_eval, True, history)
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(S, Yd))):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            q -= a * y
            alphas.append((rho, a))
        if S:
            q *= (S[-1] @ Yd[-1]) / (Yd[-1] @ Yd[-1])
        else:
            q /= max(np.linalg.norm(q), 1e-300)  # first step: unit length
        for (s, y), (rho, a) in zip(zip(S, Yd), reversed(alphas)):
            q += s * (a - rho * (y @ q))
        p = -q
        ls = strong_wolfe(fun, x, f, g, p, 1.0, c1, c2)
        if ls is None and S:
            # stale curvature pairs; retry along steepest descent
            S.clear()
            Yd.clear()
            p = -g / np.linalg.norm(g)
            ls = strong_wolfe(fun, x, f, g, p, 1.0, c1, c2)
        if ls is None:
            warnings.warn(f"line search failed at iteration {it}; returning best iterate", LineSearchFailure)
            return LbfgsResult(x, f, g, it, n_eval, False, history)
        alpha, f_new, g_new, ne = ls
        n_eval += ne
        s = alpha * p
        y = g_new - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Yd.append(y)
        x, f, g = x + s, f_new, g_new
        history.append(f)
    return LbfgsResult(x, f, g, max_iter, n_eval, np.linalg.norm(g) < grad_tol * (1.0 + abs(f)), history)
