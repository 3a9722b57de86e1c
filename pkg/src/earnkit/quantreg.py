"""Linear quantile regression via a Frisch-Newton interior-point solver.

The check (pinball) loss is minimized through its bounded dual linear
program with a Mehrotra predictor-corrector primal-dual method; the
regression coefficients come out as the negated dual variables.  A
brute-force oracle over basic solutions is included for small problems.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


def pinball_loss(y, yhat, tau: float) -> float:
    """Mean-free total check loss sum_i rho_tau(y_i - yhat_i)."""
    r = np.asarray(y, float) - np.asarray(yhat, float)
    return float(np.sum(r * (tau - (r < 0))))


def fit_quantile(X, y, tau: float, tol: float = 1e-10, max_iter: int = 100):
    """Quantile-regression coefficients at level tau.

    X is the full design (include the intercept column explicitly).
    Returns (beta, info) where info records iterations and the final
    duality gap.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be n x p with len(y) == n")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must be strictly inside (0, 1)")
    n, _ = X.shape
    A = X.T
    c = -y
    b = (1.0 - tau) * X.sum(axis=0)
    u = np.ones(n)
    a = np.full(n, 1.0 - tau)
    beta_step = 0.9995
    s = u - a
    yy, *_ = np.linalg.lstsq(X, -c, rcond=None)
    r = c - A.T @ yy
    r = r + 0.001 * (r == 0)
    z = np.where(r > 0, r, 0.0)
    w = z - r
    gap = c @ a - yy @ b + w @ u
    it = 0
    while gap > tol and it < max_iter:
        it += 1
        q = 1.0 / (z / a + w / s)
        r = z - w
        # near convergence q can overflow; the lstsq fallback below
        # copes with a non-finite normal matrix, so keep this quiet
        with np.errstate(over="ignore"):
            AQ = A * np.sqrt(q)
            M = AQ @ AQ.T
        rhs = A @ (q * r)
        try:
            L = np.linalg.cholesky(M)

            def solve(v, L=L):
                return np.linalg.solve(L.T, np.linalg.solve(L, v))
        except np.linalg.LinAlgError:
            def solve(v, M=M):
                return np.linalg.lstsq(M, v, rcond=None)[0]
        dy = solve(rhs)
        dx = q * (A.T @ dy - r)
        ds = -dx
        dz = -z * (1 + dx / a)
        dw = -w * (1 + ds / s)

        def ratio(v, dv):
            m = dv < 0
            if not m.any():
                return 1e20
            with np.errstate(over="ignore", divide="ignore"):
                return np.min(-v[m] / dv[m])

        fp = min(beta_step * min(ratio(a, dx), ratio(s, ds)), 1.0)
        fd = min(beta_step * min(ratio(w, dw), ratio(z, dz)), 1.0)
        if min(fp, fd) < 1.0:
            # Mehrotra corrector: re-solve with the centering term
            mu = z @ a + w @ s
            g = (z + fd * dz) @ (a + fp * dx) + (w + fd * dw) @ (s + fp * ds)
            mu = mu * (g / mu) ** 3 / (2.0 * n)
            dxdz = dx * dz
            dsdw = ds * dw
            xinv = 1.0 / a
            sinv = 1.0 / s
            xi = mu * (xinv - sinv)
            rhs = rhs + A @ (q * (dxdz - dsdw - xi))
            dy = solve(rhs)
            dx = q * (A.T @ dy + xi - r - dxdz + dsdw)
            ds = -dx
            dz = mu * xinv - z - xinv * z * dx - dxdz
            dw = mu * sinv - w - sinv * w * ds - dsdw
            fp = min(beta_step * min(ratio(a, dx), ratio(s, ds)), 1.0)
            fd = min(beta_step * min(ratio(w, dw), ratio(z, dz)), 1.0)
        a = a + fp * dx
        s = s + fp * ds
        yy = yy + fd * dy
        z = z + fd * dz
        w = w + fd * dw
        gap = c @ a - yy @ b + w @ u
    return -yy, {"iterations": it, "gap": float(gap)}


def fit_quantile_grid(X, y, taus=None, tol: float = 1e-10,
                      max_iter: int = 100) -> np.ndarray:
    """Coefficients for a grid of quantile levels (default 0.01..0.99).

    Returns an array of shape (len(taus), p), row k for taus[k].
    """
    if taus is None:
        taus = np.arange(1, 100) / 100.0
    X = np.asarray(X, float)
    out = np.empty((len(taus), X.shape[1]))
    for k, tau in enumerate(taus):
        out[k], _ = fit_quantile(X, y, float(tau), tol=tol, max_iter=max_iter)
    return out


def brute_force_quantile(X, y, tau: float):
    """Exact minimizer by enumerating basic solutions (tiny problems only).

    A check-loss minimizer interpolates p observations, so every
    candidate is the exact fit through some full-rank subset of p rows;
    the enumeration evaluates each candidate's loss and keeps the best.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, p = X.shape
    if n > 20:
        raise ValueError("brute force is for small n only")
    best_loss = np.inf
    best_beta = None
    for rows in combinations(range(n), p):
        sub = X[list(rows)]
        if np.linalg.matrix_rank(sub) < p:
            continue
        beta = np.linalg.solve(sub, y[list(rows)])
        loss = pinball_loss(y, X @ beta, tau)
        if loss < best_loss - 1e-15:
            best_loss = loss
            best_beta = beta
    if best_beta is None:
        raise ValueError("design has no full-rank row subset")
    return best_beta, best_loss
