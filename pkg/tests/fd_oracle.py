"""Independent curvature oracle built from finite differences of the metric.

This deliberately avoids every closed-form curvature expression in the
package: the metric matrix comes from ``metric_dot`` on coordinate basis
vectors, Christoffel symbols from central differences of the metric, and the
Riemann tensor from central differences of the symbols.  Sectional curvature
then follows from the classical contraction

    K(u, w) = <R(u, w) w, u> / (|u|^2 |w|^2 - <u, w>^2),
    R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z .

The result is convention-independent and serves as the ground truth for the
closed-form assembly used by the package.
"""
from __future__ import annotations

import numpy as np

from warpflow.geometry import TangentVector, metric_dot


def metric_matrix(spec, x: float) -> np.ndarray:
    n = spec.n
    d = n + 1
    y0 = np.zeros(n)
    basis = []
    for a in range(d):
        comp = np.zeros(d)
        comp[a] = 1.0
        basis.append(TangentVector(x=x, y=y0, dx=comp[0], dy=comp[1:]))
    g = np.empty((d, d))
    for a in range(d):
        for b in range(d):
            g[a, b] = metric_dot(spec, (x, y0), basis[a], basis[b])
    return g


def christoffel_dense(spec, x: float, step: float = 1e-4) -> np.ndarray:
    """Gamma[a, b, c] = Gamma^a_{bc} from central differences of the metric."""
    d = spec.n + 1
    g = metric_matrix(spec, x)
    ginv = np.linalg.inv(g)
    dg = np.zeros((d, d, d))  # dg[k, a, b] = d_k g_ab ; only k = 0 is nonzero
    dg[0] = (metric_matrix(spec, x + step) - metric_matrix(spec, x - step)) / (2.0 * step)
    gamma = np.zeros((d, d, d))
    for a in range(d):
        for b in range(d):
            for c in range(d):
                s = 0.0
                for m in range(d):
                    s += ginv[a, m] * (dg[b, m, c] + dg[c, b, m] - dg[m, b, c])
                gamma[a, b, c] = 0.5 * s
    return gamma


def riemann_dense(spec, x: float, step: float = 1e-4) -> np.ndarray:
    """R[a, k, i, j]: the d_a component of R(d_i, d_j) d_k."""
    d = spec.n + 1
    gamma = christoffel_dense(spec, x, step)
    dgamma = np.zeros((d, d, d, d))  # dgamma[m, a, b, c] = d_m Gamma^a_{bc}
    dgamma[0] = (christoffel_dense(spec, x + step, step) - christoffel_dense(spec, x - step, step)) / (
        2.0 * step
    )
    riem = np.zeros((d, d, d, d))
    for a in range(d):
        for k in range(d):
            for i in range(d):
                for j in range(d):
                    val = dgamma[i, a, j, k] - dgamma[j, a, i, k]
                    for m in range(d):
                        val += gamma[a, i, m] * gamma[m, j, k] - gamma[a, j, m] * gamma[m, i, k]
                    riem[a, k, i, j] = val
    return riem


def sectional_fd(spec, x: float, u: np.ndarray, w: np.ndarray, step: float = 1e-4) -> float:
    """Sectional curvature of span{u, w} at (x, 0) from the finite-difference tensor."""
    g = metric_matrix(spec, x)
    riem = riemann_dense(spec, x, step)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    # <R(u, w) w, u>
    rw = np.einsum("akij,k,i,j->a", riem, w, u, w)
    num = float(rw @ g @ u)
    uu = float(u @ g @ u)
    ww = float(w @ g @ w)
    uw = float(u @ g @ w)
    return num / (uu * ww - uw * uw)
