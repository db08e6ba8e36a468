"""Matrix Jacobi fields along geodesics: two-point problems, limits, Riccati data.

The perpendicular Jacobi equation along a unit-speed geodesic, written in a
parallel perpendicular frame, is the matrix ODE

    Y''(t) + K(t) Y(t) = 0,

with K(t) the symmetric curvature matrix carried by controllers of
:class:`~warpflow.geodesics.GeodesicPath`.  Two-point solutions Y(0) = I,
Y(r) = 0 exist and are unique here because the scenario metrics have
non-positive curvature (no conjugate points); letting r -> +inf / -inf gives
the stable / unstable solutions whose columns span the candidate contracting
and expanding subspaces of the flow derivative.

Two-point solves are evaluated by propagating the solution frame from the
vanishing endpoint (where it is the dominant solution of the sweep) with QR
renormalization, then restoring the accumulated right factors; this is exact
linear algebra and stays well-conditioned at horizons where naive shooting
from t = 0 loses all significant digits to cancellation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import engine
from .errors import ConjugatePointDetected, DomainError, GreenNotConverged, VanishingJacobiField
from .geodesics import (
    GeodesicPath,
    extend_path,
    flip,
    integrate_geodesic,
    integrate_window,
)
from .geometry import sectional_curvature_frame


@dataclass(frozen=True)
class SasakiVector:
    """Initial data (J(0), J'(0)) of a perpendicular Jacobi field, frame components."""

    J: np.ndarray
    Jp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "J", np.atleast_1d(np.asarray(self.J, dtype=float)))
        object.__setattr__(self, "Jp", np.atleast_1d(np.asarray(self.Jp, dtype=float)))
        if not (np.all(np.isfinite(self.J)) and np.all(np.isfinite(self.Jp))):
            raise DomainError("non-finite Sasaki components")

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.J, self.J) + np.dot(self.Jp, self.Jp)))


@dataclass
class MatrixJacobiSolution:
    """(Y, Y') pairs on the coarse grid of a path."""

    path: GeodesicPath
    times: np.ndarray
    Y: np.ndarray
    Yp: np.ndarray
    kind: str
    r: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.Y.shape[-1]

    def index_of(self, t: float) -> int:
        i = int(round((t - self.times[0]) / self.path.step))
        if i < 0 or i >= len(self.times) or abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not on the solution grid")
        return i

    def wronskian_defect(self) -> float:
        """Max drift of Y^T Y' - Y'^T Y from its initial value, scale-free.

        Normalized per node by the product of the factor norms so the
        constancy is measured relatively on exponentially growing solutions.
        """
        w = np.einsum("cki,ckj->cij", self.Y, self.Yp) - np.einsum("cki,ckj->cij", self.Yp, self.Y)
        scale = 1.0 + np.sqrt(
            np.einsum("cij,cij->c", self.Y, self.Y) * np.einsum("cij,cij->c", self.Yp, self.Yp)
        )
        return float(np.max(np.max(np.abs(w - w[0]), axis=(1, 2)) / scale))

    def residual_defect(self) -> float:
        """Scale-free residual of Y'' + K Y via a fourth-order difference stencil."""
        h = self.path.step
        K = np.stack([self.path.K[self.path.fine_index(t)] for t in self.times])
        Y = self.Y
        if len(self.times) < 5:
            raise DomainError("need at least 5 grid nodes for the residual check")
        ypp = (-Y[:-4] + 16.0 * Y[1:-3] - 30.0 * Y[2:-2] + 16.0 * Y[3:-1] - Y[4:]) / (12.0 * h * h)
        res = ypp + np.einsum("cij,cjq->ciq", K[2:-2], Y[2:-2])
        scale = 1.0 + np.einsum("cij,cij->c", Y[2:-2], Y[2:-2]) ** 0.5 * (
            1.0 + np.einsum("cij,cij->c", K[2:-2], K[2:-2]) ** 0.5
        )
        return float(np.max(np.sqrt(np.einsum("ciq,ciq->c", res, res)) / scale))

    def det_series(self) -> np.ndarray:
        return np.linalg.det(self.Y)

    def field_norms(self, w: np.ndarray) -> np.ndarray:
        """Norm of the Jacobi field J(t) = Y(t) w on the grid."""
        J = np.einsum("cij,j->ci", self.Y, np.asarray(w, float))
        return np.sqrt(np.einsum("ci,ci->c", J, J))


def _as_batch(K_fine: np.ndarray) -> np.ndarray:
    return K_fine[:, None, :, :]


def _require_K(path: GeodesicPath):
    if path.K is None:
        raise DomainError("path was integrated without frame/curvature data")


def solve_jacobi_ivp(path: GeodesicPath, Y0, Yp0) -> MatrixJacobiSolution:
    """RK4 solve of Y'' + K Y = 0 along the path with given initial data."""
    _require_K(path)
    n = path.n
    Y0 = np.asarray(Y0, dtype=float).reshape(n, n)
    Yp0 = np.asarray(Yp0, dtype=float).reshape(n, n)
    Y, Yp = engine.jacobi_ivp_march(_as_batch(path.K), path.step, Y0[None], Yp0[None])
    return MatrixJacobiSolution(
        path=path, times=path.times.copy(), Y=Y[:, 0], Yp=Yp[:, 0], kind="ivp"
    )


def _window_path(path: GeodesicPath, w_lo: float, w_hi: float, drift_tol: float) -> GeodesicPath:
    if path.t_lo <= w_lo + 1e-12 and path.t_hi >= w_hi - 1e-12:
        return path
    if path.y is not None and path.alpha is not None:
        return extend_path(path, min(w_lo, path.t_lo), max(w_hi, path.t_hi))
    lo = min(w_lo, path.t_lo, 0.0)
    hi = max(w_hi, path.t_hi, 0.0)
    if lo == 0.0:
        return integrate_geodesic(path.spec, path.theta0, hi, path.step, drift_tol=drift_tol)
    return integrate_window(path.spec, path.theta0, lo, hi, path.step, drift_tol=drift_tol)


def _boundary_on_window(
    path: GeodesicPath, r: float, out_lo_t: float, out_hi_t: float, drift_tol: float
):
    """Two-point solution with Y(0)=I, Y(r)=0, returned on [out_lo_t, out_hi_t]."""
    step = path.step
    out_lo_t = round(out_lo_t / step) * step
    out_hi_t = round(out_hi_t / step) * step
    r_snap = round(r / step) * step
    wpath = _window_path(path, min(out_lo_t, r_snap, 0.0), max(out_hi_t, r_snap, 0.0), drift_tol)
    _require_K(wpath)
    anchor_c = wpath.coarse_index(r_snap)
    zero_c = wpath.coarse_index(0.0)
    out_lo_c = wpath.coarse_index(out_lo_t)
    out_hi_c = wpath.coarse_index(out_hi_t)
    if not (out_lo_c <= zero_c <= out_hi_c):
        raise DomainError("output window must contain t = 0")
    try:
        Y, Yp = engine.boundary_solve(
            _as_batch(wpath.K), step, anchor_c, zero_c, out_lo_c, out_hi_c
        )
    except np.linalg.LinAlgError as exc:  # singular normalization block
        raise ConjugatePointDetected(
            f"two-point solve with endpoint r={r_snap} is singular"
        ) from exc
    times = wpath.times[out_lo_c : out_hi_c + 1].copy()
    return wpath, times, Y[:, 0], Yp[:, 0], r_snap


def solve_boundary(path: GeodesicPath, r: float, *, drift_tol: float = 1e-7) -> MatrixJacobiSolution:
    """The two-point solution Y(0) = I, Y(r) = 0, sampled on the path grid.

    The path is extended (re-integrated over the larger window) when r lies
    beyond it.  The endpoint condition holds exactly by construction.
    """
    if r == 0.0:
        raise DomainError("endpoint r must be nonzero")
    out_lo = path.t_lo if r > 0 else max(path.t_lo, round(r / path.step) * path.step)
    out_hi = min(path.t_hi, round(r / path.step) * path.step) if r > 0 else path.t_hi
    wpath, times, Y, Yp, r_snap = _boundary_on_window(path, r, min(out_lo, 0.0), max(out_hi, 0.0), drift_tol)
    sol = MatrixJacobiSolution(path=wpath, times=times, Y=Y, Yp=Yp, kind="boundary", r=r_snap)
    if times[0] - 1e-12 <= r_snap <= times[-1] + 1e-12:
        sol.meta["endpoint_norm"] = float(np.max(np.abs(Y[sol.index_of(r_snap)])))
    else:
        # the sweep anchors the solution frame at Y(r) = 0, exact by construction
        sol.meta["endpoint_norm"] = 0.0
    return sol


def _ladder(start: float, step: float, max_doublings: int):
    r = round(start / step) * step
    for _ in range(max_doublings + 1):
        yield r
        r = round(2.0 * r / step) * step


def _green_limit(
    path: GeodesicPath,
    side: int,
    t_obs: float,
    tol: float,
    r0: float,
    max_doublings: int,
    window: tuple,
    drift_tol: float,
):
    w_lo, w_hi = window
    r_start = side * max(r0, abs(w_hi) + 4.0, abs(w_lo) + 4.0, t_obs + 4.0)
    prev = None
    gaps = []
    ladder = []
    result = None
    work = path
    for r in _ladder(r_start, path.step, max_doublings):
        wpath, times, Y, Yp, _ = _boundary_on_window(work, r, w_lo, w_hi, drift_tol)
        work = wpath
        ladder.append(r)
        if prev is not None:
            # normalize per node so growing (unstable-side) iterates are
            # compared at relative accuracy; for contracting solutions with
            # |Y| <= 1 this matches the absolute gap up to a factor 2
            gaps.append(float(np.max(np.abs(Y - prev) / (1.0 + np.abs(Y)))))
            result = (wpath, times, Y, Yp)
            if gaps[-1] < tol:
                break
        prev = Y
        result = (wpath, times, Y, Yp)
    meta = {"r_ladder": ladder, "gaps": gaps, "final_gap": gaps[-1] if gaps else None}
    converged = bool(gaps and gaps[-1] < tol)
    return result, meta, converged


def green_stable(
    path: GeodesicPath,
    t_obs: float = 20.0,
    tol: float = 1e-8,
    *,
    r0: float = 8.0,
    max_doublings: int = 12,
    window: Optional[tuple] = None,
    drift_tol: float = 1e-7,
) -> MatrixJacobiSolution:
    """Limit of two-point solutions Y(0)=I, Y(r)=0 as r doubles upward.

    Successive ladder iterates are compared in sup-Frobenius norm on
    ``window`` (default [0, t_obs]); the last iterate is returned once the
    gap drops below ``tol``.  ``r0`` is raised automatically so every rung
    lies beyond the observation window.  On failure to converge within
    ``max_doublings`` doublings, :class:`GreenNotConverged` carries the last
    iterate and the gap sequence.
    """
    window = window or (0.0, t_obs)
    result, meta, converged = _green_limit(path, +1, t_obs, tol, r0, max_doublings, window, drift_tol)
    wpath, times, Y, Yp = result
    sol = MatrixJacobiSolution(path=wpath, times=times, Y=Y, Yp=Yp, kind="green_stable", meta=meta)
    zero = sol.index_of(0.0)
    sol.meta["Us0"] = Yp[zero].copy()
    if not converged:
        raise GreenNotConverged(
            f"stable ladder gap {meta['final_gap']} above tolerance {tol}",
            last_solution=sol,
            gaps=meta["gaps"],
        )
    return sol


def green_unstable(
    path: GeodesicPath,
    t_obs: float = 20.0,
    tol: float = 1e-8,
    *,
    r0: float = 8.0,
    max_doublings: int = 12,
    route: str = "direct",
    drift_tol: float = 1e-7,
) -> MatrixJacobiSolution:
    """Limit of two-point solutions with vanishing end r -> -inf.

    ``route="direct"`` anchors the two-point solves at negative r;
    ``route="flip"`` runs the stable construction along the velocity-reversed
    geodesic and maps it back through time reversal.  The two routes agree to
    the ladder tolerance.
    """
    if route == "direct":
        result, meta, converged = _green_limit(
            path, -1, t_obs, tol, r0, max_doublings, (0.0, t_obs), drift_tol
        )
        wpath, times, Y, Yp = result
        sol = MatrixJacobiSolution(
            path=wpath, times=times, Y=Y, Yp=Yp, kind="green_unstable", meta=meta
        )
        sol.meta["Uu0"] = Yp[sol.index_of(0.0)].copy()
        if not converged:
            raise GreenNotConverged(
                f"unstable ladder gap {meta['final_gap']} above tolerance {tol}",
                last_solution=sol,
                gaps=meta["gaps"],
            )
        return sol
    if route != "flip":
        raise DomainError(f"unknown route {route!r}")
    fpath = integrate_geodesic(path.spec, flip(path.theta0), t_obs, path.step, drift_tol=drift_tol)
    exc_sol = None
    try:
        gs = green_stable(
            fpath, t_obs, tol, r0=r0, max_doublings=max_doublings, window=(-t_obs, 0.0), drift_tol=drift_tol
        )
    except GreenNotConverged as exc:
        gs = exc.last_solution
        exc_sol = exc
    times = -gs.times[::-1]
    Y = gs.Y[::-1].copy()
    Yp = -gs.Yp[::-1].copy()
    sol = MatrixJacobiSolution(
        path=path, times=times, Y=Y, Yp=Yp, kind="green_unstable", meta=dict(gs.meta)
    )
    sol.meta["route"] = "flip"
    sol.meta["Uu0"] = Yp[sol.index_of(0.0)].copy()
    if exc_sol is not None:
        raise GreenNotConverged(str(exc_sol), last_solution=sol, gaps=exc_sol.gaps)
    return sol


# ---------------------------------------------------------------------------
# Riccati data and flow-derivative norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiccatiSeries:
    """Log-derivative data z(t) = d/dt log |J(t)|^2 along a Jacobi field."""

    times: np.ndarray
    z: np.ndarray
    kappa: np.ndarray
    norms: np.ndarray
    residual: np.ndarray

    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    def average_identity_defect(self) -> float:
        """Max defect of (1/t) int z ds = (2/t) log(|J(t)|/|J(0)|) on the grid."""
        t = self.times
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (self.z[1:] + self.z[:-1]) * np.diff(t))])
        lhs = cum[1:] / t[1:]
        rhs = 2.0 * np.log(self.norms[1:] / self.norms[0]) / t[1:]
        return float(np.max(np.abs(lhs - rhs)))


def riccati_along(solution: MatrixJacobiSolution, w, t_max: Optional[float] = None) -> RiccatiSeries:
    """Riccati function and residual along the field J(t) = Y(t) w.

    The residual is of z' + z^2 - 2 |J'|^2/|J|^2 + 2 K(gamma', J) = 0 with
    z' by central differences and the curvature term evaluated through the
    geometry module on the actual plane (gamma', J).  Raises
    :class:`VanishingJacobiField` if |J| drops below 1e-12 on the window.
    """
    path = solution.path
    w = np.asarray(w, dtype=float)
    hi = len(solution.times) if t_max is None else solution.index_of(
        round(t_max / path.step) * path.step
    ) + 1
    times = solution.times[:hi]
    J = np.einsum("cij,j->ci", solution.Y[:hi], w)
    Jp = np.einsum("cij,j->ci", solution.Yp[:hi], w)
    norms = np.sqrt(np.einsum("ci,ci->c", J, J))
    if np.any(norms < 1e-12):
        raise VanishingJacobiField("Jacobi field norm below 1e-12 on the requested window")
    z = 2.0 * np.einsum("ci,ci->c", J, Jp) / (norms * norms)

    fines = np.array([path.fine_index(t) for t in times])
    g, gp, gpp = path.spec.log_derivatives(path.x[fines])
    hcurv = gpp + gp * gp
    u0 = path.u0[fines]
    u = path.u[fines]
    alpha = path.alpha[fines]
    beta = path.beta[fines]
    j0 = np.einsum("ci,ci->c", J, alpha)
    jv = np.einsum("ci,cik->ck", J, beta)
    kappa = sectional_curvature_frame(hcurv, gp * gp, u0, u, j0, jv)

    h = path.step
    zp = np.empty_like(z)
    if len(z) >= 5:
        zp[2:-2] = (-z[4:] + 8.0 * z[3:-1] - 8.0 * z[1:-3] + z[:-4]) / (12.0 * h)
    if len(z) >= 3:
        zp[1] = (z[2] - z[0]) / (2.0 * h)
        zp[-2] = (z[-1] - z[-3]) / (2.0 * h)
    zp[0] = (z[1] - z[0]) / h
    zp[-1] = (z[-1] - z[-2]) / h
    residual = zp + z * z - 2.0 * np.einsum("ci,ci->c", Jp, Jp) / (norms * norms) + 2.0 * kappa
    # boundary stencils are low order; the residual claim is for the interior
    residual[:2] = residual[-2:] = 0.0
    return RiccatiSeries(times=times, z=z, kappa=kappa, norms=norms, residual=residual)


def _stacked(solution: MatrixJacobiSolution) -> np.ndarray:
    return np.concatenate([solution.Y, solution.Yp], axis=1)


def dphi_norm_series(solution: MatrixJacobiSolution) -> np.ndarray:
    """Sasaki operator norm of the flow derivative on the solution's span, per node.

    Largest singular value of [Y(t); Y'(t)] times the pseudo-inverse of the
    initial stacked matrix, so the value at the normalization time is 1.
    """
    M = _stacked(solution)
    zero = solution.index_of(0.0) if solution.times[0] <= 0.0 <= solution.times[-1] else 0
    pinv0 = np.linalg.pinv(M[zero])
    prod = np.einsum("ciq,qr->cir", M, pinv0)
    return np.linalg.svd(prod, compute_uv=False)[:, 0]


def dphi_norm(solution: MatrixJacobiSolution, t: float) -> float:
    """Sasaki operator norm of the flow derivative at time t (1 at t = 0)."""
    return float(dphi_norm_series(solution)[solution.index_of(t)])


def sasaki_orthonormal_directions(Us0: np.ndarray) -> np.ndarray:
    """Directions w_i whose initial data (w_i, U w_i) are Sasaki-orthonormal.

    Columns of the inverse symmetric square root of I + U^T U.
    """
    U = np.asarray(Us0, dtype=float)
    gram = np.eye(U.shape[0]) + U.T @ U
    vals, vecs = np.linalg.eigh(gram)
    return vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
