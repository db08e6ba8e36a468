"""Unit-speed geodesics of R x_f T^n and their parallel perpendicular frames.

The geodesic system in coordinates (x, y_1..y_n) is

    x''  = f f' (y_1'^2 + ... + y_n'^2),
    y_i'' = -2 (f'/f) x' y_i',

with the unit-speed first integral x'^2 + f^2 sum y_i'^2 = 1 and the
conserved fiber momenta p_i = f^2 y_i'.  Integration happens in the
orthonormal-basis variables (u0, u) = (x', f y'), see ``engine``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import engine
from .errors import DomainError
from .geometry import TangentVector
from .warp import WarpSpec


@dataclass(frozen=True)
class UnitTangent:
    """A point of the unit tangent bundle in coordinates (x, y, dx, dy)."""

    x: float
    y: np.ndarray
    dx: float
    dy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        object.__setattr__(self, "dy", np.atleast_1d(np.asarray(self.dy, dtype=float)))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def speed(self, spec: WarpSpec) -> float:
        f = float(spec.f(self.x))
        return float(np.sqrt(self.dx**2 + f * f * np.dot(self.dy, self.dy)))

    def frame_velocity(self, spec: WarpSpec) -> tuple:
        """Velocity components (u0, u) in the orthonormal basis."""
        g = float(spec.log_derivatives(np.asarray(self.x, float))[0])
        return float(self.dx), np.exp(g) * self.dy

    def as_tangent_vector(self) -> TangentVector:
        return TangentVector(x=self.x, y=self.y, dx=self.dx, dy=self.dy)


def unit_tangent(spec: WarpSpec, x, y, dx, dy, normalize: bool = True) -> UnitTangent:
    """Build a unit tangent vector, normalizing or validating the speed."""
    theta = UnitTangent(x=float(x), y=y, dx=float(dx), dy=dy)
    if theta.y.shape[0] != spec.n or theta.dy.shape[0] != spec.n:
        raise DomainError("fiber dimension mismatch")
    s = theta.speed(spec)
    if s <= 0.0 or not np.isfinite(s):
        raise DomainError("zero or non-finite velocity")
    if normalize:
        return UnitTangent(x=theta.x, y=theta.y, dx=theta.dx / s, dy=theta.dy / s)
    if abs(s - 1.0) > 1e-10:
        raise DomainError(f"velocity is not unit: |v| - 1 = {s - 1.0:.3e}")
    return theta


def unit_tangent_from_direction(spec: WarpSpec, x, y, u0, u) -> UnitTangent:
    """Unit tangent from orthonormal-basis velocity components (u0, u)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    norm = float(np.sqrt(u0 * u0 + np.dot(u, u)))
    u0, u = u0 / norm, u / norm
    g = float(spec.log_derivatives(np.asarray(float(x), float))[0])
    return UnitTangent(x=float(x), y=y, dx=float(u0), dy=np.exp(-g) * u)


def flip(theta: UnitTangent) -> UnitTangent:
    """The involution (x, v) -> (x, -v) on the unit tangent bundle."""
    return UnitTangent(x=theta.x, y=theta.y, dx=-theta.dx, dy=-theta.dy)


@dataclass
class GeodesicPath:
    """A time-sampled geodesic with parallel frame and curvature matrices.

    Data lives on the fine grid (half the requested step); ``times`` exposes
    the coarse, user-facing grid.  The parallel frame rows are
    V_i = (alpha_i, beta_i) in the orthonormal basis.
    """

    spec: WarpSpec
    theta0: UnitTangent
    step: float
    times_fine: np.ndarray
    x: np.ndarray
    y: Optional[np.ndarray]
    u0: np.ndarray
    u: np.ndarray
    alpha: Optional[np.ndarray]
    beta: Optional[np.ndarray]
    K: Optional[np.ndarray]
    momenta: Optional[np.ndarray]
    unit_defect: np.ndarray
    max_unit_defect: float
    max_momentum_defect: float
    t0_index: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def times(self) -> np.ndarray:
        return self.times_fine[::2]

    @property
    def t_lo(self) -> float:
        return float(self.times_fine[0])

    @property
    def t_hi(self) -> float:
        return float(self.times_fine[-1])

    def fine_index(self, t: float) -> int:
        j = int(round((t - self.times_fine[0]) / (self.step / 2.0)))
        if j < 0 or j >= len(self.times_fine) or abs(self.times_fine[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not on the path grid")
        return j

    def coarse_index(self, t: float) -> int:
        j = self.fine_index(t)
        if j % 2:
            raise DomainError(f"time {t} is not on the coarse grid")
        return j // 2

    def state_at(self, t: float) -> UnitTangent:
        j = self.fine_index(t)
        y = self.y[j] if self.y is not None else np.zeros(self.n)
        return unit_tangent_from_direction(self.spec, self.x[j], y, self.u0[j], self.u[j])

    def frame_at(self, t: float) -> tuple:
        if self.alpha is None:
            raise DomainError("path was integrated without a frame")
        j = self.fine_index(t)
        return self.alpha[j], self.beta[j]

    def momentum_defect_series(self) -> np.ndarray:
        if self.momenta is None:
            raise DomainError("path stores no momenta")
        p0 = self.momenta[self.t0_index]
        scale = max(1.0, float(np.max(np.abs(p0))))
        return np.max(np.abs(self.momenta - p0[None, :]), axis=-1) / scale


def _squeeze_run(run: dict, reverse: bool) -> dict:
    sl = slice(None, None, -1) if reverse else slice(None)
    view = {}
    for key in ("x", "u0", "unit_defect"):
        view[key] = run[key][sl, 0].copy()
    view["times_fine"] = run["times_fine"][sl].copy()
    view["y"] = None if run.get("y") is None else run["y"][sl, 0].copy()
    view["u"] = run["u"][sl, 0].copy()
    for key in ("alpha", "beta", "K", "momenta"):
        view[key] = run[key][sl, 0].copy() if key in run else None
    return view


def integrate_geodesic(
    spec: WarpSpec,
    theta0: UnitTangent,
    t_end: float,
    step: float = 1e-3,
    *,
    store_frame: bool = True,
    drift_tol: float = 1e-7,
    renorm_tol: float = 1e-9,
) -> GeodesicPath:
    """Integrate the geodesic through theta0 over [0, t_end] (t_end may be negative).

    Classic fixed-step RK4 on the half-step grid; node invariants (unit speed,
    momentum conservation, frame orthonormality) are tracked and a drift
    beyond ``drift_tol`` raises :class:`IntegratorDrift`.
    """
    u0, u = theta0.frame_velocity(spec)
    t_end = np.sign(t_end) * round(abs(t_end) / step) * step  # snap to the grid
    run = engine.integrate_states(
        spec,
        [theta0.x],
        [theta0.y],
        [u0],
        [u],
        t0=0.0,
        t1=float(t_end),
        step=step,
        with_frame=store_frame,
        with_y=True,
        renorm_tol=renorm_tol,
        drift_tol=drift_tol,
    )
    reverse = t_end < 0
    view = _squeeze_run(run, reverse)
    return GeodesicPath(
        spec=spec,
        theta0=theta0,
        step=step,
        times_fine=view["times_fine"],
        x=view["x"],
        y=view["y"],
        u0=view["u0"],
        u=view["u"],
        alpha=view["alpha"],
        beta=view["beta"],
        K=view["K"],
        momenta=view["momenta"],
        unit_defect=view["unit_defect"],
        max_unit_defect=float(run["max_unit_defect"][0]),
        max_momentum_defect=float(run["max_momentum_defect"][0]),
        t0_index=len(view["times_fine"]) - 1 if reverse else 0,
        meta={"renorm_events": run["renorm_events"]},
    )


def integrate_window(
    spec: WarpSpec,
    theta0: UnitTangent,
    t_lo: float,
    t_hi: float,
    step: float = 1e-3,
    *,
    drift_tol: float = 1e-7,
) -> GeodesicPath:
    """Integrate over a window [t_lo, t_hi] containing 0, gluing the two runs at 0.

    The frame on the backward half is the backward continuation of the same
    parallel frame, so curvature matrices and Jacobi data are consistent
    across the joint.
    """
    if t_lo > 0 or t_hi < 0:
        raise DomainError("window must contain t = 0")
    t_lo = -round(-t_lo / step) * step
    t_hi = round(t_hi / step) * step
    if t_lo == 0.0:
        return integrate_geodesic(spec, theta0, t_hi, step, drift_tol=drift_tol)
    u0, u = theta0.frame_velocity(spec)
    vel = np.concatenate([[u0], u])[None, :]
    frame = engine.complete_orthonormal_frame(vel)
    frame0 = (frame[:, :, 0], frame[:, :, 1:])
    kwargs = dict(step=step, with_frame=True, with_y=True, frame0=frame0, drift_tol=drift_tol)
    back = engine.integrate_states(spec, [theta0.x], [theta0.y], [u0], [u], t0=0.0, t1=float(t_lo), **kwargs)
    bview = _squeeze_run(back, reverse=True)
    if t_hi > 0.0:
        fwd = engine.integrate_states(spec, [theta0.x], [theta0.y], [u0], [u], t0=0.0, t1=float(t_hi), **kwargs)
        fview = _squeeze_run(fwd, reverse=False)
    else:
        fview = {k: (v[-1:] if v is not None else None) for k, v in bview.items()}

    def glue(a, b):
        if a is None or b is None:
            return None
        return np.concatenate([a[:-1], b], axis=0)

    merged = {key: glue(bview[key], fview[key]) for key in bview}
    n_back = len(bview["times_fine"]) - 1
    return GeodesicPath(
        spec=spec,
        theta0=theta0,
        step=step,
        times_fine=merged["times_fine"],
        x=merged["x"],
        y=merged["y"],
        u0=merged["u0"],
        u=merged["u"],
        alpha=merged["alpha"],
        beta=merged["beta"],
        K=merged["K"],
        momenta=merged["momenta"],
        unit_defect=merged["unit_defect"],
        max_unit_defect=float(max(back["max_unit_defect"][0], fwd["max_unit_defect"][0] if t_hi > 0 else 0.0)),
        max_momentum_defect=float(max(back["max_momentum_defect"][0], fwd["max_momentum_defect"][0] if t_hi > 0 else 0.0)),
        t0_index=n_back,
        meta={},
    )


def extend_path(path: GeodesicPath, t_lo: float, t_hi: float) -> GeodesicPath:
    """A new path covering [t_lo, t_hi], resuming integration from the stored ends.

    Resumed RK4 from a stored node state reproduces the arithmetic of one
    uninterrupted run, so the extension is exact; the input path is left
    untouched.
    """
    step = path.step
    t_lo = -round(-min(t_lo, path.t_lo) / step) * step
    t_hi = round(max(t_hi, path.t_hi) / step) * step
    if t_lo >= path.t_lo - 1e-12 and t_hi <= path.t_hi + 1e-12:
        return path
    if path.alpha is None or path.y is None:
        raise DomainError("extension needs a fully stored path")

    pieces = {key: [getattr(path, key)] for key in ("times_fine", "x", "y", "u0", "u", "alpha", "beta", "K", "momenta", "unit_defect")}
    max_unit = path.max_unit_defect
    max_mom = path.max_momentum_defect
    extra_lo = 0

    def run_from(j, t_target):
        frame0 = (path.alpha[j][None], path.beta[j][None])
        return engine.integrate_states(
            path.spec, [path.x[j]], [path.y[j]], [path.u0[j]], [path.u[j]],
            t0=path.times_fine[j], t1=t_target, step=step,
            with_frame=True, with_y=True, frame0=frame0,
        )

    if t_hi > path.t_hi + 1e-12:
        seg = engine_view = _squeeze_run(run_from(len(path.times_fine) - 1, t_hi), reverse=False)
        for key in pieces:
            pieces[key].append(engine_view[key][1:] if engine_view[key] is not None else None)
        max_unit = max(max_unit, float(np.max(seg["unit_defect"])))
    if t_lo < path.t_lo - 1e-12:
        view = _squeeze_run(run_from(0, t_lo), reverse=True)
        extra_lo = len(view["times_fine"]) - 1
        for key in pieces:
            pieces[key].insert(0, view[key][:-1] if view[key] is not None else None)
        max_unit = max(max_unit, float(np.max(view["unit_defect"])))

    merged = {
        key: (np.concatenate(parts, axis=0) if parts[0] is not None else None)
        for key, parts in pieces.items()
    }
    new = GeodesicPath(
        spec=path.spec,
        theta0=path.theta0,
        step=step,
        times_fine=merged["times_fine"],
        x=merged["x"],
        y=merged["y"],
        u0=merged["u0"],
        u=merged["u"],
        alpha=merged["alpha"],
        beta=merged["beta"],
        K=merged["K"],
        momenta=merged["momenta"],
        unit_defect=merged["unit_defect"],
        max_unit_defect=max_unit,
        max_momentum_defect=max_mom,
        t0_index=path.t0_index + extra_lo,
        meta=dict(path.meta),
    )
    return new


@dataclass(frozen=True)
class ParallelFrame:
    """Frame fields of a path, with orthonormality diagnostics."""

    times_fine: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def inner_products(self, j: int) -> np.ndarray:
        vecs = np.concatenate([self.alpha[j][:, None], self.beta[j]], axis=1)
        return vecs @ vecs.T

    def max_orthonormality_defect(self) -> float:
        vecs = np.concatenate([self.alpha[:, :, None], self.beta], axis=2)
        gram = np.einsum("jid,jkd->jik", vecs, vecs)
        gram -= np.eye(vecs.shape[1])
        return float(np.max(np.abs(gram)))


def parallel_frame(path: GeodesicPath) -> ParallelFrame:
    """The parallel perpendicular frame transported along the path."""
    if path.alpha is None:
        raise DomainError("path was integrated without a frame")
    return ParallelFrame(times_fine=path.times_fine, alpha=path.alpha, beta=path.beta)


def scalar_velocity_series(
    spec: WarpSpec, b0: float, t_end: float, x0: float = 0.0, step: float = 1e-3
):
    """Integrate the scalar reduction b' = g'(x)(1 - b^2), x' = b.

    Works in the log-odds variable ell = log((1+b)/(1-b)), for which the
    equation is ell' = 2 g'(x) and b = tanh(ell/2); this keeps the strict
    growth bounds representable long after b saturates to 1 in double
    precision.  Returns (times, b, ell).
    """
    if abs(b0) > 1.0:
        raise DomainError("|b0| must be <= 1")
    nsteps = int(round(abs(t_end) / step))
    times = np.linspace(0.0, t_end, nsteps + 1)
    if abs(b0) == 1.0:
        b = np.full(nsteps + 1, b0)
        ell = np.full(nsteps + 1, np.inf * b0)
        return times, b, ell
    h = np.sign(t_end) * step if t_end != 0 else step
    x = float(x0)
    ell = float(np.log((1.0 + b0) / (1.0 - b0)))
    xs = np.empty(nsteps + 1)
    ells = np.empty(nsteps + 1)
    xs[0], ells[0] = x, ell

    def rhs(xv, ev):
        gp = float(spec.log_derivatives(np.asarray(xv, float))[1])
        return np.tanh(ev / 2.0), 2.0 * gp

    for i in range(nsteps):
        k1 = rhs(x, ell)
        k2 = rhs(x + 0.5 * h * k1[0], ell + 0.5 * h * k1[1])
        k3 = rhs(x + 0.5 * h * k2[0], ell + 0.5 * h * k2[1])
        k4 = rhs(x + h * k3[0], ell + h * k3[1])
        x += (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        ell += (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        xs[i + 1], ells[i + 1] = x, ell
    return times, np.tanh(ells / 2.0), ells


def scalar_velocity(spec: WarpSpec, b0: float, t: float, x0: float = 0.0, step: float = 1e-3) -> float:
    """The scalar velocity b(t) = x'(t) of the reduced geodesic equation."""
    _, b, _ = scalar_velocity_series(spec, b0, t, x0=x0, step=step)
    return float(b[-1])
