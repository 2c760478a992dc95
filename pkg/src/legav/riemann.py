"""Geodesics, parallel transport, centres of mass and subspace angles.

All routines accept batched points of shape (..., 3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError, InputError, OutOfInjectivityError, SpreadTooLargeError
from .models import ContactModel, Heisenberg

ODE_RTOL = 1e-12
ODE_ATOL = 1e-13


def _geodesic_rhs(model: ContactModel, n_transport: int):
    def rhs(_t, yflat):
        y = yflat.reshape(-1, 2 + n_transport, 3)
        x, v = y[:, 0], y[:, 1]
        G = model.christoffel(x)
        out = np.empty_like(y)
        out[:, 0] = v
        out[:, 1] = -np.einsum("nkij,ni,nj->nk", G, v, v)
        for k in range(n_transport):
            out[:, 2 + k] = -np.einsum("nkij,ni,nj->nk", G, v, y[:, 2 + k])
        return out.ravel()

    return rhs


@dataclass
class GeodesicSegment:
    """Numerically integrated geodesic t -> exp_p(t v), t in [0, span]."""

    model: ContactModel
    start: np.ndarray
    velocity: np.ndarray
    span: float
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray

    @property
    def end(self):
        return self.points[-1]

    def speeds(self):
        return self.model.norm(self.points, self.velocities)


def integrate_geodesic(model, p, v, t=1.0, transport=None, rtol=ODE_RTOL, atol=ODE_ATOL, dense=False):
    """Integrate the geodesic equation (optionally transporting vectors).

    ``p``, ``v`` have shape (n, 3); ``transport`` has shape (n, k, 3).
    Returns (x(t), v(t), transported) or the full solver output when ``dense``.
    """
    p = np.atleast_2d(np.asarray(p, float))
    v = np.atleast_2d(np.asarray(v, float))
    n = p.shape[0]
    k = 0 if transport is None else transport.shape[1]
    y0 = np.empty((n, 2 + k, 3))
    y0[:, 0] = p
    y0[:, 1] = v
    if k:
        y0[:, 2:] = transport
    if t == 0:
        return (p.copy(), v.copy(), None if transport is None else transport.copy()) if not dense else None
    sol = solve_ivp(
        _geodesic_rhs(model, k), (0.0, t), y0.ravel(), method="DOP853", rtol=rtol, atol=atol
    )
    if not sol.success:
        raise IntegrationError(f"geodesic integration failed: {sol.message}")
    if dense:
        return sol
    yT = sol.y[:, -1].reshape(n, 2 + k, 3)
    return yT[:, 0], yT[:, 1], (yT[:, 2:] if k else None)


def exp_map(model: ContactModel, p, v, t: float = 1.0, method: str = "auto"):
    """exp_p(t v).  ``method`` is "auto" (closed form when available) or "ode"."""
    p = np.asarray(p, float)
    v = np.asarray(v, float) * t
    if method == "auto":
        out = model.exp_closed_form(p, v)
        if out is not None:
            return out
    elif method != "ode":
        raise InputError(f"unknown exp method {method!r}")
    shape = p.shape
    x, _, _ = integrate_geodesic(model, p.reshape(-1, 3), np.broadcast_to(v, shape).reshape(-1, 3), 1.0)
    return model.normalize(x.reshape(shape))


def geodesic_segment(model, p, v, t: float = 1.0) -> GeodesicSegment:
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    if t == 0:
        return GeodesicSegment(model, p, v, 0.0, np.zeros(1), p[None], v[None])
    sol = integrate_geodesic(model, p[None], v[None], t, dense=True)
    y = sol.y.reshape(2, 3, -1)
    return GeodesicSegment(model, p, v, float(t), sol.t, y[0].T.copy(), y[1].T.copy())


def parallel_transport(model, p, v, w, t: float = 1.0):
    """Transport vectors w (shape (..., k, 3) or (..., 3)) along t -> exp_p(t v).

    Returns the transported vectors at exp_p(t v).
    """
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    single = w.ndim == p.ndim
    if single:
        w = w[..., None, :]
    if model.flat:
        return (w[..., 0, :] if single else w).copy()
    lead = p.shape[:-1]
    _, _, W = integrate_geodesic(
        model, p.reshape(-1, 3), v.reshape(-1, 3), t, transport=w.reshape(-1, w.shape[-2], 3)
    )
    W = W.reshape(lead + w.shape[-2:])
    return W[..., 0, :] if single else W


def transport_segment(model, segment: GeodesicSegment, w):
    return parallel_transport(model, segment.start, segment.velocity, w, segment.span)


def log_map(model: ContactModel, p, q, tol: float = 1e-13, max_iter: int = 50, strict: bool = True):
    """Initial velocity v with exp_p(v) = q (shooting).

    With ``strict=False`` non-converged entries are returned as NaN instead of
    raising.
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    p, q = np.broadcast_arrays(p, q)
    if model.flat:
        return model.coord_diff(p, q)
    if isinstance(model, Heisenberg):
        return _log_heisenberg(model, p, q, tol, max_iter, strict)
    return _log_shooting(model, p, q, tol, max_iter, strict)


def _newton_shoot(fun, target, v0, tol, max_iter):
    """Solve fun(v) = target by Newton with a finite-difference Jacobian, batched."""
    v = v0.copy()
    eye = np.eye(3)
    converged = np.zeros(v.shape[:-1], dtype=bool)
    polished = np.zeros_like(converged)
    for _ in range(max_iter):
        f0 = fun(v) - target
        h = 1e-7 * np.maximum(1.0, np.linalg.norm(v, axis=-1))[..., None]
        J = np.stack([(fun(v + h * eye[k]) - fun(v - h * eye[k])) / (2 * h) for k in range(3)], axis=-1)
        try:
            dv = np.linalg.solve(J, -f0[..., None])[..., 0]
        except np.linalg.LinAlgError:
            dv = np.full_like(v, np.nan)
        dv = np.where(polished[..., None], 0.0, dv)
        v = v + dv
        step = np.linalg.norm(dv, axis=-1)
        scale = np.maximum(1.0, np.linalg.norm(v, axis=-1))
        polished |= converged
        converged |= step <= tol * scale
        if np.all(polished):
            break
    resid = np.linalg.norm(fun(v) - target, axis=-1)
    ok = np.isfinite(resid) & (resid <= 1e-9 * np.maximum(1.0, np.linalg.norm(target, axis=-1)))
    return v, ok


def _log_heisenberg(model, p, q, tol, max_iter, strict):
    up = model.to_std(p)
    uq = model.to_std(q)
    target = Heisenberg.group_mul(-up, uq)
    w, ok = Heisenberg.log_identity(target)
    if not np.all(ok):
        if strict:
            raise OutOfInjectivityError("log map shooting did not converge")
        w = np.where(ok[..., None], w, np.nan)
    return Heisenberg.frame_to_coords(up, w) / model.d


def _log_shooting(model, p, q, tol, max_iter, strict):
    shape = p.shape
    pf = p.reshape(-1, 3)

    def fun(v):
        x, _, _ = integrate_geodesic(model, pf, v.reshape(-1, 3), 1.0)
        return x.reshape(v.shape)

    target = q.reshape(-1, 3)
    v0 = model.coord_diff(pf, target)
    target = pf + v0
    v, ok = _newton_shoot(fun, target, v0, tol, max_iter)
    if not np.all(ok):
        if strict:
            raise OutOfInjectivityError("log map shooting did not converge")
        v = np.where(ok[..., None], v, np.nan)
    return v.reshape(shape)


def distance(model, p, q):
    return model.norm(np.asarray(p, float), log_map(model, p, q))


def karcher_mean(model: ContactModel, points, weights, tol: float = 1e-11, max_iter: int = 200, init=None):
    """Weighted Riemannian centre of mass.

    ``points`` has shape (..., G, 3), ``weights`` shape (G,).  Iterates
    m <- exp_m(sum_i w_i log_m(p_i)) until the update has g-norm below ``tol``.
    """
    pts = np.asarray(points, float)
    w = np.asarray(weights, float)
    if pts.shape[-2] != w.shape[0]:
        raise InputError("number of weights does not match number of points")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise InputError("weights must be a probability vector")
    m = pts[..., 0, :].copy() if init is None else np.array(init, float)
    inj = model.injectivity_radius_estimate()
    for _ in range(max_iter):
        logs = log_map(model, m[..., None, :], pts, strict=False)
        if not np.all(np.isfinite(logs)):
            raise SpreadTooLargeError("points are not within shooting range of the current mean")
        spread = model.norm(np.broadcast_to(m[..., None, :], pts.shape), logs)
        if np.max(spread) > inj:
            raise SpreadTooLargeError(f"spread {np.max(spread):.3g} exceeds injectivity estimate {inj:.3g}")
        step = np.einsum("g,...gi->...i", w, logs)
        m = exp_map(model, m, step)
        if np.max(model.norm(m, step)) < tol:
            return m
    raise SpreadTooLargeError("Karcher iteration did not converge")


def subspace_distance(F, Fp, gram=None) -> float:
    """Largest principal angle between equal-dimensional subspaces.

    ``F`` and ``Fp`` are (k, n) arrays of spanning row vectors; ``gram`` is the
    inner-product matrix (identity when omitted).
    """
    F = np.atleast_2d(np.asarray(F, float))
    Fp = np.atleast_2d(np.asarray(Fp, float))
    if F.shape != Fp.shape:
        raise InputError(f"dimension mismatch: {F.shape} vs {Fp.shape}")
    if gram is not None:
        C = np.linalg.cholesky(np.asarray(gram, float))
        F = F @ C
        Fp = Fp @ C
    Q1, _ = np.linalg.qr(F.T)
    Q2, _ = np.linalg.qr(Fp.T)
    if np.linalg.matrix_rank(Q1) < F.shape[0] or np.linalg.matrix_rank(Q2) < F.shape[0]:
        raise InputError("spanning vectors are dependent")
    # sin of the largest angle = norm of the component of span(Fp) orthogonal to span(F)
    resid = Q2 - Q1 @ (Q1.T @ Q2)
    s = np.linalg.svd(resid, compute_uv=False)[0]
    c = np.linalg.svd(Q1.T @ Q2, compute_uv=False)[-1]
    return float(np.arctan2(min(s, 1.0), min(c, 1.0)))


def line_angle(model, p, u, v):
    """Angle in [0, pi/2] between the lines spanned by u and v at p (batched)."""
    uu = model.inner(p, u, u)
    vv = model.inner(p, v, v)
    uv = model.inner(p, u, v)
    cos = np.abs(uv) / np.sqrt(uu * vv)
    sin2 = np.maximum(uu * vv - uv * uv, 0.0) / (uu * vv)
    return np.arctan2(np.sqrt(sin2), cos)
