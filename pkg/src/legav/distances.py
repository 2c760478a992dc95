"""Nearest points, C^0 / C^1 distances between curves, and gentle-pair checks."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .curves import DiscreteCurve, uniform_parameter
from .errors import NonUniqueFootError, NotASectionError
from .models import TWO_PI, wrap_angle
from .riemann import exp_map, geodesic_segment, line_angle, log_map, parallel_transport

_CHUNK = 4096


def coarse_parameter(curve: DiscreteCurve, X):
    """Parameter of the sample closest to each x (first-order metric distance)."""
    X = np.atleast_2d(np.asarray(X, float))
    g = curve.model.metric(curve.points)
    out = np.empty(X.shape[0], dtype=int)
    step = max(1, _CHUNK * 64 // curve.n)
    for a in range(0, X.shape[0], step):
        D = curve.model.coord_diff(curve.points[None, :, :], X[a : a + step, None, :])
        d2 = np.einsum("mni,nij,mnj->mn", D, g, D)
        out[a : a + step] = np.argmin(d2, axis=1)
    return curve.t[out]


def secant_solve(fun, s, f, slope, max_iter: int = 60, tol: float = 1e-14):
    """Batched scalar root finding started from values f = fun(s) and slopes.

    Secant slopes are only refreshed while the iterates are far enough apart
    to resolve them; near the root the last good slope is kept so roundoff in
    f cannot produce wild steps.  Entries stop once their step is below tol.
    """
    s = np.array(s, float)
    slope = np.array(slope, float)
    active = np.ones(s.shape, dtype=bool)
    for _ in range(max_iter):
        step = np.where(active, -f / slope, 0.0)
        s_new = s + step
        active &= np.abs(step) > tol
        if not np.any(active):
            return s_new
        f_new = fun(s_new)
        ds = s_new - s
        use = active & (np.abs(ds) > 1e-8)
        slope = np.where(use, (f_new - f) / np.where(use, ds, 1.0), slope)
        s, f = s_new, f_new
    return s


def foot_points(curve: DiscreteCurve, X, s0=None, max_iter: int = 60, tol: float = 1e-14):
    """Batched nearest points on the curve interpolant.

    Solves <log_{c(s)} x, c'(s)> = 0 by a secant iteration started at the
    nearest sample.  Returns (s, foot, w, dist) with w = log_foot(x).
    """
    model = curve.model
    X = np.atleast_2d(np.asarray(X, float))
    s = coarse_parameter(curve, X) if s0 is None else np.array(s0, float)

    def resid(s):
        q = curve.eval(s)
        d = curve.eval(s, 1)
        w = log_map(model, q, X)
        return model.inner(q, w, d), q, d, w

    f, q, d, _ = resid(s)
    s = secant_solve(lambda u: resid(u)[0], s, f, -model.inner(q, d, d), max_iter, tol)
    s = np.mod(s, TWO_PI)
    q = curve.eval(s)
    w = log_map(model, q, X)
    return s, q, w, model.norm(q, w)


def nearest_point(curve: DiscreteCurve, x, check_unique: bool = True, tol: float = 1e-8):
    """Closest point of the curve to x, with the connecting geodesic from x.

    Raises NonUniqueFootError when two separated local minima have distances
    within ``tol``.
    """
    model = curve.model
    x = np.asarray(x, float)
    D = model.coord_diff(curve.points, x[None, :])
    g = model.metric(curve.points)
    d2 = np.einsum("ni,nij,nj->n", D, g, D)
    if check_unique:
        is_min = (d2 <= np.roll(d2, 1)) & (d2 <= np.roll(d2, -1))
        cand = curve.t[is_min]
    else:
        cand = curve.t[[np.argmin(d2)]]
    s, q, w, dist = foot_points(curve, np.repeat(x[None], len(cand), 0), cand)
    order = np.argsort(dist)
    best = order[0]
    if check_unique and len(cand) > 1:
        spacing = TWO_PI / curve.n
        for j in order[1:]:
            apart = abs(wrap_angle(s[j] - s[best])) > 2 * spacing
            if apart and dist[j] - dist[best] <= tol:
                raise NonUniqueFootError(
                    f"two nearest-point candidates at distance {dist[best]:.6g} (parameters {s[best]:.6f}, {s[j]:.6f})"
                )
    foot = q[best]
    return foot, geodesic_segment(model, x, log_map(model, x, foot), 1.0)


def _probe(curve: DiscreteCurve, refine: bool):
    s = curve.t
    if refine:
        s = np.sort(np.concatenate([s, s + np.pi / curve.n]))
    return s, curve.eval(s), curve.tangent_at(s)


def d0(N: DiscreteCurve, Nprime: DiscreteCurve, refine: bool = True) -> float:
    """sup over x' in N' of dist(x', N).  Not symmetric."""
    return d0_detail(N, Nprime, refine)["value"]


def d0_detail(N, Nprime, refine: bool = True) -> dict:
    s, X, _ = _probe(Nprime, refine)
    _, _, _, dist = foot_points(N, X)
    i = int(np.argmax(dist))
    return {"value": float(dist[i]), "argmax_parameter": float(s[i]), "resolution": float(TWO_PI / len(s)), "samples": len(s)}


def _check_section(s_feet):
    ds = wrap_angle(np.diff(np.append(s_feet, s_feet[0])))
    monotone = np.all(ds > 0) or np.all(ds < 0)
    if not monotone or abs(abs(ds.sum()) - TWO_PI) > 1e-6:
        raise NotASectionError("nearest-point map from N' to N is not injective on samples")


def d1(N: DiscreteCurve, Nprime: DiscreteCurve, refine: bool = True) -> float:
    return d1_detail(N, Nprime, refine)["value"]


def d1_detail(N: DiscreteCurve, Nprime: DiscreteCurve, refine: bool = True) -> dict:
    """C^1 distance: sup over x' of max(dist to foot, angle to transported tangent)."""
    model = N.model
    s, X, tauX = _probe(Nprime, refine)
    sf, q, w, dist = foot_points(N, X)
    _check_section(sf[:: 2 if refine else 1])
    tauN = N.tangent_at(sf)
    moved = parallel_transport(model, q, w, tauN)
    ang = line_angle(model, X, moved, tauX)
    val = np.maximum(dist, ang)
    i = int(np.argmax(val))
    return {
        "value": float(val[i]),
        "c0_part": float(np.max(dist)),
        "angle_part": float(np.max(ang)),
        "resolution": float(TWO_PI / len(s)),
        "samples": len(s),
    }


def pairwise_d1(curves) -> np.ndarray:
    k = len(curves)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                out[i, j] = 0.0 if curves[i] is curves[j] else d1(curves[i], curves[j])
    return out


# ------------------------------------------------------------------------- gentleness
@dataclass
class GentlenessReport:
    normal_injectivity_radius: float
    focal_radius: float
    nonlocal_distance: float
    curvature_sup: float
    injectivity_radius: float
    pass_normal_injectivity: bool
    pass_curvature: bool
    pass_injectivity: bool
    tube_radius: float
    n_curve_samples: int
    n_tube_points: int
    estimates_are_sampled: bool = True

    @property
    def passed(self) -> bool:
        return self.pass_normal_injectivity and self.pass_curvature and self.pass_injectivity

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def geodesic_curvature(curve: DiscreteCurve, s=None):
    """|nabla_T T| along the curve interpolant."""
    m = curve.model
    s = curve.t if s is None else s
    p = curve.eval(s)
    d1_ = curve.eval(s, 1)
    d2_ = curve.eval(s, 2)
    acc = d2_ + np.einsum("nkij,ni,nj->nk", m.christoffel(p), d1_, d1_)
    sp2 = m.inner(p, d1_, d1_)
    perp = acc - (m.inner(p, acc, d1_) / sp2)[:, None] * d1_
    return m.norm(p, perp) / sp2


def normal_frame(model, p, tau):
    """g-orthonormal normal frame (n1, n2): n1 is the Reeb field made orthogonal to tau."""
    F = model.contact_frame(p)
    n1 = F[:, 2] - model.inner(p, F[:, 2], tau)[:, None] * tau
    n1 /= model.norm(p, n1)[:, None]

    def complete(e):
        h = e - model.inner(p, e, tau)[:, None] * tau - model.inner(p, e, n1)[:, None] * n1
        return h, model.norm(p, h)

    h0, r0 = complete(F[:, 0])
    h1, r1 = complete(F[:, 1])
    n2 = np.where((r0 >= r1)[:, None], h0 / r0[:, None], h1 / r1[:, None])
    # orientation: (tau, n1, n2) positively oriented in coordinates
    det = np.linalg.det(np.stack([tau, n1, n2], axis=1))
    return n1, n2 * np.sign(det)[:, None]


def gentleness_report(curve: DiscreteCurve, tube_radius: float = 1.0, n_samples: int = 128, seed: int = 0) -> GentlenessReport:
    """Sampled estimates of the three gentle-pair conditions (worst sample reported)."""
    model = curve.model
    kappa = geodesic_curvature(curve, uniform_parameter(4 * curve.n))
    focal = float(1.0 / max(np.max(kappa), 1e-300))

    # non-local self distance on a subsample
    m = min(curve.n, 256)
    idx = np.linspace(0, curve.n, m, endpoint=False).astype(int)
    P = curve.points[idx]
    arc = curve.arclength()[idx]
    L = curve.length()
    sep = np.abs(arc[:, None] - arc[None, :])
    sep = np.minimum(sep, L - sep)
    far = sep > min(np.pi * focal, 0.5 * L)
    nonlocal_d = np.inf
    if np.any(far):
        I, J = np.nonzero(np.triu(far))
        W = log_map(model, P[I], P[J], strict=False)
        dist = model.norm(P[I], W)
        # entries that failed to shoot are far apart; the horizontal
        # coordinate gap bounds their distance from below
        lower = np.linalg.norm(model.coord_diff(P[I], P[J])[:, :2] * model.d[:2], axis=1)
        dist = np.where(np.isfinite(dist), dist, lower)
        nonlocal_d = float(np.min(dist))
    normal_inj = min(focal, 0.5 * nonlocal_d)

    # curvature on the tube of the given radius
    rng = np.random.default_rng(seed)
    k = min(curve.n, n_samples)
    sidx = np.linspace(0, curve.n, k, endpoint=False).astype(int)
    base = curve.points[sidx]
    pts = [base]
    n1, n2 = normal_frame(model, base, curve.tangents[sidx])
    for rho in (0.5 * tube_radius, tube_radius):
        for a in (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi):
            v = rho * (np.cos(a) * n1 + np.sin(a) * n2)
            pts.append(exp_map(model, base, v))
    Q = np.concatenate(pts)
    Fq = model.contact_frame(Q)
    ks = [
        model.sectional_curvature(Q, Fq[:, 0], Fq[:, 1]),
        model.sectional_curvature(Q, Fq[:, 0], Fq[:, 2]),
        model.sectional_curvature(Q, Fq[:, 1], Fq[:, 2]),
    ]
    U = rng.standard_normal(Q.shape)
    V = rng.standard_normal(Q.shape)
    ks.append(model.sectional_curvature(Q, U, V))
    ksup = float(max(np.max(np.abs(k_)) for k_ in ks))
    inj = float(model.injectivity_radius_estimate())
    return GentlenessReport(
        normal_injectivity_radius=float(normal_inj),
        focal_radius=focal,
        nonlocal_distance=float(nonlocal_d),
        curvature_sup=ksup,
        injectivity_radius=inj,
        pass_normal_injectivity=normal_inj >= 1.0,
        pass_curvature=ksup <= 1.0,
        pass_injectivity=inj >= 1.0,
        tube_radius=float(tube_radius),
        n_curve_samples=int(curve.n),
        n_tube_points=int(Q.shape[0]),
    )
