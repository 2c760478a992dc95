"""Weinstein average, tubular charts and the two Moser-flow averages.

Both averages share the same preparation: the Weinstein average N of the
family, the tubular diffeomorphisms phi_g carrying N_g onto N, and the pulled
back forms theta_g = (phi_g^{-1})^* theta.  The contact average flows N
backwards along the contact Moser field of theta_t = theta + t (sum w_g theta_g - theta);
the symplectization average flows along the Moser field of the normalised
symplectic forms ds ^ theta_t + d theta_t on M x R and discards the s drift.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .curves import DiscreteCurve, DiscreteLegendrian, FamilyInput, PeriodicInterpolant, legendrian_residual
from .distances import d0, d1, foot_points, secant_solve, gentleness_report, geodesic_curvature, normal_frame
from .errors import (
    DegenerateFormError,
    DomainError,
    GateError,
    IntegrationError,
    NumericalError,
    SpreadTooLargeError,
)
from .models import TWO_PI, ContactModel, contact_volume, wrap_angle
from .riemann import exp_map, karcher_mean, log_map, parallel_transport

EPSILON_THRESHOLD = 1.0 / 70000.0


@dataclass(frozen=True)
class AverageConfig:
    """All tolerances of a run in one place."""

    mode: str = "warn"  # "strict" refuses inputs outside the small-epsilon regime
    epsilon_threshold: float = EPSILON_THRESHOLD
    bound_constant: float = 1000.0
    tube_radius: float = 0.05
    gentleness_tube: float = 1.0
    gentleness_samples: int = 128
    weinstein_tol: float = 1e-11
    weinstein_max_iter: int = 100
    fd_step: float = 1e-3
    ode_rtol: float = 1e-10
    ode_atol: float = 1e-10
    residual_tol: float = 1e-6
    identity_tol: float = 1e-9
    crosscheck_tol: float = 1e-9
    trace_points: int = 9
    chunk: int = 64
    threads: int = 1

    def __post_init__(self):
        if self.mode not in ("strict", "warn"):
            raise ValueError(f"mode must be 'strict' or 'warn', got {self.mode!r}")

    def to_dict(self):
        return asdict(self)


DEFAULT_CONFIG = AverageConfig()


# --------------------------------------------------------------------------- helpers
def _curve_key(curve, w) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(curve.points).tobytes())
    h.update(np.float64(w).tobytes())
    return h.hexdigest()


def canonical_order(family: FamilyInput) -> list[int]:
    """Order members by decreasing weight, ties broken by a content hash.

    The average is a function of the weighted set of curves, so every
    computation runs on this order; joint permutations of (curves, weights)
    then give bit-identical results.
    """
    keys = [_curve_key(c, w) for c, w in zip(family.curves, family.weights)]
    return sorted(range(len(family)), key=lambda i: (-family.weights[i], keys[i]))


def _polar2(model, p, m1, m2):
    """Replace (m1, m2) by the g-orthonormal pair closest to it (G^{-1/2} mixing)."""
    a = model.inner(p, m1, m1)
    b = model.inner(p, m1, m2)
    c = model.inner(p, m2, m2)
    sd = np.sqrt(a * c - b * b)
    tt = np.sqrt(a + c + 2.0 * sd)
    # sqrt(G) = (G + sd I) / tt, inverted in closed form
    s00, s01, s11 = (a + sd) / tt, b / tt, (c + sd) / tt
    det = s00 * s11 - s01 * s01
    i00, i01, i11 = s11 / det, -s01 / det, s00 / det
    return i00[..., None] * m1 + i01[..., None] * m2, i01[..., None] * m1 + i11[..., None] * m2


def _unwrapped_interpolant(u):
    uu = np.unwrap(u)
    total = uu[-1] + wrap_angle(uu[0] - uu[-1]) - uu[0]
    return PeriodicInterpolant(uu, [round(total / TWO_PI)])


# ----------------------------------------------------------------------- Weinstein
def weinstein_curve(family: FamilyInput, config: AverageConfig = DEFAULT_CONFIG) -> DiscreteCurve:
    """Invariant curve of x -> karcher_mean(nearest points of x on each N_g).

    Iterated from the samples of the first member (in canonical order) until
    the normal part of the update is below ``weinstein_tol``.
    """
    model = family.model
    curves, w = family.curves, family.weights
    X = curves[0].points.copy()
    if all(np.array_equal(c.points, X) for c in curves):
        return DiscreteCurve(model, X, curves[0].tangents.copy(), {"weinstein_iterations": 0, "weinstein_step": 0.0})
    guesses = [None] * len(curves)
    step = np.inf
    for it in range(1, config.weinstein_max_iter + 1):
        feet = []
        for j, c in enumerate(curves):
            s, q, _, _ = foot_points(c, X, guesses[j])
            guesses[j] = s
            feet.append(q)
        Xn = model.normalize(karcher_mean(model, np.stack(feet, axis=1), w, tol=1e-13, init=X))
        # the map slides points along the invariant curve by O(eps^2), so only
        # the displacement normal to the current curve measures convergence
        D = model.coord_diff(X, Xn)
        tau = DiscreteCurve.from_points(model, Xn).tangents
        D = D - model.inner(Xn, D, tau)[:, None] * tau
        step = float(np.max(model.norm(Xn, D)))
        X = Xn
        if step < config.weinstein_tol:
            break
    else:
        raise SpreadTooLargeError(f"Weinstein iteration stalled at step {step:.3e}")
    return DiscreteCurve.from_points(model, X, {"weinstein_iterations": it, "weinstein_step": step})


class TubularChart:
    """The average N with the bundle maps phi_g between tubes around N_g and N.

    For a sample s of N with base point q, q' = gamma_g(u*(s)) is the point of
    N_g reached by a geodesic leaving q orthogonally to N; sigma_g(s) = log_q q'.
    The normal frame (n1, n2) of N at q is transported to q', projected onto
    the normal plane of N_g and re-orthonormalised, giving (m1, m2).  Then

        phi_g^{-1}(exp_q(c1 n1 + c2 n2)) = exp_{q'}(c1 m1 + c2 m2).
    """

    def __init__(self, base: DiscreteCurve, family: FamilyInput, config: AverageConfig = DEFAULT_CONFIG):
        self.base = base
        self.model = base.model
        self.frame_model = base.model.with_sign(1)
        self.members = list(family.curves)
        self.weights = np.asarray(family.weights, float)
        focal = 1.0 / max(float(np.max(geodesic_curvature(base, np.linspace(0, TWO_PI, 4 * base.n, endpoint=False)))), 1e-300)
        self.radius = float(min(config.tube_radius, 0.5 * focal))
        self.identity = [np.array_equal(c.points, base.points) for c in self.members]
        self.u_star: list = []
        self.m_frames: list = []
        self.sigma: list = []
        for c, ident in zip(self.members, self.identity):
            if ident:
                self.u_star.append(None)
                self.m_frames.append(None)
                self.sigma.append(np.zeros_like(base.points))
            else:
                u, m, sig = self._build_member(c)
                self.u_star.append(u)
                self.m_frames.append(m)
                self.sigma.append(sig)
        smax = max(float(np.max(self.model.norm(base.points, s))) for s in self.sigma)
        if smax > self.radius:
            raise DomainError(f"member offset {smax:.3e} exceeds the tube radius {self.radius:.3e}")

    # -- construction ----------------------------------------------------------
    def base_frame(self, s):
        q = self.base.eval(s)
        tau = self.base.tangent_at(s)
        n1, n2 = normal_frame(self.frame_model, q, tau)
        return q, tau, n1, n2

    def _build_member(self, curve, max_iter: int = 60):
        model = self.model
        s = self.base.t
        q, tau, n1, n2 = self.base_frame(s)

        def f(u):
            w = log_map(model, q, curve.eval(u))
            return model.inner(q, w, tau)

        u0, _, _, _ = foot_points(curve, q)
        u = secant_solve(f, u0, f(u0), model.inner(q, curve.eval(u0, 1), tau), max_iter)
        qp = curve.eval(u)
        sig = log_map(model, q, qp)
        m = parallel_transport(model, q, sig, np.stack([n1, n2], axis=1))
        return _unwrapped_interpolant(u), PeriodicInterpolant(m.reshape(len(s), 6)), sig

    # -- evaluation ------------------------------------------------------------
    def member_frame(self, g: int, s):
        """(u*(s), q', m1, m2) for member g at parameters s of N."""
        model = self.model
        curve = self.members[g]
        u = self.u_star[g](s)[..., 0]
        qp = curve.eval(u)
        tg = curve.eval(u, 1)
        m = self.m_frames[g](s).reshape(np.shape(s) + (2, 3))
        tt = model.inner(qp, tg, tg)[..., None]
        m1 = m[..., 0, :] - (model.inner(qp, m[..., 0, :], tg)[..., None] / tt) * tg
        m2 = m[..., 1, :] - (model.inner(qp, m[..., 1, :], tg)[..., None] / tt) * tg
        m1, m2 = _polar2(model, qp, m1, m2)
        return u, qp, m1, m2

    def base_coordinates(self, X, s0=None):
        """Foot parameter on N and normal coordinates (c1, c2) of points X."""
        s, q, w, dist = foot_points(self.base, X, s0)
        if np.any(dist > self.radius):
            raise DomainError(f"point at distance {np.max(dist):.3e} from N is outside the tube of radius {self.radius:.3e}")
        tau = self.base.tangent_at(s)
        n1, n2 = normal_frame(self.frame_model, q, tau)
        c = np.stack([self.model.inner(q, w, n1), self.model.inner(q, w, n2)], axis=-1)
        return s, c

    def inverse_from_coordinates(self, g: int, s, c):
        if self.identity[g]:
            q, _, n1, n2 = self.base_frame(s)
            return exp_map(self.model, q, c[..., :1] * n1 + c[..., 1:] * n2)
        _, qp, m1, m2 = self.member_frame(g, s)
        return exp_map(self.model, qp, c[..., :1] * m1 + c[..., 1:] * m2)

    def inverse(self, g: int, X, s0=None):
        """phi_g^{-1}: tube of N -> tube of N_g."""
        X = np.atleast_2d(np.asarray(X, float))
        if self.identity[g]:
            return X.copy()
        s, c = self.base_coordinates(X, s0)
        return self.inverse_from_coordinates(g, s, c)

    def _u_inverse(self, g: int, u):
        ustar = self.u_star[g]
        samples = ustar(self.base.t)[:, 0]
        idx = np.argmin(np.abs(wrap_angle(samples[None, :] - u[:, None])), axis=1)
        s = self.base.t[idx]
        for _ in range(50):
            ds = wrap_angle(ustar(s)[:, 0] - u) / ustar(s, 1)[:, 0]
            s = s - ds
            if np.max(np.abs(ds)) < 1e-15:
                break
        return np.mod(s, TWO_PI)

    def forward(self, g: int, Y):
        """phi_g: tube of N_g -> tube of N."""
        Y = np.atleast_2d(np.asarray(Y, float))
        if self.identity[g]:
            return Y.copy()
        model = self.model
        u, qp, w, dist = foot_points(self.members[g], Y)
        if np.any(dist > self.radius):
            raise DomainError("point outside the member tube")
        s = self._u_inverse(g, u)
        _, qp2, m1, m2 = self.member_frame(g, s)
        c1 = model.inner(qp2, w, m1)
        c2 = model.inner(qp2, w, m2)
        q, _, n1, n2 = self.base_frame(s)
        return exp_map(model, q, c1[:, None] * n1 + c2[:, None] * n2)

    def eval(self, g: int, x, direction: str = "forward"):
        if direction == "forward":
            return self.forward(g, x)
        if direction == "inverse":
            return self.inverse(g, x)
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")

    @property
    def all_identity(self) -> bool:
        return all(self.identity)


def weinstein_average(family: FamilyInput, config: AverageConfig = DEFAULT_CONFIG):
    """(N, chart) for the family in canonical order."""
    fam = family.permuted(canonical_order(family))
    N = weinstein_curve(fam, config)
    return N, TubularChart(N, fam, config)


def tubular_diffeo_eval(chart: TubularChart, g: int, x, direction: str = "forward"):
    return chart.eval(g, x, direction)


# -------------------------------------------------------------------------- forms
@dataclass
class FormDeficit:
    """theta, d theta at x and their t-derivatives along theta_t."""

    theta: np.ndarray
    omega: np.ndarray
    theta_dot: np.ndarray
    omega_dot: np.ndarray
    s: np.ndarray | None = None

    def at(self, t):
        return self.theta + t * self.theta_dot, self.omega + t * self.omega_dot


_RICH = np.array([1.0, -1.0, 0.5, -0.5])


def averaged_form_deficit(chart: TubularChart, X, s0=None, h: float | None = None) -> FormDeficit:
    """theta_dot = sum_g w_g (phi_g^{-1})^* theta - theta, and its exterior derivative.

    The differential of phi_g^{-1} is taken by Richardson-extrapolated central
    differences with step h; d commutes with pullback so
    d theta_g = J^T dtheta(phi_g^{-1} x) J needs no second differences.
    """
    model = chart.model
    X = np.atleast_2d(np.asarray(X, float))
    th = model.theta(X)
    om = model.omega(X)
    tdot = np.zeros_like(th)
    odot = np.zeros_like(om)
    if chart.all_identity:
        return FormDeficit(th, om, tdot, odot, s0)
    h = AverageConfig.fd_step if h is None else h
    M = X.shape[0]
    offs = np.concatenate([np.zeros((1, 3)), (_RICH[:, None, None] * h * np.eye(3)[None]).reshape(12, 3)])
    P = X[:, None, :] + offs[None]  # (M, 13, 3): centre, then +h, -h, +h/2, -h/2 along each axis
    sc, cc = chart.base_coordinates(X, s0)
    s, c = chart.base_coordinates(P.reshape(-1, 3), np.repeat(sc, 13))
    for g, w in enumerate(chart.weights):
        if chart.identity[g]:
            continue
        Y = chart.inverse_from_coordinates(g, s, c).reshape(M, 13, 3)
        Yc = Y[:, 0]
        Yp = Y[:, 1:].reshape(M, 4, 3, 3)  # [m, rich, axis, coord]
        D1 = model.coord_diff(Yp[:, 1], Yp[:, 0]) / (2 * h)
        D2 = model.coord_diff(Yp[:, 3], Yp[:, 2]) / h
        J = np.swapaxes((4.0 * D2 - D1) / 3.0, -1, -2)  # J[m, i, k] = d y_i / d x_k
        thg = np.einsum("mi,mik->mk", model.theta(Yc), J)
        omg = np.einsum("mik,mij,mjl->mkl", J, model.omega(Yc), J)
        tdot += w * (thg - th)
        odot += w * (omg - om)
    # J^T omega J is antisymmetric up to roundoff; keep it exactly so
    odot = 0.5 * (odot - np.swapaxes(odot, -1, -2))
    return FormDeficit(th, om, tdot, odot, sc)


def _margin(d: FormDeficit, t):
    th_t, om_t = d.at(t)
    return contact_volume(th_t, om_t) / contact_volume(d.theta, d.omega)


def _kernel_basis(a):
    """Two columns spanning ker a, chosen from the projector I - a a^T / |a|^2 (even in a)."""
    P = np.eye(3) - np.einsum("mi,mj->mij", a, a) / np.einsum("mi,mi->m", a, a)[:, None, None]
    diag = np.einsum("mii->mi", P)
    idx = np.argsort(-diag, axis=1, kind="stable")[:, :2]
    idx = np.sort(idx, axis=1)
    return np.take_along_axis(P, idx[:, None, :], axis=2)  # (M, 3, 2)


def contact_moser_field(d: FormDeficit, t: float):
    """v in ker theta_t with dtheta_t(v, w) = -theta_dot(w) for w in ker theta_t.

    Returns (v, margin) where margin = (theta_t ^ dtheta_t) / (theta ^ dtheta).
    """
    margin = _margin(d, t)
    if np.any(margin <= 0):
        raise DegenerateFormError(f"theta_t lost the contact condition at t = {t:.6g} (margin {np.min(margin):.3e})")
    if not np.any(d.theta_dot):
        return np.zeros_like(d.theta), margin
    th_t, om_t = d.at(t)
    B = _kernel_basis(th_t)
    A = np.einsum("mia,mji,mjb->mab", B, om_t, B)
    rhs = -np.einsum("mia,mi->ma", B, d.theta_dot)
    c = np.linalg.solve(A, rhs[..., None])[..., 0]
    return np.einsum("mia,ma->mi", B, c), margin


def contact_moser_field_lstsq(d: FormDeficit, t: float):
    """Oracle: solve i_v dtheta_t = -theta_dot + theta_dot(R_t) theta_t, theta_t(v) = 0 by least squares."""
    th_t, om_t = d.at(t)
    R = reeb_of(th_t, om_t)
    rhs = -d.theta_dot + np.einsum("mi,mi->m", d.theta_dot, R)[:, None] * th_t
    A = np.concatenate([np.swapaxes(om_t, -1, -2), th_t[:, None, :]], axis=1)  # (M, 4, 3)
    b = np.concatenate([rhs, np.zeros((len(th_t), 1))], axis=1)
    return np.stack([np.linalg.lstsq(A[m], b[m], rcond=None)[0] for m in range(len(A))])


def reeb_of(th, om):
    n = np.stack([om[..., 1, 2], -om[..., 0, 2], om[..., 0, 1]], axis=-1)
    return n / np.einsum("...i,...i->...", th, n)[..., None]


def symplectization_matrix(th_t, om_t):
    """Components of ds ^ theta_t + dtheta_t on M x R; index 3 is s."""
    W = np.zeros(th_t.shape[:-1] + (4, 4))
    W[..., :3, :3] = om_t
    W[..., 3, :3] = th_t
    W[..., :3, 3] = -th_t
    return W


def symplectization_moser_field(d: FormDeficit, t: float, check: bool = True, tol: float = 1e-9):
    """(v, a) with i_{(v,a)} omega_bar_t = -theta_dot (the e^s factors cancel).

    With ``check`` the M-part is compared with the contact field and a with
    -theta_dot(R_t); a mismatch raises NumericalError.
    """
    margin = _margin(d, t)
    if np.any(margin <= 0):
        raise DegenerateFormError(f"omega_bar_t degenerate at t = {t:.6g}")
    th_t, om_t = d.at(t)
    W = symplectization_matrix(th_t, om_t)
    alpha = np.concatenate([d.theta_dot, np.zeros(d.theta_dot.shape[:-1] + (1,))], axis=-1)
    V = np.linalg.solve(np.swapaxes(W, -1, -2), -alpha[..., None])[..., 0]
    if check and np.any(d.theta_dot):
        vc, _ = contact_moser_field(d, t)
        a_ref = -np.einsum("mi,mi->m", d.theta_dot, reeb_of(th_t, om_t))
        scale = 1.0 + np.max(np.abs(V))
        err = max(float(np.max(np.abs(V[:, :3] - vc))), float(np.max(np.abs(V[:, 3] - a_ref))))
        if err > tol * scale:
            raise NumericalError(f"symplectization field disagrees with the contact field by {err:.3e}")
    return V, margin


def lagrangian_residual(curve: DiscreteCurve) -> float:
    """sup |omega_bar(tau, d/ds)| over samples of L x R; equals sup |theta(tau)|."""
    m = curve.model
    tau = curve.tangents / m.norm(curve.points, curve.tangents)[:, None]
    # omega_bar((tau, 0), (0, 1)) = 0 * theta(0) - 1 * theta(tau) + dtheta(tau, 0)
    return float(np.max(np.abs(-m.eval_theta(curve.points, tau))))


# --------------------------------------------------------------------------- gates
@dataclass
class GateReport:
    epsilon: float
    threshold: float
    regime: str
    mode: str
    passed: bool
    pairwise_d1: list
    gentleness: list
    form_norms: dict
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _form_norm_report(model: ContactModel, points) -> dict:
    fro = model.nabla_form_norms(points, "frobenius")
    op = model.nabla_form_norms(points, "operator")
    return {
        "nabla_theta": float(np.max(fro[0])),
        "nabla_dtheta": float(np.max(fro[1])),
        "nabla_theta_operator": float(np.max(op[0])),
        "nabla_dtheta_operator": float(np.max(op[1])),
    }


def epsilon_gate(family: FamilyInput, config: AverageConfig = DEFAULT_CONFIG, gentleness: bool = True) -> GateReport:
    """epsilon = max over ordered pairs of d1(N_g, N_h), compared with the threshold 1/70000."""
    fam = family.permuted(canonical_order(family))
    k = len(fam)
    pair = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i != j and not np.array_equal(fam.curves[i].points, fam.curves[j].points):
                pair[i, j] = d1(fam.curves[i], fam.curves[j])
    eps = float(pair.max())
    regime = "paper" if eps < config.epsilon_threshold else "relaxed"
    warnings = []
    gent = []
    if gentleness:
        seen = {}
        for c in fam.curves:
            key = _curve_key(c, 0.0)
            if key not in seen:
                seen[key] = gentleness_report(c, config.gentleness_tube, config.gentleness_samples).to_dict()
            gent.append(seen[key])
    norms = _form_norm_report(fam.model, fam.curves[0].points)
    if norms["nabla_theta"] >= 1.0 or norms["nabla_dtheta"] >= 1.0:
        warnings.append(
            f"form norms |nabla theta| = {norms['nabla_theta']:.4g}, |nabla dtheta| = {norms['nabla_dtheta']:.4g} are not below 1;"
            " the epsilon threshold is applied unchanged"
        )
    if regime == "relaxed":
        warnings.append(f"epsilon = {eps:.4e} is not below {config.epsilon_threshold:.6e} (relaxed regime)")
    gent_ok = all(r["passed"] for r in gent)
    if gent and not gent_ok:
        warnings.append("a member fails the gentleness conditions")
    passed = regime == "paper" and gent_ok
    return GateReport(eps, config.epsilon_threshold, regime, config.mode, passed, pair.tolist(), gent, norms, warnings)


@dataclass
class BoundReport:
    max_d0: float
    epsilon: float
    ratio: float
    constant: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def bound_check(d0_values, epsilon: float, config: AverageConfig = DEFAULT_CONFIG) -> BoundReport:
    """max_g d0(N_g, L) < constant * epsilon; with epsilon = 0 the output must coincide with the input."""
    m = float(max(d0_values))
    if epsilon > 0:
        ratio = m / epsilon
        ok = m < config.bound_constant * epsilon
    else:
        ratio = 0.0 if m <= config.identity_tol else float("inf")
        ok = m <= config.identity_tol
    return BoundReport(m, float(epsilon), float(ratio), config.bound_constant, bool(ok))


# --------------------------------------------------------------------------- flows
@dataclass
class MoserTrace:
    """Diagnostics recorded on a fixed grid of t from 1 down to 0."""

    times: list
    min_margin: list
    max_speed: list
    steps: int
    rhs_evaluations: int
    direction: str = "t: 1 -> 0"

    def to_dict(self):
        return asdict(self)


@dataclass
class Prepared:
    family: FamilyInput
    order: list
    N: DiscreteCurve
    chart: TubularChart
    gate: GateReport
    config: AverageConfig


def prepare(family: FamilyInput, config: AverageConfig = DEFAULT_CONFIG, gate: GateReport | None = None) -> Prepared:
    order = canonical_order(family)
    fam = family.permuted(order)
    gate = epsilon_gate(fam, config) if gate is None else gate
    if config.mode == "strict" and not gate.passed:
        raise GateError("; ".join(w for w in gate.warnings if "form norms" not in w) or "gate failed")
    N = weinstein_curve(fam, config)
    chart = TubularChart(N, fam, config)
    return Prepared(fam, order, N, chart, gate, config)


def _flow_chunk(chart: TubularChart, X0, s0, config: AverageConfig, extended: bool):
    """Integrate dx/dtau = -v_{1-tau}(x) over tau in [0, 1] for one chunk of points."""
    M = X0.shape[0]
    dim = 4 if extended else 3
    guess = {"s": s0.copy()}
    count = {"n": 0}

    def field_at(Y, t):
        d = averaged_form_deficit(chart, Y[:, :3], guess["s"], config.fd_step)
        if d.s is not None:
            guess["s"] = d.s
        if extended:
            V, margin = symplectization_moser_field(d, t, tol=config.crosscheck_tol)
        else:
            V, margin = contact_moser_field(d, t)
        return V, margin

    def rhs(tau, y):
        count["n"] += 1
        V, _ = field_at(y.reshape(M, dim), 1.0 - tau)
        return -V.ravel()

    y0 = np.zeros((M, dim))
    y0[:, :3] = X0
    if chart.all_identity:
        taus = np.linspace(0.0, 1.0, config.trace_points)
        trace = (taus, np.ones(len(taus)), np.zeros(len(taus)), 0, 0)
        return y0, trace
    sol = solve_ivp(rhs, (0.0, 1.0), y0.ravel(), method="DOP853", rtol=config.ode_rtol, atol=config.ode_atol, dense_output=True)
    if not sol.success:
        raise IntegrationError(f"Moser flow failed: {sol.message}")
    taus = np.linspace(0.0, 1.0, config.trace_points)
    margins, speeds = [], []
    guess["s"] = s0.copy()
    for tau in taus:
        Y = sol.sol(tau).reshape(M, dim)
        V, margin = field_at(Y, 1.0 - tau)
        margins.append(float(np.min(margin)))
        speeds.append(float(np.max(chart.model.norm(Y[:, :3], V[:, :3]))))
    return sol.y[:, -1].reshape(M, dim), (taus, np.array(margins), np.array(speeds), len(sol.t) - 1, count["n"])


def _run_flow(prep: Prepared, extended: bool):
    cfg = prep.config
    N = prep.N
    X0 = N.points
    s0 = N.t
    chunks = [(i, min(i + cfg.chunk, N.n)) for i in range(0, N.n, cfg.chunk)]

    def job(ab):
        a, b = ab
        return _flow_chunk(prep.chart, X0[a:b], s0[a:b], cfg, extended)

    if cfg.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            outs = list(ex.map(job, chunks))
    else:
        outs = [job(c) for c in chunks]
    Y = np.concatenate([o[0] for o in outs])
    taus = outs[0][1][0]
    trace = MoserTrace(
        times=[float(1.0 - t) for t in taus],
        min_margin=[float(v) for v in np.min([o[1][1] for o in outs], axis=0)],
        max_speed=[float(v) for v in np.max([o[1][2] for o in outs], axis=0)],
        steps=int(sum(o[1][3] for o in outs)),
        rhs_evaluations=int(sum(o[1][4] for o in outs)),
    )
    return Y, trace


@dataclass
class AverageResult:
    method: str
    curve: DiscreteLegendrian
    weinstein: DiscreteCurve
    epsilon: float
    regime: str
    d0_per_member: list
    residual: float
    lagrangian_residual: float
    residual_ok: bool
    trace: MoserTrace
    gate: GateReport
    bound: BoundReport
    labels: list
    s_drift: np.ndarray | None = None
    runtime: float = 0.0

    def summary(self) -> dict:
        """Machine-readable summary (no timing, so it is reproducible byte for byte)."""
        out = {
            "method": self.method,
            "epsilon": self.epsilon,
            "regime": self.regime,
            "d0_per_member": dict(zip(self.labels, self.d0_per_member)),
            "residual": self.residual,
            "lagrangian_residual": self.lagrangian_residual,
            "residual_ok": self.residual_ok,
            "margins": {"min": min(self.trace.min_margin), "trace": self.trace.to_dict()},
            "ratios": {"d0_over_epsilon": self.bound.ratio, "bound": self.bound.to_dict()},
            "weinstein": {k: v for k, v in self.weinstein.info.items() if isinstance(v, (int, float))},
        }
        if self.s_drift is not None:
            out["s_drift_max"] = float(np.max(np.abs(self.s_drift)))
        return out


def _finish(prep: Prepared, method: str, Y, trace, t0) -> AverageResult:
    cfg = prep.config
    model = prep.N.model
    pts = model.normalize(Y[:, :3])
    if prep.chart.all_identity:
        tangents = prep.N.tangents.copy()
    else:
        tangents = DiscreteCurve.from_points(model, pts).tangents
    L = DiscreteLegendrian(model, pts, tangents, {"method": method}, residual_tol=np.inf)
    res = legendrian_residual(L)
    lres = lagrangian_residual(L)
    d0s = [0.0 if np.array_equal(c.points, L.points) else d0(c, L) for c in prep.family.curves]
    bound = bound_check(d0s, prep.gate.epsilon, cfg)
    return AverageResult(
        method=method,
        curve=L,
        weinstein=prep.N,
        epsilon=prep.gate.epsilon,
        regime=prep.gate.regime,
        d0_per_member=[float(v) for v in d0s],
        residual=res,
        lagrangian_residual=lres,
        residual_ok=bool(res <= cfg.residual_tol),
        trace=trace,
        gate=prep.gate,
        bound=bound,
        labels=list(prep.family.labels),
        s_drift=(Y[:, 3].copy() * -1.0 if Y.shape[1] == 4 else None),
        runtime=time.perf_counter() - t0,
    )


def contact_moser_average(family, config: AverageConfig = DEFAULT_CONFIG) -> AverageResult:
    """L = rho_1^{-1}(N) for the flow of the contact Moser field."""
    t0 = time.perf_counter()
    prep = family if isinstance(family, Prepared) else prepare(family, config)
    Y, trace = _run_flow(prep, extended=False)
    return _finish(prep, "contact", Y, trace, t0)


def symplectization_average(family, config: AverageConfig = DEFAULT_CONFIG) -> AverageResult:
    """Same as the contact average, flowing (x, s) on M x R from s = 0 at t = 1.

    The recorded s drift is s(1) - s(0) = -integral of theta_dot(R_t) dt.
    """
    t0 = time.perf_counter()
    prep = family if isinstance(family, Prepared) else prepare(family, config)
    Y, trace = _run_flow(prep, extended=True)
    return _finish(prep, "symplectization", Y, trace, t0)


def with_config(prep: Prepared, **changes) -> Prepared:
    return replace(prep, config=replace(prep.config, **changes))
