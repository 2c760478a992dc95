"""Concrete contact 3-manifolds with compatible metrics.

Two models are provided:

* ``heisenberg``: R^3 with theta = dz + (x dy - y dx)/2 and the left-invariant
  metric making {d/dx + (y/2) d/dz, d/dy - (x/2) d/dz, d/dz} orthonormal.
* ``cylinder``: R^2 x S^1 with theta = cos(phi) dx + sin(phi) dy and the flat
  product metric.

Each model is written in "standard" coordinates; the ``scale`` parameter pulls
everything back along a diagonal dilation, so model coordinates p relate to
standard ones by u = d * p.  All pointwise routines are batched over leading
axes: points have shape (..., 3).
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


class ContactModel:
    """Base class: derives all geometry from closed-form theta and g."""

    model_id = "abstract"
    flat = False

    def __init__(self, scale: float = 1.0, sign: int = 1):
        if not scale > 0:
            raise ValueError("scale must be positive")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.scale = float(scale)
        self.sign = int(sign)
        self.d = self._dilation(self.scale)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(scale={self.scale}, sign={self.sign})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ContactModel)
            and other.model_id == self.model_id
            and other.scale == self.scale
            and other.sign == self.sign
        )

    def __hash__(self) -> int:
        return hash((self.model_id, self.scale, self.sign))

    def with_sign(self, sign: int) -> "ContactModel":
        return type(self)(self.scale, sign)

    # -- standard-coordinate closed forms, provided by subclasses --------------
    def _dilation(self, scale):  # pragma: no cover - abstract
        raise NotImplementedError

    def _theta_std(self, u):  # (...,3)
        raise NotImplementedError

    def _dtheta_std(self, u):  # (...,3,3) [i,j] = d_i theta_j
        raise NotImplementedError

    def _ddtheta_std(self, u):  # (...,3,3,3) [k,i,j] = d_k d_i theta_j
        raise NotImplementedError

    def _metric_std(self, u):
        raise NotImplementedError

    def _dmetric_std(self, u):  # [k,i,j] = d_k g_ij
        raise NotImplementedError

    def _ddmetric_std(self, u):  # [k,l,i,j]
        raise NotImplementedError

    # -- coordinates -----------------------------------------------------------
    def to_std(self, p):
        return np.asarray(p, dtype=float) * self.d

    def from_std(self, u):
        return np.asarray(u, dtype=float) / self.d

    def normalize(self, p):
        """Canonical coordinates of points (angles wrapped where relevant)."""
        return np.asarray(p, dtype=float)

    def coord_diff(self, p, q):
        """Coordinate displacement q - p (shortest representative for angles)."""
        return np.asarray(q, dtype=float) - np.asarray(p, dtype=float)

    def validate_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != 3:
            raise ValueError(f"points must have 3 coordinates, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        return p

    # -- forms -----------------------------------------------------------------
    def theta(self, p):
        """Covector components of the contact form at p."""
        u = self.to_std(p)
        return self.sign * self.d * self._theta_std(u)

    def dtheta_partials(self, p):
        """[..., i, j] = d_i theta_j."""
        u = self.to_std(p)
        d = self.d
        return self.sign * d[:, None] * d[None, :] * self._dtheta_std(u)

    def ddtheta_partials(self, p):
        u = self.to_std(p)
        d = self.d
        w = d[:, None, None] * d[None, :, None] * d[None, None, :]
        return self.sign * w * self._ddtheta_std(u)

    def omega(self, p):
        """Matrix of d(theta): omega[i, j] = dtheta(e_i, e_j)."""
        a = self.dtheta_partials(p)
        return a - np.swapaxes(a, -1, -2)

    def eval_theta(self, p, v):
        return np.einsum("...i,...i->...", self.theta(p), np.asarray(v, float))

    def eval_dtheta(self, p, v, w):
        return np.einsum("...ij,...i,...j->...", self.omega(p), np.asarray(v, float), np.asarray(w, float))

    def reeb(self, p):
        """Reeb vector: kernel of d(theta) normalised by theta(E) = 1."""
        om = self.omega(p)
        n = np.stack([om[..., 1, 2], -om[..., 0, 2], om[..., 0, 1]], axis=-1)
        return n / np.einsum("...i,...i->...", self.theta(p), n)[..., None]

    def volume_form_value(self, p):
        """(theta ^ dtheta) evaluated on a g-orthonormal, positively oriented frame."""
        return contact_volume(self.theta(p), self.omega(p)) / np.sqrt(np.linalg.det(self.metric(p)))

    # -- metric ----------------------------------------------------------------
    def metric(self, p):
        u = self.to_std(p)
        d = self.d
        return d[:, None] * d[None, :] * self._metric_std(u)

    def inner(self, p, v, w):
        return np.einsum("...ij,...i,...j->...", self.metric(p), v, w)

    def norm(self, p, v):
        return np.sqrt(np.maximum(self.inner(p, v, v), 0.0))

    def dmetric(self, p):
        u = self.to_std(p)
        d = self.d
        return d[:, None, None] * d[None, :, None] * d[None, None, :] * self._dmetric_std(u)

    def ddmetric(self, p):
        u = self.to_std(p)
        d = self.d
        w = np.einsum("k,l,i,j->klij", d, d, d, d)
        return w * self._ddmetric_std(u)

    def christoffel(self, p):
        """Gamma[..., k, i, j] (symmetric in i, j)."""
        g = self.metric(p)
        gi = np.linalg.inv(g)
        dg = self.dmetric(p)
        # lower[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
        lower = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
        return 0.5 * np.einsum("...kl,...lij->...kij", gi, lower)

    def christoffel_partials(self, p):
        """[..., m, k, i, j] = d_m Gamma^k_ij."""
        g = self.metric(p)
        gi = np.linalg.inv(g)
        dg = self.dmetric(p)
        ddg = self.ddmetric(p)
        lower = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
        dlower = (
            np.einsum("...mijl->...mlij", ddg)
            + np.einsum("...mjil->...mlij", ddg)
            - ddg
        )
        dgi = -np.einsum("...ka,...mab,...bl->...mkl", gi, dg, gi)
        return 0.5 * (
            np.einsum("...mkl,...lij->...mkij", dgi, lower)
            + np.einsum("...kl,...mlij->...mkij", gi, dlower)
        )

    def riemann(self, p):
        """R[..., r, s, m, n] with R(X, Y)Z^r = R^r_{smn} Z^s X^m Y^n."""
        G = self.christoffel(p)
        dG = self.christoffel_partials(p)
        return (
            np.einsum("...mrns->...rsmn", dG)
            - np.einsum("...nrms->...rsmn", dG)
            + np.einsum("...rml,...lns->...rsmn", G, G)
            - np.einsum("...rnl,...lms->...rsmn", G, G)
        )

    def sectional_curvature(self, p, u, v):
        """Sectional curvature of the plane span{u, v} at p."""
        p = np.asarray(p, float)
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        g = self.metric(p)
        area2 = (
            np.einsum("...ij,...i,...j->...", g, u, u) * np.einsum("...ij,...i,...j->...", g, v, v)
            - np.einsum("...ij,...i,...j->...", g, u, v) ** 2
        )
        scale = np.einsum("...ij,...i,...j->...", g, u, u) * np.einsum("...ij,...i,...j->...", g, v, v)
        if np.any(area2 <= 1e-14 * np.maximum(scale, 1e-300)):
            raise ValueError("degenerate plane: spanning vectors are dependent")
        R = self.riemann(p)
        Rdown = np.einsum("...ak,...ksmn->...asmn", g, R)
        num = np.einsum("...asmn,...a,...s,...m,...n->...", Rdown, u, v, u, v)
        return num / area2

    # -- structure -------------------------------------------------------------
    def contact_frame(self, p):
        """Frame (e1, e2, E): e1, e2 g-orthonormal in ker theta with dtheta(e1, e2) = 1.

        Returned as an array (..., 3, 3) whose rows are the vectors.
        """
        p = np.asarray(p, float)
        E = self.reeb(p)
        g = self.metric(p)
        th = self.theta(p)
        # project the coordinate vectors into H = ker theta along E and keep the longest
        cand = np.eye(3) - th[..., :, None] * E[..., None, :]
        lens = np.sqrt(np.einsum("...ij,...ai,...aj->...a", g, cand, cand))
        k = np.argmax(lens, axis=-1)
        h1 = np.take_along_axis(cand, k[..., None, None], axis=-2)[..., 0, :]
        h1 = h1 / np.take_along_axis(lens, k[..., None], axis=-1)
        # second horizontal vector: I h1 with dtheta(h1, I h1) = g(h1, h1)
        om = self.omega(p)
        # candidates: solve om(h1, w) = 1, g(h1, w) = 0, theta(w) = 0
        A = np.stack([np.einsum("...i,...ij->...j", h1, om), np.einsum("...i,...ij->...j", h1, g), th], axis=-2)
        rhs = np.zeros(p.shape[:-1] + (3,))
        rhs[..., 0] = 1.0
        h2 = np.linalg.solve(A, rhs[..., None])[..., 0]
        return np.stack([h1, h2, E], axis=-2)

    def complex_structure(self, p):
        """Endomorphism I of H in the (e1, e2) basis defined by dtheta(X, IY) = g(X, Y)."""
        F = self.contact_frame(p)
        h = F[..., :2, :]
        g = self.metric(p)
        om = self.omega(p)
        Gh = np.einsum("...ai,...ij,...bj->...ab", h, g, h)
        Oh = np.einsum("...ai,...ij,...bj->...ab", h, om, h)
        return np.linalg.solve(Oh, Gh)

    def nabla_theta(self, p):
        """[..., i, j] = (nabla_i theta)_j."""
        return self.dtheta_partials(p) - np.einsum("...kij,...k->...ij", self.christoffel(p), self.theta(p))

    def nabla_dtheta(self, p):
        """[..., i, j, k] = (nabla_i dtheta)_{jk}."""
        dd = self.ddtheta_partials(p)
        dom = dd - np.swapaxes(dd, -1, -2)
        G = self.christoffel(p)
        om = self.omega(p)
        return (
            dom
            - np.einsum("...mij,...mk->...ijk", G, om)
            - np.einsum("...mik,...jm->...ijk", G, om)
        )

    def nabla_form_norms(self, p, convention: str = "frobenius"):
        """(|nabla theta|, |nabla dtheta|) at p.

        ``frobenius``: sqrt of the full component sum in a g-orthonormal frame.
        ``operator``: spectral norm of the frame components of nabla theta and of
        the (3, 9) unfolding of nabla dtheta.
        """
        p = np.asarray(p, float)
        L = orthonormal_coframe_inverse(self.metric(p))  # columns orthonormal frame
        nt = np.einsum("...ij,...ia,...jb->...ab", self.nabla_theta(p), L, L)
        nd = np.einsum("...ijk,...ia,...jb,...kc->...abc", self.nabla_dtheta(p), L, L, L)
        if convention == "frobenius":
            return (
                np.sqrt(np.sum(nt**2, axis=(-1, -2))),
                np.sqrt(np.sum(nd**2, axis=(-1, -2, -3))),
            )
        if convention == "operator":
            return (
                np.linalg.norm(nt, ord=2, axis=(-2, -1)),
                np.linalg.norm(nd.reshape(nd.shape[:-3] + (3, 9)), ord=2, axis=(-2, -1)),
            )
        raise ValueError(f"unknown norm convention {convention!r}")

    def injectivity_radius_estimate(self) -> float:
        raise NotImplementedError

    # -- geodesics -------------------------------------------------------------
    @staticmethod
    def _k(c):
        """(c - sin c) / (2 (1 - cos c)) and its derivative, series near 0."""
        small = np.abs(c) < 0.1
        cs = np.where(small, 1.0, c)
        one_m_cos = 2.0 * np.sin(0.5 * cs) ** 2
        k = np.where(small, c / 6 + c**3 / 180 + c**5 / 5040 + c**7 / 151200 + c**9 / 4790016, (cs - np.sin(cs)) / (2 * one_m_cos))
        dk = np.where(
            small,
            1 / 6 + c**2 / 60 + c**4 / 1008 + c**6 / 21600 + c**8 / 532224,
            (one_m_cos**2 - (cs - np.sin(cs)) * np.sin(cs)) / (2 * one_m_cos**2),
        )
        return k, dk

    @staticmethod
    def log_identity(target, max_iter: int = 100):
        """Inverse of exp_identity on |c| < 2 pi; returns (w, ok).

        With zeta = x + iy the endpoint satisfies z = c + |zeta|^2 k(c) / 2,
        a monotone scalar equation in c, and w0 = zeta / F(c).
        """
        target = np.asarray(target, float)
        X, Y, Z = target[..., 0], target[..., 1], target[..., 2]
        rho2 = X * X + Y * Y
        lim = 2 * np.pi
        lo = np.full(Z.shape, -lim)
        hi = np.full(Z.shape, lim)
        c = np.clip(Z, -0.5 * lim, 0.5 * lim)
        done = np.zeros(Z.shape, dtype=bool)
        for _ in range(max_iter):
            k, dk = Heisenberg._k(c)
            f = c + 0.5 * rho2 * k - Z
            lo = np.where(f < 0, c, lo)
            hi = np.where(f > 0, c, hi)
            step = -f / (1.0 + 0.5 * rho2 * dk)
            c_new = c + step
            out = ~((c_new > lo) & (c_new < hi))
            c_new = np.where(out, 0.5 * (lo + hi), c_new)
            c_new = np.where(done, c, c_new)
            finished = np.abs(c_new - c) <= 4e-16 * np.maximum(1.0, np.abs(c))
            c = c_new
            if np.all(done):
                break
            done |= finished
        half = 0.5 * c
        F = np.exp(-1j * half) * np.sinc(half / np.pi)
        w0 = (X + 1j * Y) / F
        w = np.stack([w0.real, w0.imag, c], axis=-1)
        ok = np.isfinite(w).all(axis=-1) & (np.abs(c) < lim * (1 - 1e-9))
        return w, ok

    def exp_closed_form(self, p, v):
        """Closed-form exponential map, or None when the model has none."""
        return None

    def random_points(self, rng, n, spread=2.0):
        return self.normalize(rng.uniform(-spread, spread, size=(n, 3)))


def contact_volume(theta, omega):
    """Component of theta ^ omega on (e_1, e_2, e_3) for antisymmetric omega."""
    return (
        theta[..., 0] * omega[..., 1, 2]
        - theta[..., 1] * omega[..., 0, 2]
        + theta[..., 2] * omega[..., 0, 1]
    )


def orthonormal_coframe_inverse(g):
    """Matrix whose columns form a g-orthonormal basis (inverse transpose Cholesky)."""
    C = np.linalg.cholesky(g)  # g = C C^T
    return np.swapaxes(np.linalg.inv(C), -1, -2)


class Heisenberg(ContactModel):
    model_id = "heisenberg"

    def _dilation(self, scale):
        return np.array([scale, scale, scale**2])

    @staticmethod
    def _th0(u):
        x, y = u[..., 0], u[..., 1]
        return np.stack([-0.5 * y, 0.5 * x, np.ones_like(x)], axis=-1)

    _DTH = np.array([[0.0, 0.5, 0.0], [-0.5, 0.0, 0.0], [0.0, 0.0, 0.0]])

    def _theta_std(self, u):
        return self._th0(np.asarray(u, float))

    def _dtheta_std(self, u):
        u = np.asarray(u, float)
        return np.broadcast_to(self._DTH, u.shape[:-1] + (3, 3)).copy()

    def _ddtheta_std(self, u):
        u = np.asarray(u, float)
        return np.zeros(u.shape[:-1] + (3, 3, 3))

    def _metric_std(self, u):
        t = self._th0(np.asarray(u, float))
        g = np.einsum("...i,...j->...ij", t, t)
        g[..., 0, 0] += 1.0
        g[..., 1, 1] += 1.0
        return g

    def _dmetric_std(self, u):
        t = self._th0(np.asarray(u, float))
        dt = np.broadcast_to(self._DTH, t.shape[:-1] + (3, 3))
        a = np.einsum("...ki,...j->...kij", dt, t)
        return a + np.swapaxes(a, -1, -2)

    def _ddmetric_std(self, u):
        u = np.asarray(u, float)
        a = np.einsum("ki,lj->klij", self._DTH, self._DTH)
        out = a + np.swapaxes(a, -1, -2)
        return np.broadcast_to(out, u.shape[:-1] + (3, 3, 3, 3)).copy()

    def injectivity_radius_estimate(self) -> float:
        # conjugate radius >= pi / sqrt(K_max) with K_max = 1/4; no geodesic loops
        return 2.0 * np.pi

    # -- group structure (standard coordinates) ---------------------------------
    @staticmethod
    def group_mul(a, b):
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        z = a[..., 2] + b[..., 2] - 0.5 * (a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
        return np.stack([a[..., 0] + b[..., 0], a[..., 1] + b[..., 1], z], axis=-1)

    @staticmethod
    def frame_components(u, v):
        """Components (a, b, c) of a coordinate vector v at u in the left-invariant frame."""
        a = v[..., 0]
        b = v[..., 1]
        c = v[..., 2] - 0.5 * u[..., 1] * v[..., 0] + 0.5 * u[..., 0] * v[..., 1]
        return np.stack([a, b, c], axis=-1)

    @staticmethod
    def frame_to_coords(u, w):
        a, b, c = w[..., 0], w[..., 1], w[..., 2]
        return np.stack([a, b, c + 0.5 * u[..., 1] * a - 0.5 * u[..., 0] * b], axis=-1)

    @staticmethod
    def exp_identity(w):
        """Endpoint of the unit-time geodesic from the identity with frame velocity w."""
        a, b, c = w[..., 0], w[..., 1], w[..., 2]
        w0 = a + 1j * b
        half = 0.5 * c
        # F = (1 - exp(-i c)) / (i c) written stably
        F = np.exp(-1j * half) * np.sinc(half / np.pi)
        zeta = w0 * F
        r2 = a * a + b * b
        small = np.abs(c) < 0.1
        cs = np.where(small, 1.0, c)
        h = np.where(
            small,
            c / 6.0 - c**3 / 120.0 + c**5 / 5040.0 - c**7 / 362880.0 + c**9 / 39916800.0 - c**11 / 6227020800.0,
            (cs - np.sin(cs)) / cs**2,
        )
        z = c + 0.5 * r2 * h
        return np.stack([zeta.real, zeta.imag, z], axis=-1)

    def exp_closed_form(self, p, v):
        u = self.to_std(p)
        vs = np.asarray(v, float) * self.d
        w = self.frame_components(u, vs)
        q = self.group_mul(u, self.exp_identity(w))
        return self.from_std(q)


class Cylinder(ContactModel):
    model_id = "cylinder"
    flat = True

    def _dilation(self, scale):
        return np.array([scale, scale, 1.0])

    def _theta_std(self, u):
        phi = np.asarray(u, float)[..., 2]
        return np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)

    def _dtheta_std(self, u):
        phi = np.asarray(u, float)[..., 2]
        out = np.zeros(phi.shape + (3, 3))
        out[..., 2, 0] = -np.sin(phi)
        out[..., 2, 1] = np.cos(phi)
        return out

    def _ddtheta_std(self, u):
        phi = np.asarray(u, float)[..., 2]
        out = np.zeros(phi.shape + (3, 3, 3))
        out[..., 2, 2, 0] = -np.cos(phi)
        out[..., 2, 2, 1] = -np.sin(phi)
        return out

    def _metric_std(self, u):
        u = np.asarray(u, float)
        return np.broadcast_to(np.eye(3), u.shape[:-1] + (3, 3)).copy()

    def _dmetric_std(self, u):
        u = np.asarray(u, float)
        return np.zeros(u.shape[:-1] + (3, 3, 3))

    def _ddmetric_std(self, u):
        u = np.asarray(u, float)
        return np.zeros(u.shape[:-1] + (3, 3, 3, 3))

    def normalize(self, p):
        p = np.array(p, dtype=float)
        p[..., 2] = np.mod(p[..., 2], TWO_PI)
        # mod can return exactly 2*pi for tiny negative inputs
        p[..., 2] = np.where(p[..., 2] >= TWO_PI, 0.0, p[..., 2])
        return p

    def coord_diff(self, p, q):
        dlt = np.asarray(q, float) - np.asarray(p, float)
        dlt[..., 2] = wrap_angle(dlt[..., 2])
        return dlt

    def injectivity_radius_estimate(self) -> float:
        return np.pi

    def exp_closed_form(self, p, v):
        return self.normalize(np.asarray(p, float) + np.asarray(v, float))


def wrap_angle(a):
    """Representative of a in [-pi, pi)."""
    return np.mod(np.asarray(a, float) + np.pi, TWO_PI) - np.pi


_MODELS = {"heisenberg": Heisenberg, "cylinder": Cylinder}


def get_model(model_id: str, scale: float = 1.0, sign: int = 1) -> ContactModel:
    try:
        cls = _MODELS[model_id]
    except KeyError:
        raise ValueError(f"unknown model {model_id!r}; expected one of {sorted(_MODELS)}") from None
    return cls(scale, sign)
