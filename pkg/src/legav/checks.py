"""Pointwise verification of the structural identities of a contact model."""

from __future__ import annotations

import numpy as np

from .models import ContactModel, orthonormal_coframe_inverse


def omega_bar_eval(model: ContactModel, p, v, a, w, b):
    """(ds ^ theta + dtheta)((v, a), (w, b)) on the symplectization M x R."""
    th_v = model.eval_theta(p, v)
    th_w = model.eval_theta(p, w)
    return np.asarray(a) * th_w - np.asarray(b) * th_v + model.eval_dtheta(p, v, w)


def nabla_omega_bar(model: ContactModel, p, X):
    """Components of nabla_X omega_bar as a (..., 4, 4) array, index 3 = s.

    The product metric makes ds parallel, so nabla_X (ds ^ theta) = ds ^ nabla_X theta.
    """
    nt = np.einsum("...i,...ij->...j", X, model.nabla_theta(p))
    nd = np.einsum("...i,...ijk->...jk", X, model.nabla_dtheta(p))
    out = np.zeros(np.shape(nt)[:-1] + (4, 4))
    out[..., :3, :3] = nd
    out[..., 3, :3] = nt
    out[..., :3, 3] = -nt
    return out


def omega_bar_bound_check(model: ContactModel, samples) -> float:
    """sup over samples and unit horizontal X of the Frobenius norm of nabla_X omega_bar.

    The squared norm is a quadratic form in X, so the sup over the unit circle
    of H is the top eigenvalue of its restriction.
    """
    p = np.atleast_2d(np.asarray(samples, float))
    F = model.with_sign(1).contact_frame(p)
    L = orthonormal_coframe_inverse(model.metric(p))
    # full components in a g-orthonormal frame, for X = e1 and X = e2
    cols = []
    for k in range(2):
        T = nabla_omega_bar(model, p, F[:, k])
        C = np.zeros_like(T)
        C[..., :3, :3] = np.einsum("...ij,...ia,...jb->...ab", T[..., :3, :3], L, L)
        C[..., 3, :3] = np.einsum("...j,...jb->...b", T[..., 3, :3], L)
        C[..., :3, 3] = -C[..., 3, :3]
        cols.append(C.reshape(C.shape[:-2] + (16,)))
    A = np.stack(cols, axis=-1)  # (n, 16, 2)
    Q = np.einsum("...ka,...kb->...ab", A, A)
    return float(np.max(np.linalg.eigvalsh(Q)[..., -1]) ** 0.5)


def structure_residuals(model: ContactModel, points, rng=None) -> dict:
    """Worst-case residuals of the Reeb, compatibility and contact conditions."""
    rng = np.random.default_rng(0) if rng is None else rng
    p = np.atleast_2d(np.asarray(points, float))
    E = model.reeb(p)
    th = model.theta(p)
    om = model.omega(p)
    g = model.metric(p)
    F = model.contact_frame(p)
    h = F[:, :2]
    reeb_theta = np.abs(np.einsum("ni,ni->n", th, E) - 1.0)
    reeb_dtheta = np.abs(np.einsum("ni,nij->nj", E, om)).max(axis=1)
    Eunit = np.abs(model.inner(p, E, E) - 1.0)
    Eorth = np.abs(np.einsum("nai,nij,nj->na", h, g, E)).max(axis=1)
    # dtheta(X, IY) = g(X, Y) on H, with I in the (e1, e2) basis
    I = model.complex_structure(p)
    a = rng.standard_normal((len(p), 2))
    b = rng.standard_normal((len(p), 2))
    X = np.einsum("na,nai->ni", a, h)
    Y = np.einsum("na,nai->ni", b, h)
    IY = np.einsum("nab,nb,nai->ni", I, b, h)
    compat = np.abs(model.eval_dtheta(p, X, IY) - model.inner(p, X, Y))
    I2 = np.abs(np.einsum("nab,nbc->nac", I, I) + np.eye(2)).max(axis=(1, 2))
    vol = model.volume_form_value(p)
    return {
        "reeb_theta": float(reeb_theta.max()),
        "reeb_dtheta": float(reeb_dtheta.max()),
        "reeb_unit": float(Eunit.max()),
        "reeb_orthogonal": float(Eorth.max()),
        "compatibility": float(compat.max()),
        "complex_square": float(I2.max()),
        "volume_min_abs": float(np.min(np.abs(vol))),
    }
