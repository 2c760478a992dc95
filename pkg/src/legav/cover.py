"""The co-orientable double cover of R^2 x RP^1 and averaging of its Legendrians.

The cover is the Cylinder model R^2 x S^1 with deck involution
i(x, y, phi) = (x, y, phi + pi).  Quotient curves are carried as their cover
preimages: either one i-invariant curve or a pair of curves swapped by i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .averaging import DEFAULT_CONFIG, AverageConfig, AverageResult, contact_moser_average, symplectization_average
from .curves import DiscreteCurve, DiscreteLegendrian, FamilyInput, Isometry, apply_map, fiber_cylinder, lift_front_cylinder
from .distances import d0
from .errors import DegenerateFormError, EquivarianceError, InputError, NotInvariantError
from .models import TWO_PI, Cylinder, contact_volume

INVOLUTION = Isometry("involution")


class CoverModel:
    """Cylinder model together with its deck involution and quotient projection."""

    def __init__(self, model: Cylinder | None = None):
        model = model or Cylinder()
        if not isinstance(model, Cylinder):
            raise InputError("the double cover is only defined for the Cylinder model")
        self.model = model

    def involution(self, p):
        return INVOLUTION.apply(self.model, p)

    def project(self, p):
        """Quotient coordinates (x, y, phi mod pi)."""
        q = self.model.normalize(p)
        q[..., 2] = np.mod(q[..., 2], np.pi)
        q[..., 2] = np.where(q[..., 2] >= np.pi, 0.0, q[..., 2])
        return q

    def check(self, points) -> dict:
        """Residuals of i o i = id, i^* g = g and i^* theta = -theta at the points."""
        m = self.model
        p = np.atleast_2d(np.asarray(points, float))
        ip = self.involution(p)
        iip = self.involution(ip)
        # the differential of i is the identity in these coordinates
        return {
            "involutive": float(np.max(np.abs(m.coord_diff(p, iip)))),
            "isometry": float(np.max(np.abs(m.metric(ip) - m.metric(p)))),
            "theta_reversed": float(np.max(np.abs(m.theta(ip) + m.theta(p)))),
        }


# ---------------------------------------------------------------------- forms
def pullback(iso, model, form):
    """The covector field iso^* form, as a callable."""
    iso = Isometry.parse(iso)
    return lambda p: iso.pull_covector(model, np.asarray(p, float), form)


def form_derivative(form, points, h: float = 1e-5):
    """d(form) as an antisymmetric matrix field, by central differences."""
    p = np.atleast_2d(np.asarray(points, float))
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        cols.append((form(p + e) - form(p - e)) / (2 * h))
    a = np.stack(cols, axis=-2)  # a[..., k, j] = d_k form_j
    return a - np.swapaxes(a, -1, -2)


def contact_margin(form, points, reference=None, h: float = 1e-5) -> float:
    """min over points of (form ^ d form) relative to the reference form (default: itself)."""
    p = np.atleast_2d(np.asarray(points, float))
    vol = contact_volume(form(p), form_derivative(form, p, h))
    if reference is None:
        return float(np.min(np.abs(vol)) / max(np.max(np.abs(vol)), 1e-300))
    ref = contact_volume(reference(p), form_derivative(reference, p, h))
    return float(np.min(vol / ref))


@dataclass
class ThetaClass:
    """The pair {theta_hat, -theta_hat}; only the pair is intrinsic on the quotient."""

    form: object
    model: Cylinder
    sign_ambiguous: bool = True

    def __call__(self, p):
        return self.form(p)

    def antisymmetry_residual(self, points) -> float:
        p = np.atleast_2d(np.asarray(points, float))
        return float(np.max(np.abs(self.form(p) + pullback(INVOLUTION, self.model, self.form)(p))))


def antisymmetrize(form, model: Cylinder | None = None, samples=None, min_margin: float = 1e-8) -> ThetaClass:
    """theta_hat = (theta - i^* theta) / 2, with a contact check at the samples."""
    model = model or Cylinder()
    i_form = pullback(INVOLUTION, model, form)

    def hat(p):
        return 0.5 * (form(p) - i_form(p))

    if samples is not None:
        margin = contact_margin(hat, samples)
        if not margin > min_margin:
            raise DegenerateFormError(f"antisymmetrized form is degenerate at a sample (margin {margin:.3e})")
    return ThetaClass(hat, model)


class GroupElement:
    """A composition of registered isometries, applied left to right."""

    def __init__(self, *isos, label: str | None = None):
        self.isos = [Isometry.parse(i) for i in isos] or [Isometry("identity")]
        self.label = label or "*".join(i.kind + "".join(f":{v:g}" for v in i.params) for i in self.isos)

    def apply(self, model, p):
        for iso in self.isos:
            p = iso.apply(model, p)
        return p

    def push(self, model, p, v):
        for iso in self.isos:
            v = iso.push(model, p, v)
            p = iso.apply(model, p)
        return v

    def pull(self, model, form):
        for iso in reversed(self.isos):
            form = pullback(iso, model, form)
        return form


def co_orientation_sign(g: GroupElement, theta_hat, model, sample=(0.3, -0.2, 0.7)) -> int:
    """sigma(g): sign of theta_hat(g_* R) at a sample, R the Reeb field of theta_hat."""
    p = np.atleast_2d(np.asarray(sample, float))
    th = theta_hat(p)
    om = form_derivative(theta_hat, p)
    n = np.stack([om[..., 1, 2], -om[..., 0, 2], om[..., 0, 1]], axis=-1)
    R = n / np.einsum("...i,...i->...", th, n)[..., None]
    val = np.einsum("...i,...i->...", theta_hat(g.apply(model, p)), g.push(model, p, R))
    return 1 if float(val[0]) > 0 else -1


@dataclass
class SignedAverage:
    form: object
    signs: dict
    margin: float
    equivariance: dict = field(default_factory=dict)

    def __call__(self, p):
        return self.form(p)


def sign_weighted_average_form(theta_hat, group, weights=None, model: Cylinder | None = None, samples=None) -> SignedAverage:
    """theta_G = sum_g w_g sigma(g) g^* theta_hat over a finite group.

    ``group`` is a list of GroupElement; the equivariance residuals
    |h^* theta_G - sigma(h) theta_G| are measured at the samples for every h.
    """
    model = model or Cylinder()
    group = [g if isinstance(g, GroupElement) else GroupElement(g) for g in group]
    w = np.full(len(group), 1.0 / len(group)) if weights is None else np.asarray(weights, float)
    if len(w) != len(group) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise InputError("weights must be a probability vector over the group")
    sig = [co_orientation_sign(g, theta_hat, model) for g in group]
    pulled = [g.pull(model, theta_hat) for g in group]

    def avg(p):
        return sum(wk * sk * f(p) for wk, sk, f in zip(w, sig, pulled))

    rng = np.random.default_rng(0)
    pts = samples if samples is not None else np.column_stack([rng.uniform(-3, 3, (64, 2)), rng.uniform(0, TWO_PI, 64)])
    margin = contact_margin(avg, pts)
    if not margin > 1e-8:
        raise DegenerateFormError(f"sign-weighted average is degenerate at a sample (margin {margin:.3e})")
    base = avg(pts)
    eq = {}
    for g, s in zip(group, sig):
        eq[g.label] = float(np.max(np.abs(g.pull(model, avg)(pts) - s * base)))
    return SignedAverage(avg, {g.label: s for g, s in zip(group, sig)}, margin, eq)


# -------------------------------------------------------------------- curves
@dataclass
class QuotientLegendrian:
    """A quotient Legendrian stored as its cover preimage.

    ``components`` holds one i-invariant curve or two curves swapped by i;
    ``component_map[k][j]`` is the quotient sample index of sample j of
    component k.
    """

    components: list
    component_map: list
    info: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "invariant" if len(self.components) == 1 else "pair"

    @property
    def model(self):
        return self.components[0].model

    def invariance_residual(self) -> float:
        cov = CoverModel(self.model)
        if self.kind == "invariant":
            C = self.components[0]
            return d0(C, _mapped(cov, C))
        A, B = self.components
        return max(d0(B, _mapped(cov, A)), d0(A, _mapped(cov, B)))

    def descend(self, tol: float = 1e-8):
        """Quotient samples (x, y, phi mod pi)."""
        res = self.invariance_residual()
        if res > tol:
            raise NotInvariantError(f"cover curve is not i-invariant (residual {res:.3e})")
        C = self.components[0]
        pts = C.points[: C.n // 2] if self.kind == "invariant" else C.points
        return CoverModel(C.model).project(pts)


def _mapped(cov: CoverModel, curve: DiscreteCurve) -> DiscreteCurve:
    return apply_map(curve, INVOLUTION)


def lift_quotient(points, model: Cylinder | None = None, info=None) -> QuotientLegendrian:
    """Cover preimage of a closed quotient curve given by samples (x, y, phi mod pi).

    If the line field turns by an odd multiple of pi the preimage is a single
    i-invariant curve traversing the quotient twice; otherwise it is a pair.
    """
    model = model or Cylinder()
    q = np.atleast_2d(np.asarray(points, float))
    n = q.shape[0]
    phi = np.unwrap(np.mod(q[:, 2], np.pi), period=np.pi)
    step = np.mod(phi[0] - phi[-1] + 0.5 * np.pi, np.pi) - 0.5 * np.pi
    turns = int(np.rint((phi[-1] + step - phi[0]) / np.pi))
    info = dict(info or {})
    if turns % 2:
        pts = np.concatenate([np.column_stack([q[:, :2], phi]), np.column_stack([q[:, :2], phi + turns * np.pi])])
        C = DiscreteLegendrian.from_points(model, pts, info, residual_tol=np.inf)
        return QuotientLegendrian([C], [np.arange(2 * n) % n], info)
    A = DiscreteLegendrian.from_points(model, np.column_stack([q[:, :2], phi]), info, residual_tol=np.inf)
    B = apply_map(A, INVOLUTION)
    return QuotientLegendrian([A, B], [np.arange(n), np.arange(n)], info)


def front_lift(plane, model: Cylinder | None = None, info=None) -> QuotientLegendrian:
    """Conormal lift of a plane front: the two co-orientations, swapped by i."""
    A = lift_front_cylinder(plane, model, info)
    B = apply_map(A, INVOLUTION)
    n = A.n
    return QuotientLegendrian([A, B], [np.arange(n), np.arange(n)], dict(info or {}))


def lift_fiber(x: float, y: float, n: int = 64, model: Cylinder | None = None) -> QuotientLegendrian:
    """Preimage of the RP^1 fibre over (x, y): the full S^1 fibre, i-invariant."""
    C = fiber_cylinder(x, y, 2 * (n // 2), model)
    return QuotientLegendrian([C], [np.arange(C.n) % (C.n // 2)], {"generator": "fiber"})


def lifted_family(quotients, weights=None, labels=None) -> FamilyInput:
    """Cover family with swapped-pair components at half weight, so it is i-invariant."""
    k = len(quotients)
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, float)
    labels = labels or [f"member{j}" for j in range(k)]
    curves, ws, labs = [], [], []
    for Q, wq, lab in zip(quotients, w, labels):
        share = wq / len(Q.components)
        for c, C in enumerate(Q.components):
            curves.append(C)
            ws.append(share)
            labs.append(f"{lab}.{c}")
    return FamilyInput(curves, np.array(ws), labs)


@dataclass
class CoverAverage:
    quotient: QuotientLegendrian
    results: list
    invariance_residual: float
    descended: np.ndarray
    clusters: list

    def summary(self) -> dict:
        return {
            "kind": self.quotient.kind,
            "invariance_residual": self.invariance_residual,
            "clusters": [r.summary() for r in self.results],
        }


def _clusters(quotients):
    kinds = {Q.kind for Q in quotients}
    if len(kinds) != 1:
        raise InputError("family mixes i-invariant curves and swapped pairs")
    if kinds == {"invariant"}:
        return [[Q.components[0] for Q in quotients]]
    ref = quotients[0].components[0]
    first, second = [], []
    for Q in quotients:
        A, B = Q.components
        if d0(ref, A) <= d0(ref, B):
            first.append(A)
            second.append(B)
        else:
            first.append(B)
            second.append(A)
    return [first, second]


def noncoorientable_average(
    quotients,
    weights=None,
    labels=None,
    config: AverageConfig = DEFAULT_CONFIG,
    method: str = "contact",
    tol: float = 1e-6,
) -> CoverAverage:
    """Average a family of quotient Legendrians on the cover and descend.

    The lifted family (pair components at half weight) splits into clusters of
    mutually close curves; the average is local, so each cluster is averaged
    with its weights renormalised.  The union must be i-invariant.
    """
    k = len(quotients)
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, float)
    labels = labels or [f"member{j}" for j in range(k)]
    run = contact_moser_average if method == "contact" else symplectization_average
    results: list[AverageResult] = []
    groups = _clusters(quotients)
    for c, curves in enumerate(groups):
        fam = FamilyInput(curves, w, [f"{lab}.{c}" for lab in labels])
        results.append(run(fam, config))
    comps = [r.curve for r in results]
    if len(comps) == 1:
        n = comps[0].n
        Q = QuotientLegendrian(comps, [np.arange(n) % (n // 2)], {"method": method})
    else:
        n = comps[0].n
        Q = QuotientLegendrian(comps, [np.arange(n), np.arange(n)], {"method": method})
    res = Q.invariance_residual()
    if res > tol:
        raise EquivarianceError(f"cover average is not i-invariant (residual {res:.3e})")
    return CoverAverage(Q, results, res, Q.descend(tol=tol), groups)
