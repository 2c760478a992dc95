"""Discretised closed curves, Legendrian lifts, symmetries and CSV I/O.

Curves are sampled at equally spaced parameter values s_j = 2 pi j / n and
carried between samples by their trigonometric interpolant, so derivatives
and off-grid evaluations are spectrally accurate for smooth curves.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from .errors import AmplitudeTooLargeError, ImmersionError, InputError, NonClosingError
from .models import TWO_PI, ContactModel, Cylinder, Heisenberg, get_model

RESIDUAL_TOL = 1e-9


class PeriodicInterpolant:
    """Trigonometric interpolant of equispaced samples plus a linear drift.

    f(s) = p(s) + slope * s, with p 2pi-periodic; ``values`` has shape (n, d).
    """

    def __init__(self, values, slopes=None):
        values = np.asarray(values, float)
        if values.ndim == 1:
            values = values[:, None]
        n, d = values.shape
        self.n = n
        self.slopes = np.zeros(d) if slopes is None else np.asarray(slopes, float)
        s = TWO_PI * np.arange(n) / n
        periodic = values - s[:, None] * self.slopes
        coef = np.fft.rfft(periodic, axis=0) / n
        w = np.full(coef.shape[0], 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        self.coef = coef * w[:, None]
        self.k = np.arange(coef.shape[0])

    def __call__(self, s, deriv: int = 0):
        s = np.asarray(s, float)
        shape = s.shape
        sf = s.reshape(-1)
        E = _fourier_basis(sf.tobytes(), len(self.k))
        c = self.coef * ((1j * self.k) ** deriv)[:, None]
        out = (E @ c).real
        if deriv == 0:
            out = out + sf[:, None] * self.slopes
        elif deriv == 1:
            out = out + self.slopes
        return out.reshape(shape + (out.shape[-1],))


@lru_cache(maxsize=16)
def _fourier_basis(key: bytes, m: int):
    """exp(i k s) for k < m; cached because the same nodes are evaluated repeatedly."""
    sf = np.frombuffer(key, dtype=float)
    E = np.exp(1j * np.outer(sf, np.arange(m)))
    E.flags.writeable = False
    return E


def spectral_derivative(values, order: int = 1):
    """Derivative at the nodes of the periodic interpolant of ``values`` (n, d)."""
    values = np.asarray(values, float)
    n = values.shape[0]
    c = np.fft.rfft(values, axis=0)
    k = np.arange(c.shape[0])
    mult = (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        mult[-1] = 0.0
    return np.fft.irfft(c * mult.reshape((-1,) + (1,) * (values.ndim - 1)), n=n, axis=0)


def spectral_antiderivative(rate):
    """Zero-mean periodic antiderivative F with F(0) = 0; also returns the mean of ``rate``."""
    rate = np.asarray(rate, float)
    n = rate.shape[0]
    c = np.fft.rfft(rate, axis=0)
    mean = c[0].real / n
    k = np.arange(c.shape[0]).astype(float)
    mult = np.zeros(c.shape[0], dtype=complex)
    mult[1:] = 1.0 / (1j * k[1:])
    if n % 2 == 0:
        mult[-1] = 0.0
    F = np.fft.irfft(c * mult.reshape((-1,) + (1,) * (rate.ndim - 1)), n=n, axis=0)
    return F - F[0], mean


def uniform_parameter(n: int):
    return TWO_PI * np.arange(n) / n


@dataclass
class DiscreteCurve:
    """Closed curve sampled at s_j = 2 pi j / n with unit tangents."""

    model: ContactModel
    points: np.ndarray
    tangents: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = self.model.normalize(self.model.validate_point(self.points))
        self.tangents = np.asarray(self.tangents, float)
        if self.points.ndim != 2 or self.points.shape != self.tangents.shape:
            raise InputError("points and tangents must both have shape (n, 3)")
        if self.n < 4:
            raise InputError("a closed curve needs at least 4 samples")

    @classmethod
    def from_points(cls, model, points, info=None, **kw):
        """Build a curve from samples, computing tangents spectrally."""
        pts = model.normalize(np.asarray(points, float))
        tmp = DiscreteCurve(model, pts, np.ones_like(pts))
        tangents = tmp.tangent_at(tmp.t)
        return cls(model, pts, tangents, dict(info or {}), **kw)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def t(self):
        return uniform_parameter(self.n)

    @cached_property
    def _unwrapped(self):
        pts = self.points.copy()
        slopes = np.zeros(3)
        if isinstance(self.model, Cylinder):
            phi = np.unwrap(pts[:, 2])
            step = np.mod(pts[0, 2] - phi[-1] + np.pi, TWO_PI) - np.pi
            winding = int(np.rint((phi[-1] + step - phi[0]) / TWO_PI))
            pts[:, 2] = phi
            slopes[2] = winding
        return pts, slopes

    @cached_property
    def interpolant(self) -> PeriodicInterpolant:
        pts, slopes = self._unwrapped
        return PeriodicInterpolant(pts, slopes)

    @property
    def winding(self) -> int:
        return int(self._unwrapped[1][2])

    def eval(self, s, deriv: int = 0):
        out = self.interpolant(s, deriv)
        return self.model.normalize(out) if deriv == 0 else out

    def tangent_at(self, s):
        p = self.eval(s)
        d = self.eval(s, 1)
        return d / self.model.norm(p, d)[..., None]

    def speed(self, s):
        return self.model.norm(self.eval(s), self.eval(s, 1))

    def length(self) -> float:
        m = max(4 * self.n, 64)
        return float(np.mean(self.speed(uniform_parameter(m))) * TWO_PI)

    def arclength(self):
        """Arc-length values at the samples (starting from 0)."""
        m = 4 * self.n
        sp = self.speed(uniform_parameter(m))[:, None]
        F, mean = spectral_antiderivative(sp)
        return F[::4, 0] + float(mean[0]) * self.t

    def spacing(self):
        """Arc length between consecutive samples, including last-to-first."""
        a = self.arclength()
        L = self.length()
        return np.diff(np.append(a, L))

    def legendrian_residual(self) -> float:
        return legendrian_residual(self)

    def copy(self, **changes):
        kw = dict(model=self.model, points=self.points.copy(), tangents=self.tangents.copy(), info=dict(self.info))
        kw.update(changes)
        return type(self)(**kw)


class DiscreteLegendrian(DiscreteCurve):
    """A closed curve whose sampled tangents lie in the contact distribution."""

    def __init__(self, model, points, tangents, info=None, residual_tol: float = RESIDUAL_TOL):
        super().__init__(model, points, tangents, dict(info or {}))
        self.validate(residual_tol)

    def copy(self, **changes):
        kw = dict(model=self.model, points=self.points.copy(), tangents=self.tangents.copy(), info=dict(self.info))
        kw.update(changes)
        return DiscreteLegendrian(residual_tol=np.inf, **kw)

    def validate(self, residual_tol: float = RESIDUAL_TOL):
        norms = self.model.norm(self.points, self.tangents)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise InputError("tangents must be unit length")
        sp = self.spacing()
        mean = sp.mean()
        if np.min(sp) < 0.2 * mean or np.max(sp) > 5.0 * mean:
            raise InputError("sample spacing outside [0.2, 5] x mean spacing")
        res = legendrian_residual(self)
        if res > residual_tol:
            raise InputError(f"Legendrian residual {res:.3e} exceeds tolerance {residual_tol:.1e}")
        return self


def legendrian_residual(curve: DiscreteCurve) -> float:
    """sup_i |theta(tau_i)| over unit tangents."""
    m = curve.model
    tau = curve.tangents / m.norm(curve.points, curve.tangents)[:, None]
    return float(np.max(np.abs(m.eval_theta(curve.points, tau))))


# --------------------------------------------------------------------------- lifts
def _planar(plane):
    plane = np.asarray(plane, float)
    if plane.ndim != 2 or plane.shape[1] != 2:
        raise InputError("planar curve must have shape (n, 2)")
    if plane.shape[0] < 16:
        raise InputError("planar curve needs at least 16 samples")
    d = spectral_derivative(plane)
    speed = np.hypot(d[:, 0], d[:, 1])
    if np.min(speed) <= 1e-8 * max(np.max(speed), 1e-300):
        raise ImmersionError("planar curve is not immersed (vanishing speed)")
    return plane, d


def signed_area(plane) -> float:
    plane, d = _planar(plane)
    rate = 0.5 * (plane[:, 0] * d[:, 1] - plane[:, 1] * d[:, 0])
    return float(np.mean(rate) * TWO_PI)


def lift_planar_heisenberg(plane, z0: float = 0.0, model: ContactModel | None = None, info=None) -> DiscreteLegendrian:
    """Horizontal lift of a closed planar curve: dz/ds = (y x' - x y') / 2."""
    model = model or Heisenberg()
    if not isinstance(model, Heisenberg):
        raise InputError("lift_planar_heisenberg needs a Heisenberg model")
    plane, d = _planar(plane)
    rate = 0.5 * (plane[:, 1] * d[:, 0] - plane[:, 0] * d[:, 1])
    z, mean = spectral_antiderivative(rate[:, None])
    scale = max(1.0, float(np.max(np.abs(plane))) ** 2)
    area = -float(mean[0]) * TWO_PI
    if abs(area) > 1e-9 * scale:
        raise NonClosingError(f"signed area {area:.3e} is not zero; the lift does not close")
    pts = np.column_stack([plane, z0 + z[:, 0]])
    tan = np.column_stack([d, rate])
    tan = tan / model.norm(pts, tan)[:, None]
    return DiscreteLegendrian(model, pts, tan, info)


def lift_front_cylinder(plane, model: ContactModel | None = None, info=None) -> DiscreteLegendrian:
    """Conormal lift phi = (tangent angle) + pi/2, so cos(phi) x' + sin(phi) y' = 0."""
    model = model or Cylinder()
    if not isinstance(model, Cylinder):
        raise InputError("lift_front_cylinder needs a Cylinder model")
    plane, d = _planar(plane)
    dd = spectral_derivative(plane, 2)
    phi = np.arctan2(d[:, 1], d[:, 0]) + 0.5 * np.pi
    dphi = (d[:, 0] * dd[:, 1] - d[:, 1] * dd[:, 0]) / (d[:, 0] ** 2 + d[:, 1] ** 2)
    pts = np.column_stack([plane, phi])
    tan = np.column_stack([d, dphi])
    tan = tan / model.norm(pts, tan)[:, None]
    return DiscreteLegendrian(model, pts, tan, info)


def fiber_cylinder(x: float, y: float, n: int = 64, model: ContactModel | None = None, phase: float = 0.0) -> DiscreteLegendrian:
    """The Legendrian fibre {(x, y)} x S^1."""
    model = model or Cylinder()
    s = uniform_parameter(n)
    pts = np.column_stack([np.full(n, x), np.full(n, y), s + phase])
    tan = np.tile([0.0, 0.0, 1.0], (n, 1))
    return DiscreteLegendrian(model, pts, tan, {"generator": "fiber"})


def planar_generator(curve: DiscreteCurve):
    return curve.points[:, :2].copy()


def relift(curve: DiscreteCurve, plane, info=None) -> DiscreteLegendrian:
    if isinstance(curve.model, Heisenberg):
        return lift_planar_heisenberg(plane, float(curve.points[0, 2]), curve.model, info)
    return lift_front_cylinder(plane, curve.model, info)


# ------------------------------------------------------------------- standard curves
def figure_eight(n: int = 256, size: float = 1.0):
    s = uniform_parameter(n)
    return size * np.column_stack([np.sin(2 * s), np.sin(s)])


def circle(n: int = 256, radius: float = 1.0, center=(0.0, 0.0)):
    s = uniform_parameter(n)
    return np.column_stack([center[0] + radius * np.cos(s), center[1] + radius * np.sin(s)])


def rosette(n: int = 256, size: float = 1.0, order: int = 6):
    """A e^{is} + B e^{-(order-1) i s} with zero signed area; invariant under rotation by 2 pi / order."""
    s = uniform_parameter(n)
    q = order - 1
    z = size * (np.exp(1j * s) + np.exp(-1j * q * s) / np.sqrt(q))
    return np.column_stack([z.real, z.imag])


# ---------------------------------------------------------------------- perturbation
def _bump(n, amplitude, rng, modes):
    s = uniform_parameter(n)
    out = np.zeros((n, 2))
    for k in modes:
        a, b = rng.standard_normal((2, 2)) / k**2
        out += np.outer(np.cos(k * s), a) + np.outer(np.sin(k * s), b)
    return out * (amplitude / np.max(np.hypot(out[:, 0], out[:, 1])))


def _zero_area_correction(plane, bump):
    """Scalar c such that plane + bump + c * normal has zero signed area."""
    d = spectral_derivative(plane)
    normal = np.column_stack([-d[:, 1], d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]

    def area(c):
        q = plane + bump + c * normal
        dq = spectral_derivative(q)
        return 0.5 * np.mean(q[:, 0] * dq[:, 1] - q[:, 1] * dq[:, 0]) * TWO_PI

    # area is quadratic in c: recover it exactly from three evaluations
    h = 1e-3 * max(1.0, float(np.max(np.abs(bump))) * 1e3)
    a0, ap, am = area(0.0), area(h), area(-h)
    A1 = (ap - am) / (2 * h)
    A2 = (ap + am - 2 * a0) / (2 * h * h)
    if abs(A2) < 1e-300:
        c = -a0 / A1
    else:
        disc = A1 * A1 - 4 * A2 * a0
        if disc < 0:
            raise AmplitudeTooLargeError("cannot restore zero signed area")
        c = (-2 * a0) / (A1 + np.sign(A1) * np.sqrt(disc))
    for _ in range(3):
        c -= area(c) / A1
    return c * normal


def perturb(curve: DiscreteLegendrian, amplitude: float, seed: int = 0, modes=(2, 3, 4, 5), with_distance: bool = True) -> DiscreteLegendrian:
    """Random smooth perturbation of the planar generator followed by an exact re-lift.

    The returned curve records ``d1_from_parent`` in its ``info`` when
    ``with_distance`` is set.
    """
    if amplitude < 0:
        raise InputError("amplitude must be non-negative")
    if amplitude == 0:
        out = curve.copy()
        out.info.update(parent_amplitude=0.0, d1_from_parent=0.0)
        return out
    plane = planar_generator(curve)
    rng = np.random.default_rng(seed)
    bump = _bump(curve.n, amplitude, rng, modes)
    if isinstance(curve.model, Heisenberg):
        bump = bump + _zero_area_correction(plane, bump)
    new = plane + bump
    d_old = spectral_derivative(plane)
    d_new = spectral_derivative(new)
    if np.min(np.hypot(*d_new.T)) < 0.5 * np.min(np.hypot(*d_old.T)):
        raise AmplitudeTooLargeError("perturbation destroys the immersion of the generator")
    out = relift(curve, new, {"parent_amplitude": amplitude, "seed": seed})
    if with_distance:
        from .distances import d1

        out.info["d1_from_parent"] = d1(curve, out)
    return out


# ------------------------------------------------------------------------ symmetries
@dataclass(frozen=True)
class Isometry:
    """A registered isometry of a model (acting in its standard coordinates).

    kinds: identity, rotation (angle), translation (vector), involution.
    ``theta_sign`` is +1 for contactomorphisms preserving theta, -1 for those
    reversing it.
    """

    kind: str
    params: tuple = ()

    @classmethod
    def parse(cls, spec) -> "Isometry":
        if isinstance(spec, Isometry):
            return spec
        if isinstance(spec, dict):
            kind = spec["kind"]
            if kind == "rotation":
                return cls("rotation", (float(spec["angle"]),))
            if kind == "translation":
                return cls("translation", tuple(float(v) for v in spec["vector"]))
            return cls(kind)
        text = str(spec).strip()
        kind, _, arg = text.partition(":")
        if kind == "rotation":
            return cls("rotation", (float(arg),))
        if kind == "translation":
            return cls("translation", tuple(float(v) for v in arg.split(",")))
        return cls(kind)

    def check(self, model: ContactModel):
        ok = {
            "heisenberg": {"identity", "rotation", "translation"},
            "cylinder": {"identity", "rotation", "translation", "involution"},
        }[model.model_id]
        if self.kind not in ok:
            raise InputError(f"{self.kind!r} is not a registered symmetry of the {model.model_id} model")
        if self.kind == "translation":
            need = 3 if model.model_id == "heisenberg" else 2
            if len(self.params) not in (2, 3) or (need == 2 and len(self.params) != 2):
                raise InputError(f"translation on {model.model_id} needs {need} components")

    def theta_sign(self, model) -> int:
        return -1 if self.kind == "involution" else 1

    def _std_linear(self, model):
        if self.kind == "rotation":
            a = self.params[0]
            c, s = np.cos(a), np.sin(a)
            return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        if self.kind == "translation" and model.model_id == "heisenberg":
            a, b = self.params[0], self.params[1]
            return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5 * b, -0.5 * a, 1.0]])
        return np.eye(3)

    def apply(self, model, points):
        self.check(model)
        u = model.to_std(points)
        if self.kind == "rotation":
            out = u @ self._std_linear(model).T
            if model.model_id == "cylinder":
                out[..., 2] = u[..., 2] + self.params[0]
        elif self.kind == "translation":
            if model.model_id == "heisenberg":
                h = np.array(self.params + (0.0,) * (3 - len(self.params)))
                out = Heisenberg.group_mul(h, u)
            else:
                out = u + np.array([self.params[0], self.params[1], 0.0])
        elif self.kind == "involution":
            out = u + np.array([0.0, 0.0, np.pi])
        else:
            out = u.copy()
        return model.normalize(model.from_std(out))

    def push(self, model, points, vectors):
        """Differential applied to tangent vectors based at ``points``."""
        self.check(model)
        A = self._std_linear(model)
        vs = np.asarray(vectors, float) * model.d
        return (vs @ A.T) / model.d

    def pull_covector(self, model, points, form):
        """Components of F^* alpha at ``points`` given a covector field ``form``."""
        A = self._std_linear(model)
        D = np.diag(model.d)
        J = np.linalg.inv(D) @ A @ D
        return form(self.apply(model, points)) @ J


def apply_map(curve: DiscreteCurve, iso) -> DiscreteCurve:
    iso = Isometry.parse(iso)
    pts = iso.apply(curve.model, curve.points)
    tan = iso.push(curve.model, curve.points, curve.tangents)
    return curve.copy(points=pts, tangents=tan)


def rotations(order: int):
    return [Isometry("rotation", (TWO_PI * j / order,)) for j in range(order)]


# ------------------------------------------------------------------------ resampling
def resample(curve: DiscreteCurve, n: int) -> DiscreteCurve:
    """Arc-length-uniform resampling with n samples, starting at sample 0."""
    if n < 16:
        raise InputError("resample needs n >= 16")
    m = 8 * max(n, curve.n)
    sp = curve.speed(uniform_parameter(m))
    F, mean = spectral_antiderivative(sp[:, None])
    mean = float(mean[0])
    S = PeriodicInterpolant(F[:, 0] + mean * uniform_parameter(m), [mean])
    L = mean * TWO_PI
    target = L * np.arange(n) / n
    s = TWO_PI * np.arange(n) / n
    for _ in range(50):
        ds = (S(s)[:, 0] - target) / curve.speed(s)
        s = s - ds
        if np.max(np.abs(ds)) < 1e-15:
            break
    pts = curve.eval(s)
    tan = curve.tangent_at(s)
    return curve.copy(points=pts, tangents=tan)


# --------------------------------------------------------------------------- family
@dataclass
class FamilyInput:
    curves: list
    weights: np.ndarray | None = None
    labels: list | None = None

    def __post_init__(self):
        if not self.curves:
            raise InputError("a family needs at least one curve")
        k = len(self.curves)
        if self.weights is None:
            self.weights = np.full(k, 1.0 / k)
        self.weights = np.asarray(self.weights, float)
        if self.weights.shape != (k,):
            raise InputError("one weight per curve is required")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise InputError("weights must be positive and sum to 1")
        if self.labels is None:
            self.labels = [f"N{j}" for j in range(k)]
        m0 = self.curves[0].model
        if any(c.model != m0 for c in self.curves):
            raise InputError("all curves of a family must live on the same model")

    @property
    def model(self):
        return self.curves[0].model

    def __len__(self):
        return len(self.curves)

    def permuted(self, perm):
        return FamilyInput([self.curves[i] for i in perm], self.weights[list(perm)], [self.labels[i] for i in perm])

    def mapped(self, iso):
        return FamilyInput([apply_map(c, iso) for c in self.curves], self.weights.copy(), list(self.labels))

    def with_model(self, model):
        return FamilyInput([c.copy(model=model) for c in self.curves], self.weights.copy(), list(self.labels))


# ----------------------------------------------------------------------------- CSV
CSV_COLUMNS = ["t", "x", "y", "z_or_phi", "tx", "ty", "tz_or_tphi"]


def curve_to_csv(curve: DiscreteCurve, extra: dict | None = None) -> str:
    buf = io.StringIO()
    m = curve.model
    buf.write(f"# legav curve model={m.model_id} scale={m.scale!r} sign={m.sign}\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = CSV_COLUMNS + list(extra or {})
    w.writerow(cols)
    t = curve.t
    for i in range(curve.n):
        row = [t[i], *curve.points[i], *curve.tangents[i]]
        row += [extra[k][i] for k in (extra or {})]
        w.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


def write_curve_csv(path, curve: DiscreteCurve, extra: dict | None = None):
    Path(path).write_text(curve_to_csv(curve, extra))


def parse_curve_csv(text: str, model: ContactModel | None = None, legendrian: bool = False, residual_tol=RESIDUAL_TOL):
    lines = text.splitlines()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        elif line.strip():
            body.append(line)
    if model is None:
        if "model" not in meta:
            raise InputError("curve CSV carries no model; pass one explicitly")
        model = get_model(meta["model"], float(meta.get("scale", 1.0)), int(meta.get("sign", 1)))
    rows = list(csv.reader(body))
    header = rows[0]
    if header[: len(CSV_COLUMNS)] != CSV_COLUMNS:
        raise InputError(f"unexpected CSV header {header}")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    pts = data[:, 1:4]
    tan = data[:, 4:7]
    extra = {h: data[:, j] for j, h in enumerate(header) if j >= len(CSV_COLUMNS)}
    if legendrian:
        curve = DiscreteLegendrian(model, pts, tan, residual_tol=residual_tol)
    else:
        curve = DiscreteCurve(model, pts, tan)
    curve.info["csv_extra"] = extra
    return curve


def read_curve_csv(path, model: ContactModel | None = None, legendrian: bool = False, residual_tol=RESIDUAL_TOL):
    return parse_curve_csv(Path(path).read_text(), model, legendrian, residual_tol)
