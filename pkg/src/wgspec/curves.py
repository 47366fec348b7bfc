"""Base-curve geometry: arclength resampling, relatively adapted parallel
frames by ODE transport, curvature functionals, and the alignment angle.

A framed curve carries a uniform arclength grid with an orthonormal frame
(e1, e2, e3), e1 the unit tangent, whose transverse vectors turn only along
the tangent direction; the transverse turning rates (k1, k2) integrate to
the bending vector Y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import (
    SingularParametrizationError,
    StepSizeError,
    UndefinedAngleError,
)

_GAUSS_X, _GAUSS_W = leggauss(5)


@dataclass(frozen=True)
class ParamCurve:
    """Parametrized 3D curve (2D curves promoted with zero third coordinate).

    gamma, dgamma, ddgamma map an array of parameters to (n, 3) arrays;
    ddgamma may be None when only frame transport is needed.
    kappa_l1_tail(t0, t1), when present, is the analytic curvature integral
    outside the window (arclength measure).
    """

    gamma: object
    dgamma: object
    ddgamma: object = None
    t0: float = -1.0
    t1: float = 1.0
    asymptotically_straight: bool = False
    kappa_l1_tail: object = None
    name: str = "curve"

    def window(self, half_width):
        """Same curve restricted to [-half_width, half_width]."""
        return ParamCurve(
            gamma=self.gamma,
            dgamma=self.dgamma,
            ddgamma=self.ddgamma,
            t0=-float(half_width),
            t1=float(half_width),
            asymptotically_straight=self.asymptotically_straight,
            kappa_l1_tail=self.kappa_l1_tail,
            name=self.name,
        )


@dataclass(frozen=True)
class FramedCurve:
    """Curve samples on a uniform arclength grid with a transported frame."""

    s: np.ndarray
    t: np.ndarray
    gamma: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    kappa: np.ndarray
    tail: float = 0.0
    tail_given: bool = False
    name: str = "curve"

    @property
    def h(self):
        return float(self.s[1] - self.s[0])

    def frame_matrix(self, j):
        return np.column_stack([self.e1[j], self.e2[j], self.e3[j]])

    def orthonormality_defect(self):
        G = np.stack([self.e1, self.e2, self.e3], axis=2)
        P = np.einsum("nij,nik->njk", G, G)
        return float(np.abs(P - np.eye(3)).max())

    def to_csv(self):
        lines = ["s,k1,k2,kappa"]
        for s, k1, k2, ka in zip(self.s, self.k1, self.k2, self.kappa):
            lines.append(f"{s:.17g},{k1:.17g},{k2:.17g},{ka:.17g}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# built-in curves


def line(direction=(1.0, 0.0, 0.0), point=(0.0, 0.0, 0.0)):
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    p = np.asarray(point, dtype=float)

    def gamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return p[None, :] + t[:, None] * d[None, :]

    def dgamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.tile(d, (len(t), 1))

    def ddgamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.zeros((len(t), 3))

    return ParamCurve(gamma, dgamma, ddgamma, asymptotically_straight=True,
                      kappa_l1_tail=lambda t0, t1: 0.0, name="line")


def circle(radius=1.0):
    R = float(radius)

    def gamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([R * np.cos(t), R * np.sin(t), np.zeros_like(t)])

    def dgamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([-R * np.sin(t), R * np.cos(t), np.zeros_like(t)])

    def ddgamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([-R * np.cos(t), -R * np.sin(t), np.zeros_like(t)])

    return ParamCurve(gamma, dgamma, ddgamma, name=f"circle(R={R:g})")


def helix(radius=1.0, pitch=0.5):
    R, p = float(radius), float(pitch)

    def gamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([R * np.cos(t), R * np.sin(t), p * t])

    def dgamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([-R * np.sin(t), R * np.cos(t), np.full_like(t, p)])

    def ddgamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([-R * np.cos(t), -R * np.sin(t), np.zeros_like(t)])

    return ParamCurve(gamma, dgamma, ddgamma, name=f"helix(R={R:g},p={p:g})")


def parabola(scale=1.0):
    """Planar parabola (t, scale*t^2, 0); signed curvature 2a/(1+4a^2 t^2)^(3/2)."""
    a = float(scale)

    def gamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([t, a * t * t, np.zeros_like(t)])

    def dgamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([np.ones_like(t), 2.0 * a * t, np.zeros_like(t)])

    def ddgamma(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([np.zeros_like(t), np.full_like(t, 2.0 * a), np.zeros_like(t)])

    def tail(t0, t1):
        # turning angle not captured by the window [t0, t1]
        return float((math.pi / 2 + math.atan(2 * a * t0)) + (math.pi / 2 - math.atan(2 * a * t1)))

    return ParamCurve(gamma, dgamma, ddgamma, asymptotically_straight=True,
                      kappa_l1_tail=tail, name=f"parabola(a={a:g})")


def sbend():
    """Arclength-parametrized planar S-curve with signed curvature s*exp(-s^2).

    The turning angle is phi(s) = (1 - exp(-s^2))/2, an even function, so the
    two bends cancel and Y = 0.
    """

    def phi(s):
        return 0.5 * (1.0 - np.exp(-np.asarray(s, dtype=float) ** 2))

    def dgamma(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        ph = phi(s)
        return np.column_stack([np.cos(ph), np.sin(ph), np.zeros_like(s)])

    def ddgamma(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        ph = phi(s)
        dph = s * np.exp(-(s**2))
        return np.column_stack([-np.sin(ph) * dph, np.cos(ph) * dph, np.zeros_like(s)])

    def gamma(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        order = np.argsort(s)
        svals = s[order]
        out = np.zeros((len(s), 3))
        pos = np.zeros(2)
        prev = 0.0
        acc = np.zeros((len(svals), 2))
        # integrate the unit tangent from 0 to each requested parameter
        for i, sv in enumerate(svals):
            lo, hi = (prev, sv) if sv >= prev else (sv, prev)
            npan = max(1, int(math.ceil((hi - lo) / 0.05)))
            edges = np.linspace(lo, hi, npan + 1)
            mid = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * (edges[1:] - edges[:-1])
            nodes = (mid[:, None] + half[:, None] * _GAUSS_X[None, :]).ravel()
            ph = phi(nodes)
            w = (half[:, None] * _GAUSS_W[None, :]).ravel()
            seg = np.array([(np.cos(ph) * w).sum(), (np.sin(ph) * w).sum()])
            pos = pos + seg if sv >= prev else pos - seg
            acc[i] = pos
            prev = sv
        out[order, :2] = acc
        return out

    def tail(t0, t1):
        from scipy.integrate import quad

        lo = quad(lambda s: abs(s) * math.exp(-(s**2)), -np.inf, t0)[0]
        hi = quad(lambda s: abs(s) * math.exp(-(s**2)), t1, np.inf)[0]
        return float(lo + hi)

    return ParamCurve(gamma, dgamma, ddgamma, asymptotically_straight=True,
                      kappa_l1_tail=tail, name="sbend")


def from_samples(t, xyz):
    """Cubic-spline curve through (t_i, gamma_i) samples."""
    from scipy.interpolate import CubicSpline

    t = np.asarray(t, dtype=float)
    xyz = np.asarray(xyz, dtype=float)
    if xyz.ndim != 2 or xyz.shape[1] not in (2, 3):
        raise ValueError("samples must be (n, 2) or (n, 3)")
    if xyz.shape[1] == 2:
        xyz = np.column_stack([xyz, np.zeros(len(xyz))])
    if len(t) < 8:
        raise StepSizeError("too few curve samples; provide at least 8 points")
    sp = CubicSpline(t, xyz, axis=0)
    d1 = sp.derivative(1)
    d2 = sp.derivative(2)
    return ParamCurve(
        gamma=lambda s: np.atleast_2d(sp(np.asarray(s, dtype=float))),
        dgamma=lambda s: np.atleast_2d(d1(np.asarray(s, dtype=float))),
        ddgamma=lambda s: np.atleast_2d(d2(np.asarray(s, dtype=float))),
        t0=float(t[0]),
        t1=float(t[-1]),
        name="samples",
    )


# ---------------------------------------------------------------------------
# arclength resampling


@dataclass(frozen=True)
class ArcSamples:
    """Uniform arclength grid with positions and unit tangents."""

    s: np.ndarray
    t: np.ndarray
    gamma: np.ndarray
    tangent: np.ndarray
    total_length: float


def arclength_resample(curve: ParamCurve, N):
    """Place N+1 equally spaced arclength nodes on the parameter window.

    The cumulative arclength is a composite 5-point Gauss quadrature of
    |gamma'| over 4N subintervals; node parameters are recovered by
    bracketed Newton on the monotone cumulative function.
    """
    if N < 16:
        raise ValueError("N must be >= 16")
    N = int(N)
    t0, t1 = float(curve.t0), float(curve.t1)
    npan = 4 * N
    edges = np.linspace(t0, t1, npan + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GAUSS_X[None, :]).ravel()
    speeds = np.linalg.norm(curve.dgamma(nodes), axis=1)
    if speeds.min() < 1e-12:
        raise SingularParametrizationError(
            f"|gamma'| = {speeds.min():.3e} at a quadrature point"
        )
    panel = (speeds.reshape(npan, 5) * _GAUSS_W[None, :]).sum(axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(panel)])
    total = float(cum[-1])

    targets = np.linspace(0.0, total, N + 1)
    # bracket each target in its panel, then Newton with bisection fallback
    k = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, npan - 1)
    lo = edges[k].copy()
    hi = edges[k + 1].copy()
    t = 0.5 * (lo + hi)

    def partial(a, x):
        """Gauss-5 integral of |gamma'| from a to x (vectorized)."""
        m = 0.5 * (a + x)
        hw = 0.5 * (x - a)
        pts = m[:, None] + hw[:, None] * _GAUSS_X[None, :]
        sp = np.linalg.norm(
            curve.dgamma(pts.ravel()), axis=1
        ).reshape(len(a), 5)
        return (sp * _GAUSS_W[None, :]).sum(axis=1) * hw

    need = targets - cum[k]
    for _ in range(80):
        f = partial(lo * 0 + edges[k], t) - need
        df = np.linalg.norm(curve.dgamma(t), axis=1)
        hi = np.where(f > 0, np.minimum(t, hi), hi)
        lo = np.where(f <= 0, np.maximum(t, lo), lo)
        step = f / np.maximum(df, 1e-300)
        t_new = t - step
        bad = (t_new <= lo) | (t_new >= hi) | ~np.isfinite(t_new)
        t_new = np.where(bad, 0.5 * (lo + hi), t_new)
        if np.abs(f).max() <= 1e-13 * (1.0 + total):
            t = t_new
            break
        t = t_new
    t[0], t[-1] = t0, t1

    pts = curve.gamma(t)
    vel = curve.dgamma(t)
    tang = vel / np.linalg.norm(vel, axis=1)[:, None]
    return ArcSamples(
        s=targets, t=t, gamma=pts, tangent=tang, total_length=total
    )


# ---------------------------------------------------------------------------
# frame transport


def default_transverse_frame(T0):
    """A deterministic transverse pair completing T0 to a positively oriented
    orthonormal frame; planar tangents get e3 = (0, 0, 1)."""
    T0 = np.asarray(T0, dtype=float)
    if abs(T0[2]) < 1e-12:
        e3 = np.array([0.0, 0.0, 1.0])
        e2 = np.cross(e3, T0)
        e2 /= np.linalg.norm(e2)
        return e2, e3
    u = np.zeros(3)
    u[int(np.argmin(np.abs(T0)))] = 1.0
    e2 = u - (u @ T0) * T0
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(T0, e2)
    return e2, e3


def _tangent_derivative(tangent, h):
    """Centered differences of the unit tangent, one-sided at the ends."""
    T = tangent
    dT = np.empty_like(T)
    dT[1:-1] = (T[2:] - T[:-2]) / (2.0 * h)
    dT[0] = (-3.0 * T[0] + 4.0 * T[1] - T[2]) / (2.0 * h)
    dT[-1] = (3.0 * T[-1] - 4.0 * T[-2] + T[-3]) / (2.0 * h)
    return dT


def rapf(arc: ArcSamples, e2_0=None, e3_0=None, name="curve"):
    """Transport a relatively parallel transverse frame along the curve.

    Integrates e_j' = -(e_j . T') T with classical Runge-Kutta on the
    arclength grid (T and T' linearly interpolated at half steps) and
    re-orthonormalizes the transverse pair against the tangent after every
    step.  Turning rates are k1 = T'.e2, k2 = T'.e3 and kappa = |T'|.
    """
    T = arc.tangent
    n = len(T)
    h = float(arc.s[1] - arc.s[0])
    if e2_0 is None or e3_0 is None:
        e2_0, e3_0 = default_transverse_frame(T[0])
    e2_0 = np.asarray(e2_0, dtype=float)
    e3_0 = np.asarray(e3_0, dtype=float)
    G0 = np.column_stack([T[0], e2_0, e3_0])
    if np.abs(G0.T @ G0 - np.eye(3)).max() > 1e-10:
        raise ValueError("initial frame is not orthonormal")
    if np.linalg.det(G0) < 0:
        raise ValueError("initial frame is not positively oriented")

    dT = _tangent_derivative(T, h)

    def rhs(Tloc, dTloc, e):
        return -np.outer(e @ dTloc, Tloc) if e.ndim == 2 else -(e @ dTloc) * Tloc

    e2 = np.empty_like(T)
    e3 = np.empty_like(T)
    e2[0], e3[0] = e2_0, e3_0
    for j in range(n - 1):
        T0_, T1_ = T[j], T[j + 1]
        dT0_, dT1_ = dT[j], dT[j + 1]

        def field(x):
            """Normalized linear tangent path and its exact derivative.

            Using the analytic derivative of the interpolated path (not the
            interpolated nodal T') makes the continuous flow preserve e.T
            exactly, so the drift gate sees pure integrator error.
            """
            u = (1.0 - x) * T0_ + x * T1_
            nu = np.linalg.norm(u)
            Tx = u / nu
            du = (T1_ - T0_) / h
            return Tx, (du - Tx * (Tx @ du)) / nu

        # substep where the per-step rotation angle kappa*h is large, so the
        # pre-renormalization drift stays well under the 1e-8 gate
        rot = h * max(np.linalg.norm(dT0_), np.linalg.norm(dT1_))
        m = 1 + int(rot / 0.02)
        hs = h / m
        y = np.stack([e2[j], e3[j]])
        for q in range(m):
            Ta, dTa = field(q / m)
            Tm, dTm = field((q + 0.5) / m)
            Tb, dTb = field((q + 1.0) / m)
            k1 = rhs(Ta, dTa, y)
            k2 = rhs(Tm, dTm, y + 0.5 * hs * k1)
            k3 = rhs(Tm, dTm, y + 0.5 * hs * k2)
            k4 = rhs(Tb, dTb, y + hs * k3)
            y = y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        G = np.column_stack([T1_, y[0], y[1]])
        drift = np.abs(G.T @ G - np.eye(3)).max()
        if drift > 1e-8:
            raise StepSizeError(
                f"frame drift {drift:.2e} at step {j + 1}; increase N"
            )
        a = y[0] - (y[0] @ T1_) * T1_
        a /= np.linalg.norm(a)
        b = y[1] - (y[1] @ T1_) * T1_ - (y[1] @ a) * a
        b /= np.linalg.norm(b)
        e2[j + 1], e3[j + 1] = a, b

    k1v = (dT * e2).sum(axis=1)
    k2v = (dT * e3).sum(axis=1)
    kappa = np.linalg.norm(dT, axis=1)
    return FramedCurve(
        s=arc.s, t=arc.t, gamma=arc.gamma, e1=T, e2=e2, e3=e3,
        k1=k1v, k2=k2v, kappa=kappa, name=name,
    )


def frame_curve(curve: ParamCurve, N, e2_0=None, e3_0=None):
    """Resample to arclength and transport the default (or given) frame."""
    arc = arclength_resample(curve, N)
    fc = rapf(arc, e2_0, e3_0, name=curve.name)
    if curve.kappa_l1_tail is not None:
        tail = float(curve.kappa_l1_tail(curve.t0, curve.t1))
        return FramedCurve(
            s=fc.s, t=fc.t, gamma=fc.gamma, e1=fc.e1, e2=fc.e2, e3=fc.e3,
            k1=fc.k1, k2=fc.k2, kappa=fc.kappa,
            tail=tail, tail_given=True, name=fc.name,
        )
    return fc


# ---------------------------------------------------------------------------
# curvature functionals


def planar_signed_curvature(curve: ParamCurve, t):
    """Signed curvature (x'y'' - y'x'') / (x'^2 + y'^2)^(3/2) of a planar curve."""
    if curve.ddgamma is None:
        raise ValueError("curve does not provide a second derivative")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d1 = curve.dgamma(t)
    d2 = curve.ddgamma(t)
    speed2 = d1[:, 0] ** 2 + d1[:, 1] ** 2
    if speed2.min() < 1e-24:
        raise SingularParametrizationError("|gamma'| ~ 0 in curvature formula")
    k = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed2**1.5
    return k if k.size > 1 else float(k[0])


def curvature_norms(fc: FramedCurve, tail=None):
    """Windowed sup and L1 norms of kappa plus the tail term.

    tail overrides the value stored on the framed curve; without either, the
    tail is 0 and the result is flagged.
    """
    sup = float(fc.kappa.max())
    l1 = float(np.trapezoid(fc.kappa, fc.s))
    if tail is None:
        tail_val = fc.tail if fc.tail_given else 0.0
        missing = not fc.tail_given
    else:
        tail_val = float(tail)
        missing = False
    return {"sup": sup, "l1": l1, "tail": tail_val, "tail_missing": missing}


def yvector(fc: FramedCurve):
    """Windowed bending vector Y = (integral of k1, integral of k2)."""
    return np.array([
        np.trapezoid(fc.k1, fc.s),
        np.trapezoid(fc.k2, fc.s),
    ])


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def yvector_theta(Y, theta):
    """Bending vector in the frame rotated by the constant angle theta."""
    return rotation(theta) @ np.asarray(Y, dtype=float)


def theta_star(X, Y):
    """Unique angle in [0, 2pi) rotating Y onto the direction of X."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if np.linalg.norm(X) == 0 or np.linalg.norm(Y) == 0:
        raise UndefinedAngleError("alignment angle undefined for zero vectors")
    ang = math.atan2(X[1], X[0]) - math.atan2(Y[1], Y[0])
    return ang % (2.0 * math.pi)


@dataclass(frozen=True)
class Admissibility:
    ok: bool
    det_lo: float
    det_hi: float


def admissibility(b, kappa_sup):
    """Tube-map admissibility b*sup(kappa) < 1 with the Jacobian bounds."""
    b = float(b)
    kappa_sup = float(kappa_sup)
    if b < 0 or kappa_sup < 0:
        raise ValueError("b and kappa_sup must be nonnegative")
    x = b * kappa_sup
    return Admissibility(ok=x < 1.0, det_lo=1.0 - x, det_hi=1.0 + x)


def scale_family(fc: FramedCurve, delta, tail=None):
    """Functionals of the slightly-curved family at scale delta in (0, 1].

    The sup norm scales by delta while the L1 norm and Y are invariant, so no
    re-integration is needed.
    """
    if not (0.0 < delta <= 1.0):
        raise ValueError("delta must lie in (0, 1]")
    norms = curvature_norms(fc, tail=tail)
    return {
        "delta": float(delta),
        "sup": delta * norms["sup"],
        "l1": norms["l1"],
        "tail": norms["tail"],
        "Y": yvector(fc),
    }
