"""Cross-section analysis: the first nonzero Neumann eigenvalue with a
simplicity verdict, the boundary vector X by two independent formulas, and
closed-form reference sections."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSectionError
from .fem import assemble, grad_p1, neumann_eigs
from .mesh import TriMesh, _cross2, refine_uniform


@dataclass(frozen=True)
class CrossSectionReport:
    """Everything the trapping condition needs from a cross-section.

    X_boundary and X_volume are the same vector computed by the boundary
    quadrature of n |psi|^2 and by the volume form 2 integral of psi grad psi;
    for P1 fields the two agree to rounding (per-triangle divergence theorem
    on the piecewise-quadratic psi^2).
    """

    lambda2: float
    lambda3: float
    simple: bool
    gap_ratio: float
    discretization_error: float
    X_boundary: np.ndarray
    X_volume: np.ndarray
    b: float
    origin: np.ndarray
    psi: np.ndarray = field(repr=False)
    mesh_stats: dict = field(default_factory=dict)
    warnings: tuple = ()

    @property
    def X(self):
        return self.X_boundary

    def to_json(self):
        return json.dumps(
            {
                "lambda2": self.lambda2,
                "lambda3": self.lambda3,
                "simple": self.simple,
                "gap_ratio": self.gap_ratio,
                "discretization_error": self.discretization_error,
                "X_boundary": [float(v) for v in self.X_boundary],
                "X_volume": [float(v) for v in self.X_volume],
                "b": self.b,
                "origin": [float(v) for v in self.origin],
                "mesh_stats": self.mesh_stats,
                "warnings": list(self.warnings),
            },
            indent=2,
        )


def fix_sign(psi):
    """Deterministic eigenfunction sign: largest-magnitude nodal value positive."""
    i = int(np.argmax(np.abs(psi)))
    return psi if psi[i] >= 0 else -psi


def x_boundary(mesh: TriMesh, psi):
    """X = sum over boundary edges of n * len * Simpson(psi^2).

    Simpson quadrature is exact for the quadratic trace of a P1 field:
    integral of psi^2 over an edge = len * (pa^2 + pa pb + pb^2) / 3.
    """
    a = psi[mesh.boundary_edges[:, 0]]
    b = psi[mesh.boundary_edges[:, 1]]
    w = mesh.boundary_lengths * (a * a + a * b + b * b) / 3.0
    return (mesh.boundary_normals * w[:, None]).sum(axis=0)


def x_volume(mesh: TriMesh, psi):
    """X = sum over triangles of 2 * area * mean(psi) * grad(psi)."""
    v = mesh.vertices
    t = mesh.triangles
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    area = 0.5 * _cross2(p1 - p0, p2 - p0)
    mean = psi[t].mean(axis=1)
    g = grad_p1(mesh, psi)
    return (g * (2.0 * area * mean)[:, None]).sum(axis=0)


def b_radius(mesh: TriMesh, origin=(0.0, 0.0)):
    """sup over the section of |y - origin|, attained at a boundary vertex."""
    origin = np.asarray(origin, dtype=float)
    bv = mesh.vertices[mesh.boundary_vertex_indices()]
    return float(np.sqrt(((bv - origin) ** 2).sum(axis=1)).max())


def analyze(mesh: TriMesh, origin=(0.0, 0.0), tol=1e-8, estimate_error=True):
    """Full cross-section report: lambda2 with simplicity verdict, X, b.

    Simplicity couples the spectral gap to a one-refinement-step error
    estimate: the gap must exceed max(10*tol, 5*estimated relative
    discretization error).  With estimate_error=False (cheap mode for sweeps)
    only the 10*tol floor is used.
    """
    origin = np.asarray(origin, dtype=float)
    spec = neumann_eigs(mesh, 2, tol=tol)
    lam2, lam3 = float(spec.eigenvalues[1]), float(spec.eigenvalues[2])
    gap_ratio = (lam3 - lam2) / lam2 if lam2 > 0 else 0.0

    disc_err = 0.0
    if estimate_error:
        fine = refine_uniform(mesh)
        spec_f = neumann_eigs(fine, 1, tol=tol)
        lam2_f = float(spec_f.eigenvalues[1])
        disc_err = abs(lam2 - lam2_f) / max(lam2_f, 1e-300)
    simple = gap_ratio > max(10.0 * tol, 5.0 * disc_err)

    _, M = assemble(mesh)
    psi = spec.eigenvectors[:, 1]
    psi = psi / math.sqrt(psi @ (M @ psi))
    psi = fix_sign(psi)

    warnings = tuple(mesh.warnings)
    if not simple:
        warnings += (
            "lambda2 not simple at this resolution: X is representative only "
            "(it depends on the eigenfunction choice)",
        )
    return CrossSectionReport(
        lambda2=lam2,
        lambda3=lam3,
        simple=simple,
        gap_ratio=gap_ratio,
        discretization_error=disc_err,
        X_boundary=x_boundary(mesh, psi),
        X_volume=x_volume(mesh, psi),
        b=b_radius(mesh, origin),
        origin=origin,
        psi=psi,
        mesh_stats=mesh.stats(),
        warnings=warnings,
    )


@dataclass(frozen=True)
class AnalyticSection:
    """Closed-form cross-section reference."""

    lambda2: float
    X: np.ndarray
    psi: object  # callable psi(y1, y2)
    name: str


def analytic_rectangle(ell, L):
    """Closed-form section for the rectangle (0, ell) x (0, L) with ell > L.

    lambda2 = pi^2/ell^2 with normalized eigenfunction
    sqrt(2/(ell L)) cos(pi y1 / ell); X vanishes by the point symmetry.
    """
    if not (ell > 0 and L > 0):
        raise ValueError("rectangle dimensions must be positive")
    if ell <= L:
        raise DegenerateSectionError(
            "closed form requires ell > L (equal sides make lambda2 degenerate)"
        )
    ell, L = float(ell), float(L)
    amp = math.sqrt(2.0 / (ell * L))

    def psi(y1, y2):
        return amp * np.cos(np.pi * np.asarray(y1) / ell) + 0.0 * np.asarray(y2)

    return AnalyticSection(
        lambda2=math.pi**2 / ell**2,
        X=np.zeros(2),
        psi=psi,
        name=f"rectangle({ell:g}x{L:g})",
    )


def analytic_right_triangle():
    """Closed-form section for the right triangle (0,0)-(1,0)-(0,1).

    lambda2 = pi^2 is simple; the normalized eigenfunction is
    sqrt(2) (cos(pi y2) - cos(pi y1)) and X = (1, 1).
    """

    def psi(y1, y2):
        return math.sqrt(2.0) * (np.cos(np.pi * np.asarray(y2)) - np.cos(np.pi * np.asarray(y1)))

    return AnalyticSection(
        lambda2=math.pi**2,
        X=np.array([1.0, 1.0]),
        psi=psi,
        name="right-triangle",
    )
