"""P1 Lagrange finite elements on triangle meshes.

Assembly of the stiffness and consistent mass matrices, Neumann and
Dirichlet generalized eigensolves by shifted block inverse iteration, and
deflated (bordered) solves of singular shifted systems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import NearDegenerateError, SolverError
from .mesh import TriMesh

MAX_ITERATIONS = 500
_COARSE_TOL = 1e-3


@dataclass(frozen=True)
class Spectrum:
    """Sorted generalized eigenpairs of (K, M).

    eigenvalues are ascending (units 1/length^2); eigenvectors are nodal and
    M-orthonormal, one column per eigenvalue; residuals are
    ||K u - lambda M u|| / ||M u|| per pair; bc is "neumann" or "dirichlet".
    """

    bc: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray

    def to_json(self):
        return json.dumps(
            {
                "bc": self.bc,
                "eigenvalues": [float(v) for v in self.eigenvalues],
                "residuals": [float(r) for r in self.residuals],
            }
        )

    def save_eigenvectors(self, path):
        """Sidecar binary: float64 eigenvectors in nodal order, column-major
        by eigenpair."""
        np.asarray(self.eigenvectors, dtype=np.float64).T.tofile(path)


def assemble(mesh: TriMesh):
    """P1 stiffness and consistent mass matrices (CSR, symmetric).

    Element integrals are exact: constant gradients for the stiffness,
    area/12 * (2 on the diagonal, 1 off) for the mass.  The assembled
    stiffness annihilates the constant vector up to rounding.
    """
    v = mesh.vertices
    t = mesh.triangles
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    # gradients of the barycentric basis: grad phi_i = perp(opposite edge)/2A
    g = np.empty((len(t), 3, 2))
    g[:, 0, 0] = p1[:, 1] - p2[:, 1]
    g[:, 0, 1] = p2[:, 0] - p1[:, 0]
    g[:, 1, 0] = p2[:, 1] - p0[:, 1]
    g[:, 1, 1] = p0[:, 0] - p2[:, 0]
    g[:, 2, 0] = p0[:, 1] - p1[:, 1]
    g[:, 2, 1] = p1[:, 0] - p0[:, 0]
    g /= (2.0 * area)[:, None, None]

    ke = np.einsum("tid,tjd->tij", g, g) * area[:, None, None]
    me = (np.ones((3, 3)) + np.eye(3))[None, :, :] * (area / 12.0)[:, None, None]

    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.num_vertices
    K = sparse.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))
    M = sparse.csr_matrix((me.ravel(), (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    M.sum_duplicates()
    return K, M


def grad_p1(mesh: TriMesh, u):
    """Per-triangle constant gradient of a nodal field, shape (nt, 2)."""
    v = mesh.vertices
    t = mesh.triangles
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    u0, u1, u2 = u[t[:, 0]], u[t[:, 1]], u[t[:, 2]]
    gx = (u0 * (p1[:, 1] - p2[:, 1]) + u1 * (p2[:, 1] - p0[:, 1]) + u2 * (p0[:, 1] - p1[:, 1]))
    gy = (u0 * (p2[:, 0] - p1[:, 0]) + u1 * (p0[:, 0] - p2[:, 0]) + u2 * (p1[:, 0] - p0[:, 0]))
    return np.column_stack([gx, gy]) / area2[:, None]


def _m_orthonormalize(X, M):
    """Column M-orthonormalization via Cholesky of the Gram matrix."""
    G = X.T @ (M @ X)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    return np.linalg.solve(L, X.T).T


def _block_inverse_iteration(K, M, m_block, n_pairs, tol, shift, constant=None,
                             max_iter=MAX_ITERATIONS, rng_seed=7):
    """Shifted block inverse iteration with Rayleigh-Ritz extraction.

    Returns (values, vectors, residuals, iterations, converged) for the
    n_pairs smallest eigenpairs; the block carries extra guard vectors.
    If ``constant`` is given, the iteration runs M-orthogonally to it.
    """
    n = K.shape[0]
    lu = splu((K + shift * M).tocsc())
    rng = np.random.default_rng(rng_seed)
    X = rng.standard_normal((n, m_block))

    def deflate(Y):
        if constant is not None:
            Y -= np.outer(constant, (M @ constant).T @ Y)
        return Y

    X = deflate(X)
    X = _m_orthonormalize(X, M)
    vals = res = None
    for it in range(1, max_iter + 1):
        X = lu.solve(M @ X)
        X = deflate(X)
        X = _m_orthonormalize(X, M)
        A = X.T @ (K @ X)
        w, Q = np.linalg.eigh(0.5 * (A + A.T))
        X = X @ Q
        vals = w[:n_pairs]
        R = K @ X[:, :n_pairs] - (M @ X[:, :n_pairs]) * vals[None, :]
        res = np.linalg.norm(R, axis=0) / np.linalg.norm(M @ X[:, :n_pairs], axis=0)
        if res.max() <= tol:
            return vals, X[:, :n_pairs], res, it, True
    return vals, X[:, :n_pairs], res, max_iter, False


def neumann_eigs(mesh: TriMesh, k, tol=1e-8):
    """k+1 smallest Neumann eigenpairs of K u = lambda M u, zero mode included.

    The constant mode is deflated analytically and reported as the first
    pair.  The shift for the factorization starts at 1e-3 * tr(K)/tr(M) and
    is retuned to 1e-3 times the first nonzero Rayleigh estimate after a
    coarse pass.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = mesh.num_vertices
    if k + 2 > n:
        raise ValueError("k + 2 exceeds the vertex count")
    K, M = assemble(mesh)

    ones = np.ones(n)
    c = ones / np.sqrt(ones @ (M @ ones))
    lam1 = max(float(c @ (K @ c)), 0.0)

    m_block = min(k + 3, n - 1)
    shift0 = 1e-3 * K.diagonal().sum() / M.diagonal().sum()
    vals, _, _, used, _ = _block_inverse_iteration(
        K, M, m_block, min(k, m_block), _COARSE_TOL, shift0, constant=c, max_iter=30
    )
    shift = 1e-3 * float(vals[0])
    vals, X, res, used2, ok = _block_inverse_iteration(
        K, M, m_block, min(k, m_block), tol, shift, constant=c,
        max_iter=MAX_ITERATIONS - used,
    )
    if not ok:
        raise SolverError(
            f"eigensolve did not converge in {MAX_ITERATIONS} iterations "
            f"(best residual {res.max():.3e})",
            residuals=res,
        )
    c_res = float(np.linalg.norm(K @ c - lam1 * (M @ c)) / np.linalg.norm(M @ c))
    return Spectrum(
        bc="neumann",
        eigenvalues=np.concatenate([[lam1], vals]),
        eigenvectors=np.column_stack([c, X]),
        residuals=np.concatenate([[c_res], res]),
    )


def dirichlet_eigs(mesh: TriMesh, k, tol=1e-8):
    """k smallest Dirichlet eigenpairs; boundary values eliminated exactly."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = mesh.num_vertices
    bdry = np.zeros(n, dtype=bool)
    bdry[mesh.boundary_vertex_indices()] = True
    interior = np.where(~bdry)[0]
    if k > len(interior):
        raise ValueError("k exceeds the interior node count")
    K, M = assemble(mesh)
    Ki = K[interior][:, interior].tocsr()
    Mi = M[interior][:, interior].tocsr()

    m_block = min(k + 3, len(interior))
    shift0 = 1e-3 * Ki.diagonal().sum() / Mi.diagonal().sum()
    vals, _, _, used, _ = _block_inverse_iteration(
        Ki, Mi, m_block, min(k, m_block), _COARSE_TOL, shift0, max_iter=30
    )
    shift = 1e-3 * float(vals[0])
    vals, Xi, res, _, ok = _block_inverse_iteration(
        Ki, Mi, m_block, min(k, m_block), tol, shift,
        max_iter=MAX_ITERATIONS - used,
    )
    if not ok:
        raise SolverError(
            f"eigensolve did not converge in {MAX_ITERATIONS} iterations "
            f"(best residual {res.max():.3e})",
            residuals=res,
        )
    X = np.zeros((n, Xi.shape[1]))
    X[interior] = Xi
    return Spectrum(bc="dirichlet", eigenvalues=vals, eigenvectors=X, residuals=res)


@dataclass(frozen=True)
class DeflatedSolve:
    """Result of a deflated shifted solve."""

    x: np.ndarray
    removed: np.ndarray  # kernel components removed from the rhs, per basis vector
    residual: float


def solve_deflated(K, M, lam, rhs, deflation_basis):
    """Solve (K - lam*M) x = rhs M-orthogonally to the deflation basis.

    The rhs is first projected onto the M-orthogonal complement of the basis
    (removed components are reported); the constrained system is solved as a
    bordered saddle-point system [[K-lam*M, M B], [(M B)^T, 0]].
    """
    rhs = np.asarray(rhs, dtype=float)
    n = K.shape[0]
    A = (K - lam * M).tocsc()
    basis = [np.asarray(b, dtype=float) for b in deflation_basis]

    removed = np.array([b @ rhs for b in basis])
    rhs_p = rhs.copy()
    for b, r in zip(basis, removed):
        rhs_p -= r * (M @ b) / (b @ (M @ b))

    if basis:
        MB = np.column_stack([M @ b for b in basis])
        bordered = sparse.bmat(
            [[A, sparse.csc_matrix(MB)], [sparse.csc_matrix(MB.T), None]],
            format="csc",
        )
        full_rhs = np.concatenate([rhs_p, np.zeros(len(basis))])
    else:
        bordered = A
        full_rhs = rhs_p

    try:
        lu = splu(bordered)
    except RuntimeError as exc:
        raise NearDegenerateError(f"bordered factorization singular: {exc}")
    diag = np.abs(lu.U.diagonal())
    if diag.min() <= 1e-12 * diag.max():
        raise NearDegenerateError(
            "bordered factorization nearly singular: eigenvalue multiplicity "
            "or wrong deflation basis"
        )
    sol = lu.solve(full_rhs)
    x = sol[:n]
    residual = float(
        np.linalg.norm(A @ x - rhs_p + (MB @ sol[n:] if basis else 0.0))
        / max(np.linalg.norm(rhs_p), 1e-300)
    )
    return DeflatedSolve(x=x, removed=removed, residual=residual)
