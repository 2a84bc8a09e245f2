"""P1 finite element assembly and the discrete semigroup generators.

Conventions.  The semi-discrete weak form of the model is

    tau*M u''' + (Ma + b*eta*B) u'' + (b*K + c^2*eta*B) u' + c^2*K u = M f

where M, K are the mass/stiffness matrices on the unconstrained DOFs
(Dirichlet DOFs on gamma1 eliminated), B the boundary mass matrix assembled
over gamma0 only, and Ma, Mg the alpha- and gamma-weighted mass matrices.
The Robin feedback enters exclusively through the eta*B terms (natural BC
absorption); the abstract flux composite is never formed, but its discrete
mirror is available through :func:`discrete_neumann_map` for verification.

All first-order generators are kept in mass-weighted form E x' = A x with
E = blockdiag(I, I, tau*M); dense generators E^{-1} A are materialized on
demand for eigen/conjugacy work.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import geometry as geo
from .errors import SingularSystemError, ValidationError
from .model import PhysicalParams, StateTriple

__all__ = [
    "DiscreteOperators", "GeneratorBundle", "assemble_fem",
    "build_generator_u", "build_generator_z", "build_generators",
    "discrete_neumann_map", "neumann_trace_adjoint", "write_coo",
]


def _element_matrices_1d(mesh):
    h = mesh.cell_measures()
    ke = np.array([[1.0, -1.0], [-1.0, 1.0]])
    me = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    return ke[None, :, :] / h[:, None, None], me[None, :, :] * h[:, None, None]


def _element_matrices_2d(mesh):
    grads = geo.cell_gradients(mesh)          # (nc, 2, 3)
    area = mesh.cell_measures()
    ke = np.einsum("cdi,cdj->cij", grads, grads) * area[:, None, None]
    me_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = me_ref[None, :, :] * area[:, None, None]
    return ke, me


def _scatter(mesh, local):
    """Scatter per-cell local matrices (nc, k, k) into a CSR matrix."""
    conn = mesh.cells
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).ravel()
    cols = np.tile(conn, (1, k)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(mesh.n_vertices, mesh.n_vertices))
    return mat.tocsr()


def _boundary_mass(mesh, facet_idx):
    nv = mesh.n_vertices
    if facet_idx.size == 0:
        return sp.csr_matrix((nv, nv))
    conn = mesh.boundary_facets[facet_idx]
    if mesh.dim == 1:
        data = np.ones(facet_idx.size)
        idx = conn[:, 0]
        return sp.coo_matrix((data, (idx, idx)), shape=(nv, nv)).tocsr()
    L = mesh.facet_measures[facet_idx]
    be = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    local = be[None, :, :] * L[:, None, None]
    rows = np.repeat(conn, 2, axis=1).ravel()
    cols = np.tile(conn, (1, 2)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()


@dataclass
class DiscreteOperators:
    """Assembled FEM matrices for one mesh/partition/parameter triple.

    Full (all-vertex) matrices are kept alongside the free-DOF restrictions:
    the full ones feed trace/flux evaluations, the restrictions feed the
    generators.  ``gram`` is the phase-space metric blockdiag(K, b*K, tau*M).
    """

    mesh: geo.MeshGeometry
    partition: geo.BoundaryPartition
    params: PhysicalParams
    free: np.ndarray
    dirichlet: np.ndarray
    M_full: sp.csr_matrix
    K_full: sp.csr_matrix
    B_full: sp.csr_matrix
    Malpha_full: sp.csr_matrix
    Mgamma_full: sp.csr_matrix
    M: sp.csr_matrix
    K: sp.csr_matrix
    B: sp.csr_matrix
    Malpha: sp.csr_matrix
    Mgamma: sp.csr_matrix
    gram: sp.csr_matrix
    alpha_cells: np.ndarray
    gamma_cells: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.free.size

    def expand(self, v: np.ndarray) -> np.ndarray:
        """Free-DOF vector -> full vertex vector (zeros on Dirichlet DOFs)."""
        full = np.zeros(self.mesh.n_vertices)
        full[self.free] = v
        return full

    def restrict(self, v_full: np.ndarray) -> np.ndarray:
        return np.asarray(v_full)[self.free]

    def gamma0_dofs(self) -> np.ndarray:
        """Unconstrained DOFs lying on gamma0 facets."""
        if self.partition.gamma0.size == 0:
            return np.array([], dtype=int)
        on_g0 = np.unique(self.mesh.boundary_facets[self.partition.gamma0].ravel())
        return np.setdiff1d(on_g0, self.dirichlet)

    def hnorm(self, state: StateTriple) -> float:
        """Phase-space norm sqrt(x1'K x1 + b x2'K x2 + tau x3'M x3)."""
        p = self.params
        return float(np.sqrt(state.xi1 @ (self.K @ state.xi1)
                             + p.b * (state.xi2 @ (self.K @ state.xi2))
                             + p.tau * (state.xi3 @ (self.M @ state.xi3))))

    def laplace_eigmodes(self, k: int | None = None):
        """Eigenpairs of K v = mu M v on the free DOFs, ascending mu.

        Dense below ~900 DOFs (and whenever the full spectrum is wanted);
        shift-invert Lanczos for a few low modes of a large mesh.
        """
        key = "laplace_eig"
        if key in self._cache:
            mu, V = self._cache[key]
            if k is None or k <= mu.size:
                return (mu, V) if k is None else (mu[:k], V[:, :k])
        if k is None or self.n <= 900:
            mu, V = scipy.linalg.eigh(self.K.toarray(), self.M.toarray())
            self._cache[key] = (mu, V)
            return (mu, V) if k is None else (mu[:k], V[:, :k])
        mu, V = sp.linalg.eigsh(self.K, k=k, M=self.M, sigma=0.0, which="LM")
        order = np.argsort(mu)
        return mu[order], V[:, order]


def assemble_fem(mesh: geo.MeshGeometry, partition: geo.BoundaryPartition,
                 params: PhysicalParams) -> DiscreteOperators:
    """Assemble P1 mass/stiffness/boundary matrices and the phase-space metric.

    gamma1 must be nonempty: the stiffness matrix restricted to the free DOFs
    is SPD only when at least one Dirichlet facet pins the constant mode.
    """
    if partition.gamma1.size == 0:
        raise SingularSystemError(
            "empty gamma1: stiffness matrix is singular without a Dirichlet part")

    if mesh.dim == 1:
        ke, me = _element_matrices_1d(mesh)
    else:
        ke, me = _element_matrices_2d(mesh)

    alpha_cells = params.alpha_cells(mesh)
    gamma_cells = alpha_cells - params.gamma_shift

    K_full = _scatter(mesh, ke)
    M_full = _scatter(mesh, me)
    Malpha_full = _scatter(mesh, me * alpha_cells[:, None, None])
    Mgamma_full = _scatter(mesh, me * gamma_cells[:, None, None])
    B_full = _boundary_mass(mesh, partition.gamma0)

    dirichlet = geo.dirichlet_vertices(mesh, partition)
    free = np.setdiff1d(np.arange(mesh.n_vertices), dirichlet)

    def cut(A):
        return A[free][:, free].tocsr()

    M = cut(M_full)
    K = cut(K_full)
    B = cut(B_full)
    Malpha = cut(Malpha_full)
    Mgamma = cut(Mgamma_full)
    gram = sp.block_diag([K, params.b * K, params.tau * M]).tocsr()

    return DiscreteOperators(
        mesh=mesh, partition=partition, params=params,
        free=free, dirichlet=dirichlet,
        M_full=M_full, K_full=K_full, B_full=B_full,
        Malpha_full=Malpha_full, Mgamma_full=Mgamma_full,
        M=M, K=K, B=B, Malpha=Malpha, Mgamma=Mgamma,
        gram=gram, alpha_cells=alpha_cells, gamma_cells=gamma_cells)


def _mass_weight(ops: DiscreteOperators) -> sp.csr_matrix:
    n = ops.n
    eye = sp.identity(n, format="csr")
    return sp.block_diag([eye, eye, ops.params.tau * ops.M]).tocsr()


def build_generator_u(ops: DiscreteOperators, params: PhysicalParams):
    """Mass-weighted first-order system E x' = A x in (u, u_t, u_tt).

    Third block row is the weak form quoted in the module docstring; the
    Robin feedback appears only through eta*B.
    """
    n = ops.n
    eye = sp.identity(n, format="csr")
    c2, b, eta = params.c**2, params.b, params.eta
    A = sp.bmat([
        [None, eye, None],
        [None, None, eye],
        [-c2 * ops.K, -(b * ops.K + c2 * eta * ops.B), -(ops.Malpha + b * eta * ops.B)],
    ]).tocsr()
    return A, _mass_weight(ops)


def build_generator_z(ops: DiscreteOperators, params: PhysicalParams):
    """Generators in (u, z, z_t) variables: full A_z, dissipative A_zd, bounded A_p.

    All three share the weighting E = blockdiag(I, I, tau*M).  A_z comes from
    the z-equation tau*M z_t' = -Mg*(x3 - q*x2 + q^2*x1) - b*K x2 - b*eta*B x3
    with q = c^2/b; A_zd and A_p are assembled independently from their own
    formulas (third rows scaled by 1/tau so that A_p stays a bounded,
    mass-type perturbation), which makes A_zd + A_p = A_z a real consistency
    check rather than a definition.
    """
    n = ops.n
    eye = sp.identity(n, format="csr")
    q = params.c2_over_b
    b, eta = params.b, params.eta
    Mg = ops.Mgamma

    A_z = sp.bmat([
        [-q * eye, eye, None],
        [None, None, eye],
        [-q**2 * Mg, q * Mg - b * ops.K, -(Mg + b * eta * ops.B)],
    ]).tocsr()

    A_zd = sp.bmat([
        [-q * eye, None, None],
        [None, None, eye],
        [None, -b * ops.K, -(ops.M + b * eta * ops.B)],
    ]).tocsr()

    zero = sp.csr_matrix((n, n))
    A_p = sp.bmat([
        [None, eye, None],
        [zero, None, None],
        [-q**2 * Mg, q * Mg, ops.M - Mg],
    ]).tocsr()

    return A_z, A_zd, A_p, _mass_weight(ops)


def mixing_matrices(ops: DiscreteOperators, params: PhysicalParams):
    """Block state isomorphism between u- and z-variables and its exact inverse."""
    n = ops.n
    eye = sp.identity(n, format="csr")
    q = params.c2_over_b
    miso = sp.bmat([[eye, None, None],
                    [q * eye, eye, None],
                    [None, q * eye, eye]]).tocsr()
    miso_inv = sp.bmat([[eye, None, None],
                        [-q * eye, eye, None],
                        [q**2 * eye, -q * eye, eye]]).tocsr()
    return miso, miso_inv


@dataclass
class GeneratorBundle:
    """Sparse generators plus the state isomorphism, with dense materialization."""

    ops: DiscreteOperators
    params: PhysicalParams
    A_u: sp.csr_matrix
    A_z: sp.csr_matrix
    A_zd: sp.csr_matrix
    A_p: sp.csr_matrix
    E: sp.csr_matrix
    miso: sp.csr_matrix
    miso_inv: sp.csr_matrix
    _dense: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.ops.n

    def sparse(self, which: str) -> sp.csr_matrix:
        try:
            return {"u": self.A_u, "z": self.A_z, "zd": self.A_zd, "p": self.A_p}[which]
        except KeyError:
            raise ValidationError(f"unknown generator tag {which!r}") from None

    def dense(self, which: str) -> np.ndarray:
        """Dense generator E^{-1} A; only the third block needs a mass solve."""
        if which not in self._dense:
            A = self.sparse(which).toarray()
            n = self.n
            tauM = (self.params.tau * self.ops.M).toarray()
            A[2 * n:] = scipy.linalg.solve(tauM, A[2 * n:], assume_a="pos")
            self._dense[which] = A
        return self._dense[which]

    def gram_dense(self) -> np.ndarray:
        if "gram" not in self._dense:
            self._dense["gram"] = self.ops.gram.toarray()
        return self._dense["gram"]

    def gram_times_gen(self, which: str) -> sp.csr_matrix:
        """Gram @ E^{-1} A without any inversion.

        With gram = blockdiag(K, bK, tau*M) and E = blockdiag(I, I, tau*M) the
        product collapses to blockdiag(K, bK, I) @ A, exactly.
        """
        p = self.params
        n = self.n
        W = sp.block_diag([self.ops.K, p.b * self.ops.K,
                           sp.identity(n, format="csr")]).tocsr()
        return (W @ self.sparse(which)).tocsr()


def build_generators(ops: DiscreteOperators,
                     params: PhysicalParams | None = None) -> GeneratorBundle:
    params = params or ops.params
    A_u, E = build_generator_u(ops, params)
    A_z, A_zd, A_p, _ = build_generator_z(ops, params)
    miso, miso_inv = mixing_matrices(ops, params)
    return GeneratorBundle(ops=ops, params=params, A_u=A_u, A_z=A_z,
                           A_zd=A_zd, A_p=A_p, E=E, miso=miso, miso_inv=miso_inv)


def discrete_neumann_map(ops: DiscreteOperators, flux_full: np.ndarray) -> np.ndarray:
    """Harmonic extension of gamma0 flux data: solve K psi = B phi.

    ``flux_full`` is a full vertex-length vector supported on gamma0 DOFs
    (values elsewhere must vanish).  Returns the full extension vector,
    zero on the Dirichlet set.
    """
    flux_full = np.asarray(flux_full, dtype=float)
    if flux_full.shape != (ops.mesh.n_vertices,):
        raise ValidationError("flux vector must have one entry per mesh vertex")
    g0 = ops.gamma0_dofs()
    mask = np.ones(ops.mesh.n_vertices, dtype=bool)
    mask[g0] = False
    if np.any(flux_full[mask] != 0.0):
        raise ValidationError("flux data must be supported on gamma0 DOFs")
    rhs = (ops.B_full @ flux_full)[ops.free]
    psi = sp.linalg.spsolve(ops.K.tocsc(), rhs)
    return ops.expand(np.atleast_1d(psi))


def neumann_trace_adjoint(ops: DiscreteOperators, w_full: np.ndarray) -> np.ndarray:
    """gamma0 trace of the adjoint composite applied to an interior field w.

    Solves K v = M w on the free DOFs and returns v restricted to the gamma0
    DOFs; by construction this is the unique function whose gamma0 inner
    products against test traces match (w, N phi) for every flux phi.
    """
    w_full = np.asarray(w_full, dtype=float)
    rhs = (ops.M_full @ w_full)[ops.free]
    v = sp.linalg.spsolve(ops.K.tocsc(), rhs)
    return ops.expand(np.atleast_1d(v))[ops.gamma0_dofs()]


def write_coo(path, mat) -> None:
    """Coordinate-format text dump: one 'row col value' line per stored entry."""
    coo = sp.coo_matrix(mat)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
