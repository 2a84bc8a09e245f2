"""Interval and rectangle meshes, boundary partitions and the multiplier field.

Meshes are deliberately minimal: P1-ready simplicial meshes of an interval
(a, b) or a rectangle (ax, bx) x (ay, by), the latter split structurally into
triangles.  Boundary facets carry exact outward unit normals, so the
star-shaped classification by the sign of nu.(x - x0) is exact per facet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometricConditionError, PartitionError, ValidationError

# 2-point Gauss positions on the reference facet [0, 1]; exact for cubics,
# which covers every boundary integrand used here (P1 x P1 x affine h.nu).
_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


@dataclass(frozen=True)
class MeshGeometry:
    """Simplicial mesh with an enumerated boundary.

    vertices: (nv, dim) coordinates.
    cells: (nc, dim+1) vertex indices (intervals or triangles).
    boundary_facets: (nf, dim) vertex indices (points in 1d, edges in 2d).
    facet_normals: (nf, dim) outward unit normals.
    facet_measures: (nf,) lengths (1.0 for point facets).
    facet_cells: (nf,) parent cell index of each facet.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray
    facet_normals: np.ndarray
    facet_measures: np.ndarray
    facet_cells: np.ndarray
    bounds: tuple

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_facets(self) -> int:
        return self.boundary_facets.shape[0]

    def cell_measures(self) -> np.ndarray:
        v = self.vertices[self.cells]
        if self.dim == 1:
            return np.abs(v[:, 1, 0] - v[:, 0, 0])
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def cell_centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def facet_midpoints(self) -> np.ndarray:
        return self.vertices[self.boundary_facets].mean(axis=1)

    def facet_quadrature(self):
        """Per-facet quadrature: (points (nf, q, dim), weights (nf, q)).

        1d facets are points (single node, weight 1); 2d facets use 2-point
        Gauss, exact for the cubic boundary integrands of the identities.
        """
        verts = self.vertices[self.boundary_facets]
        if self.dim == 1:
            return verts.reshape(self.n_facets, 1, 1), np.ones((self.n_facets, 1))
        a, b = verts[:, 0], verts[:, 1]
        pts = np.stack([a + s * (b - a) for s in _GAUSS2], axis=1)
        w = 0.5 * self.facet_measures[:, None] * np.ones((1, 2))
        return pts, w

    def facet_shape_values(self):
        """P1 shape function values of the facet vertices at the facet quadrature."""
        if self.dim == 1:
            return np.ones((self.n_facets, 1, 1))
        vals = np.array([[1.0 - s, s] for s in _GAUSS2])  # (q, 2)
        return np.broadcast_to(vals, (self.n_facets, 2, 2)).copy()


def build_mesh(kind: str, bounds, resolution) -> MeshGeometry:
    """Dispatch on domain kind: 'interval' (a, b) or 'rectangle' (ax, bx, ay, by)."""
    if kind == "interval":
        a, b = bounds
        (n,) = np.atleast_1d(resolution)
        return build_interval(a, b, int(n))
    if kind == "rectangle":
        ax, bx, ay, by = bounds
        res = np.atleast_1d(resolution)
        nx = int(res[0])
        ny = int(res[1]) if res.size > 1 else nx
        return build_rectangle(ax, bx, ay, by, nx, ny)
    raise ValidationError(f"unknown domain kind {kind!r}")


def build_interval(a: float, b: float, n_cells: int) -> MeshGeometry:
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise ValidationError(f"degenerate interval ({a}, {b})")
    if n_cells < 2:
        raise ValidationError(f"resolution must be >= 2 cells, got {n_cells}")
    x = np.linspace(a, b, n_cells + 1)
    cells = np.stack([np.arange(n_cells), np.arange(1, n_cells + 1)], axis=1)
    facets = np.array([[0], [n_cells]])
    normals = np.array([[-1.0], [1.0]])
    return MeshGeometry(
        dim=1,
        vertices=x.reshape(-1, 1),
        cells=cells,
        boundary_facets=facets,
        facet_normals=normals,
        facet_measures=np.ones(2),
        facet_cells=np.array([0, n_cells - 1]),
        bounds=(a, b),
    )


def build_rectangle(ax, bx, ay, by, nx: int, ny: int) -> MeshGeometry:
    if not all(np.isfinite(v) for v in (ax, bx, ay, by)) or ax >= bx or ay >= by:
        raise ValidationError(f"degenerate rectangle ({ax},{bx})x({ay},{by})")
    if nx < 2 or ny < 2:
        raise ValidationError(f"resolution must be >= 2 cells per direction, got {nx}x{ny}")
    xs = np.linspace(ax, bx, nx + 1)
    ys = np.linspace(ay, by, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return i * (ny + 1) + j

    cells = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            # lower-left / upper-right split, counterclockwise orientation
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    cells = np.array(cells, dtype=int)

    facets, normals, measures, parents = [], [], [], []

    def cell_index(i, j, upper):
        return 2 * (i * ny + j) + (1 if upper else 0)

    hx = (bx - ax) / nx
    hy = (by - ay) / ny
    for i in range(nx):
        facets.append((vid(i, 0), vid(i + 1, 0)))          # bottom edge, lower triangle
        normals.append((0.0, -1.0))
        measures.append(hx)
        parents.append(cell_index(i, 0, upper=False))
        facets.append((vid(i, ny), vid(i + 1, ny)))        # top edge, upper triangle
        normals.append((0.0, 1.0))
        measures.append(hx)
        parents.append(cell_index(i, ny - 1, upper=True))
    for j in range(ny):
        facets.append((vid(0, j), vid(0, j + 1)))          # left edge, upper triangle
        normals.append((-1.0, 0.0))
        measures.append(hy)
        parents.append(cell_index(0, j, upper=True))
        facets.append((vid(nx, j), vid(nx, j + 1)))        # right edge, lower triangle
        normals.append((1.0, 0.0))
        measures.append(hy)
        parents.append(cell_index(nx - 1, j, upper=False))

    return MeshGeometry(
        dim=2,
        vertices=vertices,
        cells=cells,
        boundary_facets=np.array(facets, dtype=int),
        facet_normals=np.array(normals),
        facet_measures=np.array(measures),
        facet_cells=np.array(parents, dtype=int),
        bounds=(ax, bx, ay, by),
    )


def eval_h(x, x0) -> np.ndarray:
    """Multiplier field h(x) = x - x0 (vector-valued)."""
    return np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)


def div_h(dim: int) -> float:
    """div h = n for h(x) = x - x0 in n dimensions."""
    return float(dim)


def distance_outside(mesh: MeshGeometry, x0) -> float:
    """Euclidean distance from x0 to the closed domain (0 if inside)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != mesh.dim:
        raise ValidationError(f"x0 has dimension {x0.size}, mesh is {mesh.dim}d")
    if mesh.dim == 1:
        a, b = mesh.bounds
        return max(a - x0[0], x0[0] - b, 0.0)
    ax, bx, ay, by = mesh.bounds
    dx = max(ax - x0[0], x0[0] - bx, 0.0)
    dy = max(ay - x0[1], x0[1] - by, 0.0)
    return float(np.hypot(dx, dy))


@dataclass(frozen=True)
class BoundaryPartition:
    """Facet index sets: gamma0 (feedback/Robin) and gamma1 (clamped/Dirichlet).

    x0 is the multiplier origin when the split comes from the star-shaped
    condition; explicit partitions (e.g. all-Dirichlet oracle configurations)
    carry x0 = None.
    """

    gamma0: np.ndarray
    gamma1: np.ndarray
    x0: np.ndarray | None

    def __post_init__(self):
        g0 = np.asarray(self.gamma0, dtype=int)
        g1 = np.asarray(self.gamma1, dtype=int)
        object.__setattr__(self, "gamma0", g0)
        object.__setattr__(self, "gamma1", g1)
        if np.intersect1d(g0, g1).size:
            raise PartitionError("gamma0 and gamma1 overlap")


def partition_boundary(mesh: MeshGeometry, x0) -> BoundaryPartition:
    """Split the boundary by the sign of nu.(midpoint - x0) (strict > 0 on gamma0).

    x0 must lie strictly outside the closed domain; both parts must be
    nonempty, otherwise the configuration cannot support the star-shaped
    stabilization setup.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dist = distance_outside(mesh, x0)
    if dist <= 1e-12:
        raise GeometricConditionError(
            f"x0 = {x0.tolist()} is not strictly outside the closed domain "
            f"(distance {dist:.3g})")
    mids = mesh.facet_midpoints()
    hn = np.einsum("fd,fd->f", mesh.facet_normals, mids - x0)
    gamma0 = np.flatnonzero(hn > 0)
    gamma1 = np.flatnonzero(hn <= 0)
    if gamma0.size == 0 or gamma1.size == 0:
        raise PartitionError(
            f"star-shaped split is degenerate for x0 = {x0.tolist()}: "
            f"|gamma0| = {gamma0.size}, |gamma1| = {gamma1.size}")
    part = BoundaryPartition(gamma0=gamma0, gamma1=gamma1, x0=x0)
    ok, detail = partition_sign_report(mesh, part)
    if not ok:
        raise PartitionError(f"facet midpoint classification inconsistent: {detail}")
    return part


def dirichlet_partition(mesh: MeshGeometry) -> BoundaryPartition:
    """Explicit all-Dirichlet partition (gamma0 empty) for oracle configurations."""
    return BoundaryPartition(gamma0=np.array([], dtype=int),
                             gamma1=np.arange(mesh.n_facets), x0=None)


def partition_from_facets(mesh: MeshGeometry, gamma0, x0=None) -> BoundaryPartition:
    """Explicit partition from a gamma0 facet index list; the rest is gamma1."""
    gamma0 = np.asarray(gamma0, dtype=int)
    mask = np.zeros(mesh.n_facets, dtype=bool)
    mask[gamma0] = True
    return BoundaryPartition(gamma0=np.flatnonzero(mask),
                             gamma1=np.flatnonzero(~mask),
                             x0=None if x0 is None else np.atleast_1d(np.asarray(x0, float)))


def partition_sign_report(mesh: MeshGeometry, part: BoundaryPartition,
                          n_points: int = 3):
    """Re-check nu.h at n_points per facet: > 0 on gamma0, <= 0 on gamma1."""
    if part.x0 is None:
        return False, "partition has no x0"
    verts = mesh.vertices[mesh.boundary_facets]
    bad = []
    for label, idx, want_positive in (("gamma0", part.gamma0, True),
                                      ("gamma1", part.gamma1, False)):
        for f in idx:
            for s in np.linspace(0.0, 1.0, n_points):
                if mesh.dim == 1:
                    x = verts[f, 0]
                else:
                    x = (1 - s) * verts[f, 0] + s * verts[f, 1]
                hn = float(np.dot(mesh.facet_normals[f], eval_h(x, part.x0)))
                if want_positive and hn <= 0:
                    bad.append((label, int(f), hn))
                elif not want_positive and hn > 0:
                    bad.append((label, int(f), hn))
    if bad:
        return False, f"{len(bad)} sign violations, first: {bad[0]}"
    return True, f"signs consistent at {n_points} points per facet"


def max_h_norm(mesh: MeshGeometry, x0) -> float:
    """max over the closed domain of |x - x0|; attained at a vertex (corner)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return float(np.linalg.norm(mesh.vertices - x0, axis=1).max())


def cell_gradients(mesh: MeshGeometry) -> np.ndarray:
    """P1 shape-function gradients per cell, shape (nc, dim, dim+1).

    grad(u)|_cell = G[cell] @ u[cell_vertices]; constant per cell.
    """
    v = mesh.vertices[mesh.cells]
    if mesh.dim == 1:
        h = (v[:, 1, 0] - v[:, 0, 0])[:, None]
        grads = np.empty((mesh.n_cells, 1, 2))
        grads[:, 0, 0] = -1.0
        grads[:, 0, 1] = 1.0
        return grads / h[:, None]
    p0, p1, p2 = v[:, 0], v[:, 1], v[:, 2]
    det = ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
           - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
    grads = np.empty((mesh.n_cells, 2, 3))
    grads[:, 0, 0] = p1[:, 1] - p2[:, 1]
    grads[:, 1, 0] = p2[:, 0] - p1[:, 0]
    grads[:, 0, 1] = p2[:, 1] - p0[:, 1]
    grads[:, 1, 1] = p0[:, 0] - p2[:, 0]
    grads[:, 0, 2] = p0[:, 1] - p1[:, 1]
    grads[:, 1, 2] = p1[:, 0] - p0[:, 0]
    return grads / det[:, None, None]


def cell_quadrature(mesh: MeshGeometry):
    """Cellwise quadrature exact for quadratics: (shape (q, nodes), pts, weights).

    1d: 2-point Gauss; 2d: edge-midpoint rule.  pts has shape (nc, q, dim),
    weights (nc, q); shape values are the same on every cell.
    """
    v = mesh.vertices[mesh.cells]
    meas = mesh.cell_measures()
    if mesh.dim == 1:
        shape = np.array([[1.0 - s, s] for s in _GAUSS2])
        pts = np.einsum("qn,cnd->cqd", shape, v)
        w = 0.5 * meas[:, None] * np.ones((1, 2))
        return shape, pts, w
    bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    pts = np.einsum("qn,cnd->cqd", bary, v)
    w = meas[:, None] / 3.0 * np.ones((1, 3))
    return bary, pts, w


def dirichlet_vertices(mesh: MeshGeometry, part: BoundaryPartition) -> np.ndarray:
    """Vertices lying on any gamma1 facet (essential BC wins at corners)."""
    if part.gamma1.size == 0:
        return np.array([], dtype=int)
    return np.unique(mesh.boundary_facets[part.gamma1].ravel())


def dump_mesh(mesh: MeshGeometry, path) -> None:
    """Plain-text vertex / cell / facet listing for debugging."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim {mesh.dim}\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for v in mesh.vertices:
            fh.write(" ".join(f"{x:.17g}" for x in v) + "\n")
        fh.write(f"cells {mesh.n_cells}\n")
        for c in mesh.cells:
            fh.write(" ".join(str(i) for i in c) + "\n")
        fh.write(f"boundary_facets {mesh.n_facets}\n")
        for f, nrm in zip(mesh.boundary_facets, mesh.facet_normals):
            fh.write(" ".join(str(i) for i in f) + "  normal "
                     + " ".join(f"{x:.17g}" for x in nrm) + "\n")
