"""Time integration of the first-order 3N system and boundary-trace tracking.

Schemes are implicit midpoint (default; A-stable, second order, conserves the
quadratic invariant of the conservative case exactly) and BDF2.  Small dense
systems go through a precomputed propagator applied by the stepping kernels;
large systems or runs with a source term use one sparse LU factorization
reused across all steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _stepping
from . import geometry as geo
from .assembly import DiscreteOperators, GeneratorBundle
from .errors import SingularSystemError, ValidationError
from .model import PhysicalParams, StateTriple

DENSE_THRESHOLD = 1500  # max state size routed to the dense propagator path

SCHEMES = ("midpoint", "bdf2")


@dataclass
class Trajectory:
    """Uniformly sampled solution of the first-order system in (u, u_t, u_tt).

    states has shape (n_samples, 3n); rows are flat StateTriples on the
    unconstrained DOFs.  dt is the integrator step, stride the sampling
    stride, so times[i] = i * stride * dt.
    """

    times: np.ndarray
    states: np.ndarray
    dt: float
    stride: int
    scheme: str
    n: int
    source_samples: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.times.size

    def state(self, i: int) -> StateTriple:
        return StateTriple.from_flat(self.states[i])

    def blocks(self):
        """Views (X1, X2, X3), each (n_samples, n)."""
        n = self.n
        return self.states[:, :n], self.states[:, n:2 * n], self.states[:, 2 * n:]


def _dense_operators(bundle: GeneratorBundle):
    return bundle.A_u.toarray(), bundle.E.toarray()


def integrate(bundle: GeneratorBundle, state0: StateTriple, T: float, dt: float,
              scheme: str = "midpoint", stride: int = 1, source=None,
              method: str = "auto") -> Trajectory:
    """Integrate E x' = A x + (0, 0, M f) from state0 over [0, T].

    source, if given, is a callable t -> free-DOF vector of nodal f values.
    method selects 'dense' (propagator + kernel) or 'sparse' (reused LU);
    'auto' picks dense for small homogeneous systems.
    """
    if scheme not in SCHEMES:
        raise ValidationError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if not (np.isfinite(dt) and dt > 0):
        raise ValidationError(f"dt must be positive, got {dt}")
    if not (np.isfinite(T) and T >= dt):
        raise ValidationError(f"need T >= dt, got T={T}, dt={dt}")
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ValidationError(f"T = {T} is not an integer multiple of dt = {dt}")
    if nsteps % stride:
        raise ValidationError(f"stride {stride} does not divide step count {nsteps}")
    if state0.n != bundle.n:
        raise ValidationError(
            f"initial state has {state0.n} DOFs, system has {bundle.n}")

    size = 3 * bundle.n
    if method == "auto":
        method = "dense" if (size <= DENSE_THRESHOLD and source is None) else "sparse"
    if method not in ("dense", "sparse"):
        raise ValidationError(f"unknown integration method {method!r}")
    if method == "dense" and source is not None:
        method = "sparse"

    x0 = state0.flat()
    if method == "dense":
        states = _run_dense(bundle, x0, dt, nsteps, stride, scheme)
    else:
        states = _run_sparse(bundle, x0, dt, nsteps, stride, scheme, source)

    times = np.arange(states.shape[0]) * (stride * dt)
    samples = None
    if source is not None:
        samples = np.stack([np.asarray(source(t), dtype=float) for t in times])
    return Trajectory(times=times, states=states, dt=dt, stride=stride,
                      scheme=scheme, n=bundle.n, source_samples=samples)


def _run_dense(bundle, x0, dt, nsteps, stride, scheme):
    A, E = _dense_operators(bundle)
    lhs = E - 0.5 * dt * A
    try:
        S = scipy.linalg.solve(lhs, E + 0.5 * dt * A)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(f"implicit step matrix is singular: {exc}") from exc
    if scheme == "midpoint":
        return _stepping.orbit_one(S, x0, nsteps, stride)
    # BDF2: one midpoint step to start, then the two-term recurrence.
    x1 = S @ x0
    W = 1.5 * E - dt * A
    SS = scipy.linalg.solve(W, np.hstack([2.0 * E, -0.5 * E]))
    n = E.shape[0]
    return _stepping.orbit_two(SS[:, :n], SS[:, n:], x0, x1, nsteps, stride)


def _run_sparse(bundle, x0, dt, nsteps, stride, scheme, source):
    A, E = bundle.A_u.tocsc(), bundle.E.tocsc()
    n = bundle.n
    Mfree = bundle.ops.M

    def srhs(t):
        if source is None:
            return None
        f = np.asarray(source(t), dtype=float)
        if f.shape != (n,):
            raise ValidationError("source callable must return one value per free DOF")
        out = np.zeros(3 * n)
        out[2 * n:] = Mfree @ f
        return out

    nsamples = nsteps // stride + 1
    out = np.empty((nsamples, 3 * n))
    out[0] = x0
    row = 1
    try:
        if scheme == "midpoint":
            lu = spla.splu(E - 0.5 * dt * A)
            R = (E + 0.5 * dt * A).tocsr()
            x = x0.copy()
            for k in range(1, nsteps + 1):
                rhs = R @ x
                fs = srhs((k - 0.5) * dt)
                if fs is not None:
                    rhs += dt * fs
                x = lu.solve(rhs)
                if k % stride == 0:
                    out[row] = x
                    row += 1
        else:
            lu_start = spla.splu(E - 0.5 * dt * A)
            rhs = (E + 0.5 * dt * A) @ x0
            fs = srhs(0.5 * dt)
            if fs is not None:
                rhs += dt * fs
            x1 = lu_start.solve(rhs)
            if stride == 1:
                out[row] = x1
                row += 1
            lu = spla.splu(1.5 * E - dt * A)
            Ecsr = E.tocsr()
            xp, xc = x0.copy(), x1
            for k in range(2, nsteps + 1):
                rhs = 2.0 * (Ecsr @ xc) - 0.5 * (Ecsr @ xp)
                fs = srhs(k * dt)
                if fs is not None:
                    rhs += dt * fs
                xp, xc = xc, lu.solve(rhs)
                if k % stride == 0:
                    out[row] = xc
                    row += 1
    except RuntimeError as exc:  # SuperLU signals singularity this way
        raise SingularSystemError(f"sparse factorization failed: {exc}") from exc
    return out[:row]


# ---------------------------------------------------------------------------
# initial-data presets


def initial_state(ops: DiscreteOperators, preset: str, mode: int = 1,
                  seed: int | None = None, amplitude: float = 1.0) -> StateTriple:
    """Presets: 'zero', 'eigenmode' (Laplacian mode k, oscillatory subspace),
    'bump' (seeded smooth Gaussian, generally incompatible at gamma0)."""
    n = ops.n
    if preset == "zero":
        return StateTriple.zero(n)
    if preset == "eigenmode":
        if mode < 1 or mode > n:
            raise ValidationError(f"eigenmode index must be in [1, {n}], got {mode}")
        mu, V = ops.laplace_eigmodes(mode)
        phi = V[:, mode - 1]
        phi = phi / np.sqrt(phi @ (ops.M @ phi))
        # u = cos(sqrt(mu) t) phi solves the undamped critical modal equation,
        # so (phi, 0, -mu phi) starts inside the purely oscillatory subspace.
        return StateTriple(amplitude * phi, np.zeros(n), -amplitude * mu[mode - 1] * phi)
    if preset == "bump":
        if seed is None:
            raise ValidationError("bump preset requires an explicit seed")
        rng = np.random.default_rng(seed)
        verts = ops.mesh.vertices
        u0_full = np.full(ops.mesh.n_vertices, float(amplitude))
        for d in range(ops.mesh.dim):
            lo, hi = verts[:, d].min(), verts[:, d].max()
            span = hi - lo
            center = lo + span * rng.uniform(0.35, 0.65)
            width = span * rng.uniform(0.25, 0.5)
            u0_full = u0_full * np.exp(-((verts[:, d] - center) / width) ** 2)
        return StateTriple(u0_full[ops.free], np.zeros(n), np.zeros(n))
    raise ValidationError(f"unknown initial-data preset {preset!r}")


# ---------------------------------------------------------------------------
# boundary traces


def gamma0_flux(ops: DiscreteOperators, u_free: np.ndarray) -> np.ndarray:
    """Nodal normal flux of a P1 field on the gamma0 DOFs.

    P1 gradients are cellwise constant; each gamma0 facet contributes its
    parent-cell flux, averaged at shared nodes with facet-measure weights.
    Returns a full vertex-length vector supported on gamma0 DOFs.
    """
    mesh = ops.mesh
    if "cell_grads" not in ops._cache:
        ops._cache["cell_grads"] = geo.cell_gradients(mesh)
    grads = ops._cache["cell_grads"]
    u_full = ops.expand(np.asarray(u_free, dtype=float))
    flux = np.zeros(mesh.n_vertices)
    weight = np.zeros(mesh.n_vertices)
    for f in ops.partition.gamma0:
        cell = mesh.facet_cells[f]
        g = grads[cell] @ u_full[mesh.cells[cell]]
        fn = float(mesh.facet_normals[f] @ g)
        w = mesh.facet_measures[f]
        for v in mesh.boundary_facets[f]:
            flux[v] += w * fn
            weight[v] += w
    nz = weight > 0
    flux[nz] /= weight[nz]
    flux[ops.dirichlet] = 0.0
    return flux


def trace_values(ops: DiscreteOperators, params: PhysicalParams,
                 u_free: np.ndarray, ut_free: np.ndarray) -> np.ndarray:
    """Nodal values of (normal flux of u) + eta * u_t on gamma0 (full-length)."""
    vals = gamma0_flux(ops, u_free)
    g0 = ops.gamma0_dofs()
    ut_full = ops.expand(np.asarray(ut_free, dtype=float))
    vals[g0] += params.eta * ut_full[g0]
    return vals


def gamma0_norm(ops: DiscreteOperators, vals_full: np.ndarray) -> float:
    """Discrete gamma0 norm sqrt(v' B v) of a full-length nodal vector."""
    return float(np.sqrt(max(vals_full @ (ops.B_full @ vals_full), 0.0)))


def check_compatibility(state0: StateTriple, ops: DiscreteOperators,
                        params: PhysicalParams) -> float:
    """gamma0 norm of flux(u0) + eta*u1; zero means compatible initial data."""
    return gamma0_norm(ops, trace_values(ops, params, state0.xi1, state0.xi2))


@dataclass
class TraceResidual:
    """Time series of the gamma0 feedback-trace norm along a trajectory."""

    times: np.ndarray
    upsilon: np.ndarray

    def fitted_rate(self, window: tuple[float, float] | None = None,
                    floor: float = 0.0) -> float:
        """Least-squares exponential rate r of upsilon ~ upsilon(0) * exp(r t)."""
        t, y = self.times, self.upsilon
        if window is not None:
            keep = (t >= window[0]) & (t <= window[1])
            t, y = t[keep], y[keep]
        keep = y > max(floor, 0.0)
        t, y = t[keep], y[keep]
        if t.size < 2:
            raise ValidationError("not enough positive trace samples to fit a rate")
        return float(np.polyfit(t, np.log(y), 1)[0])


def trace_series(traj: Trajectory, ops: DiscreteOperators,
                 params: PhysicalParams) -> TraceResidual:
    X1, X2, _ = traj.blocks()
    ups = np.empty(traj.n_samples)
    for i in range(traj.n_samples):
        ups[i] = gamma0_norm(ops, trace_values(ops, params, X1[i], X2[i]))
    return TraceResidual(times=traj.times.copy(), upsilon=ups)


# ---------------------------------------------------------------------------
# trajectory export


def write_trajectory_csv(path, traj: Trajectory, ops: DiscreteOperators) -> None:
    """CSV of t and state norms (H1 seminorms of u, u_t; L2 norm of u_tt)."""
    import csv

    X1, X2, X3 = traj.blocks()
    K, M = ops.K, ops.M
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "u_h1", "ut_h1", "utt_l2", "state_hnorm"])
        for i, t in enumerate(traj.times):
            a = np.sqrt(max(X1[i] @ (K @ X1[i]), 0.0))
            b = np.sqrt(max(X2[i] @ (K @ X2[i]), 0.0))
            c = np.sqrt(max(X3[i] @ (M @ X3[i]), 0.0))
            h = ops.hnorm(traj.state(i))
            writer.writerow([f"{v:.17g}" for v in (t, a, b, c, h)])


def write_state_dump(path, traj: Trajectory) -> None:
    """Binary dump: int64 header (state size, stride, n_samples), then times
    and the flat float64 state records."""
    with open(path, "wb") as fh:
        np.array([traj.states.shape[1], traj.stride, traj.n_samples],
                 dtype=np.int64).tofile(fh)
        np.array([traj.dt], dtype=np.float64).tofile(fh)
        traj.times.astype(np.float64).tofile(fh)
        np.ascontiguousarray(traj.states, dtype=np.float64).tofile(fh)


def read_state_dump(path):
    """Inverse of :func:`write_state_dump`: (times, states, dt, stride)."""
    with open(path, "rb") as fh:
        size, stride, nsamp = np.fromfile(fh, dtype=np.int64, count=3)
        dt = float(np.fromfile(fh, dtype=np.float64, count=1)[0])
        times = np.fromfile(fh, dtype=np.float64, count=int(nsamp))
        states = np.fromfile(fh, dtype=np.float64,
                             count=int(nsamp * size)).reshape(int(nsamp), int(size))
    return times, states, dt, int(stride)
