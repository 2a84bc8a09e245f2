"""Energies, multiplier-identity residuals, decay rates and spectral checks.

Quadratic energies on a state (u, u_t, u_tt) with z = u_t + (c^2/b) u:

    E1 = (b/2) z'Kz + (tau/2) z_t'M z_t + (c^2/2b) u_t'Mg u_t
    E0 = (1/2) u_t'Ma u_t + (c^2/2) u'Ku,     E = E0 + E1

The identity evaluators reproduce both sides of the energy balance ('e1id'),
the z-multiplier identity ('zmul') and the h.grad(z) multiplier identity.
The last comes in two variants, reported side by side: 'hzmult' evaluates the
classical statement verbatim (boundary term (b+1) * int |z_t|^2 h.nu, no
explicit eta), 'hzmult_robin' the form rederived from the z-equation with the
Robin condition dz/dnu = -eta z_t inserted, tau kept general, and the gamma1
flux term retained.  The first is a hypothesis under measurement, the second
is the one expected to converge under refinement.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from . import geometry as geo
from .assembly import DiscreteOperators, GeneratorBundle
from .errors import (EigensolverError, FitWindowError, SingularSystemError,
                     ValidationError)
from .evolution import Trajectory
from .model import PhysicalParams, StateTriple, ZStateTriple, to_z_state

IDENTITIES = ("e1id", "zmul", "hzmult", "hzmult_robin")


_DENSE_FORM_LIMIT = 1200  # below this, quadratic forms run on dense BLAS


def _form_matrix(ops, name):
    """Matrix used in rowwise quadratic forms; densified and cached when small."""
    A = getattr(ops, name)
    if A.shape[0] > _DENSE_FORM_LIMIT:
        return A
    key = f"dense_{name}"
    if key not in ops._cache:
        ops._cache[key] = A.toarray()
    return ops._cache[key]


def _quad_rows(A, X):
    """Row-wise quadratic forms x_i' A x_i (A symmetric), X of shape (ns, n)."""
    X = np.asarray(X)
    if isinstance(A, np.ndarray):
        return np.einsum("ij,ij->i", X, X @ A)
    XT = np.ascontiguousarray(X.T)
    return np.einsum("is,is->s", XT, A @ XT)


def _bilin_rows(A, X, Y):
    """Row-wise bilinear forms x_i' A y_i (A symmetric)."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if isinstance(A, np.ndarray):
        return np.einsum("ij,ij->i", X, Y @ A)
    XT = np.ascontiguousarray(X.T)
    YT = np.ascontiguousarray(Y.T)
    return np.einsum("is,is->s", XT, A @ YT)


# ---------------------------------------------------------------------------
# energies


@dataclass
class EnergyReport:
    """Per-sample energy decomposition along a trajectory."""

    times: np.ndarray
    E0: np.ndarray
    E1: np.ndarray
    E: np.ndarray
    sigma: np.ndarray
    boundary_dissipation: np.ndarray   # b*eta*|z_t|^2 on gamma0
    interior_dissipation: np.ndarray   # |gamma^(1/2) u_tt|^2


def energy(state: StateTriple, ops: DiscreteOperators,
           params: PhysicalParams) -> tuple[float, float, float]:
    """(E0, E1, E) of a single state."""
    rep = energy_series_arrays(state.xi1[None, :], state.xi2[None, :],
                               state.xi3[None, :], ops, params)
    return float(rep[0][0]), float(rep[1][0]), float(rep[0][0] + rep[1][0])


def energy_series_arrays(X1, X2, X3, ops, params):
    q = params.c2_over_b
    Z = X2 + q * X1
    Zt = X3 + q * X2
    K = _form_matrix(ops, "K")
    M = _form_matrix(ops, "M")
    Mg = _form_matrix(ops, "Mgamma")
    Ma = _form_matrix(ops, "Malpha")
    E1 = (0.5 * params.b * _quad_rows(K, Z)
          + 0.5 * params.tau * _quad_rows(M, Zt)
          + 0.5 * q * _quad_rows(Mg, X2))
    E0 = 0.5 * _quad_rows(Ma, X2) + 0.5 * params.c**2 * _quad_rows(K, X1)
    return E0, E1, Z, Zt


def energy_series(traj: Trajectory, ops: DiscreteOperators,
                  params: PhysicalParams) -> EnergyReport:
    X1, X2, X3 = traj.blocks()
    q = params.c2_over_b
    E0, E1, Z, Zt = energy_series_arrays(X1, X2, X3, ops, params)
    bdiss = params.b * params.eta * _quad_rows(_form_matrix(ops, "B"), Zt)
    idiss = _quad_rows(_form_matrix(ops, "Mgamma"), X3)
    W = Z - q * X1
    K = _form_matrix(ops, "K")
    sig = (0.5 * params.c**2 * _quad_rows(K, X1)
           + 0.5 * _quad_rows(_form_matrix(ops, "Malpha"), W)
           + 0.5 * q * _quad_rows(_form_matrix(ops, "Mgamma"), W)
           + 0.5 * params.b * _quad_rows(K, Z)
           + 0.5 * params.tau * _quad_rows(_form_matrix(ops, "M"), Zt))
    # all six series are PSD quadratic forms; clamp the roundoff negatives
    E0, E1, sig, bdiss, idiss = (np.maximum(v, 0.0)
                                 for v in (E0, E1, sig, bdiss, idiss))
    return EnergyReport(times=traj.times.copy(), E0=E0, E1=E1, E=E0 + E1,
                        sigma=sig, boundary_dissipation=bdiss,
                        interior_dissipation=idiss)


def sigma_functional(zstate: ZStateTriple, ops: DiscreteOperators,
                     params: PhysicalParams) -> float:
    """Energy functional on z-variables; sigma(M Phi) = E0(Phi) + E1(Phi)."""
    q = params.c2_over_b
    w = zstate.xi2 - q * zstate.xi1
    return float(0.5 * params.c**2 * (zstate.xi1 @ (ops.K @ zstate.xi1))
                 + 0.5 * (w @ (ops.Malpha @ w))
                 + 0.5 * q * (w @ (ops.Mgamma @ w))
                 + 0.5 * params.b * (zstate.xi2 @ (ops.K @ zstate.xi2))
                 + 0.5 * params.tau * (zstate.xi3 @ (ops.M @ zstate.xi3)))


# ---------------------------------------------------------------------------
# boundary / multiplier functionals


class _MultiplierWork:
    """Precomputed facet and cell quadrature data for the h.grad(z) identity."""

    def __init__(self, ops: DiscreteOperators, x0):
        mesh = ops.mesh
        if x0 is None:
            raise ValidationError("h-multiplier identity needs the origin x0")
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        self.ops = ops
        self.grads = geo.cell_gradients(mesh)

        pts, w = mesh.facet_quadrature()
        shp = mesh.facet_shape_values()
        hnu = np.einsum("fd,fqd->fq", mesh.facet_normals, pts - x0)
        self.facet = {}
        for label, idx in (("g0", ops.partition.gamma0),
                           ("g1", ops.partition.gamma1)):
            self.facet[label] = dict(
                idx=idx,
                conn=mesh.boundary_facets[idx],
                w=w[idx],
                shp=shp[idx],
                hnu=hnu[idx],
                h=pts[idx] - x0,
                normals=mesh.facet_normals[idx],
                parents=mesh.facet_cells[idx],
            )

        cshp, cpts, cw = geo.cell_quadrature(mesh)
        self.cell_shp = cshp          # (q, nodes)
        self.cell_w = cw              # (nc, q)
        self.cell_h = cpts - x0       # (nc, q, dim)
        self.conn = mesh.cells

    def _facet_nodal(self, label, full_rows):
        """Values of a P1 field at facet quadrature points, (ns, nf, q)."""
        d = self.facet[label]
        return np.einsum("sfn,fqn->sfq", full_rows[:, d["conn"]], d["shp"])

    def _facet_grads(self, label, full_rows):
        """Parent-cell gradients per facet, (ns, nf, dim)."""
        d = self.facet[label]
        cells = self.conn[d["parents"]]
        return np.einsum("fdn,sfn->sfd", self.grads[d["parents"]], full_rows[:, cells])

    def bdry_sq_hnu(self, label, full_rows):
        """int |v|^2 h.nu over a boundary part, per sample."""
        d = self.facet[label]
        vals = self._facet_nodal(label, full_rows)
        return np.einsum("sfq,fq,fq->s", vals**2, d["hnu"], d["w"])

    def bdry_gradsq_hnu(self, label, full_rows):
        """int |grad v|^2 h.nu (cellwise gradient), per sample."""
        d = self.facet[label]
        g2 = (self._facet_grads(label, full_rows) ** 2).sum(axis=2)
        return np.einsum("sf,fq,fq->s", g2, d["hnu"], d["w"])

    def bdry_fluxsq_hnu(self, label, full_rows):
        """int |dv/dnu|^2 h.nu (cellwise gradient), per sample."""
        d = self.facet[label]
        flux = np.einsum("sfd,fd->sf", self._facet_grads(label, full_rows),
                         d["normals"])
        return np.einsum("sf,fq,fq->s", flux**2, d["hnu"], d["w"])

    def bdry_v_hgradw(self, label, v_rows, w_rows):
        """int v * (h . grad w) over a boundary part, per sample."""
        d = self.facet[label]
        vals = self._facet_nodal(label, v_rows)
        gw = self._facet_grads(label, w_rows)
        hg = np.einsum("fqd,sfd->sfq", d["h"], gw)
        return np.einsum("sfq,sfq,fq->s", vals, hg, d["w"])

    def cell_v_hgradw(self, v_rows, w_rows, cell_weight=None):
        """int [c(x)] v * (h . grad w) over the domain, per sample.

        cell_weight is an optional per-cell coefficient (e.g. gamma).
        """
        vq = np.einsum("scn,qn->scq", v_rows[:, self.conn], self.cell_shp)
        gw = np.einsum("cdn,scn->scd", self.grads, w_rows[:, self.conn])
        hg = np.einsum("cqd,scd->scq", self.cell_h, gw)
        w = self.cell_w if cell_weight is None else self.cell_w * cell_weight[:, None]
        return np.einsum("scq,scq,cq->s", vq, hg, w)


@dataclass
class IdentityResidual:
    """Both sides of one integral identity along a trajectory.

    residual is max |lhs - rhs| normalized by the total energy at the start
    of the window.
    """

    which: str
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: float


def identity_residual(traj: Trajectory, which: str, ops: DiscreteOperators,
                      params: PhysicalParams, x0=None) -> IdentityResidual:
    """Evaluate one identity on [s, T] with s = traj.times[0].

    Time integrals use the trapezoid rule on the sample grid; boundary
    integrals use the facet Gauss rule; h.grad(z) volume terms use the
    quadratic-exact cell rule.
    """
    if which not in IDENTITIES:
        raise ValidationError(f"unknown identity tag {which!r}; expected one of {IDENTITIES}")

    p = params
    q = p.c2_over_b
    t = traj.times
    X1, X2, X3 = traj.blocks()
    E0, E1, Z, Zt = energy_series_arrays(X1, X2, X3, ops, p)

    fsrc = traj.source_samples  # nodal f at sample times, or None

    def cum(series):
        return cumulative_trapezoid(series, t, initial=0.0)

    B = _form_matrix(ops, "B")
    K = _form_matrix(ops, "K")
    M = _form_matrix(ops, "M")
    Mg = _form_matrix(ops, "Mgamma")

    if which == "e1id":
        bdiss = p.b * p.eta * _quad_rows(B, Zt)
        idiss = _quad_rows(Mg, X3)
        lhs = E1 + cum(bdiss) + cum(idiss)
        rhs = np.full_like(lhs, E1[0])
        if fsrc is not None:
            rhs = rhs + q * cum(_bilin_rows(Mg, fsrc, X3))
    elif which == "zmul":
        # tau-general form: tau multiplies |z_t|^2 and the (z_t, z) bracket;
        # at tau = 1 this is the classical statement (with the bracket carrying
        # |z|^2 on gamma0, the form consistent with its own derivation).
        lhs = cum(p.b * _quad_rows(K, Z) - p.tau * _quad_rows(M, Zt))
        bracket = (p.tau * _bilin_rows(M, Zt, Z)
                   + 0.5 * p.b * p.eta * _quad_rows(B, Z))
        rhs = -cum(_bilin_rows(Mg, Z, X3)) - (bracket - bracket[0])
        if fsrc is not None:
            rhs = rhs + cum(_bilin_rows(M, fsrc, Z))
    else:
        work = _MultiplierWork(ops, x0 if x0 is not None else
                               getattr(ops.partition, "x0", None))
        n = float(ops.mesh.dim)
        ex = ops.expand
        Zf = np.stack([ex(Z[i]) for i in range(t.size)])
        Ztf = np.stack([ex(Zt[i]) for i in range(t.size)])
        X3f = np.stack([ex(X3[i]) for i in range(t.size)])
        gamma_utt_hgz = work.cell_v_hgradw(X3f, Zf, cell_weight=ops.gamma_cells)
        zt_hgz = work.cell_v_hgradw(Ztf, Zf)
        f_hgz = None
        if fsrc is not None:
            Ff = np.stack([ex(fsrc[i]) for i in range(t.size)])
            f_hgz = work.cell_v_hgradw(Ff, Zf)

        zt_l2 = _quad_rows(M, Zt)
        gz_l2 = _quad_rows(K, Z)
        zt2_hnu_g0 = work.bdry_sq_hnu("g0", Ztf)

        if which == "hzmult":
            lhs = cum(0.5 * n * zt_l2 - 0.5 * p.b * (n - 2.0) * gz_l2)
            rhs = ((p.b + 1.0) * cum(zt2_hnu_g0) - cum(gamma_utt_hgz)
                   - (zt_hgz - zt_hgz[0]))
        else:  # hzmult_robin
            lhs = cum(0.5 * p.tau * n * zt_l2 - 0.5 * p.b * (n - 2.0) * gz_l2)
            bdry = (0.5 * p.tau * zt2_hnu_g0
                    - 0.5 * p.b * work.bdry_gradsq_hnu("g0", Zf)
                    - p.b * p.eta * work.bdry_v_hgradw("g0", Ztf, Zf)
                    + 0.5 * p.b * work.bdry_fluxsq_hnu("g1", Zf))
            rhs = cum(bdry) - cum(gamma_utt_hgz) - p.tau * (zt_hgz - zt_hgz[0])
        if f_hgz is not None:
            rhs = rhs + cum(f_hgz)

    # normalize by the energy at the window start; a forced run from rest has
    # E(0) = 0, so fall back to the window peak
    scale = float(E0[0] + E1[0])
    if scale <= 0.0:
        scale = max(float(np.max(E0 + E1)), np.finfo(float).tiny)
    residual = float(np.max(np.abs(lhs - rhs)) / scale)
    return IdentityResidual(which=which, times=t.copy(), lhs=lhs, rhs=rhs,
                            residual=residual)


# ---------------------------------------------------------------------------
# decay fitting and the Datko functional


@dataclass
class DecayFit:
    """Exponential fit E(t) ~ mconst^2 * exp(-2*omega*t) on a window."""

    omega: float
    mconst: float
    r2: float
    window: tuple[float, float]


def fit_decay_rate(times, energy_values, window=None) -> DecayFit:
    """Least squares on (t, log E); omega = -slope/2 converts the energy rate
    to a state-norm rate.  Default window drops the leading 20% transient."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(energy_values, dtype=float)
    if window is None:
        window = (t[0] + 0.2 * (t[-1] - t[0]), t[-1])
    lo, hi = window
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12 or lo >= hi:
        raise FitWindowError(f"window {window} outside trajectory span [{t[0]}, {t[-1]}]")
    keep = (t >= lo) & (t <= hi)
    t, e = t[keep], e[keep]
    if t.size < 2:
        raise FitWindowError("window contains fewer than two samples")
    if np.any(e <= 0):
        raise FitWindowError("energy must be strictly positive on the fit window")
    y = np.log(e)
    slope, intercept = np.polyfit(t, y, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    if r2 < 0.98:
        warnings.warn(f"decay fit r2 = {r2:.4f} < 0.98: nonmodal transients "
                      "or a noise floor inside the window", stacklevel=2)
    return DecayFit(omega=float(-slope / 2.0), mconst=float(np.exp(intercept / 2.0)),
                    r2=r2, window=(float(lo), float(hi)))


@dataclass
class DatkoPoint:
    s: float
    cstar: float
    cstar_half: float
    unbounded: bool
    vacuous: bool = False


@dataclass
class DatkoReport:
    points: list

    @property
    def any_unbounded(self) -> bool:
        return any(pt.unbounded for pt in self.points if not pt.vacuous)

    @property
    def all_vacuous(self) -> bool:
        return all(pt.vacuous for pt in self.points)

    def cstars(self):
        return np.array([pt.cstar for pt in self.points if not pt.vacuous])


def datko_check(times, energy_values, s_values=None) -> DatkoReport:
    """C*(s) = sup_{t>s} [E(t) + int_s^t E] / E(s) on a grid of start times.

    A finite, s-stable C* certifies the square-integrability estimate behind
    exponential decay.  Growth of C* with the probe horizon (full-window
    value at least 1.5x the half-window value) flags a non-stabilized run.
    E(s) = 0 makes a point vacuous.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(energy_values, dtype=float)
    if s_values is None:
        s_values = [t[0], t[0] + 0.25 * (t[-1] - t[0]), t[0] + 0.5 * (t[-1] - t[0])]
    cum = cumulative_trapezoid(e, t, initial=0.0)
    points = []
    for s in s_values:
        i = int(np.argmin(np.abs(t - s)))
        if i >= t.size - 1:
            raise ValidationError(f"start time s = {s} leaves no probe horizon")
        es = e[i]
        if es <= 0:
            points.append(DatkoPoint(s=float(t[i]), cstar=np.nan, cstar_half=np.nan,
                                     unbounded=False, vacuous=True))
            continue
        ratio = (e[i:] + (cum[i:] - cum[i])) / es
        half = i + max(1, (t.size - 1 - i) // 2)
        cstar = float(ratio.max())
        cstar_half = float(ratio[: half - i + 1].max())
        points.append(DatkoPoint(s=float(t[i]), cstar=cstar, cstar_half=cstar_half,
                                 unbounded=cstar >= 1.5 * cstar_half))
    return DatkoReport(points=points)


# ---------------------------------------------------------------------------
# spectra and resolvent


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    abscissa: float
    method: str


def spectrum(A, E, dense_threshold: int = 3000, k: int = 12,
             sigma: float = 0.5) -> Spectrum:
    """Eigenvalues of the pencil A x = lambda E x.

    Dense QZ below the threshold (full spectrum); above it, shift-invert
    Arnoldi returns the k eigenvalues nearest the real shift sigma, which
    should sit near the expected rightmost part of the spectrum.
    """
    size = A.shape[0]
    if size <= dense_threshold:
        w = scipy.linalg.eig(A.toarray() if hasattr(A, "toarray") else A,
                             E.toarray() if hasattr(E, "toarray") else E,
                             right=False)
        w = w[np.isfinite(w)]
        return Spectrum(eigenvalues=w, abscissa=float(w.real.max()), method="dense")
    if np.iscomplexobj(np.asarray(sigma)) and not np.iscomplexobj(A.data):
        # complex probes of a real pencil: run the iteration in complex
        # arithmetic so the shift-invert semantics stay literal
        A = A.astype(complex)
        E = E.astype(complex)
    try:
        w = spla.eigs(A, k=k, M=E, sigma=sigma, which="LM",
                      return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        got = exc.eigenvalues
        raise EigensolverError(
            f"shift-invert Arnoldi converged only {got.size}/{k} eigenvalues "
            f"at sigma = {sigma}", residuals=got) from exc
    return Spectrum(eigenvalues=w, abscissa=float(w.real.max()),
                    method=f"shift-invert(sigma={sigma}, k={k})")


def spectral_abscissa(bundle: GeneratorBundle, which: str = "u", **kw) -> float:
    return spectrum(bundle.sparse(which), bundle.E, **kw).abscissa


def resolvent_norm(bundle: GeneratorBundle, lam: float) -> float:
    """Gram-weighted norm of (lam - gen_zd)^{-1}; dissipativity gives <= 1/lam."""
    if not lam > 0:
        raise ValidationError(f"resolvent probe needs lambda > 0, got {lam}")
    A = bundle.A_zd.toarray()
    E = bundle.E.toarray()
    G = bundle.gram_dense()
    try:
        R = scipy.linalg.solve(lam * E - A, E)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(f"resolvent shift {lam} is singular: {exc}") from exc
    T = R.T @ G @ R
    vals = scipy.linalg.eigh(0.5 * (T + T.T), G, eigvals_only=True)
    return float(np.sqrt(max(vals.max(), 0.0)))


def characteristic_roots_1d(params: PhysicalParams, mu: float,
                            alpha: float | None = None) -> np.ndarray:
    """Roots of tau*l^3 + alpha*l^2 + b*mu*l + c^2*mu = 0 (companion matrix).

    Separation of variables against a Laplacian eigenpair (-Lap phi = mu phi)
    turns the scalar model into this cubic; the union over discrete mu of its
    roots is the exact spectrum of the eta = 0 generator with constant alpha.
    """
    if mu <= 0:
        raise ValidationError(f"need mu > 0, got {mu}")
    if alpha is None:
        if params.alpha.kind != "constant":
            raise ValidationError("characteristic roots need a constant alpha")
        alpha = params.alpha.constant
    return np.roots([params.tau, alpha, params.b * mu, params.c**2 * mu])


def multiset_distance(a, b) -> float:
    """Max pair distance in an optimal matching of two complex multisets."""
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.size != b.size:
        raise ValidationError(f"multiset sizes differ: {a.size} vs {b.size}")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


# ---------------------------------------------------------------------------
# emission


def write_energy_csv(path, report: EnergyReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "E0", "E1", "E", "Sigma",
                         "boundary_dissipation", "interior_dissipation"])
        for i in range(report.times.size):
            writer.writerow([f"{v:.17g}" for v in (
                report.times[i], report.E0[i], report.E1[i], report.E[i],
                report.sigma[i], report.boundary_dissipation[i],
                report.interior_dissipation[i])])


def write_eigenvalues_csv(path, eigenvalues) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["re", "im"])
        for lam in np.asarray(eigenvalues, dtype=complex):
            writer.writerow([f"{lam.real:.17g}", f"{lam.imag:.17g}"])
