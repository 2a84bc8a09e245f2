"""Physical parameters, derived coefficients and the z-variable change of state.

The model is the linear third-order-in-time acoustic equation

    tau * u_ttt + alpha(x) * u_tt - c^2 * Lap(u) - b * Lap(u_t) = f

with b = delta + tau*c^2 and the stability coefficient
gamma(x) = alpha(x) - tau*c^2/b.  The auxiliary variable z = u_t + (c^2/b)*u
turns the equation into a damped wave for z driven by -gamma*u_tt; the
componentwise state map between (u, u_t, u_tt) and (u, z, z_t) is exposed
here as ``to_z_state`` / ``from_z_state``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ValidationError

AlphaLike = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class AlphaField:
    """Viscoelastic damping coefficient alpha(x).

    Three representations: a constant (fast path), an explicit per-cell table,
    or a callable evaluated at cell centroids when bound to a mesh.
    """

    kind: str  # "constant" | "cells" | "callable"
    constant: float = 0.0
    cells: np.ndarray | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def make(cls, alpha: AlphaLike) -> "AlphaField":
        if callable(alpha):
            return cls(kind="callable", func=alpha)
        if np.ndim(alpha) == 0:
            value = float(alpha)
            if not np.isfinite(value):
                raise ValidationError("alpha must be finite")
            return cls(kind="constant", constant=value)
        values = np.asarray(alpha, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("per-cell alpha table must be a nonempty 1d array")
        if not np.all(np.isfinite(values)):
            raise ValidationError("per-cell alpha table contains non-finite entries")
        return cls(kind="cells", cells=values)

    def cell_values(self, mesh) -> np.ndarray:
        """Evaluate alpha per mesh cell (centroid value for callables)."""
        n = mesh.n_cells
        if self.kind == "constant":
            return np.full(n, self.constant)
        if self.kind == "cells":
            if self.cells.size != n:
                raise ValidationError(
                    f"alpha table has {self.cells.size} entries, mesh has {n} cells"
                )
            return self.cells.copy()
        values = np.asarray(self.func(mesh.cell_centroids()), dtype=float)
        if values.shape != (n,):
            raise ValidationError("alpha callable must return one value per cell")
        if not np.all(np.isfinite(values)):
            raise ValidationError("alpha callable produced non-finite values")
        return values


@dataclass(frozen=True)
class PhysicalParams:
    """Model constants plus the derived b and gamma fields.

    Invariants kept by construction: b = delta + tau*c^2 exactly, and
    gamma(x) = alpha(x) - tau*c^2/b wherever alpha is evaluated.
    """

    tau: float
    c: float
    delta: float
    eta: float
    b: float
    alpha: AlphaField

    @property
    def c2_over_b(self) -> float:
        return self.c**2 / self.b

    @property
    def gamma_shift(self) -> float:
        """The constant tau*c^2/b subtracted from alpha."""
        return self.tau * self.c**2 / self.b

    def alpha_cells(self, mesh) -> np.ndarray:
        return self.alpha.cell_values(mesh)

    def gamma_cells(self, mesh) -> np.ndarray:
        return self.alpha.cell_values(mesh) - self.gamma_shift

    def gamma_range(self, mesh=None) -> tuple[float, float]:
        """(min, max) of gamma over quadrature points (= cell values for P1)."""
        if self.alpha.kind == "constant":
            g = self.alpha.constant - self.gamma_shift
            return g, g
        if self.alpha.kind == "cells":
            g = self.alpha.cells - self.gamma_shift
            return float(g.min()), float(g.max())
        if mesh is None:
            raise ValidationError("callable alpha needs a mesh to evaluate gamma range")
        g = self.gamma_cells(mesh)
        return float(g.min()), float(g.max())


def derive_params(tau: float, c: float, delta: float, eta: float,
                  alpha: AlphaLike) -> PhysicalParams:
    """Validate raw constants and populate b = delta + tau*c^2 and gamma.

    tau and c must be positive, delta nonnegative; eta may take any sign
    (negative values are anti-damping and flagged only by the stability
    diagnostics, not here -- semigroup generation does not need gamma >= 0
    or eta > 0).
    """
    for name, value in (("tau", tau), ("c", c), ("delta", delta), ("eta", eta)):
        if not np.isfinite(value):
            raise ValidationError(f"{name} must be finite, got {value!r}")
    if tau <= 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    if c <= 0:
        raise ValidationError(f"c must be positive, got {c}")
    if delta < 0:
        raise ValidationError(f"delta must be nonnegative, got {delta}")
    b = delta + tau * c**2
    assert b > 0
    return PhysicalParams(tau=float(tau), c=float(c), delta=float(delta),
                          eta=float(eta), b=float(b), alpha=AlphaField.make(alpha))


def _as_triple(xi1, xi2, xi3):
    v1 = np.asarray(xi1, dtype=float)
    v2 = np.asarray(xi2, dtype=float)
    v3 = np.asarray(xi3, dtype=float)
    if not (v1.shape == v2.shape == v3.shape) or v1.ndim != 1:
        raise ValidationError("state components must be 1d vectors of equal length")
    return v1, v2, v3


@dataclass(frozen=True)
class StateTriple:
    """Coefficient vectors of (u, u_t, u_tt) on the unconstrained DOFs."""

    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray

    def __post_init__(self):
        v1, v2, v3 = _as_triple(self.xi1, self.xi2, self.xi3)
        object.__setattr__(self, "xi1", v1)
        object.__setattr__(self, "xi2", v2)
        object.__setattr__(self, "xi3", v3)

    @property
    def n(self) -> int:
        return self.xi1.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.xi1, self.xi2, self.xi3])

    @classmethod
    def from_flat(cls, x: np.ndarray) -> "StateTriple":
        x = np.asarray(x, dtype=float)
        if x.size % 3:
            raise ValidationError("flat state length must be divisible by 3")
        n = x.size // 3
        return cls(x[:n], x[n:2 * n], x[2 * n:])

    @classmethod
    def zero(cls, n: int) -> "StateTriple":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))


@dataclass(frozen=True)
class ZStateTriple:
    """Coefficient vectors of (u, z, z_t) with z = u_t + (c^2/b) u."""

    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray

    def __post_init__(self):
        v1, v2, v3 = _as_triple(self.xi1, self.xi2, self.xi3)
        object.__setattr__(self, "xi1", v1)
        object.__setattr__(self, "xi2", v2)
        object.__setattr__(self, "xi3", v3)

    @property
    def n(self) -> int:
        return self.xi1.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.xi1, self.xi2, self.xi3])


def to_z_state(state: StateTriple, params: PhysicalParams) -> ZStateTriple:
    """State mixing map (xi1, xi2, xi3) -> (xi1, xi2 + q*xi1, xi3 + q*xi2), q = c^2/b."""
    q = params.c2_over_b
    return ZStateTriple(state.xi1.copy(),
                        state.xi2 + q * state.xi1,
                        state.xi3 + q * state.xi2)


def from_z_state(zstate: ZStateTriple, params: PhysicalParams) -> StateTriple:
    """Exact inverse of :func:`to_z_state`."""
    q = params.c2_over_b
    return StateTriple(zstate.xi1.copy(),
                       zstate.xi2 - q * zstate.xi1,
                       zstate.xi3 - q * zstate.xi2 + q**2 * zstate.xi1)


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[AssumptionCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self):
        for c in self.checks:
            yield f"{c.name}: {'pass' if c.passed else 'FAIL'} ({c.detail})"


def validate_stability_assumptions(params: PhysicalParams, mesh=None,
                                   partition=None) -> AssumptionReport:
    """Diagnostics for the hypotheses behind exponential decay.

    Checks, each pass/fail: gamma >= 0 everywhere, eta > 0 (eta < 0 is flagged
    as anti-damping), x0 strictly outside the closed domain, and the sign of
    nu.h on each boundary part.  Purely diagnostic; nothing raises here.
    """
    from . import geometry as _geometry

    checks = []

    try:
        gmin, gmax = params.gamma_range(mesh)
        ok = gmin >= -1e-14
        detail = f"min gamma = {gmin:.6g}, max gamma = {gmax:.6g}"
    except ValidationError as exc:
        ok, detail = False, str(exc)
    checks.append(AssumptionCheck("gamma_nonnegative", ok, detail))

    if params.eta > 0:
        checks.append(AssumptionCheck("eta_positive", True, f"eta = {params.eta:.6g}"))
    elif params.eta == 0:
        checks.append(AssumptionCheck(
            "eta_positive", False, "eta = 0: no boundary feedback, dynamics conservative"))
    else:
        checks.append(AssumptionCheck(
            "eta_positive", False,
            f"eta = {params.eta:.6g} < 0: anti-damping, spectrum pushed to the right half-plane"))

    if mesh is not None and partition is not None:
        if partition.x0 is None:
            checks.append(AssumptionCheck(
                "x0_outside_domain", False, "partition carries no multiplier origin x0"))
            checks.append(AssumptionCheck(
                "partition_sign_consistent", False, "no x0: star-shaped split not applicable"))
        else:
            dist = _geometry.distance_outside(mesh, partition.x0)
            checks.append(AssumptionCheck(
                "x0_outside_domain", dist > 1e-12,
                f"distance from closure = {dist:.6g}"))
            ok, detail = _geometry.partition_sign_report(mesh, partition)
            checks.append(AssumptionCheck("partition_sign_consistent", ok, detail))

    return AssumptionReport(tuple(checks))
