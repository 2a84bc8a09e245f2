import numpy as np
import pytest

from mgtlab import assembly as asm
from mgtlab import geometry as geo
from mgtlab.model import derive_params


@pytest.fixture
def critical_params():
    """tau = c = b = 1, alpha = 1 so gamma = 0, with unit feedback gain."""
    return derive_params(1.0, 1.0, 0.0, 1.0, 1.0)


@pytest.fixture
def conservative_setup():
    """Fully clamped critical case with eta = 0: the undamped oracle."""
    params = derive_params(1.0, 1.0, 0.0, 0.0, 1.0)
    mesh = geo.build_interval(0.0, 1.0, 40)
    ops = asm.assemble_fem(mesh, geo.dirichlet_partition(mesh), params)
    return params, mesh, ops


@pytest.fixture
def damped_setup(critical_params):
    """1D critical case with feedback on the right endpoint (x0 = -1)."""
    mesh = geo.build_interval(0.0, 1.0, 40)
    part = geo.partition_boundary(mesh, -1.0)
    ops = asm.assemble_fem(mesh, part, critical_params)
    return critical_params, mesh, part, ops


def random_params_and_ops(rng, allow_2d=True):
    """One random admissible configuration: tau, c, delta in [0.1, 10],
    eta in [0, 5], per-cell gamma >= 0."""
    tau = rng.uniform(0.1, 10.0)
    c = rng.uniform(0.1, 10.0)
    delta = rng.uniform(0.1, 10.0)
    eta = rng.uniform(0.0, 5.0)
    if allow_2d and rng.random() < 0.4:
        mesh = geo.build_rectangle(0.0, 1.0, 0.0, 1.0, rng.integers(2, 5),
                                   rng.integers(2, 5))
        x0 = np.array([-1.0, -1.0])
    else:
        mesh = geo.build_interval(0.0, 1.0, int(rng.integers(4, 17)))
        x0 = -1.0
    b = delta + tau * c**2
    gamma_cells = rng.uniform(0.0, 3.0, size=mesh.n_cells)
    alpha_cells = gamma_cells + tau * c**2 / b
    params = derive_params(tau, c, delta, eta, alpha_cells)
    part = geo.partition_boundary(mesh, x0)
    ops = asm.assemble_fem(mesh, part, params)
    return params, ops
