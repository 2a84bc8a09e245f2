import numpy as np
import pytest

from mgtlab import geometry as geo
from mgtlab.errors import ValidationError
from mgtlab.model import (AlphaField, StateTriple, derive_params, from_z_state,
                          to_z_state, validate_stability_assumptions)


class TestDeriveParams:
    def test_critical_case(self):
        p = derive_params(1.0, 1.0, 0.0, 1.0, 1.0)
        assert p.b == 1.0
        assert p.gamma_range() == (0.0, 0.0)

    def test_half_alpha_case(self):
        p = derive_params(1.0, 1.0, 1.0, 0.0, 0.5)
        assert p.b == 2.0
        assert p.gamma_range() == (0.0, 0.0)

    def test_generic_arithmetic(self):
        p = derive_params(2.0, 3.0, 0.5, 1.0, 2.0)
        assert p.b == 18.5
        g, _ = p.gamma_range()
        assert g == pytest.approx(2.0 - 18.0 / 18.5, abs=1e-15)
        assert g == pytest.approx(1.02703, abs=1e-5)

    def test_b_recomputes_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            tau, c, delta = rng.uniform(0.1, 10, 3)
            p = derive_params(tau, c, delta, 0.0, 1.0)
            assert p.b == p.delta + p.tau * p.c**2

    def test_gamma_matches_alpha_minus_shift_exactly(self):
        rng = np.random.default_rng(4)
        mesh = geo.build_interval(0.0, 1.0, 8)
        alpha = rng.uniform(0.5, 3.0, mesh.n_cells)
        p = derive_params(1.3, 0.7, 0.2, 1.0, alpha)
        expected = alpha - p.tau * p.c**2 / p.b
        assert np.array_equal(p.gamma_cells(mesh), expected)

    @pytest.mark.parametrize("bad", [
        dict(tau=0.0), dict(tau=-1.0), dict(c=0.0), dict(delta=-0.1),
        dict(tau=np.nan), dict(eta=np.inf),
    ])
    def test_rejects_bad_constants(self, bad):
        kw = dict(tau=1.0, c=1.0, delta=0.0, eta=1.0)
        kw.update(bad)
        with pytest.raises(ValidationError):
            derive_params(alpha=1.0, **kw)

    def test_rejects_nonfinite_alpha(self):
        with pytest.raises(ValidationError):
            derive_params(1.0, 1.0, 0.0, 1.0, np.array([1.0, np.nan]))

    def test_alpha_callable_needs_mesh(self):
        p = derive_params(1.0, 1.0, 0.0, 1.0, lambda x: 1.0 + 0 * x[:, 0])
        with pytest.raises(ValidationError):
            p.gamma_range()
        mesh = geo.build_interval(0.0, 1.0, 4)
        assert p.gamma_range(mesh) == (0.0, 0.0)

    def test_alpha_cells_size_mismatch(self):
        p = derive_params(1.0, 1.0, 0.0, 1.0, np.array([1.0, 2.0, 3.0]))
        mesh = geo.build_interval(0.0, 1.0, 4)
        with pytest.raises(ValidationError):
            p.alpha_cells(mesh)

    def test_negative_gamma_allowed_at_construction(self):
        # semigroup generation does not need gamma >= 0
        p = derive_params(1.0, 1.0, 0.0, 1.0, 0.1)
        assert p.gamma_range()[0] < 0


class TestStateMixing:
    def test_direct_substitution(self):
        p = derive_params(1.0, 1.0, 0.0, 1.0, 1.0)  # c^2/b = 1
        st = StateTriple(np.array([1.0]), np.array([2.0]), np.array([3.0]))
        z = to_z_state(st, p)
        assert (z.xi1[0], z.xi2[0], z.xi3[0]) == (1.0, 3.0, 5.0)

    def test_first_component_only(self):
        p = derive_params(2.0, 1.5, 0.3, 0.0, 1.0)
        q = p.c2_over_b
        xi1 = np.array([2.0, -1.0])
        z = to_z_state(StateTriple(xi1, np.zeros(2), np.zeros(2)), p)
        assert np.allclose(z.xi2, q * xi1, rtol=0, atol=0)
        assert np.all(z.xi3 == 0)

    def test_roundtrip(self):
        rng = np.random.default_rng(11)
        p = derive_params(1.7, 2.3, 0.4, 0.5, 1.0)
        for _ in range(20):
            st = StateTriple(*rng.standard_normal((3, 15)))
            back = from_z_state(to_z_state(st, p), p)
            for a, b in zip((st.xi1, st.xi2, st.xi3),
                            (back.xi1, back.xi2, back.xi3)):
                assert np.abs(a - b).max() <= 1e-13 * max(1.0, np.abs(a).max())

    def test_linearity(self):
        rng = np.random.default_rng(12)
        p = derive_params(0.9, 1.1, 0.2, 1.0, 1.0)
        x = StateTriple(*rng.standard_normal((3, 10)))
        y = StateTriple(*rng.standard_normal((3, 10)))
        a, b = 1.37, -0.42
        combo = StateTriple(a * x.xi1 + b * y.xi1, a * x.xi2 + b * y.xi2,
                            a * x.xi3 + b * y.xi3)
        lhs = to_z_state(combo, p).flat()
        rhs = a * to_z_state(x, p).flat() + b * to_z_state(y, p).flat()
        assert np.abs(lhs - rhs).max() <= 1e-13 * np.abs(lhs).max()

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            StateTriple(np.zeros(3), np.zeros(3), np.zeros(4))

    def test_flat_roundtrip(self):
        st = StateTriple(np.arange(3.0), np.arange(3.0) + 3, np.arange(3.0) + 6)
        assert np.array_equal(StateTriple.from_flat(st.flat()).flat(), st.flat())


class TestStabilityAssumptions:
    def test_critical_configuration_passes(self):
        p = derive_params(1.0, 1.0, 0.0, 1.0, 1.0)
        mesh = geo.build_interval(0.0, 1.0, 8)
        part = geo.partition_boundary(mesh, -1.0)
        rep = validate_stability_assumptions(p, mesh, part)
        assert rep.all_passed

    def test_antidamping_flagged(self):
        p = derive_params(1.0, 1.0, 0.0, -0.5, 1.0)
        rep = validate_stability_assumptions(p)
        assert not rep["eta_positive"].passed
        assert "anti-damping" in rep["eta_positive"].detail

    def test_eta_zero_fails_stability(self):
        p = derive_params(1.0, 1.0, 0.0, 0.0, 1.0)
        rep = validate_stability_assumptions(p)
        assert not rep["eta_positive"].passed

    def test_interior_x0_fails_geometric_check(self):
        p = derive_params(1.0, 1.0, 0.0, 1.0, 1.0)
        mesh = geo.build_rectangle(0, 1, 0, 1, 3, 3)
        part = geo.partition_boundary(mesh, (-1.0, -1.0))
        centroid_part = geo.BoundaryPartition(part.gamma0, part.gamma1,
                                              np.array([0.5, 0.5]))
        rep = validate_stability_assumptions(p, mesh, centroid_part)
        assert not rep["x0_outside_domain"].passed

    def test_negative_gamma_fails(self):
        p = derive_params(1.0, 1.0, 0.0, 1.0, 0.5)  # gamma = -0.5
        rep = validate_stability_assumptions(p)
        assert not rep["gamma_nonnegative"].passed


class TestAlphaField:
    def test_constant_fast_path(self):
        f = AlphaField.make(2.5)
        mesh = geo.build_interval(0.0, 1.0, 6)
        assert np.all(f.cell_values(mesh) == 2.5)

    def test_cells_table(self):
        mesh = geo.build_interval(0.0, 1.0, 4)
        f = AlphaField.make([1.0, 2.0, 3.0, 4.0])
        assert np.array_equal(f.cell_values(mesh), [1.0, 2.0, 3.0, 4.0])

    def test_callable_at_centroids(self):
        mesh = geo.build_interval(0.0, 1.0, 4)
        f = AlphaField.make(lambda x: 2.0 * x[:, 0])
        assert np.allclose(f.cell_values(mesh), 2.0 * mesh.cell_centroids()[:, 0])
