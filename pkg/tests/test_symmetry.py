import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhydro.errors import ConfigurationError, InadmissibleError, UnsupportedTransformError
from qhydro.forces import PotentialSpec
from qhydro.integrator import IntegrationConfig, initialize, run, weber_residual
from qhydro.kinematics import EulerianField, FlowState
from qhydro.lattice import integrate, make_grid
from qhydro.oracle import analytic_solution
from qhydro.reconstruction import compare_waves
from qhydro.symmetry import (CONSTRAINTS, GroupParams, affine_map, annulus_stream,
                             apply_finite_transform, apply_infinitesimal, charge_params,
                             check_potential_admissibility, gaussian_stream, identity_map,
                             relabel, relabel_constraint_residual, stream_flux,
                             superposition_relabel, uniform_density_map, warp_map_1d)

from conftest import gaussian_init

HARMONIC = PotentialSpec("harmonic", {"omega": 1.0})


@pytest.fixture(scope="module")
def free_run():
    grid = make_grid(1, (-12, 12), 256)
    init = gaussian_init(grid)
    return grid, init, run(init, grid, IntegrationConfig(t_end=0.5))


@pytest.fixture(scope="module")
def trapped_run():
    grid = make_grid(1, (-8, 8), 192)
    init = gaussian_init(grid, sigma=0.8, x0=0.3, potential=HARMONIC, tail_floor=1e-6)
    return grid, init, run(init, grid, IntegrationConfig(t_end=0.3))


class TestParams:
    def test_counts(self):
        assert [GroupParams.count(d) for d in (1, 2, 3)] == [5, 8, 12]

    @settings(max_examples=25)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
    def test_rotation_generator_antisymmetric(self, rot):
        w = GroupParams(3, rotation=tuple(rot)).omega
        assert np.array_equal(w, -w.T)

    def test_wrong_rotation_length(self):
        with pytest.raises(ConfigurationError):
            GroupParams(2, rotation=(1.0, 2.0))

    def test_angular_needs_2d(self):
        with pytest.raises(ConfigurationError):
            charge_params("angular", 1)

    @pytest.mark.parametrize("name,active", [("energy", "energy"), ("momentum", "translation"),
                                             ("galilean", "boost"), ("dilation", "dilation"),
                                             ("extension", "extension")])
    def test_charge_selects_one_family(self, name, active):
        assert charge_params(name, 2).active() == [active]


class TestAdmissibility:
    points = np.linspace(-3, 3, 13)[None]

    @pytest.mark.parametrize("name", ["energy", "momentum", "galilean", "dilation", "extension"])
    def test_free_space_admits_all(self, name):
        assert check_potential_admissibility(charge_params(name, 1), PotentialSpec(),
                                             self.points).passed

    @pytest.mark.parametrize("name,ok", [("energy", True), ("momentum", False),
                                         ("galilean", False), ("dilation", False),
                                         ("extension", False)])
    def test_harmonic(self, name, ok):
        rep = check_potential_admissibility(charge_params(name, 1), HARMONIC, self.points)
        assert rep.passed is ok

    def test_isotropic_trap_admits_rotation(self):
        pts = np.stack(np.meshgrid(np.linspace(-2, 2, 5), np.linspace(-2, 2, 5)))
        assert check_potential_admissibility(charge_params("angular", 2), HARMONIC, pts).passed

    def test_inverse_square_is_scale_invariant(self):
        pot = PotentialSpec("inverse_square", {"g": 0.7})
        pts = np.linspace(0.5, 3, 11)[None]
        for name in ("dilation", "extension"):
            assert check_potential_admissibility(charge_params(name, 1), pot, pts).passed
        assert not check_potential_admissibility(charge_params("momentum", 1), pot, pts).passed

    def test_error_names_the_constraint(self):
        rep = check_potential_admissibility(charge_params("dilation", 1), HARMONIC, self.points)
        with pytest.raises(InadmissibleError) as info:
            rep.raise_if_failed()
        assert CONSTRAINTS["dilation"] in str(info.value)


class TestFiniteTransforms:
    def test_boosted_flow_keeps_weber_relation(self, free_run):
        grid, init, res = free_run
        out = apply_finite_transform(res.final, GroupParams(1, u=(0.4,), c=(1.0,), d=0.2))
        assert out.t == pytest.approx(res.final.t + 0.2)
        assert np.allclose(out.q, res.final.q - 0.4 * res.final.t + 1.0)
        assert weber_residual(out, init, grid) < 1e-5

    def test_boost_matches_moving_packet(self):
        grid = make_grid(1, (-10, 10), 401)
        t, u = 0.7, 0.6
        rest = analytic_solution("free-gaussian", {}, grid, t).field
        moved = apply_finite_transform(rest, GroupParams(1, u=(u,)))
        exact = analytic_solution("free-gaussian", {"p": -u}, moved.grid, t).field
        assert 1 - compare_waves(moved.psi, exact.psi, moved.grid).fidelity < 1e-10
        assert np.max(np.abs(moved.v - exact.v)) < 1e-10

    def test_boost_commutes_with_evolution(self):
        grid = make_grid(1, (-12, 12), 256)
        u = 0.5
        init = gaussian_init(grid)
        boosted = apply_finite_transform(initialize(init, grid), GroupParams(1, u=(u,)))
        direct = run(gaussian_init(grid, p=-u), grid, IntegrationConfig(t_end=0.5)).final
        later = run(init, grid, IntegrationConfig(t_end=0.5), start=boosted).final
        core = np.abs(grid.axes()[0]) < 4
        assert np.max(np.abs(later.q - direct.q)[:, core]) < 1e-8

    def test_rotated_vortex_keeps_density(self):
        grid = make_grid(2, (-5, 5), 81)
        fld = analytic_solution("vortex-2d", {}, grid).field
        out = apply_finite_transform(fld, GroupParams(2, rotation=(0.3,)))
        r2 = np.sum(grid.mesh() ** 2, axis=0)
        assert np.max(np.abs(out.rho - fld.rho)[r2 < 9]) < 1e-4
        ring = (r2 > 1) & (r2 < 9)
        assert np.max(np.abs(out.v - fld.v)[:, ring]) < 1e-3

    def test_scale_families_unsupported(self, free_run):
        _, _, res = free_run
        for p in (GroupParams(1, beta=1.0), GroupParams(1, alpha=1.0)):
            with pytest.raises(UnsupportedTransformError):
                apply_finite_transform(res.final, p)

    def test_identity(self, free_run):
        _, _, res = free_run
        out = apply_finite_transform(res.final, GroupParams(1))
        assert np.array_equal(out.q, res.final.q) and np.array_equal(out.S, res.final.S)


class TestInfinitesimal:
    @staticmethod
    def ratio(flow, init, grid, params, eps=1e-3):
        r1 = apply_infinitesimal(flow, init, grid, params, eps).residual
        r2 = apply_infinitesimal(flow, init, grid, params, eps / 2).residual
        return r1 / r2

    def test_zero_parameter_is_exact(self, free_run):
        grid, init, res = free_run
        assert apply_infinitesimal(res.final, init, grid, charge_params("dilation", 1), 0.0
                                   ).residual == 0.0

    @pytest.mark.parametrize("name", ["dilation", "extension"])
    def test_scale_symmetries_are_second_order(self, free_run, name):
        grid, init, res = free_run
        assert self.ratio(res.final, init, grid, charge_params(name, 1)) > 3.5

    @pytest.mark.parametrize("name", ["galilean", "momentum"])
    def test_free_translations_are_exact(self, free_run, name):
        grid, init, res = free_run
        assert apply_infinitesimal(res.final, init, grid, charge_params(name, 1), 1e-2
                                   ).residual < 1e-8

    @pytest.mark.parametrize("name", ["momentum", "galilean"])
    def test_trap_breaks_translations_at_first_order(self, trapped_run, name):
        grid, init, res = trapped_run
        assert self.ratio(res.final, init, grid, charge_params(name, 1)) == pytest.approx(2, abs=0.1)


class TestRelabel:
    def test_identity(self, free_run):
        grid, init, res = free_run
        flow, new = relabel(res.final, init, identity_map(1), grid, grid)
        assert np.max(np.abs(flow.q - res.final.q)) < 1e-12
        assert np.max(np.abs(new.rho0 - init.rho0)) < 1e-12

    def test_affine_shift(self, free_run):
        grid, init, res = free_run
        inner = make_grid(1, (-5, 5), 101)
        flow, new = relabel(res.final, init, affine_map([[2.0]], [1.0]), grid, inner)
        old = (inner.axes()[0] - 1.0) / 2
        assert np.max(np.abs(new.rho0 - np.exp(-old ** 2 / 2) / np.sqrt(2 * np.pi) / 2)) < 1e-6

    def test_uniform_density(self, free_run):
        grid, init, res = free_run
        remap = uniform_density_map(init.rho0, grid)
        new_grid = make_grid(1, (0.01, 0.99), 512)
        flow, new = relabel(res.final, init, remap, grid, new_grid)
        assert np.max(np.abs(new.rho0 - 1.0)) < 1e-10
        assert abs(integrate(new.rho0, new_grid, warn=False) - 0.98) < 1e-10
        inside = remap.inverse(remap.forward(np.array([[0.3, -1.2]])))
        assert np.allclose(inside, [[0.3, -1.2]], atol=1e-12)

    def test_warp_preserves_mass_and_dynamics(self, free_run):
        grid, init, res = free_run
        remap = warp_map_1d(0.3, 0.5)
        new_grid = make_grid(1, (-10, 10), 256)
        flow, new = relabel(res.final, init, remap, grid, new_grid)
        assert integrate(new.rho0, new_grid, warn=False) == pytest.approx(1.0, abs=1e-6)
        assert np.max(np.abs(remap.inverse(remap.forward(grid.mesh())) - grid.mesh())) < 1e-12
        with pytest.raises(ConfigurationError):
            warp_map_1d(1.0, 1.0)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.5, 2.0), st.floats(-1, 1), st.floats(-1, 1))
    def test_stream_fluxes_are_divergence_free(self, width, cx, cy):
        grid = make_grid(2, (-6, 6), 48)
        for s in (gaussian_stream(grid, (cx, cy), width), annulus_stream(grid, (cx, cy), 2.0)):
            assert relabel_constraint_residual(stream_flux(s, grid), grid) < 1e-12


class TestSuperposition:
    @staticmethod
    def family(grid, t, sigma):
        q = analytic_solution("free-gaussian", {"sigma0": sigma}, grid, t).trajectory(grid.mesh())
        return FlowState(t, q, np.zeros_like(q), np.zeros(grid.counts))

    def test_vanishes_initially(self):
        grid = make_grid(1, (-6, 6), 97)
        rep = superposition_relabel(self.family(grid, 0, 0.999), self.family(grid, 0, 1.001),
                                    grid, 1e-3)
        assert np.max(np.abs(rep.xi)) == 0.0

    def test_width_family_closed_form(self):
        grid = make_grid(1, (-6, 6), 97)
        t, sigma, delta = 1.0, 1.0, 1e-4
        rep = superposition_relabel(self.family(grid, t, sigma - delta),
                                    self.family(grid, t, sigma + delta), grid, delta,
                                    self.family(grid, t, sigma))
        a = grid.axes()[0]
        # q = a f(sigma), f^2 = 1 + t^2 / (4 sigma^4), so xi = -a f'/f = a t^2 / (2 sigma^5 f^2)
        f2 = 1 + t ** 2 / (4 * sigma ** 4)
        assert np.max(np.abs(rep.xi[0] - a * t ** 2 / (2 * sigma ** 5 * f2))) < 1e-6
        assert rep.constraint_residual < 1e-12
