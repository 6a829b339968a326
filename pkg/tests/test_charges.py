import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhydro.charges import (ChargeSeries, circle_loop, circulation, eulerian_continuity_residual,
                            field_density, hamiltonian_density, noether_density, psi_side_charges,
                            relabel_charge, schrodinger_charges, superposition_charge,
                            to_eulerian_charge)
from qhydro.errors import ConfigurationError, InadmissibleError
from qhydro.forces import PotentialSpec
from qhydro.integrator import IntegrationConfig, run
from qhydro.kinematics import FlowState
from qhydro.lattice import integrate, make_grid
from qhydro.oracle import analytic_solution, expectation_energy
from qhydro.symmetry import charge_params, gaussian_stream, stream_flux

from conftest import gaussian_init

HARMONIC = PotentialSpec("harmonic", {"omega": 1.0})


@pytest.fixture(scope="module")
def free_run():
    grid = make_grid(1, (-12, 12), 256)
    init = gaussian_init(grid, x0=0.3, p=0.5)
    return grid, init, run(init, grid, IntegrationConfig(t_end=1.0, snapshots=4))


def closed_form_charges(t, x0=0.3, p=0.5, sigma=1.0):
    """Free packet with hbar = m = 1.

    E = 1/(8 sigma^2) + p^2/2, the centre-of-mass charge is the initial centre,
    the dilation charge is <x v>/2 - t E and the extension charge is
    -t^2 E + t <x v> - <x^2>/2, using <x^2> = s^2 + (x0 + p t)^2 and
    <x v> = s ds/dt + (x0 + p t) p with s^2 = sigma^2 + t^2 / (4 sigma^2).
    """
    E = 1 / (8 * sigma ** 2) + p ** 2 / 2
    xc = x0 + p * t
    x2 = sigma ** 2 + t ** 2 / (4 * sigma ** 2) + xc ** 2
    xv = t / (4 * sigma ** 2) + xc * p
    return {"energy": E, "momentum": p, "galilean": x0, "dilation": xv / 2 - t * E,
            "extension": -t ** 2 * E + t * xv - x2 / 2}


class TestSeries:
    @settings(max_examples=30)
    @given(st.floats(-1e3, 1e3), st.integers(2, 10))
    def test_constant_has_no_drift(self, value, n):
        assert ChargeSeries("c", np.arange(n), np.full(n, value), scale=1.0).drift == 0.0

    def test_rejects_unordered_times(self):
        with pytest.raises(ConfigurationError):
            ChargeSeries("c", [0, 0], [1, 1])

    def test_rows_accumulate(self):
        rows = list(ChargeSeries("c", [0, 1, 2], [1.0, 1.5, 1.0], scale=1.0).rows())
        assert [r[2] for r in rows] == pytest.approx([0.0, 0.5 / 1.25, 0.5 / (3.5 / 3)])


class TestLagrangianCharges:
    @pytest.mark.parametrize("name", ["energy", "momentum", "galilean", "dilation", "extension"])
    def test_values_and_conservation(self, free_run, name):
        grid, init, res = free_run
        series = schrodinger_charges(res.snapshots, init, grid, name)
        expected = [closed_form_charges(t)[name] for t in series.times]
        assert np.max(np.abs(series.values - expected)) < 1e-6
        assert series.drift < 1e-5

    def test_energy_density_is_minus_hamiltonian(self, free_run):
        grid, init, res = free_run
        P = noether_density(res.final, init, grid, charge_params("energy", 1))
        assert np.max(np.abs(P + hamiltonian_density(res.final, init, grid))) < 1e-14

    def test_trap_refuses_dilation(self, free_run):
        grid, _, res = free_run
        init = gaussian_init(grid, potential=HARMONIC)
        with pytest.raises(InadmissibleError, match="2 V"):
            schrodinger_charges(res.snapshots, init, grid, "dilation")

    def test_unknown(self, free_run):
        grid, init, res = free_run
        with pytest.raises(ConfigurationError):
            schrodinger_charges(res.snapshots, init, grid, "isospin")

    def test_angular_momentum_2d(self):
        grid = make_grid(2, (-8, 8), 48)
        init = gaussian_init(grid, x0=(0.5, 0.0), p=(0.0, 0.5))
        res = run(init, grid, IntegrationConfig(t_end=0.3, snapshots=2))
        series = schrodinger_charges(res.snapshots, init, grid, "angular")
        # L_z = x0 p_y = 0.25; the unit rotation generator yields its negative
        assert np.allclose(series.values, -0.25, atol=1e-6)

    def test_relabel_charge_conserved(self):
        grid = make_grid(2, (-8, 8), 48)
        init = gaussian_init(grid, x0=(0.5, 0.0), p=(0.0, 0.5))
        res = run(init, grid, IntegrationConfig(t_end=0.3, snapshots=2))
        flux = stream_flux(gaussian_stream(grid, (0.5, 0.3), 1.0), grid)
        series = relabel_charge(res.snapshots, init, grid, flux)
        assert series.drift < 1e-5

    def test_relabel_refuses_compressive_field(self, free_run):
        grid = make_grid(2, (-4, 4), 32)
        init = gaussian_init(grid)
        flow = FlowState(0.0, grid.mesh(), np.zeros((2, 32, 32)), np.zeros((32, 32)))
        with pytest.raises(ConfigurationError, match="changes rho0"):
            relabel_charge([flow], init, grid, grid.mesh())


class TestCirculation:
    def test_irrotational_is_zero(self):
        grid = make_grid(2, (-8, 8), 48)
        init = gaussian_init(grid, p=(0.3, -0.2))
        res = run(init, grid, IntegrationConfig(t_end=0.2))
        assert abs(circulation(res.final, circle_loop((0, 0), 2.0, 400), grid, init)) < 1e-8

    def test_vortex_quantum(self):
        grid = make_grid(2, (-5, 5), 96)
        fld = analytic_solution("vortex-2d", {}, grid).field
        flow = FlowState(0.0, grid.mesh(), fld.v, np.zeros(grid.counts), multivalued_phase=True)
        assert circulation(flow, circle_loop((0, 0), 2.0, 720), grid) == pytest.approx(
            2 * np.pi, rel=1e-4)

    def test_open_loop_rejected(self, grid2d):
        flow = FlowState(0.0, grid2d.mesh(), np.zeros((2, 48, 48)), np.zeros((48, 48)))
        with pytest.raises(ConfigurationError):
            circulation(flow, circle_loop((0, 0), 1.0)[:, :-1], grid2d)


class TestEulerianCharges:
    def test_mass_density_maps_to_rho(self, free_run):
        grid, init, res = free_run
        xgrid = make_grid(1, (-8, 8), 321)
        ch = to_eulerian_charge(init.rho0, None, res.final, grid, xgrid)
        exact = analytic_solution("free-gaussian", {"x0": 0.3, "p": 0.5}, xgrid, res.final.t).field
        assert np.max(np.abs(ch.density - exact.rho)) < 1e-6
        assert np.max(np.abs(ch.current - exact.rho * exact.v)) < 1e-6
        assert ch.total() == pytest.approx(1.0, abs=1e-6)

    def test_mass_continuity_converges(self):
        grid = make_grid(1, (-12, 12), 256)
        init = gaussian_init(grid, x0=0.3, p=0.5)
        xgrid = make_grid(1, (-6, 6), 241)
        residuals = []
        for n in (2, 4):
            res = run(init, grid, IntegrationConfig(t_end=0.2, snapshots=n))
            charges = [to_eulerian_charge(init.rho0, None, f, grid, xgrid) for f in res.snapshots]
            residuals.append(eulerian_continuity_residual(charges))
        # the centred time difference is second order in the snapshot spacing
        assert residuals[0] / residuals[1] > 3


class TestFieldCharges:
    def test_energy_density_integrates_to_expectation(self):
        grid = make_grid(1, (-10, 10), 801)
        sol = analytic_solution("ho-coherent", {"x0": 1.0}, grid, 0.4)
        dens = field_density(sol.field.psi, grid, 0.4, charge_params("energy", 1), HARMONIC)
        assert -integrate(dens, grid, warn=False) == pytest.approx(
            expectation_energy(sol.field.psi, grid, HARMONIC, 0.4), rel=1e-5)

    @pytest.mark.parametrize("name", ["momentum", "galilean", "dilation", "extension"])
    def test_matches_closed_form(self, name):
        grid = make_grid(1, (-16, 16), 1601)
        times = [0.0, 0.5, 1.0]
        psis = [analytic_solution("free-gaussian", {"x0": 0.3, "p": 0.5}, grid, t).field.psi
                for t in times]
        series = psi_side_charges(psis, times, grid, name, PotentialSpec())
        expected = [closed_form_charges(t)[name] for t in times]
        assert np.max(np.abs(series.values - expected)) < 1e-6

    def test_gauge_charge(self):
        grid = make_grid(1, (-10, 10), 401)
        psi = analytic_solution("free-gaussian", {"p": 0.3}, grid).field.psi
        series = superposition_charge([psi], [-1j * psi], [0.0], grid)
        assert series.values[0] == pytest.approx(1.0, abs=1e-10)

    def test_superposition_of_two_solutions_is_constant(self):
        grid = make_grid(1, (-16, 16), 1601)
        times = np.linspace(0, 2, 5)
        first = [analytic_solution("free-gaussian", {"x0": 0.3, "p": 0.5}, grid, t).field.psi
                 for t in times]
        second = [analytic_solution("free-gaussian", {"x0": -0.4, "p": -0.2}, grid, t).field.psi
                  for t in times]
        series = superposition_charge(first, second, times, grid)
        assert np.ptp(series.values) < 1e-8
        assert abs(series.values[0]) > 1e-2
