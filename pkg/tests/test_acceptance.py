"""The twelve acceptance criteria, each run at its stated tolerance."""
import numpy as np
import pytest

from qhydro.charges import schrodinger_charges
from qhydro.errors import InadmissibleError
from qhydro.forces import PotentialSpec, evaluate_stress, evaluate_weber, log_density
from qhydro.kinematics import deformation_from_positions
from qhydro.lattice import make_grid
from qhydro.scenarios import bundled_names

from conftest import ACCEPTANCE, gate, gaussian_init, scenario_result

HARMONIC = PotentialSpec("harmonic", {"omega": 1.0})


@pytest.fixture(autouse=True)
def _report_every_criterion(request):
    """A criterion that stops before its gate (precondition or error) still gets a FAIL line."""
    yield
    number = int(request.node.name.split("_")[2])
    ACCEPTANCE.setdefault(number, (False, request.node.name, "stopped before the gate"))


def check_item(result, name, label=None):
    c = result.check(name)
    return (label or f"{result.scenario.name}:{name}", c.value, c.limit, c.lower)


def test_criterion_01_trajectory_law():
    res = scenario_result("free_gaussian_1d")
    sc = res.scenario
    assert sc.label_grid().counts == (512,) and sc.integration.t_end == 2.0 and sc.integration.cfl == 0.2
    gate(1, "free-Gaussian trajectory law", [
        check_item(res, "trajectory_rel", "max relative error"),
        ("integration seconds", res.runtime, 60.0, False),
    ])


def test_criterion_02_reconstruction():
    res = scenario_result("free_gaussian_1d")
    assert res.metrics["reconstruction"]["t"] == pytest.approx(2.0)
    gate(2, "wavefunction reconstruction against Crank-Nicolson", [
        check_item(res, "fidelity", "fidelity"),
        check_item(res, "amplitude_l2", "|psi| L2 error"),
    ])


def test_criterion_03_stationarity():
    res = scenario_result("harmonic_ground_1d")
    assert res.scenario.integration.t_end == pytest.approx(2 * np.pi)
    gate(3, "harmonic ground state stays stationary", [
        check_item(res, "displacement_rel", "max |q - a| / width"),
        check_item(res, "density_drift", "density Linf drift"),
    ])


def test_criterion_04_coherent_state():
    res = scenario_result("coherent_state_1d")
    assert res.scenario.state_params["x0"] == 1.0
    gate(4, "coherent-state centre follows x0 cos(t)", [check_item(res, "center_abs", "max error")])


def test_criterion_05_charge_conservation():
    res = scenario_result("free_gaussian_1d")
    energy = res.series["energy"].values[0]
    gate(5, "energy, momentum and Galilean charges conserved", [
        check_item(res, "drift_energy", "energy drift"),
        check_item(res, "drift_momentum", "momentum drift"),
        check_item(res, "drift_galilean", "galilean drift"),
        # closed-form <H> = hbar^2 / (8 m sigma0^2) for the packet at rest
        ("|E - 0.125|", abs(energy - 0.125), 1e-3, False),
    ])


def test_criterion_06_scale_charges():
    res = scenario_result("free_gaussian_1d")
    grid = make_grid(1, (-12, 12), 256)
    trapped = gaussian_init(grid, potential=HARMONIC)
    flows = res.run.snapshots[:1]
    messages = {}
    for name, formula in (("dilation", "q . grad V + 2 t dV/dt + 2 V = 0"),
                          ("extension", "q . grad V + t dV/dt + 2 V = 0")):
        with pytest.raises(InadmissibleError) as info:
            schrodinger_charges([type(flows[0])(0.0, grid.mesh(), np.zeros((1, 256)),
                                                np.zeros(256))], trapped, grid, name)
        messages[name] = formula in str(info.value)
    gate(6, "dilation and extension charges; harmonic V refused", [
        ("dilation drift", res.check("drift_dilation").value, 1e-4, False),
        ("extension drift", res.check("drift_extension").value, 1e-4, False),
        ("refusals citing the constraint", float(all(messages.values())), 1.0, True),
    ])


def test_criterion_07_cross_picture():
    one = scenario_result("free_gaussian_1d")
    moving = scenario_result("moving_gaussian_1d")
    two = scenario_result("free_gaussian_2d")
    items = [check_item(r, f"cross_picture_{n}") for r in (one, moving)
             for n in ("energy", "momentum", "galilean", "dilation", "extension")]
    items.append(check_item(two, "cross_picture_angular"))
    assert all(i[2] <= 1e-4 for i in items)
    gate(7, "Lagrangian and field-side charges agree", items)


def test_criterion_08_circulation():
    res = scenario_result("vortex_2d")
    sc = res.scenario
    assert sc.label_grid().counts == (96, 96)
    assert sc.diagnostics["circulation_radius"] >= 6 * max(sc.label_grid().spacing)
    gate(8, "Kelvin circulation of the trapped vortex", [
        check_item(res, "circulation_rel", "|Gamma/(h/m) - 1|"),
        check_item(res, "circulation_drift", "drift"),
    ])


def test_criterion_09_relabel_invariance():
    one = scenario_result("free_gaussian_1d")
    items = [check_item(one, "relabel_rho", "uniform relabel rho Linf"),
             check_item(one, "relabel_v", "uniform relabel v Linf")]
    for name in ("free_gaussian_2d", "harmonic_breathing_2d"):
        res = scenario_result(name)
        items += [check_item(res, f"relabel_drift_{fam}")
                  for fam in ("centred_bump", "offset_bump", "loop_kernel")]
    assert scenario_result("harmonic_breathing_2d").scenario.potential.kind == "harmonic"
    gate(9, "relabelling leaves Eulerian fields and relabel charges fixed", items)


def test_criterion_10_superposition():
    res = scenario_result("free_gaussian_1d")
    meta = res.metrics["superposition"]
    assert meta["t"] == pytest.approx(1.0) and meta["delta"] == pytest.approx(1e-3)
    gate(10, "superposition generated by a relabelling", [
        check_item(res, "superposition_constraint", "F xi + dq/dA residual"),
        check_item(res, "superposition_derivative", "Eulerian derivative relative gap"),
    ])


def _form_gap(n):
    grid = make_grid(2, (-7, 7), n)
    a = grid.mesh()
    q = a + 0.15 * np.sin(0.5 * a) * np.exp(-np.sum(a ** 2, axis=0) / 20)
    rho0 = np.exp(-np.sum(a ** 2, axis=0) / 2) / (2 * np.pi)
    weber = evaluate_weber(q, 0.0, log_density(rho0), HARMONIC, grid).accel
    stress = evaluate_stress(q, 0.0, rho0, HARMONIC, grid, floor=1e-300)
    return float(np.max(np.abs(weber - stress)[:, np.sum(a ** 2, axis=0) < 4]))


def test_criterion_11_identities():
    cofactor, weber = 0.0, 0.0
    for name in bundled_names():
        res = scenario_result(name)
        grid = res.scenario.label_grid()
        for snap in res.run.snapshots:
            cofactor = max(cofactor, deformation_from_positions(snap.q, grid).cofactor_residual())
        if not res.run.snapshots[0].multivalued_phase:
            weber = max(weber, res.run.max_weber_residual())
    gate(11, "cofactor, force-form and Weber identities", [
        ("cofactor residual", cofactor, 1e-10, False),
        ("form gap shrink under halved spacing", _form_gap(48) / _form_gap(96), 4.0, True),
        ("Weber residual over single-valued runs", weber, 1e-5, False),
    ])


def test_criterion_12_noether_scaling():
    free = scenario_result("free_gaussian_1d")
    control = scenario_result("harmonic_translation_control_1d")
    ratios = {**{n: free.metrics["invariance"][n] for n in ("dilation", "extension")},
              **{n: control.metrics["invariance"][n] for n in ("momentum", "galilean")}}
    assert [ratios[n]["expected"] for n in ("dilation", "extension", "momentum", "galilean")] \
        == [4.0, 4.0, 2.0, 2.0]
    gate(12, "Euler-Lagrange residual scaling under infinitesimal transforms", [
        (f"{n} ratio", r["ratio"], 0.0, True) for n, r in ratios.items()
    ] + [(f"{n} |ratio/expected - 1|", abs(r["ratio"] - r["expected"]) / r["expected"], 0.2, False)
         for n, r in ratios.items()])
