"""Scenario execution: integration, diagnostics against oracles and tolerances, persistence."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .charges import (ChargeSeries, circle_loop, circulation_series, noether_density,
                      psi_side_charges, relabel_charge, schrodinger_charges, to_eulerian_charge)
from .integrator import IntegrationConfig, RunResult, run
from .kinematics import deformation_from_positions, to_eulerian
from .lattice import LabelGrid, make_grid
from .oracle import analytic_solution, expectation_energy, propagate_cn
from .reconstruction import compare_waves, reconstruct
from .scenarios import Scenario
from .symmetry import (annulus_stream, apply_infinitesimal, charge_params,
                       check_potential_admissibility, gaussian_stream, parameter_derivative_fields,
                       relabel, stream_flux, superposition_relabel, uniform_density_map,
                       warp_map_1d)

# default limits; a scenario's [tolerances] section overrides any of them
DEFAULT_TOLERANCES = {
    "trajectory_rel": 1e-3,
    "fidelity_min": 0.9999,
    "amplitude_l2": 1e-3,
    "displacement_rel": 1e-5,
    "density_drift": 1e-5,
    "center_abs": 1e-4,
    "charge_drift": 1e-5,
    "energy_abs": 1e-3,
    "cross_picture_rel": 1e-4,
    "circulation_rel": 1e-2,
    "circulation_drift": 1e-2,
    "relabel_field": 1e-5,
    "relabel_rho0": 1e-6,
    "relabel_drift": 1e-5,
    "superposition_constraint": 1e-5,
    "superposition_xi": 1e-5,
    "superposition_derivative": 3e-2,
    "weber_residual": 1e-5,
    "scaling_band": 0.2,
}


@dataclass
class Check:
    """One tolerance comparison: ``value <= limit`` (or ``>=`` when ``lower`` is set)."""

    name: str
    value: float
    limit: float
    lower: bool = False

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return bool(self.value >= self.limit if self.lower else self.value <= self.limit)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": _num(self.value), "limit": _num(self.limit),
                "comparison": ">=" if self.lower else "<=", "passed": self.passed}


@dataclass
class ScenarioResult:
    scenario: Scenario
    run: RunResult | None
    checks: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def report(self) -> dict:
        return {"scenario": self.scenario.to_dict(), "checks": [c.to_dict() for c in self.checks],
                "metrics": _jsonable(self.metrics),
                "series": {k: {"times": s.times.tolist(), "values": s.values.tolist(),
                               "drift": _num(s.drift)} for k, s in sorted(self.series.items())},
                "passed": self.passed}

    def summary(self) -> dict:
        return {"scenario": self.scenario.name, "passed": self.passed,
                "checks": {c.name: c.passed for c in self.checks}}


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def mass_fraction_mask(rho0: np.ndarray, grid: LabelGrid, fraction: float = 0.9) -> np.ndarray:
    """Smallest set of highest-density labels carrying ``fraction`` of the mass."""
    flat = rho0.ravel()
    order = np.argsort(-flat, kind="stable")
    cum = np.cumsum(flat[order]) / flat.sum()
    keep = order[: int(np.searchsorted(cum, fraction)) + 1]
    mask = np.zeros(flat.size, bool)
    mask[keep] = True
    return mask.reshape(rho0.shape)


class _Context:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.grid = scenario.label_grid()
        self.xgrid = scenario.position_grid()
        self.init = scenario.initial_data(self.grid)
        self.result = ScenarioResult(scenario, None)
        self._cn = None

    def tol(self, name: str) -> float:
        return self.sc.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def add(self, name: str, value: float, limit_name: str, lower: bool = False) -> None:
        self.result.checks.append(Check(name, float(value), self.tol(limit_name), lower))

    def cn(self):
        """Crank-Nicolson reference on the position grid, at the run's snapshot times."""
        if self._cn is None:
            sc = self.sc
            psi0 = analytic_solution(sc.state, sc.state_params, self.xgrid, 0.0, sc.hbar,
                                     sc.mass).field.psi
            self._cn = propagate_cn(psi0, self.xgrid, sc.potential, sc.oracle.get("dt", 1e-3),
                                    sc.integration.t_end, sc.hbar, sc.mass,
                                    snapshots=sc.integration.snapshots)
        return self._cn


def execute(scenario: Scenario) -> ScenarioResult:
    """Integrate the scenario and evaluate every requested diagnostic.

    Integration failures (tangling, non-finite values) propagate to the caller.
    """
    scenario.validate()
    ctx = _Context(scenario)
    start = time.perf_counter()
    res = run(ctx.init, ctx.grid, scenario.integration)
    ctx.result.runtime = time.perf_counter() - start
    ctx.result.run = res
    ctx.result.metrics["integration"] = {"dt": res.dt, "steps": res.steps,
                                         "force_evaluations": res.force_evaluations,
                                         "final_min_J": res.diagnostics[-1]["min_J"]}
    d = scenario.diagnostics
    weber = res.max_weber_residual()
    ctx.result.metrics["weber_residual"] = weber
    if not ctx.init.multivalued_phase:
        ctx.add("weber_residual", weber, "weber_residual")
    if d.get("trajectory"):
        _trajectory(ctx)
    if d.get("stationarity"):
        _stationarity(ctx)
    if d.get("charges"):
        _charges(ctx)
    if d.get("reconstruction"):
        _reconstruction(ctx)
    if "circulation_radius" in d:
        _circulation(ctx)
    if d.get("relabel"):
        _relabel(ctx)
    if d.get("invariance"):
        _invariance(ctx)
    if d.get("superposition"):
        _superposition(ctx)
    return ctx.result


# -- diagnostics ----------------------------------------------------------------------------

def _trajectory(ctx: _Context) -> None:
    sc, res, grid = ctx.sc, ctx.result.run, ctx.grid
    labels = grid.mesh()
    if sc.state == "free-gaussian":
        core = mass_fraction_mask(ctx.init.rho0, grid, 0.9)
        x0 = np.broadcast_to(np.asarray(sc.state_params.get("x0", 0.0), float), (sc.dim,))
        worst = 0.0
        for snap in res.snapshots:
            ref = analytic_solution(sc.state, sc.state_params, grid, snap.t, sc.hbar,
                                    sc.mass).trajectory(labels)
            drift = ref - analytic_solution(sc.state, sc.state_params, grid, snap.t, sc.hbar,
                                            sc.mass).trajectory(x0.reshape((-1,) + (1,) * sc.dim))
            denom = np.maximum(np.sqrt(np.sum(drift ** 2, axis=0)), max(grid.spacing))
            err = np.sqrt(np.sum((snap.q - ref) ** 2, axis=0)) / denom
            worst = max(worst, float(np.max(err[core])))
        ctx.add("trajectory_rel", worst, "trajectory_rel")
    elif sc.state == "ho-coherent":
        omega = float(np.min(sc.potential.params.get("omega", 1.0)))
        x0 = np.broadcast_to(np.asarray(sc.state_params.get("x0", 1.0), float), (sc.dim,))
        w = ctx.init.rho0 / ctx.init.rho0.sum()
        err = [float(np.max(np.abs(np.sum(s.q * w, axis=tuple(range(1, sc.dim + 1)))
                                   - x0 * np.cos(omega * s.t)))) for s in res.snapshots]
        ctx.result.metrics["center_error"] = err
        ctx.add("center_abs", max(err), "center_abs")
    else:
        good = ctx.init.good_mask(grid)
        errs = []
        for snap in res.snapshots:
            ref = analytic_solution(sc.state, sc.state_params, grid, snap.t, sc.hbar,
                                    sc.mass).trajectory(labels)
            errs.append(float(np.max(np.abs(snap.q - ref)[:, good])))
        ctx.result.metrics["trajectory_abs"] = errs


def _stationarity(ctx: _Context) -> None:
    grid, res, xgrid = ctx.grid, ctx.result.run, ctx.xgrid
    width = max(hi - lo for lo, hi in grid.extents)
    good = ctx.init.good_mask(grid)
    disp = max(float(np.max(np.abs(s.q - grid.mesh())[:, good])) for s in res.snapshots)
    ctx.add("displacement_rel", disp / width, "displacement_rel")
    first = None
    drift = 0.0
    for s in res.snapshots:
        e = to_eulerian(s, deformation_from_positions(s.q, grid), ctx.init.rho0, xgrid, grid)
        if first is None:
            first = e
            continue
        m = e.mask & first.mask
        drift = max(drift, float(np.max(np.abs(e.rho - first.rho)[m])))
    ctx.add("density_drift", drift, "density_drift")


def _charges(ctx: _Context) -> None:
    sc, res, grid, init = ctx.sc, ctx.result.run, ctx.grid, ctx.init
    names = sc.diagnostics["charges"]
    for name in names:
        series = schrodinger_charges(res.snapshots, init, grid, name)
        ctx.result.series[name] = series
        ctx.result.checks.append(Check(f"drift_{name}", series.drift,
                                       sc.tolerances.get(f"drift_{name}", ctx.tol("charge_drift"))))
    if "energy" in names:
        # oracle expectation of H for the initial wavefunction, on the finest grid available
        egrid = ctx.xgrid if ctx.xgrid is not None else grid
        psi0 = analytic_solution(sc.state, sc.state_params, egrid, 0.0, sc.hbar, sc.mass).field.psi
        ref = expectation_energy(psi0, egrid, sc.potential, 0.0, sc.hbar, sc.mass)
        ctx.result.metrics["energy_reference"] = ref
        ctx.add("energy_abs", abs(ctx.result.series["energy"].values[0] - ref), "energy_abs")
    if sc.diagnostics.get("cross_picture"):
        cn = ctx.cn()
        worst = {}
        for name in names:
            field_side = psi_side_charges(cn.psi, cn.times, ctx.xgrid, name, sc.potential,
                                          sc.hbar, sc.mass)
            params = charge_params(name, sc.dim)
            sign = -1.0 if name == "energy" else 1.0
            diffs = []
            for snap, val in zip(res.snapshots, field_side.values):
                P = noether_density(snap, init, grid, params)
                fluid_side = sign * to_eulerian_charge(P, None, snap, grid, ctx.xgrid).total()
                diffs.append(abs(fluid_side - val) / max(abs(val), field_side.scale))
            worst[name] = max(diffs)
            ctx.result.checks.append(Check(f"cross_picture_{name}", worst[name],
                                           ctx.tol("cross_picture_rel")))
        ctx.result.metrics["cross_picture"] = worst


def _reconstruction(ctx: _Context) -> None:
    cn = ctx.cn()
    final = ctx.result.run.final
    wave = reconstruct(final, ctx.init, ctx.grid, ctx.xgrid)
    cmp = compare_waves(wave.psi, cn.final, ctx.xgrid)
    ctx.result.metrics["reconstruction"] = {**cmp.to_dict(), "t": final.t,
                                            "norm": wave.extras["norm"]}
    ctx.add("fidelity", cmp.fidelity, "fidelity_min", lower=True)
    ctx.add("amplitude_l2", cmp.amplitude_l2, "amplitude_l2")


def _circulation(ctx: _Context) -> None:
    sc = ctx.sc
    loop = circle_loop((0.0, 0.0), ctx.sc.diagnostics["circulation_radius"],
                       int(sc.diagnostics.get("loop_points", 720)))
    series = circulation_series(ctx.result.run.snapshots, loop, ctx.grid, ctx.init)
    quantum = 2 * np.pi * sc.hbar / sc.mass
    winding = sc.diagnostics.get("winding", 1.0)
    ctx.result.series["circulation"] = series
    ctx.add("circulation_rel", float(np.max(np.abs(series.values / (winding * quantum) - 1))),
            "circulation_rel")
    ctx.add("circulation_drift", series.drift, "circulation_drift")


def _relabel(ctx: _Context) -> None:
    kind = ctx.sc.diagnostics["relabel"]
    grid, init, final = ctx.grid, ctx.init, ctx.result.run.final
    if kind == "families":
        fams = {
            "centred_bump": stream_flux(gaussian_stream(grid, (0.0, 0.0), 1.5), grid),
            "offset_bump": stream_flux(gaussian_stream(grid, (0.7, -0.4), 1.0), grid),
            "loop_kernel": stream_flux(annulus_stream(grid, (0.0, 0.0), 1.5), grid),
        }
        for name, flux in fams.items():
            series = relabel_charge(ctx.result.run.snapshots, init, grid, flux)
            ctx.result.series[f"relabel_{name}"] = series
            ctx.add(f"relabel_drift_{name}", series.drift, "relabel_drift")
        return
    lo, hi = grid.extents[0]
    n = int(ctx.sc.diagnostics.get("relabel_counts", 2 * grid.counts[0]))
    if kind == "uniform-density":
        remap = uniform_density_map(init.rho0, grid)
        margin = ctx.sc.diagnostics.get("relabel_margin", 0.01)
        new_grid = make_grid(1, (margin, 1 - margin), n)
    else:
        remap = warp_map_1d(0.3, 0.5)
        pad = 0.5
        new_grid = make_grid(1, (lo + pad, hi - pad), grid.counts[0])
    flow2, init2 = relabel(final, init, remap, grid, new_grid)
    xg = ctx.xgrid if ctx.xgrid is not None else grid
    e1 = to_eulerian(final, deformation_from_positions(final.q, grid), init.rho0, xg, grid)
    e2 = to_eulerian(flow2, deformation_from_positions(flow2.q, new_grid), init2.rho0, xg,
                     new_grid)
    m = e1.mask & e2.mask
    drho = float(np.max(np.abs(e1.rho - e2.rho)[m]))
    dv = float(np.max(np.abs(e1.v - e2.v)[:, m]))
    ctx.result.metrics["relabel"] = {"kind": kind, "rho_linf": drho, "v_linf": dv,
                                     "covered": int(m.sum())}
    ctx.add("relabel_rho", drho, "relabel_field")
    ctx.add("relabel_v", dv, "relabel_field")
    if kind == "uniform-density":
        ctx.add("relabel_rho0_uniform", float(np.max(np.abs(init2.rho0 - 1.0))), "relabel_rho0")


_INVARIANCE_PARAMS = {"dilation": "dilation", "extension": "extension",
                      "momentum": "momentum", "galilean": "galilean", "energy": "energy"}


def _invariance(ctx: _Context) -> None:
    sc, grid, init = ctx.sc, ctx.grid, ctx.init
    final = ctx.result.run.final
    eps = sc.diagnostics.get("epsilon", 1e-3)
    out = {}
    for name in sc.diagnostics["invariance"]:
        params = charge_params(_INVARIANCE_PARAMS[name], sc.dim)
        admissible = check_potential_admissibility(params, sc.potential, final.q,
                                                   times=(0.0, final.t)).passed
        r1 = apply_infinitesimal(final, init, grid, params, eps).residual
        r2 = apply_infinitesimal(final, init, grid, params, eps / 2).residual
        ratio = r1 / r2 if r2 > 0 else float("nan")
        expected = 4.0 if admissible else 2.0
        out[name] = {"residual_eps": r1, "residual_half": r2, "ratio": ratio,
                     "expected": expected}
        ctx.add(f"scaling_{name}", abs(ratio - expected) / expected, "scaling_band")
    ctx.result.metrics["invariance"] = out


def _superposition(ctx: _Context) -> None:
    sc, grid = ctx.sc, ctx.grid
    A = float(sc.state_params.get("sigma0", 1.0))
    delta = sc.diagnostics.get("superposition_delta", 1e-3) * A
    t_eval = sc.diagnostics.get("superposition_time", sc.integration.t_end)
    cfg = IntegrationConfig(t_end=t_eval, dt=ctx.result.run.dt,
                            force_form=sc.integration.force_form,
                            jfloor=sc.integration.jfloor,
                            filter_half_width=sc.integration.filter_half_width)
    inits = [sc.initial_data(grid, sigma0=s) for s in (A - delta, A, A + delta)]
    flows = [run(i, grid, cfg).final for i in inits]
    good = inits[1].good_mask(grid)
    rep = superposition_relabel(flows[0], flows[2], grid, delta, flows[1], mask=good)
    ctx.add("superposition_constraint", rep.constraint_residual, "superposition_constraint")
    # closed form for the Gaussian width: q - centre scales by |c(t, sigma0)|
    x0 = np.broadcast_to(np.asarray(sc.state_params.get("x0", 0.0), float), (sc.dim,))

    def factor(s):
        return abs(1 + 1j * sc.hbar * t_eval / (2 * sc.mass * s ** 2))

    h = 1e-6 * A
    dlog = (factor(A + h) - factor(A - h)) / (2 * h) / factor(A)
    xi_ref = -(grid.mesh() - x0.reshape((-1,) + (1,) * sc.dim)) * dlog
    core = mass_fraction_mask(inits[1].rho0, grid, 0.999)
    xi_err = float(np.max(np.abs(rep.xi - xi_ref)[:, core]))
    ctx.add("superposition_xi", xi_err, "superposition_xi")
    fields = parameter_derivative_fields(flows, inits, grid, ctx.xgrid, delta)
    plus, minus = ({**sc.state_params, "sigma0": s} for s in (A + delta, A - delta))
    ref = (analytic_solution(sc.state, plus, ctx.xgrid, t_eval, sc.hbar, sc.mass).field.rho
           - analytic_solution(sc.state, minus, ctx.xgrid, t_eval, sc.hbar, sc.mass).field.rho
           ) / (2 * delta)
    m = fields.mask
    rel = float(np.max(np.abs(fields.rho - ref)[m]) / np.max(np.abs(ref[m])))
    ctx.result.metrics["superposition"] = {"t": t_eval, "delta": delta,
                                           "constraint": rep.constraint_residual,
                                           "xi_error": xi_err, "derivative_rel": rel}
    ctx.add("superposition_derivative", rel, "superposition_derivative")


# -- persistence ------------------------------------------------------------------------

def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def write_series_csv(path: Path, series: ChargeSeries) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "value", "drift"])
        for t, v, dr in series.rows():
            writer.writerow([repr(t), repr(v), repr(dr)])


def write_array(path: Path, array: np.ndarray, meta: dict) -> None:
    """Raw little-endian float64 plus a JSON sidecar describing shape and meaning."""
    arr = np.ascontiguousarray(array, dtype="<f8")
    path.write_bytes(arr.tobytes())
    sidecar = {"dtype": "float64", "byteorder": "little", "shape": list(arr.shape), **meta}
    write_json(path.with_suffix(".json"), sidecar)


def read_array(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(meta["shape"])
    return data, meta


def write_outputs(result: ScenarioResult, outdir) -> Path:
    """Write snapshots, charge CSVs, the report and the pass/fail summary into ``outdir``."""
    outdir = Path(outdir)
    (outdir / "snapshots").mkdir(parents=True, exist_ok=True)
    (outdir / "charges").mkdir(exist_ok=True)
    if result.run is not None:
        for k, snap in enumerate(result.run.snapshots):
            for name, arr in (("q", snap.q), ("v", snap.v), ("S", snap.S)):
                write_array(outdir / "snapshots" / f"{name}_{k:04d}.f64", arr,
                            {"field": name, "t": snap.t, "index": k,
                             "grid": result.scenario.grid.to_dict()})
    for name, series in sorted(result.series.items()):
        write_series_csv(outdir / "charges" / f"{name}.csv", series)
    write_json(outdir / "report.json", result.report())
    write_json(outdir / "summary.json", result.summary())
    return outdir


__all__ = ["Check", "ScenarioResult", "DEFAULT_TOLERANCES", "execute", "write_outputs",
           "write_json", "write_series_csv", "write_array", "read_array", "mass_fraction_mask"]
