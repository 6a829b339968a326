"""Scenario files: parsing, validation and construction of the numerical objects they describe."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .charges import CHARGES
from .errors import ConfigurationError, InadmissibleError
from .forces import PotentialSpec
from .integrator import InitialData, IntegrationConfig
from .lattice import MIN_COUNT, LabelGrid, integrate, make_grid
from .oracle import ANALYTIC_KINDS, analytic_solution
from .symmetry import charge_params, check_potential_admissibility


INVARIANCE_KINDS = ("dilation", "extension", "momentum", "galilean", "energy")
RELABEL_KINDS = ("uniform-density", "warp", "families")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigurationError(f"expected numbers, got {text!r}") from exc


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("yes", "true", "on", "1"):
        return True
    if low in ("no", "false", "off", "0"):
        return False
    raise ConfigurationError(f"expected yes/no, got {text!r}")


@dataclass
class GridSpec:
    lo: tuple
    hi: tuple
    counts: tuple

    def build(self, dim: int) -> LabelGrid:
        def fit(vals, name):
            if len(vals) == 1:
                vals = vals * dim
            if len(vals) != dim:
                raise ConfigurationError(f"grid {name} needs 1 or {dim} values")
            return vals
        lo, hi = fit(self.lo, "lo"), fit(self.hi, "hi")
        counts = tuple(int(c) for c in fit(self.counts, "counts"))
        if any(c < MIN_COUNT for c in counts):
            raise ConfigurationError(f"grid counts must be at least {MIN_COUNT}, got {counts}")
        return make_grid(dim, tuple(zip(lo, hi)), counts)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "counts": [int(c) for c in self.counts]}


@dataclass
class Scenario:
    """Everything one run needs; all physical parameters are explicit."""

    name: str
    description: str
    exercises: str
    dim: int
    state: str
    state_params: dict
    potential: PotentialSpec
    hbar: float
    mass: float
    grid: GridSpec
    integration: IntegrationConfig
    fluid: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    source: str = ""

    # -- construction -------------------------------------------------------------------

    def label_grid(self) -> LabelGrid:
        return self.grid.build(self.dim)

    def position_grid(self) -> LabelGrid | None:
        spec = self.oracle.get("grid")
        return spec.build(self.dim) if spec is not None else None

    def initial_data(self, grid: LabelGrid | None = None, **overrides) -> InitialData:
        """Initial density and phase from the closed-form state at ``t = 0``.

        ``overrides`` replace state parameters (used for parameter derivatives).
        """
        grid = grid or self.label_grid()
        params = {**self.state_params, **overrides}
        sol = analytic_solution(self.state, params, grid, 0.0, self.hbar, self.mass)
        rho0 = sol.field.rho / integrate(sol.field.rho, grid, warn=False)
        kw = dict(potential=self.potential, hbar=self.hbar, mass=self.mass,
                  rel_floor=self.fluid.get("rel_floor", 1e-8),
                  tail_floor=self.fluid.get("tail_floor"))
        if self.state == "vortex-2d":
            return InitialData(rho0, v0=sol.field.v, core_center=(0.0, 0.0),
                               core_radius=self.fluid.get("core_radius", 3 * max(grid.spacing)),
                               **kw)
        p = np.broadcast_to(np.asarray(params.get("p", 0.0), float), (self.dim,))
        S0 = np.einsum("i,i...->...", p, grid.mesh())
        return InitialData(rho0, S0=S0, **kw)

    # -- validation ---------------------------------------------------------------------

    def validate(self) -> None:
        """Check the configuration before any computation; raises ``ConfigurationError``
        or ``InadmissibleError``."""
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.state not in ANALYTIC_KINDS:
            raise ConfigurationError(f"unknown state {self.state!r}; choose from {ANALYTIC_KINDS}")
        if self.state == "vortex-2d" and self.dim != 2:
            raise ConfigurationError("vortex-2d needs dim = 2")
        if self.hbar <= 0 or self.mass <= 0:
            raise ConfigurationError("hbar and mass must be positive")
        grid = self.label_grid()
        if self.dim == 3 and self.diagnostics:
            raise ConfigurationError("diagnostics are supported in 1D and 2D")
        xgrid = self.position_grid()
        init = self.initial_data(grid)
        init.validate(grid)
        d = self.diagnostics
        points = grid.mesh()
        for name in d.get("charges", ()):
            if name not in CHARGES:
                raise ConfigurationError(f"unknown charge {name!r}; choose from {CHARGES}")
            params = charge_params(name, self.dim)
            check_potential_admissibility(params, self.potential, points).raise_if_failed()
        for name in d.get("invariance", ()):
            if name not in INVARIANCE_KINDS:
                raise ConfigurationError(f"unknown invariance test {name!r}")
        if d.get("cross_picture") and xgrid is None:
            raise ConfigurationError("cross-picture charges need an [oracle] grid")
        if d.get("reconstruction") and xgrid is None:
            raise ConfigurationError("reconstruction needs an [oracle] grid")
        if d.get("reconstruction") and self.state == "vortex-2d":
            raise ConfigurationError("the vortex phase is multivalued; reconstruct density only")
        if "circulation_radius" in d:
            if self.dim != 2:
                raise ConfigurationError("circulation loops need dim = 2")
            radius = d["circulation_radius"]
            if radius < 6 * max(grid.spacing):
                raise ConfigurationError("circulation loop radius must be at least 6 label spacings")
        relabel_kind = d.get("relabel")
        if relabel_kind is not None:
            if relabel_kind not in RELABEL_KINDS:
                raise ConfigurationError(f"unknown relabel test {relabel_kind!r}")
            if relabel_kind in ("uniform-density", "warp") and self.dim != 1:
                raise ConfigurationError(f"{relabel_kind} relabelling is 1D")
            if relabel_kind == "families" and self.dim != 2:
                raise ConfigurationError("relabelling families are 2D")
        if d.get("superposition"):
            if self.state != "free-gaussian":
                raise ConfigurationError("superposition test is defined for the free Gaussian width")
            if xgrid is None:
                raise ConfigurationError("superposition test needs an [oracle] grid")

    # -- serialisation ------------------------------------------------------------------

    def to_dict(self) -> dict:
        cfg = self.integration
        out = {
            "name": self.name, "description": self.description, "exercises": self.exercises,
            "dim": self.dim, "state": {"kind": self.state, **_plain(self.state_params)},
            "potential": self.potential.to_dict(), "hbar": self.hbar, "mass": self.mass,
            "grid": self.grid.to_dict(),
            "integration": {"t_end": cfg.t_end, "dt": cfg.dt, "cfl": cfg.cfl,
                            "snapshots": cfg.snapshots, "force_form": cfg.force_form,
                            "jfloor": cfg.jfloor, "filter_half_width": cfg.filter_half_width},
            "fluid": _plain(self.fluid),
            "oracle": {k: (v.to_dict() if isinstance(v, GridSpec) else v)
                       for k, v in self.oracle.items()},
            "diagnostics": _plain(self.diagnostics),
            "tolerances": _plain(self.tolerances),
        }
        return out


def _plain(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def _state_params(section) -> dict:
    params = {}
    for key, text in section.items():
        if key == "kind":
            continue
        vals = _floats(text)
        params[key] = vals[0] if len(vals) == 1 else vals
    return params


def _potential(section, mass: float) -> PotentialSpec:
    kind = section.get("kind", "free")
    params = {"mass": mass} if kind == "harmonic" else {}
    for key, text in section.items():
        if key in ("kind", "time_coeffs"):
            continue
        vals = _floats(text)
        params[key] = vals[0] if len(vals) == 1 else list(vals)
    coeffs = _floats(section.get("time_coeffs", "1"))
    return PotentialSpec(kind, params, coeffs)


def _grid(section) -> GridSpec:
    for key in ("lo", "hi", "counts"):
        if key not in section:
            raise ConfigurationError(f"grid section needs {key!r}")
    return GridSpec(_floats(section["lo"]), _floats(section["hi"]), _floats(section["counts"]))


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Build a scenario from INI text; structural problems raise ``ConfigurationError``."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {source}: {exc}") from exc
    for sec in ("scenario", "state", "grid", "integration"):
        if not cp.has_section(sec):
            raise ConfigurationError(f"{source}: missing [{sec}] section")
    try:
        sc = cp["scenario"]
        integ = cp["integration"]
        config = IntegrationConfig(
            t_end=float(integ.get("t_end", "0")),
            dt=float(integ["dt"]) if "dt" in integ else None,
            cfl=float(integ.get("cfl", "0.2")),
            snapshots=int(integ.get("snapshots", "1")),
            force_form=integ.get("force_form", "weber"),
            jfloor=float(integ.get("jfloor", "1e-3")),
            filter_half_width=int(integ.get("filter_half_width", "4")))
        physics = cp["physics"] if cp.has_section("physics") else {}
        mass = float(physics.get("mass", "1"))
        fluid = {k: float(v) for k, v in (cp["fluid"].items() if cp.has_section("fluid") else [])}
        oracle = {}
        if cp.has_section("oracle"):
            osec = cp["oracle"]
            oracle["grid"] = _grid(osec)
            oracle["dt"] = float(osec.get("dt", "1e-3"))
        diagnostics = {}
        if cp.has_section("diagnostics"):
            ds = cp["diagnostics"]
            for key, text in ds.items():
                if key in ("charges", "invariance"):
                    diagnostics[key] = _names(text)
                elif key in ("reconstruction", "cross_picture", "superposition", "trajectory",
                             "stationarity"):
                    diagnostics[key] = _bool(text)
                elif key == "relabel":
                    diagnostics[key] = text.strip()
                else:
                    diagnostics[key] = float(text)
        tolerances = ({k: float(v) for k, v in cp["tolerances"].items()}
                      if cp.has_section("tolerances") else {})
        scenario = Scenario(
            name=sc.get("name", Path(source).stem),
            description=sc.get("description", "").strip(),
            exercises=sc.get("exercises", "").strip(),
            dim=int(sc.get("dim", "1")),
            state=cp["state"].get("kind", ""),
            state_params=_state_params(cp["state"]),
            potential=(_potential(cp["potential"], mass) if cp.has_section("potential")
                       else PotentialSpec()),
            hbar=float(physics.get("hbar", "1")),
            mass=mass,
            grid=_grid(cp["grid"]),
            integration=config, fluid=fluid, oracle=oracle, diagnostics=diagnostics,
            tolerances=tolerances, source=source)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"{source}: {exc}") from exc
    return scenario


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"no such scenario file: {path}")
    return parse_scenario(path.read_text(), str(path))


def bundled_names() -> list[str]:
    root = resources.files("qhydro") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def bundled_scenario(name: str) -> Scenario:
    root = resources.files("qhydro") / "scenarios"
    entry = root / f"{name}.ini"
    if not entry.is_file():
        raise ConfigurationError(f"unknown scenario {name!r}; known: {', '.join(bundled_names())}")
    return parse_scenario(entry.read_text(), f"{name}.ini")


def resolve(target: str) -> Scenario:
    """A path to an INI file, or the name of a bundled scenario."""
    if Path(target).is_file():
        return load_scenario(target)
    return bundled_scenario(target)


__all__ = ["Scenario", "GridSpec", "parse_scenario", "load_scenario", "bundled_names",
           "bundled_scenario", "resolve", "InadmissibleError"]
