"""Experiment configuration files (YAML) with validation before any computation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .grid import Grid
from .initial_data import FAMILIES, InitialDataSpec
from .mild import SolverConfig

SCHEMA = """\
# Experiment configuration (YAML).  Keys not listed here are rejected.
name: tg_energy            # experiment name; prefixes every output file
seed: 0                    # unsigned 64-bit key of the Philox generator
output_dir: out            # overridden by --out
grid:
  n: 2                     # dimension, 2 or 3
  N: 64                    # points per axis, power of two >= 8
  L: 6.283185307179586     # box side; the box is [-L/2, L/2)^n
solver:
  dt: 1.0e-3               # time step
  T: 1.0                   # horizon, T >= dt
  dealias: true            # 2/3-rule dealiasing of the flux
  picard_tol: 1.0e-12      # relative Picard tolerance per step
  picard_max: 50           # Picard iteration cap
  lorentz_p: [4.0, .inf]   # p values for the L^{p,inf} columns of the norms CSV
  snapshots: []            # times at which to write field files (grid_core format)
  snapshot_format: bin     # bin | csv
initial_data:
  name: taylor_green       # taylor_green | random_solenoidal | radial_power | indicator | spike
  params: {amplitude: 1.0}
  # random_solenoidal: {band: 4, amplitude: 0.1}
  # radial_power: {exponent: -1.0, window: [0.1, 3.0]}
  # indicator: {shape: {kind: ball, radius: 1.0, center: [0, 0]}}
  # spike: {position: [0, 0], height: 1.0}
diagnostics:               # any subset, run in this order
  - energy: {tolerance: 1.0e-6}             # max |energy defect| / ||f||^2
  - cross-energy: {tolerance: 1.0e-10}      # u = v consistency with the energy report
  - prodi-serrin: {p: .inf}                 # p > n
  - weak-strong: {p: .inf, C: null, perturbation: 1.0e-3, band: 3}
  - norms: {pairs: [[2, 2], [3, 1], [3, .inf]]}
  - riesz: {eps: [0.25, 0.125, 0.0625, 0.03125]}   # truncation radii in units of L
  - cz: {alphas: [2.0, 4.0, 8.0]}           # thresholds in units of mean |f|
  - hardy: {p: [1.5, 2.0, 4.0], q: [1.0, 2.0, 3.5]}
"""

DIAGNOSTICS = ("energy", "cross-energy", "prodi-serrin", "weak-strong", "norms", "riesz", "cz", "hardy")
_TOP_KEYS = {"name", "seed", "output_dir", "grid", "solver", "initial_data", "diagnostics"}
_SOLVER_KEYS = {"dt", "T", "dealias", "picard_tol", "picard_max", "lorentz_p", "snapshots", "snapshot_format"}


class ConfigError(ValueError):
    """Malformed or invalid configuration; the message carries the line number when known."""


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    grid: Grid
    solver: SolverConfig | None
    initial_data: InitialDataSpec
    diagnostics: tuple[Diagnostic, ...] = ()
    output_dir: str = "out"
    seed: int = 0
    lorentz_p: tuple[float, ...] = (4.0, math.inf)
    snapshots: tuple[float, ...] = ()
    snapshot_format: str = "bin"

    def diagnostic(self, kind: str) -> Diagnostic | None:
        for d in self.diagnostics:
            if d.kind == kind:
                return d
        return None


def _construct(node, marks: dict, path: str):
    """Plain Python data from a YAML node, recording the line of every key path."""
    marks[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for knode, vnode in node.value:
            key = knode.value
            out[key] = _construct(vnode, marks, f"{path}.{key}" if path else key)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, marks, f"{path}[{i}]") for i, v in enumerate(node.value)]
    return yaml.constructor.SafeConstructor().construct_object(node, deep=True)


class _Validator:
    def __init__(self, marks: dict, source: str):
        self.marks = marks
        self.source = source

    def fail(self, path: str, message: str):
        line = self.marks.get(path)
        while line is None and "." in path:
            path = path.rsplit(".", 1)[0]
            line = self.marks.get(path)
        where = f"{self.source}:{line}: " if line else f"{self.source}: "
        raise ConfigError(f"{where}{path}: {message}")

    def number(self, data: dict, key: str, path: str, default=None, positive=False):
        if key not in data:
            if default is None:
                self.fail(path, f"missing required key '{key}'")
            return default
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"{path}.{key}", f"expected a number, got {value!r}")
        if positive and not value > 0:
            self.fail(f"{path}.{key}", f"must be positive, got {value}")
        return value

    def mapping(self, data, path: str) -> dict:
        if data is None:
            return {}
        if not isinstance(data, dict):
            self.fail(path, f"expected a mapping, got {type(data).__name__}")
        return data


def _p_value(v, validator: _Validator, path: str) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", ".inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        validator.fail(path, f"expected a number or inf, got {v!r}")
    return float(v)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}: " if mark is not None else f"{source}: "
        raise ConfigError(f"{where}YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if node is None:
        raise ConfigError(f"{source}: empty configuration")
    marks: dict = {}
    data = _construct(node, marks, "")
    v = _Validator(marks, source)
    if not isinstance(data, dict):
        v.fail("", "top level must be a mapping")
    for key in data:
        if key not in _TOP_KEYS:
            v.fail(key, f"unknown key (allowed: {', '.join(sorted(_TOP_KEYS))})")

    name = str(data.get("name", "experiment"))
    if not name or any(c in name for c in "/\\"):
        v.fail("name", "must be a non-empty name without path separators")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        v.fail("seed", f"must be an unsigned 64-bit integer, got {seed!r}")

    g = v.mapping(data.get("grid"), "grid")
    try:
        grid = Grid(int(v.number(g, "n", "grid", 2)), int(v.number(g, "N", "grid", 64)),
                    float(v.number(g, "L", "grid", 2 * math.pi)))
    except ConfigError:
        raise
    except ValueError as exc:
        v.fail("grid", str(exc))

    s = v.mapping(data.get("solver"), "solver")
    for key in s:
        if key not in _SOLVER_KEYS:
            v.fail(f"solver.{key}", f"unknown key (allowed: {', '.join(sorted(_SOLVER_KEYS))})")
    solver = None
    if s:
        try:
            solver = SolverConfig(
                dt=float(v.number(s, "dt", "solver")),
                T=float(v.number(s, "T", "solver")),
                dealias=bool(s.get("dealias", True)),
                picard_tol=float(v.number(s, "picard_tol", "solver", 1e-12)),
                picard_max=int(v.number(s, "picard_max", "solver", 50)),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            v.fail("solver", str(exc))
    lorentz_p = tuple(_p_value(p, v, f"solver.lorentz_p[{i}]") for i, p in enumerate(s.get("lorentz_p", [4.0, math.inf])))
    for i, p in enumerate(lorentz_p):
        if not p > 1:
            v.fail(f"solver.lorentz_p[{i}]", f"Lorentz exponent must exceed 1, got {p}")
    snapshots = tuple(float(t) for t in s.get("snapshots", []) or [])
    if solver is not None:
        for i, t in enumerate(snapshots):
            if not 0 <= t <= solver.T:
                v.fail(f"solver.snapshots[{i}]", f"snapshot time {t} outside [0, T]")
    snapshot_format = str(s.get("snapshot_format", "bin"))
    if snapshot_format not in ("bin", "csv"):
        v.fail("solver.snapshot_format", "must be bin or csv")

    idata = v.mapping(data.get("initial_data"), "initial_data")
    iname = idata.get("name", "taylor_green")
    if iname not in FAMILIES:
        v.fail("initial_data.name", f"unknown family {iname!r} (choose from {', '.join(FAMILIES)})")
    params = v.mapping(idata.get("params"), "initial_data.params")
    spec = InitialDataSpec(iname, dict(params))
    _validate_initial(spec, grid, v)

    diags = []
    raw = data.get("diagnostics", []) or []
    if not isinstance(raw, list):
        v.fail("diagnostics", "expected a list")
    for i, item in enumerate(raw):
        path = f"diagnostics[{i}]"
        if isinstance(item, str):
            kind, dparams = item, {}
        elif isinstance(item, dict) and len(item) == 1:
            kind, dparams = next(iter(item.items()))
            dparams = v.mapping(dparams, f"{path}.{kind}")
        else:
            v.fail(path, "each diagnostic is a name or a single-key mapping")
        if kind not in DIAGNOSTICS:
            v.fail(path, f"unknown diagnostic {kind!r} (choose from {', '.join(DIAGNOSTICS)})")
        diags.append(Diagnostic(kind, _validate_diagnostic(kind, dict(dparams), grid, solver, spec, v, f"{path}.{kind}")))

    return ExperimentConfig(
        name=name, grid=grid, solver=solver, initial_data=spec, diagnostics=tuple(diags),
        output_dir=str(data.get("output_dir", "out")), seed=int(seed), lorentz_p=lorentz_p,
        snapshots=snapshots, snapshot_format=snapshot_format,
    )


def _validate_initial(spec: InitialDataSpec, grid: Grid, v: _Validator):
    p = spec.params
    path = "initial_data.params"
    if spec.name == "random_solenoidal":
        band = p.get("band", 4)
        if not isinstance(band, int) or band < 1 or 3 * band >= grid.N:
            v.fail(f"{path}.band", f"band must be an integer in [1, N/3), got {band!r}")
        v.number(p, "amplitude", path, 0.1, positive=True)
    elif spec.name == "radial_power":
        v.number(p, "exponent", path)
        w = p.get("window")
        if not (isinstance(w, list) and len(w) == 2 and 0 < w[0] < w[1]):
            v.fail(f"{path}.window", f"expected [core, outer] with 0 < core < outer, got {w!r}")
        if w[1] > grid.L / 2:
            v.fail(f"{path}.window", f"outer radius {w[1]} exceeds the half box {grid.L / 2}")
    elif spec.name == "indicator":
        shape = p.get("shape", {"kind": "ball", "radius": grid.L / 4})
        if not isinstance(shape, dict) or shape.get("kind") not in ("ball", "cube"):
            v.fail(f"{path}.shape", "expected {kind: ball, radius: r} or {kind: cube, side: s}")
    elif spec.name == "spike":
        pos = p.get("position", [0.0] * grid.n)
        if not (isinstance(pos, list) and len(pos) == grid.n):
            v.fail(f"{path}.position", f"expected {grid.n} coordinates")
        if any(abs(c) > grid.L / 2 for c in pos):
            v.fail(f"{path}.position", "position lies outside the box")
    elif spec.name == "taylor_green":
        v.number(p, "amplitude", path, 1.0)


def _validate_diagnostic(kind, params, grid, solver, spec, v: _Validator, path) -> dict:
    needs_solver = kind in ("energy", "cross-energy", "prodi-serrin", "weak-strong")
    if needs_solver:
        if solver is None:
            v.fail(path, f"diagnostic '{kind}' needs a solver section")
        if not spec.solenoidal:
            v.fail(path, f"diagnostic '{kind}' needs solenoidal initial data, not {spec.name}")
    out = dict(params)
    if kind in ("energy", "cross-energy"):
        out["tolerance"] = float(v.number(params, "tolerance", path, 1e-6 if kind == "energy" else 1e-10, positive=True))
    if kind in ("prodi-serrin", "weak-strong"):
        p = _p_value(params.get("p", math.inf), v, f"{path}.p")
        if not p > grid.n:
            v.fail(f"{path}.p", f"the Prodi-Serrin class needs p > n = {grid.n}, got {p}")
        out["p"] = p
    if kind == "weak-strong":
        C = params.get("C")
        if C is not None:
            C = float(v.number(params, "C", path, positive=True))
        out["C"] = C
        out["perturbation"] = float(v.number(params, "perturbation", path, 1e-3, positive=True))
        band = params.get("band", 3)
        if not isinstance(band, int) or band < 1 or 3 * band >= grid.N:
            v.fail(f"{path}.band", f"band must be an integer in [1, N/3), got {band!r}")
        if grid.n != 2:
            v.fail(path, "weak-strong perturbations are implemented for n = 2")
        out["band"] = band
    if kind == "norms":
        pairs = params.get("pairs", [[2, 2]])
        checked = []
        for i, pq in enumerate(pairs):
            if not (isinstance(pq, list) and len(pq) == 2):
                v.fail(f"{path}.pairs[{i}]", "expected [p, q]")
            p = _p_value(pq[0], v, f"{path}.pairs[{i}]")
            q = _p_value(pq[1], v, f"{path}.pairs[{i}]")
            if not (1 < p < math.inf and 1 <= q):
                v.fail(f"{path}.pairs[{i}]", f"need 1 < p < inf and q >= 1, got ({p}, {q})")
            checked.append((p, q))
        out["pairs"] = checked
    if kind == "riesz":
        eps = [float(e) for e in params.get("eps", [0.25, 0.125, 0.0625, 0.03125])]
        if any(not 0 < e < 0.5 for e in eps):
            v.fail(f"{path}.eps", "truncation radii (units of L) must lie in (0, 1/2)")
        out["eps"] = eps
    if kind == "cz":
        alphas = [float(a) for a in params.get("alphas", [2.0, 4.0, 8.0])]
        if any(not a > 1 for a in alphas):
            v.fail(f"{path}.alphas", "thresholds (units of mean |f|) must exceed 1")
        out["alphas"] = alphas
    if kind == "hardy":
        ps = [float(p) for p in params.get("p", [1.5, 2.0, 4.0])]
        qs = [float(q) for q in params.get("q", [1.0, 2.0, 3.5])]
        if any(not 1 < p < math.inf for p in ps) or any(not q >= 1 for q in qs):
            v.fail(path, "Hardy check needs 1 < p < inf and q >= 1")
        out["p"], out["q"] = ps, qs
    return out


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from None
    return parse_config(text, str(path))
