"""Command-line entry point: ``lorentz-ns <subcommand> [--config PATH] [--out DIR] [--seed U64] [--parallel]``.

Every subcommand writes CSV tables and one ``summary.json`` into the output
directory.  The summary lists each asserted invariant with its measured value,
threshold and pass flag; the exit code is 2 when any of them fails, 1 on a
configuration or input error and 0 otherwise.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import lorentz
from .config import SCHEMA, ConfigError, Diagnostic, ExperimentConfig, load_config, parse_config
from .grid import Field, ScalarField, VectorField, band_limit, inner_product, l2_norm
from .initial_data import make_initial_data, make_rng
from .io import read_field, read_trajectory, write_field, write_table, write_trajectory
from .mild import Trajectory, solve_mild
from .singular import cz_decompose, riesz, truncated_riesz, weak11_constant


@dataclass
class Invariant:
    name: str
    value: float
    threshold: float
    relation: str  # "<=" or ">="

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.relation == "<=" else self.value >= self.threshold

    def as_dict(self) -> dict:
        return {"name": self.name, "value": float(self.value), "threshold": float(self.threshold),
                "relation": self.relation, "pass": self.passed}


@dataclass
class Outcome:
    invariants: list[Invariant] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    empirical: dict = field(default_factory=dict)

    def merge(self, other: "Outcome"):
        self.invariants.extend(other.invariants)
        self.outputs.extend(other.outputs)
        self.empirical.update(other.empirical)


class _Context:
    """Lazily computed shared inputs of one run."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self._field = None
        self._traj = None

    def path(self, suffix: str) -> Path:
        return self.out / f"{self.cfg.name}_{suffix}"

    @property
    def field(self) -> Field:
        if self._field is None:
            self._field = make_initial_data(self.cfg.initial_data, self.cfg.grid, self.cfg.seed)
        return self._field

    @property
    def trajectory(self) -> Trajectory:
        if self._traj is None:
            f = self.field
            if not isinstance(f, VectorField):
                raise ConfigError(f"solving needs vector initial data, got {self.cfg.initial_data.name}")
            self._traj = solve_mild(f, self.cfg.solver)
        return self._traj


def _scalar(f: Field) -> ScalarField:
    """Scalar field for the scalar-only diagnostics: the first component of a vector field."""
    if isinstance(f, ScalarField):
        return f
    return ScalarField(f.grid, f.values.reshape((-1,) + f.grid.shape)[0])


# ------------------------------------------------------------------ diagnostics


def diag_norms(ctx: _Context, params: dict, f: Field | None = None) -> Outcome:
    f = ctx.field if f is None else f
    r = lorentz.rearrangement(f)
    rows, worst = [], math.inf
    for p, q in params.get("pairs", [(2.0, 2.0)]):
        qn, nm = r.quasinorm(p, q), r.norm(p, q)
        pp = p / (p - 1)
        rows.append((p, q, qn, nm, pp * qn))
        scale = max(abs(nm), 1e-300)
        worst = min(worst, (nm - qn) / scale, (pp * qn - nm) / scale)
    out = Outcome()
    out.outputs.append(str(write_table(ctx.path("norms.csv"), ["p", "q", "quasinorm", "norm", "pprime_quasinorm"], rows)))
    out.invariants.append(Invariant("lorentz_sandwich_margin", worst, -1e-10, ">="))
    return out


def diag_riesz(ctx: _Context, params: dict) -> Outcome:
    f = band_limit(_scalar(ctx.field), remove_mean=True)
    grid = f.grid
    out = Outcome()
    R = [riesz(f, j) for j in range(grid.n)]
    square = sum(riesz(Rj, j).values for j, Rj in enumerate(R))
    scale = max(float(np.max(np.abs(f.values))), 1e-300)
    out.invariants.append(Invariant("riesz_square_identity", float(np.max(np.abs(square + f.values))) / scale, 1e-10, "<="))
    g = band_limit(ScalarField(grid, np.roll(f.values, 3, axis=0) ** 2), remove_mean=True)
    skew = abs(inner_product(R[0], g) + inner_product(f, riesz(g, 0)))
    size = l2_norm(f) * l2_norm(g) or 1.0
    out.invariants.append(Invariant("riesz_skew_adjointness", skew / size, 1e-10, "<="))
    rows = []
    ref = R[0].values
    for e in params.get("eps", [0.25, 0.125, 0.0625, 0.03125]):
        err = l2_norm(ScalarField(grid, truncated_riesz(f, 0, e * grid.L).values - ref)) / max(l2_norm(R[0]), 1e-300)
        rows.append((e * grid.L, err))
    out.outputs.append(str(write_table(ctx.path("riesz.csv"), ["eps", "relative_l2_error"], rows)))
    errs = [r[1] for r in rows]
    out.empirical["riesz_truncation_monotone"] = bool(all(b < a for a, b in zip(errs, errs[1:])))
    if np.any(f.values != 0):
        out.empirical["riesz_weak11_ratio"] = weak11_constant(f)[0]
    return out


def diag_cz(ctx: _Context, params: dict) -> Outcome:
    f = _scalar(ctx.field)
    grid = f.grid
    mean_abs = float(np.mean(np.abs(f.values)))
    out = Outcome()
    rows = []
    worst = {"outside": -math.inf, "lower": -math.inf, "upper": -math.inf, "measure": -math.inf}
    zero_mean, recon = 0.0, 0.0
    scale = max(float(np.max(np.abs(f.values))), 1e-300)
    for a in params.get("alphas", [2.0, 4.0, 8.0]):
        alpha = a * mean_abs
        d = cz_decompose(f, alpha)
        chk = d.check()
        for k in worst:
            worst[k] = max(worst[k], chk[k] / (scale if k != "measure" else grid.volume))
        zero_mean = max(zero_mean, chk["zero_mean"] / scale)
        recon = max(recon, d.reconstruction_error() / scale)
        l1 = grid.cell_volume * float(np.sum(np.abs(f.values)))
        rows.append((alpha, len(d.cubes), d.total_measure(), l1 / alpha, d.dilated_cover_measure()))
    out.outputs.append(str(write_table(ctx.path("cz.csv"), ["alpha", "cubes", "measure", "l1_over_alpha", "dilated_measure"], rows)))
    out.invariants += [
        Invariant("cz_outside_bound", worst["outside"], 1e-12, "<="),
        Invariant("cz_average_lower", worst["lower"], 1e-12, "<="),
        Invariant("cz_average_upper", worst["upper"], 1e-12, "<="),
        Invariant("cz_measure_bound", worst["measure"], 1e-12, "<="),
        Invariant("cz_bad_zero_mean", zero_mean, 1e-12, "<="),
        Invariant("cz_reconstruction", recon, 1e-12, "<="),
    ]
    return out


def diag_hardy(ctx: _Context, params: dict) -> Outcome:
    rows, worst = [], math.inf
    for name, phi in lorentz.hardy_family(ctx.cfg.seed).items():
        for p in params.get("p", [1.5, 2.0, 4.0]):
            for q in params.get("q", [1.0, 2.0, 3.5]):
                r = lorentz.hardy_check(phi, p, q)
                d1, d2 = r.defects
                worst = min(worst, d1, d2)
                rows.append((name, p, q, r.lhs_lower, r.rhs_lower, r.lhs_upper, r.rhs_upper, d1, d2))
    out = Outcome()
    header = ["phi", "p", "q", "lhs_lower", "rhs_lower", "lhs_upper", "rhs_upper", "defect_lower", "defect_upper"]
    out.outputs.append(str(write_table(ctx.path("hardy.csv"), header, rows)))
    out.invariants.append(Invariant("hardy_min_defect", worst, -1e-10, ">="))
    return out


def diag_solve(ctx: _Context) -> Outcome:
    traj = ctx.trajectory
    cfg = ctx.cfg
    out = Outcome()
    out.outputs.append(str(write_trajectory(ctx.path("trajectory.npz"), traj)))
    cols = [traj.times, traj.l2_norms() ** 2, traj.gradient_l2_norms() ** 2]
    header = ["t", "energy", "enstrophy"]
    for p in cfg.lorentz_p:
        cols.append(traj.weak_lorentz_norms(p))
        header.append("lorentz_inf" if math.isinf(p) else f"lorentz_{p:g}_inf")
    out.outputs.append(str(write_table(ctx.path("norms_t.csv"), header, zip(*cols))))
    for t in cfg.snapshots:
        i = int(np.argmin(np.abs(traj.times - t)))
        out.outputs.append(str(write_field(ctx.path(f"u_t{traj.times[i]:.6f}.{cfg.snapshot_format}"), traj.state(i))))
    out.invariants.append(Invariant("divergence_ratio", traj.divergence_ratio(), 1e-8, "<="))
    return out


def diag_energy(ctx: _Context, params: dict) -> Outcome:
    traj = ctx.trajectory
    rep = dg.energy_report(traj)
    out = Outcome()
    out.outputs.append(str(write_table(ctx.path("energy.csv"), ["t", "energy", "dissipation", "defect"],
                                       zip(rep.times, rep.energy, rep.dissipation, rep.defect))))
    out.invariants.append(Invariant("energy_equality_defect", rep.max_relative_defect(), params.get("tolerance", 1e-6), "<="))
    ok, _ = dg.energy_inequality_check(traj, rtol=params.get("tolerance", 1e-6))
    out.invariants.append(Invariant("energy_inequality_violations", float(np.count_nonzero(~ok)), 0.0, "<="))
    return out


def diag_cross_energy(ctx: _Context, params: dict) -> Outcome:
    traj = ctx.trajectory
    rep = dg.energy_report(traj)
    cross = dg.cross_energy_defect(traj, traj)
    out = Outcome()
    out.outputs.append(str(write_table(ctx.path("cross_energy.csv"), ["t", "cross_defect", "energy_defect"],
                                       zip(traj.times, cross, rep.defect))))
    gap = float(np.max(np.abs(cross - rep.defect))) / max(rep.initial_energy, 1e-300)
    out.invariants.append(Invariant("cross_energy_consistency", gap, params.get("tolerance", 1e-10), "<="))
    return out


def diag_prodi_serrin(ctx: _Context, params: dict) -> Outcome:
    traj = ctx.trajectory
    p = params.get("p", math.inf)
    A = dg.prodi_serrin_norm(traj, p)
    out = Outcome()
    out.outputs.append(str(write_table(ctx.path("prodi_serrin.csv"), ["t", "lorentz_norm", "accumulator"],
                                       zip(traj.times, traj.weak_lorentz_norms(p), A))))
    out.invariants.append(Invariant("accumulator_min_increment", float(np.min(np.diff(A))) if A.size > 1 else 0.0, 0.0, ">="))
    out.empirical["prodi_serrin_total"] = float(A[-1])
    return out


def diag_weak_strong(ctx: _Context, params: dict, u: Trajectory | None = None, v: Trajectory | None = None) -> Outcome:
    out = Outcome()
    p = params.get("p", math.inf)
    if u is None or v is None:
        u = ctx.trajectory
        delta, rate = dg.growth_optimal_perturbation(u.initial, params.get("band", 3), params.get("perturbation", 1e-3))
        v = solve_mild(u.initial + delta, ctx.cfg.solver)
        out.empirical["perturbation_growth_rate"] = rate
    gap0 = float(dg.gap_series(u, v)[0])
    if gap0 > 0:
        C_emp = dg.calibrate_constant(u, v, p)
        C = params.get("C") or max(C_emp, 1e-12)
        atol = 0.0
    else:
        # identical data: the bound is zero and the gap is held to the solver tolerance
        C_emp = None
        C = params.get("C") or 1.0
        atol = (1e-5 * float(u.l2_norms()[0])) ** 2
    rep = dg.gronwall_bound(u, v, p, C, atol=atol)
    out.outputs.append(str(write_table(ctx.path("weak_strong.csv"), ["t", "gap", "accumulator", "bound", "ok"],
                                       zip(rep.times, rep.gap, rep.accumulator, rep.bound, rep.ok))))
    out.empirical.update({"gronwall_C_empirical": C_emp, "gronwall_C_used": C, "p": p})
    out.invariants.append(Invariant("gronwall_violations", float(np.count_nonzero(~rep.ok)), 0.0, "<="))
    return out


_DIAGS = {
    "norms": diag_norms, "riesz": diag_riesz, "cz": diag_cz, "hardy": diag_hardy,
    "energy": diag_energy, "cross-energy": diag_cross_energy,
    "prodi-serrin": diag_prodi_serrin, "weak-strong": diag_weak_strong,
}


def _write_summary(out_dir: Path, command: str, cfg: ExperimentConfig, outcome: Outcome) -> dict:
    summary = {
        "experiment": cfg.name,
        "command": command,
        "seed": cfg.seed,
        "grid": {"n": cfg.grid.n, "N": cfg.grid.N, "L": cfg.grid.L},
        "invariants": [inv.as_dict() for inv in outcome.invariants],
        "empirical": outcome.empirical,
        "outputs": sorted(Path(p).name for p in outcome.outputs),
        "pass": all(inv.passed for inv in outcome.invariants),
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(_finite(summary), fh, indent=2, sort_keys=True, default=_json_default, allow_nan=False)
        fh.write("\n")
    return summary


def _finite(obj):
    """Strict JSON: non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def run(cfg: ExperimentConfig, out_dir=None, parallel: bool = False, command: str = "run",
        kinds: tuple[str, ...] | None = None) -> dict:
    """Run the configured diagnostics (or ``kinds``) and write CSV files plus ``summary.json``.

    Diagnostics run in configuration order; with ``parallel`` the independent
    ones run in threads, and results are merged in the same order so the
    outputs are identical.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(cfg, out)
    selected = [d for d in cfg.diagnostics if kinds is None or d.kind in kinds]
    outcome = Outcome()
    if cfg.solver is not None and (command in ("run", "solve") or any(d.kind in ("energy", "cross-energy", "prodi-serrin", "weak-strong") for d in selected)):
        if cfg.initial_data.solenoidal:
            outcome.merge(diag_solve(ctx))
    tasks = [(d.kind, d.params) for d in selected]
    if parallel and len(tasks) > 1:
        _ = ctx.field
        if any(k in ("energy", "cross-energy", "prodi-serrin", "weak-strong") for k, _p in tasks):
            _ = ctx.trajectory
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(lambda kp: _DIAGS[kp[0]](ctx, kp[1]), tasks))
    else:
        results = [_DIAGS[k](ctx, p) for k, p in tasks]
    for r in results:
        outcome.merge(r)
    return _write_summary(out, command, cfg, outcome)


# ------------------------------------------------------------------ argument handling


def _default_config(command: str) -> ExperimentConfig:
    """Configuration used when a subcommand runs without ``--config``."""
    base = {
        "norms": "initial_data: {name: radial_power, params: {exponent: -0.5, window: [0.05, 3.0]}}\ndiagnostics: [norms: {pairs: [[1.5, 1], [2, 2], [3, 1], [3, .inf], [7, 2]]}]\n",
        "riesz-check": "initial_data: {name: random_solenoidal, params: {band: 3, amplitude: 1.0}}\ndiagnostics: [riesz]\n",
        "cz": "initial_data: {name: radial_power, params: {exponent: -1.0, window: [0.05, 3.0]}}\ndiagnostics: [cz]\n",
        "hardy": "diagnostics: [hardy]\n",
        "solve": "solver: {dt: 1.0e-3, T: 1.0}\n",
        "energy": "solver: {dt: 1.0e-3, T: 1.0}\ndiagnostics: [energy, cross-energy]\n",
        "weak-strong": "initial_data: {name: taylor_green, params: {amplitude: 8.0}}\nsolver: {dt: 1.0e-3, T: 1.0}\ndiagnostics: [weak-strong: {p: .inf}]\n",
    }[command]
    return parse_config(f"name: {command.replace('-', '_')}\n" + base, f"<default {command}>")


_COMMAND_KINDS = {
    "norms": ("norms",), "riesz-check": ("riesz",), "cz": ("cz",), "hardy": ("hardy",), "solve": (),
    "energy": ("energy", "cross-energy"), "weak-strong": ("weak-strong",),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lorentz-ns", description="Lorentz-space Navier-Stokes diagnostics")
    parser.add_argument("--print-schema", action="store_true", help="print the documented configuration schema and exit")
    sub = parser.add_subparsers(dest="command")

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", type=Path, help="YAML experiment configuration")
        sp.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
        sp.add_argument("--seed", type=int, help="override the configured seed (unsigned 64-bit)")
        sp.add_argument("--parallel", action="store_true", help="run independent diagnostics concurrently")
        return sp

    sp = common(sub.add_parser("norms", help="Lorentz quasinorms and norms of a field"))
    sp.add_argument("--field", type=Path, help="field file (.bin or .csv) instead of configured initial data")
    sp.add_argument("--pairs", help="semicolon-separated p,q pairs, e.g. '2,2;3,inf'")
    common(sub.add_parser("riesz-check", help="Riesz identities and truncated-kernel sweep"))
    common(sub.add_parser("cz", help="Calderon-Zygmund decompositions over thresholds"))
    common(sub.add_parser("hardy", help="Hardy inequalities over the documented step-function family"))
    common(sub.add_parser("solve", help="solve the mild formulation and write norms over time"))
    sp = common(sub.add_parser("energy", help="energy equality and cross-energy defects"))
    sp.add_argument("--trajectory", type=Path, help="trajectory file (.npz) instead of solving")
    sp = common(sub.add_parser("weak-strong", help="Gronwall weak-strong comparison"))
    sp.add_argument("--u", type=Path, help="trajectory file of the strong solution")
    sp.add_argument("--v", type=Path, help="trajectory file of the compared solution")
    sp.add_argument("--p", type=float, help="Prodi-Serrin exponent (default: config or inf)")
    sp.add_argument("--C", type=float, help="Gronwall constant (default: calibrated)")
    sp = common(sub.add_parser("run", help="run every diagnostic of a configuration"))
    sub.add_parser("print-schema", help="print the documented configuration schema")
    return parser


def _parse_pairs(text: str) -> list[tuple[float, float]]:
    pairs = []
    for chunk in text.split(";"):
        p, q = (float(x) for x in chunk.split(","))
        if not (1 < p < math.inf and q >= 1):
            raise ConfigError(f"invalid Lorentz pair ({p}, {q})")
        pairs.append((p, q))
    return pairs


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.print_schema or args.command == "print-schema":
        sys.stdout.write(SCHEMA)
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        if getattr(args, "config", None) is not None:
            cfg = load_config(args.config)
        elif args.command == "run":
            raise ConfigError("run needs --config")
        else:
            cfg = _default_config(args.command)
        if args.seed is not None:
            make_rng(args.seed)  # validates the range
            cfg = replace(cfg, seed=int(args.seed))
        out = Path(args.out if args.out is not None else cfg.output_dir)
        summary = _dispatch(args, cfg, out)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for inv in summary["invariants"]:
        flag = "PASS" if inv["pass"] else "FAIL"
        print(f"{flag} {inv['name']}: {inv['value']:.3e} {inv['relation']} {inv['threshold']:.1e}")
    return 0 if summary["pass"] else 2


def _dispatch(args, cfg: ExperimentConfig, out: Path) -> dict:
    cmd = args.command
    if cmd == "run":
        return run(cfg, out, args.parallel, "run")
    kinds = _COMMAND_KINDS[cmd]
    present = {d.kind for d in cfg.diagnostics}
    extra = tuple(Diagnostic(k) for k in kinds if k not in present)
    if cmd == "weak-strong" and extra:
        extra = (Diagnostic("weak-strong", {"p": math.inf, "C": None, "perturbation": 1e-3, "band": 3}),)
    cfg = replace(cfg, diagnostics=cfg.diagnostics + extra)

    if cmd == "norms" and (args.field is not None or args.pairs):
        out.mkdir(parents=True, exist_ok=True)
        ctx = _Context(cfg, out)
        params = dict(cfg.diagnostic("norms").params)
        if args.pairs:
            params["pairs"] = _parse_pairs(args.pairs)
        f = read_field(args.field) if args.field is not None else None
        return _write_summary(out, cmd, cfg, diag_norms(ctx, params, f))
    if cmd == "energy" and args.trajectory is not None:
        out.mkdir(parents=True, exist_ok=True)
        ctx = _Context(cfg, out)
        ctx._traj = read_trajectory(args.trajectory)
        outcome = Outcome()
        outcome.merge(diag_energy(ctx, {"tolerance": 1e-6}))
        outcome.merge(diag_cross_energy(ctx, {"tolerance": 1e-10}))
        return _write_summary(out, cmd, cfg, outcome)
    if cmd == "weak-strong" and (args.u is not None or args.v is not None or args.p is not None or args.C is not None):
        params = dict(cfg.diagnostic("weak-strong").params)
        if args.p is not None:
            if not args.p > cfg.grid.n:
                raise ConfigError(f"the Prodi-Serrin class needs p > n = {cfg.grid.n}, got {args.p}")
            params["p"] = args.p
        if args.C is not None:
            if not args.C > 0:
                raise ConfigError("C must be positive")
            params["C"] = args.C
        out.mkdir(parents=True, exist_ok=True)
        if (args.u is None) != (args.v is None):
            raise ConfigError("--u and --v must be given together")
        if args.u is not None:
            u, v = read_trajectory(args.u), read_trajectory(args.v)
            cfg = replace(cfg, grid=u.grid)
            ctx = _Context(cfg, out)
            return _write_summary(out, cmd, cfg, diag_weak_strong(ctx, params, u, v))
        cfg = replace(cfg, diagnostics=tuple(Diagnostic("weak-strong", params) if d.kind == "weak-strong" else d
                                             for d in cfg.diagnostics))
    return run(cfg, out, args.parallel, cmd, kinds)


if __name__ == "__main__":
    sys.exit(main())
