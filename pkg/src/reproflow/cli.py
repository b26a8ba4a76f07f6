"""Command-line front end: configuration, orchestration, and artifacts.

One run = one YAML config + one output directory.  The config is
validated strictly (unknown keys are errors, reported with their full
path) and the effective config — defaults filled in — is written next
to the results, so a run directory is self-describing.  Every run ends
with an atomically written ``manifest.json`` listing the config hash,
code version, basis cache key, wall-clock, every output file, and the
aggregate pass/fail.

Exit codes: 0 all monitors passed; 1 a monitor failed or refused to
judge (out of regime); 2 usage or config error; 3 numerical failure
(blowup, solver breakdown, non-convergence).

Reproducibility contract: (config, seed, code version) determines every
CSV byte.  Wall-clock and absolute paths appear only in the manifest.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np
import yaml

from . import __version__
from .fields import Grid, divergence
from .galerkin import (
    BlowupDetected,
    ConfigError,
    GalerkinState,
    SolverConfig,
    assemble_tensors,
    momentum_residual_drop,
    recover_pressure,
    reconstruct,
    solve,
    validate_config,
)
from .lift import (
    InvalidBoundaryData,
    SolverFailure,
    boundary_profile,
    build_lift,
    compute_beta,
    load_boundary_table,
    verify_smallness,
)
from .reproductive import (
    NonConvergence,
    SmallnessBudget,
    find_reproductive,
    measure_contraction,
    validate_budget,
)
from .snapshots import save_scalar, save_vector
from .stokes import EigensolverError, _cache_path, compute_eigenbasis
from .verification import (
    RegimeViolation,
    check_energy_inequality,
    check_h1_bound,
    poincare_constant,
    rate_identity_residual,
    stability_experiment,
)

EXPERIMENTS = ("eigs", "lift", "solve", "verify", "stability", "reproductive")
CACHE_ENV = "REPROFLOW_CACHE"


class ConfigFileError(ValueError):
    """Config rejected; message lists every offending field with its path."""


# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

# (default, type) pairs; dicts nest.  None as default means "may be absent".
SCHEMA = {
    "experiment": (None, str),
    "out": ("runs/out", str),
    "seed": (0, int),
    "solver": {
        "nu": (1.0, float),
        "T": (1.0, float),
        "dt": (1e-3, float),
        "m": (32, int),
        "epsilon": (0.4, float),
        "grid_kind": ("square", str),
        "nx": (48, int),
        "tol_linear": (1e-10, float),
        "tol_fixed_point": (1e-10, float),
    },
    "boundary": {
        "profile": (None, str),
        "amplitude": (1.0, float),
        "table": (None, str),
    },
    "initial": {
        "kind": ("zero", str),
        "radius": (0.05, float),
    },
    "verify": {
        # slack rate calibrated on the standard fixture (tools/calibrate_regime.py)
        "kappa": (3.08268453e-3, float),
        "m_radius": (0.05, float),
    },
    "stability": {
        "perturbation": (1e-4, float),
    },
    "reproductive": {
        "tol": (1e-10, float),
        "max_iter": (None, int),
        "pairs": (5, int),
    },
    "budget": {
        "alpha": (0.05, float),
        "k_force": (1.5, float),
        "m_radius": (0.05, float),
    },
    "sweep": {
        "epsilons": ([0.4, 0.2, 0.1, 0.05], list),
        "samples": (100, int),
    },
}


def _walk_schema(data, schema, path, errors, out):
    for key, val in data.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            known = ", ".join(sorted(schema))
            errors.append(f"{here}: unknown key (expected one of: {known})")
            continue
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(val, dict):
                errors.append(f"{here}: expected a mapping")
                continue
            _walk_schema(val, spec, here, errors, out.setdefault(key, {}))
            continue
        default, typ = spec
        if val is None:
            out[key] = None
            continue
        if typ is float and isinstance(val, (int, float)) and not isinstance(val, bool):
            out[key] = float(val)
        elif typ is int and isinstance(val, int) and not isinstance(val, bool):
            out[key] = int(val)
        elif typ is list and isinstance(val, list):
            out[key] = list(val)
        elif typ is str and isinstance(val, str):
            out[key] = val
        else:
            errors.append(f"{here}: expected {typ.__name__}, got {type(val).__name__}")


def _fill_defaults(schema, out):
    for key, spec in schema.items():
        if isinstance(spec, dict):
            _fill_defaults(spec, out.setdefault(key, {}))
        elif key not in out:
            out[key] = spec[0]


@dataclasses.dataclass
class RunConfig:
    experiment: str
    out: str
    seed: int
    solver: SolverConfig
    raw: dict  # the full effective config (what the manifest hashes)

    def section(self, name):
        return self.raw[name]


def parse_config(path, out_override=None, seed_override=None):
    """Load, validate, and default-fill a YAML run config.

    Unknown keys anywhere in the tree are collected and reported with
    their dotted path; nothing is silently ignored.
    """
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigFileError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigFileError(f"config is not valid YAML: {exc}")
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigFileError("config root must be a mapping")

    errors, out = [], {}
    _walk_schema(data, SCHEMA, "", errors, out)
    if errors:
        raise ConfigFileError("invalid config:\n  " + "\n  ".join(errors))
    _fill_defaults(SCHEMA, out)

    if out_override is not None:
        out["out"] = out_override
    if seed_override is not None:
        out["seed"] = int(seed_override)

    if out["experiment"] not in EXPERIMENTS:
        raise ConfigFileError(
            f"experiment: must be one of {', '.join(EXPERIMENTS)}, "
            f"got {out['experiment']!r}")

    s = out["solver"]
    try:
        solver = validate_config(SolverConfig(
            nu=s["nu"], T=s["T"], dt=s["dt"], m=s["m"], epsilon=s["epsilon"],
            grid_kind=s["grid_kind"], nx=s["nx"], tol_linear=s["tol_linear"],
            tol_fixed_point=s["tol_fixed_point"]))
    except ConfigError as exc:
        raise ConfigFileError(f"solver: {exc}")

    b = out["boundary"]
    if b["profile"] is not None and b["table"] is not None:
        raise ConfigFileError("boundary: give profile or table, not both")
    if solver.grid_kind == "torus" and (b["profile"] or b["table"]):
        raise ConfigFileError("boundary: the torus has no walls to carry data")
    if out["experiment"] in ("lift", "reproductive") and not (b["profile"] or b["table"]):
        raise ConfigFileError(
            f"boundary: the {out['experiment']} experiment needs wall data "
            f"(set boundary.profile or boundary.table)")
    if out["initial"]["kind"] not in ("zero", "ball"):
        raise ConfigFileError(
            f"initial.kind: expected zero or ball, got {out['initial']['kind']!r}")

    return RunConfig(experiment=out["experiment"], out=out["out"],
                     seed=out["seed"], solver=solver, raw=out)


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def write_csv(path, header, rows):
    """Tidy CSV with %.17g floats; header-only when there are no rows."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _atomic_json(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


class RunContext:
    """Everything one experiment needs: config, outdir bookkeeping, cache."""

    def __init__(self, config, force_rebuild_basis=False):
        self.config = config
        self.outdir = config.out
        os.makedirs(self.outdir, exist_ok=True)
        self.cache_dir = os.environ.get(CACHE_ENV) or os.path.join(self.outdir, "cache")
        self.force_rebuild = force_rebuild_basis
        self.outputs = []
        self.grid = Grid(config.solver.grid_kind, config.solver.nx)

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.outdir, name)

    def basis(self):
        return compute_eigenbasis(self.grid, self.config.solver.m,
                                  cache_dir=self.cache_dir,
                                  force_rebuild=self.force_rebuild)

    def basis_cache_key(self):
        return os.path.basename(_cache_path(self.cache_dir, self.grid,
                                            self.config.solver.m))

    def boundary(self):
        b = self.config.section("boundary")
        if b["table"] is not None:
            return load_boundary_table(self.grid, b["table"])
        if b["profile"] is not None:
            return boundary_profile(self.grid, b["profile"], amplitude=b["amplitude"])
        return None

    def lift(self, boundary=None):
        boundary = self.boundary() if boundary is None else boundary
        if boundary is None:
            return None
        lift = build_lift(boundary, self.config.solver.epsilon, self.grid)
        compute_beta(lift)
        return lift

    def initial_state(self, basis, rng):
        ini = self.config.section("initial")
        m = self.config.solver.m
        if ini["kind"] == "ball":
            c = rng.standard_normal(m)
            vnorm = np.sqrt((c**2) @ basis.eigenvalues)
            c *= ini["radius"] / vnorm
            return GalerkinState(0.0, c)
        return GalerkinState(0.0, np.zeros(m))


def _energy_rows(traj):
    return [(t, a, b, c, d) for t, a, b, c, d in
            zip(traj.times, traj.l2sq, traj.h1sq, traj.h2sq, traj.f_l2sq)]


def _write_trajectory(ctx, traj):
    write_csv(ctx.path("energy.csv"),
              ["t", "l2sq", "h1sq", "h2sq", "f_l2sq"], _energy_rows(traj))
    m = traj.coeffs.shape[1]
    header = ["t"] + [f"c{j}" for j in range(m)]
    rows = [(t, *c) for t, c in zip(traj.times, traj.coeffs)]
    write_csv(ctx.path("coeffs.csv"), header, rows)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _run_eigs(ctx):
    basis = ctx.basis()
    write_csv(ctx.path("eigenvalues.csv"), ["j", "eigenvalue"],
              list(enumerate(basis.eigenvalues)))
    orth = basis.orthonormality_error()
    eigres = float(basis.eigen_residuals().max())
    passed = orth <= 1e-10 and eigres <= 1e-8
    return passed, {"orthonormality_error": orth, "max_eigen_residual": eigres,
                    "m": ctx.config.solver.m}


def _run_lift(ctx):
    sweep = ctx.config.section("sweep")
    boundary = ctx.boundary()
    rows = []
    betas, ratios = [], []
    for eps in sweep["epsilons"]:
        lift = build_lift(boundary, eps, ctx.grid)
        compute_beta(lift)
        ratio = verify_smallness(lift, samples=sweep["samples"],
                                 seed=ctx.config.seed)
        div_max = float(np.abs(divergence(lift.G_eps).values).max())
        rows.append((eps, lift.delta, lift.beta, ratio, div_max))
        betas.append(lift.beta)
        ratios.append(ratio)
        if eps == ctx.config.solver.epsilon:
            save_vector(ctx.path("lift_G.npz"), lift.G_eps)
    write_csv(ctx.path("beta_vs_eps.csv"),
              ["epsilon", "delta", "beta", "smallness_ratio", "div_max"], rows)
    strict = all(b1 > b2 for b1, b2 in zip(betas, betas[1:]))
    nonincr = all(r1 >= r2 for r1, r2 in zip(ratios, ratios[1:]))
    div_ok = all(r[4] <= 1e-13 for r in rows)
    return strict and nonincr and div_ok, {
        "betas": betas, "smallness_ratios": ratios,
        "beta_strictly_decreasing": strict,
        "ratio_non_increasing": nonincr, "div_max_ok": div_ok}


def _solve_common(ctx):
    cfg = ctx.config.solver
    basis = ctx.basis()
    lift = ctx.lift()
    tensors = assemble_tensors(basis, lift, nu=cfg.nu)
    rng = np.random.default_rng(ctx.config.seed)
    u0 = ctx.initial_state(basis, rng)
    traj = solve(cfg, u0, lift, basis, tensors=tensors)
    return basis, lift, tensors, u0, traj, rng


def _run_solve(ctx):
    cfg = ctx.config.solver
    basis, lift, tensors, u0, traj, _ = _solve_common(ctx)
    _write_trajectory(ctx, traj)
    recon = reconstruct(traj, basis, lift)
    save_vector(ctx.path("v_final.npz"), recon[-1], t=traj.times[-1])
    summary = {"steps": traj.n_steps, "l2sq_final": float(traj.l2sq[-1]),
               "h1sq_final": float(traj.h1sq[-1])}
    if lift is None:
        n = traj.n_steps
        pair = (traj.state(n - 1), traj.state(n))
        p = recover_pressure(pair, basis, lift, cfg.nu)
        save_scalar(ctx.path("pressure_final.npz"), p, t=traj.times[-1])
        summary["momentum_residual_drop"] = float(
            momentum_residual_drop(pair, basis, lift, cfg.nu))
    return True, summary


def _run_verify(ctx):
    cfg = ctx.config.solver
    vcfg = ctx.config.section("verify")
    basis, lift, tensors, u0, traj, _ = _solve_common(ctx)
    _write_trajectory(ctx, traj)

    beta = lift.beta if lift is not None else 0.0
    energy = check_energy_inequality(traj, cfg.nu, poincare_constant(basis),
                                     beta=beta, kappa=vcfg["kappa"])
    ball = check_h1_bound(traj, vcfg["m_radius"])
    rate = rate_identity_residual(traj, where="midpoint")

    rec = energy.records[0]
    rows = list(zip(range(1, len(rec.lhs) + 1), rec.lhs, rec.rhs, rec.violations))
    write_csv(ctx.path("violations.csv"), ["step", "lhs", "rhs", "violation"], rows)

    for line in energy.lines() + ball.lines():
        print(line)
    print(f"      rate identity residual (midpoint): {rate:.3e}")
    passed = energy.passed and ball.passed and rate <= 1e-9
    return passed, {
        "energy_max_violation": rec.max_violation,
        "energy_passed": energy.passed,
        "h1_sup": ball.regime["sup_vnorm"],
        "h1_passed": ball.passed,
        "rate_identity_residual": rate,
        "beta": beta,
        "kappa": vcfg["kappa"],
    }


def _run_stability(ctx):
    cfg = ctx.config.solver
    amp = ctx.config.section("stability")["perturbation"]
    basis = ctx.basis()
    lift = ctx.lift()
    tensors = assemble_tensors(basis, lift, nu=cfg.nu)
    rng = np.random.default_rng(ctx.config.seed)
    v0 = ctx.initial_state(basis, rng)
    z = rng.standard_normal(cfg.m)
    z *= amp / np.sqrt((z**2) @ basis.eigenvalues)
    w0 = GalerkinState(0.0, v0.c + z)
    rep = stability_experiment(cfg, v0, w0, lift, basis, tensors=tensors,
                               m_radius=ctx.config.section("verify")["m_radius"])
    rows = list(zip(rep.times, rep.z_norms, rep.envelope,
                    np.divide(rep.z_norms, rep.envelope,
                              out=np.zeros_like(rep.z_norms),
                              where=rep.envelope > 0)))
    write_csv(ctx.path("z_norms.csv"), ["t", "z_vnorm", "envelope", "ratio"], rows)
    passed = rep.passed(0.05)
    return passed, {"max_ratio": rep.max_ratio, "monotone": rep.monotone,
                    "z0": float(rep.z_norms[0]), "zT": float(rep.z_norms[-1])}


def _run_reproductive(ctx):
    cfg = ctx.config.solver
    rcfg = ctx.config.section("reproductive")
    bcfg = ctx.config.section("budget")
    basis = ctx.basis()
    boundary = ctx.boundary()
    lift = ctx.lift(boundary)
    tensors = assemble_tensors(basis, lift, nu=cfg.nu)

    budget = validate_budget(boundary, lift, cfg.nu, budget=SmallnessBudget(
        alpha=bcfg["alpha"], k_force=bcfg["k_force"], m_radius=bcfg["m_radius"]))
    for line in budget.lines():
        print(line)
    if not budget.satisfied:
        raise RegimeViolation("data exceeds the smallness budget; "
                              "the fixed-point claims are out of regime")

    report = find_reproductive(cfg, lift, basis, tol=rcfg["tol"],
                               max_iter=rcfg["max_iter"], tensors=tensors,
                               m_radius=budget.m_radius)
    ratios = report.ratios
    rows = [(k, r, ratios[k - 1] if 1 <= k <= len(ratios) else "")
            for k, r in enumerate(report.residuals)]
    write_csv(ctx.path("residuals.csv"), ["iteration", "residual", "ratio"], rows)
    save_vector(ctx.path("v0_reproductive.npz"), report.v0)

    contraction = measure_contraction(cfg, lift, basis, pairs=rcfg["pairs"],
                                      seed=ctx.config.seed, budget=budget,
                                      tensors=tensors)
    write_csv(ctx.path("contraction.csv"), ["pair", "ratio", "envelope"],
              [(i, r, contraction.envelope)
               for i, r in enumerate(contraction.ratios)])

    env = contraction.envelope
    geometric = all(r <= env * 1.1 for r in ratios)
    passed = (report.converged and geometric and contraction.passed(0.1))
    print(f"converged in {report.n_iterations} iterations; "
          f"residuals {['%.3e' % r for r in report.residuals]}")
    print(f"contraction max ratio {contraction.max_ratio:.3e} vs envelope {env:.6f}")
    return passed, {
        "converged": report.converged,
        "iterations": report.n_iterations,
        "residuals": report.residuals,
        "l2_closure": report.l2_closure,
        "contraction_max_ratio": contraction.max_ratio,
        "envelope": env,
    }


RUNNERS = {
    "eigs": _run_eigs,
    "lift": _run_lift,
    "solve": _run_solve,
    "verify": _run_verify,
    "stability": _run_stability,
    "reproductive": _run_reproductive,
}


# ---------------------------------------------------------------------------
# manifest + entry point
# ---------------------------------------------------------------------------


def _config_hash(effective):
    blob = json.dumps(effective, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run(config, force_rebuild_basis=False):
    """Execute one experiment; returns (exit_code, manifest_dict)."""
    ctx = RunContext(config, force_rebuild_basis=force_rebuild_basis)
    eff_path = ctx.path("effective_config.json")
    _atomic_json(eff_path, config.raw)

    manifest = {
        "experiment": config.experiment,
        "config_hash": _config_hash(config.raw),
        "code_version": __version__,
        "basis_cache_key": ctx.basis_cache_key(),
        "seed": config.seed,
    }
    started = time.monotonic()
    code = 0
    try:
        passed, summary = RUNNERS[config.experiment](ctx)
        manifest["summary"] = summary
        manifest["passed"] = bool(passed)
        if not passed:
            code = 1
    except RegimeViolation as exc:
        manifest["passed"] = False
        manifest["regime_violation"] = str(exc)
        print(f"out of regime: {exc}", file=sys.stderr)
        code = 1
    except (BlowupDetected, SolverFailure, EigensolverError, NonConvergence) as exc:
        manifest["passed"] = False
        manifest["numerical_failure"] = f"{type(exc).__name__}: {exc}"
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = 3
    manifest["wall_clock_s"] = round(time.monotonic() - started, 3)
    manifest["outputs"] = ctx.outputs + ["manifest.json"]
    _atomic_json(os.path.join(ctx.outdir, "manifest.json"), manifest)
    print(f"{'pass' if manifest['passed'] else 'FAIL'}  manifest: "
          f"{os.path.join(ctx.outdir, 'manifest.json')}")
    return code, manifest


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="reproflow",
        description="wall-driven incompressible flow: spectral solver, "
                    "estimate monitors, reproductive data")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="YAML run config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed (overrides config)")
        p.add_argument("--force-rebuild-basis", action="store_true",
                       help="ignore any cached eigenbasis")
        if name == "reproductive":
            p.add_argument("--tol", type=float, default=None,
                           help="fixed-point tolerance (overrides config)")
            p.add_argument("--max-iter", type=int, default=None,
                           help="iteration cap (overrides config)")
            p.add_argument("--pairs", type=int, default=None,
                           help="contraction sample pairs (overrides config)")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        config = parse_config(args.config, out_override=args.out,
                              seed_override=args.seed)
        if config.experiment != args.command:
            raise ConfigFileError(
                f"config names experiment {config.experiment!r} but the "
                f"subcommand is {args.command!r}")
        if args.command == "reproductive":
            for key in ("tol", "max_iter", "pairs"):
                val = getattr(args, key)
                if val is not None:
                    config.raw["reproductive"][key] = val
    except (ConfigFileError, InvalidBoundaryData) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        code, _ = run(config, force_rebuild_basis=args.force_rebuild_basis)
    except (ConfigFileError, ConfigError, InvalidBoundaryData) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
