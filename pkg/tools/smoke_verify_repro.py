"""Smoke-test the monitors and the period-map machinery at small scale."""

import sys
import warnings

import numpy as np

sys.path.insert(0, "src")

from reproflow.fields import Grid  # noqa: E402
from reproflow.galerkin import (  # noqa: E402
    GalerkinState, SolverConfig, assemble_tensors, project_initial, solve,
)
from reproflow.lift import boundary_profile, build_lift  # noqa: E402
from reproflow.reproductive import (  # noqa: E402
    SmallnessBudget, boundary_norm_proxy, find_reproductive, map_L,
    measure_contraction, validate_budget,
)
from reproflow.stokes import compute_eigenbasis  # noqa: E402
from reproflow.verification import (  # noqa: E402
    RegimeViolation, calibrate_slack, check_energy_inequality, check_h1_bound,
    poincare_constant, rate_identity_residual, stability_experiment,
    uniqueness_probe,
)

failures = []


def check(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    if not ok:
        failures.append(name)


# shared fixtures ------------------------------------------------------------
grid_t = Grid("torus", 64)
basis_t = compute_eigenbasis(grid_t, 8)
tens_t = assemble_tensors(basis_t, None)

grid_s = Grid("square", 32)
basis_s = compute_eigenbasis(grid_s, 6)
bdata = boundary_profile(grid_s, "bottom_bump", amplitude=1e-2)
lift_s = build_lift(bdata, 0.4, grid_s)
tens_s = assemble_tensors(basis_s, lift_s, nu=1.0)
lam1_s = float(basis_s.eigenvalues[0])
print(f"      square lam1 = {lam1_s:.6f}, C(Omega) = {poincare_constant(basis_s):.6f}")
print(f"      lift beta = {lift_s.beta if lift_s.beta else 'unset'}")

# -- energy monitor on TG (f = 0) ---------------------------------------------
nu = 0.1
xu, yu = grid_t.uface_coords()
xv, yv = grid_t.vface_coords()
from reproflow.fields import VectorField  # noqa: E402
tg0 = VectorField(grid_t, np.sin(xu) * np.cos(yu), -np.cos(xv) * np.sin(yv))
st0, _ = project_initial(tg0, None, basis_t)
cfg_t = SolverConfig(nu=nu, T=1.0, dt=1e-3, m=8, grid_kind="torus", nx=64)
traj_tg = solve(cfg_t, st0, None, basis_t, tensors=tens_t)
rep = check_energy_inequality(traj_tg, nu, poincare_constant(basis_t), beta=0.0)
check("TG energy inequality", rep.passed,
      f"max violation {rep.records[0].max_violation:+.3e}")

# -- zero-data suite: literally zero violations -------------------------------
z0 = GalerkinState(0.0, np.zeros(8))
traj_z = solve(cfg_t, z0, None, basis_t, tensors=tens_t)
rep = check_energy_inequality(traj_z, nu, poincare_constant(basis_t), beta=0.0)
viol = rep.records[0].violations
check("zero-data zero violations", rep.passed and np.all(viol == 0.0),
      f"max {viol.max():+.3e}")

# -- regime gate ---------------------------------------------------------------
try:
    check_energy_inequality(traj_tg, nu, poincare_constant(basis_t), beta=nu)
    check("beta gate raises", False, "no exception")
except RegimeViolation as exc:
    check("beta gate raises", True, str(exc)[:60])

# -- rate identity -------------------------------------------------------------
mid = rate_identity_residual(traj_tg, where="midpoint")
left = rate_identity_residual(traj_tg, where="left")
check("rate identity exact at midpoint", mid <= 1e-10 and left > 10 * max(mid, 1e-300),
      f"midpoint {mid:.3e}, left {left:.3e}")

# -- H1 ball -------------------------------------------------------------------
sup = float(np.sqrt(traj_tg.h1sq.max()))
rep = check_h1_bound(traj_tg, 2.0 * sup)
check("h1 ball pass", rep.passed, f"sup {sup:.3e} vs M {2*sup:.3e}")
rep = check_h1_bound(traj_tg, 0.5 * sup)
check("h1 ball regime-exit recorded", (not rep.passed)
      and rep.regime["initial_in_ball"] is False, f"flags {rep.regime}")

# -- slack calibration ----------------------------------------------------------
u0s, _ = project_initial(lift_s.G_eps, lift_s, basis_s)
cfg_s = SolverConfig(nu=1.0, T=0.2, dt=1e-3, m=6, grid_kind="square", nx=32)
kappa = calibrate_slack(cfg_s, u0s, lift_s, basis_s)
print(f"      calibrated kappa (square bump) = {kappa:.6e}")
traj_s = solve(cfg_s, u0s, lift_s, basis_s, tensors=tens_s)
rep = check_energy_inequality(traj_s, 1.0, poincare_constant(basis_s),
                              beta=lift_s.beta, kappa=kappa)
check("square bump energy", rep.passed,
      f"max violation {rep.records[0].max_violation:+.3e}")

# -- stability ------------------------------------------------------------------
rng = np.random.default_rng(3)
pert = rng.standard_normal(6)
pert *= 1e-4 / np.sqrt((pert**2) @ basis_s.eigenvalues)
w0 = GalerkinState(0.0, u0s.c + pert)
srep = stability_experiment(cfg_s, u0s, w0, lift_s, basis_s, tensors=tens_s)
check("stability ratio <= 1.05", srep.max_ratio <= 1.05,
      f"max ratio {srep.max_ratio:.6f}")
check("stability monotone", srep.monotone,
      f"z from {srep.z_norms[0]:.3e} to {srep.z_norms[-1]:.3e}")

same = stability_experiment(cfg_s, u0s, GalerkinState(0.0, u0s.c.copy()),
                            lift_s, basis_s, tensors=tens_s)
check("identical states ratio 0", same.max_ratio == 0.0, "")

# -- uniqueness probe -------------------------------------------------------------
check("uniqueness probe", uniqueness_probe(cfg_s, u0s, lift_s, basis_s), "")

# perturbed-u0 conditioning
u0p = GalerkinState(0.0, u0s.c + 1e-12 * rng.standard_normal(6))
ta = solve(cfg_s, u0s, lift_s, basis_s, tensors=tens_s)
tb = solve(cfg_s, u0p, lift_s, basis_s, tensors=tens_s)
dfin = float(np.linalg.norm(ta.coeffs[-1] - tb.coeffs[-1]))
check("1e-12 perturbation stays <= 1e-9", dfin <= 1e-9, f"final diff {dfin:.3e}")

# -- map_L linear oracle ------------------------------------------------------------
a = 1e-6
e1 = np.zeros(6)
e1[0] = a
cfg_lin = SolverConfig(nu=1.0, T=1.0, dt=1e-3, m=6, grid_kind="square", nx=32)
tens_0 = assemble_tensors(basis_s, None)
img = map_L(GalerkinState(0.0, e1), cfg_lin, None, basis_s, tensors=tens_0)
pred = e1 * np.exp(-1.0 * basis_s.eigenvalues[0] * 1.0)
rel = np.linalg.norm(img.c - pred) / np.linalg.norm(pred)
check("map_L linear decay oracle", rel <= 1e-8, f"rel dev {rel:.3e}")

# zero fixed point
img0 = map_L(GalerkinState(0.0, np.zeros(6)), cfg_lin, None, basis_s, tensors=tens_0)
check("L(0) = 0 for zero data", np.all(img0.c == 0.0), "")

# -- BallExit warning ----------------------------------------------------------------
with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    map_L(GalerkinState(0.0, e1), cfg_lin, None, basis_s, tensors=tens_0,
          m_radius=1e-12)
    names = [type(w.message).__name__ for w in caught]
check("BallExit warning", "BallExit" in names, f"warnings {names}")

# -- budget ---------------------------------------------------------------------------
budget = validate_budget(bdata, lift_s, 1.0)
print(f"      g-norm proxy {budget.g_norm:.6e}, f-norm {budget.f_norm:.6e}, "
      f"beta {budget.beta:.6e}")
check("budget satisfied at amplitude 1e-2", budget.satisfied,
      "; ".join(budget.lines()))

# -- contraction ----------------------------------------------------------------------
crep = measure_contraction(cfg_s, lift_s, basis_s, pairs=3, seed=1,
                           budget=budget, tensors=tens_s)
env = np.exp(-cfg_s.nu * cfg_s.T)
check("contraction below envelope", crep.max_ratio <= env * 1.1,
      f"max ratio {crep.max_ratio:.3e} vs envelope {env:.3f}")

bad = SmallnessBudget(alpha=1e-9, k_force=1e-9, m_radius=1.0,
                      g_norm=budget.g_norm, f_norm=budget.f_norm, beta=budget.beta)
try:
    measure_contraction(cfg_s, lift_s, basis_s, pairs=1, seed=1, budget=bad)
    check("contraction regime gate", False, "no exception")
except RegimeViolation:
    check("contraction regime gate", True, "")

# -- reproductive ------------------------------------------------------------------------
cfg_r = SolverConfig(nu=1.0, T=1.0, dt=1e-3, m=6, grid_kind="square", nx=32)
frep = find_reproductive(cfg_r, lift_s, basis_s, tol=1e-10, tensors=tens_s)
print(f"      residuals: {['%.3e' % r for r in frep.residuals]}")
check("reproductive converged", frep.converged,
      f"{frep.n_iterations} iterations")
check("reproductive closure", frep.l2_closure <= 1e-9,
      f"|v(T)-v(0)|_L2 = {frep.l2_closure:.3e}")
ok_ratio = all(r <= np.exp(-1.0) * 1.1 for r in frep.ratios)
check("geometric ratios", ok_ratio, f"ratios {['%.3e' % r for r in frep.ratios]}")

# fresh re-verify + start independence
img = map_L(frep.state, cfg_r, lift_s, basis_s, tensors=tens_s)
rv = float(np.sqrt(((img.c - frep.state.c) ** 2 @ basis_s.eigenvalues)))
check("fixed point re-verifies", rv <= 1e-10, f"fresh residual {rv:.3e}")

start2 = GalerkinState(0.0, 1e-3 * rng.standard_normal(6))
frep2 = find_reproductive(cfg_r, lift_s, basis_s, u0_init=start2, tol=1e-10,
                          tensors=tens_s)
dd = float(np.sqrt(((frep2.state.c - frep.state.c) ** 2 @ basis_s.eigenvalues)))
check("start independence", dd <= 2e-10, f"datum diff {dd:.3e}")

# zero data: converges immediately to zero
frep0 = find_reproductive(cfg_lin, None, basis_s, tol=1e-10, tensors=tens_0)
check("zero data fixed point is zero",
      frep0.converged and np.all(frep0.state.c == 0.0)
      and frep0.n_iterations == 1, f"residuals {frep0.residuals}")

print()
print(f"{'ALL GREEN' if not failures else 'FAILURES: ' + ', '.join(failures)}")
sys.exit(1 if failures else 0)
