"""Smoke-test the coefficient-space solver end to end.

Checks, in order:
  1. tensor invariants on the torus (B antisymmetry, cubic null sum)
  2. Taylor-Green decay at the acceptance operating point
  3. spectral pressure recovery vs the analytic TG pressure
  4. momentum residual drop after removing grad p
  5. energy identity of the rhs in coefficient space (square + lift)
  6. dt-bound rejection
  7. second-order self-convergence of the stepper on a nonlinear run
  8. square bump-datum mini-solve sanity
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from reproflow.fields import (  # noqa: E402
    Grid, VectorField, divergence, inner_h1, inner_l2, norm_l2,
)
from reproflow.galerkin import (  # noqa: E402
    ConfigError, GalerkinState, SolverConfig, assemble_tensors,
    check_dt_bound, explicit_dt_bound, momentum_residual_drop,
    project_initial, recover_pressure, reconstruct, rhs, solve,
)
from reproflow.lift import BoundaryData, boundary_profile, build_lift  # noqa: E402
from reproflow.stokes import compute_eigenbasis  # noqa: E402

rng = np.random.default_rng(7)
failures = []


def check(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    if not ok:
        failures.append(name)


# -- 1. tensors on the torus ------------------------------------------------
grid_t = Grid("torus", 64)
basis_t = compute_eigenbasis(grid_t, 8)
t0 = time.time()
tens_t = assemble_tensors(basis_t, None)
t_assemble = time.time() - t0
asym = np.abs(tens_t.B + tens_t.B.transpose(0, 2, 1)).max()
scale = max(np.abs(tens_t.B).max(), 1.0)
check("B antisymmetric in (l,j)", asym <= 1e-12 * scale,
      f"max {asym:.3e} (assembled in {t_assemble:.2f}s)")

worst = 0.0
for _ in range(100):
    c = rng.standard_normal(8)
    worst = max(worst, abs(np.einsum("ilj,i,l,j->", tens_t.B, c, c, c)))
check("cubic null sum", worst <= 1e-12 * max(scale, 1.0), f"max {worst:.3e}")

# -- 2. Taylor-Green decay --------------------------------------------------
nu, dt, T = 0.1, 1e-3, 1.0
xu, yu = grid_t.uface_coords()
xv, yv = grid_t.vface_coords()
tg0 = VectorField(grid_t, np.sin(xu) * np.cos(yu), -np.cos(xv) * np.sin(yv))

state0, perr = project_initial(tg0, None, basis_t)
check("TG projection error", perr <= 1e-10, f"V-norm resid {perr:.3e}")

cfg = SolverConfig(nu=nu, T=T, dt=dt, m=8, grid_kind="torus", nx=64)
bound = explicit_dt_bound(tens_t, state0.c)
print(f"      dt bound at TG amplitude: {bound:.4e} (dt = {dt})")
t0 = time.time()
traj = solve(cfg, state0, None, basis_t, tensors=tens_t)
t_solve = time.time() - t0
recon = reconstruct(traj, basis_t, None)
vT = recon[-1]
ratio = norm_l2(vT) / norm_l2(recon[0])
want = np.exp(-2.0 * nu * T)
rel = abs(ratio - want) / want
check("TG decay 1e-4", rel <= 1e-4, f"rel err {rel:.3e}, solve {t_solve:.2f}s")

# quadratic term size on the TG coefficient vector
qt = np.einsum("ilj,i,l->j", tens_t.B, state0.c, state0.c)
print(f"      |B c c| on TG coeffs: {np.abs(qt).max():.3e}")

# -- 3. pressure ------------------------------------------------------------
n = traj.n_steps
pair = (traj.state(n - 1), traj.state(n))
p = recover_pressure(pair, basis_t, None, nu)
tmid = traj.times[n] - 0.5 * dt
xc, yc = grid_t.center_coords()
p_true = 0.25 * (np.cos(2 * xc) + np.cos(2 * yc)) * np.exp(-4.0 * nu * tmid)
p_true -= p_true.mean()
num = np.sqrt(((p.values - p_true) ** 2).sum())
den = np.sqrt((p_true**2).sum())
check("TG pressure 1e-3", num / den <= 1e-3, f"rel err {num / den:.3e}")

# -- 4. residual drop --------------------------------------------------------
drop = momentum_residual_drop(pair, basis_t, None, nu)
check("residual drop >= 100x", drop >= 100.0, f"drop {drop:.1f}x")

# -- 5. energy identity on the square with a lift ----------------------------
grid_s = Grid("square", 32)
basis_s = compute_eigenbasis(grid_s, 6)
bdata = boundary_profile(grid_s, "bottom_bump", amplitude=0.05)
lift_s = build_lift(bdata, 0.4, grid_s)
tens_s = assemble_tensors(basis_s, lift_s, nu=1.0)

worst = 0.0
for _ in range(20):
    c = 0.1 * rng.standard_normal(6)
    st = GalerkinState(0.0, c)
    cdot = rhs(st, tens_s, 1.0)
    lhs = c @ cdot
    # expected: -nu * ||u||^2 - c D c + F . c   (B and E terms vanish)
    rhs_expect = -1.0 * (tens_s.lam * c * c).sum() - c @ tens_s.D @ c + tens_s.F @ c
    worst = max(worst, abs(lhs - rhs_expect))
check("energy identity", worst <= 1e-12, f"max dev {worst:.3e}")

e_asym = np.abs(tens_s.E + tens_s.E.T).max()
check("E antisymmetric", e_asym <= 1e-12, f"max {e_asym:.3e}")

# -- 6. dt-bound rejection ----------------------------------------------------
big = SolverConfig(nu=nu, T=1.0, dt=0.5, m=8, grid_kind="torus", nx=64)
try:
    check_dt_bound(big, tens_t, 10.0 * np.ones(8))
    check("dt bound rejects", False, "no error raised")
except ConfigError as exc:
    check("dt bound rejects", True, str(exc)[:60])

# -- 7. stepper self-convergence ---------------------------------------------
c0 = np.zeros(8)
c0[0], c0[4], c0[6] = 0.9, 0.5, -0.3
errs = []
ref_cfg = SolverConfig(nu=0.2, T=0.25, dt=0.25 / 2048, m=8, grid_kind="torus", nx=64)
ref = solve(ref_cfg, GalerkinState(0.0, c0.copy()), None, basis_t,
            tensors=tens_t).coeffs[-1]
for steps in (32, 64, 128):
    c = SolverConfig(nu=0.2, T=0.25, dt=0.25 / steps, m=8, grid_kind="torus", nx=64)
    out = solve(c, GalerkinState(0.0, c0.copy()), None, basis_t,
                tensors=tens_t).coeffs[-1]
    errs.append(np.linalg.norm(out - ref))
r1 = errs[0] / errs[1]
r2 = errs[1] / errs[2]
check("stepper order 2", 3.4 <= r1 <= 4.6 and 3.4 <= r2 <= 4.6,
      f"ratios {r1:.2f}, {r2:.2f} (errs {errs[0]:.2e} {errs[1]:.2e} {errs[2]:.2e})")

# linear-only exactness: zero the quadratic/coupling parts
tens_lin = assemble_tensors(basis_t, None)
tens_lin.B = np.zeros_like(tens_lin.B)
lin_cfg = SolverConfig(nu=0.3, T=0.5, dt=0.05, m=8, grid_kind="torus", nx=64)
lin = solve(lin_cfg, GalerkinState(0.0, c0.copy()), None, basis_t, tensors=tens_lin)
exact = c0 * np.exp(-0.3 * tens_lin.lam * 0.5)
lin_err = np.abs(lin.coeffs[-1] - exact).max()
check("linear-only exact", lin_err <= 1e-13, f"max dev {lin_err:.3e}")

# -- 8. square bump mini-solve -------------------------------------------------
u0s, perr_s = project_initial(lift_s.G_eps, lift_s, basis_s)
print(f"      square projection of G against lift: |c0| = "
      f"{np.linalg.norm(u0s.c):.3e} (should be ~0), V-err {perr_s:.3e}")
bound_s = explicit_dt_bound(tens_s, u0s.c)
dts = min(1e-3, 0.5 * bound_s)
steps = max(int(round(0.05 / dts)), 1)
cfg_s = SolverConfig(nu=1.0, T=steps * dts, dt=dts, m=6, grid_kind="square", nx=32)
traj_s = solve(cfg_s, u0s, lift_s, basis_s, tensors=tens_s)
fin = np.all(np.isfinite(traj_s.coeffs))
print(f"      square run: dt {dts:.2e}, {steps} steps, |c(T)| "
      f"{np.linalg.norm(traj_s.coeffs[-1]):.3e}, |u|^2 {traj_s.l2sq[-1]:.3e}")
check("square bump solve finite", fin, "")

# reconstruction divergence stays zero
vs = reconstruct(traj_s, basis_s, lift_s)[-1]
dv = np.abs(divergence(vs).values).max()
check("reconstructed div-free", dv <= 1e-12, f"max div {dv:.3e}")

print()
print(f"{'ALL GREEN' if not failures else 'FAILURES: ' + ', '.join(failures)}")
sys.exit(1 if failures else 0)
